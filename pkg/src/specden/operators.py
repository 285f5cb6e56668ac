"""Matrix-free symmetric operators, optionally with stochastic entries.

Everything downstream touches a matrix only through products ``A @ x``.  An
operator here is a dimension, a matvec, and a flag saying whether repeated
calls return fresh random realizations of the matrix.  The mean of a
stochastic operator's draws is the matrix whose spectrum we care about.

Two contracts matter for correctness elsewhere in the package:

* Linearity per draw.  A single realization is an honest matrix, so for a
  fixed generator state ``matvec(a*x + b*y) == a*matvec(x) + b*matvec(y)``.
  Noise is injected by perturbing matrix entries, never the output vector.
* Deterministic generator consumption.  Each stochastic matvec consumes the
  generator in a fixed pattern (one normal draw of fixed shape), so a single
  realization can be replayed against many vectors by cloning generator
  state.  :meth:`ImplicitOperator.apply_block` relies on this.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

__all__ = [
    "NoiseModel",
    "ImplicitOperator",
    "DenseOperator",
    "SparseOperator",
    "FunctionOperator",
    "with_noise",
    "estimate_operator_norm",
    "rescale",
    "affine",
    "materialize_draw",
]


@dataclass(frozen=True)
class NoiseModel:
    """Per-entry Gaussian noise applied to a base matrix at every matvec.

    Parameters
    ----------
    kind : {'none', 'additive_nonzero', 'multiplicative'}
        ``additive_nonzero`` adds independent N(0, variance) to every
        structurally nonzero entry.  ``multiplicative`` scales every entry by
        (1 + eta) with eta ~ N(0, variance).  Either way each matvec sees one
        fresh realization of the whole perturbed matrix, and the mean over
        realizations is the base matrix.
    variance : float
        Variance of the injected noise.  Common choices scale like 1/d**2 or
        100/d**2 with d the matrix dimension.
    """

    kind: str = "none"
    variance: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "additive_nonzero", "multiplicative"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.variance < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.kind != "none" and self.variance == 0:
            object.__setattr__(self, "kind", "none")

    @classmethod
    def exact(cls):
        return cls("none", 0.0)

    @classmethod
    def additive(cls, variance):
        return cls("additive_nonzero", float(variance))

    @classmethod
    def multiplicative(cls, variance):
        return cls("multiplicative", float(variance))


class ImplicitOperator:
    """A real symmetric D x D matrix seen only through matrix-vector products.

    Attributes
    ----------
    dim : int
        Number of rows (= columns).
    stochastic : bool
        Whether matvecs are random realizations.  Deterministic operators
        ignore the generator argument.
    norm_bound : float or None
        A recorded upper bound on the spectral norm of the mean matrix, when
        one is known.  Estimation pipelines require a recorded bound < 1.
    divisor : float
        Cumulative rescaling divisor relative to the matrix the operator was
        originally built from.  Eigenvalue lambda of this operator sits at
        lambda * divisor on the original axis.
    """

    def __init__(self, dim, stochastic=False, norm_bound=None, divisor=1.0):
        dim = int(dim)
        if dim < 1:
            raise ValueError("operator dimension must be positive")
        self.dim = dim
        self.stochastic = bool(stochastic)
        self.norm_bound = None if norm_bound is None else float(norm_bound)
        self.divisor = float(divisor)

    # Subclasses implement _matvec; stochastic ones must follow the fixed
    # generator-consumption contract from the module docstring.
    def _matvec(self, x, rng):
        raise NotImplementedError

    def apply(self, x, rng=None):
        """One product A_hat @ x, drawing a fresh realization if stochastic."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"expected vector of shape ({self.dim},), got {x.shape}")
        if self.stochastic and rng is None:
            raise ValueError("stochastic operator requires a random generator")
        return self._matvec(x, rng)

    def apply_block(self, X, rng=None):
        """Apply one shared realization to every column of X.

        For stochastic operators a single matrix draw is replayed across all
        columns by cloning generator state, so the result equals ``A_hat @ X``
        for one realization ``A_hat``.  The generator is advanced exactly as
        if a single matvec had been performed.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.dim:
            raise ValueError(f"expected block of shape ({self.dim}, m)")
        out = np.empty_like(X)
        if not self.stochastic:
            for j in range(X.shape[1]):
                out[:, j] = self._matvec(X[:, j], None)
            return out
        if rng is None:
            raise ValueError("stochastic operator requires a random generator")
        state = rng.bit_generator.state
        clone = np.random.default_rng()
        for j in range(X.shape[1]):
            clone.bit_generator.state = state
            out[:, j] = self._matvec(X[:, j], clone)
        rng.bit_generator.state = clone.bit_generator.state
        return out

    def __repr__(self):
        kind = "stochastic" if self.stochastic else "deterministic"
        return f"<{type(self).__name__} dim={self.dim} {kind}>"


class DenseOperator(ImplicitOperator):
    """Exact operator backed by a dense symmetric ndarray."""

    def __init__(self, matrix, norm_bound=None, divisor=1.0):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("dense operator needs a square matrix")
        super().__init__(matrix.shape[0], stochastic=False,
                         norm_bound=norm_bound, divisor=divisor)
        self.matrix = matrix

    def _matvec(self, x, rng):
        return self.matrix @ x

    def apply_block(self, X, rng=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.dim:
            raise ValueError(f"expected block of shape ({self.dim}, m)")
        return self.matrix @ X


class SparseOperator(ImplicitOperator):
    """Exact operator backed by a scipy CSR matrix."""

    def __init__(self, matrix, norm_bound=None, divisor=1.0):
        matrix = sparse.csr_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("sparse operator needs a square matrix")
        super().__init__(matrix.shape[0], stochastic=False,
                         norm_bound=norm_bound, divisor=divisor)
        self.matrix = matrix

    def _matvec(self, x, rng):
        return self.matrix @ x

    def apply_block(self, X, rng=None):
        X = np.asarray(X, dtype=np.float64)
        return np.asarray(self.matrix @ X)


class FunctionOperator(ImplicitOperator):
    """Operator defined by a user-supplied matvec callable.

    The callable receives ``(x, rng)`` and must respect the linearity and
    generator-consumption contracts if ``stochastic`` is set.
    """

    def __init__(self, dim, matvec: Callable, stochastic=False,
                 norm_bound=None, divisor=1.0):
        super().__init__(dim, stochastic=stochastic, norm_bound=norm_bound,
                         divisor=divisor)
        self._fn = matvec

    def _matvec(self, x, rng):
        return np.asarray(self._fn(x, rng), dtype=np.float64)


class _NoisyDenseOperator(ImplicitOperator):
    def __init__(self, matrix, noise, norm_bound=None, divisor=1.0):
        super().__init__(matrix.shape[0], stochastic=True,
                         norm_bound=norm_bound, divisor=divisor)
        self.matrix = matrix
        self.noise = noise
        self._sd = np.sqrt(noise.variance)
        # additive noise only lands on structurally nonzero entries
        self._mask = (matrix != 0.0).astype(np.float64) \
            if noise.kind == "additive_nonzero" else None

    def _draw(self, rng):
        e = rng.standard_normal((self.dim, self.dim))
        if self.noise.kind == "additive_nonzero":
            return self.matrix + self._sd * e * self._mask
        return self.matrix * (1.0 + self._sd * e)

    def _matvec(self, x, rng):
        return self._draw(rng) @ x

    def apply_block(self, X, rng=None):
        X = np.asarray(X, dtype=np.float64)
        if rng is None:
            raise ValueError("stochastic operator requires a random generator")
        return self._draw(rng) @ X


class _NoisySparseOperator(ImplicitOperator):
    def __init__(self, matrix, noise, norm_bound=None, divisor=1.0):
        matrix = sparse.csr_matrix(matrix)
        super().__init__(matrix.shape[0], stochastic=True,
                         norm_bound=norm_bound, divisor=divisor)
        self.matrix = matrix
        self.noise = noise
        self._sd = np.sqrt(noise.variance)

    def _perturbed(self, rng):
        e = rng.standard_normal(self.matrix.nnz)
        if self.noise.kind == "additive_nonzero":
            data = self.matrix.data + self._sd * e
        else:
            data = self.matrix.data * (1.0 + self._sd * e)
        return sparse.csr_matrix(
            (data, self.matrix.indices, self.matrix.indptr),
            shape=self.matrix.shape)

    def _matvec(self, x, rng):
        return self._perturbed(rng) @ x

    def apply_block(self, X, rng=None):
        X = np.asarray(X, dtype=np.float64)
        if rng is None:
            raise ValueError("stochastic operator requires a random generator")
        return np.asarray(self._perturbed(rng) @ X)


def with_noise(matrix, noise: NoiseModel, norm_bound=None, divisor=1.0):
    """Wrap a dense or sparse matrix as a (possibly noisy) operator.

    With ``noise.kind == 'none'`` the result is an exact operator.  Otherwise
    every matvec draws one fresh realization of the perturbed matrix; the
    draws are unbiased for the base matrix.
    """
    if noise.kind == "none":
        if sparse.issparse(matrix):
            return SparseOperator(matrix, norm_bound=norm_bound, divisor=divisor)
        return DenseOperator(matrix, norm_bound=norm_bound, divisor=divisor)
    if sparse.issparse(matrix):
        return _NoisySparseOperator(matrix, noise, norm_bound=norm_bound,
                                    divisor=divisor)
    matrix = np.asarray(matrix, dtype=np.float64)
    return _NoisyDenseOperator(matrix, noise, norm_bound=norm_bound,
                               divisor=divisor)


# ---------------------------------------------------------------- rescaling

def estimate_operator_norm(op, iters=100, rng=None, draws_per_iter=8):
    """Estimate the spectral norm of the (mean) operator by power iteration.

    Runs exactly ``iters`` iterations on A (averaging ``draws_per_iter``
    stochastic draws per application when the operator is noisy) and returns
    ``||A v|| / ||v||`` at the final iterate.  This converges to the spectral
    norm even when the extreme eigenvalues come in +/- pairs, a case where
    the signed quadratic form v.T A v / v.T v would stall near zero.
    Non-convergence is not detected or reported; callers wanting a safety
    margin should add one (see :func:`rescale`).
    """
    if rng is None:
        rng = np.random.default_rng()
    n_draws = draws_per_iter if op.stochastic else 1

    def mean_apply(v):
        acc = op.apply(v, rng)
        for _ in range(n_draws - 1):
            acc = acc + op.apply(v, rng)
        return acc / n_draws

    v = rng.standard_normal(op.dim)
    while not np.linalg.norm(v) > 0:
        v = rng.standard_normal(op.dim)
    v /= np.linalg.norm(v)
    for _ in range(int(iters)):
        w = mean_apply(v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # operator annihilated the iterate; restart from fresh noise
            v = rng.standard_normal(op.dim)
            v /= np.linalg.norm(v)
            continue
        v = w / nrm
    w = mean_apply(v)
    return float(np.linalg.norm(w))


def rescale(op, norm_bound, margin=None):
    """Divide an operator by ``norm_bound + margin`` to fit its spectrum in (-1, 1).

    ``margin`` defaults to 5% of the bound.  The divisor is recorded
    (multiplied into ``op.divisor``) so results can be mapped back to the
    original eigenvalue axis, and the wrapped operator carries
    ``norm_bound = norm_bound / (norm_bound + margin) < 1``.
    """
    norm_bound = float(norm_bound)
    if norm_bound <= 0:
        raise ValueError("norm bound must be positive")
    if margin is None:
        margin = 0.05 * norm_bound
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    c = norm_bound + margin
    inner = op

    def matvec(x, rng):
        return inner.apply(x, rng) / c

    out = FunctionOperator(op.dim, matvec, stochastic=op.stochastic,
                           norm_bound=norm_bound / c,
                           divisor=op.divisor * c)
    # preserve the fast block path of the wrapped operator
    out.apply_block = lambda X, rng=None: inner.apply_block(X, rng) / c
    return out


def affine(op, alpha, beta):
    """Operator for alpha * A + beta * I built on top of an existing operator."""
    alpha = float(alpha)
    beta = float(beta)
    inner = op

    def matvec(x, rng):
        return alpha * inner.apply(x, rng) + beta * x

    bound = None
    if op.norm_bound is not None:
        bound = abs(alpha) * op.norm_bound + abs(beta)
    out = FunctionOperator(op.dim, matvec, stochastic=op.stochastic,
                           norm_bound=bound, divisor=op.divisor)
    out.apply_block = (
        lambda X, rng=None: alpha * inner.apply_block(X, rng) + beta * np.asarray(X))
    return out


def materialize_draw(op, rng=None):
    """Return one full realization of the operator as a dense matrix.

    Uses :meth:`ImplicitOperator.apply_block` on the identity, so for a
    stochastic operator all columns come from a single draw.  Meant for
    validation at small dimension; cost is dim matvecs.
    """
    return op.apply_block(np.eye(op.dim), rng)
