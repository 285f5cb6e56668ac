"""Chebyshev polynomials of stochastic operators.

The scalar three-term recursion T_0 = 1, T_1 = a, T_k = 2 a T_{k-1} - T_{k-2}
lifts to matrices, and it survives replacing the matrix by independent
unbiased random realizations at every level: with A_hat_1, A_hat_2, ...
independent draws,

    v_0 = x,   v_1 = A_hat_1 x,   v_k = 2 A_hat_k v_{k-1} - v_{k-2}

has E[v_k] = T_k(A) x, because each level's draw is independent of the
vectors built from the earlier ones.  Everything here produces those
vectors, or moments x.T v_k of them, one level at a time.

Variance grows geometrically with the level.  If alpha bounds
4 E||A_hat||^2 + 2 E||A_hat|| + 1 then the second moment of the randomized
polynomial is at most dim * alpha**k in squared Frobenius norm, which is
what :func:`bound_second_moment` evaluates and :func:`alpha_from_noise`
measures for a concrete operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import materialize_draw

__all__ = [
    "cheb_scalar",
    "cheb_scan",
    "cheb_apply",
    "cheb_moments",
    "cheb_apply_block",
    "VarianceBoundParams",
    "bound_second_moment",
    "alpha_from_noise",
]

# Norm threshold (times sqrt(dim)) above which a recursion is flagged as an
# overflow outlier.  Flagged, never clipped: callers decide what to exclude.
OVERFLOW_FACTOR = 1e12


def cheb_scalar(k, a):
    """T_k(a) by the three-term recursion, vectorized over ``a``."""
    k = int(k)
    if k < 0:
        raise ValueError("polynomial order must be nonnegative")
    a = np.asarray(a, dtype=np.float64)
    prev = np.ones_like(a)
    if k == 0:
        return prev
    cur = a.copy()
    for _ in range(k - 1):
        prev, cur = cur, 2.0 * a * cur - prev
    return cur


def cheb_scan(op, x, k_max, rng=None):
    """Yield (k, v_k) for k = 0 .. k_max with one fresh draw per level."""
    k_max = int(k_max)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    yield 0, x
    if k_max == 0:
        return
    prev = x
    cur = op.apply(x, rng)
    yield 1, cur
    for k in range(2, k_max + 1):
        prev, cur = cur, 2.0 * op.apply(cur, rng) - prev
        yield k, cur


def cheb_apply(op, x, k, rng=None):
    """One draw of the randomized polynomial applied to a vector, T_hat_k(A) x."""
    out = None
    for _, v in cheb_scan(op, x, k, rng):
        out = v
    return out


def cheb_moments(op, x, k_max, rng=None, overflow_limit=None):
    """Quadratic forms x.T T_hat_k(A) x for all k = 0 .. k_max in one pass.

    Returns ``(moments, overflow_level)`` where ``moments`` has length
    k_max + 1 and ``overflow_level`` is the first level whose intermediate
    vector norm exceeded ``overflow_limit`` (default 1e12 * sqrt(dim)), or
    None if the recursion stayed bounded.  The recursion is continued even
    after the flag trips so the moment vector always has full length.
    """
    if overflow_limit is None:
        overflow_limit = OVERFLOW_FACTOR * np.sqrt(op.dim)
    x = np.asarray(x, dtype=np.float64)
    moments = np.empty(int(k_max) + 1)
    overflow_level = None
    for k, v in cheb_scan(op, x, k_max, rng):
        moments[k] = x @ v
        if overflow_level is None and not np.linalg.norm(v) <= overflow_limit:
            overflow_level = k
    return moments, overflow_level


def cheb_apply_block(op, X, k_max, rng=None):
    """Randomized recursion on a block, one shared draw per level.

    Yields (k, V_k) with ``V_k`` of the same shape as X.  Within a level the
    single realization A_hat_k multiplies every column, so running this on
    the identity produces the full matrix T_hat_k(A).  Levels still use
    independent draws.
    """
    k_max = int(k_max)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    X = np.asarray(X, dtype=np.float64)
    yield 0, X
    if k_max == 0:
        return
    prev = X
    cur = op.apply_block(X, rng)
    yield 1, cur
    for k in range(2, k_max + 1):
        prev, cur = cur, 2.0 * op.apply_block(cur, rng) - prev
        yield k, cur


@dataclass(frozen=True)
class VarianceBoundParams:
    """Parameters of the geometric second-moment bound.

    ``alpha`` should dominate 4 E||A_hat||^2 + 2 E||A_hat|| + 1 over draws of
    the operator (spectral norms).  ``dim`` is the operator dimension.
    """

    alpha: float
    dim: int

    def __post_init__(self):
        if self.alpha < 1.0:
            # 4 E||A||^2 + 2 E||A|| + 1 >= 1 always
            raise ValueError("alpha must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be positive")


def bound_second_moment(params: VarianceBoundParams, k):
    """Upper bound dim * alpha**k on E||T_hat_k||_F^2."""
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("order must be nonnegative")
    return params.dim * params.alpha ** np.asarray(k, dtype=np.float64)


def alpha_from_noise(op, n_samples, rng, max_dim=256):
    """Monte Carlo estimate of 4 E||A_hat||^2 + 2 E||A_hat|| + 1.

    Materializes ``n_samples`` full draws and takes dense spectral norms, so
    it is gated to small operators (``dim <= max_dim``).  The returned value
    plugs straight into :class:`VarianceBoundParams`.
    """
    if op.dim > max_dim:
        raise ValueError(
            f"alpha estimation materializes dense draws; dim {op.dim} exceeds "
            f"the {max_dim} limit")
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError("need at least one sample")
    total = 0.0
    for _ in range(n_samples):
        a_hat = materialize_draw(op, rng)
        s = np.linalg.norm(a_hat, ord=2)
        total += 4.0 * s * s + 2.0 * s + 1.0
    return total / n_samples
