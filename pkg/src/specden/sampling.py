"""Importance sampling over Chebyshev order.

An infinite series sum_k gamma_k T_hat_k can be estimated without
truncation bias by drawing the order from a proposal q and weighting by
gamma_k / q_k.  Two proposals matter in practice:

* masses proportional to |gamma_k|, in which case every importance weight
  has the same magnitude sum_j |gamma_j| and only the sign varies;
* masses proportional to |gamma_k| sqrt(m2_k) with m2_k the second moment
  of the level-k estimator, which minimizes the resulting second moment
  over all proposals (Cauchy-Schwarz).

A randomized-truncation variant is also provided: draw a cutoff k from the
masses and sum the first k+1 levels with survival-probability reweighting.
It reuses all recursion intermediates up to the cutoff, at the price of a
different variance profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chebyshev import cheb_scan
from .vonmises import CoefficientSeries

__all__ = [
    "Proposal",
    "build_proposal",
    "optimal_proposal",
    "sample_index",
    "sample_indices",
    "truncation_estimate",
    "SurvivalUnderflowError",
]


class SurvivalUnderflowError(RuntimeError):
    """A randomized-truncation sample hit a survival probability of zero."""


@dataclass(frozen=True)
class Proposal:
    """Discrete proposal over polynomial orders 0 .. k_max.

    ``masses`` sum to one.  ``weights[k]`` is the importance weight
    gamma_k / masses[k] (zero where gamma_k is zero).  ``normalizer`` is
    pi * sum_k |gamma_k|, the circle-space normalization constant of the
    underlying kernel series; for a von Mises series at parameter kappa it
    is bounded by exp(kappa) / I_0(kappa) ~ sqrt(2 pi kappa).
    """

    masses: np.ndarray
    weights: np.ndarray
    normalizer: float

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "weights", weights)
        if masses.shape != weights.shape or masses.ndim != 1:
            raise ValueError("masses and weights must be equal-length vectors")
        if np.any(masses < 0):
            raise ValueError("proposal masses must be nonnegative")
        if abs(masses.sum() - 1.0) > 1e-12:
            raise ValueError("proposal masses must sum to 1")
        # support condition: zero mass exactly where the weight is zero,
        # otherwise the estimator silently drops series terms
        if np.any((masses == 0) & (weights != 0)):
            raise ValueError("proposal assigns zero mass to a nonzero coefficient")

    @property
    def k_max(self):
        return len(self.masses) - 1

    def gammas(self):
        """Recover the coefficient vector masses * weights."""
        return self.masses * self.weights


def _masses_from(scores, series):
    total = scores.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("proposal scores must have a positive finite sum")
    masses = scores / total
    gammas = series.coeffs
    weights = np.zeros_like(masses)
    nz = masses > 0
    weights[nz] = gammas[nz] / masses[nz]
    return Proposal(masses=masses, weights=weights,
                    normalizer=float(np.pi * np.abs(gammas).sum()))


def build_proposal(series: CoefficientSeries):
    """Proposal with masses proportional to |gamma_k|.

    Under this proposal every importance weight is +/- sum_j |gamma_j|, so
    single-sample estimates have constant magnitude and the order draw only
    contributes sign and level selection.
    """
    return _masses_from(np.abs(series.coeffs), series)


def optimal_proposal(series: CoefficientSeries, second_moments):
    """Variance-optimal proposal: masses ~ |gamma_k| sqrt(m2_k).

    ``second_moments`` are per-level second moments of the randomized
    estimator, e.g. measured E[(x.T T_hat_k x)^2] or the geometric bound
    dim * alpha**k.  They must be positive wherever gamma_k is nonzero.
    """
    m2 = np.asarray(second_moments, dtype=np.float64)
    if m2.shape != series.coeffs.shape:
        raise ValueError("second_moments must match the coefficient vector")
    if np.any(m2[series.coeffs != 0] <= 0):
        raise ValueError("second moments must be positive on the support")
    if np.any(~np.isfinite(m2)):
        raise ValueError("second moments must be finite")
    return _masses_from(np.abs(series.coeffs) * np.sqrt(m2), series)


def sample_index(proposal: Proposal, rng):
    """Draw one order k and its importance weight gamma_k / q_k."""
    k = int(rng.choice(len(proposal.masses), p=proposal.masses))
    return k, proposal.weights[k]


def sample_indices(proposal: Proposal, n, rng):
    """Vectorized order draws; returns (orders, weights) arrays of length n."""
    ks = rng.choice(len(proposal.masses), size=int(n), p=proposal.masses)
    return ks, proposal.weights[ks]


def truncation_estimate(op, x, proposal: Proposal, rng, cutoff=None):
    """Randomized-truncation estimate of x.T (sum_k gamma_k T_hat_k) x.

    Draws a cutoff k from the proposal masses and returns

        gamma_0 x.T v_0 + sum_{j=1}^{k} gamma_j x.T v_j / S_j,

    with S_j = 1 - sum_{l < j} q_l the probability that the cutoff reaches
    level j.  Unbiased for any masses that eventually cover the support.
    Raises :class:`SurvivalUnderflowError` if a needed survival probability
    underflows to zero, in which case the sample should be redrawn with a
    heavier-tailed proposal.  Passing ``cutoff`` skips the draw (useful in
    tests).
    """
    x = np.asarray(x, dtype=np.float64)
    gammas = proposal.gammas()
    if cutoff is None:
        k = int(rng.choice(len(proposal.masses), p=proposal.masses))
    else:
        k = int(cutoff)
    # S_j for j = 0 .. k; S_0 = 1 by convention (the j = 0 term is exact)
    survival = np.empty(k + 1)
    survival[0] = 1.0
    if k > 0:
        survival[1:] = 1.0 - np.cumsum(proposal.masses[:k])
    total = 0.0
    for j, v in cheb_scan(op, x, k, rng):
        if gammas[j] == 0.0:
            continue
        s = survival[j]
        if s <= 0.0:
            raise SurvivalUnderflowError(
                f"survival probability underflowed at level {j} of {k}")
        total += gammas[j] * (x @ v) / s
    return total
