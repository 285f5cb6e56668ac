"""Randomized trace and diagonal estimation with control variates.

The workhorse identity is E[x.T A x] = tr(A) for any probe distribution
with E[x x.T] = I; Gaussian and Rademacher probes both qualify.  For
Gaussian probes the estimator's variance is exactly 2 ||A||_F^2.

A control variate x.T B x - tr(B) built from a second matrix with known
trace reduces that variance by 4c tr(AB) - 2c^2 tr(B^2), maximized at
c* = tr(AB) / tr(B^2) where the reduction equals 2 tr(AB)^2 / tr(B^2).
Note that for B = alpha I the achievable reduction is independent of alpha
(the scale is absorbed into c).
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ProbeSpec",
    "probe",
    "probe_block",
    "TraceEstimate",
    "sh_trace",
    "qf_variance_dense",
    "ControlVariate",
    "cv_trace",
    "optimal_c_dense",
    "variance_reduction",
    "diag_estimate",
    "RunningMoments",
]

TraceEstimate = namedtuple("TraceEstimate", ["mean", "stderr", "n"])


@dataclass(frozen=True)
class ProbeSpec:
    """Probe vector family: dimension plus distribution name."""

    dim: int
    distribution: str = "gaussian"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("probe dimension must be positive")
        if self.distribution not in ("gaussian", "rademacher"):
            raise ValueError(f"unknown probe distribution {self.distribution!r}")


def probe(spec: ProbeSpec, rng):
    """One probe vector with E[x x.T] = I."""
    if spec.distribution == "gaussian":
        return rng.standard_normal(spec.dim)
    return rng.integers(0, 2, size=spec.dim).astype(np.float64) * 2.0 - 1.0


def probe_block(spec: ProbeSpec, n, rng):
    """n independent probes as columns of a (dim, n) array."""
    if spec.distribution == "gaussian":
        return rng.standard_normal((spec.dim, int(n)))
    return rng.integers(0, 2, size=(spec.dim, int(n))).astype(np.float64) * 2.0 - 1.0


def _mean_stderr(samples):
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    mean = samples.mean()
    stderr = samples.std(ddof=1) / np.sqrt(n) if n > 1 else np.inf
    return mean, stderr, n


def sh_trace(op, spec: ProbeSpec, n, rng):
    """Monte Carlo trace estimate mean(x.T A_hat x) over n probes."""
    if spec.dim != op.dim:
        raise ValueError("probe dimension does not match operator")
    vals = np.empty(int(n))
    for i in range(int(n)):
        x = probe(spec, rng)
        vals[i] = x @ op.apply(x, rng)
    return TraceEstimate(*_mean_stderr(vals))


def qf_variance_dense(A, sym_tol=1e-10, max_dim=512):
    """Exact Gaussian-probe variance 2 ||A||_F^2 of x.T A x, dense check.

    Requires a symmetric matrix (the identity above is computed for the
    symmetric part); asymmetry beyond ``sym_tol`` is rejected rather than
    silently symmetrized.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("need a square matrix")
    if A.shape[0] > max_dim:
        raise ValueError(f"dense variance check gated to dim <= {max_dim}")
    if np.max(np.abs(A - A.T)) > sym_tol:
        raise ValueError("matrix is not symmetric")
    return 2.0 * float(np.sum(A * A))


@dataclass(frozen=True)
class ControlVariate:
    """Control variate x.T B x - tr(B) with coefficient c.

    B is either ``alpha * I`` (kind 'scaled_identity') or a diagonal matrix
    (kind 'diagonal', with ``values`` the diagonal).  Both keep the
    correction O(dim) per probe and have a trace known by construction.
    """

    kind: str
    c: float
    alpha: float = 1.0
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("scaled_identity", "diagonal"):
            raise ValueError(f"unknown control variate kind {self.kind!r}")
        if self.kind == "diagonal":
            if self.values is None:
                raise ValueError("diagonal control variate needs values")
            object.__setattr__(self, "values",
                               np.asarray(self.values, dtype=np.float64))

    @classmethod
    def scaled_identity(cls, alpha, c):
        return cls(kind="scaled_identity", alpha=float(alpha), c=float(c))

    @classmethod
    def diagonal(cls, values, c):
        return cls(kind="diagonal", values=values, c=float(c))

    def trace(self, dim):
        if self.kind == "scaled_identity":
            return self.alpha * dim
        return float(self.values.sum())

    def quad_form(self, x):
        if self.kind == "scaled_identity":
            return self.alpha * float(x @ x)
        return float((self.values * x) @ x)

    def correction(self, x):
        """c * (x.T B x - tr B) for one probe."""
        return self.c * (self.quad_form(x) - self.trace(len(x)))


def cv_trace(op, cv: ControlVariate, spec: ProbeSpec, n, rng):
    """Trace estimate with the control variate subtracted per probe."""
    if spec.dim != op.dim:
        raise ValueError("probe dimension does not match operator")
    vals = np.empty(int(n))
    for i in range(int(n)):
        x = probe(spec, rng)
        vals[i] = x @ op.apply(x, rng) - cv.correction(x)
    return TraceEstimate(*_mean_stderr(vals))


def optimal_c_dense(A, B):
    """c* = tr(AB) / tr(B^2) for dense matrices."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    den = float(np.sum(B * B.T))
    if den <= 0 or not np.isfinite(den):
        raise ValueError("control matrix has (near) zero tr(B^2)")
    return float(np.sum(A * B.T)) / den


def variance_reduction(A, B, c):
    """Variance removed by the control variate: 4c tr(AB) - 2c^2 tr(B^2).

    Positive means the corrected estimator has lower variance.  At
    c = optimal_c_dense(A, B) this equals 2 tr(AB)^2 / tr(B^2).
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    tr_ab = float(np.sum(A * B.T))
    tr_b2 = float(np.sum(B * B.T))
    return 4.0 * c * tr_ab - 2.0 * c * c * tr_b2


def diag_estimate(op, spec: ProbeSpec, n, rng):
    """Estimate diag(A) as the running mean of x * (A_hat x)."""
    if spec.dim != op.dim:
        raise ValueError("probe dimension does not match operator")
    acc = np.zeros(op.dim)
    for _ in range(int(n)):
        x = probe(spec, rng)
        acc += x * op.apply(x, rng)
    return acc / int(n)


class RunningMoments:
    """Mergeable running mean / variance accumulator (Welford-Chan form).

    Supports scalar or fixed-shape array observations.  Merging is
    associative up to floating point, which is what lets per-worker
    accumulators combine deterministically in a fixed order.
    """

    def __init__(self):
        self.n = 0
        self._mean = 0.0
        self._m2 = 0.0

    def push(self, x):
        x = np.asarray(x, dtype=np.float64)
        self.n += 1
        delta = x - self._mean
        self._mean = self._mean + delta / self.n
        self._m2 = self._m2 + delta * (x - self._mean)

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self._mean, self._m2 = other.n, other._mean, other._m2
            return self
        n = self.n + other.n
        delta = other._mean - self._mean
        self._mean = self._mean + delta * (other.n / n)
        self._m2 = self._m2 + other._m2 + delta * delta * (self.n * other.n / n)
        self.n = n
        return self

    @property
    def mean(self):
        if self.n == 0:
            raise ValueError("no observations")
        return self._mean

    @property
    def variance(self):
        if self.n < 2:
            raise ValueError("need at least two observations")
        return self._m2 / (self.n - 1)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.n)
