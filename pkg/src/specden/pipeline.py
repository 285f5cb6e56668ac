"""End-to-end estimation of kernel-smoothed spectral densities.

For an operator with spectrum inside (-1, 1), the smoothed density at a
query point lambda is (1/D) sum_d K_kappa(lambda, lambda_d), and expanding
the kernel in Chebyshev polynomials turns it into a weighted sum of
normalized traces (1/D) tr T_k(A).  The estimator combines three layers of
randomness: probe vectors for the traces, one randomized matrix-polynomial
recursion per probe (valid for stochastic matvecs), and optionally an
importance-sampled polynomial order per query point.

One recursion pass per probe serves every query point: the per-level
quadratic forms x.T T_hat_k x are collected once and then contracted
against the per-lambda coefficients.  Two contraction modes:

* ``faithful_per_lambda``: for each query point, orders are drawn from the
  |gamma| proposal and the constant-magnitude signed weights are averaged,
  the single-sample estimator verbatim (n_indices_per_probe draws per
  point, all sharing the probe's recursion).
* ``shared_moments``: the truncated series is contracted exactly against
  the moment vector, removing the order-sampling variance entirely at the
  cost of the (bounded, tiny) truncation tail.

Probe-level averages define the reported Monte Carlo distribution; the
standard error is computed across probes, never across the correlated
order samples inside one probe.  Reported densities are on the operator's
own (-1, 1) axis; the recorded ``divisor`` maps back to the original one.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chebyshev import cheb_moments
from .traces import ControlVariate, ProbeSpec, probe
from .vonmises import bessel_ratio, truncation_order

__all__ = [
    "chebyshev_grid",
    "uniform_grid",
    "RunConfig",
    "DensityEstimate",
    "estimate_density",
    "ChebTraceEstimate",
    "estimate_cheb_traces",
    "bootstrap_ci",
    "integrate_curve",
    "integrate_density",
]

MODES = ("faithful_per_lambda", "shared_moments")


def chebyshev_grid(n):
    """n query points at Chebyshev nodes cos(pi (2i+1) / (2n)), ascending.

    Uniform in arccos(lambda), so resolution follows the kernel's circular
    geometry, and the endpoints +-1 (where the density representation
    degenerates) are never touched.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one grid point")
    return np.cos(np.pi * (2.0 * np.arange(n, dtype=np.float64) + 1.0) / (2 * n))[::-1].copy()


def uniform_grid(n, lo=-0.99, hi=0.99):
    """n equally spaced query points on [lo, hi], strictly inside (-1, 1)."""
    if not -1.0 < lo < hi < 1.0:
        raise ValueError("grid must lie strictly inside (-1, 1)")
    return np.linspace(lo, hi, int(n))


@dataclass
class RunConfig:
    """Everything one estimation run depends on.

    ``n_indices_per_probe`` only matters in ``faithful_per_lambda`` mode.
    ``seed`` feeds a root SeedSequence; each probe gets a spawned child
    stream, so results are reproducible bit for bit for a fixed config
    regardless of ``n_workers``.
    """

    kappa: float
    grid: np.ndarray
    n_probes: int
    n_indices_per_probe: int = 1000
    seed: int = 0
    tail_tol: float = 1e-12
    mode: str = "faithful_per_lambda"
    probe_distribution: str = "gaussian"
    control_variate: Optional[ControlVariate] = None
    n_workers: int = 1

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 1 or len(self.grid) == 0:
            raise ValueError("grid must be a nonempty vector")
        if np.any(np.abs(self.grid) >= 1.0):
            raise ValueError("grid points must lie strictly inside (-1, 1)")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.n_probes < 1 or self.n_indices_per_probe < 1:
            raise ValueError("sample counts must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.tail_tol <= 0:
            raise ValueError("tail_tol must be positive")
        if self.n_workers < 1:
            raise ValueError("n_workers must be positive")
        # probe_distribution validated by ProbeSpec at run time


@dataclass
class DensityEstimate:
    """Result of one estimation run.

    ``probe_densities`` holds the per-probe curves (overflow-flagged probes
    excluded), which is what bootstrap resampling operates on.
    ``normalizers`` are the per-query-point proposal normalization constants
    pi * sum_k |gamma_k|.
    """

    lambdas: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    n_samples: np.ndarray
    probe_densities: np.ndarray
    overflow_count: int
    k_max: int
    normalizers: np.ndarray
    divisor: float
    wall_time: float
    config: RunConfig


def _parallel_map(fn, n, n_workers):
    if n_workers <= 1:
        for i in range(n):
            fn(i)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(fn, range(n)))


def _coefficient_table(kappa, grid, tail_tol):
    """Per-query-point Chebyshev coefficients as a (n_grid, k_max+1) table."""
    k_max = truncation_order(kappa, tail_tol)
    ks = np.arange(k_max + 1)
    ratios = bessel_ratio(ks, kappa)
    table = (2.0 / np.pi) * ratios[None, :] * np.cos(
        np.outer(np.arccos(grid), ks))
    table[:, 0] = 1.0 / np.pi
    return table


def estimate_density(op, config: RunConfig):
    """Estimate the kappa-smoothed spectral density of ``op`` on a grid.

    The operator must have its spectrum inside (-1, 1); an operator with a
    recorded norm bound >= 1 is rejected (rescale it first).  Probes whose
    recursion trips the overflow guard are excluded from the mean and
    counted in ``overflow_count``.
    """
    t0 = time.perf_counter()
    if op.norm_bound is not None and op.norm_bound >= 1.0:
        raise ValueError(
            f"operator records norm bound {op.norm_bound:g} >= 1; rescale first")
    grid = config.grid
    n_grid = len(grid)
    dim = op.dim
    table = _coefficient_table(config.kappa, grid, config.tail_tol)
    k_max = table.shape[1] - 1
    abs_sums = np.abs(table).sum(axis=1)
    faithful = config.mode == "faithful_per_lambda"
    if faithful:
        masses = np.abs(table) / abs_sums[:, None]
        signs = np.sign(table)
    coeff_sums = table.sum(axis=1)
    jacobian = np.sqrt(1.0 - grid * grid)
    spec = ProbeSpec(dim, config.probe_distribution)
    cv = config.control_variate

    seeds = np.random.SeedSequence(config.seed).spawn(config.n_probes)
    curves = np.empty((config.n_probes, n_grid))
    flagged = np.zeros(config.n_probes, dtype=bool)

    def run_probe(p):
        rng = np.random.default_rng(seeds[p])
        x = probe(spec, rng)
        correction = cv.correction(x) if cv is not None else 0.0
        if faithful:
            n_idx = config.n_indices_per_probe
            orders = np.empty((n_grid, n_idx), dtype=np.int64)
            for i in range(n_grid):
                orders[i] = rng.choice(k_max + 1, size=n_idx, p=masses[i])
            moments, overflow = cheb_moments(op, x, int(orders.max()), rng)
            vals = np.empty(n_grid)
            for i in range(n_grid):
                w = signs[i, orders[i]] * abs_sums[i]
                vals[i] = (w * moments[orders[i]]).mean() - correction * w.mean()
        else:
            moments, overflow = cheb_moments(op, x, k_max, rng)
            vals = table @ moments - correction * coeff_sums
        curves[p] = vals / (dim * jacobian)
        flagged[p] = overflow is not None

    _parallel_map(run_probe, config.n_probes, config.n_workers)

    used = curves[~flagged]
    n_used = len(used)
    if n_used == 0:
        raise RuntimeError("every probe tripped the overflow guard")
    density = used.mean(axis=0)
    if n_used > 1:
        stderr = used.std(axis=0, ddof=1) / np.sqrt(n_used)
    else:
        stderr = np.full(n_grid, np.inf)
    return DensityEstimate(
        lambdas=grid.copy(),
        density=density,
        stderr=stderr,
        n_samples=np.full(n_grid, n_used, dtype=np.int64),
        probe_densities=used,
        overflow_count=int(flagged.sum()),
        k_max=k_max,
        normalizers=np.pi * abs_sums,
        divisor=op.divisor,
        wall_time=time.perf_counter() - t0,
        config=config,
    )


@dataclass
class ChebTraceEstimate:
    """Estimates of the normalized traces (1/D) tr T_k for k = 0 .. k_max."""

    orders: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_used: int
    overflow_count: int


def estimate_cheb_traces(op, k_max, n_probes, seed=0,
                         probe_distribution="gaussian", n_workers=1):
    """Estimate (1/D) tr T_k for all k <= k_max from stochastic matvecs.

    Every probe runs one randomized recursion and contributes the quadratic
    forms x.T T_hat_k x / D; means and standard errors are taken across
    probes.
    """
    k_max = int(k_max)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    spec = ProbeSpec(op.dim, probe_distribution)
    seeds = np.random.SeedSequence(seed).spawn(int(n_probes))
    rows = np.empty((int(n_probes), k_max + 1))
    flagged = np.zeros(int(n_probes), dtype=bool)

    def run_probe(p):
        rng = np.random.default_rng(seeds[p])
        x = probe(spec, rng)
        moments, overflow = cheb_moments(op, x, k_max, rng)
        rows[p] = moments / op.dim
        flagged[p] = overflow is not None

    _parallel_map(run_probe, int(n_probes), n_workers)

    used = rows[~flagged]
    if len(used) == 0:
        raise RuntimeError("every probe tripped the overflow guard")
    mean = used.mean(axis=0)
    stderr = (used.std(axis=0, ddof=1) / np.sqrt(len(used))
              if len(used) > 1 else np.full(k_max + 1, np.inf))
    return ChebTraceEstimate(orders=np.arange(k_max + 1), mean=mean,
                             stderr=stderr, n_used=len(used),
                             overflow_count=int(flagged.sum()))


def bootstrap_ci(samples, n_boot=1000, level=0.95, seed=0):
    """Percentile bootstrap interval for the mean of ``samples``.

    ``samples`` has observations along axis 0 (rows may be whole curves);
    returns (lo, hi) with the same trailing shape.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n < 2:
        raise ValueError("need at least two observations to bootstrap")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(int(n_boot), n))
    boot_means = samples[idx].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo = np.percentile(boot_means, tail, axis=0)
    hi = np.percentile(boot_means, 100.0 - tail, axis=0)
    return lo, hi


def integrate_curve(lambdas, values, lo=None, hi=None):
    """Trapezoid integral of sampled curves over [lo, hi].

    ``values`` is 1-d, or 2-d with one curve per row.  Endpoints falling
    between grid points are handled by linear interpolation, i.e. the
    integral is that of the piecewise-linear interpolant.  [lo, hi] must be
    inside the grid span.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    lo = lambdas[0] if lo is None else float(lo)
    hi = lambdas[-1] if hi is None else float(hi)
    if not (lambdas[0] <= lo < hi <= lambdas[-1]):
        raise ValueError("[lo, hi] must be a nonempty interval inside the grid span")
    inner = (lambdas > lo) & (lambdas < hi)
    xs = np.concatenate([[lo], lambdas[inner], [hi]])
    one_d = values.ndim == 1
    rows = values[None, :] if one_d else values
    out = np.empty(rows.shape[0])
    for r in range(rows.shape[0]):
        end_vals = np.interp([lo, hi], lambdas, rows[r])
        ys = np.concatenate([[end_vals[0]], rows[r][inner], [end_vals[1]]])
        out[r] = np.trapezoid(ys, xs)
    return float(out[0]) if one_d else out


def integrate_density(est: DensityEstimate, lo=None, hi=None):
    """Trapezoid integral of the mean density curve over [lo, hi]."""
    return integrate_curve(est.lambdas, est.density, lo, hi)
