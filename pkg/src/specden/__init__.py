"""Spectral density estimation for large implicit matrices.

Estimates the kernel-smoothed spectral density of a symmetric D x D matrix
that is only available through matrix-vector products, possibly noisy ones:
each product may be an independent unbiased draw A_hat v with E[A_hat] = A.
The estimator expands a von Mises smoothing kernel in Chebyshev polynomials,
runs a randomized three-term recursion whose levels use fresh independent
matvec draws (so the k-th iterate is an unbiased estimate of T_k(A) v), and
combines probe vectors, importance-sampled polynomial orders, and optional
control variates into an unbiased density estimate with per-point standard
errors.

Entry points: wrap a matrix or callable with :mod:`specden.operators`, then
call :func:`specden.estimate_density`.  :mod:`specden.ensembles` has graph
and random-matrix test beds with analytic spectra for validation.
"""

from .operators import (
    NoiseModel,
    ImplicitOperator,
    DenseOperator,
    SparseOperator,
    FunctionOperator,
    with_noise,
    estimate_operator_norm,
    rescale,
    affine,
    materialize_draw,
)
from .chebyshev import (
    cheb_scalar,
    cheb_apply,
    cheb_scan,
    cheb_moments,
    cheb_apply_block,
    VarianceBoundParams,
    bound_second_moment,
    alpha_from_noise,
)
from .vonmises import (
    kernel_eval,
    bessel_ratio,
    truncation_order,
    CoefficientSeries,
    kernel_coeffs,
    chebyshev_sum,
    series_eval,
)
from .sampling import (
    Proposal,
    build_proposal,
    optimal_proposal,
    sample_index,
    sample_indices,
    truncation_estimate,
    SurvivalUnderflowError,
)
from .traces import (
    ProbeSpec,
    probe,
    probe_block,
    TraceEstimate,
    sh_trace,
    qf_variance_dense,
    ControlVariate,
    cv_trace,
    optimal_c_dense,
    variance_reduction,
    diag_estimate,
    RunningMoments,
)
from .pipeline import (
    RunConfig,
    DensityEstimate,
    estimate_density,
    ChebTraceEstimate,
    estimate_cheb_traces,
    chebyshev_grid,
    uniform_grid,
    bootstrap_ci,
    integrate_curve,
    integrate_density,
)
from . import ensembles

__version__ = "0.1.0"
