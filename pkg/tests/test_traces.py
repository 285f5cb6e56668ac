import numpy as np
import pytest

from specden.ensembles import KneserSpec, kneser_operator
from specden.operators import DenseOperator, NoiseModel, with_noise
from specden.traces import (
    ProbeSpec,
    probe,
    probe_block,
    sh_trace,
    qf_variance_dense,
    ControlVariate,
    cv_trace,
    optimal_c_dense,
    variance_reduction,
    diag_estimate,
    RunningMoments,
)


def test_probe_families():
    rng = np.random.default_rng(0)
    r = probe(ProbeSpec(50, "rademacher"), rng)
    assert set(np.unique(r)) <= {-1.0, 1.0}
    blk = probe_block(ProbeSpec(8, "gaussian"), 100000, rng)
    cov = blk @ blk.T / blk.shape[1]
    assert np.max(np.abs(cov - np.eye(8))) < 5 * np.sqrt(2.0 / blk.shape[1])
    with pytest.raises(ValueError):
        ProbeSpec(4, "uniform")


def test_sh_trace_identity_rademacher_zero_variance():
    op = DenseOperator(np.eye(5))
    est = sh_trace(op, ProbeSpec(5, "rademacher"), 50, np.random.default_rng(1))
    assert est.mean == pytest.approx(5.0)
    assert est.stderr == pytest.approx(0.0)
    assert est.n == 50


def test_sh_trace_diag():
    op = DenseOperator(np.diag([1.0, 2.0, 3.0]))
    est = sh_trace(op, ProbeSpec(3, "gaussian"), 100000,
                   np.random.default_rng(2))
    assert abs(est.mean - 6.0) <= 5 * est.stderr


def test_sh_trace_noisy_adjacency():
    # adjacency has zero diagonal, so the trace target is 0
    op = kneser_operator(KneserSpec(5, 2), NoiseModel.multiplicative(0.5))
    est = sh_trace(op, ProbeSpec(10, "gaussian"), 20000,
                   np.random.default_rng(3))
    assert abs(est.mean) <= 5 * est.stderr


def test_qf_variance_dense_values():
    assert qf_variance_dense(np.eye(3)) == pytest.approx(6.0)
    assert qf_variance_dense(np.diag([1.0, -1.0])) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        qf_variance_dense(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_variance_law_montecarlo():
    # empirical Var(x.T A x) matches 2 ||A||_F^2 within 3% at n = 1e6
    rng = np.random.default_rng(4)
    d = 8
    a = rng.standard_normal((d, d))
    a = (a + a.T) / 2
    n = 1_000_000
    X = rng.standard_normal((n, d))
    vals = np.einsum("ij,jk,ik->i", X, a, X)
    v_emp = vals.var(ddof=1)
    assert abs(v_emp - qf_variance_dense(a)) <= 0.03 * qf_variance_dense(a)


def test_cv_identities():
    rng = np.random.default_rng(5)
    d = 6
    a = rng.standard_normal((d, d))
    a = (a + a.T) / 2
    b = np.diag(np.diag(a))
    c_star = optimal_c_dense(a, b)
    assert c_star == pytest.approx(np.sum(np.diag(a) ** 2)
                                   / np.sum(np.diag(b) ** 2))
    # at c* the reduction equals 2 tr(AB)^2 / tr(B^2), and it is a maximum
    red_star = variance_reduction(a, b, c_star)
    assert red_star == pytest.approx(
        2 * np.trace(a @ b) ** 2 / np.trace(b @ b))
    for c in np.linspace(-1, 3, 9):
        assert variance_reduction(a, b, c) <= red_star + 1e-12


def test_cv_trace_mean_preserved_and_variance_reduced():
    rng = np.random.default_rng(6)
    d = 8
    a = rng.standard_normal((d, d))
    a = (a + a.T) / 2
    op = DenseOperator(a)
    spec = ProbeSpec(d, "gaussian")
    b = np.diag(np.diag(a))
    cv = ControlVariate.diagonal(np.diag(a), optimal_c_dense(a, b))
    n = 200000
    plain = sh_trace(op, spec, n, np.random.default_rng(7))
    cved = cv_trace(op, cv, spec, n, np.random.default_rng(7))
    tr = float(np.trace(a))
    assert abs(plain.mean - tr) <= 5 * plain.stderr
    assert abs(cved.mean - tr) <= 5 * cved.stderr
    # measured variance drop within 5% of the predicted reduction
    var_plain = (plain.stderr * np.sqrt(n)) ** 2
    var_cv = (cved.stderr * np.sqrt(n)) ** 2
    predicted = variance_reduction(a, b, cv.c)
    assert abs((var_plain - var_cv) - predicted) <= 0.05 * predicted


def test_scaled_identity_cv_alpha_invariant():
    # B = alpha I: the correction c*(x.T B x - tr B) with c = c*(alpha) is
    # literally the same random variable for every alpha
    rng = np.random.default_rng(8)
    d = 5
    a = rng.standard_normal((d, d))
    a = (a + a.T) / 2
    x = rng.standard_normal(d)
    for alpha in (1.0, 10.0):
        b = alpha * np.eye(d)
        cv = ControlVariate.scaled_identity(alpha, optimal_c_dense(a, b))
        ref = ControlVariate.scaled_identity(1.0, optimal_c_dense(a, np.eye(d)))
        assert cv.correction(x) == pytest.approx(ref.correction(x), rel=1e-12)
        assert variance_reduction(a, b, cv.c) == pytest.approx(
            variance_reduction(a, np.eye(d), ref.c), rel=1e-12)


def test_control_variate_trace_and_quadform():
    cv = ControlVariate.diagonal([1.0, 2.0, 3.0], c=0.5)
    x = np.array([1.0, 1.0, -1.0])
    assert cv.trace(3) == 6.0
    assert cv.quad_form(x) == pytest.approx(1 + 2 + 3)
    assert cv.correction(x) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        ControlVariate(kind="diagonal", c=1.0)


def test_diag_estimate():
    rng = np.random.default_rng(9)
    d = 6
    a = rng.standard_normal((d, d))
    a = (a + a.T) / 2
    op = with_noise(a, NoiseModel.additive(0.01))
    est = diag_estimate(op, ProbeSpec(d, "gaussian"), 60000, rng)
    assert np.max(np.abs(est - np.diag(a))) < 0.05


def test_running_moments_matches_numpy():
    rng = np.random.default_rng(10)
    xs = rng.standard_normal(1000)
    rm = RunningMoments()
    for x in xs:
        rm.push(x)
    assert rm.n == 1000
    assert rm.mean == pytest.approx(xs.mean(), rel=1e-12)
    assert rm.variance == pytest.approx(xs.var(ddof=1), rel=1e-10)
    assert rm.stderr == pytest.approx(xs.std(ddof=1) / np.sqrt(1000), rel=1e-10)


def test_running_moments_merge():
    rng = np.random.default_rng(11)
    xs = rng.standard_normal(257)
    whole = RunningMoments()
    for x in xs:
        whole.push(x)
    parts = [RunningMoments() for _ in range(3)]
    for i, x in enumerate(xs):
        parts[i % 3].push(x)
    merged = RunningMoments()
    for p in parts:
        merged.merge(p)
    assert merged.n == whole.n
    assert merged.mean == pytest.approx(whole.mean, rel=1e-12)
    assert merged.variance == pytest.approx(whole.variance, rel=1e-10)
    # vector observations work too
    rows = rng.standard_normal((50, 4))
    vm = RunningMoments()
    for row in rows:
        vm.push(row)
    np.testing.assert_allclose(vm.mean, rows.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(vm.variance, rows.var(axis=0, ddof=1),
                               rtol=1e-10)
