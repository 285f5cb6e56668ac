import numpy as np
import pytest
from hypothesis import given, strategies as st

from specden.chebyshev import (
    cheb_scalar,
    cheb_scan,
    cheb_apply,
    cheb_moments,
    cheb_apply_block,
    VarianceBoundParams,
    bound_second_moment,
    alpha_from_noise,
)
from specden.operators import DenseOperator, NoiseModel, with_noise


def cheb_matrix_exact(a, k):
    """Oracle: T_k(A) through the eigendecomposition, cos(k arccos(lam))."""
    w, v = np.linalg.eigh(a)
    return (v * np.cos(k * np.arccos(np.clip(w, -1.0, 1.0)))) @ v.T


@given(st.integers(min_value=0, max_value=40),
       st.floats(min_value=-1.0, max_value=1.0))
def test_cheb_scalar_cos_identity(k, a):
    assert cheb_scalar(k, a) == pytest.approx(np.cos(k * np.arccos(a)), abs=1e-9)


def test_cheb_scalar_vectorized():
    xs = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(cheb_scalar(3, xs), 4 * xs**3 - 3 * xs,
                               atol=1e-12)
    with pytest.raises(ValueError):
        cheb_scalar(-1, 0.5)


def test_scan_matches_matrix_polynomial():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((8, 8))
    a = (a + a.T) / 2
    a /= 1.1 * np.linalg.norm(a, 2)
    op = DenseOperator(a)
    x = rng.standard_normal(8)
    for k, v in cheb_scan(op, x, 12):
        np.testing.assert_allclose(v, cheb_matrix_exact(a, k) @ x,
                                   rtol=1e-9, atol=1e-12)


def test_cheb_apply_last_level():
    rng = np.random.default_rng(1)
    a = np.diag([0.3, -0.7, 0.1])
    op = DenseOperator(a)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(cheb_apply(op, x, 5),
                               cheb_scalar(5, np.diag(a)) * x, atol=1e-12)


def test_randomized_recursion_unbiased():
    # E[v_k] = T_k(A) x even though every level uses an independent draw
    rng = np.random.default_rng(2)
    a = rng.standard_normal((5, 5))
    a = (a + a.T) / 2
    a /= 1.2 * np.linalg.norm(a, 2)
    op = with_noise(a, NoiseModel.additive(0.02))
    x = rng.standard_normal(5)
    k = 3
    n = 20000
    acc = np.zeros(5)
    sq = np.zeros(5)
    for _ in range(n):
        v = cheb_apply(op, x, k, rng)
        acc += v
        sq += v * v
    mean = acc / n
    target = cheb_matrix_exact(a, k) @ x
    stderr = np.sqrt((sq / n - mean**2) / n)
    assert np.all(np.abs(mean - target) <= 5.0 * stderr)


def test_moments_match_scan():
    rng = np.random.default_rng(3)
    a = np.diag([0.5, -0.25])
    op = with_noise(a, NoiseModel.multiplicative(0.1))
    x = np.array([1.0, 2.0])
    moments, overflow = cheb_moments(op, x, 6, np.random.default_rng(4))
    scanned = [x @ v for _, v in cheb_scan(op, x, 6, np.random.default_rng(4))]
    np.testing.assert_allclose(moments, scanned, rtol=1e-12)
    assert overflow is None


def test_overflow_flag():
    # norm > 1 makes the recursion diverge geometrically; the flag trips but
    # the moment vector still comes back full length
    op = DenseOperator(np.diag([1.5, 1.5]))
    x = np.ones(2)
    moments, overflow = cheb_moments(op, x, 300)
    assert overflow is not None
    assert 0 < overflow <= 300
    assert len(moments) == 301
    assert np.all(np.isfinite(moments[:overflow]))
    # tighter explicit limit trips earlier
    _, early = cheb_moments(op, x, 300, overflow_limit=1e3)
    assert early < overflow


def test_block_recursion_identity_gives_matrices():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((6, 6))
    a = (a + a.T) / 2
    a /= 1.3 * np.linalg.norm(a, 2)
    op = DenseOperator(a)
    for k, V in cheb_apply_block(op, np.eye(6), 8):
        np.testing.assert_allclose(V, cheb_matrix_exact(a, k),
                                   rtol=1e-9, atol=1e-12)


def test_block_recursion_consistent_with_vector_path():
    # same seed => the noisy block recursion reproduces the vector recursion
    a = np.diag([0.6, -0.4, 0.2])
    op = with_noise(a, NoiseModel.additive(0.05))
    x = np.array([1.0, -1.0, 2.0])
    X = x[:, None]
    block = [V[:, 0] for _, V in cheb_apply_block(op, X, 5,
                                                  np.random.default_rng(6))]
    vecs = [v for _, v in cheb_scan(op, x, 5, np.random.default_rng(6))]
    for bv, vv in zip(block, vecs):
        np.testing.assert_allclose(bv, vv, rtol=1e-12)


def test_bound_params_validation():
    with pytest.raises(ValueError):
        VarianceBoundParams(alpha=0.9, dim=4)
    params = VarianceBoundParams(alpha=2.0, dim=4)
    np.testing.assert_allclose(bound_second_moment(params, [0, 1, 3]),
                               [4.0, 8.0, 32.0])


def test_alpha_from_noise_exact_operator():
    # deterministic operator: alpha = 4 s^2 + 2 s + 1 with s the exact norm
    op = DenseOperator(np.diag([0.5, -0.25, 0.1]))
    alpha = alpha_from_noise(op, 3, np.random.default_rng(7))
    assert alpha == pytest.approx(4 * 0.25 + 2 * 0.5 + 1.0, rel=1e-12)


def test_alpha_bounds_measured_second_moment():
    # empirical E||v_k||^2 stays under dim * alpha^k for a noisy operator
    rng = np.random.default_rng(8)
    d = 8
    a = rng.standard_normal((d, d))
    a = (a + a.T) / 2
    a /= 1.5 * np.linalg.norm(a, 2)
    op = with_noise(a, NoiseModel.multiplicative(0.2))
    alpha = alpha_from_noise(op, 200, rng)
    params = VarianceBoundParams(alpha=alpha, dim=d)
    k_max = 10
    n = 500
    acc = np.zeros(k_max + 1)
    for _ in range(n):
        x = rng.standard_normal(d)
        for k, v in cheb_scan(op, x, k_max, rng):
            acc[k] += v @ v
    measured = acc / n
    ks = np.arange(k_max + 1)
    assert np.all(measured <= bound_second_moment(params, ks) * d)
