import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcnav.errors import SingularFactor
from mcnav.filters import CkfRule, PceRule, SqrtBelief, UkfRule, spkf_update
from mcnav.mcc import (
    CorrentropyWeights,
    MccConfig,
    correntropy_weights,
    gaussian_kernel,
    mc_update,
    modified_sqrt_factors,
    weighted_errors,
)

RULES = [UkfRule(), CkfRule(), PceRule()]


def scalar_belief(m=0.0, s=1.0):
    return SqrtBelief(np.array([m]), np.array([[s]]))


# --- kernel and weights -----------------------------------------------------------

def test_kernel_values():
    assert gaussian_kernel(0.0, 1.0) == 1.0
    assert gaussian_kernel(2.0, 2.0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert gaussian_kernel(-3.0, 1.5) == gaussian_kernel(3.0, 1.5)
    with pytest.raises(ValueError):
        gaussian_kernel(1.0, 0.0)


def test_config_validation():
    for bad in (dict(sigma=0), dict(epsilon=-1), dict(i_max=0), dict(pi_floor=0), dict(pi_floor=2)):
        with pytest.raises(ValueError):
            MccConfig(**bad)


def test_weighted_errors_zero_at_prediction():
    b = SqrtBelief(np.array([1.0, 2.0]), np.eye(2))
    e = weighted_errors(b.mean, b, np.array([3.0]), np.array([3.0]), np.array([1.0]))
    np.testing.assert_array_equal(e, 0.0)


def test_weighted_errors_identity_weighting():
    b = SqrtBelief(np.zeros(2), np.eye(2))
    e = weighted_errors(np.array([0.5, -1.0]), b, np.array([2.0]), np.array([1.5]), np.eye(1))
    np.testing.assert_allclose(e, [-0.5, 1.0, 0.5])


def test_weighted_errors_scalar_solve():
    e = weighted_errors(np.array([4.0]), scalar_belief(0.0, 2.0), np.array([0.0]), np.array([0.0]),
                        np.array([1.0]))
    assert e[0] == pytest.approx(-2.0)


def test_weighted_errors_wraps_angles():
    b = SqrtBelief(np.array([math.pi - 0.1]), np.eye(1))
    e = weighted_errors(np.array([-math.pi + 0.1]), b, np.array([math.pi - 0.05]),
                        np.array([-math.pi + 0.05]), np.array([1.0]), (0,), (0,))
    np.testing.assert_allclose(e, [-0.2, -0.1], atol=1e-12)


def test_weighted_errors_singular_factor():
    b = SqrtBelief(np.zeros(2), np.diag([1.0, 0.0]))
    with pytest.raises(SingularFactor):
        weighted_errors(np.ones(2), b, np.zeros(1), np.zeros(1), np.ones(1))


def test_correntropy_weights_cases():
    cfg = MccConfig(sigma=2.0)
    w = correntropy_weights(np.zeros(5), cfg, 3)
    assert w.pi_P.shape == (3,) and w.pi_R.shape == (2,)
    assert np.all(w.pi_P == 1) and np.all(w.pi_R == 1)
    big = correntropy_weights(np.full(4, 1e3), MccConfig(sigma=1e8), 2)
    assert np.all(big.pi_P >= 1 - 1e-8) and np.all(big.pi_R >= 1 - 1e-8)
    floored = correntropy_weights(np.array([20.0]), cfg, 0)
    assert floored.pi_R[0] == cfg.pi_floor


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.1, 10))
def test_weights_never_increase_with_residual(a, extra, sigma):
    cfg = MccConfig(sigma=sigma)
    w1 = correntropy_weights(np.array([0.3, a]), cfg, 1).pi_R[0]
    w2 = correntropy_weights(np.array([0.3, a + extra]), cfg, 1).pi_R[0]
    assert w2 <= w1


def test_modified_factors():
    one = CorrentropyWeights(np.ones(1), np.ones(1))
    S, R = modified_sqrt_factors(np.eye(1), np.eye(1), one)
    np.testing.assert_array_equal(S, np.eye(1))
    np.testing.assert_array_equal(R, np.eye(1))
    S, _ = modified_sqrt_factors(np.eye(1), np.eye(1), CorrentropyWeights(np.array([0.25]), np.ones(1)))
    assert S[0, 0] == 2.0 and S[0, 0] ** 2 == 4.0


def test_modified_factor_product():
    rng = np.random.default_rng(0)
    S = np.tril(rng.normal(size=(9, 9)))
    SR = np.tril(rng.normal(size=(9, 9)))
    w = CorrentropyWeights(rng.uniform(0.01, 1, 9), rng.uniform(0.01, 1, 9))
    Sb, Rb = modified_sqrt_factors(S, SR, w)
    assert np.linalg.norm(Sb @ Sb.T - S @ np.diag(1 / w.pi_P) @ S.T) < 1e-12 * np.linalg.norm(Sb @ Sb.T)
    assert np.allclose(Rb @ Rb.T, SR @ np.diag(1 / w.pi_R) @ SR.T, rtol=1e-12, atol=0)
    assert np.allclose(Sb, np.tril(Sb))


# --- the fixed-point update -------------------------------------------------------

def scalar_fpi(m, p, y, r, sigma, eps, i_max):
    """Brute-force scalar fixed point for ``h(x) = x`` written out by hand."""
    x = m + p / (p + r) * (y - m)
    for _ in range(i_max):
        e_p = (x - m) / math.sqrt(p)
        e_r = (y - x) / math.sqrt(r)
        pi_p = math.exp(-e_p * e_p / (2 * sigma * sigma))
        pi_r = math.exp(-e_r * e_r / (2 * sigma * sigma))
        r_bar = r / pi_r
        k = p / (p + r_bar)
        x_new = m + k * (y - m)
        stop = abs(x_new - x) <= eps * abs(x)
        x = x_new
        if stop:
            break
    p_post = p / pi_p - k * (p + r_bar) * k
    return x, p_post


@pytest.mark.parametrize("rule", RULES)
def test_scalar_oracle(rule):
    cfg = MccConfig(sigma=2.0, epsilon=1e-13, i_max=200)
    res = mc_update(scalar_belief(), np.array([10.0]), lambda X: X, np.array([1.0]), rule, cfg)
    x_ref, p_ref = scalar_fpi(0.0, 1.0, 10.0, 1.0, 2.0, 1e-13, 200)
    assert res.converged
    assert res.belief.mean[0] == pytest.approx(x_ref, abs=1e-10)
    assert res.belief.cov[0, 0] == pytest.approx(p_ref, abs=1e-10)
    # the outlier is down-weighted relative to the MSE answer of 5
    assert abs(res.belief.mean[0]) < 5.0


def test_scalar_oracle_frozen_value():
    # independent fixed point value, computed once with the scalar oracle above
    x_ref, _ = scalar_fpi(0.0, 1.0, 10.0, 1.0, 2.0, 1e-13, 200)
    assert x_ref == pytest.approx(3.7266e-05, rel=1e-3)


def test_scalar_oracle_moderate_residual():
    cfg = MccConfig(sigma=2.0, epsilon=1e-13, i_max=200)
    res = mc_update(scalar_belief(1.0, 0.7), np.array([2.2]), lambda X: X, np.array([0.5]), PceRule(), cfg)
    x_ref, p_ref = scalar_fpi(1.0, 0.49, 2.2, 0.25, 2.0, 1e-13, 200)
    assert res.belief.mean[0] == pytest.approx(x_ref, abs=1e-10)
    assert res.belief.cov[0, 0] == pytest.approx(p_ref, abs=1e-10)


@pytest.mark.parametrize("rule", RULES)
def test_large_bandwidth_recovers_mse(rule):
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    b = SqrtBelief.from_cov(rng.normal(size=4), A @ A.T + np.eye(4))
    h = lambda X: np.vstack([np.sin(X[0]) + X[1], X[2] * X[3], X[3]])
    y, sR = rng.normal(size=3), np.array([0.5, 0.3, 0.8])
    res = mc_update(b, y, h, sR, rule, MccConfig(sigma=1e8))
    ref = spkf_update(b, y, h, sR, rule)
    np.testing.assert_allclose(res.belief.mean, ref.mean, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(res.belief.cov, ref.cov, rtol=1e-8, atol=1e-12)


def test_zero_innovation_single_iteration():
    b = SqrtBelief(np.array([1.0, -2.0]), np.diag([0.5, 2.0]))
    H = np.array([[1.0, 1.0]])
    res = mc_update(b, H @ b.mean, lambda X: H @ X, np.array([0.3]), CkfRule(), MccConfig())
    assert res.iterations == 1 and res.converged
    np.testing.assert_allclose(res.belief.mean, b.mean, atol=1e-15)


def test_iteration_cap_flags_nonconvergence():
    cfg = MccConfig(sigma=2.0, epsilon=1e-15, i_max=1)
    res = mc_update(scalar_belief(), np.array([10.0]), lambda X: X, np.array([1.0]), PceRule(), cfg)
    assert res.iterations == 1 and not res.converged


def test_outlier_channel_pulls_less():
    b = SqrtBelief(np.zeros(2), np.eye(2))
    y = np.array([0.5, 8.0])
    res = mc_update(b, y, lambda X: X, np.ones(2), PceRule(), MccConfig(sigma=2.0))
    mse = spkf_update(b, y, lambda X: X, np.ones(2), PceRule())
    assert abs(res.belief.mean[1]) < 0.1 * abs(mse.mean[1])
    assert res.belief.mean[0] == pytest.approx(mse.mean[0], rel=0.1)


def test_deterministic():
    b = SqrtBelief(np.zeros(3), np.eye(3))
    y = np.array([0.1, 4.0, -2.0])
    a = mc_update(b, y, lambda X: X, np.ones(3), UkfRule(), MccConfig())
    c = mc_update(b, y, lambda X: X, np.ones(3), UkfRule(), MccConfig())
    assert np.array_equal(a.belief.mean, c.belief.mean)
    assert np.array_equal(a.belief.sqrt_cov, c.belief.sqrt_cov)


@given(st.integers(0, 2**31), st.floats(0.5, 5.0))
@settings(max_examples=40, deadline=None)
def test_posterior_factor_valid(seed, sigma):
    rng = np.random.default_rng(seed)
    b = SqrtBelief.from_cov(rng.normal(size=3), np.diag(rng.uniform(0.1, 2, 3)))
    y = rng.standard_t(1.5, size=3) * 3
    res = mc_update(b, y, lambda X: X, rng.uniform(0.2, 1, 3), PceRule(), MccConfig(sigma=sigma))
    S = res.belief.sqrt_cov
    assert np.all(np.isfinite(S)) and np.all(np.diag(S) >= 0)
