import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcnav.errors import InvalidSpread, NonPositiveInnovation
from mcnav.filters import (
    ORTHONORMAL,
    UNNORMALISED,
    CkfRule,
    PceRule,
    SqrtBelief,
    UkfRule,
    ckf_points,
    collocation_points,
    fit_coefficients,
    hermite1,
    hermite2,
    hermite_basis,
    make_rule,
    measurement_stats,
    pckf_predict,
    pckf_update,
    predict,
    qr_sqrt,
    spkf_predict,
    spkf_update,
    ukf_points,
)

RULES = {
    "UKF": UkfRule(),
    "CKF": CkfRule(),
    "PCKF": PceRule(ORTHONORMAL),
}


def random_belief(rng, n, diag=False):
    A = rng.normal(size=(n, n))
    P = np.diag(rng.uniform(0.2, 2.0, n)) if diag else A @ A.T + 0.5 * np.eye(n)
    return SqrtBelief.from_cov(rng.normal(size=n), P)


# --- square roots ---------------------------------------------------------------

def test_qr_sqrt_identity():
    np.testing.assert_allclose(qr_sqrt(np.eye(4)), np.eye(4), atol=1e-15)


def test_qr_sqrt_returns_triangular_input():
    S0 = np.tril(np.random.default_rng(0).normal(size=(5, 5)))
    S0[np.diag_indices(5)] = np.abs(S0[np.diag_indices(5)]) + 0.1
    np.testing.assert_allclose(qr_sqrt(np.hstack([S0, np.zeros((5, 3))])), S0, atol=1e-12)


def test_qr_sqrt_random_wide():
    rng = np.random.default_rng(1)
    for _ in range(20):
        U = rng.normal(size=(9, 19))
        S = qr_sqrt(U)
        P = U @ U.T
        assert np.linalg.norm(S @ S.T - P) / np.linalg.norm(P) < 1e-12
        assert np.all(np.diag(S) >= 0)
        assert np.allclose(S, np.tril(S))


def test_qr_sqrt_rank_deficient():
    U = np.zeros((3, 2))
    U[0, 0] = 1.0
    S = qr_sqrt(U)
    assert S.shape == (3, 3)
    np.testing.assert_allclose(S @ S.T, U @ U.T, atol=1e-15)


# --- collocation and Hermite basis ------------------------------------------------

def test_collocation_points_scalar():
    np.testing.assert_allclose(collocation_points(1).xi, [[-math.sqrt(3), 0.0, math.sqrt(3)]])


def test_collocation_points_shape_and_sparsity():
    xi = collocation_points(9).xi
    assert xi.shape == (9, 19)
    assert np.all(np.count_nonzero(xi, axis=0) <= 1)
    with pytest.raises(ValueError):
        collocation_points(0)


def test_hermite_values():
    assert hermite1(0.0) == 0.0
    assert hermite2(0.0, UNNORMALISED) == -1.0
    assert hermite2(math.sqrt(3), UNNORMALISED) == pytest.approx(2.0, abs=1e-15)
    assert hermite2(math.sqrt(3), ORTHONORMAL) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_scalar_basis_invertible():
    for mode in (UNNORMALISED, ORTHONORMAL):
        M = hermite_basis(collocation_points(1), mode).matrix
        assert M.shape == (3, 3)
        assert abs(np.linalg.det(M)) > 1.0


def test_basis_mode_validation():
    with pytest.raises(ValueError):
        hermite_basis(collocation_points(2), "legendre")


def _fit_scalar(fun, mode):
    basis = hermite_basis(collocation_points(1), mode)
    xi = collocation_points(1).xi
    return fit_coefficients(fun(xi), basis)[0]


def test_fit_constant():
    a = _fit_scalar(lambda x: np.full_like(x, 7.5), ORTHONORMAL)
    np.testing.assert_allclose(a, [7.5, 0, 0], atol=1e-14)


def test_fit_linear():
    np.testing.assert_allclose(_fit_scalar(lambda x: 3 * x, UNNORMALISED), [0, 3, 0], atol=1e-14)


@pytest.mark.parametrize("mode, a2", [(UNNORMALISED, 1.0), (ORTHONORMAL, math.sqrt(2))])
def test_fit_square(mode, a2):
    np.testing.assert_allclose(_fit_scalar(lambda x: x * x, mode), [1, 0, a2], atol=1e-14)


@given(st.integers(1, 9), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_fit_interpolates(n, seed):
    rng = np.random.default_rng(seed)
    basis = hermite_basis(collocation_points(n), ORTHONORMAL)
    values = rng.normal(size=(3, 2 * n + 1))
    A = fit_coefficients(values, basis)
    np.testing.assert_allclose(A @ basis.matrix, values, atol=1e-10)


def test_fit_rejects_nan():
    basis = hermite_basis(collocation_points(1))
    with pytest.raises(ValueError):
        fit_coefficients(np.array([[0.0, np.nan, 1.0]]), basis)


# --- predict ----------------------------------------------------------------------

@pytest.mark.parametrize("kind", list(RULES))
def test_predict_identity(kind):
    b = random_belief(np.random.default_rng(2), 4)
    out = predict(b, lambda X: X, np.zeros((4, 4)), RULES[kind])
    np.testing.assert_allclose(out.mean, b.mean, atol=1e-12)
    np.testing.assert_allclose(out.cov, b.cov, atol=1e-12)


@pytest.mark.parametrize("rule", [UkfRule(), CkfRule(), PceRule(UNNORMALISED), PceRule(ORTHONORMAL)])
def test_predict_linear(rule):
    rng = np.random.default_rng(3)
    b = random_belief(rng, 5)
    F, c = rng.normal(size=(5, 5)), rng.normal(size=5)
    Q = np.diag(rng.uniform(0.01, 0.1, 5))
    out = spkf_predict(b, lambda X: F @ X + c[:, None], Q, rule)
    np.testing.assert_allclose(out.mean, F @ b.mean + c, atol=1e-10)
    np.testing.assert_allclose(out.cov, F @ b.cov @ F.T + Q, atol=1e-10)


def test_pce_predict_chi_square():
    b = SqrtBelief(np.zeros(1), np.eye(1))
    out = pckf_predict(b, lambda X: X * X, np.zeros((1, 1)))
    assert out.mean[0] == pytest.approx(1.0, abs=1e-12)
    assert out.cov[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_pce_unnormalised_basis_quadratic_variance():
    # the unnormalised basis counts the H2 coefficient with unit weight
    b = SqrtBelief(np.zeros(1), np.eye(1))
    out = pckf_predict(b, lambda X: X * X, np.zeros((1, 1)), mode=UNNORMALISED)
    assert out.mean[0] == pytest.approx(1.0, abs=1e-12)
    assert out.cov[0, 0] == pytest.approx(1.0, abs=1e-12)


def additive_quadratic_moments(mu, p, c, L, q):
    """Mean and covariance of ``c + L x + q x^2`` for independent ``x_i ~ N(mu_i, p_i)``."""
    mean = c + L @ mu + q @ (mu * mu + p)
    cov = np.zeros((len(c), len(c)))
    for i in range(len(mu)):
        l, s = L[:, i], q[:, i]
        cov += np.outer(l, l) * p[i]
        cov += (np.outer(l, s) + np.outer(s, l)) * 2 * mu[i] * p[i]
        cov += np.outer(s, s) * (4 * mu[i] ** 2 * p[i] + 2 * p[i] ** 2)
    return mean, cov


@pytest.mark.parametrize("n", [1, 3, 9])
def test_pce_additive_quadratic_exact(n):
    rng = np.random.default_rng(10 + n)
    d = 4
    mu, p = rng.normal(size=n), rng.uniform(0.1, 2.0, n)
    c, L, q = rng.normal(size=d), rng.normal(size=(d, n)), rng.normal(size=(d, n))
    b = SqrtBelief(mu, np.diag(np.sqrt(p)))
    out = pckf_predict(b, lambda X: c[:, None] + L @ X + q @ (X * X), np.zeros((d, d)))
    m_ref, P_ref = additive_quadratic_moments(mu, p, c, L, q)
    np.testing.assert_allclose(out.mean, m_ref, atol=1e-9)
    np.testing.assert_allclose(out.cov, P_ref, atol=1e-9)


# --- sigma points -----------------------------------------------------------------

def test_ckf_points_and_weights():
    b = random_belief(np.random.default_rng(4), 2)
    pts, w = ckf_points(b)
    assert pts.shape == (2, 4)
    np.testing.assert_allclose(w, 0.25)


@pytest.mark.parametrize("make", [ckf_points, ukf_points, lambda b: ukf_points(b, kappa=1.0)])
def test_points_reproduce_moments(make):
    b = random_belief(np.random.default_rng(5), 6)
    pts, w = make(b)
    mean = pts @ w
    dev = pts - mean[:, None]
    np.testing.assert_allclose(mean, b.mean, atol=1e-12)
    np.testing.assert_allclose((dev * w) @ dev.T, b.cov, atol=1e-12)


def test_ukf_invalid_spread():
    b = random_belief(np.random.default_rng(6), 3)
    with pytest.raises(InvalidSpread):
        UkfRule(kappa=-3.0).points(b)
    with pytest.raises(InvalidSpread):
        UkfRule(kappa=-4.0).weights(3)


def test_ukf_default_kappa_points_match_collocation():
    b = random_belief(np.random.default_rng(7), 9)
    pts = UkfRule().points(b)
    pce = PceRule().points(b)
    np.testing.assert_allclose(np.sort(pts, axis=1), np.sort(pce, axis=1), atol=1e-12)


def test_make_rule():
    assert isinstance(make_rule("MC-PCKF", UNNORMALISED), PceRule)
    assert make_rule("mc-pckf", UNNORMALISED).mode == UNNORMALISED
    assert isinstance(make_rule("UKF"), UkfRule)
    assert isinstance(make_rule("CKF"), CkfRule)
    with pytest.raises(ValueError):
        make_rule("EKF")


# --- update -----------------------------------------------------------------------

def kf_update(m, P, y, H, R):
    """Textbook covariance-form Kalman update."""
    Pyy = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(Pyy)
    return m + K @ (y - H @ m), P - K @ Pyy @ K.T


@pytest.mark.parametrize("kind", list(RULES))
def test_update_matches_kalman(kind):
    rng = np.random.default_rng(8)
    b = random_belief(rng, 4)
    H = rng.normal(size=(3, 4))
    sR = rng.uniform(0.2, 1.0, 3)
    y = rng.normal(size=3)
    out = spkf_update(b, y, lambda X: H @ X, sR, RULES[kind])
    m, P = kf_update(b.mean, b.cov, y, H, np.diag(sR**2))
    np.testing.assert_allclose(out.mean, m, atol=1e-8)
    np.testing.assert_allclose(out.cov, P, atol=1e-8)


@pytest.mark.parametrize("kind", list(RULES))
def test_uninformative_measurement(kind):
    b = random_belief(np.random.default_rng(9), 3)
    out = spkf_update(b, np.array([5.0]), lambda X: X[:1], np.array([1e6]), RULES[kind])
    np.testing.assert_allclose(out.mean, b.mean, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(out.cov, b.cov, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("kind", list(RULES))
def test_perfect_measurement(kind):
    b = random_belief(np.random.default_rng(10), 3)
    out = spkf_update(b, np.array([2.5]), lambda X: X[1:2], np.array([1e-6]), RULES[kind])
    assert out.mean[1] == pytest.approx(2.5, abs=1e-6)


def test_r_floor_keeps_gain_finite():
    b = SqrtBelief(np.zeros(2), np.diag([1.0, 0.0]))
    out = pckf_update(b, np.array([0.0, 0.0]), lambda X: X, np.zeros(2))
    assert np.all(np.isfinite(out.sqrt_cov))


def test_singular_innovation():
    b = SqrtBelief(np.zeros(2), np.diag([1.0, 0.0]))
    with pytest.raises(NonPositiveInnovation):
        spkf_update(b, np.zeros(2), lambda X: X, np.zeros((2, 2)), CkfRule())


def test_measurement_stats_cross_covariance():
    rng = np.random.default_rng(11)
    b = random_belief(rng, 4)
    H = rng.normal(size=(2, 4))
    for rule in RULES.values():
        st_ = measurement_stats(b, lambda X: H @ X, rule)
        np.testing.assert_allclose(st_.P_xy, b.cov @ H.T, atol=1e-12)
        np.testing.assert_allclose(st_.y_hat, H @ b.mean, atol=1e-12)


def test_angle_innovation_is_wrapped():
    b = SqrtBelief(np.array([math.pi - 0.01]), np.eye(1) * 0.01)
    out = spkf_update(b, np.array([-math.pi + 0.01]), lambda X: X, np.array([0.01]), CkfRule(),
                      meas_angles=(0,), state_angles=(0,))
    # the measurement sits 0.02 rad away across the cut, not 2 pi - 0.02
    d = math.remainder(out.mean[0] - b.mean[0], 2 * math.pi)
    assert d == pytest.approx(0.01, abs=1e-9)


def test_linear_rules_agree():
    rng = np.random.default_rng(12)
    b = random_belief(rng, 5)
    F = np.eye(5) + 0.1 * rng.normal(size=(5, 5))
    Q = 0.01 * np.eye(5)
    outs = [spkf_predict(b, lambda X: F @ X, Q, r) for r in RULES.values()]
    for o in outs[1:]:
        np.testing.assert_allclose(o.mean, outs[0].mean, atol=1e-9)
        np.testing.assert_allclose(o.cov, outs[0].cov, atol=1e-9)


@given(st.integers(0, 2**31), st.sampled_from(list(RULES)))
@settings(max_examples=40, deadline=None)
def test_posterior_factor_is_valid(seed, kind):
    rng = np.random.default_rng(seed)
    b = random_belief(rng, 4)
    out = spkf_update(b, rng.normal(size=2), lambda X: np.vstack([np.sin(X[0]), X[1] * X[2]]),
                      rng.uniform(0.1, 1.0, 2), RULES[kind])
    S = out.sqrt_cov
    assert np.all(np.isfinite(S))
    assert np.all(np.diag(S) >= 0)
    assert np.allclose(S, np.tril(S))
