"""Square-root Gaussian filtering: QR factors, point rules and the MSE cycle.

Every point rule reduces a nonlinear transform of a Gaussian belief to a
mean and a *deviation matrix* ``D`` whose outer product ``D D^T`` is the
transformed covariance.  Predict and update steps then only ever stack
deviation matrices and re-triangularise them with :func:`qr_sqrt`, so a
covariance is never formed and then factorised.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_triangular

from .errors import InvalidSpread, NonPositiveInnovation, SingularBasis
from .geodesy import wrap_angle

SQRT3 = np.sqrt(3.0)
UNNORMALISED = "paper"  # plain probabilists' Hermite, H2 = x^2 - 1
ORTHONORMAL = "orthonormal"


@dataclass
class SqrtBelief:
    """Gaussian belief ``N(mean, S S^T)`` with ``S`` lower triangular."""

    mean: np.ndarray
    sqrt_cov: np.ndarray

    @property
    def cov(self) -> np.ndarray:
        return self.sqrt_cov @ self.sqrt_cov.T

    @property
    def n(self) -> int:
        return len(self.mean)

    @classmethod
    def from_cov(cls, mean, P) -> "SqrtBelief":
        return cls(np.asarray(mean, float).copy(), np.linalg.cholesky(np.asarray(P, float)))


def qr_sqrt(U) -> np.ndarray:
    """Lower-triangular ``S`` with ``S S^T = U U^T`` and non-negative diagonal."""
    U = np.asarray(U, dtype=float)
    n, p = U.shape
    R = np.linalg.qr(U.T, mode="r")
    S = np.zeros((n, n))
    S[:, : R.shape[0]] = R.T
    d = np.sign(np.diag(S))
    d[d == 0] = 1.0
    return S * d


def _unwrap_rows(values: np.ndarray, rows: Sequence[int], ref_col: int = 0) -> np.ndarray:
    # express angle rows continuously around a reference column
    if rows:
        r = list(rows)
        ref = values[r, ref_col : ref_col + 1]
        values[r] = ref + wrap_angle(values[r] - ref)
    return values


# --- polynomial chaos ---------------------------------------------------------

@dataclass(frozen=True)
class CollocationSet:
    xi: np.ndarray

    @property
    def n(self) -> int:
        return self.xi.shape[0]


def collocation_points(n: int) -> CollocationSet:
    """``[diag(-sqrt3) | 0 | diag(sqrt3)]``: roots of the cubic Hermite polynomial on each axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eye = np.eye(n)
    return CollocationSet(np.hstack([-SQRT3 * eye, np.zeros((n, 1)), SQRT3 * eye]) + 0.0)  # +0 clears signed zeros


def hermite1(x):
    return x


def hermite2(x, mode: str = ORTHONORMAL):
    h = x * x - 1.0
    return h / np.sqrt(2.0) if mode == ORTHONORMAL else h


@dataclass(frozen=True)
class HermiteBasis:
    """Basis functions (rows) evaluated at the collocation points (columns).

    Row 0 is the constant, rows ``1..n`` hold ``H1`` of each coordinate and rows
    ``n+1..2n`` hold ``H2``.  ``mode="orthonormal"`` scales ``H2`` by
    ``1/sqrt(2)`` so every basis function has unit variance under ``N(0, I)``.
    """

    matrix: np.ndarray
    mode: str
    lu: tuple

    @property
    def n(self) -> int:
        return (self.matrix.shape[0] - 1) // 2


def hermite_basis(cs: CollocationSet, mode: str = ORTHONORMAL) -> HermiteBasis:
    if mode not in (UNNORMALISED, ORTHONORMAL):
        raise ValueError(f"unknown basis mode {mode!r}")
    xi = cs.xi
    M = np.vstack([np.ones((1, xi.shape[1])), hermite1(xi), hermite2(xi, mode)])
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularBasis("Hermite matrix is not invertible")
    return HermiteBasis(M, mode, lu_factor(M.T))


@lru_cache(maxsize=None)
def _basis(n: int, mode: str) -> HermiteBasis:
    return hermite_basis(collocation_points(n), mode)


def fit_coefficients(values, basis: HermiteBasis) -> np.ndarray:
    """Coefficients ``A`` (``d x (2n+1)``) with ``A @ basis.matrix == values``."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("function values must be finite")
    return lu_solve(basis.lu, values.T).T


# --- point rules --------------------------------------------------------------

class PointRule:
    """Deterministic point set with a deviation-matrix reduction."""

    name = "rule"

    def points(self, belief: SqrtBelief) -> np.ndarray:
        raise NotImplementedError

    def reduce(self, belief, pts, values):
        """Return ``(mean, dev_values, dev_state)``."""
        raise NotImplementedError

    def transform(self, belief: SqrtBelief, fun: Callable, angle_rows: Sequence[int] = ()):
        pts = self.points(belief)
        values = _unwrap_rows(np.array(fun(pts), dtype=float), angle_rows, self.ref_col)
        return self.reduce(belief, pts, values)


class PceRule(PointRule):
    """Second-order Hermite chaos without cross terms, ``2n+1`` collocation points."""

    name = "PCKF"
    ref_col = None

    def __init__(self, mode: str = ORTHONORMAL):
        self.mode = mode

    def points(self, belief):
        n = belief.n
        self.ref_col = n
        return belief.mean[:, None] + belief.sqrt_cov @ collocation_points(n).xi

    def reduce(self, belief, pts, values):
        basis = _basis(belief.n, self.mode)
        A = fit_coefficients(values, basis)
        dev_x = np.hstack([belief.sqrt_cov, np.zeros_like(belief.sqrt_cov)])
        return A[:, 0], A[:, 1:], dev_x

    def num_points(self, n):
        return 2 * n + 1


class UkfRule(PointRule):
    """Unscented points ``x +- sqrt(n+kappa) S_i`` plus the centre.

    With a negative centre weight the covariance is taken about the centre
    point instead of the weighted mean, which keeps it positive semidefinite
    and lets it be square-rooted by QR alone.
    """

    name = "UKF"
    ref_col = 0

    def __init__(self, kappa: float | None = None):
        self.kappa = kappa

    def _k(self, n):
        return 3.0 - n if self.kappa is None else self.kappa

    def weights(self, n):
        k = self._k(n)
        if n + k <= 0:
            raise InvalidSpread("n + kappa must be positive")
        return np.r_[k / (n + k), np.full(2 * n, 0.5 / (n + k))]

    def points(self, belief):
        n = belief.n
        c = np.sqrt(n + self._k(n)) if n + self._k(n) > 0 else None
        if c is None:
            raise InvalidSpread("n + kappa must be positive")
        s = c * belief.sqrt_cov
        return np.hstack([belief.mean[:, None], belief.mean[:, None] + s, belief.mean[:, None] - s])

    def reduce(self, belief, pts, values):
        w = self.weights(belief.n)
        mean = values @ w
        if w[0] >= 0:
            sw = np.sqrt(w)
            return mean, (values - mean[:, None]) * sw, (pts - belief.mean[:, None]) * sw
        sw = np.sqrt(w[1:])
        return mean, (values[:, 1:] - values[:, :1]) * sw, (pts[:, 1:] - pts[:, :1]) * sw

    def num_points(self, n):
        return 2 * n + 1


class CkfRule(PointRule):
    """Third-degree spherical-radial cubature: ``x +- sqrt(n) S_i``, equal weights."""

    name = "CKF"
    ref_col = 0

    def weights(self, n):
        return np.full(2 * n, 0.5 / n)

    def points(self, belief):
        s = np.sqrt(belief.n) * belief.sqrt_cov
        return np.hstack([belief.mean[:, None] + s, belief.mean[:, None] - s])

    def reduce(self, belief, pts, values):
        n = belief.n
        mean = values.mean(axis=1)
        sw = np.sqrt(0.5 / n)
        return mean, (values - mean[:, None]) * sw, (pts - belief.mean[:, None]) * sw

    def num_points(self, n):
        return 2 * n


def ukf_points(belief: SqrtBelief, kappa: float | None = None):
    rule = UkfRule(kappa)
    return rule.points(belief), rule.weights(belief.n)


def ckf_points(belief: SqrtBelief):
    rule = CkfRule()
    return rule.points(belief), rule.weights(belief.n)


def make_rule(kind: str, basis: str = ORTHONORMAL, kappa: float | None = None) -> PointRule:
    kind = kind.upper().replace("MC-", "")
    if kind == "PCKF":
        return PceRule(basis)
    if kind == "UKF":
        return UkfRule(kappa)
    if kind == "CKF":
        return CkfRule()
    raise ValueError(f"unknown filter kind {kind!r}")


# --- predict / update ---------------------------------------------------------

def predict(belief: SqrtBelief, f: Callable, sqrt_Q, rule: PointRule,
            angle_rows: Sequence[int] = ()) -> SqrtBelief:
    """Time update: propagate points through ``f`` and re-triangularise."""
    mean, dev, _ = rule.transform(belief, f, angle_rows)
    S = qr_sqrt(np.hstack([dev, np.asarray(sqrt_Q, float)]))
    mean = mean.copy()
    if angle_rows:
        mean[list(angle_rows)] = wrap_angle(mean[list(angle_rows)])
    return SqrtBelief(mean, S)


def pckf_predict(belief, f, Q, mode: str = ORTHONORMAL, angle_rows=()):
    return predict(belief, f, _sqrt_psd(Q), PceRule(mode), angle_rows)


def spkf_predict(belief, f, Q, rule: PointRule, angle_rows=()):
    return predict(belief, f, _sqrt_psd(Q), rule, angle_rows)


def _sqrt_psd(Q):
    Q = np.asarray(Q, float)
    if np.allclose(Q, np.diag(np.diag(Q))):
        return np.diag(np.sqrt(np.clip(np.diag(Q), 0.0, None)))
    return qr_sqrt(np.linalg.cholesky(Q))


@dataclass
class MeasurementStats:
    """Predicted measurement and deviation matrices at the prior points."""

    y_hat: np.ndarray
    dev_y: np.ndarray
    dev_x: np.ndarray

    @property
    def P_xy(self):
        return self.dev_x @ self.dev_y.T


def measurement_stats(prior: SqrtBelief, h: Callable, rule: PointRule,
                      angle_rows: Sequence[int] = ()) -> MeasurementStats:
    y_hat, dev_y, dev_x = rule.transform(prior, h, angle_rows)
    y_hat = y_hat.copy()
    if angle_rows:
        y_hat[list(angle_rows)] = wrap_angle(y_hat[list(angle_rows)])
    return MeasurementStats(y_hat, dev_y, dev_x)


def innovation(y, y_hat, angle_rows: Sequence[int] = ()) -> np.ndarray:
    nu = np.asarray(y, float) - y_hat
    if angle_rows:
        nu[list(angle_rows)] = wrap_angle(nu[list(angle_rows)])
    return nu


def gain(stats: MeasurementStats, S_R) -> np.ndarray:
    """``K = P_xy P_yy^-1`` via the triangular factor of ``P_yy``."""
    S_yy = qr_sqrt(np.hstack([stats.dev_y, S_R]))
    d = np.abs(np.diag(S_yy))
    if d.min() <= 1e-14 * max(d.max(), 1e-300):
        raise NonPositiveInnovation("innovation covariance lost positive definiteness")
    tmp = solve_triangular(S_yy, stats.P_xy.T, lower=True, check_finite=False)
    return solve_triangular(S_yy, tmp, lower=True, trans="T", check_finite=False).T


def update(prior: SqrtBelief, y, h: Callable, S_R, rule: PointRule,
           meas_angles: Sequence[int] = (), state_angles: Sequence[int] = (),
           stats: MeasurementStats | None = None) -> SqrtBelief:
    """Standard minimum-MSE measurement update in square-root form."""
    S_R = _as_sqrt(S_R)
    if stats is None:
        stats = measurement_stats(prior, h, rule, meas_angles)
    K = gain(stats, S_R)
    mean = prior.mean + K @ innovation(y, stats.y_hat, meas_angles)
    if state_angles:
        mean[list(state_angles)] = wrap_angle(mean[list(state_angles)])
    S = qr_sqrt(np.hstack([stats.dev_x - K @ stats.dev_y, K @ S_R]))
    return SqrtBelief(mean, S)


R_FLOOR = 1e-15


def _as_sqrt(S_R):
    # a vector is read as per-channel standard deviations; variances are
    # floored so a zero-noise channel cannot make P_yy singular
    S_R = np.asarray(S_R, float)
    if S_R.ndim == 1:
        return np.diag(np.sqrt(np.maximum(S_R * S_R, R_FLOOR)))
    return S_R


def pckf_update(prior, y, h, S_R, mode: str = ORTHONORMAL, **kw):
    return update(prior, y, h, S_R, PceRule(mode), **kw)


def spkf_update(prior, y, h, S_R, rule: PointRule, **kw):
    return update(prior, y, h, S_R, rule, **kw)
