"""Maximum-correntropy measurement update by fixed-point iteration.

The update reweights the prior and measurement covariances channel by channel
with a Gaussian kernel of the whitened residuals, so that a channel hit by an
impulsive error sees its noise inflated and pulls the estimate less.  Any
:class:`~mcnav.filters.PointRule` can supply the measurement statistics,
which gives the MC-UKF, MC-CKF and MC-PCKF variants from one routine.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import SingularFactor
from .filters import (
    MeasurementStats,
    PointRule,
    SqrtBelief,
    _as_sqrt,
    gain,
    innovation,
    measurement_stats,
    qr_sqrt,
)
from .geodesy import wrap_angle


@dataclass(frozen=True)
class MccConfig:
    """Kernel bandwidth and fixed-point stopping rule.

    Parameters
    ----------
    sigma : float
        Kernel bandwidth in whitened-error units.
    epsilon : float
        Stop once ``|x_{i+1} - x_i| / |x_i|`` falls to this value.
    i_max : int
        Iteration cap.
    pi_floor : float
        Smallest kernel weight, keeps the inflated covariances finite.
    """

    sigma: float = 2.0
    epsilon: float = 1e-6
    i_max: int = 20
    pi_floor: float = 1e-12

    def __post_init__(self):
        if not self.sigma > 0 or not self.epsilon > 0:
            raise ValueError("sigma and epsilon must be positive")
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if not 0 < self.pi_floor <= 1:
            raise ValueError("pi_floor must lie in (0, 1]")


@dataclass(frozen=True)
class CorrentropyWeights:
    pi_P: np.ndarray
    pi_R: np.ndarray


@dataclass
class MccResult:
    belief: SqrtBelief
    iterations: int
    converged: bool


def gaussian_kernel(e, sigma: float):
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return np.exp(-np.square(e) / (2.0 * sigma * sigma))


def _tri_solve(S, r):
    d = np.abs(np.diag(S))
    if d.min() <= 1e-300 or d.min() <= 1e-14 * d.max():
        raise SingularFactor("square-root factor is singular")
    return solve_triangular(S, r, lower=True, check_finite=False)


def weighted_errors(x_candidate, prior: SqrtBelief, y, y_pred, S_R,
                    state_angles: Sequence[int] = (), meas_angles: Sequence[int] = ()) -> np.ndarray:
    """Whitened state and measurement residuals, stacked ``(n + m,)``."""
    dx = np.asarray(x_candidate, float) - prior.mean
    if state_angles:
        dx[list(state_angles)] = wrap_angle(dx[list(state_angles)])
    dy = innovation(y, np.asarray(y_pred, float), meas_angles)
    return np.concatenate([-_tri_solve(prior.sqrt_cov, dx), _tri_solve(_as_sqrt(S_R), dy)])


def correntropy_weights(errors, cfg: MccConfig, n: int) -> CorrentropyWeights:
    """Kernel value per channel, the first ``n`` for the state."""
    pi = np.maximum(gaussian_kernel(np.asarray(errors, float), cfg.sigma), cfg.pi_floor)
    return CorrentropyWeights(pi[:n], pi[n:])


def modified_sqrt_factors(S_prior, S_R, w: CorrentropyWeights):
    """Column scaling ``S diag(pi^-1/2)``, whose product is ``S Pi^-1 S^T``."""
    return np.asarray(S_prior) / np.sqrt(w.pi_P), _as_sqrt(S_R) / np.sqrt(w.pi_R)


def _rel_change(new, old):
    d = np.linalg.norm(new - old)
    nrm = np.linalg.norm(old)
    return d / nrm if nrm > 0 else d


def mc_update(prior: SqrtBelief, y, h: Callable, S_R, rule: PointRule, cfg: MccConfig,
              meas_angles: Sequence[int] = (), state_angles: Sequence[int] = (),
              stats: MeasurementStats | None = None) -> MccResult:
    """Maximum-correntropy update.

    Measurement statistics come from the unmodified prior and stay fixed; the
    iteration only changes the kernel weights and, through them, the inflated
    measurement covariance used in the gain.  The iterate starts from the
    ordinary minimum-MSE posterior mean.  Like the point rules, ``h`` maps a
    ``(n, k)`` block of states to an ``(m, k)`` block of measurements.
    """
    S_R = _as_sqrt(S_R)
    y = np.asarray(y, float)
    if stats is None:
        stats = measurement_stats(prior, h, rule, meas_angles)
    nu = innovation(y, stats.y_hat, meas_angles)

    def step(x):
        y_pred = np.asarray(h(x[:, None]), float)[:, 0]
        e = weighted_errors(x, prior, y, y_pred, S_R, state_angles, meas_angles)
        w = correntropy_weights(e, cfg, prior.n)
        _, SR_bar = modified_sqrt_factors(prior.sqrt_cov, S_R, w)
        K = gain(stats, SR_bar)
        x_new = prior.mean + K @ nu
        if state_angles:
            x_new[list(state_angles)] = wrap_angle(x_new[list(state_angles)])
        return x_new, K, w, SR_bar

    x = prior.mean + gain(stats, S_R) @ nu
    if state_angles:
        x[list(state_angles)] = wrap_angle(x[list(state_angles)])

    converged = False
    for i in range(1, cfg.i_max + 1):
        x_new, K, w, SR_bar = step(x)
        done = _rel_change(x_new, x) <= cfg.epsilon
        x = x_new
        if done:
            converged = True
            break

    # S Pi^-1 S^T - K Pyy K^T, written as a sum of outer products
    extra = prior.sqrt_cov * np.sqrt(np.maximum(1.0 / w.pi_P - 1.0, 0.0))
    S = qr_sqrt(np.hstack([stats.dev_x - K @ stats.dev_y, K @ SR_bar, extra]))
    return MccResult(SqrtBelief(x, S), i, converged)
