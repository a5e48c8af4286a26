"""Strapdown mechanisation, truth trajectories and IMU synthesis.

State vectors are ``x = [L, l, Z, vN, vE, vD, roll, pitch, yaw]`` (radians,
metres, m/s).  Every function accepting a state also accepts a batch of
states stacked as columns, shape ``(9, N)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ScheduleGap
from .geodesy import (
    WGS84,
    Attitude,
    EarthModel,
    GeodeticPosition,
    check_gimbal,
    curvature_radii,
    wrap_angle,
)

ANGLES = slice(6, 9)
STATE_NAMES = ("L", "l", "Z", "vN", "vE", "vD", "roll", "pitch", "yaw")


@dataclass(frozen=True)
class NavState:
    pos: GeodeticPosition
    vel_ned: tuple
    att: Attitude

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pos.as_array(), np.asarray(self.vel_ned, float), self.att.as_array()])

    @classmethod
    def from_array(cls, x) -> "NavState":
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("state must be finite")
        return cls(GeodeticPosition(x[0], x[1], x[2]), tuple(x[3:6]), Attitude(*x[6:9]))


@dataclass(frozen=True)
class ImuSample:
    f_b: np.ndarray
    w_ib_b: np.ndarray
    t: float


@dataclass
class ImuSeries:
    """IMU samples; sample ``k`` is representative of ``[t[k], t[k] + dt]``."""

    t: np.ndarray
    f_b: np.ndarray
    w_ib_b: np.ndarray
    dt: float

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k) -> ImuSample:
        return ImuSample(self.f_b[k], self.w_ib_b[k], float(self.t[k]))

    def __iter__(self) -> Iterator[ImuSample]:
        return (self[k] for k in range(len(self)))


@dataclass(frozen=True)
class ScenarioStage:
    """One manoeuvre segment: NED specific force (m/s^2) and Euler rates (rad/s)."""

    t_start: float
    t_end: float
    accel_ned: tuple
    rates: tuple
    label: str = ""

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("stage must have t_end > t_start")


@dataclass
class TruthSeries:
    t: np.ndarray
    x: np.ndarray

    def decimate(self, step: float) -> "TruthSeries":
        dt = self.t[1] - self.t[0]
        k = int(round(step / dt))
        return TruthSeries(self.t[::k].copy(), self.x[::k].copy())

    def __len__(self):
        return len(self.t)


def process_noise(earth: EarthModel = WGS84, accel_std: float | None = None,
                  arw_deg_rt_hr: float = 0.02, dt: float = 1.0) -> np.ndarray:
    """Discrete process covariance per step of ``dt`` seconds."""
    if accel_std is None:
        accel_std = 5e-5 * earth.gravity
    gyro = math.radians(arw_deg_rt_hr / 60.0) * math.sqrt(dt)
    q = np.r_[np.zeros(3), np.full(3, (accel_std * dt) ** 2), np.full(3, gyro**2)]
    return np.diag(q)


def nav_derivative(x, f_b, w_ib_b, earth: EarthModel = WGS84) -> np.ndarray:
    """Continuous-time INS dynamics.

    Parameters
    ----------
    x : array, shape (9,) or (9, N)
    f_b, w_ib_b : array, shape (3,) or (3, N)
        Body-frame specific force and angular rate.
    """
    x = np.asarray(x, dtype=float)
    f_b = np.asarray(f_b, dtype=float)
    w_ib_b = np.asarray(w_ib_b, dtype=float)
    if x.ndim == 2 and f_b.ndim == 1:
        f_b = f_b[:, None]
        w_ib_b = w_ib_b[:, None]
    L, _, Z, vN, vE, vD, phi, theta, psi = x
    check_gimbal(theta)
    R_M, R_N = curvature_radii(L, earth)
    cL, sL = np.cos(L), np.sin(L)
    rn = R_N + Z
    rm = R_M + Z

    out = np.empty_like(x)
    out[0] = vN / rm
    out[1] = vE / (rn * cL)
    out[2] = -vD

    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    C11, C12, C13 = ct * cp, -cf * sp + sf * st * cp, sf * sp + cf * st * cp
    C21, C22, C23 = ct * sp, cf * cp + sf * st * sp, -sf * cp + cf * st * sp
    C31, C32, C33 = -st, sf * ct, cf * ct
    fx, fy, fz = f_b
    fN = C11 * fx + C12 * fy + C13 * fz
    fE = C21 * fx + C22 * fy + C23 * fz
    fD = C31 * fx + C32 * fy + C33 * fz

    w = earth.omega_earth
    # earth rate and transport rate in NED
    ieN, ieD = w * cL, -w * sL
    enN, enE, enD = vE / rn, -vN / rm, -vE * (sL / cL) / rn
    # Coriolis: (2 w_ie + w_en) x v
    aN, aE, aD = 2 * ieN + enN, enE, 2 * ieD + enD
    out[3] = fN - (aE * vD - aD * vE)
    out[4] = fE - (aD * vN - aN * vD)
    out[5] = fD + earth.gravity - (aN * vE - aE * vN)

    # navigation-frame rate rotated into body: C^T (w_ie + w_en)
    nN, nE, nD = ieN + enN, enE, ieD + enD
    bx = C11 * nN + C21 * nE + C31 * nD
    by = C12 * nN + C22 * nE + C32 * nD
    bz = C13 * nN + C23 * nE + C33 * nD
    wx, wy, wz = w_ib_b[0] - bx, w_ib_b[1] - by, w_ib_b[2] - bz
    tt = st / ct
    out[6] = wx + sf * tt * wy + cf * tt * wz
    out[7] = cf * wy - sf * wz
    out[8] = (sf * wy + cf * wz) / ct
    return out


def rk4_step(deriv, x, dt):
    k1 = deriv(x)
    k2 = deriv(x + 0.5 * dt * k1)
    k3 = deriv(x + 0.5 * dt * k2)
    k4 = deriv(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(x, imu: ImuSample, dt: float, earth: EarthModel = WGS84) -> np.ndarray:
    """One RK4 step with the IMU sample held constant; angles re-wrapped."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = rk4_step(lambda s: nav_derivative(s, imu.f_b, imu.w_ib_b, earth), np.asarray(x, float), dt)
    out[ANGLES] = wrap_angle(out[ANGLES])
    out[1] = wrap_angle(out[1])
    return out


# --- truth generation -------------------------------------------------------

def check_schedule(stages: Sequence[ScenarioStage]) -> None:
    for a, b in zip(stages, stages[1:]):
        if abs(a.t_end - b.t_start) > 1e-9:
            raise ScheduleGap(f"stages not contiguous at t={a.t_end} / {b.t_start}")


def stage_at(stages: Sequence[ScenarioStage], t: float) -> ScenarioStage:
    """Stage active on ``[t_start, t_end)``; the final stage also owns its end point."""
    for s in stages:
        if s.t_start <= t < s.t_end:
            return s
    if stages and abs(t - stages[-1].t_end) < 1e-9:
        return stages[-1]
    raise ScheduleGap(f"no stage covers t={t}")


def truth_derivative(x, f_n, rates, earth: EarthModel = WGS84) -> np.ndarray:
    """Truth kinematics: NED specific force and Euler rates applied directly.

    Vectorised over columns; ``f_n`` and ``rates`` broadcast against ``x[0]``.
    """
    L, _, Z, vN, vE, vD = x[:6]
    R_M, R_N = curvature_radii(L, earth)
    cL, sL = np.cos(L), np.sin(L)
    rn, rm = R_N + Z, R_M + Z
    w = earth.omega_earth
    aN = 2 * w * cL + vE / rn
    aE = -vN / rm
    aD = -2 * w * sL - vE * (sL / cL) / rn
    out = np.empty_like(x)
    out[0] = vN / rm
    out[1] = vE / (rn * cL)
    out[2] = -vD
    out[3] = f_n[0] - (aE * vD - aD * vE)
    out[4] = f_n[1] - (aD * vN - aN * vD)
    out[5] = f_n[2] + earth.gravity - (aN * vE - aE * vN)
    out[6] = rates[0]
    out[7] = rates[1]
    out[8] = rates[2]
    return out


def _truth_deriv_scalar(x, fN, fE, fD, r0, r1, r2, earth):
    # plain-float twin of truth_derivative for the sequential integrator
    L, Z, vN, vE, vD = x[0], x[2], x[3], x[4], x[5]
    sL, cL = math.sin(L), math.cos(L)
    t = 1.0 - earth.e2 * sL * sL
    rn = earth.semi_major / math.sqrt(t) + Z
    rm = earth.semi_major * (1.0 - earth.e2) / t**1.5 + Z
    w = earth.omega_earth
    aN = 2 * w * cL + vE / rn
    aE = -vN / rm
    aD = -2 * w * sL - vE * (sL / cL) / rn
    return (
        vN / rm,
        vE / (rn * cL),
        -vD,
        fN - (aE * vD - aD * vE),
        fE - (aD * vN - aN * vD),
        fD + earth.gravity - (aN * vE - aE * vN),
        r0, r1, r2,
    )


def _truth_rk4(x, stage, h, earth):
    args = (*stage.accel_ned, *stage.rates, earth)
    k1 = _truth_deriv_scalar(x, *args)
    x2 = [a + 0.5 * h * b for a, b in zip(x, k1)]
    k2 = _truth_deriv_scalar(x2, *args)
    x3 = [a + 0.5 * h * b for a, b in zip(x, k2)]
    k3 = _truth_deriv_scalar(x3, *args)
    x4 = [a + h * b for a, b in zip(x, k3)]
    k4 = _truth_deriv_scalar(x4, *args)
    return [a + h / 6.0 * (b + 2 * c + 2 * d + e) for a, b, c, d, e in zip(x, k1, k2, k3, k4)]


def generate_truth(stages: Sequence[ScenarioStage], x0, dt_truth: float = 0.01,
                   earth: EarthModel = WGS84) -> TruthSeries:
    """Integrate the manoeuvre schedule with RK4 at ``dt_truth``.

    Attitude is unwrapped during integration and wrapped only in the output.
    """
    check_schedule(stages)
    t0, t1 = stages[0].t_start, stages[-1].t_end
    n = int(round((t1 - t0) / dt_truth))
    if abs(n * dt_truth - (t1 - t0)) > 1e-9:
        raise ValueError("dt_truth must divide the schedule length")
    x0 = np.asarray(x0.as_array() if isinstance(x0, NavState) else x0, dtype=float)
    xs = np.empty((n + 1, 9))
    xs[0] = x0
    x = list(x0)
    for k in range(n):
        stage = stage_at(stages, t0 + (k + 0.5) * dt_truth)
        x = _truth_rk4(x, stage, dt_truth, earth)
        xs[k + 1] = x
    t = t0 + dt_truth * np.arange(n + 1)
    check_gimbal(xs[:, 7])
    xs[:, 6:9] = wrap_angle(xs[:, 6:9])
    xs[:, 1] = wrap_angle(xs[:, 1])
    return TruthSeries(t, xs)


def synthesize_imu(truth: TruthSeries, stages: Sequence[ScenarioStage],
                   noise=(0.0, 0.0), rng: np.random.Generator | None = None,
                   earth: EarthModel = WGS84) -> ImuSeries:
    """Ideal IMU outputs for each truth interval plus white Gaussian noise.

    Sample ``k`` covers ``[t[k], t[k+1]]`` and is evaluated at the interval
    midpoint (truth advanced half a step), which makes the zero-order-hold
    RK4 mechanisation second-order accurate in the step length.
    """
    t = truth.t
    dt = float(t[1] - t[0])
    K = len(t) - 1
    mids = t[:-1] + 0.5 * dt
    st = [stage_at(stages, tm) for tm in mids]
    f_n = np.array([s.accel_ned for s in st]).T
    rates = np.array([s.rates for s in st]).T
    x = truth.x[:-1].T.copy()
    # unwrapped attitude so the half step does not cross a wrap discontinuity
    xm = rk4_step(lambda s: truth_derivative(s, f_n, rates, earth), x, 0.5 * dt)

    L, Z, vN, vE = xm[0], xm[2], xm[3], xm[4]
    phi, theta, psi = xm[6], xm[7], xm[8]
    check_gimbal(theta)
    R_M, R_N = curvature_radii(L, earth)
    w = earth.omega_earth
    nav_rate = np.array([
        w * np.cos(L) + vE / (R_N + Z),
        -vN / (R_M + Z),
        -w * np.sin(L) - vE * np.tan(L) / (R_N + Z),
    ])
    C = _dcm_batch(phi, theta, psi)                      # (K, 3, 3)
    f_b = np.einsum("kji,jk->ki", C, f_n)                # C^T f_n
    w_rot = np.einsum("kji,jk->ki", C, nav_rate)         # C^T (w_ie + w_en)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, stt = np.cos(theta), np.sin(theta)
    body_rate = np.stack([
        rates[0] - stt * rates[2],
        cf * rates[1] + sf * ct * rates[2],
        -sf * rates[1] + cf * ct * rates[2],
    ], axis=1)
    w_b = body_rate + w_rot
    sa, sg = noise
    if rng is not None and (sa > 0 or sg > 0):
        f_b = f_b + sa * rng.standard_normal((K, 3))
        w_b = w_b + sg * rng.standard_normal((K, 3))
    return ImuSeries(t[:-1].copy(), f_b, w_b, dt)


def _dcm_batch(phi, theta, psi):
    from .geodesy import dcm_body_to_nav
    return dcm_body_to_nav(np.atleast_1d(phi), np.atleast_1d(theta), np.atleast_1d(psi))


def imu_noise_std(dt: float, earth: EarthModel = WGS84, accel_density: float | None = None,
                  arw_deg_rt_hr: float = 0.02):
    """Per-sample accelerometer and gyro noise std for sample interval ``dt``.

    At ``dt = 1`` s these equal the square roots of the velocity and attitude
    entries of :func:`process_noise`.
    """
    if accel_density is None:
        accel_density = 5e-5 * earth.gravity
    return accel_density / math.sqrt(dt), math.radians(arw_deg_rt_hr / 60.0) / math.sqrt(dt)
