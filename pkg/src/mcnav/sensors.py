"""Noise models, measurement models and measurement synthesis."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dynamics import ImuSeries, TruthSeries, propagate
from .errors import CoincidentBeacon, DegenerateGeometry, OutOfDomain
from .geodesy import (
    WGS84,
    EarthModel,
    GeodeticPosition,
    check_gimbal,
    curvature_radii,
    dcm_body_to_nav,
    geodetic_to_ned,
    ned_to_geodetic,
    wrap_angle,
)

MODEL_I = "I"
MODEL_II = "II"
CHANNELS = ("vN", "vE", "vD", "Z", "roll", "pitch", "yaw", "L", "l")
ANGLE_CHANNELS = {MODEL_I: (4, 5, 6), MODEL_II: (4, 5, 6, 8)}


@dataclass(frozen=True)
class GaussianMixture:
    """Scalar Gaussian mixture ``sum_i w_i N(mu_i, s_i^2)``."""

    weights: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if not (len(w) == len(self.means) == len(self.stds)) or len(w) == 0:
            raise ValueError("weights, means and stds must have equal non-zero length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(np.asarray(self.stds, float) <= 0):
            raise ValueError("stds must be positive")

    @classmethod
    def from_components(cls, components: Sequence[Sequence[float]]) -> "GaussianMixture":
        w, m, s = zip(*components)
        return cls(tuple(map(float, w)), tuple(map(float, m)), tuple(map(float, s)))

    @classmethod
    def gaussian(cls, std: float, mean: float = 0.0) -> "GaussianMixture":
        return cls((1.0,), (mean,), (std,))

    def scaled(self, factor: float) -> "GaussianMixture":
        """Same mixture expressed in units ``factor`` times smaller."""
        return GaussianMixture(self.weights, tuple(m * factor for m in self.means),
                               tuple(s * factor for s in self.stds))

    def sample(self, rng: np.random.Generator, size=None):
        """Pick a component by weight, then draw from it."""
        w = np.asarray(self.weights)
        idx = rng.choice(len(w), size=size, p=w)
        z = rng.standard_normal(size)
        out = np.asarray(self.means)[idx] + np.asarray(self.stds)[idx] * z
        return float(out) if size is None else out

    def equivalent_variance(self) -> float:
        w = np.asarray(self.weights)
        mu = np.asarray(self.means)
        s = np.asarray(self.stds)
        return float(np.sum(w * (s**2 + mu**2)) - np.sum(w * mu) ** 2)


def mixture_sample(gm: GaussianMixture, rng, size=None):
    return gm.sample(rng, size)


def mixture_equivalent_cov(gm: GaussianMixture) -> float:
    return gm.equivalent_variance()


# --- measurement models -----------------------------------------------------

def measure_model1(x) -> np.ndarray:
    """Noise-free model I: ``(vN, vE, vD, Z, roll, pitch, yaw)``."""
    x = np.asarray(x, dtype=float)
    check_gimbal(x[7])
    return np.concatenate([x[3:6], x[2:3], wrap_angle(x[6:9])])


def measure_model2(x) -> np.ndarray:
    """Model I channels followed by ``(L, l)``."""
    x = np.asarray(x, dtype=float)
    return np.concatenate([measure_model1(x), x[0:1], wrap_angle(x[1:2])])


MODELS = {MODEL_I: measure_model1, MODEL_II: measure_model2}


@dataclass
class MeasurementVector:
    values: np.ndarray
    kind: str
    t: float

    def __post_init__(self):
        m = 7 if self.kind == MODEL_I else 9
        if self.kind not in MODELS or len(self.values) != m:
            raise ValueError(f"model {self.kind} needs {m} values")


def roll_pitch_from_accel(f_b, g: float = WGS84.gravity):
    """Quasi-static levelling: returns ``(roll, pitch)`` from specific force."""
    fx, fy = float(f_b[0]), float(f_b[1])
    sp = fx / g
    if abs(sp) > 1.0:
        raise OutOfDomain("|f_x| exceeds g")
    theta = math.asin(sp)
    sr = fy / (g * math.cos(theta))
    if abs(sr) > 1.0:
        raise OutOfDomain("|f_y| exceeds g cos(pitch)")
    return -math.asin(sr), theta


# --- acoustic positioning ---------------------------------------------------

@dataclass(frozen=True)
class ApsGeometry:
    gib1: GeodeticPosition
    gib2: GeodeticPosition
    ref: GeodeticPosition
    earth: EarthModel = field(default=WGS84)

    def __post_init__(self):
        if (self.gib1.lat, self.gib1.lon) == (self.gib2.lat, self.gib2.lon):
            raise ValueError("beacons must be distinct")

    def beacon_ned(self):
        return [geodetic_to_ned(b.lat, b.lon, b.Z, self.ref, self.earth) for b in (self.gib1, self.gib2)]


def aps_bearings(x, geom: ApsGeometry):
    """Bearings ``atan2(dN, dE)`` of the vehicle seen from each beacon."""
    p = geodetic_to_ned(x[0], x[1], x[2], geom.ref, geom.earth)
    out = []
    for b in geom.beacon_ned():
        dN, dE = p[0] - b[0], p[1] - b[1]
        if math.hypot(dN, dE) < 1e-6:
            raise CoincidentBeacon("vehicle within 1e-6 m of a beacon")
        out.append(math.atan2(dN, dE))
    return tuple(out)


def aps_fix(beta1: float, beta2: float, geom: ApsGeometry, Z: float = 0.0):
    """Triangulate ``(L, l)`` from two bearings.

    The two bearing lines ``N - N_i = tan(beta_i) (E - E_i)`` are intersected
    in the local tangent plane using the slope form multiplied through by
    ``cos(beta_1) cos(beta_2)`` (so vertical bearings stay finite), then the
    horizontal fix is mapped back to geodetic coordinates at vertical
    coordinate ``Z``.
    """
    s12 = math.sin(beta1 - beta2)
    if abs(s12) < 1e-9:
        raise DegenerateGeometry("bearing lines are parallel")
    (N1, E1, _), (N2, E2, _) = geom.beacon_ned()
    s1, c1 = math.sin(beta1), math.cos(beta1)
    s2, c2 = math.sin(beta2), math.cos(beta2)
    E = ((N2 - N1) * c1 * c2 + E1 * s1 * c2 - E2 * s2 * c1) / s12
    N = (N2 * s1 * c2 - N1 * s2 * c1 + (E1 - E2) * s1 * s2) / s12
    return _horizontal_to_geodetic(N, E, Z, geom)


def _horizontal_to_geodetic(N, E, Z, geom: ApsGeometry):
    # the down coordinate of a point at height Z depends on its horizontal
    # offset through Earth curvature; iterate until the height matches
    D = geom.ref.Z - Z
    for _ in range(6):
        lat, lon, h = ned_to_geodetic(np.array([N, E, D]), geom.ref, geom.earth)
        D += h - Z
    lat, lon, _ = ned_to_geodetic(np.array([N, E, D]), geom.ref, geom.earth)
    return float(lat), float(wrap_angle(lon))


# --- synthesis ----------------------------------------------------------------

def default_noise() -> dict:
    """Channel mixtures in SI units (m, m/s, rad)."""
    d = math.radians
    vel = GaussianMixture((0.9, 0.1), (0.0, 0.0), (0.1, 1.0))
    ang = GaussianMixture((0.9, 0.1), (0.0, 0.0), (d(0.5), d(1.0)))
    aps = GaussianMixture((0.9, 0.1), (0.0, 0.0), (d(0.0898), d(0.898)))
    return {
        "vN": vel, "vE": vel, "vD": vel,
        "Z": GaussianMixture((0.9, 0.1), (0.0, 0.0), (1.0, 10.0)),
        "roll": ang, "pitch": ang, "yaw": ang,
        "L": aps, "l": aps,
    }


def equivalent_sqrt_R(noises: Mapping[str, GaussianMixture], kind: str) -> np.ndarray:
    """Diagonal square root of the equivalent measurement covariance."""
    names = CHANNELS[: 7 if kind == MODEL_I else 9]
    return np.sqrt(np.array([max(noises[c].equivalent_variance(), 1e-15) for c in names]))


def synthesize_measurements(truth: TruthSeries, imu: ImuSeries | None,
                            noises: Mapping[str, GaussianMixture], geom: ApsGeometry,
                            aps_cutoff_t: float = 200.0, rng: np.random.Generator | None = None,
                            earth: EarthModel = WGS84, streams: Mapping[str, np.random.Generator] | None = None,
                            skip_first: bool = True) -> list:
    """Measurements at every truth sample (after the first, by default).

    ``streams`` optionally supplies one generator per channel so that each
    channel's draws are independent of the others; otherwise ``rng`` is used
    for all of them.
    """
    def draw(ch):
        gen = streams[ch] if streams is not None else rng
        if gen is None:
            return 0.0
        return noises[ch].sample(gen)

    g = earth.gravity
    out = []
    start = 1 if skip_first else 0
    for k in range(start, len(truth.t)):
        x = truth.x[k]
        t = float(truth.t[k])
        C = dcm_body_to_nav(x[6], x[7], x[8])
        v_body = C.T @ x[3:6] + np.array([draw("vN"), draw("vE"), draw("vD")])
        vel = C @ v_body
        depth = x[2] + draw("Z")
        # levelling from the quasi-static specific force (gravity reaction only)
        f_static = C.T @ np.array([0.0, 0.0, -g])
        roll, pitch = roll_pitch_from_accel(f_static, g)
        roll += draw("roll")
        pitch += draw("pitch")
        yaw = x[8] + draw("yaw")
        vals = [*vel, depth, *wrap_angle(np.array([roll, pitch, yaw]))]
        if t <= aps_cutoff_t:
            b1, b2 = aps_bearings(x, geom)
            L, l = aps_fix(b1, b2, geom, Z=x[2])
            vals += [L + draw("L"), wrap_angle(l + draw("l"))]
            out.append(MeasurementVector(np.array(vals), MODEL_II, t))
        else:
            out.append(MeasurementVector(np.array(vals), MODEL_I, t))
    return out


# --- observability ----------------------------------------------------------

def observability_rank(truth: TruthSeries, imu: ImuSeries, kind: str, k0: int = 0,
                       window: int = 20, rel_tol: float = 1e-8, eps: float = 1e-3,
                       earth: EarthModel = WGS84) -> int:
    """Rank of the numerically linearised observability matrix over a window.

    Position perturbations, and the latitude/longitude measurement rows, are
    expressed in local north/east/down metres so that every row and column
    carries comparable physical scale.  Singular values below
    ``rel_tol * s_max`` are treated as zero.
    """
    h = MODELS[kind]
    x = truth.x[k0].copy()
    R_M, R_N = curvature_radii(x[0], earth)
    T = np.eye(9)
    T[0, 0] = 1.0 / (R_M + x[2])
    T[1, 1] = 1.0 / ((R_N + x[2]) * math.cos(x[0]))
    T[2, 2] = -1.0
    m = 7 if kind == MODEL_I else 9
    Y = np.eye(m)
    if kind == MODEL_II:
        Y[7, 7] = 1.0 / T[0, 0]
        Y[8, 8] = 1.0 / T[1, 1]
    Phi = np.eye(9)
    rows = []
    for k in range(k0, k0 + window):
        x = truth.x[k]
        H = _jacobian(h, x, eps)
        rows.append(Y @ H @ Phi @ T)
        F = _jacobian(lambda s: propagate(s, imu[k], imu.dt, earth), x, eps)
        Phi = F @ Phi
    s = np.linalg.svd(np.vstack(rows), compute_uv=False)
    return int(np.sum(s > rel_tol * s[0]))


def _jacobian(fun, x, eps):
    x = np.asarray(x, float)
    f0 = fun(x)
    J = np.empty((len(f0), len(x)))
    for i in range(len(x)):
        step = eps * (1e-6 if i < 2 else 1.0)
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        d = fun(xp) - fun(xm)
        jump = np.abs(d) > math.pi
        d[jump] = wrap_angle(d[jump])
        J[:, i] = d / (2 * step)
    return J
