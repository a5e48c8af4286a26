"""Earth model, curvature radii, rotations and frame conversions.

Conventions used throughout the package:

* geodetic position is ``(L, l, Z)``: latitude and longitude in radians and
  ``Z`` the vertical coordinate in metres, positive *up* (a vehicle 50 m
  below the surface has ``Z = -50``).  The position kinematics are
  ``Zdot = -vD`` and the curvature radii enter as ``R + Z``.
* attitude is ``(roll, pitch, yaw)`` in radians, ZYX Euler sequence.
* the navigation frame is local North-East-Down.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GimbalLock

GIMBAL_GUARD = math.radians(85.0)


@dataclass(frozen=True)
class EarthModel:
    """Ellipsoid and rotation constants (WGS-84 by default)."""

    omega_earth: float = 7.2921150e-5
    semi_major: float = 6378137.0
    eccentricity: float = math.sqrt(6.69437999014e-3)
    gravity: float = 9.80665

    def __post_init__(self):
        if not 0.0 < self.eccentricity < 1.0:
            raise ValueError("eccentricity must lie in (0, 1)")
        if self.semi_major <= 0.0 or self.gravity <= 0.0:
            raise ValueError("semi_major and gravity must be positive")

    @property
    def e2(self) -> float:
        return self.eccentricity**2


WGS84 = EarthModel()


@dataclass(frozen=True)
class GeodeticPosition:
    lat: float
    lon: float
    Z: float = 0.0

    def __post_init__(self):
        if not abs(self.lat) < math.pi / 2:
            raise ValueError("latitude must satisfy |L| < pi/2")
        object.__setattr__(self, "lon", float(wrap_angle(self.lon)))

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, Z: float = 0.0) -> "GeodeticPosition":
        return cls(math.radians(lat_deg), math.radians(lon_deg), Z)

    def as_array(self) -> np.ndarray:
        return np.array([self.lat, self.lon, self.Z])


@dataclass(frozen=True)
class Attitude:
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        check_gimbal(self.pitch)
        object.__setattr__(self, "roll", float(wrap_angle(self.roll)))
        object.__setattr__(self, "yaw", float(wrap_angle(self.yaw)))

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


def check_gimbal(pitch) -> None:
    if np.any(np.abs(pitch) > GIMBAL_GUARD):
        raise GimbalLock(f"pitch exceeds the {math.degrees(GIMBAL_GUARD):.0f} deg guard")


def wrap_angle(a):
    """Wrap angles to (-pi, pi].  Works on scalars and arrays.

    Values already in range are returned unchanged (bit for bit).
    """
    a = np.asarray(a, dtype=float)
    inside = (a > -np.pi) & (a <= np.pi)
    w = np.where(inside, a, np.pi - np.mod(np.pi - a, 2.0 * np.pi))
    return float(w) if np.ndim(w) == 0 else w


def curvature_radii(lat, earth: EarthModel = WGS84):
    """Return ``(R_M, R_N)``, the meridian and transverse radii of curvature."""
    s2 = np.sin(lat) ** 2
    t = 1.0 - earth.e2 * s2
    R_N = earth.semi_major / np.sqrt(t)
    R_M = earth.semi_major * (1.0 - earth.e2) / t**1.5
    return R_M, R_N


def dcm_body_to_nav(roll, pitch, yaw) -> np.ndarray:
    """Body-to-NED direction cosine matrix for ZYX Euler angles.

    Scalar angles give a 3x3 matrix; arrays of shape ``(N,)`` give ``(N, 3, 3)``.
    """
    cf, sf = np.cos(roll), np.sin(roll)
    ct, st = np.cos(pitch), np.sin(pitch)
    cp, sp = np.cos(yaw), np.sin(yaw)
    C = np.array([
        [ct * cp, -cf * sp + sf * st * cp, sf * sp + cf * st * cp],
        [ct * sp, cf * cp + sf * st * sp, -sf * cp + cf * st * sp],
        [-st, sf * ct, cf * ct],
    ])
    if C.ndim == 3:
        C = np.moveaxis(C, 2, 0)
    return C


def euler_rate_matrix(roll, pitch) -> np.ndarray:
    """Matrix mapping Euler-angle rates to body angular rate."""
    cf, sf = np.cos(roll), np.sin(roll)
    ct, st = np.cos(pitch), np.sin(pitch)
    return np.array([
        [1.0, 0.0, -st],
        [0.0, cf, sf * ct],
        [0.0, -sf, cf * ct],
    ])


def earth_rate_nav(lat, earth: EarthModel = WGS84) -> np.ndarray:
    w = earth.omega_earth
    return np.array([w * np.cos(lat), np.zeros_like(lat), -w * np.sin(lat)])


def transport_rate(lat, Z, vN, vE, earth: EarthModel = WGS84) -> np.ndarray:
    """Rotation rate of the NED frame relative to the Earth, in NED."""
    R_M, R_N = curvature_radii(lat, earth)
    return np.array([
        vE / (R_N + Z),
        -vN / (R_M + Z),
        -vE * np.tan(lat) / (R_N + Z),
    ])


def geodetic_to_ecef(lat, lon, Z, earth: EarthModel = WGS84) -> np.ndarray:
    """Standard ellipsoidal conversion with ellipsoidal height ``h = Z``.

    Computed in the floating type of ``lat`` (pass ``np.longdouble`` inputs
    for extended precision).
    """
    lat = np.asarray(lat)
    ft = lat.dtype.type if np.issubdtype(lat.dtype, np.floating) else np.float64
    lat, lon, Z = ft(lat) if lat.ndim == 0 else lat.astype(ft), np.asarray(lon, ft), np.asarray(Z, ft)
    a, e2 = ft(earth.semi_major), ft(earth.e2)
    cL, sL = np.cos(lat), np.sin(lat)
    R_N = a / np.sqrt(ft(1) - e2 * sL * sL)
    return np.array([
        (R_N + Z) * cL * np.cos(lon),
        (R_N + Z) * cL * np.sin(lon),
        (R_N * (ft(1) - e2) + Z) * sL,
    ])


def ecef_to_geodetic(p_e, earth: EarthModel = WGS84, iterations: int = 10):
    """Inverse of :func:`geodetic_to_ecef` by fixed-point iteration on latitude.

    Height uses ``p cos L + z sin L - a sqrt(1 - e^2 sin^2 L)``, which avoids
    the cancellation in ``p / cos L - R_N``.
    """
    p_e = np.asarray(p_e)
    ft = p_e.dtype.type if np.issubdtype(p_e.dtype, np.floating) else np.float64
    x, y, z = p_e.astype(ft)
    a, e2 = ft(earth.semi_major), ft(earth.e2)
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    lat = np.arctan2(z, p * (ft(1) - e2))
    for _ in range(iterations):
        sL = np.sin(lat)
        R_N = a / np.sqrt(ft(1) - e2 * sL * sL)
        h = p * np.cos(lat) + z * sL - a * np.sqrt(ft(1) - e2 * sL * sL)
        lat = np.arctan2(z, p * (ft(1) - e2 * R_N / (R_N + h)))
    sL = np.sin(lat)
    h = p * np.cos(lat) + z * sL - a * np.sqrt(ft(1) - e2 * sL * sL)
    return lat, lon, h


def ecef_to_ned_matrix(lat, lon) -> np.ndarray:
    sL, cL = np.sin(lat), np.cos(lat)
    sl, cl = np.sin(lon), np.cos(lon)
    return np.array([
        [-sL * cl, -sL * sl, cL],
        [-sl, cl, 0.0 * cl],
        [-cL * cl, -cL * sl, -sL],
    ])


def ecef_to_ned(p_e, ref: GeodeticPosition, earth: EarthModel = WGS84) -> np.ndarray:
    p_e = np.asarray(p_e)
    ft = p_e.dtype.type
    p_ref = geodetic_to_ecef(ft(ref.lat), ft(ref.lon), ft(ref.Z), earth)
    C = ecef_to_ned_matrix(ft(ref.lat), ft(ref.lon))
    return C @ (p_e - (p_ref if p_e.ndim == 1 else p_ref[:, None]))


def ned_to_ecef(p_n, ref: GeodeticPosition, earth: EarthModel = WGS84) -> np.ndarray:
    p_n = np.asarray(p_n)
    ft = p_n.dtype.type if np.issubdtype(p_n.dtype, np.floating) else np.float64
    p_ref = geodetic_to_ecef(ft(ref.lat), ft(ref.lon), ft(ref.Z), earth)
    C = ecef_to_ned_matrix(ft(ref.lat), ft(ref.lon))
    out = C.T @ p_n.astype(ft)
    return out + (p_ref if out.ndim == 1 else p_ref[:, None])


# Earth-centred coordinates are ~6e6 m, so a float64 round trip through them
# loses ~1e-9 m.  The local conversions below work in extended precision.
_EXT = np.longdouble


def geodetic_to_ned(lat, lon, Z, ref: GeodeticPosition, earth: EarthModel = WGS84) -> np.ndarray:
    p_e = geodetic_to_ecef(np.asarray(lat, _EXT), np.asarray(lon, _EXT), np.asarray(Z, _EXT), earth)
    return ecef_to_ned(p_e, ref, earth).astype(float)


def ned_to_geodetic(p_n, ref: GeodeticPosition, earth: EarthModel = WGS84):
    lat, lon, h = ecef_to_geodetic(ned_to_ecef(np.asarray(p_n, _EXT), ref, earth), earth)
    if np.ndim(lat) == 0:
        return float(lat), float(lon), float(h)
    return lat.astype(float), lon.astype(float), h.astype(float)
