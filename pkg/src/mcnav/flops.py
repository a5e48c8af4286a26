"""Closed-form floating-point operation counts for one filter cycle.

Counts use exact rational arithmetic; fractional totals arise from the
``(4/3) n^3`` QR cost and are rounded only for display.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import product

F = Fraction

# reference per-cycle counts for n = 9
REFERENCE_COUNTS = {
    "PCKF": 34533, "CKF": 34812, "UKF": 36568, "NSKF": 63622,
    "MC-PCKF": 77364, "MC-CKF": 77193, "MC-UKF": 80706, "MC-NSKF": 134810,
}


def num_points(kind: str, n: int) -> int:
    """Point count per filter: UKF ``2n+1``, CKF ``2n``, NSKF ``4n+1``, PCKF ``2n+1``."""
    base = kind.upper().replace("MC-", "")
    counts = {"UKF": 2 * n + 1, "CKF": 2 * n, "NSKF": 4 * n + 1, "PCKF": 2 * n + 1}
    if base not in counts:
        raise ValueError(f"unknown filter kind {kind!r}")
    return counts[base]


def c_ekf(n, m):
    return 4 * n**3 + m**3 + 6 * n**2 * m + 6 * m**2 * n - n * m + n + 2 * m


def c_spkf(n, m, Np):
    return (F(8, 3) * n**3 + m**3 - F(2, 3) * Np**3 + n**2 * (9 * Np + 1) + 2 * m**2 * Np
            + 2 * Np**2 * (n + m) + 2 * n**2 * m + 4 * m**2 * n + m * n * (2 * Np - 1)
            + 2 * Np * (2 * n + m) + n + 2 * m + 2 * Np)


def c_pckf(n, m, Np):
    return (F(8, 3) * n**3 + m**3 + 2 * Np**2 * (n + m)
            + Np * (6 * n**2 - n - m + 2 * m**2 + 2 * n * m)
            - 2 * n**2 - 2 * m**2 - 3 * n * m + 4 * n * m**2 + m + 2 * n**2 * m)


def c_fpi_ekf(n, m):
    return (c_ekf(n, m) + F(16, 3) * (n**3 + m**3) + 4 * n**2 + 2 * m**2
            + 4 * (n**2 * m + m**2 * n) + 3 * n * m + 3 * m)


def c_fpi_spkf(n, m, Np):
    return (c_spkf(n, m, Np) + F(16, 3) * (n**3 + m**3) + 4 * n**2 + 2 * m**2 * (Np + 1)
            + 2 * m * n * Np + 2 * m**2 * n + n + 4 * m)


def c_fpi_pckf(n, m, Np):
    return (c_pckf(n, m, Np) + F(16, 3) * n**3 + F(19, 3) * m**3 + 4 * n**2
            + 2 * m**2 * (1 + Np + n) + n * m + 4 * m + n)


def c_mc_ekf(n, m, T):
    return c_ekf(n, m) + T * c_fpi_ekf(n, m) - (m**3 + 4 * n * m * (n + m) + 3 * n * m + m)


def c_mc_spkf(n, m, Np, T):
    return (c_spkf(n, m, Np) + T * c_fpi_spkf(n, m, Np)
            - (m**3 + 2 * m**2 * Np + 2 * n * m * (Np - 1) + 2 * n * m * (m + 1) + m))


def c_mc_pckf(n, m, Np, T):
    return (c_pckf(n, m, Np) + T * c_fpi_pckf(n, m, Np)
            - (m**3 + 2 * m**2 * (Np + m) + n * m + m))


def flops(kind: str, n: int, m: int, Np: int | None = None, T: int = 1) -> Fraction:
    """Per-cycle count for ``kind`` in {EKF, UKF, CKF, NSKF, PCKF} or its MC- variant."""
    for v in (n, m, T):
        if int(v) != v or v < 1:
            raise ValueError("n, m and T must be positive integers")
    kind = kind.upper()
    mc = kind.startswith("MC-")
    base = kind[3:] if mc else kind
    if base == "EKF":
        return c_mc_ekf(n, m, T) if mc else F(c_ekf(n, m))
    if Np is None:
        Np = num_points(base, n)
    if Np < 1:
        raise ValueError("N_p must be positive")
    if base == "PCKF":
        return c_mc_pckf(n, m, Np, T) if mc else c_pckf(n, m, Np)
    if base in ("UKF", "CKF", "NSKF"):
        return c_mc_spkf(n, m, Np, T) if mc else c_spkf(n, m, Np)
    raise ValueError(f"unknown filter kind {kind!r}")


def flops_table(n: int = 9, m: int = 9, T: int = 1, kinds=tuple(REFERENCE_COUNTS)) -> list:
    rows = []
    for k in kinds:
        Np = num_points(k, n)
        rows.append({"filter": k, "n": n, "m": m, "N_p": Np, "T": T if k.startswith("MC-") else 0,
                     "flops": float(flops(k, n, m, Np, T))})
    return rows


def fit_reference_counts(n: int = 9, ms=(5, 7, 9), Ts=range(1, 6), target=REFERENCE_COUNTS):
    """Search ``(m, T)`` for the best match to the reference counts.

    Returns ``(m, T, residuals, score)`` where ``residuals`` maps filter to
    ``computed - reference`` and ``score`` is the largest absolute relative
    residual.
    """
    best = None
    for m, T in product(ms, Ts):
        res = {k: float(flops(k, n, m, None, T)) - v for k, v in target.items()}
        score = max(abs(r) / target[k] for k, r in res.items())
        if best is None or score < best[3]:
            best = (m, T, res, score)
    return best
