"""YAML configuration: scenario schedule, noise mixtures and run settings.

Configuration files may name a parent with ``extends:``; the child is merged
over the parent key by key (nested mappings merge, everything else replaces).
Relative paths are resolved against the file that mentions them, then
against the bundled data directory.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .dynamics import ScenarioStage, check_schedule
from .geodesy import WGS84, EarthModel, GeodeticPosition
from .sensors import CHANNELS, GaussianMixture

DATA = resources.files("mcnav") / "data"
DEFAULT_CONFIG = "default.yaml"
FILTER_KINDS = ("UKF", "CKF", "PCKF", "MC-UKF", "MC-CKF", "MC-PCKF")
ANGLE_NOISE_CHANNELS = ("roll", "pitch", "yaw", "L", "l")

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub,
           ast.Mult: operator.mul, ast.Div: operator.truediv}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def eval_expr(text, names: Mapping[str, float] | None = None) -> float:
    """Evaluate a small arithmetic expression such as ``-(g+0.04)`` or ``19/20``.

    Only numbers, the given names, ``+ - * /`` and parentheses are accepted.
    """
    if isinstance(text, (int, float)):
        return float(text)
    names = dict(names or {})

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in names:
            return float(names[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(str(text), mode="eval"))


def _resolve(path, base: Path | None = None):
    p = Path(path)
    if p.is_absolute() and p.exists():
        return p
    if base is not None and (base / p).exists():
        return base / p
    if p.exists():
        return p
    bundled = DATA / str(path)
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(path)


def _merge(parent: dict, child: dict) -> dict:
    out = dict(parent)
    for k, v in child.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_yaml(path) -> tuple[dict, Path]:
    """Read a config file, following ``extends`` chains."""
    p = _resolve(path)
    with open(p, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    parent = doc.pop("extends", None)
    if parent is not None:
        base, _ = load_yaml(_resolve(parent, p.parent))
        doc = _merge(base, doc)
    return doc, p.parent


def load_stages(path, earth: EarthModel = WGS84, base: Path | None = None) -> list:
    """Manoeuvre schedule from a scenario file (rates in deg/s)."""
    with open(_resolve(path, base), encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    names = {"g": earth.gravity}
    stages = []
    for row in doc["stages"]:
        acc = tuple(eval_expr(row[k], names) for k in ("aN", "aE", "aD"))
        rates = tuple(math.radians(eval_expr(row[k], names))
                      for k in ("roll_rate", "pitch_rate", "yaw_rate"))
        stages.append(ScenarioStage(float(row["t_start"]), float(row["t_end"]), acc, rates,
                                    row.get("label", "")))
    check_schedule(stages)
    return stages


def load_noise(doc: Mapping[str, Any], scale_aps: float = 1.0) -> dict:
    """Channel mixtures in SI units; angle channels are given in degrees."""
    out = {}
    for ch in CHANNELS:
        gm = GaussianMixture.from_components(doc[ch])
        if ch in ANGLE_NOISE_CHANNELS:
            gm = gm.scaled(math.pi / 180.0)
        if ch in ("L", "l"):
            gm = gm.scaled(scale_aps)
        out[ch] = gm
    return out


@dataclass(frozen=True)
class FilterSpec:
    """One configured estimator."""

    kind: str
    sigma: float | None = None
    basis: str = "orthonormal"
    kappa: float | None = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.is_mc and self.sigma is None:
            raise ValueError(f"{self.kind} needs a kernel bandwidth")

    @property
    def is_mc(self) -> bool:
        return self.kind.startswith("MC-")

    @property
    def base(self) -> str:
        return self.kind.replace("MC-", "")

    @property
    def label(self) -> str:
        return f"{self.kind}(sigma={self.sigma:g})" if self.is_mc else self.kind


@dataclass
class RunConfig:
    stages: list
    noise: dict
    filters: list
    x0_truth: np.ndarray
    x0_est: np.ndarray
    P0: np.ndarray
    gib1: GeodeticPosition
    gib2: GeodeticPosition
    aps_cutoff: float = 200.0
    mc_runs: int = 25
    seed: int = 0
    out: str = "results"
    dt_truth: float = 0.01
    dt_filter: float = 1.0
    accel_std: float = 5e-5 * WGS84.gravity
    arw_deg_rt_hr: float = 0.02
    imu_noise: bool = True
    epsilon: float = 1e-6
    i_max: int = 20
    pi_floor: float = 1e-12
    rmse_form: str = "mean_abs"
    jobs: int = 1
    earth: EarthModel = field(default_factory=EarthModel)
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be >= 1")
        if self.rmse_form not in ("mean_abs", "conventional"):
            raise ValueError("rmse_form must be 'mean_abs' or 'conventional'")

    @property
    def ref(self) -> GeodeticPosition:
        """Tangent-plane origin: the surface point midway between the beacons."""
        return GeodeticPosition(0.5 * (self.gib1.lat + self.gib2.lat),
                                0.5 * (self.gib1.lon + self.gib2.lon), 0.0)

    def with_filters(self, filters) -> "RunConfig":
        return replace(self, filters=list(filters))


def expand_filters(entries, sigmas=(0.5, 2.0), basis="orthonormal", kappa=None) -> list:
    """Filter list; MC entries without ``sigma`` are repeated for every bandwidth."""
    out = []
    for e in entries:
        if isinstance(e, str):
            e = {"kind": e}
        kind = str(e["kind"]).upper()
        b = e.get("basis", basis)
        k = e.get("kappa", kappa)
        if kind.startswith("MC-") and e.get("sigma") is None:
            out += [FilterSpec(kind, float(s), b, k) for s in sigmas]
        else:
            s = e.get("sigma")
            out.append(FilterSpec(kind, None if s is None else float(s), b, k))
    return out


def _geo(v):
    return GeodeticPosition.from_degrees(float(v[0]), float(v[1]), float(v[2]) if len(v) > 2 else 0.0)


def _state(d):
    return np.array([math.radians(d["lat_deg"]), math.radians(d["lon_deg"]), float(d["Z"]),
                     *map(float, d.get("vel", (0, 0, 0))),
                     *np.radians(np.asarray(d.get("att_deg", (0, 0, 0)), float))])


def load_config(path=DEFAULT_CONFIG, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from a YAML file; keyword overrides win."""
    doc, base = load_yaml(path)
    e = doc.get("earth", {})
    earth = EarthModel(**e) if e else EarthModel()
    stages = load_stages(doc["scenario"], earth, base)
    noise = load_noise(doc["noise"], float(doc.get("aps_noise_scale", 1.0)))
    std = doc["initial_std"]
    P0 = np.diag(np.array([
        math.radians(std["lat_deg"]), math.radians(std["lon_deg"]), std["Z"],
        *[std["vel"]] * 3,
        math.radians(std["roll_deg"]), math.radians(std["pitch_deg"]), math.radians(std["yaw_deg"]),
    ], float) ** 2)
    mcc = doc.get("mcc", {})
    pn = doc.get("process_noise", {})
    sigmas = overrides.pop("sigmas", None) or doc.get("sigmas", (0.5, 2.0))
    basis = overrides.pop("basis", None) or doc.get("basis", "orthonormal")
    entries = overrides.pop("filters", None) or doc.get("filters", list(FILTER_KINDS))
    cfg = RunConfig(
        stages=stages,
        noise=noise,
        filters=expand_filters(entries, sigmas, basis, doc.get("kappa")),
        x0_truth=_state(doc["truth"]),
        x0_est=_state(doc["initial_estimate"]),
        P0=P0,
        gib1=_geo(doc["aps"]["gib1"]),
        gib2=_geo(doc["aps"]["gib2"]),
        aps_cutoff=float(doc["aps"].get("cutoff", 200.0)),
        mc_runs=int(doc.get("mc_runs", 25)),
        seed=int(doc.get("seed", 0)),
        out=str(doc.get("out", "results")),
        dt_truth=float(doc["truth"].get("dt", 0.01)),
        dt_filter=float(doc.get("dt_filter", 1.0)),
        accel_std=float(pn.get("accel_std_g", 5e-5)) * earth.gravity,
        arw_deg_rt_hr=float(pn.get("arw_deg_rt_hr", 0.02)),
        imu_noise=bool(doc.get("imu_noise", True)),
        epsilon=float(mcc.get("epsilon", 1e-6)),
        i_max=int(mcc.get("i_max", 20)),
        pi_floor=float(mcc.get("pi_floor", 1e-12)),
        rmse_form=str(doc.get("rmse_form", "mean_abs")),
        jobs=int(doc.get("jobs", 1)),
        earth=earth,
        source=doc,
    )
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.__post_init__()
    return cfg
