"""Scenario runner, Monte-Carlo benchmark and error metrics.

Randomness
----------
Every random draw comes from a stream keyed by ``(seed, trial, channel)``:
channel 0 is the IMU and channels 1..9 are the measurement channels in the
order of :data:`mcnav.sensors.CHANNELS`.  The truth trajectory is noise free
and shared by all trials.  Filters never draw random numbers, so adding or
removing a filter cannot change the data any other filter sees.
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .config import FilterSpec, RunConfig
from .dynamics import ImuSeries, TruthSeries, generate_truth, imu_noise_std, process_noise, propagate, synthesize_imu
from .errors import MismatchedLengths, NavError
from .filters import SqrtBelief, make_rule, predict, update
from .flops import flops_table
from .geodesy import curvature_radii, wrap_angle
from .mcc import MccConfig, mc_update
from .sensors import ANGLE_CHANNELS, CHANNELS, MODELS, ApsGeometry, equivalent_sqrt_R, synthesize_measurements

ERROR_NAMES = ("north", "east", "down", "vN", "vE", "vD", "roll", "pitch", "yaw")
STATE_ANGLES = (1, 6, 7, 8)
IMU_CHANNEL = 0


# --- scenario and data --------------------------------------------------------

@dataclass
class Scenario:
    truth: TruthSeries          # full-rate truth
    truth_filter: TruthSeries   # truth at the filter rate
    geom: ApsGeometry


_SCENARIO_CACHE: dict = {}


def build_scenario(cfg: RunConfig) -> Scenario:
    """Truth at ``dt_truth`` and at the filter rate; cached per configuration."""
    key = (tuple((s.t_start, s.t_end, s.accel_ned, s.rates) for s in cfg.stages),
           tuple(cfg.x0_truth), cfg.dt_truth, cfg.dt_filter, cfg.earth,
           (cfg.gib1, cfg.gib2))
    if key not in _SCENARIO_CACHE:
        truth = generate_truth(cfg.stages, cfg.x0_truth, cfg.dt_truth, cfg.earth)
        geom = ApsGeometry(cfg.gib1, cfg.gib2, cfg.ref, cfg.earth)
        _SCENARIO_CACHE[key] = Scenario(truth, truth.decimate(cfg.dt_filter), geom)
    return _SCENARIO_CACHE[key]


def stream(seed: int, trial: int, channel: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial, channel))))


@dataclass
class TrialData:
    imu: ImuSeries
    measurements: list


def trial_data(cfg: RunConfig, scn: Scenario, trial: int, seed: int | None = None) -> TrialData:
    seed = cfg.seed if seed is None else seed
    if cfg.imu_noise:
        noise = imu_noise_std(cfg.dt_filter, cfg.earth, cfg.accel_std, cfg.arw_deg_rt_hr)
    else:
        noise = (0.0, 0.0)
    imu = synthesize_imu(scn.truth_filter, cfg.stages, noise, stream(seed, trial, IMU_CHANNEL), cfg.earth)
    streams = {ch: stream(seed, trial, i + 1) for i, ch in enumerate(CHANNELS)}
    meas = synthesize_measurements(scn.truth_filter, imu, cfg.noise, scn.geom, cfg.aps_cutoff,
                                   earth=cfg.earth, streams=streams)
    return TrialData(imu, meas)


# --- one filter over one trial ------------------------------------------------

@dataclass
class FilterRun:
    spec: FilterSpec
    t: np.ndarray
    estimates: np.ndarray       # (K+1, 9), row 0 is the initial estimate
    iterations: np.ndarray      # FPI iterations per step (zeros for MSE filters)
    nonconverged: int = 0
    failures: int = 0
    elapsed: float = 0.0


def run_filter(spec: FilterSpec, cfg: RunConfig, scn: Scenario, data: TrialData) -> FilterRun:
    """Fold one estimator over a trial: predict with the IMU, then update."""
    rule = make_rule(spec.base, spec.basis, spec.kappa)
    sqrt_Q = np.sqrt(process_noise(cfg.earth, cfg.accel_std, cfg.arw_deg_rt_hr, cfg.dt_filter))
    mcc = MccConfig(spec.sigma, cfg.epsilon, cfg.i_max, cfg.pi_floor) if spec.is_mc else None
    sqrt_R = {kind: equivalent_sqrt_R(cfg.noise, kind) for kind in MODELS}
    dt = cfg.dt_filter
    belief = SqrtBelief.from_cov(cfg.x0_est, cfg.P0)
    K = len(data.measurements)
    est = np.empty((K + 1, 9))
    est[0] = belief.mean
    iters = np.zeros(K, dtype=int)
    nonconv = failures = 0
    start = time.perf_counter()
    for k, meas in enumerate(data.measurements):
        u = data.imu[k]
        try:
            belief = predict(belief, lambda X: propagate(X, u, dt, cfg.earth), sqrt_Q, rule, STATE_ANGLES)
        except (NavError, np.linalg.LinAlgError):
            failures += 1
        h = MODELS[meas.kind]
        angles = ANGLE_CHANNELS[meas.kind]
        try:
            if mcc is None:
                belief = update(belief, meas.values, h, sqrt_R[meas.kind], rule, angles, STATE_ANGLES)
            else:
                res = mc_update(belief, meas.values, h, sqrt_R[meas.kind], rule, mcc, angles, STATE_ANGLES)
                belief = res.belief
                iters[k] = res.iterations
                nonconv += not res.converged
        except (NavError, np.linalg.LinAlgError):
            failures += 1
        est[k + 1] = belief.mean
    elapsed = time.perf_counter() - start
    t = np.r_[scn.truth_filter.t[0], [m.t for m in data.measurements]]
    return FilterRun(spec, t, est, iters, nonconv, failures, elapsed)


def run_single(cfg: RunConfig, spec: FilterSpec, seed: int, trial: int = 0):
    """Estimate and truth series (both ``(K+1, 9)``) for one filter and seed."""
    scn = build_scenario(cfg)
    data = trial_data(cfg, scn, trial, seed)
    run = run_filter(spec, cfg, scn, data)
    return run, scn.truth_filter


# --- metrics ------------------------------------------------------------------

def state_errors(est, truth, earth=None) -> np.ndarray:
    """Estimation errors in north/east/down metres, m/s and degrees.

    Latitude and longitude errors are scaled by the local radii at the true
    position; angle errors are wrapped before conversion.
    """
    est = np.asarray(est, float)
    truth = np.asarray(truth, float)
    if est.shape != truth.shape:
        raise MismatchedLengths(f"estimate {est.shape} vs truth {truth.shape}")
    e = est - truth
    e[..., STATE_ANGLES] = wrap_angle(e[..., STATE_ANGLES])
    L, Z = truth[..., 0], truth[..., 2]
    R_M, R_N = curvature_radii(L, *(() if earth is None else (earth,)))
    out = np.empty_like(e)
    out[..., 0] = e[..., 0] * (R_M + Z)
    out[..., 1] = e[..., 1] * (R_N + Z) * np.cos(L)
    out[..., 2] = -e[..., 2]
    out[..., 3:6] = e[..., 3:6]
    out[..., 6:9] = np.degrees(e[..., 6:9])
    return out


def rmse(errors, form: str = "mean_abs") -> np.ndarray:
    """Ensemble error per time step from errors of shape ``(runs, K, ...)``.

    ``form="mean_abs"`` averages the per-run root of the squared error, i.e.
    the mean absolute error across runs.  ``form="conventional"`` is the root
    of the mean squared error.
    """
    try:
        e = np.asarray(errors, dtype=float)
    except ValueError as exc:
        raise MismatchedLengths("runs have different lengths") from exc
    if e.ndim < 2 or e.shape[0] < 1:
        raise MismatchedLengths("need an ensemble of at least one run")
    if form == "mean_abs":
        return np.mean(np.sqrt(e * e), axis=0)
    if form == "conventional":
        return np.sqrt(np.mean(e * e, axis=0))
    raise ValueError(f"unknown rmse form {form!r}")


def armse(rmse_series, window: slice | None = None) -> np.ndarray:
    """Time average of an RMSE series over ``window`` (default: all of it)."""
    r = np.asarray(rmse_series, float)
    if window is not None:
        r = r[window]
    if len(r) == 0:
        raise MismatchedLengths("empty RMSE series")
    return r.mean(axis=0)


# --- benchmark ----------------------------------------------------------------

@dataclass
class RunResult:
    labels: list
    t: np.ndarray               # (K,) times of the RMSE rows
    rmse: np.ndarray            # (filters, K, 9)
    armse: np.ndarray           # (filters, 9)
    elapsed: dict               # label -> total wall-clock seconds
    convergence: dict           # label -> {steps, nonconverged, mean_iterations}
    failures: dict              # label -> count
    seed: int
    mc_runs: int
    flops: list = field(default_factory=list)

    def relative_time(self, ref: str = "PCKF") -> dict:
        base = self.elapsed.get(ref) or next(iter(self.elapsed.values()))
        return {k: v / base for k, v in self.elapsed.items()}


def _trial(cfg: RunConfig, trial: int):
    scn = build_scenario(cfg)
    data = trial_data(cfg, scn, trial)
    truth = scn.truth_filter.x[1:]
    out = []
    for spec in cfg.filters:
        run = run_filter(spec, cfg, scn, data)
        out.append((state_errors(run.estimates[1:], truth, cfg.earth), run))
    return trial, out


def bench(cfg: RunConfig, out: str | Path | None = None, progress=None) -> RunResult:
    """Monte-Carlo comparison of every configured filter on shared data.

    With ``out`` set the CSV artifacts and ``meta.json`` are written there.
    """
    scn = build_scenario(cfg)
    trials = range(cfg.mc_runs)
    if cfg.jobs != 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=cfg.jobs)(delayed(_trial)(cfg, i) for i in trials)
    else:
        results = []
        for i in trials:
            results.append(_trial(cfg, i))
            if progress:
                progress(i + 1, cfg.mc_runs)
    results.sort(key=lambda r: r[0])

    labels = [s.label for s in cfg.filters]
    nf = len(labels)
    errs = [np.stack([r[1][j][0] for r in results]) for j in range(nf)]
    runs = [[r[1][j][1] for r in results] for j in range(nf)]
    R = np.stack([rmse(e, cfg.rmse_form) for e in errs])
    A = np.stack([armse(r) for r in R])
    conv, elapsed, fails = {}, {}, {}
    for lab, spec, rs in zip(labels, cfg.filters, runs):
        steps = sum(len(r.iterations) for r in rs)
        it = np.concatenate([r.iterations for r in rs])
        conv[lab] = {
            "steps": int(steps),
            "nonconverged": int(sum(r.nonconverged for r in rs)),
            "mean_iterations": float(it.mean()) if spec.is_mc else 0.0,
            "max_iterations": int(it.max()) if spec.is_mc else 0,
        }
        elapsed[lab] = float(sum(r.elapsed for r in rs))
        fails[lab] = int(sum(r.failures for r in rs))
    result = RunResult(labels, scn.truth_filter.t[1:], R, A, elapsed, conv, fails,
                       cfg.seed, cfg.mc_runs, flops_table(n=9))
    if out is not None:
        write_results(result, out)
    return result


# --- output -------------------------------------------------------------------

def _fmt(v) -> str:
    return format(float(v), ".10g")


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    return buf.getvalue()


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_results(result: RunResult, out) -> Path:
    """``armse.csv``, ``rmse_<state>.csv``, ``flops.csv`` and ``meta.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "armse.csv", _csv_text(
        ["filter", *ERROR_NAMES], [[lab, *row] for lab, row in zip(result.labels, result.armse)]))
    emit_plot_data(result, out)
    _write(out / "flops.csv", _csv_text(
        ["filter", "n", "m", "N_p", "T", "flops"],
        [[r["filter"], r["n"], r["m"], r["N_p"], r["T"], r["flops"]] for r in result.flops]))
    meta = {
        "seed": result.seed,
        "mc_runs": result.mc_runs,
        "filters": result.labels,
        "versions": {"mcnav": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "convergence": result.convergence,
        "failures": result.failures,
        "elapsed_s": result.elapsed,
        "relative_time": result.relative_time(),
    }
    _write(out / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def emit_plot_data(result: RunResult, out) -> list:
    """One ``rmse_<state>.csv`` per state: time column plus one column per filter."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, name in enumerate(ERROR_NAMES):
        rows = [[t, *result.rmse[:, k, j]] for k, t in enumerate(result.t)]
        p = out / f"rmse_{name}.csv"
        _write(p, _csv_text(["t", *result.labels], rows))
        paths.append(p)
    return paths


def truth_csv(truth: TruthSeries) -> str:
    rows = []
    for t, x in zip(truth.t, truth.x):
        rows.append([t, math.degrees(x[0]), math.degrees(x[1]), x[2], *x[3:6], *np.degrees(x[6:9])])
    return _csv_text(["t", "L_deg", "l_deg", "Z_m", "vN", "vE", "vD", "phi_deg", "theta_deg", "psi_deg"], rows)


def imu_csv(imu: ImuSeries) -> str:
    rows = [[t, *f, *w] for t, f, w in zip(imu.t, imu.f_b, imu.w_ib_b)]
    return _csv_text(["t", "fx", "fy", "fz", "wx", "wy", "wz"], rows)


def measurements_csv(meas: list) -> str:
    rows = []
    for m in meas:
        v = m.values
        row = [m.t, m.kind, *v[:4], *np.degrees(v[4:7])]
        row += [math.degrees(v[7]), math.degrees(v[8])] if len(v) == 9 else ["", ""]
        rows.append(row)
    return _csv_text(["t", "kind", "vN", "vE", "vD", "Z", "phi_deg", "theta_deg", "psi_deg", "L_deg", "l_deg"], rows)


def simulate(cfg: RunConfig, out, trial: int = 0) -> list:
    """Write truth, IMU and measurement CSVs for one trial."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    scn = build_scenario(cfg)
    data = trial_data(cfg, scn, trial)
    files = {"truth.csv": truth_csv(scn.truth_filter),
             "imu.csv": imu_csv(data.imu), "measurements.csv": measurements_csv(data.measurements)}
    for name, text in files.items():
        _write(out / name, text)
    return [out / n for n in files]
