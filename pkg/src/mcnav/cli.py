"""Command line entry point: ``mcnav {simulate,run,bench,flops}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import DEFAULT_CONFIG, expand_filters, load_config
from .flops import REFERENCE_COUNTS, fit_reference_counts, flops_table
from .harness import ERROR_NAMES, _csv_text, _write, bench, run_single, simulate, state_errors


def _list(text, cast=str):
    return [cast(s) for s in text.split(",") if s.strip()] if text else None


def _config(args):
    cfg = load_config(args.config, seed=args.seed, mc_runs=getattr(args, "runs", None))
    if args.filters or args.sigma or args.basis:
        entries = _list(args.filters) or [f.kind for f in cfg.filters]
        entries = list(dict.fromkeys(entries))
        sigmas = _list(args.sigma, float) or cfg.source.get("sigmas", (0.5, 2.0))
        basis = args.basis or cfg.source.get("basis", "orthonormal")
        cfg.filters = expand_filters(entries, sigmas, basis, cfg.source.get("kappa"))
    return cfg


def cmd_simulate(args):
    cfg = _config(args)
    for p in simulate(cfg, args.out):
        print(p)


def cmd_run(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.filters[0]
    run, truth = run_single(cfg, spec, cfg.seed)
    err = state_errors(run.estimates[1:], truth.x[1:], cfg.earth)
    rows = [[t, *e] for t, e in zip(run.t[1:], err)]
    path = out / "errors.csv"
    _write(path, _csv_text(["t", *ERROR_NAMES], rows))
    mean_abs = np.abs(err).mean(axis=0)
    print(f"{spec.label}: seed {cfg.seed}, {len(rows)} steps, failures {run.failures}, "
          f"non-converged {run.nonconverged}")
    for name, v in zip(ERROR_NAMES, mean_abs):
        print(f"  {name:6s} {v:.6g}")
    print(path)


def cmd_bench(args):
    cfg = _config(args)

    def progress(i, n):
        print(f"trial {i}/{n}", file=sys.stderr)

    res = bench(cfg, args.out, progress=progress)
    width = max(len(s) for s in res.labels)
    print(" " * width, *[f"{n:>10s}" for n in ERROR_NAMES])
    for lab, row in zip(res.labels, res.armse):
        print(f"{lab:{width}s}", *[f"{v:10.4g}" for v in row])
    print(f"written to {args.out}")


def cmd_flops(args):
    rows = flops_table(n=args.n, m=args.m, T=args.T)
    print(f"{'filter':8s} {'N_p':>4s} {'flops':>12s} {'reference':>9s}")
    for r in rows:
        print(f"{r['filter']:8s} {r['N_p']:4d} {r['flops']:12.2f} {REFERENCE_COUNTS[r['filter']]:9d}")
    m, T, res, score = fit_reference_counts(n=args.n)
    print(f"best fit to the reference counts: m={m}, T={T}, max relative residual {score:.3g}")
    for k, v in res.items():
        print(f"  {k:8s} residual {v:+.3f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "flops.csv", _csv_text(
            ["filter", "n", "m", "N_p", "T", "flops"],
            [[r["filter"], r["n"], r["m"], r["N_p"], r["T"], r["flops"]] for r in rows]))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG,
                        help="YAML config (a bundled name such as metric_aps.yaml, or a path)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--filters", help="comma-separated kinds, e.g. PCKF,MC-PCKF")
    common.add_argument("--sigma", help="comma-separated kernel bandwidths for MC filters")
    common.add_argument("--basis", choices=("paper", "orthonormal"))
    common.add_argument("--out", default="results", help="output directory")

    p = argparse.ArgumentParser(prog="mcnav", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("simulate", parents=[common], help="write truth, IMU and measurement CSVs").set_defaults(fn=cmd_simulate)
    sub.add_parser("run", parents=[common], help="one filter, one seed").set_defaults(fn=cmd_run)
    b = sub.add_parser("bench", parents=[common], help="Monte-Carlo comparison table")
    b.add_argument("--runs", type=int, help="Monte-Carlo runs (overrides the config)")
    b.set_defaults(fn=cmd_bench)
    f = sub.add_parser("flops", parents=[common], help="closed-form flop counts")
    f.add_argument("-n", type=int, default=9)
    f.add_argument("-m", type=int, default=9)
    f.add_argument("-T", type=int, default=1)
    f.set_defaults(fn=cmd_flops, out=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.fn(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
