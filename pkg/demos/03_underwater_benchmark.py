"""A short Monte-Carlo run of the underwater navigation scenario.

The vehicle dives, turns and cruises for 900 s.  Acoustic position fixes stop
at 200 s, after which horizontal position is only dead-reckoned.  Pass a run
count to change the ensemble size (default 3; the full table uses 25):

    python demos/03_underwater_benchmark.py 5
"""
import sys

import numpy as np

from mcnav.config import load_config
from mcnav.harness import ERROR_NAMES, bench

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 3

# %% The metric preset keeps every constant of the default scenario but gives
# the acoustic fixes metre-level noise.
cfg = load_config("metric_aps.yaml", mc_runs=runs)
res = bench(cfg, progress=lambda i, n: print(f"trial {i}/{n}", file=sys.stderr))

# %% Time-averaged RMSE per state (metres, m/s, degrees).
width = max(map(len, res.labels))
print(" " * width, *[f"{n:>8s}" for n in ERROR_NAMES])
for lab, row in zip(res.labels, res.armse):
    print(f"{lab:{width}s}", *[f"{v:8.4f}" for v in row])

# %% After the fixes stop, horizontal error grows for every filter.
t = res.t
early, late = (t >= 100) & (t <= 200), (t >= 700) & (t <= 900)
print("\nnorth RMSE, mean over [100, 200] s -> [700, 900] s")
for lab, r in zip(res.labels, res.rmse):
    print(f"  {lab:{width}s} {r[early, 0].mean():7.3f} -> {r[late, 0].mean():7.3f}")

# %% Relative cost, normalised to the plain polynomial-chaos filter.
print("\nrelative time:", {k: round(v, 2) for k, v in res.relative_time().items()})
print("mean FPI iterations:", {k: round(v["mean_iterations"], 2)
                               for k, v in res.convergence.items() if v["mean_iterations"]})
