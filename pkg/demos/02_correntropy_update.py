"""A single measurement update hit by an outlier, with and without correntropy.

Run with ``python demos/02_correntropy_update.py``.
"""
import numpy as np

from mcnav.filters import PceRule, SqrtBelief, update
from mcnav.mcc import MccConfig, correntropy_weights, mc_update, weighted_errors

# %% Two states measured directly.  Channel 0 sees ordinary noise, channel 1 an
# impulsive error of eight standard deviations.
prior = SqrtBelief(np.zeros(2), np.eye(2))
y = np.array([0.5, 8.0])
s_R = np.ones(2)
h = lambda X: X

mse = update(prior, y, h, s_R, PceRule())
print("MSE posterior mean       ", mse.mean.round(4))

# %% The fixed-point iteration reweights each channel by a Gaussian kernel of
# its whitened residual.  Small bandwidths distrust more.
for sigma in (0.5, 2.0, 5.0, 1e8):
    res = mc_update(prior, y, h, s_R, PceRule(), MccConfig(sigma=sigma))
    e = weighted_errors(res.belief.mean, prior, y, res.belief.mean, s_R)
    w = correntropy_weights(e, MccConfig(sigma=sigma), 2)
    print(f"sigma={sigma:<8g} mean {res.belief.mean.round(4)}  pi_R {w.pi_R.round(4)}  "
          f"iterations {res.iterations}  var {np.diag(res.belief.cov).round(4)}")

# %% The kernel weight of a channel never rises as its residual grows.
cfg = MccConfig(sigma=2.0)
for r in (0.0, 1.0, 2.0, 4.0, 8.0):
    print(f"residual {r:4.1f} -> weight {correntropy_weights(np.array([r]), cfg, 0).pi_R[0]:.4g}")
