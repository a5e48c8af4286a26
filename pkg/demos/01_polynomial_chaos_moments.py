"""How a second-order Hermite chaos propagates a Gaussian through a nonlinearity.

Run with ``python demos/01_polynomial_chaos_moments.py``.
"""
import numpy as np

from mcnav.filters import (
    CkfRule,
    PceRule,
    SqrtBelief,
    UkfRule,
    collocation_points,
    fit_coefficients,
    hermite_basis,
    pckf_predict,
    predict,
)

# %% Collocation points are the roots of the cubic Hermite polynomial, one axis
# at a time, plus the centre.
cs = collocation_points(2)
print("collocation points for n=2:\n", cs.xi)

# %% Fit the chaos coefficients of f(xi) = xi^2 in both bases.  The orthonormal
# basis scales H2 by 1/sqrt(2), so its coefficient carries the variance directly.
for mode in ("paper", "orthonormal"):
    basis = hermite_basis(collocation_points(1), mode)
    xi = collocation_points(1).xi
    print(f"{mode:12s} coefficients of x^2:", fit_coefficients(xi**2, basis)[0])

# %% A quadratic of a Gaussian: f(x) = x^2 with x ~ N(0, 1) has mean 1 and
# variance 2.  The orthonormal chaos gets both; the unnormalised basis halves
# the variance.
b = SqrtBelief(np.zeros(1), np.eye(1))
for mode in ("paper", "orthonormal"):
    out = pckf_predict(b, lambda X: X * X, np.zeros((1, 1)), mode=mode)
    print(f"{mode:12s} mean {out.mean[0]:.3f}  variance {out.cov[0, 0]:.3f}")

# %% Compare against sigma-point rules and a large Monte-Carlo sample on a
# mildly nonlinear polar-to-Cartesian map.
rng = np.random.default_rng(0)
mean = np.array([10.0, 0.4])
P = np.diag([0.5**2, 0.1**2])
belief = SqrtBelief.from_cov(mean, P)
polar = lambda X: np.vstack([X[0] * np.cos(X[1]), X[0] * np.sin(X[1])])

sample = rng.multivariate_normal(mean, P, 400_000).T
ref = polar(sample)
print("\nMonte-Carlo   mean", ref.mean(axis=1).round(4), " cov diag", np.cov(ref).diagonal().round(4))
for name, rule in (("UKF", UkfRule()), ("CKF", CkfRule()), ("PCKF", PceRule())):
    out = predict(belief, polar, np.zeros((2, 2)), rule)
    print(f"{name:12s}  mean", out.mean.round(4), " cov diag", out.cov.diagonal().round(4))
