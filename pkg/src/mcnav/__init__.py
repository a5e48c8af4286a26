"""Robust square-root Kalman filtering for inertial underwater navigation.

The package is split by concern:

``geodesy``   Earth model, rotations and frame conversions.
``dynamics``  strapdown mechanisation, scenario truth and IMU synthesis.
``sensors``   heavy-tailed noise, measurement models and acoustic fixes.
``filters``   square-root predict/update with PCE, unscented and cubature points.
``mcc``       the maximum-correntropy fixed-point update.
``harness``   scenario runner, Monte-Carlo benchmark, metrics and flop counts.
"""

__version__ = "0.1.0"
