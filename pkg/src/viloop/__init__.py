"""viloop: a vision-in-the-loop UAV simulation framework.

A simulated quadrotor's ground-truth pose drives a Gaussian-splat renderer;
rendered frames feed a keypoint detector and an EPnP + confidence-fusion pose
pipeline; a delayed-measurement Kalman filter and a geometric tracking
controller close the loop. A scenario harness runs the experiment and reports
range-normalized pose-error metrics.
"""

from viloop.geometry import (
    Pose,
    Rotation,
    StateVector,
    compose,
    exp_map,
    geodesic_deg,
    hat,
    inverse,
    log_map,
    vee,
)

__version__ = "0.1.0"

__all__ = [
    "Pose",
    "Rotation",
    "StateVector",
    "compose",
    "exp_map",
    "geodesic_deg",
    "hat",
    "inverse",
    "log_map",
    "vee",
    "__version__",
]
