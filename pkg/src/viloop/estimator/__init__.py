"""Delayed-measurement error-state Kalman filter and consistency checks."""

from viloop.estimator.consistency import (
    ConsistencyReport,
    consistency_stats,
    nees_series,
)
from viloop.estimator.filter import (
    DelayedPoseFilter,
    EstimatorConfig,
    FilterState,
    PoseMeasurement,
    ekf_predict,
    ekf_update,
    initial_filter_state,
)

__all__ = [
    "ConsistencyReport",
    "DelayedPoseFilter",
    "EstimatorConfig",
    "FilterState",
    "PoseMeasurement",
    "consistency_stats",
    "ekf_predict",
    "ekf_update",
    "initial_filter_state",
    "nees_series",
]
