"""Simulated quadrotor: dynamics, geometric control, references, IMU."""

from viloop.vehicle.control import geometric_control
from viloop.vehicle.dynamics import (
    ControlCommand,
    VehicleParams,
    acceleration,
    dynamics_step,
)
from viloop.vehicle.imu import ImuModel, ImuNoiseParams, ImuSample, allan_deviation
from viloop.vehicle.trajectory import (
    ReferencePoint,
    ReferenceTrajectory,
    make_trajectory,
)

__all__ = [
    "ControlCommand",
    "ImuModel",
    "ImuNoiseParams",
    "ImuSample",
    "ReferencePoint",
    "ReferenceTrajectory",
    "VehicleParams",
    "acceleration",
    "allan_deviation",
    "dynamics_step",
    "geometric_control",
    "make_trajectory",
]
