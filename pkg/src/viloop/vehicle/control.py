"""Geometric tracking controller on SO(3).

Attitude error is defined on the rotation group (e_R = vee(Rd^T R - R^T Rd)/2)
so large attitude deviations recover without Euler-angle pathologies. The
adaptive terms of the flight-test controller are out of scope; gains are
fixed in VehicleParams.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from viloop.geometry import StateVector, vee
from viloop.vehicle.dynamics import ControlCommand, VehicleParams
from viloop.vehicle.trajectory import ReferencePoint

log = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])


def desired_attitude(force: np.ndarray, yaw: float) -> np.ndarray:
    """Rotation matrix with b3 along the force and b1 steered by yaw."""
    b3 = force / np.linalg.norm(force)
    b1_yaw = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    b2 = np.cross(b3, b1_yaw)
    n2 = np.linalg.norm(b2)
    if n2 < 1e-9:  # thrust parallel to the yaw heading; pick any consistent b2
        b2 = np.cross(b3, np.array([0.0, 1.0, 0.0]))
        n2 = np.linalg.norm(b2)
    b2 /= n2
    b1 = np.cross(b2, b3)
    return np.column_stack([b1, b2, b3])


def geometric_control(state: StateVector, ref: ReferencePoint,
                      params: VehicleParams) -> ControlCommand:
    r = state.pose.rotation.matrix
    e_x = state.pose.position - ref.position
    e_v = state.velocity - ref.velocity

    force_des = (params.mass * (params.gravity * E3 + ref.acceleration)
                 - params.kx * e_x - params.kv * e_v)
    if np.linalg.norm(force_des) < 1e-9:
        force_des = 1e-9 * E3  # free-fall corner case: keep b3 defined
    thrust = float(force_des @ (r @ E3))
    if not 0.0 <= thrust <= params.max_thrust:
        log.debug("thrust command %.1f N clamped to [0, %.1f]",
                  thrust, params.max_thrust)
    thrust = min(max(thrust, 0.0), params.max_thrust)

    r_des = desired_attitude(force_des, ref.yaw)
    e_r = 0.5 * vee(r_des.T @ r - r.T @ r_des)
    omega_des = np.array([0.0, 0.0, ref.yaw_rate])
    e_omega = state.angular_velocity - r.T @ r_des @ omega_des

    j_omega = params.inertia @ state.angular_velocity
    moment = (-params.kr * e_r - params.komega * e_omega
              + np.cross(state.angular_velocity, j_omega))
    return ControlCommand(thrust, moment)
