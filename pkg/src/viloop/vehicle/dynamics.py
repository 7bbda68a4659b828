"""Quadrotor rigid-body dynamics with a 4th-order Lie-group integrator.

Newton-Euler model, world frame z-up with gravity -z, body z the thrust axis:

    x_dot = v
    m v_dot = -m g e3 + f R e3
    R_dot = R hat(Omega)
    J Omega_dot = M - Omega x (J Omega)

Integration is Runge-Kutta-Munthe-Kaas: the attitude substate is a local
exponential coordinate around the step's initial rotation, so R stays exactly
on SO(3) at machine precision and the classic RK4 order is preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from viloop.geometry import Pose, Rotation, StateVector

GRAVITY = 9.81


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1.5                     # kg
    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([0.02, 0.02, 0.04]))  # kg m^2
    gravity: float = GRAVITY
    max_thrust: float = 40.0              # N, rotor-axis clamp
    kx: float = 12.0
    kv: float = 7.0
    kr: float = 1.4
    komega: float = 0.25

    def __post_init__(self):
        j = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if j.shape != (3, 3) or not np.allclose(j, j.T) \
                or np.any(np.linalg.eigvalsh(j) <= 0):
            raise ValueError("inertia must be symmetric positive definite")
        if min(self.kx, self.kv, self.kr, self.komega) <= 0:
            raise ValueError("control gains must be positive")
        object.__setattr__(self, "inertia", j)


@dataclass(frozen=True)
class ControlCommand:
    thrust: float               # N along body z
    moment: np.ndarray          # N m, body frame

    def __post_init__(self):
        m = np.asarray(self.moment, dtype=float)
        if m.shape != (3,) or not np.all(np.isfinite(m)) \
                or not math.isfinite(self.thrust):
            raise ValueError("command must be a finite thrust and 3-vector moment")
        object.__setattr__(self, "moment", m)


@numba.njit(cache=True)
def _deriv(y, q0, f_over_m, g, moment, j_diag_inv, j_mat):
    """State derivative in RKMK coordinates y = (x, v, sigma, omega)."""
    out = np.empty(12)
    out[0:3] = y[3:6]

    # R = R(q0) * exp(sigma); build the matrix directly from the pair
    sx, sy, sz = y[6], y[7], y[8]
    angle = math.sqrt(sx * sx + sy * sy + sz * sz)
    if angle < 1e-12:
        dw, dx, dy_, dz = 1.0, 0.5 * sx, 0.5 * sy, 0.5 * sz
    else:
        half = 0.5 * angle
        s = math.sin(half) / angle
        dw, dx, dy_, dz = math.cos(half), sx * s, sy * s, sz * s
    w1, x1, y1, z1 = q0
    qw = w1 * dw - x1 * dx - y1 * dy_ - z1 * dz
    qx = w1 * dx + x1 * dw + y1 * dz - z1 * dy_
    qy = w1 * dy_ - x1 * dz + y1 * dw + z1 * dx
    qz = w1 * dz + x1 * dy_ - y1 * dx + z1 * dw
    # third column of R(q): thrust direction in world frame
    b3x = 2.0 * (qx * qz + qw * qy)
    b3y = 2.0 * (qy * qz - qw * qx)
    b3z = 1.0 - 2.0 * (qx * qx + qy * qy)

    out[3] = f_over_m * b3x
    out[4] = f_over_m * b3y
    out[5] = f_over_m * b3z - g

    # sigma_dot = dexpinv(-sigma, omega) for the right-translation convention
    # R = R0 exp(sigma): omega + 0.5 sigma x omega + sigma x (sigma x omega)/12,
    # truncated series (sufficient for 4th order)
    ox, oy, oz = y[9], y[10], y[11]
    c1x = sy * oz - sz * oy
    c1y = sz * ox - sx * oz
    c1z = sx * oy - sy * ox
    c2x = sy * c1z - sz * c1y
    c2y = sz * c1x - sx * c1z
    c2z = sx * c1y - sy * c1x
    out[6] = ox + 0.5 * c1x + c2x / 12.0
    out[7] = oy + 0.5 * c1y + c2y / 12.0
    out[8] = oz + 0.5 * c1z + c2z / 12.0

    # J omega_dot = M - omega x (J omega)
    jo0 = j_mat[0, 0] * ox + j_mat[0, 1] * oy + j_mat[0, 2] * oz
    jo1 = j_mat[1, 0] * ox + j_mat[1, 1] * oy + j_mat[1, 2] * oz
    jo2 = j_mat[2, 0] * ox + j_mat[2, 1] * oy + j_mat[2, 2] * oz
    tx = moment[0] - (oy * jo2 - oz * jo1)
    ty = moment[1] - (oz * jo0 - ox * jo2)
    tz = moment[2] - (ox * jo1 - oy * jo0)
    out[9] = j_diag_inv[0, 0] * tx + j_diag_inv[0, 1] * ty + j_diag_inv[0, 2] * tz
    out[10] = j_diag_inv[1, 0] * tx + j_diag_inv[1, 1] * ty + j_diag_inv[1, 2] * tz
    out[11] = j_diag_inv[2, 0] * tx + j_diag_inv[2, 1] * ty + j_diag_inv[2, 2] * tz
    return out


@numba.njit(cache=True)
def _rk4_steps(x, v, q0, omega, f_over_m, g, moment, j_inv, j_mat, dt, n_steps):
    """n_steps of RKMK4 under a constant command; returns final flat state."""
    q = q0.copy()
    y = np.zeros(12)
    y[0:3] = x
    y[3:6] = v
    y[9:12] = omega
    for _ in range(n_steps):
        y[6:9] = 0.0
        k1 = _deriv(y, q, f_over_m, g, moment, j_inv, j_mat)
        k2 = _deriv(y + 0.5 * dt * k1, q, f_over_m, g, moment, j_inv, j_mat)
        k3 = _deriv(y + 0.5 * dt * k2, q, f_over_m, g, moment, j_inv, j_mat)
        k4 = _deriv(y + dt * k3, q, f_over_m, g, moment, j_inv, j_mat)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        # fold the attitude increment into the quaternion: q <- q * exp(sigma)
        sx, sy, sz = y[6], y[7], y[8]
        angle = math.sqrt(sx * sx + sy * sy + sz * sz)
        if angle < 1e-12:
            dw, dx, dy_, dz = 1.0, 0.5 * sx, 0.5 * sy, 0.5 * sz
        else:
            half = 0.5 * angle
            s = math.sin(half) / angle
            dw, dx, dy_, dz = math.cos(half), sx * s, sy * s, sz * s
        w1, x1, y1, z1 = q[0], q[1], q[2], q[3]
        q[0] = w1 * dw - x1 * dx - y1 * dy_ - z1 * dz
        q[1] = w1 * dx + x1 * dw + y1 * dz - z1 * dy_
        q[2] = w1 * dy_ - x1 * dz + y1 * dw + z1 * dx
        q[3] = w1 * dz + x1 * dy_ - y1 * dx + z1 * dw
        n = math.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
        for k in range(4):
            q[k] /= n
        if q[0] < 0.0:
            for k in range(4):
                q[k] = -q[k]
    return y, q


def acceleration(state: StateVector, cmd: ControlCommand,
                 params: VehicleParams) -> np.ndarray:
    """World-frame linear acceleration under the command (for the IMU model)."""
    b3 = state.pose.rotation.matrix[:, 2]
    return (cmd.thrust / params.mass) * b3 - np.array([0.0, 0.0, params.gravity])


def dynamics_step(state: StateVector, cmd: ControlCommand, dt: float,
                  params: VehicleParams, n_steps: int = 1) -> StateVector:
    """Advance the state by n_steps of size dt under a constant command."""
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must lie in (0, 0.01], got {dt}")
    if not 0.0 <= cmd.thrust <= params.max_thrust:
        raise ValueError(f"thrust {cmd.thrust} outside [0, {params.max_thrust}]")
    j = params.inertia
    y, q = _rk4_steps(state.pose.position, state.velocity,
                      state.pose.rotation.quat.copy(), state.angular_velocity,
                      cmd.thrust / params.mass, params.gravity,
                      cmd.moment, np.linalg.inv(j), j, dt, n_steps)
    return StateVector(
        Pose(y[0:3].copy(), Rotation(q)),
        y[3:6].copy(), y[9:12].copy(),
        state.timestamp + n_steps * dt,
    )
