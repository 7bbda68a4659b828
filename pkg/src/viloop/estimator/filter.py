"""Delayed-measurement error-state Kalman filter for IMU + vision pose.

Nominal state: position, velocity, attitude, gyro bias, accel bias. The
15-dimensional error state (dx, dv, dtheta, dbg, dba) uses a multiplicative
body-frame attitude error R_true = R_nom exp(hat(dtheta)), which keeps the
covariance free of quaternion-norm pathologies.

Delay handling is rewind-replay over an event log: every predict and every
applied measurement is recorded inside a sliding window. A measurement whose
capture time lies in the past is inserted at its capture position and the log
is replayed to the present, so out-of-order arrivals reach exactly the state
that in-order processing would have produced. Measurements older than the
window are dropped and counted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from viloop.geometry import Pose, Rotation, hat
from viloop.vehicle.imu import ImuSample

log = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])
MAX_PREDICT_DT = 0.02


@dataclass(frozen=True)
class EstimatorConfig:
    gyro_noise_density: float = 8.7e-4
    gyro_bias_walk: float = 1e-5
    accel_noise_density: float = 1.4e-3
    accel_bias_walk: float = 1e-4
    gravity: float = 9.81
    buffer_window: float = 0.5        # s of rewind history
    outage_limit: float = 3.0         # s without a fix before degraded
    measurement_inflation: float = 1.5  # multiplies measurement covariance
    init_pos_sigma: float = 0.3
    init_vel_sigma: float = 0.3
    init_att_sigma: float = 0.1
    init_gyro_bias_sigma: float = 0.02
    init_accel_bias_sigma: float = 0.1

    def initial_covariance(self) -> np.ndarray:
        d = np.concatenate([
            np.full(3, self.init_pos_sigma ** 2),
            np.full(3, self.init_vel_sigma ** 2),
            np.full(3, self.init_att_sigma ** 2),
            np.full(3, self.init_gyro_bias_sigma ** 2),
            np.full(3, self.init_accel_bias_sigma ** 2),
        ])
        return np.diag(d)


@dataclass(frozen=True)
class FilterState:
    position: np.ndarray
    velocity: np.ndarray
    rotation: Rotation
    gyro_bias: np.ndarray
    accel_bias: np.ndarray
    cov: np.ndarray          # 15x15 over (dx, dv, dtheta, dbg, dba)
    timestamp: float

    @property
    def pose(self) -> Pose:
        return Pose(self.position, self.rotation)

    def position_sigma(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov)[0:3])


@dataclass(frozen=True)
class PoseMeasurement:
    """A vision (or truth-stream) pose fix, timestamped at capture."""

    pose: Pose                 # body in world
    position_cov: np.ndarray   # (3,3) m^2
    rotation_sigma: float      # rad, isotropic attitude noise
    capture_timestamp: float
    arrival_timestamp: float

    def __post_init__(self):
        cov = np.asarray(self.position_cov, dtype=float)
        if cov.shape != (3, 3) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("position_cov must be 3x3 SPD")
        if self.rotation_sigma <= 0:
            raise ValueError("rotation_sigma must be positive")
        if self.capture_timestamp > self.arrival_timestamp:
            raise ValueError("capture cannot postdate arrival")
        object.__setattr__(self, "position_cov", cov)


def ekf_predict(fs: FilterState, imu: ImuSample, dt: float,
                config: EstimatorConfig) -> FilterState:
    """Propagate nominal state and covariance with one bias-corrected sample."""
    if not 0.0 < dt <= MAX_PREDICT_DT:
        raise ValueError(f"predict dt must lie in (0, {MAX_PREDICT_DT}], got {dt}")
    if not (np.all(np.isfinite(imu.gyro)) and np.all(np.isfinite(imu.accel))):
        raise ValueError("non-finite IMU sample")

    omega = imu.gyro - fs.gyro_bias
    accel_b = imu.accel - fs.accel_bias
    r = fs.rotation.matrix
    accel_w = r @ accel_b - config.gravity * E3

    position = fs.position + fs.velocity * dt + 0.5 * accel_w * dt * dt
    velocity = fs.velocity + accel_w * dt
    rotation = fs.rotation @ Rotation.exp(omega * dt)

    f = np.eye(15)
    f[0:3, 3:6] = np.eye(3) * dt
    f[3:6, 6:9] = -r @ hat(accel_b) * dt
    f[3:6, 12:15] = -r * dt
    f[6:9, 6:9] = Rotation.exp(-omega * dt).matrix
    f[6:9, 9:12] = -np.eye(3) * dt

    q = np.zeros(15)
    q[3:6] = config.accel_noise_density ** 2 * dt
    q[6:9] = config.gyro_noise_density ** 2 * dt
    q[9:12] = config.gyro_bias_walk ** 2 * dt
    q[12:15] = config.accel_bias_walk ** 2 * dt

    cov = f @ fs.cov @ f.T + np.diag(q)
    cov = 0.5 * (cov + cov.T)
    return FilterState(position, velocity, rotation, fs.gyro_bias.copy(),
                       fs.accel_bias.copy(), cov, fs.timestamp + dt)


def ekf_update(fs: FilterState, meas: PoseMeasurement,
               config: EstimatorConfig) -> FilterState:
    """Joseph-form pose update: linear position residual, log-map attitude."""
    z = np.empty(6)
    z[0:3] = meas.pose.position - fs.position
    z[3:6] = (fs.rotation.inverse() @ meas.pose.rotation).log()

    h = np.zeros((6, 15))
    h[0:3, 0:3] = np.eye(3)
    h[3:6, 6:9] = np.eye(3)

    r_meas = np.zeros((6, 6))
    r_meas[0:3, 0:3] = meas.position_cov
    r_meas[3:6, 3:6] = meas.rotation_sigma ** 2 * np.eye(3)
    r_meas *= config.measurement_inflation

    p = fs.cov
    s = h @ p @ h.T + r_meas
    k = np.linalg.solve(s.T, h @ p.T).T   # P H^T S^-1 without forming inverses
    delta = k @ z
    ikh = np.eye(15) - k @ h
    cov = ikh @ p @ ikh.T + k @ r_meas @ k.T
    cov = 0.5 * (cov + cov.T)

    return FilterState(
        fs.position + delta[0:3],
        fs.velocity + delta[3:6],
        fs.rotation @ Rotation.exp(delta[6:9]),
        fs.gyro_bias + delta[9:12],
        fs.accel_bias + delta[12:15],
        cov, fs.timestamp,
    )


@dataclass
class _Event:
    time: float
    kind: str                      # "imu" | "meas"
    state_after: FilterState
    imu: ImuSample | None = None
    dt: float = 0.0
    meas: PoseMeasurement | None = None


class DelayedPoseFilter:
    """Owns the filter state and the rewind-replay event log."""

    def __init__(self, config: EstimatorConfig, initial: FilterState):
        self.config = config
        self.state = initial
        self.anchor = initial       # state just before the oldest logged event
        self.events: list[_Event] = []
        self.dropped_measurements = 0
        self.last_fix_time = initial.timestamp
        self.degraded = False

    # -- prediction ---------------------------------------------------------

    def predict(self, imu: ImuSample, dt: float) -> FilterState:
        self.state = ekf_predict(self.state, imu, dt, self.config)
        self.events.append(_Event(self.state.timestamp, "imu", self.state,
                                  imu=imu, dt=dt))
        self._prune()
        if self.state.timestamp - self.last_fix_time > self.config.outage_limit:
            self.degraded = True
        return self.state

    def _prune(self):
        horizon = self.state.timestamp - self.config.buffer_window
        idx = 0
        while idx < len(self.events) and self.events[idx].time < horizon:
            idx += 1
        if idx:
            self.anchor = self.events[idx - 1].state_after
            del self.events[:idx]

    # -- measurements -------------------------------------------------------

    def update_delayed(self, meas: PoseMeasurement) -> FilterState:
        """Apply a pose fix at its capture time, replaying the log forward."""
        capture = meas.capture_timestamp
        now = self.state.timestamp
        if capture > now + 1e-9:
            raise ValueError("measurement captured in the simulation future")
        if capture < self.anchor.timestamp - 1e-9:
            self.dropped_measurements += 1
            log.warning("dropping measurement %.3f s older than the buffer window",
                        self.anchor.timestamp - capture)
            return self.state

        # insertion point: after every event at or before the capture time
        pos = 0
        while pos < len(self.events) and self.events[pos].time <= capture + 1e-9:
            pos += 1
        base = self.events[pos - 1].state_after if pos else self.anchor

        updated = ekf_update(base, meas, self.config)
        event = _Event(capture, "meas", updated, meas=meas)
        self.events.insert(pos, event)
        state = updated
        for ev in self.events[pos + 1:]:
            if ev.kind == "imu":
                state = ekf_predict(state, ev.imu, ev.dt, self.config)
            else:
                state = ekf_update(state, ev.meas, self.config)
            ev.state_after = state
        self.state = state
        self.last_fix_time = max(self.last_fix_time, capture)
        self.degraded = (self.state.timestamp - self.last_fix_time
                         > self.config.outage_limit)
        return self.state

    def handle_no_fix(self, timestamp: float) -> FilterState:
        """A missed fix changes nothing; outage accounting only."""
        if timestamp - self.last_fix_time > self.config.outage_limit:
            self.degraded = True
        return self.state

    @property
    def outage_duration(self) -> float:
        return self.state.timestamp - self.last_fix_time


def initial_filter_state(pose: Pose, velocity, timestamp: float,
                         config: EstimatorConfig) -> FilterState:
    return FilterState(
        np.asarray(pose.position, dtype=float), np.asarray(velocity, dtype=float),
        pose.rotation, np.zeros(3), np.zeros(3),
        config.initial_covariance(), timestamp,
    )
