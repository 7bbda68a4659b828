"""Strapdown IMU measurement model: rate gyro and specific-force accelerometer.

gyro  = Omega + b_g + n_g          (body frame)
accel = R^T (a + g e3) + b_a + n_a (specific force: zero in free fall,
                                    +g e3 at rest)

White noise scales with 1/sqrt(dt) from the configured continuous-time
densities; biases follow first-order random walks. All randomness comes from
one seeded generator, so a run is reproducible sample-for-sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from viloop.geometry import StateVector

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ImuNoiseParams:
    gyro_noise_density: float = 8.7e-4    # rad/s/sqrt(Hz), tactical-grade MEMS
    gyro_bias_walk: float = 1e-5          # rad/s/sqrt(s)
    accel_noise_density: float = 1.4e-3   # m/s^2/sqrt(Hz)
    accel_bias_walk: float = 1e-4         # m/s^2/sqrt(s)
    gravity: float = 9.81


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    gyro: np.ndarray          # rad/s, body
    accel: np.ndarray         # m/s^2, body, specific force
    noise: ImuNoiseParams
    gyro_bias: np.ndarray     # bias state used to generate the sample
    accel_bias: np.ndarray


@dataclass
class ImuModel:
    """Stateful generator: owns the bias random walks and the noise stream."""

    params: ImuNoiseParams = field(default_factory=ImuNoiseParams)
    seed: int = 0
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self._rng = np.random.default_rng((self.seed, 0x1A0))

    def sample(self, state: StateVector, accel_world, dt: float) -> ImuSample:
        """Measure at state given the world-frame linear acceleration."""
        p = self.params
        rng = self._rng
        self.gyro_bias = self.gyro_bias + rng.normal(
            0.0, p.gyro_bias_walk * np.sqrt(dt), 3)
        self.accel_bias = self.accel_bias + rng.normal(
            0.0, p.accel_bias_walk * np.sqrt(dt), 3)
        sigma_g = p.gyro_noise_density / np.sqrt(dt)
        sigma_a = p.accel_noise_density / np.sqrt(dt)
        r_t = state.pose.rotation.matrix.T
        specific = r_t @ (np.asarray(accel_world, dtype=float) + p.gravity * E3)
        gyro = (state.angular_velocity + self.gyro_bias
                + rng.normal(0.0, sigma_g, 3))
        accel = specific + self.accel_bias + rng.normal(0.0, sigma_a, 3)
        return ImuSample(state.timestamp, gyro, accel, p,
                         self.gyro_bias.copy(), self.accel_bias.copy())


def allan_deviation(samples: np.ndarray, dt: float,
                    m_values) -> tuple[np.ndarray, np.ndarray]:
    """Overlapping Allan deviation of a 1D sample stream at cluster sizes m."""
    theta = np.cumsum(samples) * dt
    taus = np.empty(len(m_values))
    adev = np.empty(len(m_values))
    for i, m in enumerate(m_values):
        d = theta[2 * m:] - 2.0 * theta[m:-m] + theta[:-2 * m]
        avar = float(d @ d) / (2.0 * m * m * dt * dt * len(d))
        taus[i] = m * dt
        adev[i] = np.sqrt(avar)
    return taus, adev
