"""The closed-loop experiment: dynamics, truth stream, vision, filter, control.

One integer tick clock at the dynamics rate drives everything; IMU/filter
prediction, truth-pose emission and the vision pipeline fire on divisor
boundaries. Vision fixes are timestamped at render (capture) time and
delivered to the filter only after the configured latency, exercising the
rewind-replay path on every fix. A run is fully determined by (config, seed):
timestamps come from the tick counter and every noise source is seeded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from viloop.estimator.filter import (
    DelayedPoseFilter,
    FilterState,
    PoseMeasurement,
    initial_filter_state,
)
from viloop.geometry import Pose, Rotation, StateVector, compose, inverse
from viloop.harness.config import ScenarioConfig
from viloop.posepipe.detector import OracleDetector, OracleNoise, RemoteDetector
from viloop.posepipe.fusion import PoseEstimate
from viloop.posepipe.pipeline import estimate_from_frame
from viloop.splat.raster import render_at
from viloop.vehicle.control import geometric_control
from viloop.vehicle.dynamics import acceleration, dynamics_step
from viloop.vehicle.imu import ImuModel

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    run_dir: Path
    completed: bool
    degraded: bool
    fix_count: int
    vision_count: int
    dropped_measurements: int

    @property
    def fix_rate(self) -> float:
        return 100.0 * self.fix_count / self.vision_count if self.vision_count else 0.0


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def vision_estimate_to_measurement(est: PoseEstimate, extrinsic: Pose,
                                   rotation_sigma: float, capture: float,
                                   arrival: float) -> PoseMeasurement:
    """Ship-relative camera pose to a body-in-world measurement.

    The ship frame doubles as the world frame; the camera-in-ship transform
    is pushed through the inverse camera-to-body extrinsic.
    """
    body_pose = compose(est.camera_in_ship(), inverse(extrinsic))
    return PoseMeasurement(body_pose, est.position_cov, rotation_sigma,
                           capture, arrival)


def run_scenario(config: ScenarioConfig, output_dir) -> RunResult:
    run_dir = Path(output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.snapshot").write_text(config.raw_text)

    scene = config.build_scene()
    models = config.build_ship_model()
    trajectory = config.build_trajectory()

    root_seed = np.random.SeedSequence(config.seed)
    imu_seed, detector_seed = (int(s.generate_state(1)[0] % 2 ** 31)
                               for s in root_seed.spawn(2))
    imu = ImuModel(config.imu, seed=imu_seed)
    if config.detector.kind == "oracle":
        detector = OracleDetector(
            models, config.camera,
            OracleNoise(pixel_sigma=config.detector.pixel_sigma,
                        dropout_prob=config.detector.dropout_prob),
            extrinsic=config.extrinsic, seed=detector_seed)
    else:
        detector = RemoteDetector(config.detector.endpoint,
                                  timeout=config.detector.timeout)

    ref0 = trajectory(0.0)
    truth = StateVector(Pose(ref0.position, Rotation.exp([0, 0, ref0.yaw])),
                        np.zeros(3), np.zeros(3), 0.0)
    filt = DelayedPoseFilter(
        config.estimator,
        initial_filter_state(truth.pose, truth.velocity, 0.0, config.estimator))

    rates = config.rates
    dt = 1.0 / rates.dynamics_hz
    imu_every = rates.dynamics_hz // rates.imu_hz
    stream_every = rates.dynamics_hz // rates.pose_stream_hz
    vision_every = rates.dynamics_hz // rates.vision_hz
    n_ticks = int(round(config.duration * rates.dynamics_hz))
    dump_every = (max(1, int(round(rates.vision_hz / rates.frame_log_fps)))
                  if rates.frame_log_fps > 0 else 0)

    frames_dir = run_dir / "frames"
    if dump_every:
        frames_dir.mkdir(exist_ok=True)

    pending: list[tuple[float, PoseMeasurement | None]] = []
    latest_gyro = np.zeros(3)
    fix_count = 0
    vision_count = 0
    frame_index = 0
    completed = False

    truth_f = open(run_dir / "truth.csv", "w")
    est_f = open(run_dir / "estimate.csv", "w")
    vis_f = open(run_dir / "vision.csv", "w")
    sidecar_f = open(run_dir / "frames.csv", "w") if dump_every else None
    truth_f.write("t,x,y,z,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz\n")
    est_f.write("t,x,y,z,qw,qx,qy,qz,vx,vy,vz,sigma_x,sigma_y,sigma_z\n")
    vis_f.write("timestamp,fix,n_classes,x,y,z,qw,qx,qy,qz,pos_sigma,reproj_rms\n")
    if sidecar_f:
        sidecar_f.write("timestamp,frame_index,x,y,z,qw,qx,qy,qz\n")

    def control_state() -> StateVector:
        if config.control_source == "truth":
            return truth
        fs: FilterState = filt.state
        omega = latest_gyro - fs.gyro_bias
        return StateVector(fs.pose, fs.velocity, omega, fs.timestamp)

    try:
        for k in range(n_ticks + 1):
            t = k / rates.dynamics_hz

            # deliver vision results whose latency has elapsed
            while pending and pending[0][0] <= t + 1e-12:
                _, meas = pending.pop(0)
                if meas is None:
                    filt.handle_no_fix(t)
                else:
                    filt.update_delayed(meas)

            if k % stream_every == 0:
                q = truth.pose.rotation.quat
                truth_f.write(f"{t!r},{_fmt(truth.pose.position)},{_fmt(q)},"
                              f"{_fmt(truth.velocity)},"
                              f"{_fmt(truth.angular_velocity)}\n")
                fs = filt.state
                est_f.write(f"{t!r},{_fmt(fs.position)},{_fmt(fs.rotation.quat)},"
                            f"{_fmt(fs.velocity)},{_fmt(fs.position_sigma())}\n")

            if k % vision_every == 0 and k < n_ticks:
                frame = render_at(scene, truth.pose, config.camera,
                                  extrinsic=config.extrinsic, timestamp=t)
                if dump_every and vision_count % dump_every == 0:
                    frame.save_png(frames_dir / f"{frame_index:06d}.png")
                    q = truth.pose.rotation.quat
                    sidecar_f.write(f"{t!r},{frame_index},"
                                    f"{_fmt(truth.pose.position)},{_fmt(q)}\n")
                    frame_index += 1
                vision_count += 1
                result = estimate_from_frame(frame, detector, models,
                                             config.camera, config.fusion)
                if result.fix:
                    fix_count += 1
                    est = result.estimate
                    meas = vision_estimate_to_measurement(
                        est, config.extrinsic, config.vision_rotation_sigma,
                        capture=t, arrival=t + config.vision_latency)
                    body = meas.pose
                    sigma = float(np.sqrt(np.trace(est.position_cov) / 3.0))
                    vis_f.write(
                        f"{t!r},1,{len(est.class_ids)},"
                        f"{_fmt(body.position)},{_fmt(body.rotation.quat)},"
                        f"{sigma!r},{est.reprojection_rms!r}\n")
                    pending.append((t + config.vision_latency, meas))
                else:
                    vis_f.write(f"{t!r},0,0,0.0,0.0,0.0,1.0,0.0,0.0,0.0,0.0,0.0\n")
                    pending.append((t + config.vision_latency, None))

            if k == n_ticks:
                break

            cmd = geometric_control(control_state(), trajectory(t), config.vehicle)
            truth = dynamics_step(truth, cmd, dt, config.vehicle)

            if (k + 1) % imu_every == 0:
                accel = acceleration(truth, cmd, config.vehicle)
                sample = imu.sample(truth, accel, imu_every * dt)
                latest_gyro = sample.gyro
                filt.predict(sample, imu_every * dt)
        completed = True
    finally:
        truth_f.close()
        est_f.close()
        vis_f.close()
        if sidecar_f:
            sidecar_f.close()

    log.info("run %s: %d/%d fixes (%.1f%%), %d dropped measurements",
             config.name, fix_count, vision_count,
             100.0 * fix_count / max(vision_count, 1),
             filt.dropped_measurements)
    return RunResult(run_dir, completed, filt.degraded, fix_count,
                     vision_count, filt.dropped_measurements)
