"""Scenario configuration: one TOML file fully determines a run."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from viloop.estimator.filter import EstimatorConfig
from viloop.geometry import Pose, Rotation
from viloop.posepipe.fusion import FusionConfig
from viloop.posepipe.shipmodel import default_ship_model, load_ship_model
from viloop.splat.camera import CameraModel
from viloop.splat.scene import SceneModel, generate_test_scene, load_scene
from viloop.posepipe.shipmodel import ship_scene_spec
from viloop.vehicle.dynamics import VehicleParams
from viloop.vehicle.imu import ImuNoiseParams
from viloop.vehicle.trajectory import ReferenceTrajectory, make_trajectory


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


# camera looks along body +x: columns are the camera axes in body coordinates
FORWARD_EXTRINSIC = Rotation.from_matrix(np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
]))


@dataclass(frozen=True)
class Rates:
    dynamics_hz: int = 1000
    imu_hz: int = 200
    pose_stream_hz: int = 200
    vision_hz: int = 10
    frame_log_fps: float = 0.0  # 0 disables frame dumps

    def __post_init__(self):
        if min(self.dynamics_hz, self.imu_hz, self.pose_stream_hz,
               self.vision_hz) <= 0:
            raise ConfigError("rates must be positive")
        if self.vision_hz > self.pose_stream_hz:
            raise ConfigError("vision_hz must not exceed pose_stream_hz")
        if self.frame_log_fps > 60:
            raise ConfigError("frame_log_fps is capped at 60")
        for name in ("imu_hz", "pose_stream_hz", "vision_hz"):
            if self.dynamics_hz % getattr(self, name):
                raise ConfigError(f"dynamics_hz must be a multiple of {name}")


@dataclass(frozen=True)
class DetectorSettings:
    kind: str = "oracle"            # oracle | remote
    pixel_sigma: float = 0.0
    dropout_prob: float = 0.0
    endpoint: tuple[str, int] | None = None
    timeout: float = 0.5


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    duration: float
    seed: int
    control_source: str             # truth | vision
    rates: Rates
    camera: CameraModel
    extrinsic: Pose
    vehicle: VehicleParams
    imu: ImuNoiseParams
    detector: DetectorSettings
    fusion: FusionConfig
    estimator: EstimatorConfig
    vision_latency: float
    vision_rotation_sigma: float
    trajectory_kind: str
    trajectory_spec: dict
    scene_kind: str                 # ship-parts | ply
    scene_path: str
    scene_gaussians_per_part: int
    scene_seed: int
    ship_model_source: str          # builtin | path
    raw_text: str = ""              # verbatim file contents for the snapshot

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.control_source not in ("truth", "vision"):
            raise ConfigError("control_source must be 'truth' or 'vision'")
        if self.detector.kind not in ("oracle", "remote"):
            raise ConfigError("detector kind must be 'oracle' or 'remote'")
        if self.detector.kind == "remote" and self.detector.endpoint is None:
            raise ConfigError("remote detector needs an endpoint")
        if self.vision_latency < 0:
            raise ConfigError("vision latency cannot be negative")
        if self.vision_latency > self.estimator.buffer_window:
            raise ConfigError("vision latency exceeds the filter's rewind window")

    def build_ship_model(self):
        if self.ship_model_source == "builtin":
            return default_ship_model()
        return load_ship_model(self.ship_model_source)

    def build_scene(self) -> SceneModel:
        if self.scene_kind == "ply":
            return load_scene(self.scene_path)
        if self.scene_kind == "ship-parts":
            spec = ship_scene_spec(self.build_ship_model(),
                                   per_part=self.scene_gaussians_per_part,
                                   seed=self.scene_seed)
            return generate_test_scene(spec)
        raise ConfigError(f"unknown scene kind {self.scene_kind!r}")

    def build_trajectory(self) -> ReferenceTrajectory:
        return make_trajectory(self.trajectory_kind, self.trajectory_spec)


def _parse_extrinsic(doc: dict) -> Pose:
    rot_spec = doc.get("rotation", "identity")
    if rot_spec == "identity":
        rot = Rotation.identity()
    elif rot_spec == "forward":
        rot = FORWARD_EXTRINSIC
    else:
        rot = Rotation.from_quat(np.asarray(rot_spec, dtype=float))
    translation = np.asarray(doc.get("translation", (0.0, 0.0, 0.0)), dtype=float)
    return Pose(translation, rot)


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
        doc = tomllib.loads(text)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot load {path}: {exc}") from exc
    return config_from_dict(doc, raw_text=text, overrides=overrides)


def config_from_dict(doc: dict, raw_text: str = "",
                     overrides: dict | None = None) -> ScenarioConfig:
    try:
        return _build_config(doc, raw_text, overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _build_config(doc: dict, raw_text: str,
                  overrides: dict | None) -> ScenarioConfig:
    scenario = dict(doc.get("scenario", {}))
    if overrides:
        scenario.update(overrides)

    rates_doc = doc.get("rates", {})
    rates = Rates(**{k: rates_doc[k] for k in rates_doc})

    cam_doc = dict(doc.get("camera", {}))
    ext_doc = cam_doc.pop("extrinsic", {})
    camera = CameraModel(**{k: cam_doc[k] for k in cam_doc})
    extrinsic = _parse_extrinsic(ext_doc)

    veh_doc = dict(doc.get("vehicle", {}))
    if "inertia" in veh_doc:
        veh_doc["inertia"] = np.diag(np.asarray(veh_doc["inertia"], dtype=float))
    vehicle = VehicleParams(**veh_doc)

    imu = ImuNoiseParams(**doc.get("imu", {}))

    det_doc = dict(doc.get("detector", {}))
    if "endpoint" in det_doc:
        det_doc["endpoint"] = _parse_endpoint(det_doc["endpoint"])
    detector = DetectorSettings(**det_doc)

    fusion = FusionConfig(**doc.get("fusion", {}))

    est_doc = dict(doc.get("estimator", {}))
    vision_latency = est_doc.pop("vision_latency", 0.1)
    vision_rot_sigma = est_doc.pop("vision_rotation_sigma", 0.02)
    est_defaults = dict(
        gyro_noise_density=imu.gyro_noise_density,
        gyro_bias_walk=imu.gyro_bias_walk,
        accel_noise_density=imu.accel_noise_density,
        accel_bias_walk=imu.accel_bias_walk,
    )
    est_defaults.update(est_doc)
    estimator = EstimatorConfig(**est_defaults)

    traj_doc = dict(doc.get("trajectory", {}))
    traj_kind = traj_doc.pop("kind", "hover")

    scene_doc = doc.get("scene", {})
    ship_doc = doc.get("ship_model", {})

    return ScenarioConfig(
        name=scenario.get("name", "scenario"),
        duration=float(scenario.get("duration", 10.0)),
        seed=int(scenario.get("seed", 0)),
        control_source=scenario.get("control_source", "truth"),
        rates=rates,
        camera=camera,
        extrinsic=extrinsic,
        vehicle=vehicle,
        imu=imu,
        detector=detector,
        fusion=fusion,
        estimator=estimator,
        vision_latency=float(vision_latency),
        vision_rotation_sigma=float(vision_rot_sigma),
        trajectory_kind=traj_kind,
        trajectory_spec=traj_doc,
        scene_kind=scene_doc.get("kind", "ship-parts"),
        scene_path=scene_doc.get("path", ""),
        scene_gaussians_per_part=int(scene_doc.get("gaussians_per_part", 50)),
        scene_seed=int(scene_doc.get("seed", 0)),
        ship_model_source=ship_doc.get("source", "builtin"),
        raw_text=raw_text,
    )
