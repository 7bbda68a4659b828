"""Monocular pose pipeline: detector abstraction, per-class EPnP, fusion."""

from viloop.posepipe.detector import (
    DetectorInterface,
    KeypointObservation,
    OracleDetector,
    OracleNoise,
    RemoteDetector,
)
from viloop.posepipe.epnp import epnp_solve, reprojection_rms
from viloop.posepipe.fusion import FusionConfig, PoseEstimate, fuse_poses
from viloop.posepipe.pipeline import PipelineResult, estimate_from_frame
from viloop.posepipe.shipmodel import (
    ObjectModel,
    box_corners,
    default_ship_model,
    load_ship_model,
    save_ship_model,
    ship_scene_spec,
)

__all__ = [
    "DetectorInterface",
    "FusionConfig",
    "KeypointObservation",
    "ObjectModel",
    "OracleDetector",
    "OracleNoise",
    "PipelineResult",
    "PoseEstimate",
    "RemoteDetector",
    "box_corners",
    "default_ship_model",
    "epnp_solve",
    "estimate_from_frame",
    "fuse_poses",
    "load_ship_model",
    "reprojection_rms",
    "save_ship_model",
    "ship_scene_spec",
]
