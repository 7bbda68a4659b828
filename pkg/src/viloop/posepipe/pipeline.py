"""Frame to fused pose: detect, solve EPnP per class, fuse.

estimate_from_frame is the single entry point the simulation loop calls at
the vision rate; a missed fix is a normal outcome (None estimate), never an
exception, so outages degrade the loop instead of aborting it.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from viloop.geometry import Pose
from viloop.posepipe.detector import DetectorInterface, KeypointObservation
from viloop.posepipe.epnp import epnp_solve, reprojection_rms
from viloop.posepipe.fusion import FusionConfig, PoseEstimate, fuse_poses
from viloop.posepipe.shipmodel import ObjectModel
from viloop.splat.camera import CameraModel
from viloop.splat.raster import Frame

log = logging.getLogger(__name__)

MIN_POINTS = 4


@dataclass
class PipelineResult:
    estimate: PoseEstimate | None     # None is the no-fix outcome
    observations: list[KeypointObservation] = field(default_factory=list)
    per_class: list[tuple[PoseEstimate, float]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def fix(self) -> bool:
        return self.estimate is not None


def solve_class(obs: KeypointObservation, model: ObjectModel,
                intrinsics: CameraModel,
                config: FusionConfig) -> PoseEstimate | None:
    """EPnP on one class's visible keypoints; None when unusable."""
    vis = obs.visibility
    if int(vis.sum()) < MIN_POINTS:
        return None
    try:
        pose, rms = epnp_solve(model.model_points[vis], obs.keypoints[vis],
                               intrinsics)
    except ValueError as exc:
        log.debug("class %d EPnP failed: %s", obs.class_id, exc)
        return None
    sigma = config.sigma0 / max(obs.confidence, 1e-6)
    return PoseEstimate(pose, sigma ** 2 * np.eye(3), obs.confidence,
                        (obs.class_id,), rms)


def estimate_from_frame(frame: Frame, detector: DetectorInterface,
                        models: list[ObjectModel], intrinsics: CameraModel,
                        config: FusionConfig | None = None) -> PipelineResult:
    """Run detect -> per-class EPnP -> fusion, recording per-stage timings."""
    config = config or FusionConfig()
    by_id = {m.class_id: m for m in models}
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    observations = detector.detect(frame)
    timings["detect"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    per_class: list[tuple[PoseEstimate, float]] = []
    for obs in observations:
        model = by_id.get(obs.class_id)
        if model is None or len(model.model_points) != len(obs.keypoints):
            log.warning("observation for unknown/mismatched class %d ignored",
                        obs.class_id)
            continue
        est = solve_class(obs, model, intrinsics, config)
        if est is not None:
            per_class.append((est, obs.confidence))
    timings["epnp"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    fused = fuse_poses(per_class, config)
    if fused is not None:
        # score the fused pose against every inlier correspondence
        pts3, pts2 = [], []
        for obs in observations:
            if obs.class_id in fused.class_ids:
                vis = obs.visibility
                pts3.append(by_id[obs.class_id].model_points[vis])
                pts2.append(obs.keypoints[vis])
        rms = reprojection_rms(fused.pose, np.concatenate(pts3),
                               np.concatenate(pts2), intrinsics)
        fused = PoseEstimate(fused.pose, fused.position_cov, fused.rotation_conf,
                             fused.class_ids, rms)
    timings["fuse"] = time.perf_counter() - t0
    return PipelineResult(fused, observations, per_class, timings)
