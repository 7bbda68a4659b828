"""Keypoint detector abstraction and the ground-truth-driven oracle detector.

The oracle stands in for a neural keypoint network at desk scale: it projects
each object class's 3D keypoints through the pinhole camera at the frame's
true pose, corrupts them with seeded Gaussian pixel noise, drops whole classes
at a configured probability and reports a confidence driven by visibility and
the noise level. Every call is a pure function of (frame, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from viloop.geometry import Pose, compose
from viloop.splat.camera import CameraModel
from viloop.splat.raster import Frame
from viloop.posepipe.shipmodel import ObjectModel


@dataclass(frozen=True)
class KeypointObservation:
    """One detected object class: per-keypoint pixels aligned with the model."""

    class_id: int
    confidence: float
    keypoints: np.ndarray   # (K, 2) px
    visibility: np.ndarray  # (K,) bool

    def __post_init__(self):
        kps = np.asarray(self.keypoints, dtype=float)
        vis = np.asarray(self.visibility, dtype=bool)
        if kps.ndim != 2 or kps.shape[1] != 2 or len(vis) != len(kps):
            raise ValueError("keypoints must be (K, 2) with matching visibility")
        if not np.isfinite(self.confidence):
            raise ValueError("confidence must be finite")
        object.__setattr__(self, "keypoints", kps)
        object.__setattr__(self, "visibility", vis)

    @property
    def num_visible(self) -> int:
        return int(self.visibility.sum())


@runtime_checkable
class DetectorInterface(Protocol):
    """Anything that turns a frame into keypoint observations, side-effect free."""

    def detect(self, frame: Frame) -> list[KeypointObservation]: ...


@dataclass(frozen=True)
class OracleNoise:
    pixel_sigma: float = 0.0
    dropout_prob: float = 0.0
    visibility_weight: float = 0.5  # confidence lost when keypoints leave frame
    noise_weight: float = 0.02      # confidence lost per pixel of noise sigma


class OracleDetector:
    """Projects true keypoints with seeded noise; deterministic per frame.

    The per-call random stream is derived from (seed, frame timestamp), so
    re-detecting the same frame (live or replayed) gives identical output.
    """

    def __init__(self, models, camera: CameraModel, noise: OracleNoise | None = None,
                 extrinsic: Pose | None = None, seed: int = 0):
        self.models = tuple(models)
        self.camera = camera
        self.noise = noise or OracleNoise()
        self.extrinsic = extrinsic or Pose.identity()  # camera in body
        self.seed = seed

    def detect(self, frame: Frame) -> list[KeypointObservation]:
        rng = np.random.default_rng((self.seed, int(round(frame.timestamp * 1e6))))
        cam = self.camera.with_pose(compose(frame.truth_pose, self.extrinsic))
        out = []
        for model in self.models:
            # fixed draw order per class keeps the stream layout stable
            drop = rng.uniform() < self.noise.dropout_prob
            jitter = rng.normal(0.0, 1.0, (model.num_keypoints, 2))
            if drop:
                continue
            pixels, depths = cam.project(model.model_points)
            pixels = pixels + self.noise.pixel_sigma * jitter
            visible = (depths > 0) & cam.contains(pixels)
            pixels = np.where(visible[:, None], pixels, 0.0)
            n_vis = int(visible.sum())
            if n_vis == 0:
                continue
            conf = max(0.0, 1.0
                       - self.noise.visibility_weight * (1.0 - n_vis / len(visible))
                       - self.noise.noise_weight * self.noise.pixel_sigma)
            out.append(KeypointObservation(model.class_id, conf, pixels, visible))
        return out


class RemoteDetector:
    """Detector that forwards frames to a detector-RPC endpoint.

    Timeouts yield an empty observation list (a missed fix, not an error);
    malformed responses raise the transport's protocol error.
    """

    def __init__(self, endpoint: tuple[str, int], timeout: float = 0.5,
                 pixel_format: int = 0):
        self.endpoint = endpoint
        self.timeout = timeout
        self.pixel_format = pixel_format

    def detect(self, frame: Frame) -> list[KeypointObservation]:
        from viloop.netlink.transport import detect_rpc_call
        return detect_rpc_call(self.endpoint, frame, timeout=self.timeout,
                               pixel_format=self.pixel_format)
