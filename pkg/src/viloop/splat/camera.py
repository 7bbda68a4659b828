"""Pinhole camera model: intrinsics plus camera-to-world pose.

Camera frame: +z optical axis, image x right, image y down. Pixel (0, 0) is
the top-left sample; a point on the optical axis projects to (cx, cy).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from viloop.geometry import Pose

# ~57 deg horizontal FOV at 640 px, matching the simulator's render target
DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 640
DEFAULT_FOCAL = 580.0


@dataclass(frozen=True)
class CameraModel:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    fx: float = DEFAULT_FOCAL
    fy: float = DEFAULT_FOCAL
    cx: float | None = None  # defaults to the image center
    cy: float | None = None
    pose: Pose = field(default_factory=Pose.identity)  # camera-to-world

    def __post_init__(self):
        if self.cx is None:
            object.__setattr__(self, "cx", (self.width - 1) / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", (self.height - 1) / 2.0)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def with_pose(self, pose: Pose) -> "CameraModel":
        return replace(self, pose=pose)

    def world_to_camera(self, points) -> np.ndarray:
        """Map world points (..., 3) into the camera frame."""
        points = np.asarray(points, dtype=float)
        r_cw = self.pose.rotation.matrix.T
        return (points - self.pose.position) @ r_cw.T

    def project(self, points_world) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to pixels. Returns (pixels (..., 2), depths).

        Points at or behind the camera plane get non-finite pixels; callers
        decide whether that is a culling or an error condition.
        """
        pc = self.world_to_camera(points_world)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(z > 0, self.fx * pc[..., 0] / z + self.cx, np.nan)
            v = np.where(z > 0, self.fy * pc[..., 1] / z + self.cy, np.nan)
        return np.stack([u, v], axis=-1), z

    def contains(self, pixels, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of pixels inside the image bounds (inclusive of edges)."""
        pixels = np.asarray(pixels, dtype=float)
        u, v = pixels[..., 0], pixels[..., 1]
        ok = np.isfinite(u) & np.isfinite(v)
        return (ok & (u >= -margin) & (u <= self.width - 1 + margin)
                & (v >= -margin) & (v <= self.height - 1 + margin))
