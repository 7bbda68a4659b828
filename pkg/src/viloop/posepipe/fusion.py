"""Confidence-weighted fusion of per-class pose estimates.

Position: inverse-variance weighted mean of the camera-in-ship positions,
with per-class variance sigma0^2 / confidence^2. Rotation: chordal L2 mean,
the dominant eigenvector of the weighted quaternion outer-product sum (which
absorbs the q/-q sign ambiguity). Estimates failing the confidence or
reprojection gate are excluded; positions more than 3 sigma from the
confidence-weighted median are rejected as outliers before the final fuse.

Confidences are normalized by their maximum before the variance map, so the
fused pose depends only on relative confidence (scaling every confidence by a
common factor changes nothing downstream of the gate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from viloop.geometry import Pose, Rotation, inverse


@dataclass(frozen=True)
class PoseEstimate:
    """A 6D pose of the ship frame relative to the camera, with uncertainty.

    pose maps ship-frame points into the camera frame; camera_in_ship() gives
    the inverse view commonly compared against ground truth.
    """

    pose: Pose
    position_cov: np.ndarray        # (3,3) m^2, for the camera-in-ship position
    rotation_conf: float
    class_ids: tuple[int, ...]
    reprojection_rms: float

    def __post_init__(self):
        cov = np.asarray(self.position_cov, dtype=float)
        if cov.shape != (3, 3):
            raise ValueError("position_cov must be 3x3")
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("position_cov must be symmetric positive definite")
        if self.reprojection_rms < 0:
            raise ValueError("reprojection_rms must be non-negative")
        object.__setattr__(self, "position_cov", cov)

    def camera_in_ship(self) -> Pose:
        return inverse(self.pose)


@dataclass(frozen=True)
class FusionConfig:
    min_confidence: float = 0.9   # per-class quality gate
    max_rms: float = 8.0          # px, reprojection gate
    sigma0: float = 0.15          # m, position sigma at unit relative confidence
    outlier_nsigma: float = 3.0


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-axis weighted median."""
    out = np.empty(values.shape[1])
    for k in range(values.shape[1]):
        order = np.argsort(values[:, k], kind="stable")
        cum = np.cumsum(weights[order])
        out[k] = values[order[np.searchsorted(cum, 0.5 * cum[-1])], k]
    return out


def _mean_rotation(quats: np.ndarray, weights: np.ndarray) -> Rotation:
    # sign-align to the first quaternion before the outer-product sum
    aligned = np.where((quats @ quats[0])[:, None] < 0, -quats, quats)
    m = np.einsum("n,ni,nj->ij", weights, aligned, aligned)
    evals, evecs = np.linalg.eigh(m)
    return Rotation.from_quat(evecs[:, np.argmax(evals)])


def fuse_poses(per_class: list[tuple[PoseEstimate, float]],
               config: FusionConfig | None = None) -> PoseEstimate | None:
    """Fuse per-class estimates; returns None when nothing passes the gate."""
    config = config or FusionConfig()
    gated = [(est, conf) for est, conf in per_class
             if conf >= config.min_confidence and est.reprojection_rms <= config.max_rms]
    if not gated:
        return None

    estimates = [est for est, _ in gated]
    confs = np.array([conf for _, conf in gated], dtype=float)
    confs = confs / confs.max()
    positions = np.array([est.camera_in_ship().position for est in estimates])
    sigmas = config.sigma0 / confs
    weights = 1.0 / sigmas ** 2

    if len(estimates) >= 3:
        median = _weighted_median(positions, weights)
        dev = np.linalg.norm(positions - median, axis=1)
        keep = dev <= config.outlier_nsigma * sigmas
        if np.any(keep):
            estimates = [e for e, k in zip(estimates, keep) if k]
            positions = positions[keep]
            confs = confs[keep]
            sigmas = sigmas[keep]
            weights = weights[keep]

    w_sum = weights.sum()
    fused_pos = weights @ positions / w_sum
    fused_cov = np.eye(3) / w_sum
    quats = np.array([est.pose.rotation.quat for est in estimates])
    fused_rot = _mean_rotation(quats, weights)

    # rebuild the ship->camera pose so camera_in_ship() returns fused_pos exactly
    ship_to_cam = Pose(-fused_rot.apply(fused_pos), fused_rot)
    class_ids = tuple(sorted({cid for est in estimates for cid in est.class_ids}))
    rms = float(np.sqrt(weights @ np.array([e.reprojection_rms for e in estimates]) ** 2
                        / w_sum))
    rot_conf = float(weights @ confs / w_sum)
    return PoseEstimate(ship_to_cam, fused_cov, rot_conf, class_ids, rms)
