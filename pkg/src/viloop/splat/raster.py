"""Tile-based software rasterizer for Gaussian-splat scenes.

Pipeline: project every Gaussian to a screen-space splat (EWA: the 3D
covariance is pushed through the world-to-camera rotation and the perspective
Jacobian at the center), sort globally by depth with the input index as a
deterministic tie-breaker, bin splats to pixel tiles they may touch, then
composite front-to-back per pixel.

A splat contributes to a pixel only inside its 3-sigma ellipse and where its
alpha clears 1/255; tile binning uses the bounding box of that support, so
tile size and worker count are pure optimizations: output bytes are identical
for any choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from PIL import Image

from viloop.geometry import Pose, compose
from viloop.splat.camera import CameraModel
from viloop.splat.scene import Gaussian, SceneModel
from viloop.splat.sh import SH_C0, SH_C1, SH_C2, SH_C3

COV_DILATION = 0.3     # px^2 added to the diagonal, anti-aliasing floor
ALPHA_CAP = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1.0 / 255.0
MAHA_CUTOFF = 9.0      # 3-sigma ellipse bound, the splat's support
DEFAULT_NEAR = 0.1
DEFAULT_BACKGROUND = (0.5, 0.5, 0.5)


@dataclass(frozen=True)
class Splat2D:
    """A Gaussian projected to screen space."""

    mean: np.ndarray   # (2,) px
    cov: np.ndarray    # (2, 2) px^2, dilated, SPD
    depth: float       # m along the optical axis
    color: np.ndarray  # (3,) RGB in [0, 1]
    alpha_peak: float


@dataclass(frozen=True)
class Frame:
    """Rendered RGB8 image stamped with the pose that produced it."""

    width: int
    height: int
    pixels: np.ndarray  # (H, W, 3) uint8
    timestamp: float = 0.0
    truth_pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError("pixel buffer shape does not match width/height")
        if self.pixels.dtype != np.uint8:
            raise ValueError("pixel buffer must be uint8")

    def save_png(self, path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")

    @staticmethod
    def load_png(path, timestamp: float = 0.0, truth_pose: Pose | None = None) -> "Frame":
        arr = np.asarray(Image.open(path).convert("RGB"))
        return Frame(arr.shape[1], arr.shape[0], arr, timestamp,
                     truth_pose or Pose.identity())


@numba.njit(cache=True, parallel=True)
def _preprocess(positions, scales, quats, opacities, sh, r_cw, cam_pos,
                fx, fy, cx, cy, width, height, near,
                alive, means, covs, conics, colors, depths, boxes):
    for i in numba.prange(positions.shape[0]):
        alive[i] = False
        dx = positions[i, 0] - cam_pos[0]
        dy = positions[i, 1] - cam_pos[1]
        dz = positions[i, 2] - cam_pos[2]
        tx = r_cw[0, 0] * dx + r_cw[0, 1] * dy + r_cw[0, 2] * dz
        ty = r_cw[1, 0] * dx + r_cw[1, 1] * dy + r_cw[1, 2] * dz
        tz = r_cw[2, 0] * dx + r_cw[2, 1] * dy + r_cw[2, 2] * dz
        if tz <= near:
            continue
        inv_z = 1.0 / tz
        u = fx * tx * inv_z + cx
        v = fy * ty * inv_z + cy

        # orientation quaternion -> rotation matrix, columns scaled by sigma
        qw, qx, qy, qz = quats[i, 0], quats[i, 1], quats[i, 2], quats[i, 3]
        s0, s1, s2 = scales[i, 0], scales[i, 1], scales[i, 2]
        g00 = (1 - 2 * (qy * qy + qz * qz)) * s0
        g01 = (2 * (qx * qy - qw * qz)) * s1
        g02 = (2 * (qx * qz + qw * qy)) * s2
        g10 = (2 * (qx * qy + qw * qz)) * s0
        g11 = (1 - 2 * (qx * qx + qz * qz)) * s1
        g12 = (2 * (qy * qz - qw * qx)) * s2
        g20 = (2 * (qx * qz - qw * qy)) * s0
        g21 = (2 * (qy * qz + qw * qx)) * s1
        g22 = (1 - 2 * (qx * qx + qy * qy)) * s2

        # A = R_cw @ (R_g * S); then Sigma_cam = A A^T without forming Sigma_3D
        a00 = r_cw[0, 0] * g00 + r_cw[0, 1] * g10 + r_cw[0, 2] * g20
        a01 = r_cw[0, 0] * g01 + r_cw[0, 1] * g11 + r_cw[0, 2] * g21
        a02 = r_cw[0, 0] * g02 + r_cw[0, 1] * g12 + r_cw[0, 2] * g22
        a10 = r_cw[1, 0] * g00 + r_cw[1, 1] * g10 + r_cw[1, 2] * g20
        a11 = r_cw[1, 0] * g01 + r_cw[1, 1] * g11 + r_cw[1, 2] * g21
        a12 = r_cw[1, 0] * g02 + r_cw[1, 1] * g12 + r_cw[1, 2] * g22
        a20 = r_cw[2, 0] * g00 + r_cw[2, 1] * g10 + r_cw[2, 2] * g20
        a21 = r_cw[2, 0] * g01 + r_cw[2, 1] * g11 + r_cw[2, 2] * g21
        a22 = r_cw[2, 0] * g02 + r_cw[2, 1] * g12 + r_cw[2, 2] * g22

        # B = J @ A with J the 2x3 perspective Jacobian at the center
        j00 = fx * inv_z
        j02 = -fx * tx * inv_z * inv_z
        j11 = fy * inv_z
        j12 = -fy * ty * inv_z * inv_z
        b00 = j00 * a00 + j02 * a20
        b01 = j00 * a01 + j02 * a21
        b02 = j00 * a02 + j02 * a22
        b10 = j11 * a10 + j12 * a20
        b11 = j11 * a11 + j12 * a21
        b12 = j11 * a12 + j12 * a22

        ca = b00 * b00 + b01 * b01 + b02 * b02 + COV_DILATION
        cb = b00 * b10 + b01 * b11 + b02 * b12
        cc = b10 * b10 + b11 * b11 + b12 * b12 + COV_DILATION

        sx = 3.0 * math.sqrt(ca)
        sy = 3.0 * math.sqrt(cc)
        if (not math.isfinite(u)) or (not math.isfinite(v)):
            continue
        if u < -sx or u > width - 1 + sx or v < -sy or v > height - 1 + sy:
            continue

        det = ca * cc - cb * cb
        means[i, 0] = u
        means[i, 1] = v
        covs[i, 0] = ca
        covs[i, 1] = cb
        covs[i, 2] = cc
        conics[i, 0] = cc / det
        conics[i, 1] = -cb / det
        conics[i, 2] = ca / det
        depths[i] = tz

        # spherical-harmonics color at the world-frame view direction
        nrm = math.sqrt(dx * dx + dy * dy + dz * dz)
        x = dx / nrm
        y = dy / nrm
        z = dz / nrm
        xx, yy, zz = x * x, y * y, z * z
        for c in range(3):
            col = (0.5 + SH_C0 * sh[i, 0, c]
                   - SH_C1 * y * sh[i, 1, c]
                   + SH_C1 * z * sh[i, 2, c]
                   - SH_C1 * x * sh[i, 3, c]
                   + SH_C2[0] * x * y * sh[i, 4, c]
                   + SH_C2[1] * y * z * sh[i, 5, c]
                   + SH_C2[2] * (2.0 * zz - xx - yy) * sh[i, 6, c]
                   + SH_C2[3] * x * z * sh[i, 7, c]
                   + SH_C2[4] * (xx - yy) * sh[i, 8, c]
                   + SH_C3[0] * y * (3.0 * xx - yy) * sh[i, 9, c]
                   + SH_C3[1] * x * y * z * sh[i, 10, c]
                   + SH_C3[2] * y * (4.0 * zz - xx - yy) * sh[i, 11, c]
                   + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh[i, 12, c]
                   + SH_C3[4] * x * (4.0 * zz - xx - yy) * sh[i, 13, c]
                   + SH_C3[5] * z * (xx - yy) * sh[i, 14, c]
                   + SH_C3[6] * x * (xx - 3.0 * yy) * sh[i, 15, c])
            colors[i, c] = min(1.0, max(0.0, col))

        # support radius: 3 sigma, tightened where alpha falls under 1/255
        r2 = MAHA_CUTOFF
        ao = 2.0 * math.log(255.0 * opacities[i])
        if ao < r2:
            r2 = ao
        if r2 <= 0.0:
            boxes[i, 0] = 1
            boxes[i, 1] = 0
            boxes[i, 2] = 1
            boxes[i, 3] = 0
        else:
            r = math.sqrt(r2)
            rx = r * math.sqrt(ca)
            ry = r * math.sqrt(cc)
            boxes[i, 0] = max(0, int(math.ceil(u - rx)))
            boxes[i, 1] = min(width - 1, int(math.floor(u + rx)))
            boxes[i, 2] = max(0, int(math.ceil(v - ry)))
            boxes[i, 3] = min(height - 1, int(math.floor(v + ry)))
        alive[i] = True


def _project_arrays(scene: SceneModel, cam: CameraModel, near: float):
    """Project the whole scene; returns depth-sorted packed splat arrays."""
    n = len(scene)
    alive = np.zeros(n, dtype=np.bool_)
    means = np.empty((n, 2))
    covs = np.empty((n, 3))
    conics = np.empty((n, 3))
    colors = np.empty((n, 3))
    depths = np.empty(n)
    boxes = np.empty((n, 4), dtype=np.int64)
    _preprocess(scene.positions, scene.scales, scene.rotations, scene.opacities,
                scene.sh, cam.pose.rotation.matrix.T, cam.pose.position,
                float(cam.fx), float(cam.fy), float(cam.cx), float(cam.cy),
                cam.width, cam.height, near,
                alive, means, covs, conics, colors, depths, boxes)
    idx = np.flatnonzero(alive)
    if idx.size == 0:
        return None
    # ascending depth, original index breaks ties for determinism
    order = idx[np.lexsort((idx, depths[idx]))]
    return (means[order], conics[order], colors[order],
            scene.opacities[order].copy(), covs[order], depths[order],
            boxes[order])


def project_gaussian(g: Gaussian, cam: CameraModel,
                     near: float = DEFAULT_NEAR) -> Splat2D | None:
    """Project one Gaussian; returns None when culled (normal outcome)."""
    scene = SceneModel(g.position[None], g.scale[None], g.orientation.quat[None],
                       np.array([g.opacity]), g.sh[None])
    packed = _project_arrays(scene, cam, near)
    if packed is None:
        return None
    means, _, colors, alphas, covs, depths, _ = packed
    cov = np.array([[covs[0, 0], covs[0, 1]], [covs[0, 1], covs[0, 2]]])
    return Splat2D(means[0], cov, float(depths[0]), colors[0], float(alphas[0]))


@numba.njit(cache=True)
def _bin_splats(boxes, tile, n_tiles_x, n_tiles_y):
    """Counting sort of splats into tile lists, preserving depth order."""
    n_tiles = n_tiles_x * n_tiles_y
    counts = np.zeros(n_tiles + 1, dtype=np.int64)
    n = boxes.shape[0]
    for i in range(n):
        if boxes[i, 0] > boxes[i, 1] or boxes[i, 2] > boxes[i, 3]:
            continue
        for ty in range(boxes[i, 2] // tile, boxes[i, 3] // tile + 1):
            for tx in range(boxes[i, 0] // tile, boxes[i, 1] // tile + 1):
                counts[ty * n_tiles_x + tx + 1] += 1
    offsets = np.cumsum(counts)
    cursor = offsets[:-1].copy()
    pairs = np.empty(offsets[-1], dtype=np.int64)
    for i in range(n):
        if boxes[i, 0] > boxes[i, 1] or boxes[i, 2] > boxes[i, 3]:
            continue
        for ty in range(boxes[i, 2] // tile, boxes[i, 3] // tile + 1):
            for tx in range(boxes[i, 0] // tile, boxes[i, 1] // tile + 1):
                t = ty * n_tiles_x + tx
                pairs[cursor[t]] = i
                cursor[t] += 1
    return offsets, pairs


@numba.njit(cache=True, parallel=True)
def _composite_tiles(means, conics, colors, alphas, boxes, offsets, pairs,
                     width, height, tile, n_tiles_x, n_tiles_y,
                     background, out_rgb, out_t):
    for t in numba.prange(n_tiles_x * n_tiles_y):
        ty = t // n_tiles_x
        tx = t % n_tiles_x
        x0 = tx * tile
        y0 = ty * tile
        x1 = min(x0 + tile, width)
        y1 = min(y0 + tile, height)
        buf_r = np.zeros((tile, tile))
        buf_g = np.zeros((tile, tile))
        buf_b = np.zeros((tile, tile))
        buf_t = np.ones((tile, tile))
        live = (x1 - x0) * (y1 - y0)
        for k in range(offsets[t], offsets[t + 1]):
            if live == 0:
                break
            i = pairs[k]
            py0 = max(y0, boxes[i, 2])
            py1 = min(y1 - 1, boxes[i, 3])
            px0 = max(x0, boxes[i, 0])
            px1 = min(x1 - 1, boxes[i, 1])
            for py in range(py0, py1 + 1):
                ly = py - y0
                for px in range(px0, px1 + 1):
                    lx = px - x0
                    trans = buf_t[ly, lx]
                    if trans < T_MIN:
                        continue
                    ddx = px - means[i, 0]
                    ddy = py - means[i, 1]
                    maha = (conics[i, 0] * ddx * ddx + conics[i, 2] * ddy * ddy
                            + 2.0 * conics[i, 1] * ddx * ddy)
                    if maha > MAHA_CUTOFF:
                        continue
                    a = alphas[i] * math.exp(-0.5 * maha)
                    if a > ALPHA_CAP:
                        a = ALPHA_CAP
                    if a < ALPHA_MIN:
                        continue
                    buf_r[ly, lx] += trans * a * colors[i, 0]
                    buf_g[ly, lx] += trans * a * colors[i, 1]
                    buf_b[ly, lx] += trans * a * colors[i, 2]
                    trans *= 1.0 - a
                    buf_t[ly, lx] = trans
                    if trans < T_MIN:
                        live -= 1
        for py in range(y0, y1):
            ly = py - y0
            for px in range(x0, x1):
                lx = px - x0
                trans = buf_t[ly, lx]
                out_rgb[py, px, 0] = buf_r[ly, lx] + trans * background[0]
                out_rgb[py, px, 1] = buf_g[ly, lx] + trans * background[1]
                out_rgb[py, px, 2] = buf_b[ly, lx] + trans * background[2]
                out_t[py, px] = trans


def rasterize_with_stats(scene: SceneModel, cam: CameraModel, *,
                         background=DEFAULT_BACKGROUND, near: float = DEFAULT_NEAR,
                         tile_size: int = 16, workers: int | None = None,
                         timestamp: float = 0.0):
    """Render and also return the float image and per-pixel transmittance."""
    bg = np.asarray(background, dtype=np.float64)
    out_rgb = np.empty((cam.height, cam.width, 3), dtype=np.float64)
    out_t = np.empty((cam.height, cam.width), dtype=np.float64)
    packed = _project_arrays(scene, cam, near)
    if packed is None:
        out_rgb[:] = bg
        out_t[:] = 1.0
    else:
        means, conics, colors, alphas, _, _, boxes = packed
        n_tiles_x = (cam.width + tile_size - 1) // tile_size
        n_tiles_y = (cam.height + tile_size - 1) // tile_size
        offsets, pairs = _bin_splats(boxes, tile_size, n_tiles_x, n_tiles_y)
        old_threads = numba.get_num_threads()
        if workers is not None:
            numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))
        try:
            _composite_tiles(means, conics, colors, alphas, boxes, offsets, pairs,
                             cam.width, cam.height, tile_size,
                             n_tiles_x, n_tiles_y, bg, out_rgb, out_t)
        finally:
            if workers is not None:
                numba.set_num_threads(old_threads)
    pixels = np.rint(255.0 * np.clip(out_rgb, 0.0, 1.0)).astype(np.uint8)
    frame = Frame(cam.width, cam.height, pixels, timestamp, cam.pose)
    return frame, out_rgb, out_t


def rasterize(scene: SceneModel, cam: CameraModel, *,
              background=DEFAULT_BACKGROUND, near: float = DEFAULT_NEAR,
              tile_size: int = 16, workers: int | None = None,
              timestamp: float = 0.0) -> Frame:
    frame, _, _ = rasterize_with_stats(
        scene, cam, background=background, near=near, tile_size=tile_size,
        workers=workers, timestamp=timestamp)
    return frame


def render_at(scene: SceneModel, pose: Pose, camera: CameraModel, *,
              extrinsic: Pose | None = None, background=DEFAULT_BACKGROUND,
              near: float = DEFAULT_NEAR, tile_size: int = 16,
              workers: int | None = None, timestamp: float = 0.0) -> Frame:
    """Render from a vehicle pose: camera pose = pose ∘ camera-to-body extrinsic.

    The returned frame is stamped with the supplied (ground-truth) pose, not
    the derived camera pose.
    """
    cam_pose = pose if extrinsic is None else compose(pose, extrinsic)
    frame = rasterize(scene, camera.with_pose(cam_pose),
                      background=background, near=near, tile_size=tile_size,
                      workers=workers, timestamp=timestamp)
    return Frame(frame.width, frame.height, frame.pixels, timestamp, pose)
