"""Gaussian scene storage: binary PLY load/save and synthetic scene builders.

On disk a scene is the de-facto Gaussian-splat point cloud: a binary
little-endian PLY whose vertices carry x,y,z, f_dc_0..2, f_rest_0..44,
opacity, scale_0..2 and rot_0..3. Raw fields are pre-activation; loading
applies exp to scales, sigmoid to opacity and normalizes the quaternion.
f_rest is stored channel-major (15 red coefficients, then green, then blue).
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from viloop.geometry import Rotation
from viloop.splat.sh import NUM_COEFFS, rgb_to_dc

log = logging.getLogger(__name__)

_REQUIRED_FIELDS = (
    ["x", "y", "z"]
    + [f"f_dc_{i}" for i in range(3)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)
_REST_FIELDS = [f"f_rest_{i}" for i in range(45)]


@dataclass(frozen=True)
class Gaussian:
    """One anisotropic Gaussian primitive, post-activation.

    scale holds per-axis standard deviations in meters; sh is (16, 3),
    degree-3 spherical-harmonics color coefficients.
    """

    position: np.ndarray
    scale: np.ndarray
    orientation: Rotation
    opacity: float
    sh: np.ndarray

    def __post_init__(self):
        scale = np.asarray(self.scale, dtype=float)
        if np.any(scale <= 0):
            raise ValueError("scale components must be positive")
        if not 0.0 < self.opacity < 1.0:
            raise ValueError("opacity must lie in (0, 1)")
        sh = np.asarray(self.sh, dtype=float)
        if sh.shape != (NUM_COEFFS, 3) or not np.all(np.isfinite(sh)):
            raise ValueError("sh must be finite with shape (16, 3)")

    def covariance(self) -> np.ndarray:
        r = self.orientation.matrix
        return r @ np.diag(np.asarray(self.scale) ** 2) @ r.T


class SceneModel:
    """An immutable set of Gaussians packed into arrays for rendering.

    positions (N,3), scales (N,3), rotations (N,4 quaternions wxyz),
    opacities (N,), sh (N,16,3). `source` records provenance (file path or
    synthetic spec) and the count culled by the load-time validity filter.
    """

    def __init__(self, positions, scales, rotations, opacities, sh,
                 source: str = "arrays", culled: int = 0):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.scales = np.ascontiguousarray(scales, dtype=np.float64)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float64)
        self.opacities = np.ascontiguousarray(opacities, dtype=np.float64)
        self.sh = np.ascontiguousarray(sh, dtype=np.float64)
        self.source = source
        self.culled = culled
        n = len(self.positions)
        if n == 0:
            raise ValueError("scene must contain at least one Gaussian")
        if (self.scales.shape != (n, 3) or self.rotations.shape != (n, 4)
                or self.opacities.shape != (n,) or self.sh.shape != (n, NUM_COEFFS, 3)):
            raise ValueError("scene arrays have inconsistent shapes")
        if np.any(self.scales <= 0):
            raise ValueError("scene scales must be positive")
        if np.any(self.opacities <= 0) or np.any(self.opacities >= 1):
            raise ValueError("scene opacities must lie in (0, 1)")
        norms = np.linalg.norm(self.rotations, axis=1)
        self.rotations = self.rotations / norms[:, None]
        flip = self.rotations[:, 0] < 0
        self.rotations[flip] *= -1.0
        for arr in (self.positions, self.scales, self.rotations,
                    self.opacities, self.sh):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box: position extents padded by 3x the largest scale."""
        pad = 3.0 * float(self.scales.max())
        return self.positions.min(axis=0) - pad, self.positions.max(axis=0) + pad

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(self.positions[i].copy(), self.scales[i].copy(),
                        Rotation.from_quat(self.rotations[i]),
                        float(self.opacities[i]), self.sh[i].copy())

    @property
    def gaussians(self) -> list[Gaussian]:
        return [self.gaussian(i) for i in range(len(self))]

    def rotation_matrices(self) -> np.ndarray:
        """All orientations as (N, 3, 3) matrices."""
        w, x, y, z = self.rotations.T
        m = np.empty((len(self), 3, 3))
        m[:, 0, 0] = 1 - 2 * (y * y + z * z)
        m[:, 0, 1] = 2 * (x * y - w * z)
        m[:, 0, 2] = 2 * (x * z + w * y)
        m[:, 1, 0] = 2 * (x * y + w * z)
        m[:, 1, 1] = 1 - 2 * (x * x + z * z)
        m[:, 1, 2] = 2 * (y * z - w * x)
        m[:, 2, 0] = 2 * (x * z - w * y)
        m[:, 2, 1] = 2 * (y * z + w * x)
        m[:, 2, 2] = 1 - 2 * (x * x + y * y)
        return m


def generate_test_scene(spec: list[dict]) -> SceneModel:
    """Build a synthetic scene from blob descriptions.

    Each entry: position (3,), scale (scalar or 3,), rgb (3, in [0,1]);
    optional orientation (Rotation, default identity) and opacity (default
    0.9). Colors become DC coefficients; higher SH orders are zero, so the
    blobs are view-independent.
    """
    if not spec:
        raise ValueError("scene spec must not be empty")
    n = len(spec)
    positions = np.zeros((n, 3))
    scales = np.zeros((n, 3))
    rotations = np.zeros((n, 4))
    opacities = np.zeros(n)
    sh = np.zeros((n, NUM_COEFFS, 3))
    for i, blob in enumerate(spec):
        positions[i] = np.asarray(blob["position"], dtype=float)
        scale = np.asarray(blob["scale"], dtype=float)
        scales[i] = scale if scale.shape == (3,) else np.full(3, float(scale))
        rot = blob.get("orientation")
        rotations[i] = rot.quat if isinstance(rot, Rotation) else (1.0, 0.0, 0.0, 0.0)
        opacities[i] = blob.get("opacity", 0.9)
        sh[i, 0] = rgb_to_dc(blob["rgb"])
    return SceneModel(positions, scales, rotations, opacities, sh,
                      source=f"synthetic:{n} blobs")


def _parse_ply_header(stream) -> tuple[list[tuple[str, str]], int]:
    """Return ([(property, type), ...], vertex_count) for a binary LE PLY."""
    line = stream.readline()
    if line.strip() != b"ply":
        raise ValueError("not a PLY file (missing 'ply' magic)")
    fmt = stream.readline().strip()
    if fmt != b"format binary_little_endian 1.0":
        raise ValueError(f"unsupported PLY format: {fmt.decode(errors='replace')}")
    properties: list[tuple[str, str]] = []
    count = None
    in_vertex = False
    while True:
        line = stream.readline()
        if not line:
            raise ValueError("PLY header ended before end_header")
        tokens = line.split()
        if not tokens or tokens[0] == b"comment":
            continue
        if tokens[0] == b"end_header":
            break
        if tokens[0] == b"element":
            in_vertex = tokens[1] == b"vertex"
            if in_vertex:
                count = int(tokens[2])
        elif tokens[0] == b"property" and in_vertex:
            if tokens[1] == b"list":
                raise ValueError("list properties are not supported")
            properties.append((tokens[2].decode(), tokens[1].decode()))
    if count is None:
        raise ValueError("PLY header has no vertex element")
    return properties, count


_PLY_TYPES = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
              "uchar": "u1", "uint8": "u1", "int": "<i4", "int32": "<i4",
              "uint": "<u4", "uint32": "<u4", "short": "<i2", "ushort": "<u2"}


def load_scene(path) -> SceneModel:
    """Load a Gaussian-splat PLY, applying activations.

    Rows with non-finite values in any used field are culled; a warning
    reports the count and loading fails if more than half the vertices die.
    """
    path = Path(path)
    with open(path, "rb") as f:
        properties, count = _parse_ply_header(f)
        dtype = np.dtype([(name, _PLY_TYPES.get(t, t)) for name, t in properties])
        raw = np.frombuffer(f.read(dtype.itemsize * count), dtype=dtype, count=count)
    names = set(raw.dtype.names)
    missing = [p for p in _REQUIRED_FIELDS if p not in names]
    if missing:
        raise ValueError(f"PLY is missing required fields: {missing}")
    have_rest = all(p in names for p in _REST_FIELDS)
    if not have_rest and any(p in names for p in _REST_FIELDS):
        raise ValueError("PLY has a partial f_rest block; expected 0 or 45 fields")

    positions = np.column_stack([raw["x"], raw["y"], raw["z"]]).astype(np.float64)
    raw_scales = np.column_stack([raw[f"scale_{i}"] for i in range(3)]).astype(np.float64)
    raw_opacity = np.asarray(raw["opacity"], dtype=np.float64)
    rotations = np.column_stack([raw[f"rot_{i}"] for i in range(4)]).astype(np.float64)
    sh = np.zeros((count, NUM_COEFFS, 3))
    for c in range(3):
        sh[:, 0, c] = raw[f"f_dc_{c}"]
    if have_rest:
        rest = np.column_stack([raw[p] for p in _REST_FIELDS]).astype(np.float64)
        # channel-major on disk: 15 coefficients for R, then G, then B
        sh[:, 1:, :] = rest.reshape(count, 3, NUM_COEFFS - 1).transpose(0, 2, 1)

    rot_norm = np.linalg.norm(rotations, axis=1)
    valid = (np.isfinite(positions).all(axis=1)
             & np.isfinite(raw_scales).all(axis=1)
             & np.isfinite(raw_opacity)
             & np.isfinite(rotations).all(axis=1)
             & np.isfinite(sh).all(axis=(1, 2))
             & (rot_norm > 1e-12))
    culled = int(count - valid.sum())
    if culled:
        log.warning("load_scene: culled %d of %d vertices with invalid values",
                    culled, count)
    if culled * 2 > count:
        raise ValueError(f"more than half the vertices are invalid ({culled}/{count})")

    scales = np.exp(raw_scales[valid])
    opacities = 1.0 / (1.0 + np.exp(-raw_opacity[valid]))
    return SceneModel(positions[valid], scales, rotations[valid],
                      opacities, sh[valid],
                      source=str(path), culled=culled)


def save_scene(scene: SceneModel, path) -> None:
    """Write a scene back to binary PLY, inverting the load-time activations."""
    path = Path(path)
    n = len(scene)
    fields = _REQUIRED_FIELDS[:6] + _REST_FIELDS + _REQUIRED_FIELDS[6:]
    header = io.BytesIO()
    header.write(b"ply\nformat binary_little_endian 1.0\n")
    header.write(f"element vertex {n}\n".encode())
    for name in fields:
        header.write(f"property float {name}\n".encode())
    header.write(b"end_header\n")

    data = np.zeros((n, len(fields)), dtype="<f4")
    data[:, 0:3] = scene.positions
    data[:, 3:6] = scene.sh[:, 0, :]
    data[:, 6:51] = scene.sh[:, 1:, :].transpose(0, 2, 1).reshape(n, 45)
    op = scene.opacities
    data[:, 51] = np.log(op / (1.0 - op))
    data[:, 52:55] = np.log(scene.scales)
    data[:, 55:59] = scene.rotations
    with open(path, "wb") as f:
        f.write(header.getvalue())
        f.write(data.tobytes())
