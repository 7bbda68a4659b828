"""Object models: per-class 3D keypoints of the ship parts, in the ship frame.

Ship frame convention: origin at the flight-deck center, x forward toward the
bow, z up. The default model decomposes the vessel into six parts, each
contributing its bounding-box corners as the 8 keypoints the detector reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NUM_CLASSES = 6


@dataclass(frozen=True)
class ObjectModel:
    class_id: int
    name: str
    model_points: np.ndarray  # (K, 3) meters, ship frame

    def __post_init__(self):
        pts = np.asarray(self.model_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
            raise ValueError("model_points must be (K, 3) with K >= 4")
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise ValueError(f"class {self.class_id}: keypoints are collinear")
        object.__setattr__(self, "model_points", pts)

    @property
    def num_keypoints(self) -> int:
        return len(self.model_points)


def box_corners(center, size) -> np.ndarray:
    """8 corners of an axis-aligned box, fixed corner ordering."""
    c = np.asarray(center, dtype=float)
    h = np.asarray(size, dtype=float) / 2.0
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                      for sz in (-1, 1)], dtype=float)
    return c + signs * h


# name, box center (m, ship frame), box size (m)
_DEFAULT_PARTS = [
    ("stern", (-1.5, 0.0, 0.6), (3.0, 5.0, 1.2)),
    ("deck", (2.5, 0.0, 0.15), (5.0, 5.2, 0.3)),
    ("superstructure", (6.5, 0.0, 1.8), (3.6, 4.2, 3.6)),
    ("funnel", (9.0, 0.0, 3.2), (1.4, 1.6, 2.4)),
    ("mast", (7.2, 0.0, 5.0), (0.8, 0.8, 2.8)),
    ("bow", (12.0, 0.0, 1.0), (4.6, 3.6, 2.0)),
]


def default_ship_model() -> list[ObjectModel]:
    """Six-part research-vessel stand-in, 8 bounding-box corners per part."""
    return [ObjectModel(i, name, box_corners(center, size))
            for i, (name, center, size) in enumerate(_DEFAULT_PARTS)]


def save_ship_model(models: list[ObjectModel], path) -> None:
    doc = {"classes": [
        {"class_id": m.class_id, "name": m.name,
         "keypoints": m.model_points.tolist()} for m in models]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_ship_model(path) -> list[ObjectModel]:
    doc = json.loads(Path(path).read_text())
    models = [ObjectModel(c["class_id"], c["name"], np.asarray(c["keypoints"]))
              for c in doc["classes"]]
    ids = [m.class_id for m in models]
    if len(set(ids)) != len(ids):
        raise ValueError("ship model has duplicate class ids")
    return sorted(models, key=lambda m: m.class_id)


def ship_scene_spec(models: list[ObjectModel], per_part: int = 60,
                    seed: int = 0) -> list[dict]:
    """Blob spec for a renderable stand-in scene built from the part geometry.

    Gaussians are scattered inside each part's keypoint bounding box with a
    distinct flat color per part, suitable for generate_test_scene.
    """
    rng = np.random.default_rng(seed)
    palette = np.array([
        [0.85, 0.30, 0.25], [0.55, 0.55, 0.60], [0.90, 0.85, 0.75],
        [0.95, 0.75, 0.20], [0.35, 0.40, 0.45], [0.30, 0.55, 0.80],
    ])
    spec = []
    for m in models:
        lo = m.model_points.min(axis=0)
        hi = m.model_points.max(axis=0)
        color = palette[m.class_id % len(palette)]
        for _ in range(per_part):
            spec.append(dict(
                position=rng.uniform(lo, hi),
                scale=rng.uniform(0.08, 0.3),
                rgb=np.clip(color + rng.normal(0, 0.04, 3), 0.02, 0.98),
                opacity=float(rng.uniform(0.55, 0.95)),
            ))
    return spec
