"""Gaussian-splat scene representation and tile-based software rendering."""

from viloop.splat.camera import CameraModel
from viloop.splat.raster import (
    Frame,
    Splat2D,
    project_gaussian,
    rasterize,
    rasterize_with_stats,
    render_at,
)
from viloop.splat.scene import (
    Gaussian,
    SceneModel,
    generate_test_scene,
    load_scene,
    save_scene,
)
from viloop.splat.sh import evaluate_sh, rgb_to_dc

__all__ = [
    "CameraModel",
    "Frame",
    "Gaussian",
    "SceneModel",
    "Splat2D",
    "evaluate_sh",
    "generate_test_scene",
    "load_scene",
    "project_gaussian",
    "rasterize",
    "rasterize_with_stats",
    "render_at",
    "rgb_to_dc",
    "save_scene",
]
