"""Render the built-in ship scene from a few vantage points.

Builds the synthetic six-part vessel, places a forward-looking camera at
increasing ranges behind the stern, and writes one PNG per view. Also shows
the per-splat intermediate of the projection stage for a single Gaussian.
"""

from pathlib import Path

import numpy as np

from viloop.geometry import Pose, Rotation, compose
from viloop.posepipe.shipmodel import default_ship_model, ship_scene_spec
from viloop.splat.camera import CameraModel
from viloop.splat.raster import project_gaussian, render_at
from viloop.splat.scene import generate_test_scene

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

# camera looks along body +x (optical axis forward, image y down)
FORWARD = Pose(np.zeros(3), Rotation.from_matrix(np.array([
    [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])))

scene = generate_test_scene(ship_scene_spec(default_ship_model(),
                                            per_part=80, seed=7))
camera = CameraModel()
lo, hi = scene.bounding_box
print(f"scene: {len(scene)} gaussians, bbox {np.round(lo, 1)} .. {np.round(hi, 1)}")

for rng_m in (4.0, 8.0, 12.0):
    body = Pose(np.array([-rng_m, 0.6 * rng_m / 3, 2.5]), Rotation.identity())
    frame = render_at(scene, body, camera, extrinsic=FORWARD)
    path = OUT / f"ship_{int(rng_m):02d}m.png"
    frame.save_png(path)
    print(f"rendered from {rng_m:.0f} m -> {path}")

g = scene.gaussian(0)
cam = camera.with_pose(compose(Pose(np.array([-8.0, 0.0, 2.5])), FORWARD))
splat = project_gaussian(g, cam)
if splat is None:
    print("first gaussian culled from this view")
else:
    print(f"first gaussian projects to px {np.round(splat.mean, 1)}, "
          f"screen cov diag {np.round(np.diag(splat.cov), 2)} px^2, "
          f"depth {splat.depth:.2f} m")
