"""Offline replay: run the detector + pose pipeline over saved frames.

A run directory's frames/ dump plus its frames.csv sidecar (ground-truth pose
per frame) are everything the vision stack needs; no dynamics is involved.
With the oracle detector and the original seed this reproduces the live run's
vision log byte for byte, which is the regression contract for saved data.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from viloop.geometry import Pose, Rotation
from viloop.harness.config import ScenarioConfig, load_config
from viloop.harness.metrics import MetricsReport, compute_metrics
from viloop.harness.simloop import _fmt
from viloop.posepipe.detector import OracleDetector, OracleNoise, RemoteDetector
from viloop.posepipe.pipeline import estimate_from_frame
from viloop.splat.raster import Frame
from viloop.geometry import compose, inverse


def load_sidecar(run_dir) -> list[tuple[float, int, Pose]]:
    path = Path(run_dir) / "frames.csv"
    if not path.exists():
        raise FileNotFoundError(f"no frame sidecar at {path}")
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            pose = Pose(np.array([float(row["x"]), float(row["y"]),
                                  float(row["z"])]),
                        Rotation.from_quat([float(row["qw"]), float(row["qx"]),
                                            float(row["qy"]), float(row["qz"])]))
            rows.append((float(row["timestamp"]), int(row["frame_index"]), pose))
    return rows


def build_detector(config: ScenarioConfig, endpoint: tuple[str, int] | None = None):
    if endpoint is not None:
        return RemoteDetector(endpoint, timeout=config.detector.timeout)
    if config.detector.kind == "remote":
        return RemoteDetector(config.detector.endpoint,
                              timeout=config.detector.timeout)
    root_seed = np.random.SeedSequence(config.seed)
    detector_seed = int(root_seed.spawn(2)[1].generate_state(1)[0] % 2 ** 31)
    return OracleDetector(
        config.build_ship_model(), config.camera,
        OracleNoise(pixel_sigma=config.detector.pixel_sigma,
                    dropout_prob=config.detector.dropout_prob),
        extrinsic=config.extrinsic, seed=detector_seed)


def replay_offline(run_dir, detector=None,
                   endpoint: tuple[str, int] | None = None) -> MetricsReport:
    """Re-run the vision stack over dumped frames; writes vision_replay.csv."""
    run_dir = Path(run_dir)
    config = load_config(run_dir / "config.snapshot")
    sidecar = load_sidecar(run_dir)
    frames_dir = run_dir / "frames"
    if detector is None:
        detector = build_detector(config, endpoint)
    models = config.build_ship_model()

    out = run_dir / "vision_replay.csv"
    with open(out, "w") as f:
        f.write("timestamp,fix,n_classes,x,y,z,qw,qx,qy,qz,pos_sigma,reproj_rms\n")
        for t, index, truth_pose in sidecar:
            png = frames_dir / f"{index:06d}.png"
            if not png.exists():
                raise FileNotFoundError(f"frame {index} listed but missing: {png}")
            frame = Frame.load_png(png, timestamp=t, truth_pose=truth_pose)
            result = estimate_from_frame(frame, detector, models,
                                         config.camera, config.fusion)
            if result.fix:
                est = result.estimate
                body = compose(est.camera_in_ship(), inverse(config.extrinsic))
                sigma = float(np.sqrt(np.trace(est.position_cov) / 3.0))
                f.write(f"{t!r},1,{len(est.class_ids)},"
                        f"{_fmt(body.position)},{_fmt(body.rotation.quat)},"
                        f"{sigma!r},{est.reprojection_rms!r}\n")
            else:
                f.write(f"{t!r},0,0,0.0,0.0,0.0,1.0,0.0,0.0,0.0,0.0,0.0\n")
    return compute_metrics(run_dir / "truth.csv", out,
                           name=f"{run_dir.name}:replay")
