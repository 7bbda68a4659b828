"""Command-line front end for the simulation harness.

Exit codes: 0 success, 1 configuration error, 2 runtime abort,
3 run degraded but completed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_DEGRADED = 3


def _cmd_run(args) -> int:
    from viloop.harness.config import ConfigError, load_config
    from viloop.harness.report import write_report
    from viloop.harness.simloop import run_scenario

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        config = load_config(args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    output = Path(args.output or f"runs/{config.name}")
    try:
        result = run_scenario(config, output)
        print(write_report(output), end="")
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"run directory: {result.run_dir}")
    return EXIT_DEGRADED if result.degraded else EXIT_OK


def _cmd_metrics(args) -> int:
    from viloop.harness.metrics import MetricsReport, metrics_for_run

    print(MetricsReport.table_header())
    for source in args.source:
        print(metrics_for_run(args.run_dir, source).table_row())
    return EXIT_OK


def _cmd_replay(args) -> int:
    from viloop.harness.config import _parse_endpoint
    from viloop.harness.metrics import MetricsReport
    from viloop.harness.offline import replay_offline

    endpoint = _parse_endpoint(args.detector) if args.detector else None
    try:
        report = replay_offline(args.run_dir, endpoint=endpoint)
    except FileNotFoundError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(MetricsReport.table_header())
    print(report.table_row())
    return EXIT_OK


def _cmd_report(args) -> int:
    from viloop.harness.report import write_report
    print(write_report(args.run_dir), end="")
    return EXIT_OK


def _cmd_render(args) -> int:
    from viloop.geometry import Pose, Rotation
    from viloop.posepipe.shipmodel import default_ship_model, ship_scene_spec
    from viloop.splat.camera import CameraModel
    from viloop.splat.raster import render_at
    from viloop.splat.scene import generate_test_scene, load_scene

    if args.scene == "builtin":
        scene = generate_test_scene(ship_scene_spec(default_ship_model()))
    else:
        scene = load_scene(args.scene)
    x, y, z, qw, qx, qy, qz = args.pose
    pose = Pose(np.array([x, y, z]), Rotation.from_quat([qw, qx, qy, qz]))
    frame = render_at(scene, pose, CameraModel())
    frame.save_png(args.out)
    print(f"rendered {len(scene)} gaussians -> {args.out}")
    return EXIT_OK


def _cmd_protocol_fuzz(args) -> int:
    from viloop.netlink.codec import (
        ProtocolError,
        decode_detect_request,
        decode_detect_response,
        decode_pose_stream,
        encode_pose_stream,
        PoseStreamMessage,
    )
    from viloop.geometry import Pose

    rng = np.random.default_rng(args.seed)
    golden = encode_pose_stream(PoseStreamMessage(0, 0, 0, Pose.identity()))
    decoders = (decode_pose_stream, decode_detect_request, decode_detect_response)
    rejected = 0
    for i in range(args.count):
        n = int(rng.integers(0, 128))
        blob = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        if i % 3 == 0:
            blob = golden[:int(rng.integers(0, len(golden)))] + blob
        for decode in decoders:
            try:
                decode(blob)
            except ProtocolError:
                rejected += 1
    print(f"fuzzed {args.count} inputs x {len(decoders)} decoders, "
          f"{rejected} rejected, 0 crashes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viloop",
        description="vision-in-the-loop UAV simulation harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario config")
    p.add_argument("config")
    p.add_argument("--output", help="run directory (default runs/<name>)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("metrics", help="summarize a completed run")
    p.add_argument("run_dir")
    p.add_argument("--source", nargs="+", default=["vision", "estimate"],
                   choices=["vision", "estimate"])
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("replay", help="re-run the vision stack on saved frames")
    p.add_argument("run_dir")
    p.add_argument("--detector", help="remote detector endpoint host:port")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("report", help="write and print report.txt")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("render", help="single-frame debug render")
    p.add_argument("scene", help="scene PLY path or 'builtin'")
    p.add_argument("pose", type=float, nargs=7,
                   metavar=("x", "y", "z", "qw", "qx", "qy", "qz"))
    p.add_argument("--out", default="frame.png")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("protocol-fuzz", help="robustness-check the codecs")
    p.add_argument("--count", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_protocol_fuzz)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
