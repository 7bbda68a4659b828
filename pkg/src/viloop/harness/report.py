"""Human-readable run summary plus pointers to the columnar plot data."""

from __future__ import annotations

from pathlib import Path

from viloop.harness.config import load_config
from viloop.harness.metrics import band_coverage, metrics_for_run, read_csv_columns
from viloop.harness.metrics import MetricsReport


def write_report(run_dir, to_file: bool = True) -> str:
    run_dir = Path(run_dir)
    config = load_config(run_dir / "config.snapshot")
    lines = [f"Run report: {config.name}", "=" * 60]

    truth = read_csv_columns(run_dir / "truth.csv")
    duration_logged = float(truth["t"][-1]) if len(truth["t"]) else 0.0
    partial = duration_logged < 0.99 * config.duration
    if partial:
        lines += ["", "*** WARNING: PARTIAL RUN "
                  f"(logged {duration_logged:.1f} s of {config.duration:.1f} s) ***"]

    lines += ["", MetricsReport.table_header()]
    vision = metrics_for_run(run_dir, "vision")
    estimate = metrics_for_run(run_dir, "estimate")
    lines.append(vision.table_row())
    lines.append(estimate.table_row())

    if vision.has_fix:
        lines += ["", f"MAE/L arithmetic: {vision.mae_position:.3f} m over "
                  f"L = {vision.max_range:.1f} m -> "
                  f"{vision.mae_over_range_pct:.2f}%"]
    else:
        lines += ["", "No vision fixes: position/rotation metrics are N/A."]

    coverage = band_coverage(run_dir / "truth.csv", run_dir / "estimate.csv")
    lines += [f"2-sigma band coverage of truth: {100.0 * coverage:.1f}% "
              f"(95% expected for a well-tuned filter)"]

    lines += ["", "Plot data:",
              "  truth.csv     t,x,y,z,qw..qz,vx..vz,wx..wz",
              "  estimate.csv  t,x,y,z,qw..qz,vx..vz,sigma_x..z (2-sigma bands)",
              "  vision.csv    timestamp,fix,n_classes,pose,pos_sigma,reproj_rms"]
    text = "\n".join(lines) + "\n"
    if to_file:
        (run_dir / "report.txt").write_text(text)
    return text
