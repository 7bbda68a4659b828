"""Run metrics: range-normalized pose-error summary of a logged run.

The headline row mirrors the flight-test table: max range L, position MAE
and error standard deviation, MAE as a percentage of L, rotation MAE in
degrees, plus the fix rate. Errors compare the pose log (vision fixes or
filter estimates) against the nearest-in-time truth sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    name: str
    max_range: float            # m, max distance from the ship origin
    mae_position: float         # m
    std_position: float         # m
    mae_over_range_pct: float   # 100 * MAE / L
    mae_rotation_deg: float
    fix_rate_pct: float
    sample_count: int

    @property
    def has_fix(self) -> bool:
        return self.sample_count > 0

    def table_row(self) -> str:
        if not self.has_fix:
            return (f"{self.name:<24} {self.max_range:10.1f} "
                    f"{'N/A':>13} {'N/A':>8} {'N/A':>14} {self.fix_rate_pct:8.1f}")
        return (f"{self.name:<24} {self.max_range:10.1f} "
                f"{self.mae_position:6.3f} / {self.std_position:5.3f} "
                f"{self.mae_over_range_pct:7.2f} {self.mae_rotation_deg:14.2f} "
                f"{self.fix_rate_pct:8.1f}")

    @staticmethod
    def table_header() -> str:
        return (f"{'Run':<24} {'Max Range L (m)':>10} "
                f"{'MAE / std of Pos. (m)':>13} {'MAE/L (%)':>8} "
                f"{'MAE of Rot. (deg)':>14} {'Fix (%)':>8}")


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def mae_over_range_percent(mae: float, max_range: float) -> float:
    """The table's MAE/L column: 100 * MAE / L."""
    if max_range <= 0:
        raise ValueError("max range must be positive")
    return 100.0 * mae / max_range


def compute_metrics(truth_csv, pose_csv, name: str = "run") -> MetricsReport:
    """Compare a pose log against the truth log.

    pose_csv may be a vision log (timestamp/fix columns) or an estimate log
    (t column, every row counts as a fix).
    """
    truth = read_csv_columns(truth_csv)
    pose = read_csv_columns(pose_csv)
    truth_t = truth["t"]
    truth_xyz = np.column_stack([truth["x"], truth["y"], truth["z"]])
    truth_quat = np.column_stack([truth[k] for k in ("qw", "qx", "qy", "qz")])
    max_range = float(np.linalg.norm(truth_xyz, axis=1).max())

    if "fix" in pose:
        mask = pose["fix"] > 0.5
        times = pose["timestamp"][mask]
        total = len(pose["fix"])
    else:
        mask = np.ones(len(pose["t"]), dtype=bool)
        times = pose["t"]
        total = len(times)
    if total == 0:
        raise ValueError("pose log is empty")

    xyz = np.column_stack([pose["x"][mask], pose["y"][mask], pose["z"][mask]])
    quat = np.column_stack([pose[k][mask] for k in ("qw", "qx", "qy", "qz")])

    n = len(times)
    fix_rate = 100.0 * n / total
    if n == 0:
        return MetricsReport(name, max_range, float("nan"), float("nan"),
                             float("nan"), float("nan"), 0.0, 0)

    # nearest-truth alignment at the pose timestamps
    idx = np.searchsorted(truth_t, times)
    idx = np.clip(idx, 1, len(truth_t) - 1)
    left_closer = np.abs(times - truth_t[idx - 1]) <= np.abs(truth_t[idx] - times)
    idx = np.where(left_closer, idx - 1, idx)

    pos_err = np.linalg.norm(xyz - truth_xyz[idx], axis=1)
    # |<q1,q2>| = cos(theta/2); atan2 keeps precision near zero error
    c = np.minimum(1.0, np.abs(np.einsum("ij,ij->i", quat, truth_quat[idx])))
    s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    rot_err = np.degrees(2.0 * np.arctan2(s, c))

    mae = float(pos_err.mean())
    return MetricsReport(
        name=name,
        max_range=max_range,
        mae_position=mae,
        std_position=float(pos_err.std()),
        mae_over_range_pct=mae_over_range_percent(mae, max_range),
        mae_rotation_deg=float(rot_err.mean()),
        fix_rate_pct=fix_rate,
        sample_count=n,
    )


def band_coverage(truth_csv, estimate_csv, n_sigma: float = 2.0) -> float:
    """Fraction of truth samples inside the estimate's per-axis sigma band."""
    truth = read_csv_columns(truth_csv)
    est = read_csv_columns(estimate_csv)
    t = est["t"]
    idx = np.searchsorted(truth["t"], t)
    idx = np.clip(idx, 0, len(truth["t"]) - 1)
    hits = []
    for axis, sig in (("x", "sigma_x"), ("y", "sigma_y"), ("z", "sigma_z")):
        err = np.abs(est[axis] - truth[axis][idx])
        hits.append(err <= n_sigma * est[sig])
    return float(np.mean(hits))


def metrics_for_run(run_dir, source: str = "vision") -> MetricsReport:
    run_dir = Path(run_dir)
    pose_csv = run_dir / ("vision.csv" if source == "vision" else "estimate.csv")
    return compute_metrics(run_dir / "truth.csv", pose_csv,
                           name=f"{run_dir.name}:{source}")
