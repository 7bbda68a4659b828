"""Fly the Test-2 analog end to end and print its report.

The straight-pass scenario closes the whole loop: rendered frames feed the
oracle detector, EPnP + fusion produce delayed pose fixes, the filter blends
them with IMU prediction, and the geometric controller tracks the reference
from the estimated state. Takes about half a minute on a laptop CPU.
"""

from pathlib import Path

from viloop.harness.config import load_config
from viloop.harness.report import write_report
from viloop.harness.simloop import run_scenario

scenario = Path(__file__).parent.parent / "scenarios" / "test2_straight.toml"
out = Path(__file__).parent / "out" / "test2_run"

config = load_config(scenario)
print(f"running {config.name}: {config.duration:.0f} s of simulated flight, "
      f"control from {config.control_source}...")
result = run_scenario(config, out)
print(f"completed={result.completed} degraded={result.degraded} "
      f"fix rate={result.fix_rate:.1f}%\n")
print(write_report(out))
print(f"frames and logs in {out}")
