"""Scenario orchestration: config, simulation loop, metrics, reports, CLI."""

from viloop.harness.config import (
    ConfigError,
    DetectorSettings,
    Rates,
    ScenarioConfig,
    config_from_dict,
    load_config,
)
from viloop.harness.metrics import (
    MetricsReport,
    band_coverage,
    compute_metrics,
    mae_over_range_percent,
    metrics_for_run,
)
from viloop.harness.offline import replay_offline
from viloop.harness.report import write_report
from viloop.harness.simloop import RunResult, run_scenario

__all__ = [
    "ConfigError",
    "DetectorSettings",
    "MetricsReport",
    "Rates",
    "RunResult",
    "ScenarioConfig",
    "band_coverage",
    "compute_metrics",
    "config_from_dict",
    "load_config",
    "mae_over_range_percent",
    "metrics_for_run",
    "replay_offline",
    "run_scenario",
    "write_report",
]
