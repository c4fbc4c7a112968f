"""Scenario configuration, the two-rate loop, records, comparisons, sweeps."""

from .compare import compare_runs
from .config import (ScenarioConfig, apply_profile, config_from_dict,
                     load_config, PROFILES)
from .loop import run_scenario
from .records import (RunRecord, compute_summary, compute_table_summary,
                      csv_header, figure_frames, parse_csv, render_csv,
                      render_summary_json)
from .sweep import run_sweep

__all__ = [
    "ScenarioConfig", "apply_profile", "config_from_dict", "load_config", "PROFILES",
    "run_scenario", "RunRecord", "compute_summary", "compute_table_summary",
    "csv_header", "figure_frames", "parse_csv", "render_csv",
    "render_summary_json", "compare_runs", "run_sweep",
]
