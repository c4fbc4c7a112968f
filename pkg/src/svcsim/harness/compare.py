"""Side-by-side comparison of two scenarios on the same timing grid."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, MonitorViolationError, PlantDivergenceError
from .config import ScenarioConfig
from .loop import run_scenario
from .records import RunRecord

DIVERGED_FRACTION = 0.05  # terminal error above 5% of the reference


def _verdict(summary: dict | None, failure: str | None, v_ref: float) -> str:
    if failure is not None:
        return "diverged"
    term = summary.get("terminal_error_v")
    if term is None or term > DIVERGED_FRACTION * v_ref:
        return "diverged"
    if summary.get("event_recovery_time_s") is not None:
        return "recovered"
    return "tracks"


def compare_runs(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig) -> dict:
    """Run both configs and produce metric deltas plus a verdict table."""
    if cfg_a.timing != cfg_b.timing:
        raise ConfigError("compared configs must share the timing grid")
    if cfg_a.plant.kind != cfg_b.plant.kind or cfg_a.m != cfg_b.m:
        raise ConfigError("compared configs must share the plant")

    out: dict = {"a": {"name": cfg_a.name, "controller": cfg_a.controller.kind},
                 "b": {"name": cfg_b.name, "controller": cfg_b.controller.kind}}
    for key, cfg in (("a", cfg_a), ("b", cfg_b)):
        failure = None
        summary = None
        try:
            summary = run_scenario(cfg).summary
        except (PlantDivergenceError, MonitorViolationError) as exc:
            failure = f"{exc.category} at t={exc.t}"
        out[key]["summary"] = summary
        out[key]["failure"] = failure
        out[key]["verdict"] = _verdict(summary, failure, cfg.controller.v_ref_v)

    deltas = {}
    sa, sb = out["a"]["summary"], out["b"]["summary"]
    if sa and sb:
        for key in ("terminal_error_v", "max_v_norm", "max_e_star_norm",
                    "svc_settle_time_s", "event_recovery_duration_s", "switch_count"):
            va, vb = sa.get(key), sb.get(key)
            deltas[key] = (None if va is None or vb is None else vb - va)
        for key in ("pre_svc_error_v", "post_svc_error_v"):
            va, vb = sa.get(key), sb.get(key)
            if va is not None and vb is not None:
                deltas[key + "_max"] = float(np.max(vb) - np.max(va))
    out["deltas"] = deltas
    return out
