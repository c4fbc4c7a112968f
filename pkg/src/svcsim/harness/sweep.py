"""Parameter sweeps: one independent scenario per value, optional process
fan-out, results aggregated in input order."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from ..errors import ConfigError, MonitorViolationError, PlantDivergenceError
from .config import ScenarioConfig, config_from_dict
from .loop import run_scenario


def set_by_path(raw: dict, path: str, value):
    """Set raw['a']['b']... = value for path 'a.b....'; creates no new keys
    (unknown paths must fail validation, not silently extend the schema)."""
    keys = path.split(".")
    node = raw
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"unknown config path {path!r}")
        node = node[key]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"unknown config path {path!r}")
    node[keys[-1]] = value
    return raw


def _sweep_one(payload: tuple[dict, str]) -> dict:
    raw, label = payload
    cfg = config_from_dict(raw)
    try:
        rec = run_scenario(cfg)
        return {"value": label, "status": "ok", "summary": rec.summary}
    except (PlantDivergenceError, MonitorViolationError) as exc:
        return {"value": label, "status": exc.category,
                "error": str(exc), "summary": None}


def run_sweep(base: ScenarioConfig, param_path: str, values: list,
              workers: int = 1) -> list[dict]:
    jobs = []
    for value in values:
        raw = base.model_dump()
        set_by_path(raw, param_path, value)
        raw["name"] = f"{base.name}[{param_path}={value}]"
        config_from_dict(raw)  # validate before fan-out
        jobs.append((raw, repr(value)))
    if workers <= 1 or len(jobs) <= 1:
        return [_sweep_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_one, jobs))
