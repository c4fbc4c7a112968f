"""Run records: per-sample rows, summary metrics, and text renderings.

The time-series table has the fixed header

    t, v_o1..v_oM, e1..eM, eL_norm, eN_norm, xi_L, xi_N, active, P1..PM, Q1..QM

with e_i the per-DER voltage tracking error v_ref - v_oi. Floats are
written with shortest round-trip formatting so parsing the table back and
recomputing the table-derived metrics reproduces the stored summary exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import json

import numpy as np


@dataclass
class RunRecord:
    name: str
    seed: int
    m: int
    v_ref: np.ndarray
    t_end_s: float
    dt_secondary_s: float
    t_svc_on_s: float
    t_event_s: float
    t: np.ndarray
    v_o: np.ndarray
    e_star: np.ndarray
    p: np.ndarray
    q: np.ndarray
    e_l_norm: np.ndarray
    e_n_norm: np.ndarray
    xi_l: np.ndarray
    xi_n: np.ndarray
    active: list[str]
    theta_l_norm: np.ndarray
    theta_n_norm: np.ndarray
    w_norm: np.ndarray
    diag: dict = field(default_factory=dict)
    monitor_delta: float = float("inf")
    monitor_max: float = 0.0
    events: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.t.shape[0]


# -- metrics ----------------------------------------------------------------

def _window_mask(t: np.ndarray, start: float, stop: float) -> np.ndarray:
    return (t >= start - 1e-12) & (t < stop - 1e-12)


def _sustained_entry_time(t, worst_err, start, stop, band):
    """Earliest time tau in [start, stop) from which worst_err stays below
    `band` through the end of the window; None if it never does."""
    mask = _window_mask(t, start, stop)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    ok = worst_err[idx] < band
    if not ok[-1]:
        return None
    # last index where the band is violated; entry is the next sample
    bad = np.flatnonzero(~ok)
    entry = idx[0] if bad.size == 0 else idx[bad[-1] + 1]
    return float(t[entry])


def compute_table_summary(t, v_o, v_ref, t_svc_on, t_event, t_end) -> dict:
    """Metrics derivable from the emitted table alone."""
    err = np.abs(v_o - v_ref[None, :])
    worst = err.max(axis=1) if err.size else np.zeros(0)
    out = {}
    pre = err[_window_mask(t, t_svc_on - 0.1, t_svc_on)]
    out["pre_svc_error_v"] = pre.mean(axis=0).tolist() if pre.size else None
    post = err[_window_mask(t, t_event - 0.1, t_event)]
    out["post_svc_error_v"] = post.mean(axis=0).tolist() if post.size else None
    out["svc_settle_time_s"] = _sustained_entry_time(t, worst, t_svc_on, t_event, 1.0)
    band = 0.01 * float(v_ref.max())
    rec = _sustained_entry_time(t, worst, t_event, t_end + 1e-9, band)
    out["event_recovery_time_s"] = rec
    out["event_recovery_duration_s"] = None if rec is None else rec - t_event
    term = err[_window_mask(t, t_end - 0.1, t_end + 1e-9)]
    out["terminal_error_v"] = float(term.max()) if term.size else None
    out["max_v_norm"] = float(np.linalg.norm(v_o, axis=1).max()) if v_o.size else 0.0
    return out


def compute_summary(rec: RunRecord) -> dict:
    out = {
        "name": rec.name,
        "seed": rec.seed,
        "m": rec.m,
        "v_ref_v": rec.v_ref.tolist(),
        "t_end_s": rec.t_end_s,
        "dt_secondary_s": rec.dt_secondary_s,
        "t_svc_on_s": rec.t_svc_on_s,
        "t_event_s": rec.t_event_s,
        "rows": rec.n_rows,
    }
    out.update(compute_table_summary(rec.t, rec.v_o, rec.v_ref,
                                     rec.t_svc_on_s, rec.t_event_s, rec.t_end_s))
    out["max_e_star_norm"] = float(np.linalg.norm(rec.e_star, axis=1).max()) if rec.e_star.size else 0.0
    out["monitor_delta"] = rec.monitor_delta
    out["monitor_max"] = rec.monitor_max
    out["monitor_violated"] = bool(rec.monitor_max > rec.monitor_delta)
    post = rec.t >= rec.t_svc_on_s - 1e-12
    act = np.array(rec.active)
    n_post = int(post.sum())
    switches = 0
    prev = None
    for a in act[post]:
        if prev is not None and a != prev and a in ("L", "N") and prev in ("L", "N"):
            switches += 1
        prev = a
    out["switch_count"] = switches
    out["dwell_l_frac"] = float(np.sum(act[post] == "L") / n_post) if n_post else 0.0
    out["dwell_n_frac"] = float(np.sum(act[post] == "N") / n_post) if n_post else 0.0
    eligible = rec.diag.get("identity_eligible")
    resid = rec.diag.get("identity_resid")
    if eligible is not None and eligible.any():
        ok = resid[eligible] <= 1e-9
        out["identity_checked"] = int(eligible.sum())
        out["identity_pass_frac"] = float(ok.mean())
        out["identity_max_resid"] = float(resid[eligible].max())
    else:
        out["identity_checked"] = 0
        out["identity_pass_frac"] = None
        out["identity_max_resid"] = None
    out["events"] = list(rec.events)
    return out


# -- text renderings ---------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def csv_header(m: int) -> str:
    cols = (["t"] + [f"v_o{i+1}" for i in range(m)] + [f"e{i+1}" for i in range(m)]
            + ["eL_norm", "eN_norm", "xi_L", "xi_N", "active"]
            + [f"P{i+1}" for i in range(m)] + [f"Q{i+1}" for i in range(m)])
    return ",".join(cols)


def render_csv(rec: RunRecord) -> str:
    lines = [csv_header(rec.m)]
    err = rec.v_ref[None, :] - rec.v_o if rec.v_o.size else rec.v_o
    for k in range(rec.n_rows):
        parts = [_fmt(rec.t[k])]
        parts += [_fmt(x) for x in rec.v_o[k]]
        parts += [_fmt(x) for x in err[k]]
        parts += [_fmt(rec.e_l_norm[k]), _fmt(rec.e_n_norm[k]),
                  _fmt(rec.xi_l[k]), _fmt(rec.xi_n[k]), rec.active[k]]
        parts += [_fmt(x) for x in rec.p[k]]
        parts += [_fmt(x) for x in rec.q[k]]
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> dict:
    lines = [ln for ln in text.strip().split("\n") if ln]
    header = lines[0].split(",")
    m = sum(1 for c in header if c.startswith("v_o"))
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        return {"m": m, "t": np.zeros(0), "v_o": np.zeros((0, m)),
                "active": [], "p": np.zeros((0, m)), "q": np.zeros((0, m)),
                "e": np.zeros((0, m)), "e_l_norm": np.zeros(0), "e_n_norm": np.zeros(0),
                "xi_l": np.zeros(0), "xi_n": np.zeros(0)}
    act_col = header.index("active")
    data = {
        "m": m,
        "t": np.array([float(r[0]) for r in rows]),
        "v_o": np.array([[float(x) for x in r[1:1 + m]] for r in rows]),
        "e": np.array([[float(x) for x in r[1 + m:1 + 2 * m]] for r in rows]),
        "e_l_norm": np.array([float(r[1 + 2 * m]) for r in rows]),
        "e_n_norm": np.array([float(r[2 + 2 * m]) for r in rows]),
        "xi_l": np.array([float(r[3 + 2 * m]) for r in rows]),
        "xi_n": np.array([float(r[4 + 2 * m]) for r in rows]),
        "active": [r[act_col] for r in rows],
        "p": np.array([[float(x) for x in r[act_col + 1:act_col + 1 + m]] for r in rows]),
        "q": np.array([[float(x) for x in r[act_col + 1 + m:act_col + 1 + 2 * m]] for r in rows]),
    }
    return data


def render_summary_json(rec: RunRecord) -> str:
    return json.dumps(rec.summary, indent=2, sort_keys=True) + "\n"


def figure_frames(rec: RunRecord) -> dict[str, str]:
    """Plot-ready per-figure tables mirroring the case study's panels."""
    m = rec.m
    frames = {}

    def table(cols: list[str], arrays: list[np.ndarray]) -> str:
        lines = [",".join(cols)]
        for k in range(rec.n_rows):
            lines.append(",".join(_fmt(a[k]) if a.dtype.kind == "f" else str(a[k])
                                  for a in arrays))
        return "\n".join(lines) + "\n"

    volt_cols = ["t"] + [f"v_o{i+1}" for i in range(m)] + ["v_ref"]
    volt_arrays = [rec.t] + [rec.v_o[:, i] for i in range(m)] + [np.full(rec.n_rows, rec.v_ref[0])]
    frames["fig_voltages.csv"] = table(volt_cols, volt_arrays)

    pq_cols = ["t"] + [f"P{i+1}" for i in range(m)] + [f"Q{i+1}" for i in range(m)]
    pq_arrays = [rec.t] + [rec.p[:, i] for i in range(m)] + [rec.q[:, i] for i in range(m)]
    frames["fig_powers.csv"] = table(pq_cols, pq_arrays)

    lines = ["t,active"]
    for k in range(rec.n_rows):
        lines.append(f"{_fmt(rec.t[k])},{rec.active[k]}")
    frames["fig_switching.csv"] = "\n".join(lines) + "\n"
    return frames
