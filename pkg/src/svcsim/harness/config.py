"""Scenario configuration: strict, versioned, units in key names.

Configs load from YAML (or plain dicts through the service API). Unknown
keys are rejected, every quantity carries its unit in the key name, and the
defaults reproduce the showcase case study: 4 DERs, V_ref = 300 V, SVC
engaged at 1 s, load-2 impedance halved at 2 s, 500 secondary samples of
5 ms ending at 2.5 s.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError

SCHEMA_VERSION = 1


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TimingConfig(StrictModel):
    t_end_s: float = 2.5
    dt_primary_s: float = 1e-6
    dt_secondary_s: float = 5e-3
    t_svc_on_s: float = 1.0
    t_event_s: float = 2.0

    @model_validator(mode="after")
    def _check(self):
        if self.dt_primary_s <= 0 or self.dt_secondary_s <= 0:
            raise ValueError("step sizes must be positive")
        if self.t_end_s < 0:
            raise ValueError("t_end_s must be >= 0 (0 gives an empty run)")
        ratio = self.dt_secondary_s / self.dt_primary_s
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("dt_secondary_s must be an integer multiple of dt_primary_s")
        if self.t_end_s > 0 and not (self.t_svc_on_s < self.t_event_s < self.t_end_s):
            raise ValueError("need t_svc_on_s < t_event_s < t_end_s")
        return self

    @property
    def n_substeps(self) -> int:
        return round(self.dt_secondary_s / self.dt_primary_s)

    @property
    def n_samples(self) -> int:
        n = self.t_end_s / self.dt_secondary_s
        if abs(n - round(n)) > 1e-9:
            raise ValueError("t_end_s must be an integer multiple of dt_secondary_s")
        return round(n)


class EventConfig(StrictModel):
    load_index: int = 2
    impedance_factor: float = Field(default=0.5, gt=0)


class DerConfig(StrictModel):
    l_f_h: float = 3.9e-3
    r_f_ohm: float = 0.5
    c_f_f: float = 16e-6
    l_c_h: float = 0.5e-3
    r_c_ohm: float = 0.09
    r_d_ohm: float = 2.05
    d_q_v_per_var: float = 1e-3
    m_p_rad_per_ws: float = 9.4e-5
    r_v_ohm: float = 1.0
    x_v_ohm: float = 0.5
    k_pv: float = 0.5
    k_iv: float = 52.0
    k_pc: float = 4.5
    k_ic: float = 450.0
    omega_c_rad_s: float = 31.41


def _default_ders() -> list["DerConfig"]:
    return [
        DerConfig(d_q_v_per_var=1e-3, m_p_rad_per_ws=9.4e-5,
                  k_pv=0.5, k_iv=52.0, k_pc=4.5, k_ic=450.0),
        DerConfig(d_q_v_per_var=1e-3, m_p_rad_per_ws=9.4e-5,
                  k_pv=0.5, k_iv=52.0, k_pc=4.5, k_ic=450.0),
        DerConfig(d_q_v_per_var=1.5e-3, m_p_rad_per_ws=1.41e-4,
                  k_pv=0.25, k_iv=34.0, k_pc=3.55, k_ic=353.0),
        DerConfig(d_q_v_per_var=1.5e-3, m_p_rad_per_ws=1.41e-4,
                  k_pv=0.25, k_iv=34.0, k_pc=3.55, k_ic=353.0),
    ]


class LineConfig(StrictModel):
    r_ohm: float
    l_h: float
    from_bus: int
    to_bus: int


class LoadConfig(StrictModel):
    r_ohm: float
    l_h: float
    bus: int


def _default_lines() -> list["LineConfig"]:
    return [
        LineConfig(r_ohm=0.15, l_h=0.42e-3, from_bus=0, to_bus=1),
        LineConfig(r_ohm=0.35, l_h=0.33e-3, from_bus=1, to_bus=2),
        LineConfig(r_ohm=0.23, l_h=0.55e-3, from_bus=2, to_bus=3),
    ]


def _default_loads() -> list["LoadConfig"]:
    return [
        LoadConfig(r_ohm=20.0, l_h=15e-3, bus=0),
        LoadConfig(r_ohm=10.0, l_h=25e-3, bus=2),
    ]


class NetworkConfig(StrictModel):
    n_bus: int = 4
    der_bus: list[int] = Field(default_factory=lambda: [0, 1, 2, 3])
    lines: list[LineConfig] = Field(default_factory=_default_lines)
    loads: list[LoadConfig] = Field(default_factory=_default_loads)


class PllConfig(StrictModel):
    # defaults are ours: the source treats the primary level as a black box
    k_p_rad_per_vs: float = 0.05
    k_i_rad_per_vs2: float = 1.0
    omega_f_rad_s: float = 314.16


class FullPlantConfig(StrictModel):
    ders: list[DerConfig] = Field(default_factory=_default_ders)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    pll: PllConfig = Field(default_factory=PllConfig)
    f_nominal_hz: float = 60.0


class SurrogatePlantConfig(StrictModel):
    m: int = 4
    tau_v_s: float = 0.010
    omega_c_rad_s: float = 31.41
    f_nominal_hz: float = 60.0
    kappa_stiffening: float = 2.0
    d_q_v_per_var: list[float] = Field(default_factory=lambda: [1e-3, 1e-3, 1.5e-3, 1.5e-3])
    load_r_ohm: list[float] = Field(default_factory=lambda: [20.0, 10.0])
    load_l_h: list[float] = Field(default_factory=lambda: [15e-3, 25e-3])
    load_share: list[list[float]] = Field(default_factory=lambda: [
        [0.4, 0.3, 0.2, 0.1],
        [0.1, 0.2, 0.4, 0.3],
    ])


class PhiConfig(StrictModel):
    mode: Literal["none", "uniform", "fixed_norm", "constant"] = "none"
    amplitude: float = 0.0


class LinearOracleConfig(StrictModel):
    m: int = 2
    order_n: int = 2
    delay_d: int = 1
    family: Literal["random", "explicit"] = "random"
    # explicit coefficient stacks, shape (deg+1, m, m), as nested lists
    a_coeffs: Optional[list] = None
    b_coeffs: Optional[list] = None
    phi: PhiConfig = Field(default_factory=PhiConfig)


class PlantConfig(StrictModel):
    kind: Literal["full", "surrogate", "linear_oracle"] = "full"
    full: FullPlantConfig = Field(default_factory=FullPlantConfig)
    surrogate: SurrogatePlantConfig = Field(default_factory=SurrogatePlantConfig)
    linear_oracle: LinearOracleConfig = Field(default_factory=LinearOracleConfig)


class SwitchConfig(StrictModel):
    mu: float = Field(default=1.0, ge=0)
    window: int = Field(default=10, ge=1)


class AnnConfig(StrictModel):
    hidden: int = Field(default=20, ge=1)
    learn_rate: float = Field(default=1e-3, gt=0)
    w_max: float = Field(default=100.0, gt=0)
    input_scale_v: float = Field(default=300.0, gt=0)


class EstimatorConfig(StrictModel):
    order_n: int = Field(default=2, ge=1)
    delay_d: int = Field(default=1, ge=1)
    rho_v: float = Field(default=0.25, ge=0)
    h_min: float = Field(default=0.1, gt=0)
    theta_box: float = Field(default=1e3, gt=0)
    init: Literal["pure_delay", "zeros"] = "pure_delay"
    ann: AnnConfig = Field(default_factory=AnnConfig)


class ControllerConfig(StrictModel):
    kind: Literal["mmac", "linear_only", "nonlinear_only", "oracle",
                  "feedback_linearization", "none"] = "mmac"
    v_ref_v: float = 300.0
    f_poly: list[float] = Field(default_factory=lambda: [1.0, -0.2])
    r_diag: Optional[float] = None
    clamp_min_v: float = 0.0
    clamp_max_v: float = 600.0
    monitor_delta_factor: float = Field(default=10.0, gt=0)
    monitor_enforce: bool = True
    switch: SwitchConfig = Field(default_factory=SwitchConfig)
    update_policy: Literal["both", "active_only"] = "both"
    fl_tau_ref_s: float = Field(default=3e-3, gt=0)


class OutputConfig(StrictModel):
    emit_figures: bool = False


class ScenarioConfig(StrictModel):
    schema_version: int = SCHEMA_VERSION
    name: str = "siv-default"
    seed: int = 1234
    timing: TimingConfig = Field(default_factory=TimingConfig)
    event: EventConfig = Field(default_factory=EventConfig)
    plant: PlantConfig = Field(default_factory=PlantConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        if self.controller.clamp_min_v >= self.controller.clamp_max_v:
            raise ValueError("clamp_min_v must be below clamp_max_v")
        n, d = self.estimator.order_n, self.estimator.delay_d
        if not 1 <= d <= n:
            raise ValueError("need 1 <= delay_d <= order_n")
        kind = self.plant.kind
        if kind == "linear_oracle":
            if self.event.impedance_factor != 1.0 and self.timing.t_end_s > 0 \
                    and self.timing.t_event_s < self.timing.t_end_s:
                raise ValueError("linear_oracle plants have no loads: set "
                                 "event.impedance_factor to 1.0")
            lo = self.plant.linear_oracle
            if lo.family == "explicit" and (lo.a_coeffs is None or lo.b_coeffs is None):
                raise ValueError("explicit linear_oracle family needs a_coeffs and b_coeffs")
        if self.controller.kind == "oracle" and kind != "linear_oracle":
            raise ValueError("the oracle controller needs a linear_oracle plant")
        if self.controller.kind == "feedback_linearization" and kind != "surrogate":
            raise ValueError("the feedback-linearization baseline is defined "
                             "against the surrogate model")
        if kind == "surrogate":
            s = self.plant.surrogate
            if len(s.d_q_v_per_var) != s.m:
                raise ValueError("surrogate d_q list must have one entry per DER")
        if kind == "full":
            f = self.plant.full
            if len(f.ders) != len(f.network.der_bus):
                raise ValueError("full plant needs one DER per der_bus entry")
        return self

    @property
    def m(self) -> int:
        if self.plant.kind == "full":
            return len(self.plant.full.ders)
        if self.plant.kind == "surrogate":
            return self.plant.surrogate.m
        return self.plant.linear_oracle.m

    def v_ref_vector(self) -> np.ndarray:
        return np.full(self.m, float(self.controller.v_ref_v))


PROFILES = {
    "ci": {"plant_kind": "surrogate", "dt_primary_s": 1e-5},
    "showcase": {"plant_kind": "full", "dt_primary_s": 1e-6},
}


def apply_profile(raw: dict, profile: str) -> dict:
    """Overlay a named execution profile onto a raw config dict."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    raw = dict(raw)
    spec = PROFILES[profile]
    plant = dict(raw.get("plant") or {})
    plant["kind"] = spec["plant_kind"]
    raw["plant"] = plant
    timing = dict(raw.get("timing") or {})
    timing["dt_primary_s"] = spec["dt_primary_s"]
    raw["timing"] = timing
    return raw


def config_from_dict(raw: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str, profile: str | None = None) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping")
    if profile:
        raw = apply_profile(raw, profile)
    return config_from_dict(raw)
