"""Physical parameters of the 4-DER test microgrid.

Defaults follow the benchmark system: one voltage-source inverter per bus
with an LCL output stage (series-damped filter capacitor), dual PI loops,
Q-V droop, and a bus-voltage PLL; four buses in a ladder joined by three RL
lines with RL loads at buses 1 and 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class DerParams:
    """One inverter's filter, droop, and inner-loop constants."""

    l_f: float = 3.9e-3      # filter inductance, H
    r_f: float = 0.5         # filter resistance, ohm
    c_f: float = 16e-6       # filter capacitance, F
    l_c: float = 0.5e-3      # coupling inductance, H
    r_c: float = 0.09        # coupling resistance, ohm
    r_d: float = 2.05        # capacitor-branch damping resistance, ohm
    d_q: float = 1e-3        # Q-V droop gain, V/var
    m_p: float = 9.4e-5      # P-omega droop gain, rad/s/W (frame anchor)
    r_v: float = 1.0         # virtual output resistance, ohm (damps the
    x_v: float = 0.5         # 38 Hz current mode); virtual reactance, ohm
    k_pv: float = 0.5        # voltage-loop PI
    k_iv: float = 52.0
    k_pc: float = 4.5        # current-loop PI
    k_ic: float = 450.0
    omega_c: float = 31.41   # power-filter cutoff, rad/s

    def validate(self) -> None:
        for name in ("l_f", "r_f", "c_f", "l_c", "r_c", "r_d"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"DER parameter {name} must be > 0")
        for name in ("d_q", "m_p", "r_v", "x_v", "k_pv", "k_iv", "k_pc", "k_ic"):
            if getattr(self, name) < 0:
                raise ConfigError(f"DER parameter {name} must be >= 0")
        if self.omega_c <= 0:
            raise ConfigError("omega_c must be > 0")


@dataclass(frozen=True)
class PllParams:
    """Node-voltage PLL constants (defaults are ours; the source gives none).

    The PLL filters the own node's q-axis voltage and trims the frame speed
    on top of the P-omega droop anchor."""

    k_p: float = 0.05        # rad/s per V
    k_i: float = 1.0         # rad/s per V*s
    omega_f: float = 314.16  # q-voltage filter cutoff, rad/s


@dataclass(frozen=True)
class Branch:
    r: float
    l: float
    from_bus: int
    to_bus: int


@dataclass(frozen=True)
class Load:
    r: float
    l: float
    bus: int


@dataclass(frozen=True)
class NetworkParams:
    n_bus: int
    der_bus: tuple[int, ...]
    lines: tuple[Branch, ...]
    loads: tuple[Load, ...]
    load_factors: tuple[float, ...] = field(default=None)  # impedance scale per load

    def __post_init__(self):
        if self.load_factors is None:
            object.__setattr__(self, "load_factors", tuple(1.0 for _ in self.loads))

    def validate(self) -> None:
        buses = set(range(self.n_bus))
        for b in self.lines:
            if b.from_bus not in buses or b.to_bus not in buses:
                raise ConfigError("line references a nonexistent bus")
            if b.r < 0 or b.l <= 0:
                raise ConfigError("line must have r >= 0 and l > 0")
        for ld in self.loads:
            if ld.bus not in buses:
                raise ConfigError("load references a nonexistent bus")
            if ld.r <= 0 or ld.l <= 0:
                raise ConfigError("load must have r > 0 and l > 0")
        for j in self.der_bus:
            if j not in buses:
                raise ConfigError("DER references a nonexistent bus")
        if len(self.load_factors) != len(self.loads):
            raise ConfigError("one load factor per load required")
        if any(f <= 0 for f in self.load_factors):
            raise ConfigError("load factors must be > 0")
        # connectivity over line branches
        reach = {0}
        frontier = [0]
        adj: dict[int, list[int]] = {j: [] for j in buses}
        for b in self.lines:
            adj[b.from_bus].append(b.to_bus)
            adj[b.to_bus].append(b.from_bus)
        while frontier:
            nxt = [q for p in frontier for q in adj[p] if q not in reach]
            reach.update(nxt)
            frontier = nxt
        if reach != buses:
            raise ConfigError("network topology is not connected")

    def with_load_step(self, load_index: int, factor: float) -> "NetworkParams":
        """Scale load `load_index` (1-based) impedance by `factor`."""
        if factor <= 0:
            raise ConfigError("load step factor must be > 0")
        if not 1 <= load_index <= len(self.loads):
            raise ConfigError(f"load index {load_index} out of range")
        factors = list(self.load_factors)
        factors[load_index - 1] *= factor
        return replace(self, load_factors=tuple(factors))


def default_ders() -> tuple[DerParams, ...]:
    """Four inverters: shared LCL stage, per-unit droop and PI gains."""
    base = DerParams()
    return (
        replace(base, d_q=1e-3, m_p=9.4e-5, k_pv=0.5, k_iv=52.0, k_pc=4.5, k_ic=450.0),
        replace(base, d_q=1e-3, m_p=9.4e-5, k_pv=0.5, k_iv=52.0, k_pc=4.5, k_ic=450.0),
        replace(base, d_q=1.5e-3, m_p=1.41e-4, k_pv=0.25, k_iv=34.0, k_pc=3.55, k_ic=353.0),
        replace(base, d_q=1.5e-3, m_p=1.41e-4, k_pv=0.25, k_iv=34.0, k_pc=3.55, k_ic=353.0),
    )


def default_network() -> NetworkParams:
    return NetworkParams(
        n_bus=4,
        der_bus=(0, 1, 2, 3),
        lines=(
            Branch(r=0.15, l=0.42e-3, from_bus=0, to_bus=1),
            Branch(r=0.35, l=0.33e-3, from_bus=1, to_bus=2),
            Branch(r=0.23, l=0.55e-3, from_bus=2, to_bus=3),
        ),
        loads=(
            Load(r=20.0, l=15e-3, bus=0),
            Load(r=10.0, l=25e-3, bus=2),
        ),
    )


def laplacian_inverse(net: NetworkParams, l_c: np.ndarray) -> np.ndarray:
    """Inverse of the grounded inductance Laplacian used to eliminate the
    bus voltages (the index-1 reduction of the nodal KCL constraints)."""
    g = np.zeros((net.n_bus, net.n_bus))
    for i, j in enumerate(net.der_bus):
        g[j, j] += 1.0 / l_c[i]
    for b in net.lines:
        w = 1.0 / b.l
        g[b.from_bus, b.from_bus] += w
        g[b.to_bus, b.to_bus] += w
        g[b.from_bus, b.to_bus] -= w
        g[b.to_bus, b.from_bus] -= w
    for ld, lam in zip(net.loads, net.load_factors):
        g[ld.bus, ld.bus] += 1.0 / (ld.l * lam)
    return np.linalg.inv(g)
