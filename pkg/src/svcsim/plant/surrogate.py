"""Reduced nonlinear surrogate of the microgrid for fast property tests.

Per-DER first-order voltage-magnitude dynamics with droop coupling, filtered
powers, and a quadratic constant-impedance load nonlinearity:

    tau_i dv_i/dt = E*_i - D_Q,i Q_i - v_i
    dP_i/dt = omega_c (p_i(v) - P_i),   dQ_i/dt = omega_c (q_i(v) - Q_i)

Each load draws p, q proportional to the square of a weighted bus-voltage
aggregate and is shared among DERs with fixed weights. The effective
bandwidth 1/tau_i stiffens with local load admittance (heavier load = lower
impedance seen at the bus = faster voltage settling), scaled by `kappa`:

    1/tau_i = (1/tau_v) * (1 + kappa * (g_i(lam)/g_i(1) - 1))

where g_i is the DER's share-weighted load admittance at impedance factors
lam. See docs/plant_models.md for the full write-up.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from ..errors import ConfigError, PlantDivergenceError

OMEGA_N_DEFAULT = 2 * np.pi * 60.0


@dataclass(frozen=True)
class SurrogateParams:
    m: int = 4
    tau_v: float = 0.010
    omega_c: float = 31.41
    omega_n: float = OMEGA_N_DEFAULT
    kappa: float = 2.0
    d_q: tuple[float, ...] = (1e-3, 1e-3, 1.5e-3, 1.5e-3)
    load_r: tuple[float, ...] = (20.0, 10.0)
    load_l: tuple[float, ...] = (15e-3, 25e-3)
    # row ell: how load ell's demand is shared among DERs (rows sum to 1)
    load_share: tuple[tuple[float, ...], ...] = (
        (0.4, 0.3, 0.2, 0.1),
        (0.1, 0.2, 0.4, 0.3),
    )
    load_factors: tuple[float, ...] = (1.0, 1.0)

    def validate(self) -> None:
        if self.m < 1 or self.tau_v <= 0 or self.omega_c <= 0 or self.kappa < 0:
            raise ConfigError("invalid surrogate parameters")
        if len(self.d_q) != self.m:
            raise ConfigError("need one droop gain per DER")
        n_load = len(self.load_r)
        if not (len(self.load_l) == len(self.load_factors) == n_load
                and len(self.load_share) == n_load):
            raise ConfigError("inconsistent surrogate load tables")
        for row in self.load_share:
            if len(row) != self.m or abs(sum(row) - 1.0) > 1e-9 or min(row) < 0:
                raise ConfigError("load_share rows must be length-m, nonnegative, sum 1")
        if any(f <= 0 for f in self.load_factors):
            raise ConfigError("load factors must be > 0")

    # -- derived load quantities --------------------------------------
    def admittances(self) -> np.ndarray:
        r = np.asarray(self.load_r)
        x = self.omega_n * np.asarray(self.load_l)
        return 1.0 / np.sqrt(r * r + x * x)

    def conductance_susceptance(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.asarray(self.load_r)
        x = self.omega_n * np.asarray(self.load_l)
        z2 = r * r + x * x
        return r / z2, x / z2

    def bandwidths(self) -> np.ndarray:
        """1/tau_i at the current load factors."""
        share = np.asarray(self.load_share)
        y = self.admittances()
        lam = np.asarray(self.load_factors)
        g_now = share.T @ (y / lam)
        g_nom = share.T @ y
        return (1.0 + self.kappa * (g_now / g_nom - 1.0)) / self.tau_v

    def power_shares(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-DER (p, q) load shares at voltage vector v, current factors."""
        share = np.asarray(self.load_share)
        g, b = self.conductance_susceptance()
        lam = np.asarray(self.load_factors)
        v_agg = share @ np.asarray(v, dtype=float)
        p_l = (g / lam) * v_agg ** 2
        q_l = (b / lam) * v_agg ** 2
        return share.T @ p_l, share.T @ q_l

    def reactive_shares(self, v: np.ndarray) -> np.ndarray:
        return self.power_shares(v)[1]

    @property
    def tau_v_vec(self) -> np.ndarray:
        return 1.0 / self.bandwidths()

    def with_load_step(self, load_index: int, factor: float) -> "SurrogateParams":
        if factor <= 0:
            raise ConfigError("load step factor must be > 0")
        if not 1 <= load_index <= len(self.load_factors):
            raise ConfigError(f"load index {load_index} out of range")
        factors = list(self.load_factors)
        factors[load_index - 1] *= factor
        return replace(self, load_factors=tuple(factors))


@njit(cache=True)
def _surrogate_deriv(x, dx, e_star, a, omega_c, d_q, g_eff, b_eff, share):
    m = e_star.shape[0]
    n_load = g_eff.shape[0]
    for i in range(m):
        p_acc = 0.0
        q_acc = 0.0
        for ell in range(n_load):
            v_agg = 0.0
            for j in range(m):
                v_agg += share[ell, j] * x[j]
            p_acc += share[ell, i] * g_eff[ell] * v_agg * v_agg
            q_acc += share[ell, i] * b_eff[ell] * v_agg * v_agg
        dx[i] = a[i] * (e_star[i] - d_q[i] * x[2 * m + i] - x[i])
        dx[m + i] = omega_c * (p_acc - x[m + i])
        dx[2 * m + i] = omega_c * (q_acc - x[2 * m + i])


@njit(cache=True)
def _surrogate_rk4(x, e_star, n_steps, dt, a, omega_c, d_q, g_eff, b_eff, share):
    nx = x.shape[0]
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    tmp = np.empty(nx)
    for _ in range(n_steps):
        _surrogate_deriv(x, k1, e_star, a, omega_c, d_q, g_eff, b_eff, share)
        for i in range(nx):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _surrogate_deriv(tmp, k2, e_star, a, omega_c, d_q, g_eff, b_eff, share)
        for i in range(nx):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _surrogate_deriv(tmp, k3, e_star, a, omega_c, d_q, g_eff, b_eff, share)
        for i in range(nx):
            tmp[i] = x[i] + dt * k3[i]
        _surrogate_deriv(tmp, k4, e_star, a, omega_c, d_q, g_eff, b_eff, share)
        for i in range(nx):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


class SurrogatePlant:
    """Integrates the reduced model with fixed-step RK4."""

    def __init__(self, params: SurrogateParams, dt: float):
        params.validate()
        if dt <= 0:
            raise ConfigError("dt must be > 0")
        self.params = params
        self.dt = float(dt)
        self.m = params.m
        self.x = np.zeros(3 * params.m)
        self.t = 0.0
        self._refresh_tables()

    def _refresh_tables(self) -> None:
        p = self.params
        g, b = p.conductance_susceptance()
        lam = np.asarray(p.load_factors)
        self._g_eff = g / lam
        self._b_eff = b / lam
        self._a = p.bandwidths()
        self._d_q = np.asarray(p.d_q, dtype=float)
        self._share = np.asarray(p.load_share, dtype=float)

    def measure(self) -> np.ndarray:
        return self.x[: self.m].copy()

    def powers(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x[self.m: 2 * self.m].copy(), self.x[2 * self.m:].copy()

    def advance(self, e_star: np.ndarray, n_steps: int) -> None:
        e = np.ascontiguousarray(np.asarray(e_star, dtype=float))
        _surrogate_rk4(self.x, e, n_steps, self.dt, self._a, self.params.omega_c,
                       self._d_q, self._g_eff, self._b_eff, self._share)
        self.t += n_steps * self.dt
        if not np.isfinite(self.x).all():
            raise PlantDivergenceError(f"plant diverged by t={self.t:.6f}s", t=self.t)

    def apply_load_step(self, load_index: int, factor: float) -> None:
        """Scale one load's impedance; states are continuous across the event."""
        self.params = self.params.with_load_step(load_index, factor)
        self._refresh_tables()

    def equilibrium_voltage(self, e_star: np.ndarray, iters: int = 200) -> np.ndarray:
        """Fixed point of v = E* - D_Q q(v) by direct iteration (analysis aid)."""
        v = np.asarray(e_star, dtype=float).copy()
        for _ in range(iters):
            _, q = self.params.power_shares(v)
            v = np.asarray(e_star, dtype=float) - self._d_q * q
        return v
