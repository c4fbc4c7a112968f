"""Full electromagnetic model of the islanded 4-DER microgrid.

Fifteen states per inverter — filtered powers (P, Q), PLL filter and
integrator (v_oq,f, Phi_PLL), frame angle delta, voltage- and current-loop
integrators (Phi_dq, gamma_dq), LCL currents and capacitor voltages
(i_ldq, i_odq, v_odq) — plus one dq current pair per network line and load
branch. Frames: each DER runs in its own dq frame whose speed is set by the
P-omega droop anchor plus the PLL trim; DER 1's frame is the common frame
for the network. Bus voltages
are eliminated exactly through the grounded inductance Laplacian (index-1
reduction of nodal KCL), so the model stays a plain ODE integrated with
fixed-step RK4. Equations are documented in docs/plant_models.md.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import ConfigError, PlantDivergenceError
from .params import DerParams, NetworkParams, PllParams, default_ders, default_network, laplacian_inverse
from .surrogate import OMEGA_N_DEFAULT

N_DER_STATES = 15


KCL_RELAX = 500.0  # 1/s: constraint-stabilization rate for the nodal KCL manifold


@njit(cache=True)
def _full_deriv(x, dx, e_star, dp, pll, omega_n, der_bus,
                line_r, line_l, line_from, line_to,
                load_r, load_l, load_bus, ginv):
    m = dp.shape[0]
    nl = line_r.shape[0]
    nq = load_r.shape[0]
    nbus = ginv.shape[0]
    base_l = N_DER_STATES * m
    base_q = base_l + 2 * nl

    omega = np.empty(m)
    vn_d = np.empty(m)
    vn_q = np.empty(m)
    vn_dc = np.empty(m)   # node voltage, common frame
    vn_qc = np.empty(m)
    io_dc = np.empty(m)   # coupling current, common frame
    io_qc = np.empty(m)
    cos_d = np.empty(m)
    sin_d = np.empty(m)

    for i in range(m):
        s = i * N_DER_STATES
        # frame speed: P-omega droop anchor plus PLL trim on the node
        # q-voltage (which the voltage loop regulates to zero)
        omega[i] = omega_n - dp[i, 12] * x[s + 0] + pll[0] * x[s + 2] + pll[1] * x[s + 3]
        i_cd = x[s + 9] - x[s + 11]
        i_cq = x[s + 10] - x[s + 12]
        vn_d[i] = x[s + 13] + dp[i, 5] * i_cd
        vn_q[i] = x[s + 14] + dp[i, 5] * i_cq
        cos_d[i] = np.cos(x[s + 4])
        sin_d[i] = np.sin(x[s + 4])
        vn_dc[i] = cos_d[i] * vn_d[i] - sin_d[i] * vn_q[i]
        vn_qc[i] = sin_d[i] * vn_d[i] + cos_d[i] * vn_q[i]
        io_dc[i] = cos_d[i] * x[s + 11] - sin_d[i] * x[s + 12]
        io_qc[i] = sin_d[i] * x[s + 11] + cos_d[i] * x[s + 12]
    om_com = omega[0]

    # bus voltages from d/dt(KCL) = -gamma * KCL (constraint stabilization:
    # the KCL manifold is attracting instead of neutral)
    r_d = np.zeros(nbus)
    r_q = np.zeros(nbus)
    mis_d = np.zeros(nbus)
    mis_q = np.zeros(nbus)
    for i in range(m):
        j = der_bus[i]
        lc = dp[i, 3]
        rc = dp[i, 4]
        r_d[j] += vn_dc[i] / lc - (rc / lc) * io_dc[i]
        r_q[j] += vn_qc[i] / lc - (rc / lc) * io_qc[i]
        mis_d[j] += io_dc[i]
        mis_q[j] += io_qc[i]
    for b in range(nl):
        w = line_r[b] / line_l[b]
        i_d = x[base_l + 2 * b]
        i_q = x[base_l + 2 * b + 1]
        r_d[line_from[b]] += w * i_d
        r_q[line_from[b]] += w * i_q
        r_d[line_to[b]] -= w * i_d
        r_q[line_to[b]] -= w * i_q
        mis_d[line_from[b]] -= i_d
        mis_q[line_from[b]] -= i_q
        mis_d[line_to[b]] += i_d
        mis_q[line_to[b]] += i_q
    for q in range(nq):
        w = load_r[q] / load_l[q]
        r_d[load_bus[q]] += w * x[base_q + 2 * q]
        r_q[load_bus[q]] += w * x[base_q + 2 * q + 1]
        mis_d[load_bus[q]] -= x[base_q + 2 * q]
        mis_q[load_bus[q]] -= x[base_q + 2 * q + 1]
    for j in range(nbus):
        r_d[j] += KCL_RELAX * mis_d[j] + om_com * mis_q[j]
        r_q[j] += KCL_RELAX * mis_q[j] - om_com * mis_d[j]
    u_d = np.zeros(nbus)
    u_q = np.zeros(nbus)
    for j in range(nbus):
        acc_d = 0.0
        acc_q = 0.0
        for l in range(nbus):
            acc_d += ginv[j, l] * r_d[l]
            acc_q += ginv[j, l] * r_q[l]
        u_d[j] = acc_d
        u_q[j] = acc_q

    for i in range(m):
        s = i * N_DER_STATES
        l_f, r_f, c_f, l_c, r_c, r_dmp, d_q = dp[i, 0], dp[i, 1], dp[i, 2], dp[i, 3], dp[i, 4], dp[i, 5], dp[i, 6]
        k_pv, k_iv, k_pc, k_ic, om_c = dp[i, 7], dp[i, 8], dp[i, 9], dp[i, 10], dp[i, 11]
        p_f, q_f = x[s + 0], x[s + 1]
        voqf, phi_pll = x[s + 2], x[s + 3]
        phi_d, phi_q = x[s + 5], x[s + 6]
        gam_d, gam_q = x[s + 7], x[s + 8]
        i_ld, i_lq = x[s + 9], x[s + 10]
        i_od, i_oq = x[s + 11], x[s + 12]
        v_od, v_oq = x[s + 13], x[s + 14]
        w_i = omega[i]
        j = der_bus[i]
        # bus voltage in the local frame
        vb_d = cos_d[i] * u_d[j] + sin_d[i] * u_q[j]
        vb_q = -sin_d[i] * u_d[j] + cos_d[i] * u_q[j]
        # measured powers (at the measured node voltage states)
        p_inst = 1.5 * (v_od * i_od + v_oq * i_oq)
        q_inst = 1.5 * (v_oq * i_od - v_od * i_oq)
        dx[s + 0] = om_c * (p_inst - p_f)
        dx[s + 1] = om_c * (q_inst - q_f)
        # droop, virtual output impedance, voltage loop
        r_v, x_v = dp[i, 13], dp[i, 14]
        vod_ref = e_star[i] - d_q * q_f - r_v * i_od + x_v * i_oq
        voq_ref = -r_v * i_oq - x_v * i_od
        # PLL: filtered node q-voltage and the integral of its tracking error
        dx[s + 2] = pll[2] * (v_oq - voqf)
        dx[s + 3] = voq_ref - voqf
        dx[s + 4] = w_i - om_com
        dx[s + 5] = vod_ref - v_od
        dx[s + 6] = voq_ref - v_oq
        ild_ref = i_od - omega_n * c_f * v_oq + k_pv * (vod_ref - v_od) + k_iv * phi_d
        ilq_ref = i_oq + omega_n * c_f * v_od + k_pv * (voq_ref - v_oq) + k_iv * phi_q
        # current loop
        dx[s + 7] = ild_ref - i_ld
        dx[s + 8] = ilq_ref - i_lq
        vn_d_i = vn_d[i]
        vn_q_i = vn_q[i]
        vi_d = vn_d_i - omega_n * l_f * i_lq + k_pc * (ild_ref - i_ld) + k_ic * gam_d
        vi_q = vn_q_i + omega_n * l_f * i_ld + k_pc * (ilq_ref - i_lq) + k_ic * gam_q
        # LCL stage (series-damped capacitor: node voltage = v_C + R_d i_C)
        dx[s + 9] = (vi_d - vn_d_i - r_f * i_ld) / l_f + w_i * i_lq
        dx[s + 10] = (vi_q - vn_q_i - r_f * i_lq) / l_f - w_i * i_ld
        dx[s + 11] = (vn_d_i - vb_d - r_c * i_od) / l_c + w_i * i_oq
        dx[s + 12] = (vn_q_i - vb_q - r_c * i_oq) / l_c - w_i * i_od
        dx[s + 13] = (i_ld - i_od) / c_f + w_i * v_oq
        dx[s + 14] = (i_lq - i_oq) / c_f - w_i * v_od

    for b in range(nl):
        i_d = x[base_l + 2 * b]
        i_q = x[base_l + 2 * b + 1]
        du = u_d[line_from[b]] - u_d[line_to[b]]
        dq_ = u_q[line_from[b]] - u_q[line_to[b]]
        dx[base_l + 2 * b] = (du - line_r[b] * i_d) / line_l[b] + om_com * i_q
        dx[base_l + 2 * b + 1] = (dq_ - line_r[b] * i_q) / line_l[b] - om_com * i_d
    for q in range(nq):
        i_d = x[base_q + 2 * q]
        i_q = x[base_q + 2 * q + 1]
        dx[base_q + 2 * q] = (u_d[load_bus[q]] - load_r[q] * i_d) / load_l[q] + om_com * i_q
        dx[base_q + 2 * q + 1] = (u_q[load_bus[q]] - load_r[q] * i_q) / load_l[q] - om_com * i_d


@njit(cache=True)
def _full_rk4(x, e_star, n_steps, dt, dp, pll, omega_n, der_bus,
              line_r, line_l, line_from, line_to,
              load_r, load_l, load_bus, ginv):
    nx = x.shape[0]
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    tmp = np.empty(nx)
    for _ in range(n_steps):
        _full_deriv(x, k1, e_star, dp, pll, omega_n, der_bus,
                    line_r, line_l, line_from, line_to, load_r, load_l, load_bus, ginv)
        for i in range(nx):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _full_deriv(tmp, k2, e_star, dp, pll, omega_n, der_bus,
                    line_r, line_l, line_from, line_to, load_r, load_l, load_bus, ginv)
        for i in range(nx):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _full_deriv(tmp, k3, e_star, dp, pll, omega_n, der_bus,
                    line_r, line_l, line_from, line_to, load_r, load_l, load_bus, ginv)
        for i in range(nx):
            tmp[i] = x[i] + dt * k3[i]
        _full_deriv(tmp, k4, e_star, dp, pll, omega_n, der_bus,
                    line_r, line_l, line_from, line_to, load_r, load_l, load_bus, ginv)
        for i in range(nx):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


class FullMicrogridPlant:
    """Owns the state vector and parameter tables; single-threaded."""

    def __init__(self, ders: tuple[DerParams, ...] | None = None,
                 network: NetworkParams | None = None,
                 pll: PllParams | None = None,
                 dt: float = 1e-6,
                 omega_n: float = OMEGA_N_DEFAULT):
        self.ders = tuple(ders) if ders is not None else default_ders()
        self.network = network if network is not None else default_network()
        self.pll_params = pll if pll is not None else PllParams()
        for d in self.ders:
            d.validate()
        self.network.validate()
        if len(self.ders) != len(self.network.der_bus):
            raise ConfigError("one DER per der_bus entry required")
        if dt <= 0:
            raise ConfigError("dt must be > 0")
        self.dt = float(dt)
        self.omega_n = float(omega_n)
        self.m = len(self.ders)
        self.n_states = N_DER_STATES * self.m + 2 * (len(self.network.lines) + len(self.network.loads))
        self.x = np.zeros(self.n_states)
        self.t = 0.0
        self._build_tables()

    def _build_tables(self) -> None:
        self._dp = np.array([
            [d.l_f, d.r_f, d.c_f, d.l_c, d.r_c, d.r_d, d.d_q,
             d.k_pv, d.k_iv, d.k_pc, d.k_ic, d.omega_c, d.m_p, d.r_v, d.x_v]
            for d in self.ders
        ])
        p = self.pll_params
        self._pll = np.array([p.k_p, p.k_i, p.omega_f])
        net = self.network
        self._der_bus = np.array(net.der_bus, dtype=np.int64)
        self._line_r = np.array([b.r for b in net.lines])
        self._line_l = np.array([b.l for b in net.lines])
        self._line_from = np.array([b.from_bus for b in net.lines], dtype=np.int64)
        self._line_to = np.array([b.to_bus for b in net.lines], dtype=np.int64)
        self._load_r = np.array([ld.r * f for ld, f in zip(net.loads, net.load_factors)])
        self._load_l = np.array([ld.l * f for ld, f in zip(net.loads, net.load_factors)])
        self._load_bus = np.array([ld.bus for ld in net.loads], dtype=np.int64)
        self._ginv = laplacian_inverse(net, self._dp[:, 3])

    # -- simulation interface -------------------------------------------
    def measure(self) -> np.ndarray:
        """Per-DER voltage magnitudes sqrt(v_od^2 + v_oq^2) — the only plant
        signal the secondary layer sees."""
        s = np.arange(self.m) * N_DER_STATES
        return np.sqrt(self.x[s + 13] ** 2 + self.x[s + 14] ** 2)

    def powers(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(self.m) * N_DER_STATES
        return self.x[s + 0].copy(), self.x[s + 1].copy()

    def advance(self, e_star: np.ndarray, n_steps: int) -> None:
        e = np.ascontiguousarray(np.asarray(e_star, dtype=float))
        _full_rk4(self.x, e, n_steps, self.dt, self._dp, self._pll, self.omega_n,
                  self._der_bus, self._line_r, self._line_l, self._line_from,
                  self._line_to, self._load_r, self._load_l, self._load_bus, self._ginv)
        self.t += n_steps * self.dt
        if not np.isfinite(self.x).all():
            raise PlantDivergenceError(f"plant diverged by t={self.t:.6f}s", t=self.t)

    def apply_load_step(self, load_index: int, factor: float) -> None:
        """Scale one load's impedance; branch currents stay continuous."""
        self.network = self.network.with_load_step(load_index, factor)
        self._build_tables()

    # -- analysis helpers ------------------------------------------------
    def _der_frames(self):
        s = np.arange(self.m) * N_DER_STATES
        delta = self.x[s + 4]
        i_cd = self.x[s + 9] - self.x[s + 11]
        i_cq = self.x[s + 10] - self.x[s + 12]
        vn_d = self.x[s + 13] + self._dp[:, 5] * i_cd
        vn_q = self.x[s + 14] + self._dp[:, 5] * i_cq
        return s, delta, vn_d, vn_q

    def bus_voltages(self) -> np.ndarray:
        """Complex bus voltages in the common frame (numpy replica of the
        kernel's elimination, for reporting and tests)."""
        s, delta, vn_d, vn_q = self._der_frames()
        rot = np.exp(1j * delta)
        vn = (vn_d + 1j * vn_q) * rot
        io = (self.x[s + 11] + 1j * self.x[s + 12]) * rot
        nbus = self._ginv.shape[0]
        rhs = np.zeros(nbus, dtype=complex)
        mismatch = np.zeros(nbus, dtype=complex)
        for i in range(self.m):
            j = self._der_bus[i]
            lc = self._dp[i, 3]
            rhs[j] += vn[i] / lc - (self._dp[i, 4] / lc) * io[i]
            mismatch[j] += io[i]
        base_l = N_DER_STATES * self.m
        for b in range(len(self._line_r)):
            w = self._line_r[b] / self._line_l[b]
            cur = self.x[base_l + 2 * b] + 1j * self.x[base_l + 2 * b + 1]
            rhs[self._line_from[b]] += w * cur
            rhs[self._line_to[b]] -= w * cur
            mismatch[self._line_from[b]] -= cur
            mismatch[self._line_to[b]] += cur
        base_q = base_l + 2 * len(self._line_r)
        for q in range(len(self._load_r)):
            w = self._load_r[q] / self._load_l[q]
            cur = self.x[base_q + 2 * q] + 1j * self.x[base_q + 2 * q + 1]
            rhs[self._load_bus[q]] += w * cur
            mismatch[self._load_bus[q]] -= cur
        s0 = np.arange(self.m) * N_DER_STATES
        om_com = (self.omega_n - self._dp[0, 12] * self.x[s0[0] + 0]
                  + self._pll[0] * self.x[s0[0] + 2] + self._pll[1] * self.x[s0[0] + 3])
        rhs += (KCL_RELAX - 1j * om_com) * mismatch
        return self._ginv @ rhs

    def power_report(self) -> dict:
        """Active-power balance at the current state: generation at the DER
        nodes vs coupling/line losses plus load dissipation."""
        s, delta, vn_d, vn_q = self._der_frames()
        rot = np.exp(1j * delta)
        vn = (vn_d + 1j * vn_q) * rot
        io = (self.x[s + 11] + 1j * self.x[s + 12]) * rot
        gen = 1.5 * np.real(vn * np.conj(io))
        coupling_loss = 1.5 * self._dp[:, 4] * np.abs(io) ** 2
        base_l = N_DER_STATES * self.m
        line_cur = np.array([
            self.x[base_l + 2 * b] + 1j * self.x[base_l + 2 * b + 1]
            for b in range(len(self._line_r))
        ])
        line_loss = 1.5 * self._line_r * np.abs(line_cur) ** 2
        base_q = base_l + 2 * len(self._line_r)
        load_cur = np.array([
            self.x[base_q + 2 * q] + 1j * self.x[base_q + 2 * q + 1]
            for q in range(len(self._load_r))
        ])
        load_p = 1.5 * self._load_r * np.abs(load_cur) ** 2
        total_gen = float(gen.sum())
        total_sink = float(coupling_loss.sum() + line_loss.sum() + load_p.sum())
        return {
            "gen_p": gen,
            "load_p": load_p,
            "line_loss": line_loss,
            "coupling_loss": coupling_loss,
            "mismatch": total_gen - total_sink,
            "mismatch_frac": (total_gen - total_sink) / max(abs(total_gen), 1e-9),
        }
