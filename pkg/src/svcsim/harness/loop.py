"""The two-rate closed-loop scenario runner.

Per secondary sample k (t = k * dt_secondary): measure V_o(k); form the lag
regressor X(k-d) and the transformed output Y(k); compute both
identification errors; update the switching indices and select the
controller; update the estimator(s); solve the active law for E*(k); apply
the actuator clamp and the BIBO monitor; hold E*(k) while the plant
integrates dt_secondary/dt_primary RK4 substeps. Discrete oracle plants
advance one recursion step instead.

Until t_svc_on, E* holds the nominal droop setpoint (= V_ref) while the
identifiers warm up on measurements.
"""

from __future__ import annotations

import numpy as np

from ..control import (BiboMonitor, ControllerDesign, FeedbackLinearizationBaseline,
                       OracleController, SwitchState, linear_control, nonlinear_control)
from ..errors import ConfigError
from ..history import History
from ..identify import (LinearEstimator, NeuralEstimator, RegressorState,
                        TanhNetwork, form_transformed_output, pure_delay_theta,
                        regressor_length)
from ..plant import (DerParams, FullMicrogridPlant, LinearOraclePlant, Load,
                     Branch, NetworkParams, PllParams, SurrogateParams,
                     SurrogatePlant, bounded_phi)
from ..polyalg import PolyMatrix, solve_diophantine
from .config import ScenarioConfig
from .records import RunRecord, compute_summary


def _build_plant(cfg: ScenarioConfig, rng: np.random.Generator):
    kind = cfg.plant.kind
    timing = cfg.timing
    if kind == "full":
        f = cfg.plant.full
        ders = tuple(
            DerParams(l_f=d.l_f_h, r_f=d.r_f_ohm, c_f=d.c_f_f, l_c=d.l_c_h,
                      r_c=d.r_c_ohm, r_d=d.r_d_ohm, d_q=d.d_q_v_per_var,
                      m_p=d.m_p_rad_per_ws, r_v=d.r_v_ohm, x_v=d.x_v_ohm,
                      k_pv=d.k_pv, k_iv=d.k_iv, k_pc=d.k_pc, k_ic=d.k_ic,
                      omega_c=d.omega_c_rad_s)
            for d in f.ders
        )
        net = NetworkParams(
            n_bus=f.network.n_bus,
            der_bus=tuple(f.network.der_bus),
            lines=tuple(Branch(r=l.r_ohm, l=l.l_h, from_bus=l.from_bus, to_bus=l.to_bus)
                        for l in f.network.lines),
            loads=tuple(Load(r=l.r_ohm, l=l.l_h, bus=l.bus) for l in f.network.loads),
        )
        pll = PllParams(k_p=f.pll.k_p_rad_per_vs, k_i=f.pll.k_i_rad_per_vs2,
                        omega_f=f.pll.omega_f_rad_s)
        plant = FullMicrogridPlant(ders=ders, network=net, pll=pll,
                                   dt=timing.dt_primary_s,
                                   omega_n=2 * np.pi * f.f_nominal_hz)
        return plant, None
    if kind == "surrogate":
        s = cfg.plant.surrogate
        params = SurrogateParams(
            m=s.m, tau_v=s.tau_v_s, omega_c=s.omega_c_rad_s,
            omega_n=2 * np.pi * s.f_nominal_hz, kappa=s.kappa_stiffening,
            d_q=tuple(s.d_q_v_per_var), load_r=tuple(s.load_r_ohm),
            load_l=tuple(s.load_l_h),
            load_share=tuple(tuple(row) for row in s.load_share),
            load_factors=tuple(1.0 for _ in s.load_r_ohm),
        )
        return SurrogatePlant(params, dt=timing.dt_primary_s), None
    # linear oracle
    lo = cfg.plant.linear_oracle
    m, n, d = lo.m, lo.order_n, lo.delay_d
    if lo.family == "explicit":
        a = PolyMatrix(np.asarray(lo.a_coeffs, dtype=float))
        b = PolyMatrix(np.asarray(lo.b_coeffs, dtype=float))
    else:
        f_poly = PolyMatrix.from_scalar(cfg.controller.f_poly, m)
        a, b = _random_feasible_plant(rng, m, n, d, f_poly,
                                      v_ref=cfg.controller.v_ref_v,
                                      clamp_hi=cfg.controller.clamp_max_v)
    phi_fn = None
    if lo.phi.mode != "none":
        phi_fn = bounded_phi(m, lo.phi.amplitude, seed=cfg.seed + 7919, mode=lo.phi.mode)
    return LinearOraclePlant(a, b, d, phi_fn=phi_fn), (a, b, phi_fn)


def _random_feasible_plant(rng, m, n, d, f_poly, v_ref, clamp_hi):
    """Random stable A, SPD-gain minimum-phase B whose DC input sits inside
    the actuator range (rejection sampling; deterministic given the rng)."""
    for _ in range(1000):
        a = PolyMatrix.identity(m)
        for _ in range(n):
            g = rng.standard_normal((m, m))
            radius = max(np.abs(np.linalg.eigvals(g)).max(), 1e-6)
            g *= rng.uniform(0.2, 1.0) * 0.8 / radius
            a = a * PolyMatrix(np.stack([np.eye(m), -g]))
        coeffs = 0.5 * rng.standard_normal((n, m, m)) if n > 1 else np.zeros((1, m, m))
        if n == 1:
            coeffs = np.zeros((1, m, m))
        q, _ = np.linalg.qr(rng.standard_normal((m, m)))
        coeffs[0] = q @ np.diag(rng.uniform(0.5, 2.0, size=m)) @ q.T
        b = PolyMatrix(coeffs)
        b1 = b.at_one()
        if np.linalg.cond(b1) > 6:
            continue
        e_ss = np.linalg.solve(b1, a.at_one() @ np.full(m, v_ref))
        if not (np.all(e_ss > 0.15 * clamp_hi) and np.all(e_ss < 0.85 * clamp_hi)):
            continue
        lpoly, _ = solve_diophantine(a, f_poly, d)
        lb = lpoly * b
        if lb.deg > 0 and not lb.is_stable():
            continue
        return a, b
    raise ConfigError("could not sample a feasible random linear-oracle plant")


def run_scenario(cfg: ScenarioConfig) -> RunRecord:
    """Execute one scenario and return the filled RunRecord."""
    rng = np.random.default_rng(cfg.seed)
    m = cfg.m
    timing = cfg.timing
    n_rows = timing.n_samples
    n_sub = timing.n_substeps
    plant, oracle_info = _build_plant(cfg, rng)

    est_cfg = cfg.estimator
    n, d = est_cfg.order_n, est_cfg.delay_d
    f_poly = PolyMatrix.from_scalar(cfg.controller.f_poly, m)
    r = None if cfg.controller.r_diag is None else cfg.controller.r_diag * np.eye(m)
    design = ControllerDesign(f=f_poly, v_ref=cfg.v_ref_vector(), r=r,
                              clamp_lo=cfg.controller.clamp_min_v,
                              clamp_hi=cfg.controller.clamp_max_v)
    theta0 = (pure_delay_theta(m, n, d, f_poly) if est_cfg.init == "pure_delay"
              else np.zeros((regressor_length(m, n, d), m)))
    if est_cfg.init == "zeros":
        # a zero leading block is never invertible; seed it at the floor
        theta0[n * m:(n + 1) * m, :] = est_cfg.h_min * np.eye(m)
    lin = LinearEstimator(m, n, d, est_cfg.rho_v, est_cfg.h_min,
                          est_cfg.theta_box, theta0.copy())
    net = TanhNetwork(regressor_length(m, n, d), m, est_cfg.ann.hidden,
                      w_max=est_cfg.ann.w_max, learn_rate=est_cfg.ann.learn_rate,
                      input_scale=est_cfg.ann.input_scale_v, rng=rng)
    neural = NeuralEstimator(m, n, d, est_cfg.rho_v, est_cfg.h_min,
                             est_cfg.theta_box, theta0.copy(), net)
    switch = SwitchState(rho=est_cfg.rho_v, mu=cfg.controller.switch.mu,
                         window=cfg.controller.switch.window)
    monitor = BiboMonitor(delta=cfg.controller.monitor_delta_factor
                          * float(np.linalg.norm(design.v_ref)),
                          enforce=cfg.controller.monitor_enforce)

    oracle_ctl = None
    fl_ctl = None
    if cfg.controller.kind == "oracle":
        a, b, phi_fn = oracle_info
        oracle_ctl = OracleController(a, b, design, d, phi_fn=phi_fn)
    if cfg.controller.kind == "feedback_linearization":
        # frozen nominal snapshot: the baseline is never told about the event
        fl_ctl = FeedbackLinearizationBaseline(plant.params, design,
                                               cfg.controller.fl_tau_ref_s)

    reg = RegressorState(m, n, d, extra_output_depth=f_poly.deg)
    outs = History(depth=n + d + f_poly.deg + 4, dim=m)
    ref_hist = History(depth=n + 2 * d + 4, dim=m)

    cache_start = max(n + d - 2, 1, n - 1)
    identify_start = max(n + 2 * d - 2, f_poly.deg, cache_start + d, d)

    svc_on_k = round(timing.t_svc_on_s / timing.dt_secondary_s)
    event_k = round(timing.t_event_s / timing.dt_secondary_s)
    has_event = (cfg.event.impedance_factor != 1.0 and 0 <= event_k < n_rows
                 and cfg.plant.kind != "linear_oracle")

    nominal = design.v_ref.copy()
    zeros = np.zeros(m)

    # row storage
    t_arr = np.zeros(n_rows)
    v_arr = np.zeros((n_rows, m))
    e_star_arr = np.zeros((n_rows, m))
    p_arr = np.zeros((n_rows, m))
    q_arr = np.zeros((n_rows, m))
    e_l_arr = np.zeros(n_rows)
    e_n_arr = np.zeros(n_rows)
    xi_l_arr = np.zeros(n_rows)
    xi_n_arr = np.zeros(n_rows)
    active_list: list[str] = []
    th_l_arr = np.zeros(n_rows)
    th_n_arr = np.zeros(n_rows)
    w_arr = np.zeros(n_rows)
    diag = {
        "eta_l": np.zeros(n_rows, dtype=np.int8),
        "eta_n": np.zeros(n_rows, dtype=np.int8),
        "frozen_l": np.zeros(n_rows, dtype=bool),
        "frozen_n": np.zeros(n_rows, dtype=bool),
        "sigma_min_l": np.full(n_rows, np.nan),
        "sigma_min_n": np.full(n_rows, np.nan),
        "clamped": np.zeros(n_rows, dtype=bool),
        "switched": np.zeros(n_rows, dtype=bool),
        "identity_resid": np.full(n_rows, np.nan),
        "identity_eligible": np.zeros(n_rows, dtype=bool),
        "controlled": np.zeros(n_rows, dtype=bool),
    }
    events: list[str] = []
    j_used: list[str] = []

    for k in range(n_rows):
        t_k = k * timing.dt_secondary_s
        if has_event and k == event_k:
            plant.apply_load_step(cfg.event.load_index, cfg.event.impedance_factor)
            events.append(f"load step x{cfg.event.impedance_factor} at t={t_k:.6f}s (k={k})")

        v = plant.measure()
        reg.push_output(k, v)
        outs.push(k, v)
        ref_hist.push(k, design.v_ref)
        p_now, q_now = plant.powers()

        e_l = zeros
        e_n = zeros
        active = "L"
        identified = k >= identify_start
        if identified:
            y = form_transformed_output(outs, f_poly, k)
            x_lag = reg.vector(k - d)
            e_l = lin.identification_error(y, x_lag)
            e_n = neural.identification_error(y, x_lag, neural.cached_h(k - d))
            sw = switch.update(e_l, e_n, x_lag)
            active = sw.active
            diag["switched"][k] = sw.switched
            diag["eta_l"][k] = sw.eta_l
            diag["eta_n"][k] = sw.eta_n
            if cfg.controller.update_policy == "both":
                dl = lin.update(e_l, x_lag)
                neural.train(reg.vector_held(k - d), neural.train_target(y, x_lag))
                dn = neural.update_theta(e_n, x_lag)
            else:
                if active == "L":
                    dl = lin.update(e_l, x_lag)
                    dn = neural.hold()
                else:
                    dl = lin.hold()
                    neural.train(reg.vector_held(k - d), neural.train_target(y, x_lag))
                    dn = neural.update_theta(e_n, x_lag)
            diag["frozen_l"][k] = dl.frozen
            diag["frozen_n"][k] = dn.frozen
            diag["sigma_min_l"][k] = dl.sigma_min
            diag["sigma_min_n"][k] = dn.sigma_min

        # network value for this step: used by the nonlinear law now and by
        # e_N(k+d) later; the current-input slot is held at E*(k-1)
        if k >= cache_start:
            h_now = neural.forward(reg.vector_held(k))
            neural.cache_h(k, h_now)
        else:
            h_now = zeros

        kind = cfg.controller.kind
        controlled = identified and k >= svc_on_k and kind != "none"
        clamped = False
        if not controlled:
            e_star = nominal.copy()
            used = "-"
        elif kind in ("mmac", "linear_only", "nonlinear_only"):
            if kind == "linear_only":
                active = "L"
            elif kind == "nonlinear_only":
                active = "N"
            if active == "L":
                e_star, cdiag = linear_control(lin, reg, k, design, design.v_ref)
            else:
                e_star, cdiag = nonlinear_control(neural, reg, k, design, design.v_ref, h_now)
            clamped = cdiag.clamped
            used = active
        elif kind == "oracle":
            e_star = oracle_ctl.compute(reg, k, design.v_ref)
            used = "O"
        else:  # feedback_linearization
            e_star = fl_ctl.compute(v)
            used = "F"

        monitor.check(v, e_star, k, t_k)

        # Proposition-2 identity: the realized tracking error equals the
        # active estimator's identification error when E*(k-d) came from that
        # same law and was not clamped
        if identified and k - d >= 0 and len(j_used) > k - d:
            src = j_used[k - d]
            if src in ("L", "N") and src == active and not diag["clamped"][k - d]:
                y = form_transformed_output(outs, f_poly, k)
                target = design.r @ ref_hist.get(k - d)
                e_active = e_l if active == "L" else e_n
                diag["identity_resid"][k] = float(np.linalg.norm((y - target) - e_active))
                diag["identity_eligible"][k] = True

        t_arr[k] = t_k
        v_arr[k] = v
        e_star_arr[k] = e_star
        p_arr[k] = p_now
        q_arr[k] = q_now
        e_l_arr[k] = float(np.linalg.norm(e_l))
        e_n_arr[k] = float(np.linalg.norm(e_n))
        xi_l_arr[k] = switch.xi_l
        xi_n_arr[k] = switch.xi_n
        active_list.append(active if controlled and kind in
                           ("mmac", "linear_only", "nonlinear_only") else "-")
        th_l_arr[k] = float(np.linalg.norm(lin.theta))
        th_n_arr[k] = float(np.linalg.norm(neural.theta))
        w_arr[k] = neural.net.weight_norm()
        diag["clamped"][k] = clamped
        diag["controlled"][k] = controlled
        j_used.append(used)

        reg.push_input(k, e_star)
        if isinstance(plant, LinearOraclePlant):
            plant.advance(e_star)
        else:
            plant.advance(e_star, n_sub)

    rec = RunRecord(
        name=cfg.name, seed=cfg.seed, m=m, v_ref=design.v_ref.copy(),
        t_end_s=timing.t_end_s, dt_secondary_s=timing.dt_secondary_s,
        t_svc_on_s=timing.t_svc_on_s, t_event_s=timing.t_event_s,
        t=t_arr, v_o=v_arr, e_star=e_star_arr, p=p_arr, q=q_arr,
        e_l_norm=e_l_arr, e_n_norm=e_n_arr, xi_l=xi_l_arr, xi_n=xi_n_arr,
        active=active_list, theta_l_norm=th_l_arr, theta_n_norm=th_n_arr,
        w_norm=w_arr, diag=diag, monitor_delta=monitor.delta,
        monitor_max=monitor.max_seen, events=events,
    )
    if neural.skipped_train_steps:
        rec.events.append(f"skipped {neural.skipped_train_steps} non-finite ANN steps")
    rec.summary = compute_summary(rec)
    return rec
