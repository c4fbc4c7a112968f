"""Control laws and the switching supervisor.

Both adaptive laws solve the identified regression model for the one input
that is still unknown inside X(k):

    (LB)_0 E*(k) = R V_ref(k) [- h_hat] - sum_i K_i V_o(k-i)
                   - sum_{i>=1} (LB)_i E*(k-i)

The projection floor on (LB)_0 guarantees the solve is well posed. A
performance index per estimator (cumulative dead-zone-gated term plus a
sliding window of recent small errors) selects which law drives the plant;
ties go to the linear law.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditionedSolveError, MonitorViolationError
from .identify import LinearEstimator, NeuralEstimator, RegressorState
from .polyalg import PolyMatrix, solve_diophantine

SOLVE_RESID_TOL = 1e-9


@dataclass
class ControllerDesign:
    """Designer choices: stable diagonal F(z^-1), diagonal R (default F(1)),
    the reference vector, and the per-channel actuator clamp."""

    f: PolyMatrix
    v_ref: np.ndarray
    r: np.ndarray | None = None
    clamp_lo: float = 0.0
    clamp_hi: float = np.inf

    def __post_init__(self):
        if not self.f.is_stable():
            raise ValueError("F(z^-1) must be stable")
        if not self.f.is_diagonal(tol=0.0):
            raise ValueError("F(z^-1) must be diagonal")
        self.v_ref = np.asarray(self.v_ref, dtype=float)
        if self.r is None:
            self.r = self.f.at_one()
        else:
            self.r = np.asarray(self.r, dtype=float)
        if not np.allclose(self.r, np.diag(np.diag(self.r))):
            raise ValueError("R must be diagonal")

    @property
    def m(self) -> int:
        return self.f.dim


@dataclass
class ControlDiag:
    clamped: bool
    solve_residual: float


def _clamp(e_star: np.ndarray, design: ControllerDesign) -> tuple[np.ndarray, bool]:
    clipped = np.clip(e_star, design.clamp_lo, design.clamp_hi)
    return clipped, bool(np.any(clipped != e_star))


def _solve_theta_control(theta: np.ndarray, m: int, n: int, d: int,
                         reg: RegressorState, k: int, rhs: np.ndarray,
                         design: ControllerDesign) -> tuple[np.ndarray, ControlDiag]:
    v_win = reg.outputs_window(k, n)
    e_win = reg.inputs_window(k - 1, n + d - 2)
    acc = np.asarray(rhs, dtype=float).copy()
    for i in range(n):
        acc -= theta[i * m:(i + 1) * m, :].T @ v_win[i]
    for j in range(1, n + d - 1):
        acc -= theta[(n + j) * m:(n + j + 1) * m, :].T @ e_win[j - 1]
    gain = theta[n * m:(n + 1) * m, :].T
    e_star = np.linalg.solve(gain, acc)
    resid = float(np.linalg.norm(gain @ e_star - acc))
    if resid > SOLVE_RESID_TOL * max(1.0, float(np.linalg.norm(acc))):
        raise IllConditionedSolveError(
            f"ill-conditioned controller solve at k={k}: residual {resid:.3e}")
    e_star, clamped = _clamp(e_star, design)
    return e_star, ControlDiag(clamped=clamped, solve_residual=resid)


def linear_control(est: LinearEstimator, reg: RegressorState, k: int,
                   design: ControllerDesign, v_ref_k: np.ndarray) -> tuple[np.ndarray, ControlDiag]:
    """Linear adaptive law: solve theta_L(k)^T X(k) = R V_ref(k) for E*(k)."""
    rhs = design.r @ np.asarray(v_ref_k, dtype=float)
    return _solve_theta_control(est.theta, est.m, est.n, est.d, reg, k, rhs, design)


def nonlinear_control(est: NeuralEstimator, reg: RegressorState, k: int,
                      design: ControllerDesign, v_ref_k: np.ndarray,
                      h_hat: np.ndarray) -> tuple[np.ndarray, ControlDiag]:
    """Neural-augmented law: theta_N(k)^T X(k) + h_hat = R V_ref(k).

    `h_hat` must be the network value evaluated with the one-step-held input
    slot — the same value later cached for e_N.
    """
    rhs = design.r @ np.asarray(v_ref_k, dtype=float) - np.asarray(h_hat, dtype=float)
    return _solve_theta_control(est.theta, est.m, est.n, est.d, reg, k, rhs, design)


@dataclass
class SwitchDiag:
    active: str
    switched: bool
    xi_l: float
    xi_n: float
    eta_l: int
    eta_n: int


class SwitchState:
    """Performance indices and the controller selection.

    xi_j(k) = sum_{s<=k} eta_j(s)(||e_j(s)||^2 - 4 rho^2) / (2(1+||X(s-d)||^2))
              + mu * sum over the last M steps of (1-eta_j(s))||e_j(s)||^2

    The first sum only ever grows (its increments are positive exactly when
    the dead zone is open); the second is a sliding window of in-dead-zone
    error energy that lets a freshly improved estimator win back the switch.
    """

    def __init__(self, rho: float, mu: float = 1.0, window: int = 10):
        if mu < 0 or window < 1:
            raise ValueError("mu must be >= 0 and window >= 1")
        self.rho = float(rho)
        self.mu = float(mu)
        self.window = int(window)
        self.cum = {"L": 0.0, "N": 0.0}
        self.windows = {"L": deque(maxlen=window), "N": deque(maxlen=window)}
        self.active = "L"
        self.switch_count = 0

    def _xi(self, j: str) -> float:
        return self.cum[j] + self.mu * sum(self.windows[j])

    @property
    def xi_l(self) -> float:
        return self._xi("L")

    @property
    def xi_n(self) -> float:
        return self._xi("N")

    def update(self, e_l: np.ndarray, e_n: np.ndarray, x_lag: np.ndarray) -> SwitchDiag:
        den = 2.0 * (1.0 + float(np.asarray(x_lag) @ np.asarray(x_lag)))
        etas = {}
        for j, e in (("L", e_l), ("N", e_n)):
            sq = float(np.asarray(e) @ np.asarray(e))
            eta = 1 if np.sqrt(sq) > 2.0 * self.rho else 0
            etas[j] = eta
            if eta:
                self.cum[j] += (sq - 4.0 * self.rho ** 2) / den
                self.windows[j].append(0.0)
            else:
                self.windows[j].append(sq)
        new_active = "L" if self.xi_l <= self.xi_n else "N"
        switched = new_active != self.active
        if switched:
            self.switch_count += 1
        self.active = new_active
        return SwitchDiag(active=new_active, switched=switched,
                          xi_l=self.xi_l, xi_n=self.xi_n,
                          eta_l=etas["L"], eta_n=etas["N"])


class OracleController:
    """Known-model optimal law (test oracle): with the true A, B and the
    design identity F = L A + z^-d K,

        L B E*(k) = R V_ref(k) - K V_o(k) - h(k),  h(k) = L(z^-1) phi(k).

    `phi_fn(k)` must return the disturbance sample the plant injects at step
    k (entering V_o(k+d)); omit it for phi = 0.
    """

    def __init__(self, a: PolyMatrix, b: PolyMatrix, design: ControllerDesign,
                 d: int, phi_fn=None):
        self.design = design
        self.d = d
        self.m = a.dim
        self.n = a.deg
        self.lpoly, self.kpoly = solve_diophantine(a, design.f, d)
        self.lb = (self.lpoly * b).trimmed()
        gain = self.lb.coeffs[0]
        sigma_min = np.linalg.svd(gain, compute_uv=False).min()
        if sigma_min < 1e-12:
            raise ValueError("L_0 B_0 is singular; oracle law rejected")
        self.phi_fn = phi_fn

    def compute(self, reg: RegressorState, k: int, v_ref_k: np.ndarray) -> np.ndarray:
        acc = self.design.r @ np.asarray(v_ref_k, dtype=float)
        v_win = reg.outputs_window(k, self.kpoly.deg + 1)
        for i in range(self.kpoly.deg + 1):
            acc -= self.kpoly.coeffs[i] @ v_win[i]
        if self.lb.deg > 0:
            e_win = reg.inputs_window(k - 1, self.lb.deg)
            for i in range(1, self.lb.deg + 1):
                acc -= self.lb.coeffs[i] @ e_win[i - 1]
        if self.phi_fn is not None:
            for i in range(self.lpoly.deg + 1):
                acc -= self.lpoly.coeffs[i] @ np.asarray(self.phi_fn(k - i), dtype=float)
        e_star = np.linalg.solve(self.lb.coeffs[0], acc)
        e_star, _ = _clamp(e_star, self.design)
        return e_star


class FeedbackLinearizationBaseline:
    """Model-based comparison law (the strawman): input-output linearization
    of the *nominal* surrogate model, never informed of load changes.

    Cancels the modeled droop sag and imposes first-order reference dynamics
    with time constant tau_ref:

        E*_i = v_i + D_Q,i q_hat_i(v) + (tau_v / tau_ref)(V_ref_i - v_i)

    where q_hat is the nominal (pre-event) reactive load share.
    """

    def __init__(self, nominal_model, design: ControllerDesign, tau_ref: float):
        self.model = nominal_model
        self.design = design
        self.tau_ref = float(tau_ref)

    def compute(self, v_meas: np.ndarray) -> np.ndarray:
        v = np.asarray(v_meas, dtype=float)
        q_hat = self.model.reactive_shares(v)
        gain = self.model.tau_v / self.tau_ref
        e_star = v + self.model.d_q * q_hat + gain * (self.design.v_ref - v)
        e_star, _ = _clamp(e_star, self.design)
        return e_star


@dataclass
class BiboMonitor:
    """Run-level boundedness check: max{||V_o||, ||E*||} <= delta."""

    delta: float
    enforce: bool = True
    max_seen: float = field(default=0.0, init=False)

    def check(self, v_o: np.ndarray, e_star: np.ndarray, k: int, t: float) -> None:
        level = max(float(np.linalg.norm(v_o)), float(np.linalg.norm(e_star)))
        self.max_seen = max(self.max_seen, level)
        if self.enforce and level > self.delta:
            raise MonitorViolationError(
                f"BIBO monitor violated at t={t:.6f}s (k={k}): "
                f"signal norm {level:.3e} > delta {self.delta:.3e}", t=t, k=k)
