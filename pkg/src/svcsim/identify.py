"""Online identification of the input-output regression form.

The plant is identified through

    Y(k+d) = theta^T X(k) + h[Xbar(k)]

where Y = F(z^-1) V_o is the transformed output, X stacks the last n output
samples and the last n+d-1 input samples, and h is the unmodeled-dynamics
residual. Two estimators run on this form:

- a linear estimator with a normalized-gradient update gated by a dead zone
  of radius 2*rho and a projection that keeps the leading input-gain block
  invertible (singular values floored at h_min);
- a neural-augmented estimator that adds a one-hidden-layer tanh network
  approximating h, trained online with norm-capped SGD.

Parameter matrices theta have shape (m*(2n+d-1), m); block i of m rows is the
transpose of the coefficient matrix multiplying the i-th regressor slot.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import HistoryUnderrunError
from .history import History
from .polyalg import PolyMatrix, apply


def regressor_length(m: int, n: int, d: int) -> int:
    return m * (2 * n + d - 1)


class RegressorState:
    """Rolling output/input histories assembled into X(k) and Xbar(k).

    X(k) = [V_o(k)^T, ..., V_o(k-n+1)^T, E*(k)^T, ..., E*(k-n-d+2)^T]^T
    """

    def __init__(self, m: int, n: int, d: int, extra_output_depth: int = 0):
        if n < 1 or not 1 <= d <= n:
            raise ValueError(f"invalid model orders n={n}, d={d}")
        self.m, self.n, self.d = m, n, d
        self.n_in_slots = n + d - 1
        self.outputs = History(depth=n + d + extra_output_depth + 2, dim=m)
        self.inputs = History(depth=n + 2 * d + 2, dim=m)

    def push_output(self, k: int, v) -> None:
        self.outputs.push(k, v)

    def push_input(self, k: int, e) -> None:
        self.inputs.push(k, e)

    def ready(self, k: int) -> bool:
        return self.outputs.has(k) and self.outputs.has(k - self.n + 1) and (
            self.n_in_slots == 0
            or (self.inputs.has(k) and self.inputs.has(k - self.n_in_slots + 1))
        )

    def ready_held(self, k: int) -> bool:
        return self.outputs.has(k) and self.outputs.has(k - self.n + 1) and (
            self.inputs.has(k - 1) and self.inputs.has(k - max(self.n_in_slots - 1, 1))
        )

    def _samples(self, k: int, held_input: bool) -> np.ndarray:
        cols = []
        for i in range(self.n):
            cols.append(self.outputs.get(k - i))
        for j in range(self.n_in_slots):
            if held_input and j == 0:
                cols.append(self.inputs.get(k - 1))
            else:
                cols.append(self.inputs.get(k - j))
        return np.array(cols)

    def vector(self, k: int) -> np.ndarray:
        """X(k) as a stacked vector of length m*(2n+d-1)."""
        return self._samples(k, held_input=False).reshape(-1)

    def matrix(self, k: int) -> np.ndarray:
        """Xbar(k): the same samples, one column per sample, shape (m, 2n+d-1)."""
        return self._samples(k, held_input=False).T

    def vector_held(self, k: int) -> np.ndarray:
        """X(k) with the current-input slot replaced by E*(k-1).

        Used as the network input when E*(k) is still being solved for (the
        causal one-step hold).
        """
        return self._samples(k, held_input=True).reshape(-1)

    def outputs_window(self, k: int, count: int) -> np.ndarray:
        return self.outputs.window(k, count)

    def inputs_window(self, k: int, count: int) -> np.ndarray:
        if count == 0:
            return np.zeros((0, self.m))
        return self.inputs.window(k, count)


def form_transformed_output(outputs: History, f: PolyMatrix, k: int) -> np.ndarray:
    """Y(k) = F(z^-1) V_o(k)."""
    return apply(f, outputs, k)


@dataclass
class UpdateDiag:
    eta: int
    frozen: bool
    step_norm: float
    sigma_min: float
    floored: bool
    boxed: bool


class LinearEstimator:
    """Dead-zone, normalized-gradient parameter estimator with projection.

    Update (for identification error e(k) computed against the lag-d
    parameter snapshot):

        theta'(k) = theta(k-d) + eta(k) X(k-d) e(k)^T / (1 + ||X(k-d)||^2)
        eta(k)    = 1 if ||e(k)|| > 2 rho else 0
        theta(k)  = proj{theta'(k)}

    proj clips entries into the [-theta_box, theta_box] box and floors the
    singular values of the leading m x m input-gain block at h_min.
    """

    def __init__(self, m: int, n: int, d: int, rho: float, h_min: float,
                 theta_box: float, theta0: np.ndarray):
        p = regressor_length(m, n, d)
        theta0 = np.asarray(theta0, dtype=float)
        if theta0.shape != (p, m):
            raise ValueError(f"theta0 must have shape ({p}, {m})")
        if rho < 0 or h_min <= 0:
            raise ValueError("rho must be >= 0 and h_min > 0")
        self.m, self.n, self.d = m, n, d
        self.rho = float(rho)
        self.h_min = float(h_min)
        self.theta_box = float(theta_box)
        self.theta = self._project(theta0.copy())[0]
        self._lag = deque([self.theta] * d, maxlen=d)

    # -- leading input-gain block ------------------------------------
    def _lead_slice(self) -> slice:
        return slice(self.n * self.m, (self.n + 1) * self.m)

    def leading_block(self, theta: np.ndarray | None = None) -> np.ndarray:
        """(LB)_0 as the m x m matrix multiplying E*(k) in theta^T X."""
        th = self.theta if theta is None else theta
        return th[self._lead_slice(), :].T

    def leading_sigma_min(self, theta: np.ndarray | None = None) -> float:
        return float(np.linalg.svd(self.leading_block(theta), compute_uv=False).min())

    def _project(self, theta: np.ndarray) -> tuple[np.ndarray, bool, bool]:
        boxed = bool(np.abs(theta).max() > self.theta_box)
        if boxed:
            theta = np.clip(theta, -self.theta_box, self.theta_box)
        block = theta[self._lead_slice(), :].T
        u, s, vt = np.linalg.svd(block)
        floored = bool(s.min() < self.h_min)
        if floored:
            block = u @ np.diag(np.maximum(s, self.h_min)) @ vt
            theta = theta.copy()
            theta[self._lead_slice(), :] = block.T
        theta.setflags(write=False)
        return theta, floored, boxed

    # -- estimator interface ------------------------------------------
    def lagged_theta(self) -> np.ndarray:
        """theta(k-d), the snapshot both the error and the update are based on."""
        return self._lag[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Y_hat(k+d) = theta(k)^T X(k)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.theta.shape[0],):
            raise ValueError("regressor dimension mismatch")
        return self.theta.T @ x

    def identification_error(self, y: np.ndarray, x_lag: np.ndarray) -> np.ndarray:
        """e(k) = Y(k) - theta(k-d)^T X(k-d)."""
        return np.asarray(y, dtype=float) - self.lagged_theta().T @ np.asarray(x_lag, dtype=float)

    def update(self, e: np.ndarray, x_lag: np.ndarray) -> UpdateDiag:
        """Advance theta by one step; total (never raises on any finite input)."""
        base = self._lag[0]
        e = np.asarray(e, dtype=float)
        x_lag = np.asarray(x_lag, dtype=float)
        eta = 1 if np.linalg.norm(e) > 2.0 * self.rho else 0
        if eta == 0:
            # dead zone: theta(k) = theta(k-d), bit for bit
            new = base
            diag = UpdateDiag(eta=0, frozen=True, step_norm=0.0,
                              sigma_min=self.leading_sigma_min(base), floored=False, boxed=False)
        else:
            step = np.outer(x_lag, e) / (1.0 + float(x_lag @ x_lag))
            new, floored, boxed = self._project(base + step)
            diag = UpdateDiag(eta=1, frozen=False, step_norm=float(np.linalg.norm(step)),
                              sigma_min=self.leading_sigma_min(new), floored=floored, boxed=boxed)
        self._lag.append(new)
        self.theta = new
        return diag

    def hold(self) -> UpdateDiag:
        """Advance the lag buffer without adapting (inactive-estimator step)."""
        base = self._lag[0]
        self._lag.append(base)
        self.theta = base
        return UpdateDiag(eta=0, frozen=True, step_norm=0.0,
                          sigma_min=self.leading_sigma_min(base), floored=False, boxed=False)


class TanhNetwork:
    """One-hidden-layer tanh network with bias on both layers.

    Output y = W_out [tanh(W_hid [x/s; 1]); 1]. Trained by plain SGD on
    0.5*||target - y||^2 followed by projection of each weight matrix onto
    the Frobenius ball of radius w_max.
    """

    def __init__(self, n_in: int, n_out: int, hidden: int, w_max: float,
                 learn_rate: float, input_scale: float, rng: np.random.Generator):
        self.n_in, self.n_out, self.hidden = n_in, n_out, hidden
        self.w_max = float(w_max)
        self.learn_rate = float(learn_rate)
        self.input_scale = float(input_scale)
        self.w_hid = rng.normal(0.0, 1.0 / np.sqrt(n_in + 1), size=(hidden, n_in + 1))
        self.w_out = np.zeros((n_out, hidden + 1))
        self._clip_norms()

    def _clip_norms(self) -> None:
        for w in (self.w_hid, self.w_out):
            norm = np.linalg.norm(w)
            if norm > self.w_max:
                w *= self.w_max / norm

    def _hidden(self, x: np.ndarray) -> np.ndarray:
        xa = np.concatenate([np.asarray(x, dtype=float) / self.input_scale, [1.0]])
        return xa, np.tanh(self.w_hid @ xa)

    def forward(self, x: np.ndarray) -> np.ndarray:
        _, a = self._hidden(x)
        return self.w_out @ np.concatenate([a, [1.0]])

    def gradients(self, x: np.ndarray, target: np.ndarray):
        """Backprop gradients of 0.5*||target - forward(x)||^2.

        Returns (g_hid, g_out, y).
        """
        xa, a = self._hidden(x)
        aa = np.concatenate([a, [1.0]])
        y = self.w_out @ aa
        dy = y - np.asarray(target, dtype=float)
        g_out = np.outer(dy, aa)
        da = self.w_out[:, : self.hidden].T @ dy
        dz = (1.0 - a * a) * da
        g_hid = np.outer(dz, xa)
        return g_hid, g_out, y

    def train_step(self, x: np.ndarray, target: np.ndarray) -> bool:
        """One SGD step with norm projection; returns False if the gradient
        was non-finite and the step was skipped."""
        g_hid, g_out, _ = self.gradients(x, target)
        if not (np.isfinite(g_hid).all() and np.isfinite(g_out).all()):
            return False
        self.w_hid = self.w_hid - self.learn_rate * g_hid
        self.w_out = self.w_out - self.learn_rate * g_out
        self._clip_norms()
        return True

    def weight_norm(self) -> float:
        return float(max(np.linalg.norm(self.w_hid), np.linalg.norm(self.w_out)))


class NeuralEstimator:
    """Neural-augmented estimator: theta_N with the same dead-zone/projection
    law as the linear estimator plus an online tanh network for h.

    The network value used in the control law at step k must be the same one
    subtracted in e_N(k+d); `cache_h` / `cached_h` store it keyed by step.
    """

    def __init__(self, m: int, n: int, d: int, rho: float, h_min: float,
                 theta_box: float, theta0: np.ndarray, net: TanhNetwork):
        self.theta_est = LinearEstimator(m, n, d, rho, h_min, theta_box, theta0)
        self.net = net
        self.m, self.n, self.d = m, n, d
        self._h_cache = History(depth=d + 2, dim=m)
        self.skipped_train_steps = 0

    @property
    def theta(self) -> np.ndarray:
        return self.theta_est.theta

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)

    def cache_h(self, k: int, h: np.ndarray) -> None:
        self._h_cache.push(k, h)

    def cached_h(self, k: int) -> np.ndarray:
        return self._h_cache.get(k)

    def has_cached_h(self, k: int) -> bool:
        return self._h_cache.has(k)

    def identification_error(self, y: np.ndarray, x_lag: np.ndarray,
                             h_lag: np.ndarray) -> np.ndarray:
        """e_N(k) = Y(k) - theta_N(k-d)^T X(k-d) - h_hat[Xbar(k-d)] with the
        cached network value, not a re-evaluation."""
        return (np.asarray(y, dtype=float)
                - self.theta_est.lagged_theta().T @ np.asarray(x_lag, dtype=float)
                - np.asarray(h_lag, dtype=float))

    def train_target(self, y: np.ndarray, x_lag: np.ndarray) -> np.ndarray:
        """h*(k) = Y(k) - theta_N(k-d)^T X(k-d), the network's target."""
        return np.asarray(y, dtype=float) - self.theta_est.lagged_theta().T @ np.asarray(x_lag, dtype=float)

    def train(self, x_lag_held: np.ndarray, target: np.ndarray) -> bool:
        ok = self.net.train_step(x_lag_held, target)
        if not ok:
            self.skipped_train_steps += 1
        return ok

    def update_theta(self, e_n: np.ndarray, x_lag: np.ndarray) -> UpdateDiag:
        return self.theta_est.update(e_n, x_lag)

    def hold(self) -> UpdateDiag:
        """Advance the lag buffer without adapting (inactive-estimator step)."""
        return self.theta_est.hold()


def pure_delay_theta(m: int, n: int, d: int, f: PolyMatrix) -> np.ndarray:
    """theta for the unit-delay plant V_o(k+d) = E*(k), i.e. A = B = I.

    Substituting into Y(k+d) = F(z^-1) V_o(k+d) maps F's coefficients onto
    regressor slots: F_i with i >= d lands on the V_o(k-(i-d)) slot, F_j with
    j < d on the E*(k-j) slot. A sensible, excitation-free default.
    """
    p = regressor_length(m, n, d)
    theta = np.zeros((p, m))
    for i in range(f.deg + 1):
        if i >= d:
            slot = i - d
            if slot < n:
                theta[slot * m:(slot + 1) * m, :] = f.coeffs[i].T
        else:
            slot = n + i
            theta[slot * m:(slot + 1) * m, :] = f.coeffs[i].T
    return theta


def theta_from_design(a: PolyMatrix, b: PolyMatrix, f: PolyMatrix, d: int) -> np.ndarray:
    """True regression parameters for a known linear plant A V_o(k+d) = B E*(k).

    theta = [K_0, ..., K_{n-1}, (LB)_0, ..., (LB)_{n+d-2}] with (L, K) from
    the design identity F = L A + z^-d K.
    """
    from .polyalg import solve_diophantine

    m, n = a.dim, a.deg
    lpoly, kpoly = solve_diophantine(a, f, d)
    lb = lpoly * b
    p = regressor_length(m, n, d)
    theta = np.zeros((p, m))
    for i in range(n):
        theta[i * m:(i + 1) * m, :] = kpoly.coeff(i).T
    for j in range(n + d - 1):
        theta[(n + j) * m:(n + j + 1) * m, :] = lb.coeff(j).T
    return theta


def calibrate_rho(x_rows: np.ndarray, y_rows: np.ndarray, margin: float = 1.0) -> float:
    """Bound on ||h|| from a probing trajectory: batch least squares on
    Y = theta^T X, then the max residual norm times `margin`."""
    x_rows = np.asarray(x_rows, dtype=float)
    y_rows = np.asarray(y_rows, dtype=float)
    theta, *_ = np.linalg.lstsq(x_rows, y_rows, rcond=None)
    resid = y_rows - x_rows @ theta
    return float(np.linalg.norm(resid, axis=1).max() * margin)
