"""Discrete linear oracle plants with known regression parameters.

    A(z^-1) V_o(k+d) = B(z^-1) E*(k) + phi(k)

with A monic and stable and B(0) invertible. These plants run directly at
the secondary rate and are used to validate the identifiers and control laws
against exactly known parameters.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..history import History
from ..polyalg import PolyMatrix


class LinearOraclePlant:
    """Direct difference-equation recursion with optional disturbance.

    phi_fn(k) -> m-vector is the unmodeled-dynamics sample injected together
    with E*(k) (it affects V_o(k+d)).
    """

    def __init__(self, a: PolyMatrix, b: PolyMatrix, d: int, phi_fn=None):
        m, n = a.dim, a.deg
        if b.dim != m:
            raise ConfigError("A and B dimensions differ")
        if n >= 1 and not a.is_stable():
            raise ConfigError("oracle plant requires a stable A(z^-1)")
        if not np.allclose(a.coeffs[0], np.eye(m)):
            raise ConfigError("oracle plant requires monic A (A_0 = I)")
        if n >= 1 and not 1 <= d <= n:
            raise ConfigError(f"relative degree d={d} outside 1..n={n}")
        min_sigma = np.linalg.svd(b.coeffs[0], compute_uv=False).min()
        if min_sigma < 1e-12:
            raise ConfigError("oracle plant requires invertible B(0)")
        self.a, self.b, self.d = a, b, d
        self.m, self.n = m, n
        self.phi_fn = phi_fn
        depth = max(n, 1) + d + 2
        self._v = History(depth=depth, dim=m)
        self._e = History(depth=depth, dim=m)
        self.k = 0
        # the system starts at the origin: all past samples are zero
        for kk in range(-depth + 1, 1):
            self._v.push(kk, np.zeros(m))
            if kk < 0:
                self._e.push(kk, np.zeros(m))

    @property
    def dt_native(self) -> None:
        return None  # discrete plant: steps at the secondary rate

    def measure(self) -> np.ndarray:
        return self._v.get(self.k)

    def powers(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.m), np.zeros(self.m)

    def advance(self, e_star: np.ndarray) -> None:
        """Consume E*(k) and produce V_o(k+1)."""
        k = self.k
        self._e.push(k, np.asarray(e_star, dtype=float))
        k1 = k + 1
        acc = np.zeros(self.m)
        for i in range(1, self.a.deg + 1):
            acc -= self.a.coeffs[i] @ self._v.get(k1 - i)
        for j in range(self.b.deg + 1):
            acc += self.b.coeffs[j] @ self._e.get(k1 - self.d - j)
        if self.phi_fn is not None:
            acc += np.asarray(self.phi_fn(k1 - self.d), dtype=float)
        self._v.push(k1, acc)
        self.k = k1


def bounded_phi(m: int, amplitude: float, seed: int, mode: str = "uniform"):
    """Deterministic disturbance stream with ||phi(k)|| <= amplitude.

    Modes: "uniform" (fresh direction, magnitude in [amplitude/2, amplitude]),
    "fixed_norm" (fresh direction, norm exactly amplitude), "constant" (one
    random direction of norm amplitude, held for the whole run — the bias
    disturbance for which the dead-zone bound converges at finite horizon).
    Negative k maps to the zero vector.
    """
    rng = np.random.default_rng(seed)
    cache: dict[int, np.ndarray] = {}
    if mode == "constant":
        direction = rng.standard_normal(m)
        direction /= max(np.linalg.norm(direction), 1e-12)
        const = amplitude * direction

    def phi(k: int) -> np.ndarray:
        if k < 0:
            return np.zeros(m)
        if mode == "constant":
            return const
        if k not in cache:
            # draw sequentially so the stream is reproducible regardless of
            # query order
            kk = max(cache) + 1 if cache else 0
            while kk <= k:
                d = rng.standard_normal(m)
                d /= max(np.linalg.norm(d), 1e-12)
                mag = amplitude if mode == "fixed_norm" else amplitude * rng.uniform(0.5, 1.0)
                cache[kk] = mag * d
                kk += 1
        return cache[k]

    return phi
