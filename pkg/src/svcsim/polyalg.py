"""Matrix polynomials in the backward-shift operator and the design identity.

A ``PolyMatrix`` represents C(z^-1) = C_0 + C_1 z^-1 + ... + C_deg z^-deg with
square real coefficient matrices. The module provides evaluation against a
signal history, polynomial arithmetic, a companion-matrix stability check, and
the long-division solver for the design identity

    F(z^-1) = L(z^-1) A(z^-1) + z^-d K(z^-1)

with deg L = d-1 and deg K <= n-1, which the known-model controller and the
regression-form parameterization are built on.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import HistoryUnderrunError, NormalizationError
from .history import History

STABILITY_TOL = 1e-9


class PolyMatrix:
    """Square matrix polynomial in the backward-shift operator z^-1.

    Parameters
    ----------
    coeffs : sequence of (m, m) arrays or array of shape (deg+1, m, m)
        Coefficient matrices [C_0, C_1, ..., C_deg].
    """

    def __init__(self, coeffs):
        arr = np.asarray(coeffs, dtype=float)
        if arr.ndim == 1:
            # scalar polynomial given as a flat coefficient list
            arr = arr.reshape(-1, 1, 1)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValueError("coeffs must be a (deg+1, m, m) stack of square matrices")
        if arr.shape[0] < 1:
            raise ValueError("need at least one coefficient")
        self.coeffs = arr
        self.coeffs.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def deg(self) -> int:
        return self.coeffs.shape[0] - 1

    @classmethod
    def identity(cls, m: int) -> "PolyMatrix":
        return cls(np.eye(m)[None, :, :])

    @classmethod
    def zero(cls, m: int) -> "PolyMatrix":
        return cls(np.zeros((1, m, m)))

    @classmethod
    def from_scalar(cls, coeffs: Sequence[float], m: int) -> "PolyMatrix":
        """Diagonal polynomial c(z^-1)·I from scalar coefficients."""
        c = np.asarray(coeffs, dtype=float)
        return cls(c[:, None, None] * np.eye(m)[None, :, :])

    def coeff(self, i: int) -> np.ndarray:
        """C_i, zero beyond the stored degree."""
        if 0 <= i <= self.deg:
            return self.coeffs[i]
        return np.zeros((self.dim, self.dim))

    def trimmed(self) -> "PolyMatrix":
        """Drop trailing all-zero coefficient matrices (degree 0 kept)."""
        last = self.deg
        while last > 0 and not self.coeffs[last].any():
            last -= 1
        return PolyMatrix(self.coeffs[: last + 1].copy())

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        deg = max(self.deg, other.deg)
        out = np.zeros((deg + 1, self.dim, self.dim))
        out[: self.deg + 1] += self.coeffs
        out[: other.deg + 1] += other.coeffs
        return PolyMatrix(out)

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        deg = max(self.deg, other.deg)
        out = np.zeros((deg + 1, self.dim, self.dim))
        out[: self.deg + 1] += self.coeffs
        out[: other.deg + 1] -= other.coeffs
        return PolyMatrix(out)

    def __mul__(self, other: "PolyMatrix") -> "PolyMatrix":
        """Polynomial product self(z^-1)·other(z^-1); order matters."""
        deg = self.deg + other.deg
        out = np.zeros((deg + 1, self.dim, self.dim))
        for i in range(self.deg + 1):
            for j in range(other.deg + 1):
                out[i + j] += self.coeffs[i] @ other.coeffs[j]
        return PolyMatrix(out)

    def shifted(self, d: int) -> "PolyMatrix":
        """z^-d · self."""
        out = np.zeros((self.deg + d + 1, self.dim, self.dim))
        out[d:] = self.coeffs
        return PolyMatrix(out)

    def at_one(self) -> np.ndarray:
        """Static (DC) gain C(1) = sum of coefficients."""
        return self.coeffs.sum(axis=0)

    def is_diagonal(self, tol: float = 0.0) -> bool:
        off = self.coeffs - np.einsum("kij,ij->kij", self.coeffs, np.eye(self.dim))
        return bool(np.abs(off).max() <= tol)

    def max_root_magnitude(self) -> float:
        """Largest |z| over roots of det(C(z^-1))·z^(m·deg) (companion eigenvalues).

        Requires C_0 invertible. Degree-0 polynomials have no roots and
        return 0.
        """
        m, deg = self.dim, self.deg
        if deg == 0:
            return 0.0
        try:
            c0inv = np.linalg.inv(self.coeffs[0])
        except np.linalg.LinAlgError as exc:
            raise NormalizationError("leading coefficient is singular") from exc
        comp = np.zeros((m * deg, m * deg))
        for i in range(1, deg + 1):
            comp[:m, (i - 1) * m : i * m] = -c0inv @ self.coeffs[i]
        if deg > 1:
            comp[m:, : m * (deg - 1)] = np.eye(m * (deg - 1))
        return float(np.abs(np.linalg.eigvals(comp)).max())

    def is_stable(self, tol: float = STABILITY_TOL) -> bool:
        """True iff all roots of det(C(z^-1)) lie strictly outside the unit
        circle in z^-1 (the associated difference equation is exponentially
        stable)."""
        return self.max_root_magnitude() < 1.0 - tol

    def __repr__(self) -> str:  # pragma: no cover
        return f"PolyMatrix(dim={self.dim}, deg={self.deg})"


def apply(p: PolyMatrix, history, k: int | None = None) -> np.ndarray:
    """Evaluate C(z^-1) v(k) = sum_i C_i v(k-i) against a signal history.

    Parameters
    ----------
    p : PolyMatrix
    history : History or array-like of shape (T, m)
        For an array, ``history[-1]`` is taken as v(k), ``history[-2]`` as
        v(k-1), and so on; ``k`` is then optional.
    k : int, optional
        Absolute sample index (required for a ``History``).

    Raises
    ------
    HistoryUnderrunError
        If fewer than deg+1 samples ending at k are available. Samples are
        never zero-padded.
    """
    if isinstance(history, History):
        if k is None:
            raise ValueError("k is required when evaluating against a History")
        out = np.zeros(p.dim)
        for i in range(p.deg + 1):
            out += p.coeffs[i] @ history.get(k - i)
        return out
    hist = np.asarray(history, dtype=float)
    if hist.ndim == 1:
        hist = hist[:, None]
    if hist.shape[0] < p.deg + 1:
        raise HistoryUnderrunError(
            f"history underrun: need {p.deg + 1} samples, have {hist.shape[0]}"
        )
    out = np.zeros(p.dim)
    for i in range(p.deg + 1):
        out += p.coeffs[i] @ hist[-1 - i]
    return out


def solve_diophantine(A: PolyMatrix, F: PolyMatrix, d: int) -> tuple[PolyMatrix, PolyMatrix]:
    """Solve F(z^-1) = L(z^-1) A(z^-1) + z^-d K(z^-1) by block long division.

    A must have degree n >= 1 with invertible A_0 (it is normalized to monic
    via A_0^{-1} A before solving; a singular A_0 raises
    NormalizationError). The quotient L has degree d-1; the remainder K has
    degree at most n-1.

    Returns
    -------
    (L, K) : tuple of PolyMatrix
    """
    m, n = A.dim, A.deg
    if F.dim != m:
        raise ValueError("A and F dimensions differ")
    if n < 1:
        raise ValueError("A must have degree >= 1")
    if not 1 <= d <= n:
        raise ValueError(f"relative degree d={d} outside 1..n={n}")
    if F.deg > n:
        raise ValueError(f"deg F = {F.deg} exceeds n = {n}")

    a0 = A.coeffs[0]
    if abs(np.linalg.det(a0)) < 1e-300 or np.linalg.cond(a0) > 1e12:
        raise NormalizationError("normalization required: A_0 is singular")
    if np.allclose(a0, np.eye(m), rtol=0.0, atol=0.0):
        a = A.coeffs
    else:
        a0inv = np.linalg.inv(a0)
        a = np.einsum("ij,kjl->kil", a0inv, A.coeffs)

    # peel off d quotient coefficients: L_j = F_j - sum_{i<j} L_i A_{j-i}
    L = np.zeros((d, m, m))
    for j in range(d):
        acc = F.coeff(j).copy()
        for i in range(j):
            if 0 <= j - i <= n:
                acc -= L[i] @ a[j - i]
        L[j] = acc
    # remainder: K_j = F_{d+j} - sum_i L_i A_{d+j-i}
    K = np.zeros((n, m, m))
    for j in range(n):
        acc = F.coeff(d + j).copy()
        for i in range(d):
            if 0 <= d + j - i <= n:
                acc -= L[i] @ a[d + j - i]
        K[j] = acc
    return PolyMatrix(L), PolyMatrix(K).trimmed()


def diophantine_residual(A: PolyMatrix, F: PolyMatrix, L: PolyMatrix, K: PolyMatrix, d: int) -> float:
    """Max coefficient-wise |F - L·A - z^-d·K| (A taken as given, i.e. monic)."""
    resid = F - (L * A) - K.shifted(d)
    return float(np.abs(resid.coeffs).max())
