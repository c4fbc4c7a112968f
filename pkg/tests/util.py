"""Shared helpers for the test suite: random stable systems and oracles."""

import numpy as np

from svcsim.polyalg import PolyMatrix


def random_stable_polymatrix(rng, m, n, radius=0.8):
    """Monic stable A(z^-1) of degree n built as a product of first-order
    factors (I - G_i z^-1) with spectral radius of each G_i below `radius`."""
    poly = PolyMatrix.identity(m)
    for _ in range(n):
        g = rng.standard_normal((m, m))
        rho = max(np.abs(np.linalg.eigvals(g)).max(), 1e-6)
        g *= rng.uniform(0.2, 1.0) * radius / rho
        poly = poly * PolyMatrix(np.stack([np.eye(m), -g]))
    return poly


def random_b_poly(rng, m, deg, sigma_range=(0.5, 2.0)):
    """B(z^-1) of the given degree with a symmetric positive-definite B(0)
    (eigenvalues in `sigma_range`): gain orientation is prior knowledge, as
    for the physical plant."""
    coeffs = 0.5 * rng.standard_normal((deg + 1, m, m))
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    s = rng.uniform(*sigma_range, size=m)
    coeffs[0] = q @ np.diag(s) @ q.T
    return PolyMatrix(coeffs)


def feasible_siso_family(rng, m, n, d, f, v_ref=1.0, clamp_hi_factor=2.0):
    """Random (A, B) with stable A, SPD well-conditioned B(0), stable L*B
    (minimum-phase inversion path), and a DC input inside the actuator range."""
    from svcsim.polyalg import solve_diophantine

    while True:
        a = random_stable_polymatrix(rng, m, n)
        b = random_b_poly(rng, m, n - 1)
        b1 = b.at_one()
        if np.linalg.cond(b1) > 6:
            continue
        e_ss = np.linalg.solve(b1, a.at_one() @ np.full(m, v_ref))
        if not (np.all(e_ss > 0.15 * clamp_hi_factor * v_ref)
                and np.all(e_ss < 0.85 * clamp_hi_factor * v_ref)):
            continue
        lpoly, _ = solve_diophantine(a, f, d)
        lb = lpoly * b
        if lb.deg > 0 and not lb.is_stable():
            continue
        return a, b


def apply_oracle(coeffs, samples):
    """Independent triple-loop evaluation of sum_i C_i v(k-i).

    `samples` is newest-first: samples[i] = v(k-i).
    """
    deg_plus_1, m, _ = coeffs.shape
    out = np.zeros(m)
    for i in range(deg_plus_1):
        for r in range(m):
            for c in range(m):
                out[r] += coeffs[i][r, c] * samples[i][c]
    return out
