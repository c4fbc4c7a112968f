import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svcsim.errors import HistoryUnderrunError, NormalizationError
from svcsim.history import History
from svcsim.polyalg import PolyMatrix, apply, diophantine_residual, solve_diophantine

from util import apply_oracle, random_stable_polymatrix


class TestApply:
    def test_identity_passthrough(self):
        p = PolyMatrix.identity(3)
        v = np.array([1.0, -2.0, 3.5])
        hist = np.array([[9.0, 9.0, 9.0], v])
        assert np.array_equal(apply(p, hist), v)

    def test_geometric_steady_state(self):
        # C(z^-1) = I - 0.2 I z^-1 applied to a constant signal gives 0.8 c
        m = 2
        p = PolyMatrix.from_scalar([1.0, -0.2], m)
        c = np.array([300.0, -10.0])
        hist = np.tile(c, (4, 1))
        assert np.allclose(apply(p, hist), 0.8 * c, rtol=0, atol=1e-12)

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = rng.integers(1, 4)
            coeffs = rng.standard_normal((3, m, m))
            p = PolyMatrix(coeffs)
            hist = rng.standard_normal((5, m))
            expected = apply_oracle(coeffs, hist[::-1])
            assert np.allclose(apply(p, hist), expected, atol=1e-12)

    def test_underrun_raises_instead_of_padding(self):
        p = PolyMatrix.from_scalar([1.0, -0.5, 0.25], 2)
        with pytest.raises(HistoryUnderrunError):
            apply(p, np.ones((2, 2)))

    def test_history_object_indexing(self):
        p = PolyMatrix.from_scalar([1.0, -0.5], 1)
        h = History(depth=4, dim=1)
        for k in range(6):
            h.push(k, [float(k)])
        assert np.allclose(apply(p, h, k=5), 5.0 - 0.5 * 4.0)
        with pytest.raises(HistoryUnderrunError):
            apply(p, h, k=2)  # k-1 = 1 already evicted

    @given(
        alpha=st.floats(-5, 5, allow_nan=False),
        beta=st.floats(-5, 5, allow_nan=False),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_linearity(self, alpha, beta, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 4))
        p = PolyMatrix(rng.standard_normal((int(rng.integers(1, 4)), m, m)))
        u = rng.standard_normal((p.deg + 1, m))
        v = rng.standard_normal((p.deg + 1, m))
        lhs = apply(p, alpha * u + beta * v)
        rhs = alpha * apply(p, u) + beta * apply(p, v)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


class TestStability:
    def test_first_order_cases(self):
        stable = PolyMatrix.from_scalar([1.0, -0.5], 1)
        unstable = PolyMatrix.from_scalar([1.0, -1.5], 1)
        assert stable.is_stable()
        assert not unstable.is_stable()

    def test_marginal_root_rejected(self):
        marginal = PolyMatrix.from_scalar([1.0, -1.0], 2)
        assert not marginal.is_stable()

    def test_degree_zero_is_stable(self):
        assert PolyMatrix.identity(3).is_stable()

    def test_random_factor_construction_is_stable(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = random_stable_polymatrix(rng, m=int(rng.integers(1, 4)), n=int(rng.integers(1, 5)))
            assert a.is_stable()


class TestDiophantine:
    def test_f_equals_a_gives_identity_quotient(self):
        a = PolyMatrix.from_scalar([1.0, -0.5], 1)
        lpoly, kpoly = solve_diophantine(a, a, d=1)
        assert lpoly.deg == 0
        assert np.allclose(lpoly.coeffs[0], np.eye(1))
        assert np.abs(kpoly.coeffs).max() == 0.0

    def test_hand_long_division(self):
        # A = 1 - 0.5 z^-1 + 0.06 z^-2, F = 1 - 0.2 z^-1, d = 1:
        # L = 1, K = 0.3 - 0.06 z^-1 (worked by hand)
        a = PolyMatrix.from_scalar([1.0, -0.5, 0.06], 1)
        f = PolyMatrix.from_scalar([1.0, -0.2], 1)
        lpoly, kpoly = solve_diophantine(a, f, d=1)
        assert lpoly.deg == 0 and np.allclose(lpoly.coeffs[0], [[1.0]])
        assert kpoly.deg == 1
        assert np.allclose(kpoly.coeffs[:, 0, 0], [0.3, -0.06], atol=1e-15)

    def test_residual_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            m = int(rng.integers(1, 4))
            n = int(rng.integers(1, 5))
            d = int(rng.integers(1, n + 1))
            a = random_stable_polymatrix(rng, m, n)
            f = PolyMatrix.from_scalar([1.0, -0.2], m)
            lpoly, kpoly = solve_diophantine(a, f, d)
            assert lpoly.deg == d - 1
            assert kpoly.deg <= n - 1
            assert diophantine_residual(a, f, lpoly, kpoly, d) <= 1e-12

    def test_m2_spec_example_shape(self):
        rng = np.random.default_rng(5)
        a = random_stable_polymatrix(rng, m=2, n=3)
        f = PolyMatrix.from_scalar([1.0, -0.2], 2)
        lpoly, kpoly = solve_diophantine(a, f, d=2)
        assert lpoly.deg == 1
        assert kpoly.deg <= 2
        assert diophantine_residual(a, f, lpoly, kpoly, 2) <= 1e-12

    def test_singular_leading_coefficient_rejected(self):
        coeffs = np.stack([np.array([[1.0, 0.0], [1.0, 0.0]]), np.eye(2)])
        with pytest.raises(NormalizationError):
            solve_diophantine(PolyMatrix(coeffs), PolyMatrix.identity(2), d=1)

    def test_invertible_leading_coefficient_normalized(self):
        # non-monic but invertible A_0: identity holds against A_0^{-1} A
        rng = np.random.default_rng(9)
        a0 = np.array([[2.0, 0.3], [0.0, 1.5]])
        rest = rng.standard_normal((2, 2, 2)) * 0.2
        a = PolyMatrix(np.concatenate([a0[None], rest]))
        f = PolyMatrix.from_scalar([1.0, -0.2], 2)
        lpoly, kpoly = solve_diophantine(a, f, d=1)
        a_monic = PolyMatrix(
            np.einsum("ij,kjl->kil", np.linalg.inv(a0), a.coeffs)
        )
        assert diophantine_residual(a_monic, f, lpoly, kpoly, 1) <= 1e-12

    def test_bad_relative_degree_rejected(self):
        a = PolyMatrix.from_scalar([1.0, -0.5], 1)
        with pytest.raises(ValueError):
            solve_diophantine(a, a, d=2)
