"""Pucci algebra, operator evaluation, ellipticity audit, reduced operator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oblique_visc.operators import (
    Ellipticity,
    OperatorSpec,
    bellman_operator,
    ellipticity_audit,
    evaluate,
    linear_operator,
    normalization_shift,
    pucci_minus,
    pucci_plus,
    random_psd,
    random_symmetric,
    reduced_boundary_operator,
)

E12 = Ellipticity(1.0, 2.0)


def sym(a, b, c):
    return np.array([[a, c], [c, b]])


class TestPucciValues:
    def test_identity(self):
        assert pucci_plus(np.eye(2), E12) == pytest.approx(4.0, abs=1e-14)

    def test_mixed_signs(self):
        M = np.diag([1.0, -1.0])
        assert pucci_plus(M, E12) == pytest.approx(1.0, abs=1e-14)
        assert pucci_minus(M, E12) == pytest.approx(-1.0, abs=1e-14)

    def test_zero(self):
        assert pucci_plus(np.zeros((2, 2)), E12) == 0.0
        assert pucci_minus(np.zeros((2, 2)), E12) == 0.0

    def test_batched_evaluation(self):
        rng = np.random.default_rng(3)
        M = random_symmetric(rng, 64)
        batch = pucci_plus(M, E12)
        single = np.array([pucci_plus(m, E12) for m in M])
        np.testing.assert_allclose(batch, single, atol=1e-14)


class TestPucciAlgebra:
    @given(st.floats(0.0, 50.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_positive_homogeneity(self, t, seed):
        M = random_symmetric(np.random.default_rng(seed), 1)[0]
        lhs = pucci_plus(t * M, E12)
        rhs = t * pucci_plus(M, E12)
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(rhs))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_duality_exact(self, seed):
        M = random_symmetric(np.random.default_rng(seed), 1)[0]
        assert pucci_plus(-M, E12) == -pucci_minus(M, E12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_subadditivity(self, seed):
        rng = np.random.default_rng(seed)
        M, N = random_symmetric(rng, 2)
        assert pucci_plus(M + N, E12) <= pucci_plus(M, E12) + pucci_plus(N, E12) + 1e-11

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_extremal_sandwich_all_kinds(self, seed):
        rng = np.random.default_rng(seed)
        M = random_symmetric(rng, 1)[0]
        N = random_psd(rng, 1)[0]
        ops = [
            OperatorSpec("pucci_plus", E12),
            OperatorSpec("pucci_minus", E12),
            linear_operator(sym(1.5, 1.2, 0.2), E12),
            bellman_operator([(np.eye(2), 0.0), (sym(1.8, 1.2, 0.2), -0.5)], E12),
        ]
        lo, hi = pucci_minus(N, E12), pucci_plus(N, E12)
        for F in ops:
            df = evaluate(F, M + N) - evaluate(F, M)
            assert lo - 1e-11 <= df <= hi + 1e-11


class TestEvaluate:
    def test_linear_trace(self):
        F = linear_operator(np.eye(2), Ellipticity(1, 1), f0=0.25)
        assert evaluate(F, np.diag([2.0, 3.0])) == pytest.approx(5.25)

    def test_bellman_singleton_equals_linear(self):
        Fb = bellman_operator([(np.eye(2), 0.0)], Ellipticity(1, 1))
        Fl = linear_operator(np.eye(2), Ellipticity(1, 1))
        rng = np.random.default_rng(11)
        M = random_symmetric(rng, 32)
        np.testing.assert_allclose(evaluate(Fb, M), evaluate(Fl, M), atol=1e-14)

    def test_bellman_frame_net_approaches_pucci_plus(self):
        # oracle: dense net of rotated diag(mu1, mu2) coefficient matrices;
        # the probe eigenframe sits between the coarse net points but on the
        # fine net, so refinement is visible
        th0 = np.pi / 32
        R = np.array([[np.cos(th0), -np.sin(th0)], [np.sin(th0), np.cos(th0)]])
        M = R @ np.diag([1.0, -1.0]) @ R.T
        target = pucci_plus(M, E12)
        errs = []
        for n_theta in (16, 64):
            members = []
            for th in np.linspace(0, np.pi, n_theta, endpoint=False):
                Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
                for mus in ((1, 1), (1, 2), (2, 1), (2, 2)):
                    members.append((Q @ np.diag(mus) @ Q.T, 0.0))
            F = bellman_operator(members, E12)
            val = float(evaluate(F, M))
            assert val <= target + 1e-12
            errs.append(target - val)
        assert errs[1] < errs[0]
        assert errs[1] < 1e-2

    def test_bellman_convex_in_m(self):
        F = bellman_operator([(np.eye(2), 0.0), (sym(1.7, 1.3, 0.25), 0.3)], E12)
        rng = np.random.default_rng(5)
        for _ in range(100):
            M, N = random_symmetric(rng, 2)
            mid = evaluate(F, 0.5 * (M + N))
            assert mid <= 0.5 * (evaluate(F, M) + evaluate(F, N)) + 1e-12


class TestSpecValidation:
    def test_lambda_ordering_enforced(self):
        with pytest.raises(ValueError):
            Ellipticity(2.0, 1.0)
        with pytest.raises(ValueError):
            Ellipticity(0.0, 1.0)

    def test_linear_eigenvalues_must_lie_in_band(self):
        with pytest.raises(ValueError):
            linear_operator(np.diag([1.0, 3.0]), E12)

    def test_bellman_member_eigenvalues_checked(self):
        with pytest.raises(ValueError):
            bellman_operator([(np.diag([0.5, 1.0]), 0.0)], E12)

    def test_equality_case_audit(self):
        # tr(N) hits both bounds for A = I, lam = Lam = 1; rounding only
        F = linear_operator(np.eye(2), Ellipticity(1, 1))
        rep = ellipticity_audit(F, 2000, rng=np.random.default_rng(0))
        assert rep.passed
        assert rep["max_violation"] <= 1e-12


class TestEllipticityAudit:
    @pytest.mark.parametrize(
        "make",
        [
            lambda: OperatorSpec("pucci_plus", E12),
            lambda: OperatorSpec("pucci_minus", E12),
            lambda: linear_operator(sym(1.4, 1.3, -0.3), E12),
            lambda: bellman_operator([(np.eye(2), 0.1), (sym(1.6, 1.4, 0.3), 0.0)], E12),
        ],
    )
    def test_zero_violation_on_samples(self, make):
        rep = ellipticity_audit(make(), 10_000, rng=np.random.default_rng(7))
        assert rep.passed, rep.values


class TestNormalizationShift:
    def test_shift_zeroes_constant_term(self):
        F = OperatorSpec("pucci_plus", E12, f0=0.7)
        t = normalization_shift(F)
        E = np.zeros((2, 2))
        E[1, 1] = t
        assert abs(evaluate(F, E)) < 1e-12
        assert abs(t) <= abs(F.constant_term) / E12.lam + 1e-12

    def test_zero_constant_no_shift(self):
        assert normalization_shift(OperatorSpec("pucci_plus", E12)) == 0.0


class TestReducedBoundaryOperator:
    def test_vertical_beta_block_diagonal(self):
        F = linear_operator(np.eye(2), Ellipticity(1, 1))
        val = reduced_boundary_operator(F, np.array([[3.0]]), np.array([0.0, 1.0]), 2.0)
        assert val == pytest.approx(5.0)  # tr(M) + abar

    def test_zero_inputs_give_f0(self):
        F = OperatorSpec("pucci_plus", E12, f0=-0.3)
        val = reduced_boundary_operator(F, np.array([[0.0]]), np.array([0.0, 1.0]), 0.0)
        assert val == pytest.approx(-0.3)

    def test_beta_n_zero_rejected(self):
        F = OperatorSpec("pucci_plus", E12)
        with pytest.raises(ValueError):
            reduced_boundary_operator(F, np.array([[1.0]]), np.array([1.0, 0.0]), 0.0)

    def test_convexity_for_pucci_plus(self):
        F = OperatorSpec("pucci_plus", E12)
        rng = np.random.default_rng(2)
        beta = np.array([0.6, 0.8])
        for _ in range(1000):
            m1, m2 = rng.standard_normal(2)
            abar = rng.standard_normal()
            mid = reduced_boundary_operator(F, [[0.5 * (m1 + m2)]], beta, abar)
            avg = 0.5 * (
                reduced_boundary_operator(F, [[m1]], beta, abar)
                + reduced_boundary_operator(F, [[m2]], beta, abar)
            )
            assert mid <= avg + 1e-11
