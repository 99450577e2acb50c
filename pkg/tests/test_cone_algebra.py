import itertools
import math

import numpy as np
import pytest

from sigma2lab.exceptions import DomainError, ParameterError, UnsupportedDimensionError
from sigma2lab.schemas.lab_schemas import Spectrum
from sigma2lab.services.cone_algebra import (
    constant_monotonicity,
    dynamic_cn,
    epsilon_jacobi,
    epsilon_jacobi_batch,
    epsilon_slope,
    fii_bounds_check,
    global_delta_cap,
    in_gamma2,
    lemma_batch,
    lemma_experiment,
    linearized_coeffs,
    polynomial_scan,
    q_polynomials,
    remainder_polynomials,
    roots_ytilde,
    roots_yn,
    sample_gamma2,
    sharp_min_eig_gap,
    sigma_k,
    sigma_k_batch,
    trace_condition,
)
from sigma2lab.services.rng import make_rng


def spec(*values):
    return Spectrum(values=list(values))


def brute_sigma(values, k):
    return sum(math.prod(c) for c in itertools.combinations(values, k))


class TestSpectrum:
    def test_sorted_descending_on_construction(self):
        assert spec(1, 3, -1, 2).values.tolist() == [3, 2, 1, -1]

    def test_needs_two_values(self):
        with pytest.raises(ValueError):
            spec(1.0)


class TestSigmaK:
    def test_all_ones(self):
        assert sigma_k(spec(1, 1, 1, 1), 2) == 6.0

    def test_mixed_signs_match_pair_sum(self):
        assert sigma_k(spec(2, 1, 0, -1), 2) == pytest.approx(-1.0, abs=1e-15)

    def test_k_out_of_range(self):
        with pytest.raises(ParameterError):
            sigma_k(spec(1, 2, 3), 4)
        with pytest.raises(ParameterError):
            sigma_k(spec(1, 2, 3), 0)

    def test_against_brute_force(self, rng):
        values = rng.uniform(-2, 3, size=(50, 6))
        for k in range(1, 7):
            expected = np.array([brute_sigma(row, k) for row in values])
            np.testing.assert_allclose(sigma_k_batch(values, k), expected, rtol=1e-11, atol=1e-11)

    def test_square_identity(self, rng):
        values = rng.uniform(-1, 3, size=(1000, 5))
        s1 = sigma_k_batch(values, 1)
        s2 = sigma_k_batch(values, 2)
        residual = s1 * s1 - np.sum(values * values, axis=1) - 2.0 * s2
        assert np.all(np.abs(residual) <= 1e-12 * (1.0 + s1 * s1))


class TestCone:
    def test_membership_examples(self):
        assert in_gamma2(spec(1, 1, 1, 1)).in_gamma2
        assert not in_gamma2(spec(1, -1)).in_gamma2
        cert = in_gamma2(spec(3, 1, 1, -1))
        assert cert.in_gamma2
        assert cert.sigma1 == 4.0
        assert cert.sigma2 == pytest.approx(2.0)

    def test_boundary_is_outside(self):
        # sigma2 = 0 exactly
        assert not in_gamma2(spec(1, 1, -0.5)).in_gamma2

    def test_homogeneity(self):
        lam = spec(3, 1, 1, -1)
        for t in (1e-6, 1.0, 1e6):
            assert in_gamma2(lam.scaled(t)).in_gamma2

    def test_sharp_gap_examples(self):
        assert sharp_min_eig_gap(spec(1, 1, 1, 1)) == pytest.approx(2.0)
        assert sharp_min_eig_gap(spec(1, 1, 0)) == pytest.approx(2.0)

    def test_sharp_gap_errors(self):
        with pytest.raises(DomainError):
            sharp_min_eig_gap(spec(1, 1))
        with pytest.raises(DomainError):
            sharp_min_eig_gap(spec(1, -1, -1))

    def test_fii_bounds_examples(self):
        assert fii_bounds_check(spec(1, 1, 1, 1))
        assert fii_bounds_check(spec(2, 1, 1, -0.5))
        with pytest.raises(DomainError):
            fii_bounds_check(spec(1, -2, -2))

    def test_batch_agrees_with_scalar_checks(self):
        rows = [spec(1, 1, 1, 1), spec(2, 1, 1, -0.5), spec(3, 1, 1, -1)]
        gap, flags = lemma_batch(np.stack([lam.values for lam in rows]))
        assert flags.shape == (3, 4)
        for i, lam in enumerate(rows):
            assert gap[i] == pytest.approx(sharp_min_eig_gap(lam))
            assert bool(np.all(flags[i])) == fii_bounds_check(lam)

    def test_batch_gap_is_nan_in_the_plane(self):
        gap, _ = lemma_batch(np.array([[1.0, 1.0]]))
        assert np.isnan(gap[0])

    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 8])
    def test_lemma_run_has_no_violations(self, n):
        report = lemma_experiment(n, 5000, seed=42)
        assert report.violations == 0
        assert report.summary["min_gap"] > 0
        assert len(report.table) == 5000

    def test_sampler_is_seeded(self):
        a, _ = sample_gamma2(5, 200, make_rng(7))
        b, _ = sample_gamma2(5, 200, make_rng(7))
        np.testing.assert_array_equal(a, b)
        assert np.all(np.diff(a, axis=1) <= 0)


class TestLinearizedCoeffs:
    def test_identity(self):
        out = linearized_coeffs(np.eye(4))
        np.testing.assert_allclose(out.F, 3.0 * np.eye(4))

    def test_diagonal(self):
        out = linearized_coeffs(np.diag([2.0, 1.0, 0.0, -1.0]))
        np.testing.assert_allclose(out.F, np.diag([0.0, 1.0, 2.0, 3.0]))
        assert out.trace_identity_residual == pytest.approx(0.0, abs=1e-12)

    def test_eigenvalues_shift(self, rng):
        A = rng.standard_normal((5, 5))
        H = A + A.T
        F = linearized_coeffs(H).F
        expected = np.sort(np.trace(H) - np.linalg.eigvalsh(H))
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(F)), expected, atol=1e-10)

    def test_positive_definite_inside_cone(self):
        F = linearized_coeffs(np.diag([3.0, 1.0, 1.0, -1.0])).F
        assert np.min(np.linalg.eigvalsh(F)) > 0

    def test_rejects_asymmetric(self):
        H = np.eye(3)
        H[0, 1] = 1e-3
        with pytest.raises(ParameterError):
            linearized_coeffs(H)


class TestConstants:
    def test_dynamic_cn(self):
        assert dynamic_cn(4) == pytest.approx(0.5, abs=1e-15)
        assert dynamic_cn(2) == pytest.approx((math.sqrt(13) - 1) / 4)
        with pytest.raises(ParameterError):
            dynamic_cn(1)

    def test_epsilon_slope_n4_is_two_ninths(self):
        assert epsilon_slope(4) == pytest.approx(2.0 / 9.0)

    def test_epsilon_examples(self):
        assert epsilon_jacobi(4, -0.5) == 0.0
        assert epsilon_jacobi(4, 0.25) == pytest.approx(1.0 / 6.0)
        assert epsilon_jacobi(5, -dynamic_cn(5)) == pytest.approx(0.0, abs=1e-15)

    def test_epsilon_errors(self):
        with pytest.raises(UnsupportedDimensionError):
            epsilon_jacobi(3, 0.0)
        with pytest.raises(DomainError):
            epsilon_jacobi(5, -dynamic_cn(5) - 0.01)
        with pytest.raises(DomainError):
            epsilon_jacobi(4, -0.6)

    def test_clamped_epsilon_below_the_floor(self):
        ratios = np.array([-0.6, 0.1])
        with pytest.raises(DomainError):
            epsilon_jacobi_batch(5, ratios)
        clamped = epsilon_jacobi_batch(5, ratios, clamp=True)
        assert clamped[0] == 0.0
        assert clamped[1] == pytest.approx(epsilon_jacobi(5, 0.1))

    def test_roots(self):
        assert roots_yn(4) == pytest.approx((-0.25, 1.5), abs=1e-15)
        assert roots_ytilde(4) == pytest.approx((-1.0, 1.5), abs=1e-15)

    def test_root_factorization_n5(self):
        lo, hi = roots_yn(5)
        y = np.linspace(-2, 3, 100)
        lhs = 10.0 * (y - lo) * (hi - y)
        rhs = -10.0 * y * y + 12.0 * y + 4.0
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_ytilde_closed_form(self):
        for n in range(2, 20):
            lo, hi = roots_ytilde(n)
            assert lo == pytest.approx(-1.0)
            assert hi == pytest.approx((2.0 * n - 2.0) / n)

    def test_monotonicity_ledger(self):
        report = constant_monotonicity(64)
        assert report.success
        assert report.summary["global_delta_cap"] == pytest.approx(1.403, abs=1e-3)


class TestPolynomials:
    def test_q1_root_and_value(self):
        q, R, full = q_polynomials(4, 0.0, 0.0, 1.5)
        assert q == pytest.approx(0.0, abs=1e-12)
        assert full == pytest.approx(0.0, abs=1e-12)
        assert q_polynomials(4, 0.0, 0.0, 0.0)[0] == pytest.approx(3.0)

    def test_split(self):
        for y in (0.1, 0.7, 1.2):
            q, R, full = q_polynomials(6, 0.3, 0.01, y)
            assert full == pytest.approx(q + 0.01 * R, rel=1e-12, abs=1e-12)

    def test_errors(self):
        with pytest.raises(DomainError):
            q_polynomials(4, 0.0, 0.0, 1.6)
        with pytest.raises(ParameterError):
            q_polynomials(4, 0.0, 0.5, 1.0)
        with pytest.raises(ParameterError):
            q_polynomials(4, 2.0, 0.0, 1.0)

    def test_n4_remainder_form(self):
        y = np.linspace(0.01, 1.49, 50)
        r, R1, _ = remainder_polynomials(4, y)
        np.testing.assert_allclose(r, 8.0 * y * (1.5 - y) - 9.0, atol=1e-12)
        assert np.all(R1 >= 0)

    @pytest.mark.parametrize("n", [4, 5, 6, 7, 8, 9, 10])
    def test_scan_is_nonnegative(self, n):
        report = polynomial_scan(n, 4096, 0.01)
        assert report.violations == 0
        assert report.summary["min_q_delta_theta"] >= -1e-10

    def test_scan_reports_printed_roots(self):
        summary = polynomial_scan(4).summary
        assert summary["y_minus"] == pytest.approx(-0.25)
        assert summary["y_plus"] == pytest.approx(1.5)
        assert summary["ytilde_minus"] == pytest.approx(-1.0)


class TestTraceCondition:
    def test_examples(self):
        assert trace_condition(4, 1.403, 0.01)
        assert not trace_condition(4, 0.5, 1.0)

    def test_global_cap_sweep(self):
        cap = global_delta_cap()
        assert all(trace_condition(n, cap, 0.01) for n in range(2, 65))
