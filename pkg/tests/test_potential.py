import math

import numpy as np
import pytest

from sigma2lab.config.settings import Settings
from sigma2lab.exceptions import (
    AdmissibilityError,
    DomainError,
    ParameterError,
    UnsupportedDimensionError,
)
from sigma2lab.schemas.grid_schemas import GridFunction
from sigma2lab.schemas.lab_schemas import DensityKind, DensityMeasure
from sigma2lab.services.manufactured import manufactured_case
from sigma2lab.services.potential import (
    PotentialService,
    ball_volume,
    constant_density,
    mass_in_ball,
    radial_density,
    wolff_closed_form,
    wolff_upper_bound,
)
from sigma2lab.services.solver import NewtonSolver


@pytest.fixture
def service(settings) -> PotentialService:
    return PotentialService(settings)


ORIGIN4 = np.zeros(4)


class TestWolff:
    def test_ball_volume(self):
        assert ball_volume(2) == pytest.approx(math.pi)
        assert ball_volume(3) == pytest.approx(4 * math.pi / 3)
        assert ball_volume(4) == pytest.approx(math.pi ** 2 / 2)

    @pytest.mark.parametrize("n", [4, 5, 6])
    def test_constant_density_closed_form(self, service, n):
        W = service.wolff_potential(constant_density(n, 1.0), np.zeros(n), 1.0)
        assert W == pytest.approx(wolff_closed_form(1.0, n, 1.0), rel=1e-8)

    def test_zero_density(self, service):
        assert service.wolff_potential(constant_density(4, 0.0), ORIGIN4, 1.0) == 0.0

    def test_scaling(self, service):
        w1 = service.wolff_potential(constant_density(4, 2.0), ORIGIN4, 0.7)
        w9 = service.wolff_potential(constant_density(4, 18.0), ORIGIN4, 0.7)
        assert w9 == pytest.approx(3.0 * w1, rel=1e-10)

    def test_monotone_in_radius(self, service):
        mu = radial_density(4, [0.0, 0.5, 1.0], [2.0, 1.0, 0.0])
        values = [service.wolff_potential(mu, ORIGIN4, r) for r in (0.1, 0.3, 0.6, 1.2)]
        assert values == sorted(values)

    def test_upper_bound_holds_for_constant(self, service):
        W = service.wolff_potential(constant_density(4, 3.0), ORIGIN4, 4 * 0.2)
        assert W <= wolff_upper_bound(4, 3.0, 0.2) * (1 + 1e-8)

    def test_errors(self, service):
        with pytest.raises(UnsupportedDimensionError):
            service.wolff_potential(constant_density(3, 1.0), np.zeros(3), 1.0)
        with pytest.raises(ParameterError):
            service.wolff_potential(constant_density(4, 1.0), ORIGIN4, 0.0)
        with pytest.raises(ParameterError):
            service.wolff_potential(constant_density(4, 1.0), ORIGIN4, 1.0, steps=50)


class TestDensities:
    def test_constant_radial_profile(self):
        t = np.array([0.3, 1.0, 2.5])
        radial = mass_in_ball(radial_density(4, [0, 1, 2], [1.5, 1.5, 1.5]), ORIGIN4, t)
        const = mass_in_ball(constant_density(4, 1.5), ORIGIN4, t)
        np.testing.assert_allclose(radial, const, rtol=1e-12)

    def test_linear_radial_profile(self):
        t = np.array([0.25, 0.5, 1.0])
        mass = mass_in_ball(radial_density(4, [0, 1], [0, 1]), ORIGIN4, t)
        np.testing.assert_allclose(mass, 4 * ball_volume(4) * t ** 5 / 5, rtol=1e-12)

    def test_radial_only_at_center(self):
        with pytest.raises(ParameterError):
            mass_in_ball(radial_density(4, [0, 1], [1, 1]), np.ones(4), np.array([0.5]))

    def test_validation(self):
        with pytest.raises(ValueError):
            DensityMeasure(kind=DensityKind.CONSTANT, n=4, constant=-1.0)
        with pytest.raises(ValueError):
            radial_density(4, [0.5, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            radial_density(4, [0.0, 1.0], [1.0, -1.0])

    def test_grid_counting(self):
        grid = GridFunction.centered(4, 21, 1.0, np.full(21 ** 4, 2.0))
        mu = DensityMeasure(kind=DensityKind.GRID, n=4, grid=grid)
        mass = mass_in_ball(mu, ORIGIN4, np.array([0.0, 0.8]))
        assert mass[0] == pytest.approx(2.0 * grid.h ** 4)
        assert mass[1] == pytest.approx(2.0 * ball_volume(4) * 0.8 ** 4, rel=0.1)

    def test_hessian_measure(self, service, quadratic):
        mu = service.hessian_measure(quadratic(4, 7))
        arr = mu.grid.array()
        np.testing.assert_allclose(arr[1:-1, 1:-1, 1:-1, 1:-1], 6.0, atol=1e-9)
        assert np.all(arr[0] == 0.0)

    def test_labutin_constants(self, service, quadratic):
        u = quadratic(4, 9)
        out = service.labutin_constants(u, service.hessian_measure(u), 0.5)
        assert out["u0"] == 0.0 and out["inf"] == 0.0
        assert out["C1"] == 0.0
        assert out["W_large"] > out["W_small"] > 0


class TestHarnack:
    def test_constant(self, service, constant_grid):
        rep = service.harnack_check(constant_grid(1.0, 3, 21), 0.0, 0.05, 1.0, 0.0)
        assert rep.holds
        assert rep.sup == rep.inf == 1.0
        assert rep.c1_fit == 1.0 and rep.c2_fit == 0.0
        assert rep.wolff_bound is None

    def test_centered_quadratic(self, service, quadratic):
        u = quadratic(3, 41)
        r = 0.09
        rep = service.harnack_check(u, 3.0, r, 1.0, 1.0)
        mask = u.ball_mask(r).reshape(-1)
        assert rep.sup == pytest.approx(float(np.max(u.values[mask])))
        assert rep.inf == 0.0
        assert math.isinf(rep.c1_fit)
        assert rep.c2_fit >= 0.5
        assert rep.holds

    def test_translated_center(self, service, quadratic):
        rep = service.harnack_check(quadratic(3, 41), 3.0, 0.05, 2.0, 0.1, center=np.array([0.5, 0.0, 0.0]))
        assert rep.holds
        assert 1.0 < rep.c1_fit < 2.0

    def test_wolff_bound_reported_in_four_dimensions(self, service, quadratic):
        rep = service.harnack_check(quadratic(4, 11), 6.0, 0.05, 1.0, 1.0)
        assert rep.wolff_bound == pytest.approx(wolff_upper_bound(4, 6.0, 0.05))

    def test_errors(self, service, quadratic):
        u = quadratic(2, 21)
        with pytest.raises(DomainError):
            service.harnack_check(u.with_values(u.values - 1.0), 1.0, 0.05, 1.0, 1.0)
        with pytest.raises(ParameterError):
            service.harnack_check(u, 1.0, 0.2, 1.0, 1.0)
        with pytest.raises(AdmissibilityError):
            service.harnack_check(u.with_values(2.0 - u.values), 1.0, 0.05, 1.0, 1.0)

    @pytest.mark.slow
    def test_fitted_constants_are_stable_under_refinement(self, service):
        # r = 0.095 covers several nodes at both spacings; sup and inf sit on shared nodes
        fits = []
        for m in (45, 89):
            _, rhs, boundary, init = manufactured_case("exp", 2, m)
            u = NewtonSolver(Settings()).solve(rhs, boundary, init).u
            rep = service.harnack_check(u, 1.0, 0.095, 1.0, 1.0)
            assert rep.holds
            fits.append((rep.c1_fit, rep.c2_fit))
        (c1_coarse, c2_coarse), (c1_fine, c2_fine) = fits
        assert c1_coarse == pytest.approx(c1_fine, rel=0.1)
        assert c2_coarse == pytest.approx(c2_fine, rel=0.1)
        assert c2_fine > 0


class TestSeminorms:
    def test_constant(self, service, constant_grid):
        rep = service.weighted_seminorms(constant_grid(2.0, 2, 21), 0.5, 1.0)
        assert rep.weighted_holder == 0.0
        assert rep.weighted_sup == pytest.approx(2.0)
        assert not rep.sampled and rep.seed is None
        assert rep.pairs == rep.nodes * (rep.nodes - 1) // 2

    def test_gamma_range(self, service, constant_grid):
        u = constant_grid(1.0, 2, 9)
        for gamma in (0.0, 1.5):
            with pytest.raises(ParameterError):
                service.weighted_seminorms(u, gamma, 1.0)

    def test_linear_function_axis_bound(self, service):
        n = 4
        u = GridFunction.from_callable(lambda x: x[..., 0], n, 11, 1.0)
        rep = service.weighted_seminorms(u, 1.0, 1.0)
        assert not rep.sampled
        # sup over s of (1 - s)^n s, attained on the axis
        bound = n ** n / (n + 1) ** (n + 1)
        axis_node = (1 - 0.2) ** n * 0.2
        assert axis_node <= rep.weighted_sup + 1e-15
        assert rep.weighted_sup <= bound + 1e-15
        assert 0 < rep.weighted_holder <= 1.0

    def test_sampled_pairs_are_seeded(self, service):
        u = GridFunction.from_callable(lambda x: x[..., 0] ** 2, 4, 13, 1.0)
        a = service.weighted_seminorms(u, 0.5, 1.0)
        b = service.weighted_seminorms(u, 0.5, 1.0)
        assert a.sampled and a.seed == 42
        assert a.weighted_holder == b.weighted_holder
        assert a.pairs <= 20000

    def test_triangle_inequality(self, service):
        u = GridFunction.from_callable(lambda x: np.sin(3 * x[..., 0]), 2, 21, 1.0)
        v = GridFunction.from_callable(lambda x: x[..., 1] ** 2, 2, 21, 1.0)
        w = u.with_values(u.values + v.values)
        su, sv, sw = (service.weighted_seminorms(f, 0.7, 1.0).weighted_holder for f in (u, v, w))
        assert sw <= su + sv + 1e-12

    def test_interpolation(self, service, quadratic):
        report = service.interpolation_check(quadratic(2, 21), 0.5, 1.0)
        assert report.success
        assert list(report.table["epsilon"]) == [0.01, 0.1, 1.0]
        lhs = report.table["weighted_sup"]
        rhs = report.table["holder_term"] + report.table["fitted_C"] * report.table["l1_norm"] / report.table["epsilon"] ** 2
        assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-15)

    def test_holder_estimate_constant(self, service, quadratic):
        C = service.holder_estimate_constant(quadratic(2, 21), 0.5, 1.0)
        assert 0 < C < math.inf

    @pytest.mark.slow
    def test_constants_are_stable_under_refinement(self):
        service = PotentialService(Settings().model_copy(update={"seminorm_node_cap": 8192}))
        fits = []
        for m in (41, 81):
            u = GridFunction.from_callable(lambda x: 1.0 + x[..., 0], 2, m, 1.0)
            rep = service.weighted_seminorms(u, 0.5, 1.0)
            assert not rep.sampled
            assert rep.weighted_sup == pytest.approx(1.0)
            interp = service.interpolation_check(u, 0.5, 1.0)
            fits.append(
                (
                    rep.weighted_holder,
                    interp.summary["max_fitted_C"],
                    service.holder_estimate_constant(u, 0.5, 1.0),
                )
            )
        for coarse, fine in zip(*fits):
            assert fine > 0
            assert coarse == pytest.approx(fine, rel=0.1)


class TestOscillation:
    def test_constant(self, service, constant_grid):
        rep = service.oscillation_decay(constant_grid(1.0, 2, 41), None, [0.02, 0.05, 0.1])
        np.testing.assert_array_equal(rep.omega, 0.0)
        assert rep.C == 0.0 and rep.theta == 0.0
        assert rep.satisfied.all()
        assert rep.exponent is None

    def test_quadratic(self, service, quadratic):
        u = quadratic(2, 41)
        radii = [0.03, 0.05, 0.08, 0.1]
        rep = service.oscillation_decay(u, None, radii)
        for r, om in zip(radii, rep.omega):
            mask = u.ball_mask(r).reshape(-1)
            assert om == pytest.approx(float(np.max(u.values[mask])))
        assert rep.satisfied.all()
        assert rep.theta <= 0.99
        assert rep.exponent is not None and rep.exponent > 0

    def test_radii_out_of_range(self, service, quadratic):
        with pytest.raises(ParameterError):
            service.oscillation_decay(quadratic(2, 21), None, [0.2])
        with pytest.raises(ParameterError):
            service.oscillation_decay(quadratic(2, 21), None, [])
