import math

import numpy as np
import pytest

from sigma2lab.config.settings import Settings
from sigma2lab.exceptions import AdmissibilityError, ConfigurationError
from sigma2lab.schemas.grid_schemas import GridFunction
from sigma2lab.services.cone_algebra import dynamic_cn
from sigma2lab.services.doubling import (
    DoublingService,
    doubling_conditions,
    fitted_constant,
    gamma_norm,
)
from sigma2lab.services.manufactured import get_case, manufactured_case
from sigma2lab.services.solver import NewtonSolver


@pytest.fixture
def service(settings) -> DoublingService:
    return DoublingService(settings)


@pytest.fixture
def bowl(quadratic):
    return quadratic(2, 25, 3.0)


class TestConfig:
    def test_gamma_norm_of_constant(self, constant_grid):
        assert gamma_norm(constant_grid(2.0)) == pytest.approx(3.0)

    def test_defaults_satisfy_conditions(self, service, bowl):
        cfg = service.default_config(bowl)
        ledger = doubling_conditions(cfg)
        assert len(ledger) == 6 and all(ledger.values())
        G = gamma_norm(bowl)
        assert cfg.gamma == pytest.approx(10 * 2 * 10.0 * G * G / dynamic_cn(2))

    def test_violated_conditions(self, service, bowl):
        cfg = service.default_config(bowl).model_copy(update={"alpha": 2.0})
        with pytest.raises(ConfigurationError):
            service.check_conditions(cfg)
        relaxed = cfg.model_copy(update={"enforce_conditions": False})
        assert not all(service.check_conditions(relaxed).values())

    def test_bad_radii(self, service, bowl):
        with pytest.raises(ConfigurationError):
            service.default_config(bowl, r_inner=2.0, r_outer=1.0)


class TestTestFunction:
    def test_quadratic_closed_form(self, service, bowl):
        cfg = service.default_config(bowl)
        P = service.guanqiu_P(bowl, cfg).array()
        x = bowl.points()
        r2 = np.sum(x * x, axis=-1)
        expected = 2 * np.log(9 - r2) + cfg.alpha * r2 / 2 + cfg.beta * r2 / 2 + math.log(cfg.gamma)
        live = np.isfinite(P)
        assert live.sum() > 0
        assert not np.any(live[0])
        np.testing.assert_allclose(P[live], expected[live], atol=1e-12)

    def test_radial_maximizer_is_the_center(self, service, bowl):
        cfg = service.default_config(bowl)
        rep = service.doubling_ratio(bowl, cfg)
        assert rep.max_P_location == (12, 12)
        # dense radial sampling of the closed form peaks at r = 0
        r = np.linspace(0, 2.9, 10001)
        dense = 2 * np.log(9 - r * r) + (cfg.alpha + cfg.beta) * r * r / 2
        assert np.argmax(dense) == 0
        assert rep.P_max == pytest.approx(2 * math.log(9) + math.log(cfg.gamma), abs=1e-12)

    def test_gamma_shift(self, service, bowl):
        cfg = service.default_config(bowl)
        P1 = service.guanqiu_P(bowl, cfg).values
        P2 = service.guanqiu_P(bowl, cfg.model_copy(update={"gamma": 2 * cfg.gamma})).values
        live = np.isfinite(P1)
        np.testing.assert_allclose(P2[live] - P1[live], math.log(2.0), atol=1e-12)

    def test_inadmissible(self, service, bowl):
        cfg = service.default_config(bowl)
        with pytest.raises(AdmissibilityError):
            service.guanqiu_P(bowl.with_values(-bowl.values), cfg)


class TestRatio:
    def test_quadratic_ratio_is_one(self, service, bowl):
        rep = service.doubling_ratio(bowl, service.default_config(bowl))
        assert rep.ratio == pytest.approx(1.0, abs=1e-12)
        assert rep.success
        assert rep.sup_outer >= rep.sup_inner

    def test_exp_case_matches_analytic_sups(self, service):
        u = get_case("exp").sample(2, 25, 3.0)
        rep = service.doubling_ratio(u, service.default_config(u))
        analytic = (2 + 0.05 * math.exp(2)) / (2 + 0.05 * math.exp(1))
        assert rep.ratio == pytest.approx(analytic, rel=1e-3)
        assert rep.ratio == rep.sup_outer / rep.sup_inner
        assert rep.success
        assert math.isinf(rep.paper_bound)
        C = rep.fitted_constant
        assert C * math.exp(C * rep.Gamma ** 6) == pytest.approx(rep.ratio, rel=1e-10)

    def test_affine_invariance(self, service):
        u = get_case("exp").sample(2, 25, 3.0)
        shifted = GridFunction.from_callable(
            lambda x: get_case("exp").value(x) + 0.3 * x[..., 0] - 0.2 * x[..., 1], 2, 25, 3.0
        )
        a = service.doubling_ratio(u, service.default_config(u)).ratio
        b = service.doubling_ratio(shifted, service.default_config(shifted)).ratio
        assert b == pytest.approx(a, rel=1e-12)

    def test_unenforced_conditions_still_measure(self, service, bowl):
        cfg = service.default_config(bowl).model_copy(update={"alpha": 2.0})
        with pytest.raises(ConfigurationError):
            service.doubling_ratio(bowl, cfg)
        rep = service.doubling_ratio(bowl, cfg.model_copy(update={"enforce_conditions": False}))
        assert rep.conditions["alpha_beta_gamma"] is False
        assert rep.ratio == pytest.approx(1.0, abs=1e-12)

    def test_max_point_is_stable_under_refinement(self, service):
        points = []
        for m in (25, 49):
            u = get_case("exp").sample(2, m, 3.0)
            rep = service.doubling_ratio(u, service.default_config(u))
            assert rep.max_P_location == (m // 2, m // 2)
            points.append(rep.max_P_point)
        np.testing.assert_allclose(points[0], (0.0, 0.0), atol=1e-12)
        np.testing.assert_allclose(points[1], points[0], atol=1e-12)

    @pytest.mark.slow
    def test_solved_exp_field_matches_analytic_sups(self, service):
        _, rhs, boundary, init = manufactured_case("exp", 2, 25, 3.0)
        u = NewtonSolver(Settings()).solve(rhs, boundary, init).u
        rep = service.doubling_ratio(u, service.default_config(u))
        analytic = (2 + 0.05 * math.exp(2)) / (2 + 0.05 * math.exp(1))
        assert rep.ratio == pytest.approx(analytic, rel=1e-2)
        assert rep.success

    def test_grid_too_small(self, service, quadratic):
        u = quadratic(2, 9, 1.0)
        cfg = service.default_config(u)
        with pytest.raises(ConfigurationError):
            service.doubling_ratio(u, cfg)

    def test_fitted_constant_of_one(self):
        C = fitted_constant(1.0, 2.0)
        assert C > 0
        assert C * math.exp(C * 64.0) == pytest.approx(1.0)
