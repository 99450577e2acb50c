"""
Doubling measurement for the discrete Laplacian.

The grid models the ball of radius 3 so that rho(x) = 9 - |x|^2 stays positive
on the ball mask. The test function is

    P = 2 log rho + alpha (x.Du - u) + beta/2 |Du|^2 + log max(b - sup_{B_1} b, gamma)

with b = log Laplacian u.
"""

import logging
import math
from typing import Dict, Optional

import numpy as np
from scipy.special import lambertw

from sigma2lab.config.settings import Settings, get_settings
from sigma2lab.exceptions import AdmissibilityError, ConfigurationError, ParameterError
from sigma2lab.schemas.grid_schemas import GridFunction
from sigma2lab.schemas.lab_schemas import DoublingConfig, DoublingReport
from sigma2lab.services.cone_algebra import dynamic_cn
from sigma2lab.services.solver import NewtonSolver
from sigma2lab.services.stencils import gradient_stack, laplacian

logger = logging.getLogger(__name__)

# relative slack for the constraints that hold with equality at the defaults
_EQUALITY_RTOL = 1e-12


def gamma_norm(u: GridFunction) -> float:
    """Gamma = 3 max|D_h u| + max|u| + 1."""
    du = gradient_stack(u.array(), u.h, depth=1)
    return float(3.0 * np.max(np.linalg.norm(du, axis=-1)) + np.max(np.abs(u.values)) + 1.0)


def doubling_conditions(cfg: DoublingConfig) -> Dict[str, bool]:
    """The six parameter constraints of the doubling argument."""
    C, G, n = cfg.constant_C, cfg.Gamma, cfg.n
    a, b, g = cfg.alpha, cfg.beta, cfg.gamma
    c_n = dynamic_cn(n)

    def le(x: float, y: float) -> bool:
        return x <= y * (1.0 + _EQUALITY_RTOL)

    return {
        "alpha_beta_gamma": le(a, 1.0) and le(b * G, 1.0) and le(G * G, g),
        "alpha_beta_first": le(a * a, b / (3.0 * C)) and le(b, 1.0 / (3.0 * C * G * G)),
        "gamma_first": le(C / (4.0 * c_n), g),
        "alpha_beta_second": le(b, a / (2.0 * n * G)),
        "gamma_second": le(10.0 * n * C / c_n, g),
        "alpha_beta_third": le(a * a, b / (30.0 * C * g)) and le(b, 1.0 / (30.0 * C * G * G * g)),
    }


def fitted_constant(ratio: float, Gamma: float) -> float:
    """Smallest C' with ratio <= C' exp(C' Gamma^6), i.e. W(ratio Gamma^6) / Gamma^6."""
    if ratio <= 0 or Gamma <= 0:
        raise ParameterError(f"ratio and Gamma must be positive, got {ratio} and {Gamma}")
    g6 = Gamma ** 6
    return float(lambertw(ratio * g6).real) / g6


class DoublingService:
    """Test function and doubling ratio on admissible grid functions."""

    def __init__(self, settings: Optional[Settings] = None):
        """Initialize the service with laboratory settings."""
        self.settings = settings or get_settings()
        self.solver = NewtonSolver(self.settings)

    def default_config(
        self,
        u: GridFunction,
        constant_C: Optional[float] = None,
        r_inner: float = 1.0,
        r_outer: float = 2.0,
        enforce_conditions: bool = True,
    ) -> DoublingConfig:
        """Defaults gamma = 10nC Gamma^2 / c_n, alpha = 1/(60nC Gamma gamma), beta = 1/(120 n^2 C Gamma^2 gamma)."""
        C = self.settings.doubling_constant if constant_C is None else constant_C
        n = u.n
        G = gamma_norm(u)
        gamma = 10.0 * n * C * G * G / dynamic_cn(n)
        alpha = 1.0 / (60.0 * n * C * G * gamma)
        beta = 1.0 / (120.0 * n * n * C * G * G * gamma)
        try:
            cfg = DoublingConfig(
                n=n, alpha=alpha, beta=beta, gamma=gamma, r_inner=r_inner, r_outer=r_outer,
                constant_C=C, Gamma=G, enforce_conditions=enforce_conditions,
            )
        except ValueError as e:
            raise ConfigurationError(f"invalid doubling configuration: {e}") from e
        self.check_conditions(cfg)
        return cfg

    def check_conditions(self, cfg: DoublingConfig) -> Dict[str, bool]:
        ledger = doubling_conditions(cfg)
        failed = [name for name, ok in ledger.items() if not ok]
        if failed and cfg.enforce_conditions:
            raise ConfigurationError(f"doubling parameters violate {', '.join(failed)}")
        if failed:
            logger.warning(f"Doubling parameters violate {failed}; continuing without enforcement")
        return ledger

    def _require_admissible(self, u: GridFunction) -> None:
        scan = self.solver.admissibility_scan(u)
        if not scan.admissible:
            raise AdmissibilityError(f"grid function is not admissible at node {scan.first_bad_node}", node=scan.first_bad_node)

    def _inner_mask(self, u: GridFunction, r: float) -> np.ndarray:
        mask = u.ball_mask(r, center=np.zeros(u.n), depth=1).reshape(-1)
        if not np.any(mask):
            raise ConfigurationError(f"ball of radius {r} contains no depth-1 nodes (h = {u.h:.4g})")
        return mask

    def guanqiu_P(self, u: GridFunction, cfg: DoublingConfig) -> GridFunction:
        """Test function at depth-1 nodes inside the radius-3 ball; -inf elsewhere."""
        self._require_admissible(u)
        n, m = u.n, u.m
        lap = laplacian(u.array(), u.h, depth=1)
        b = np.log(lap)
        b_bar = b - np.max(b[self._inner_mask(u, cfg.r_inner)])
        x = u.points(1).reshape(-1, n)
        du = gradient_stack(u.array(), u.h, depth=1)
        z = u.interior(1).reshape(-1)
        rho = 9.0 - np.sum(x * x, axis=1)
        inside = rho > 0.0
        P = np.full(x.shape[0], -np.inf)
        P[inside] = (
            2.0 * np.log(rho[inside])
            + cfg.alpha * (np.sum(x * du, axis=1)[inside] - z[inside])
            + 0.5 * cfg.beta * np.sum(du * du, axis=1)[inside]
            + np.log(np.maximum(b_bar[inside], cfg.gamma))
        )
        out = np.full(u.shape, -np.inf)
        out[(slice(1, m - 1),) * n] = P.reshape((m - 2,) * n)
        return u.with_values(out)

    def doubling_ratio(self, u: GridFunction, cfg: DoublingConfig) -> DoublingReport:
        """sup of the Laplacian over B_{r_outer} divided by the sup over B_{r_inner}."""
        if u.radius + 0.5 * u.h < cfg.r_outer:
            raise ConfigurationError(f"grid radius {u.radius} does not cover the outer ball of radius {cfg.r_outer}")
        ledger = self.check_conditions(cfg)
        P = self.guanqiu_P(u, cfg)
        lap = laplacian(u.array(), u.h, depth=1)
        sup_inner = float(np.max(lap[self._inner_mask(u, cfg.r_inner)]))
        sup_outer = float(np.max(lap[self._inner_mask(u, cfg.r_outer)]))
        ratio = sup_outer / sup_inner
        G = cfg.Gamma
        log_bound = math.log(cfg.constant_C) + cfg.constant_C * G ** 6
        bound = math.exp(log_bound) if log_bound < 709.0 else math.inf
        flat = int(np.argmax(P.values))
        location = tuple(int(i) for i in np.unravel_index(flat, u.shape))
        point = tuple(float(u.origin[k] + u.h * location[k]) for k in range(u.n))
        success = math.log(ratio) <= log_bound
        logger.info(f"Doubling ratio {ratio:.6g} (Gamma={G:.4g}, sup_inner={sup_inner:.6g}, sup_outer={sup_outer:.6g})")
        if not success:
            logger.warning(f"Doubling ratio {ratio:.6g} exceeds C exp(C Gamma^6)")
        return DoublingReport(
            sup_inner=sup_inner,
            sup_outer=sup_outer,
            ratio=ratio,
            Gamma=G,
            paper_bound=bound,
            log_paper_bound=log_bound,
            fitted_constant=fitted_constant(ratio, G),
            max_P_location=location,
            max_P_point=point,
            P_max=float(P.values[flat]),
            conditions=ledger,
            success=success,
        )


def guanqiu_P(u: GridFunction, cfg: DoublingConfig) -> GridFunction:
    return DoublingService().guanqiu_P(u, cfg)


def doubling_ratio(u: GridFunction, cfg: DoublingConfig) -> DoublingReport:
    return DoublingService().doubling_ratio(u, cfg)
