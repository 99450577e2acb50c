"""
Potential-theoretic measurements on 2-convex grid functions: Wolff potentials of
density measures, Harnack-type sup/inf control, distance-weighted Hoelder
seminorms, the interpolation inequality and oscillation decay.
"""

import logging
import math
from typing import Dict, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import gamma as gamma_fn

from sigma2lab.config.settings import Settings, get_settings
from sigma2lab.exceptions import (
    AdmissibilityError,
    DomainError,
    ParameterError,
    UnsupportedDimensionError,
)
from sigma2lab.schemas.grid_schemas import GridFunction
from sigma2lab.schemas.lab_schemas import (
    DensityKind,
    DensityMeasure,
    ExperimentReport,
    HarnackReport,
    OscillationReport,
    SeminormReport,
)
from sigma2lab.services.rng import STREAM_SEMINORM_PAIRS, make_rng
from sigma2lab.services.solver import NewtonSolver

logger = logging.getLogger(__name__)

# pair rows evaluated per block in the all-pairs seminorm
_PAIR_BLOCK = 1 << 20


def ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    if n < 1:
        raise ParameterError(f"dimension must be positive, got {n}")
    return float(math.pi ** (n / 2.0) / gamma_fn(n / 2.0 + 1.0))


def wolff_closed_form(c: float, n: int, r: float) -> float:
    """W(x, r) of the constant density c: (c w_n)^(1/2) r^2 / 2."""
    return math.sqrt(c * ball_volume(n)) * r * r / 2.0


def wolff_upper_bound(n: int, f_sup: float, r: float) -> float:
    """Bound on W(x, 4r) for densities below f_sup."""
    return 8.0 * math.sqrt(ball_volume(n) * f_sup) * r * r


def constant_density(n: int, c: float) -> DensityMeasure:
    return DensityMeasure(kind=DensityKind.CONSTANT, n=n, constant=c)


def radial_density(n: int, radii: Sequence[float], profile: Sequence[float]) -> DensityMeasure:
    return DensityMeasure(
        kind=DensityKind.RADIAL, n=n,
        radii=np.asarray(radii, dtype=float), profile=np.asarray(profile, dtype=float),
    )


def _radial_mass(mu: DensityMeasure, t: np.ndarray) -> np.ndarray:
    """n w_n int_0^t rho(s) s^(n-1) ds with rho piecewise linear, constant past the last knot."""
    n = mu.n
    knots = np.append(np.asarray(mu.radii, dtype=float), np.inf)
    prof = np.asarray(mu.profile, dtype=float)
    lo, hi = knots[:-1], knots[1:]
    slope = np.zeros_like(prof)
    slope[:-1] = np.diff(prof) / np.diff(lo)
    offset = prof - slope * lo
    s0 = np.minimum(lo[None, :], t[:, None])
    s1 = np.minimum(hi[None, :], t[:, None])
    part = (
        offset * (s1 ** n - s0 ** n) / n
        + slope * (s1 ** (n + 1) - s0 ** (n + 1)) / (n + 1)
    )
    return n * ball_volume(n) * np.sum(part, axis=1)


def _grid_mass(mu: DensityMeasure, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Cell counting: a node contributes density * h^n when it lies within t of x."""
    grid = mu.grid
    dist = np.linalg.norm(grid.points().reshape(-1, grid.n) - x, axis=1)
    order = np.argsort(dist, kind="stable")
    weights = np.cumsum(grid.values[order]) * grid.h ** grid.n
    count = np.searchsorted(dist[order], t, side="right")
    out = np.zeros_like(t)
    hit = count > 0
    out[hit] = weights[count[hit] - 1]
    return out


def mass_in_ball(mu: DensityMeasure, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """mu(B_t(x)) for an array of radii."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if mu.kind == DensityKind.CONSTANT:
        return mu.constant * ball_volume(mu.n) * t ** mu.n
    if mu.kind == DensityKind.RADIAL:
        if np.linalg.norm(x) > 1e-12:
            raise ParameterError("radial densities are evaluated at their center only")
        return _radial_mass(mu, t)
    return _grid_mass(mu, x, t)


class PotentialService:
    """Wolff potentials, Harnack and Hoelder measurements."""

    def __init__(self, settings: Optional[Settings] = None):
        """Initialize the service with laboratory settings."""
        self.settings = settings or get_settings()
        self.solver = NewtonSolver(self.settings)

    # ------------------------------------------------------------------
    # Wolff potentials
    # ------------------------------------------------------------------

    def wolff_potential(self, mu: DensityMeasure, x: np.ndarray, r: float, steps: Optional[int] = None) -> float:
        """W(x, r) = int_0^r (mu(B_t(x)) / t^(n-4))^(1/2) dt / t by the midpoint rule in log t."""
        steps = self.settings.wolff_steps if steps is None else steps
        if mu.n < 4:
            raise UnsupportedDimensionError(f"Wolff potentials need n >= 4, got n={mu.n}")
        if r <= 0:
            raise ParameterError(f"radius must be positive, got {r}")
        if steps < 100:
            raise ParameterError(f"quadrature needs at least 100 steps, got {steps}")
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != mu.n:
            raise ParameterError(f"point has {x.size} coordinates, expected {mu.n}")
        s_lo = math.log(r * self.settings.wolff_cutoff_ratio)
        s_hi = math.log(r)
        ds = (s_hi - s_lo) / steps
        t = np.exp(s_lo + ds * (np.arange(steps) + 0.5))
        mass = np.maximum(mass_in_ball(mu, x, t), 0.0)
        integrand = np.sqrt(mass / t ** (mu.n - 4))
        return float(np.sum(integrand) * ds)

    def hessian_measure(self, u: GridFunction) -> DensityMeasure:
        """Grid density sigma_2(D^2_h u), clipped at zero, on the depth-1 nodes."""
        s2 = np.maximum(self.solver.discrete_sigma2(u), 0.0)
        dens = np.zeros(u.shape)
        dens[(slice(1, u.m - 1),) * u.n] = s2.reshape((u.m - 2,) * u.n)
        return DensityMeasure(kind=DensityKind.GRID, n=u.n, grid=u.with_values(dens))

    def labutin_constants(self, u: GridFunction, mu: DensityMeasure, R: float) -> Dict[str, float]:
        """Fitted constants of the two-sided bound C1 W(0, R/8) <= u(0) <= C2 W(0, 2R) + inf_{B_R} u."""
        origin = u.center
        u0 = float(u.array()[(u.m // 2,) * u.n])
        inf = float(np.min(u.values[u.ball_mask(R, origin).reshape(-1)]))
        w_small = self.wolff_potential(mu, origin, R / 8.0)
        w_large = self.wolff_potential(mu, origin, 2.0 * R)
        return {
            "u0": u0,
            "inf": inf,
            "W_small": w_small,
            "W_large": w_large,
            "C1": u0 / w_small if w_small > 0 else math.inf,
            "C2": (u0 - inf) / w_large if w_large > 0 else math.inf,
        }

    # ------------------------------------------------------------------
    # Harnack and oscillation
    # ------------------------------------------------------------------

    def _require_two_convex(self, u: GridFunction) -> None:
        scan = self.solver.admissibility_scan(u)
        if not scan.weakly_admissible:
            raise AdmissibilityError("grid function is not 2-convex", node=scan.first_bad_node)

    def _center(self, u: GridFunction, x: Optional[np.ndarray]) -> np.ndarray:
        return u.center if x is None else np.asarray(x, dtype=float).reshape(-1)

    def harnack_check(
        self,
        u: GridFunction,
        rhs_sup: float,
        r: float,
        C1: float,
        C2: float,
        center: Optional[np.ndarray] = None,
    ) -> HarnackReport:
        """sup_{B_r} u <= C1 inf_{B_r} u + C2 r^2 on the ball mask around ``center``."""
        if np.any(u.values < 0):
            raise DomainError(f"Harnack estimates need u >= 0, min is {float(np.min(u.values)):.6g}")
        if not 0 < r < u.radius / 10.0:
            raise ParameterError(f"need 0 < r < R/10 = {u.radius / 10.0:.6g}, got {r}")
        c = self._center(u, center)
        if np.linalg.norm(c - u.center) + r > u.radius:
            raise ParameterError("ball leaves the grid")
        self._require_two_convex(u)
        vals = u.values[u.ball_mask(r, c).reshape(-1)]
        sup, inf = float(np.max(vals)), float(np.min(vals))
        holds = sup <= C1 * inf + C2 * r * r + self.settings.inequality_slack * max(1.0, abs(sup))
        wolff = wolff_upper_bound(u.n, rhs_sup, r) if u.n >= 4 and rhs_sup >= 0 else None
        return HarnackReport(
            sup=sup,
            inf=inf,
            r=r,
            C1=C1,
            C2=C2,
            holds=bool(holds),
            c1_fit=sup / inf if inf > 0 else math.inf,
            c2_fit=max(0.0, (sup - C1 * inf) / (r * r)),
            wolff_bound=wolff,
        )

    def oscillation_decay(self, u: GridFunction, x: Optional[np.ndarray], radii: Iterable[float]) -> OscillationReport:
        """omega_r <= theta omega_10r + C r^2 with theta and C fitted over the radii."""
        radii = np.asarray(list(radii), dtype=float)
        c = self._center(u, x)
        offset = float(np.linalg.norm(c - u.center))
        if radii.size == 0 or np.any(radii <= 0) or np.any(offset + 10.0 * radii > u.radius):
            raise ParameterError(f"radii must be positive with 10r inside the grid (radius {u.radius:.6g})")
        self._require_two_convex(u)

        def omega(r: float) -> float:
            vals = u.values[u.ball_mask(r, c).reshape(-1)]
            return float(np.max(vals) - np.min(vals))

        om = np.array([omega(r) for r in radii])
        outer = np.array([omega(10.0 * r) for r in radii])
        pos = outer > 0
        theta = min(float(np.max(om[pos] / outer[pos])), self.settings.oscillation_theta_cap) if np.any(pos) else 0.0
        C = max(0.0, float(np.max((om - theta * outer) / radii ** 2)))
        satisfied = om <= theta * outer + C * radii ** 2 + self.settings.inequality_slack
        exponent = None
        live = om > 0
        if np.count_nonzero(live) >= 2:
            exponent = float(np.polyfit(np.log(radii[live]), np.log(om[live]), 1)[0])
        logger.info(f"Oscillation decay: theta={theta:.4g} C={C:.4g} exponent={exponent}")
        return OscillationReport(
            radii=radii, omega=om, omega_outer=outer, theta=theta, C=C,
            satisfied=satisfied, exponent=exponent,
        )

    # ------------------------------------------------------------------
    # Weighted seminorms
    # ------------------------------------------------------------------

    def weighted_seminorms(
        self, u: GridFunction, gamma: float, R: float, seed: Optional[int] = None
    ) -> SeminormReport:
        """Distance-weighted sup norm and Hoelder seminorm over nodes with |x| < R."""
        if not 0 < gamma <= 1:
            raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
        if not 0 < R <= u.radius:
            raise ParameterError(f"R must lie in (0, {u.radius:.6g}], got {R}")
        n = u.n
        x = u.points().reshape(-1, n) - u.center
        dist = np.linalg.norm(x, axis=1)
        inside = dist < R
        x, vals, d = x[inside], u.values[inside], R - dist[inside]
        N = vals.size
        weighted_sup = float(np.max(d ** n * np.abs(vals)))
        l1 = float(np.sum(np.abs(vals)) * u.h ** n)

        def pair_terms(i: np.ndarray, j: np.ndarray) -> np.ndarray:
            sep = np.linalg.norm(x[i] - x[j], axis=-1)
            dxy = np.minimum(d[i], d[j])
            out = np.zeros(sep.shape)
            ok = sep > 0
            out[ok] = dxy[ok] ** (n + gamma) * np.abs(vals[i] - vals[j])[ok] / sep[ok] ** gamma
            return out

        sampled = N > self.settings.seminorm_node_cap
        if sampled:
            seed = self.settings.default_seed if seed is None else seed
            rng = make_rng(seed, STREAM_SEMINORM_PAIRS)
            count = self.settings.seminorm_pair_samples
            i = rng.integers(0, N, size=count)
            j = rng.integers(0, N, size=count)
            keep = i != j
            holder = float(np.max(pair_terms(i[keep], j[keep]), initial=0.0))
            pairs = int(np.count_nonzero(keep))
            logger.info(f"Seminorms sampled {pairs} pairs of {N} nodes (seed={seed})")
        else:
            seed = None
            holder = 0.0
            block = max(1, _PAIR_BLOCK // max(N, 1))
            cols = np.arange(N)
            for start in range(0, N, block):
                rows = np.arange(start, min(start + block, N))
                holder = max(holder, float(np.max(pair_terms(rows[:, None], cols[None, :]), initial=0.0)))
            pairs = N * (N - 1) // 2
        return SeminormReport(
            weighted_sup=weighted_sup,
            weighted_holder=holder,
            gamma=gamma,
            R=R,
            nodes=N,
            pairs=pairs,
            sampled=sampled,
            seed=seed,
            l1_norm=l1,
        )

    def interpolation_check(
        self, u: GridFunction, gamma: float, R: float, eps_list: Sequence[float] = (0.01, 0.1, 1.0)
    ) -> ExperimentReport:
        """Smallest C(n) with |u|^(n) <= eps^gamma [u]^(n) + C eps^(-n) int|u| for each eps."""
        rep = self.weighted_seminorms(u, gamma, R)
        n = u.n
        rows = []
        for eps in eps_list:
            if eps <= 0:
                raise ParameterError(f"epsilon must be positive, got {eps}")
            holder_term = eps ** gamma * rep.weighted_holder
            excess = rep.weighted_sup - holder_term
            if excess <= 0:
                fitted = 0.0
            elif rep.l1_norm > 0:
                fitted = excess * eps ** n / rep.l1_norm
            else:
                fitted = math.inf
            rows.append({
                "epsilon": eps,
                "weighted_sup": rep.weighted_sup,
                "holder_term": holder_term,
                "l1_norm": rep.l1_norm,
                "fitted_C": fitted,
            })
        table = pd.DataFrame(rows)
        worst = float(table["fitted_C"].max())
        return ExperimentReport(
            name="interpolation",
            table=table,
            summary={"n": n, "gamma": gamma, "R": R, "max_fitted_C": worst, "pairs": rep.pairs},
            violations=0 if math.isfinite(worst) else 1,
            success=math.isfinite(worst),
        )

    def holder_estimate_constant(self, u: GridFunction, gamma: float, R: float) -> float:
        """[u]^(n) / (int_{B_R}|u| + R^(n+2))."""
        rep = self.weighted_seminorms(u, gamma, R)
        return rep.weighted_holder / (rep.l1_norm + R ** (u.n + 2))


def wolff_potential(mu: DensityMeasure, x: np.ndarray, r: float, steps: Optional[int] = None) -> float:
    return PotentialService().wolff_potential(mu, x, r, steps)


def harnack_check(u: GridFunction, rhs_sup: float, r: float, C1: float, C2: float) -> HarnackReport:
    return PotentialService().harnack_check(u, rhs_sup, r, C1, C2)


def weighted_seminorms(u: GridFunction, gamma: float, R: float) -> SeminormReport:
    return PotentialService().weighted_seminorms(u, gamma, R)


def oscillation_decay(u: GridFunction, x: Optional[np.ndarray], radii: Iterable[float]) -> OscillationReport:
    return PotentialService().oscillation_decay(u, x, radii)
