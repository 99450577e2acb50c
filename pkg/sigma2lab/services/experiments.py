"""
Experiment pipelines behind the CLI subcommands.

Each pipeline takes a resolved RunConfig and returns an ExperimentReport whose
``violations`` count drives the exit code.
"""

import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from sigma2lab.config.settings import Settings, get_settings
from sigma2lab.exceptions import ConfigurationError
from sigma2lab.schemas.grid_schemas import GridFunction, RHSSpec
from sigma2lab.schemas.lab_schemas import ExperimentReport, RunConfig, Subcommand
from sigma2lab.services.cone_algebra import lemma_experiment, polynomial_scan
from sigma2lab.services.doubling import DoublingService
from sigma2lab.services.grid_io import read_grid, write_grid
from sigma2lab.services.jacobi import JacobiService, qform_verify
from sigma2lab.services.manufactured import SOLVER_CASES, get_case, manufactured_case
from sigma2lab.services.potential import PotentialService, constant_density, wolff_closed_form
from sigma2lab.services.solver import NewtonSolver
from sigma2lab.services.stencils import laplacian

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Runs one subcommand pipeline per call."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self.solver = NewtonSolver(self.settings)
        self.jacobi = JacobiService(self.settings)
        self.doubling = DoublingService(self.settings)
        self.potential = PotentialService(self.settings)
        self._pipelines: Dict[Subcommand, Callable[[RunConfig], ExperimentReport]] = {
            Subcommand.LEMMAS: self.run_lemmas,
            Subcommand.POLYSCAN: self.run_polyscan,
            Subcommand.QFORM: self.run_qform,
            Subcommand.SOLVE: self.run_solve,
            Subcommand.JACOBI: self.run_jacobi,
            Subcommand.DOUBLING: self.run_doubling,
            Subcommand.WOLFF: self.run_wolff,
            Subcommand.SEMINORMS: self.run_seminorms,
            Subcommand.HARNACK: self.run_harnack,
            Subcommand.OSCILLATION: self.run_oscillation,
        }

    def run(self, cfg: RunConfig) -> ExperimentReport:
        logger.info(f"Running {cfg.subcommand.value} n={cfg.n} m={cfg.m} seed={cfg.seed} case={cfg.case}")
        return self._pipelines[cfg.subcommand](cfg)

    # ------------------------------------------------------------------
    # Fields
    # ------------------------------------------------------------------

    def _field(self, cfg: RunConfig, solve: bool) -> Tuple[GridFunction, RHSSpec]:
        """Grid function for a run: the --grid-in file, a Newton solve, or the sampled exact solution."""
        case = get_case(cfg.case)
        rhs = case.rhs()
        if cfg.grid_in:
            u = read_grid(cfg.grid_in)
            logger.info(f"Loaded grid function from {cfg.grid_in} (n={u.n}, m={u.m})")
        elif solve and cfg.case in SOLVER_CASES:
            exact, rhs, boundary, init = manufactured_case(cfg.case, cfg.n, cfg.m, cfg.radius)
            u = self.solver.solve(rhs, boundary, init).u
        else:
            u = case.sample(cfg.n, cfg.m, cfg.radius)
        if cfg.grid_out:
            write_grid(cfg.grid_out, u)
        return u, rhs

    def _small_radii(self, u: GridFunction, fractions) -> np.ndarray:
        """Radii spread over [2h, R/10] so that every ball mask holds more than one node."""
        r_min, r_max = 2.0 * u.h, u.radius / 10.0
        if r_min >= r_max:
            raise ConfigurationError(
                f"2h = {r_min:.4g} does not fit under R/10 = {r_max:.4g}; small-ball runs need m >= 43"
            )
        return r_min + (r_max - r_min) * np.asarray(fractions, dtype=float)

    # ------------------------------------------------------------------
    # Cone algebra
    # ------------------------------------------------------------------

    def run_lemmas(self, cfg: RunConfig) -> ExperimentReport:
        return lemma_experiment(cfg.n, cfg.samples, cfg.seed)

    def run_polyscan(self, cfg: RunConfig) -> ExperimentReport:
        return polynomial_scan(cfg.n, cfg.grid, cfg.theta)

    def run_qform(self, cfg: RunConfig) -> ExperimentReport:
        return qform_verify(
            cfg.n,
            cfg.samples,
            cfg.seed,
            admit_violations=bool(cfg.get("control", 0.0)),
            theta_scale=cfg.get("theta_scale", 1.0),
            settings=self.settings,
        )

    # ------------------------------------------------------------------
    # Solver and Jacobi
    # ------------------------------------------------------------------

    def run_solve(self, cfg: RunConfig) -> ExperimentReport:
        exact, rhs, boundary, init = manufactured_case(cfg.case, cfg.n, cfg.m, cfg.radius)
        outcome = self.solver.solve(rhs, boundary, init)
        if cfg.grid_out:
            write_grid(cfg.grid_out, outcome.u)
        error = float(np.max(np.abs(outcome.u.values - exact.values)))
        steps = [math.nan] + list(outcome.damping_history)
        table = pd.DataFrame(
            {
                "pass": np.arange(1, len(outcome.residual_history) + 1),
                "residual": outcome.residual_history,
                "damping": steps[: len(outcome.residual_history)],
            }
        )
        ok = outcome.final_residual <= outcome.tolerance and outcome.admissible
        summary = {
            "case": cfg.case,
            "n": cfg.n,
            "m": cfg.m,
            "h": exact.h,
            "iterations": outcome.iterations,
            "final_residual": outcome.final_residual,
            "tolerance": outcome.tolerance,
            "max_error": error,
        }
        return ExperimentReport(name="solve", table=table, summary=summary, violations=0 if ok else 1, success=ok)

    def run_jacobi(self, cfg: RunConfig) -> ExperimentReport:
        u, rhs = self._field(cfg, solve=True)
        eps_scale = cfg.get("epsilon_scale", 1.0)
        C = cfg.overrides.get("C")
        control = bool(cfg.get("control", 0.0))
        if control:
            # C may be negative; at the node attaining it the scaled residual is
            # -(scale - 1) eps |grad_F b|^2 for either sign of C
            C = self.jacobi.jacobi_residual(u, rhs).minimal_constant
            eps_scale = cfg.get("epsilon_scale", 10.0)
        report = self.jacobi.jacobi_residual(u, rhs, C=C, epsilon_scale=eps_scale)
        negative = int(np.count_nonzero(report.residual < 0))
        violations = (0 if negative else 1) if control else negative
        summary = {
            "case": cfg.case,
            "n": u.n,
            "m": u.m,
            "h": report.h,
            "C": report.constant_C,
            "Gamma": report.Gamma,
            "epsilon_scale": report.epsilon_scale,
            "control": control,
            "min_residual": report.min_residual,
            "minimal_constant": report.minimal_constant,
            "floor_constant": report.floor_constant,
            "negative_nodes": negative,
            "identity_defect": self.jacobi.linearized_identity_defect(u, rhs),
        }
        return ExperimentReport(
            name="jacobi", table=report.to_frame(), summary=summary, violations=violations, success=violations == 0
        )

    # ------------------------------------------------------------------
    # Doubling
    # ------------------------------------------------------------------

    def run_doubling(self, cfg: RunConfig) -> ExperimentReport:
        u, _ = self._field(cfg, solve=True)
        dcfg = self.doubling.default_config(
            u,
            constant_C=cfg.get("C", self.settings.doubling_constant),
            r_inner=cfg.get("r_inner", 1.0),
            r_outer=cfg.get("r_outer", 2.0),
        )
        rep = self.doubling.doubling_ratio(u, dcfg)
        row = {
            "sup_inner": rep.sup_inner,
            "sup_outer": rep.sup_outer,
            "ratio": rep.ratio,
            "Gamma": rep.Gamma,
            "log_bound": rep.log_paper_bound,
            "fitted_C": rep.fitted_constant,
            "P_max": rep.P_max,
            **{f"x{k + 1}_P_max": v for k, v in enumerate(rep.max_P_point)},
            **{name: ok for name, ok in rep.conditions.items()},
        }
        failed = sum(1 for ok in rep.conditions.values() if not ok) + (0 if rep.success else 1)
        summary = {
            "case": cfg.case,
            "n": u.n,
            "m": u.m,
            "alpha": dcfg.alpha,
            "beta": dcfg.beta,
            "gamma": dcfg.gamma,
            "ratio": rep.ratio,
            "fitted_C": rep.fitted_constant,
        }
        return ExperimentReport(name="doubling", table=pd.DataFrame([row]), summary=summary, violations=failed, success=failed == 0)

    # ------------------------------------------------------------------
    # Potential theory
    # ------------------------------------------------------------------

    def run_wolff(self, cfg: RunConfig) -> ExperimentReport:
        u, _ = self._field(cfg, solve=False)
        c = cfg.get("density", 1.0)
        mu_const = constant_density(u.n, c)
        mu_grid = self.potential.hessian_measure(u)
        center = u.center
        radii = u.radius * np.array([0.125, 0.25, 0.5, 1.0])
        w_const = np.array([self.potential.wolff_potential(mu_const, center, r) for r in radii])
        exact = np.array([wolff_closed_form(c, u.n, r) for r in radii])
        w_grid = np.array([self.potential.wolff_potential(mu_grid, center, r) for r in radii])
        rel = np.abs(w_const - exact) / np.maximum(exact, np.finfo(float).tiny)
        table = pd.DataFrame(
            {"r": radii, "W_constant": w_const, "closed_form": exact, "rel_error": rel, "W_hessian_measure": w_grid}
        )
        bad = int(np.count_nonzero(rel > 1e-8))
        bad += int(np.count_nonzero(np.diff(w_const) < 0)) + int(np.count_nonzero(np.diff(w_grid) < 0))
        labutin = self.potential.labutin_constants(u, mu_grid, u.radius / 2.0)
        summary = {
            "n": u.n,
            "m": u.m,
            "density": c,
            "max_rel_error": float(np.max(rel)),
            "labutin_C1": labutin["C1"],
            "labutin_C2": labutin["C2"],
        }
        return ExperimentReport(name="wolff", table=table, summary=summary, violations=bad, success=bad == 0)

    def run_seminorms(self, cfg: RunConfig) -> ExperimentReport:
        u, _ = self._field(cfg, solve=False)
        gamma = cfg.get("gamma", 0.5)
        R = cfg.get("R", u.radius)
        report = self.potential.interpolation_check(u, gamma, R)
        report.summary["holder_estimate_C"] = self.potential.holder_estimate_constant(u, gamma, R)
        report.summary["case"] = cfg.case
        return report

    def run_harnack(self, cfg: RunConfig) -> ExperimentReport:
        u, _ = self._field(cfg, solve=True)
        C1 = cfg.get("C1", 2.0)
        lap = laplacian(u.array(), u.h, depth=1)
        C2 = cfg.get("C2", 2.0 * float(np.max(lap)))
        f_sup = float(np.max(self.solver.discrete_sigma2(u)))
        rows = []
        for r in self._small_radii(u, (0.0, 1.0 / 3.0, 2.0 / 3.0, 0.95)):
            r = float(r)
            rep = self.potential.harnack_check(u, f_sup, r, C1, C2)
            rows.append(
                {"r": r, "sup": rep.sup, "inf": rep.inf, "holds": rep.holds, "c1_fit": rep.c1_fit, "c2_fit": rep.c2_fit}
            )
        table = pd.DataFrame(rows)
        bad = int(np.count_nonzero(~table["holds"].to_numpy(dtype=bool)))
        summary = {"case": cfg.case, "n": u.n, "m": u.m, "C1": C1, "C2": C2, "max_c2_fit": float(table["c2_fit"].max())}
        return ExperimentReport(name="harnack", table=table, summary=summary, violations=bad, success=bad == 0)

    def run_oscillation(self, cfg: RunConfig) -> ExperimentReport:
        u, _ = self._field(cfg, solve=True)
        radii = self._small_radii(u, (0.0, 0.25, 0.5, 0.75, 0.95))
        rep = self.potential.oscillation_decay(u, None, radii)
        table = pd.DataFrame(
            {"r": rep.radii, "omega": rep.omega, "omega_10r": rep.omega_outer, "satisfied": rep.satisfied}
        )
        bad = int(np.count_nonzero(~rep.satisfied))
        summary = {"case": cfg.case, "n": u.n, "m": u.m, "theta": rep.theta, "C": rep.C, "exponent": rep.exponent}
        return ExperimentReport(name="oscillation", table=table, summary=summary, violations=bad, success=bad == 0)


def run_experiment(cfg: RunConfig, settings: Optional[Settings] = None) -> ExperimentReport:
    return ExperimentRunner(settings).run(cfg)
