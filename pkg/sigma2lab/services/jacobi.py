"""
Almost Jacobi inequality on grid functions.

With b = log(Laplacian u) and F = Laplacian(u) I - D^2 u, measures node-wise

    Delta_F b - eps |grad_F b|^2 - sum_i f_{p_i} b_i + C Gamma^2 (1 + Laplacian u)

at depth-2 nodes, and verifies the restricted quadratic form behind the
inequality on sampled spectra.
"""

import logging
from typing import Dict, Optional

import numpy as np
import pandas as pd

from sigma2lab.config.settings import Settings, get_settings
from sigma2lab.exceptions import AdmissibilityError, ParameterError, UnsupportedDimensionError
from sigma2lab.schemas.grid_schemas import GridFunction, RHSSpec
from sigma2lab.schemas.lab_schemas import ExperimentReport, JacobiReport, QFormInstance, Spectrum
from sigma2lab.services.cone_algebra import (
    dynamic_cn,
    epsilon_jacobi_batch,
    gamma2_mask,
    sample_gamma2,
    sigma_k_batch,
)
from sigma2lab.services.rng import STREAM_QFORM, make_rng
from sigma2lab.services.stencils import (
    gradient_stack,
    hessian_stack,
    symmetric_eigenvalues,
    third_stack,
)

logger = logging.getLogger(__name__)


def _inner_block(field: np.ndarray, m_inner: int, n: int) -> np.ndarray:
    """Drop one more boundary layer from a depth-1 node field of shape (N1, ...)."""
    shaped = field.reshape((m_inner,) * n + field.shape[1:])
    return shaped[(slice(1, m_inner - 1),) * n].reshape((-1,) + field.shape[1:])


class JacobiService:
    """Discrete geometry of b = log Laplacian on grid functions."""

    def __init__(self, settings: Optional[Settings] = None):
        """Initialize the service with laboratory settings."""
        self.settings = settings or get_settings()

    def _admissible_hessians(self, u: GridFunction):
        hess = hessian_stack(u.array(), u.h, depth=1)
        eig = symmetric_eigenvalues(hess, self.settings.rotation_sweeps)
        _, _, inside = gamma2_mask(eig, self.settings.cone_boundary_tol)
        if not np.all(inside):
            node = u.node_index(int(np.argmin(inside)), depth=1)
            raise AdmissibilityError(f"grid function is not admissible at node {node}", node=node)
        return hess, eig

    def log_laplacian_field(self, u: GridFunction) -> GridFunction:
        """b = log(Laplacian_h u) at depth-1 nodes; the boundary layer is nan."""
        lap = np.trace(hessian_stack(u.array(), u.h, depth=1), axis1=-2, axis2=-1)
        if np.any(lap <= 0.0):
            node = u.node_index(int(np.argmin(lap)), depth=1)
            raise AdmissibilityError(f"Laplacian {float(np.min(lap)):.6g} <= 0 at node {node}", node=node)
        out = np.full(u.shape, np.nan)
        out[(slice(1, u.m - 1),) * u.n] = np.log(lap).reshape((u.m - 2,) * u.n)
        return u.with_values(out)

    def third_derivatives(self, u: GridFunction) -> np.ndarray:
        """Symmetric third differences u_ijk at depth-2 nodes, shape (N, n, n, n)."""
        return third_stack(u.array(), u.h)

    def _rhs_at(self, u: GridFunction, depth: int):
        x = u.points(depth).reshape(-1, u.n)
        z = u.interior(depth).reshape(-1)
        p = gradient_stack(u.array(), u.h, depth=depth)
        return x, z, p

    def _grad_p(self, f_spec: RHSSpec, x, z, p) -> np.ndarray:
        if f_spec.analytic_p:
            return f_spec.grad_p(x, z, p)
        step = self.settings.fp_difference_step
        cols = []
        for k in range(p.shape[-1]):
            dp = np.zeros_like(p)
            dp[:, k] = step
            cols.append((f_spec.evaluate(x, z, p + dp) - f_spec.evaluate(x, z, p - dp)) / (2.0 * step))
        return np.stack(cols, axis=-1)

    def linearized_identity_defect(self, u: GridFunction, f_spec: RHSSpec) -> float:
        """max over depth-2 nodes and k of |sum_ij F_ij u_ijk - d_k f(x, u, Du)|."""
        n, m = u.n, u.m
        hess1 = hessian_stack(u.array(), u.h, depth=1)
        hess2 = _inner_block(hess1, m - 2, n)
        lap2 = np.trace(hess2, axis1=-2, axis2=-1)
        F = lap2[:, None, None] * np.eye(n) - hess2
        lhs = np.einsum("kij,kijl->kl", F, self.third_derivatives(u))
        fvals = f_spec.evaluate(*self._rhs_at(u, 1)).reshape((m - 2,) * n)
        dk = gradient_stack(fvals, u.h, depth=1)
        return float(np.max(np.abs(lhs - dk)))

    def _default_constant(self, u: GridFunction, f_spec: RHSSpec) -> float:
        fvals = f_spec.evaluate(*self._rhs_at(u, 1)).reshape((u.m - 2,) * u.n)
        proxy = max(
            float(np.max(np.abs(gradient_stack(fvals, u.h, depth=1)))),
            float(np.max(np.abs(hessian_stack(fvals, u.h, depth=1)))),
        )
        return 10.0 * (1.0 + proxy)

    def jacobi_residual(
        self,
        u: GridFunction,
        f_spec: RHSSpec,
        C: Optional[float] = None,
        epsilon_scale: float = 1.0,
    ) -> JacobiReport:
        """Node-wise almost Jacobi residual at depth-2 nodes.

        ``C`` defaults to 10 (1 + max finite-difference first and second
        derivative of f along u); ``epsilon_scale`` multiplies epsilon.
        """
        n, m, h = u.n, u.m, u.h
        if n < 4:
            raise UnsupportedDimensionError(f"the almost Jacobi inequality is stated for n >= 4, got n = {n}")
        if m < 7:
            raise ParameterError(f"depth-2 stencils need m >= 7, got {m}")
        hess1, eig1 = self._admissible_hessians(u)
        lap1 = np.trace(hess1, axis1=-2, axis2=-1)
        b = np.log(lap1).reshape((m - 2,) * n)

        b_grad = gradient_stack(b, h, depth=1)
        b_hess = hessian_stack(b, h, depth=1)
        hess2 = _inner_block(hess1, m - 2, n)
        eig2 = _inner_block(eig1, m - 2, n)
        lap2 = np.trace(hess2, axis1=-2, axis2=-1)
        F = lap2[:, None, None] * np.eye(n) - hess2

        delta_F_b = np.sum(F * b_hess, axis=(-2, -1))
        grad_F_b_sq = np.einsum("ki,kij,kj->k", b_grad, F, b_grad)
        eps = epsilon_scale * epsilon_jacobi_batch(n, eig2[:, -1] / lap2)

        x2, z2, p2 = self._rhs_at(u, 2)
        drift = np.sum(self._grad_p(f_spec, x2, z2, p2) * b_grad, axis=-1)

        du = gradient_stack(u.array(), h, depth=1)
        Gamma = float(np.max(np.abs(u.values)) + np.max(np.linalg.norm(du, axis=-1)) + 1.0)
        C = self._default_constant(u, f_spec) if C is None else float(C)
        weight = Gamma * Gamma * (1.0 + lap2)
        core = delta_F_b - eps * grad_F_b_sq - drift
        remainder = C * weight
        residual = core + remainder
        min_res = float(np.min(residual))
        logger.info(
            f"Jacobi residual n={n} m={m}: min {min_res:.3e}, C={C:.4g}, Gamma={Gamma:.4g}, eps scale {epsilon_scale}"
        )
        return JacobiReport(
            points=x2,
            delta_F_b=delta_F_b,
            grad_F_b_sq=grad_F_b_sq,
            epsilon=eps,
            drift_term=drift,
            remainder=remainder,
            residual=residual,
            constant_C=C,
            Gamma=Gamma,
            h=h,
            epsilon_scale=epsilon_scale,
            min_residual=min_res,
            minimal_constant=float(np.max(-core / weight)),
            floor_constant=max(0.0, -min_res) / (h * h),
        )


# ---------------------------------------------------------------------------
# Restricted quadratic form
# ---------------------------------------------------------------------------

def _qform_batch(spectra: np.ndarray, index: np.ndarray, theta_scale: float = 1.0, clamp: bool = False) -> Dict[str, np.ndarray]:
    """Closed-form pieces of the restricted form for rows of ``spectra`` (sorted descending)."""
    count, n = spectra.shape
    f = sigma_k_batch(spectra, 2)
    s1 = np.sum(spectra, axis=1)
    DF = s1[:, None] - spectra
    DF2 = np.sum(DF * DF, axis=1)
    rows = np.arange(count)
    Fii = DF[rows, index]
    E = -(Fii / DF2)[:, None] * DF
    E[rows, index] += 1.0
    L = 1.0 - ((n - 1) * s1 / DF2)[:, None] * DF
    EE = 1.0 - Fii * Fii / DF2
    LL = 1.0 - 2.0 * (n - 1) * f / DF2
    EL = 1.0 - (n - 1) * Fii * s1 / DF2
    ratio = spectra[:, -1] / s1
    eps = epsilon_jacobi_batch(n, ratio, clamp=clamp)
    delta = 1.0 + eps
    eta = 1.0 + delta * Fii / s1
    theta = theta_scale * np.minimum(0.01, (n - 1) * f / (9.0 * DF2))
    beta = 1.0 + theta
    trace = 6.0 - 2.0 * beta * EE - eta * beta * LL
    det = (3.0 - 2.0 * beta * EE) * (3.0 - eta * beta * LL) - 2.0 * eta * beta * beta * EL * EL
    identity = np.max(
        np.abs(
            np.stack(
                [
                    np.sum(E * E, axis=1) - EE,
                    np.sum(L * L, axis=1) - LL,
                    np.sum(E * L, axis=1) - EL,
                    DF2 - ((n - 1) * s1 * s1 - 2.0 * f),
                ]
            )
        ),
        axis=0,
    )
    return {
        "f": f, "s1": s1, "DF": DF, "DF2": DF2, "E": E, "L": L, "ratio": ratio, "epsilon": eps,
        "theta": theta, "beta": beta, "eta": eta, "trace": trace, "det": det, "identity": identity,
    }


def qform_instance(lam: Spectrum, i: int, theta_scale: float = 1.0) -> QFormInstance:
    """Restricted form at one spectrum, with f = sigma_2(lambda) and 0-based index ``i``.

    Raises DomainError when lambda_min / sigma_1 lies below the dynamic floor.
    """
    if lam.n < 4:
        raise UnsupportedDimensionError(f"the restricted form is built for n >= 4, got n = {lam.n}")
    if not 0 <= i < lam.n:
        raise ParameterError(f"index {i} out of range for n = {lam.n}")
    if not gamma2_mask(lam.values)[2]:
        raise ParameterError(f"spectrum {lam.values.tolist()} is not in Gamma_2")
    parts = _qform_batch(lam.values[None, :], np.array([i]), theta_scale)
    return QFormInstance(
        E=parts["E"][0],
        L=parts["L"][0],
        DF=parts["DF"][0],
        epsilon=float(parts["epsilon"][0]),
        theta=float(parts["theta"][0]),
        beta=float(parts["beta"][0]),
        eta=float(parts["eta"][0]),
        trace=float(parts["trace"][0]),
        det=float(parts["det"][0]),
    )


def _control_spectra(n: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Spectra (1 + 0.02 U, ..., -b) with b at 95-98% of the Gamma_2 boundary value."""
    head = 1.0 + 0.02 * rng.uniform(0.0, 1.0, size=(samples, n - 1))
    frac = rng.uniform(0.95, 0.98, size=samples)
    b = frac * sigma_k_batch(head, 2) / np.sum(head, axis=1)
    return np.concatenate([head, -b[:, None]], axis=1)


def qform_verify(
    n: int,
    samples: int,
    seed: int,
    admit_violations: bool = False,
    theta_scale: float = 1.0,
    settings: Optional[Settings] = None,
) -> ExperimentReport:
    """Verify trace, determinant and sampled values of the restricted form.

    Spectra are Gamma_2 samples (restricted to lambda_min >= -c(n) sigma1 for
    n >= 5), rescaled so sigma_2 equals an f drawn uniformly from the
    configured interval. With ``admit_violations`` the spectra violate the
    dynamic condition on purpose, the index is the negative eigenvalue and
    epsilon is clamped at 0; the contract is then that violations occur.
    """
    cfg = settings or get_settings()
    if n < 4:
        raise UnsupportedDimensionError(f"the restricted form is built for n >= 4, got n = {n}")
    if samples < 1:
        raise ParameterError(f"samples must be positive, got {samples}")
    if admit_violations and n < 5:
        raise ParameterError("the falsification control needs n >= 5")
    rng = make_rng(seed, STREAM_QFORM)
    logger.info(f"Quadratic form run n={n} samples={samples} seed={seed} control={admit_violations}")

    if admit_violations:
        spectra = _control_spectra(n, samples, rng)
        index = np.full(samples, n - 1)
    else:
        kept = []
        count = 0
        while count < samples:
            batch, _ = sample_gamma2(n, samples, rng)
            if n >= 5:
                batch = batch[batch[:, -1] / np.sum(batch, axis=1) >= -dynamic_cn(n)]
            kept.append(batch)
            count += len(batch)
        spectra = np.concatenate(kept)[:samples]
        index = rng.integers(0, n, size=samples)

    f_target = rng.uniform(cfg.f_sample_min, cfg.f_sample_max, size=samples)
    spectra = spectra * np.sqrt(f_target / sigma_k_batch(spectra, 2))[:, None]
    parts = _qform_batch(spectra, index, theta_scale, clamp=admit_violations)

    # t with <DF, t> prescribed small
    DF, DF2 = parts["DF"], parts["DF2"]
    g = rng.standard_normal((samples, n))
    f_i = rng.uniform(-0.01, 0.01, size=samples) * np.sqrt(DF2)
    t = g - (np.sum(g * DF, axis=1) / DF2)[:, None] * DF + (f_i / DF2)[:, None] * DF
    beta, eta = parts["beta"], parts["eta"]
    q_tilde = (
        3.0 * np.sum(t * t, axis=1)
        - 2.0 * beta * np.sum(t * parts["E"], axis=1) ** 2
        - eta * beta * np.sum(t * parts["L"], axis=1) ** 2
    )
    slack = cfg.inequality_slack
    bad = (
        (parts["trace"] < -slack)
        | (parts["det"] < -slack)
        | (q_tilde < -slack * (1.0 + np.sum(t * t, axis=1)))
    )
    form_violations = int(np.count_nonzero(bad))
    identity_bad = parts["identity"] > 1e-8 * (1.0 + parts["DF2"])

    if admit_violations:
        violations = 0 if form_violations >= 1 else 1
    else:
        violations = form_violations
    violations += int(np.count_nonzero(identity_bad))
    if form_violations and not admit_violations:
        logger.warning(f"Quadratic form n={n}: {form_violations} violating samples")

    table = pd.DataFrame(
        {
            "sample": np.arange(samples),
            "index": index + 1,
            "f": parts["f"],
            "ratio": parts["ratio"],
            "epsilon": parts["epsilon"],
            "theta": parts["theta"],
            "trace": parts["trace"],
            "det": parts["det"],
            "q_tilde": q_tilde,
            "violation": bad,
        }
    )
    summary = {
        "n": n,
        "samples": samples,
        "seed": seed,
        "control": bool(admit_violations),
        "theta_scale": theta_scale,
        "form_violations": form_violations,
        "min_trace": float(np.min(parts["trace"])),
        "min_det": float(np.min(parts["det"])),
        "min_q_tilde": float(np.min(q_tilde)),
        "max_identity_residual": float(np.max(parts["identity"])),
        "violations": violations,
    }
    return ExperimentReport(name="qform", table=table, summary=summary, violations=violations, success=violations == 0)


# Module-level conveniences with default settings

def log_laplacian_field(u: GridFunction) -> GridFunction:
    return JacobiService().log_laplacian_field(u)


def jacobi_residual(u: GridFunction, f_spec: RHSSpec, C: Optional[float] = None, epsilon_scale: float = 1.0) -> JacobiReport:
    return JacobiService().jacobi_residual(u, f_spec, C, epsilon_scale)


def third_derivatives(u: GridFunction) -> np.ndarray:
    return JacobiService().third_derivatives(u)


def linearized_identity_defect(u: GridFunction, f_spec: RHSSpec) -> float:
    return JacobiService().linearized_identity_defect(u, f_spec)
