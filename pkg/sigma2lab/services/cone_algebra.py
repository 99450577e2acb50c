"""
Cone algebra for the sigma_2 operator.

Elementary symmetric polynomials, the open Gamma_2 cone, the linearized
coefficients F = tr(H) I - H, and the closed-form constants and polynomials
behind the almost Jacobi inequality.
"""

import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from sigma2lab.config.settings import get_settings
from sigma2lab.exceptions import (
    DomainError,
    ParameterError,
    Sigma2LabError,
    UnsupportedDimensionError,
)
from sigma2lab.schemas.lab_schemas import (
    ConeCertificate,
    ExperimentReport,
    LinearizedCoeffs,
    Spectrum,
)
from sigma2lab.services.rng import STREAM_GAMMA2, make_rng
from sigma2lab.services.stencils import symmetric_eigenvalues

logger = logging.getLogger(__name__)

__all__ = [
    "sigma_k",
    "sigma_k_batch",
    "in_gamma2",
    "gamma2_mask",
    "sharp_min_eig_gap",
    "fii_bounds_check",
    "lemma_batch",
    "linearized_coeffs",
    "dynamic_cn",
    "epsilon_slope",
    "epsilon_jacobi",
    "epsilon_jacobi_batch",
    "roots_yn",
    "roots_ytilde",
    "q_polynomials",
    "remainder_polynomials",
    "trace_condition",
    "constant_monotonicity",
    "sample_gamma2",
    "polynomial_scan",
    "lemma_experiment",
    "symmetric_eigenvalues",
]


# ---------------------------------------------------------------------------
# Elementary symmetric polynomials and the cone
# ---------------------------------------------------------------------------

def sigma_k_batch(values: np.ndarray, k: int) -> np.ndarray:
    """sigma_k over the last axis by the incremental product recurrence.

    e_j <- e_j + lambda_i e_{j-1}, run for j from high to low so e_{j-1} is
    still the previous value, with Kahan compensation on every e_j.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"k must satisfy 1 <= k <= n = {n}, got {k}")
    e = np.zeros(values.shape[:-1] + (k + 1,))
    comp = np.zeros_like(e)
    e[..., 0] = 1.0
    for i in range(n):
        lam = values[..., i]
        for j in range(min(i + 1, k), 0, -1):
            y = lam * e[..., j - 1] - comp[..., j]
            t = e[..., j] + y
            comp[..., j] = (t - e[..., j]) - y
            e[..., j] = t
    return e[..., k]


def sigma_k(lam: Spectrum, k: int) -> float:
    """k-th elementary symmetric polynomial of a spectrum."""
    return float(sigma_k_batch(lam.values, k))


def gamma2_mask(values: np.ndarray, tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(sigma1, sigma2, strict membership) over the last axis.

    Spectra within ``tol`` of the boundary, relative to max|lambda|, count as outside.
    """
    tol = get_settings().cone_boundary_tol if tol is None else tol
    values = np.asarray(values, dtype=float)
    s1 = sigma_k_batch(values, 1)
    s2 = sigma_k_batch(values, 2)
    scale = np.max(np.abs(values), axis=-1)
    inside = (s1 > tol * scale) & (s2 > tol * scale * scale)
    return s1, s2, inside


def in_gamma2(lam: Spectrum) -> ConeCertificate:
    """Strict membership certificate for the open cone {sigma1 > 0, sigma2 > 0}."""
    s1, s2, inside = gamma2_mask(lam.values)
    return ConeCertificate(sigma1=float(s1), sigma2=float(s2), in_gamma2=bool(inside))


def _require_gamma2(lam: Spectrum) -> ConeCertificate:
    cert = in_gamma2(lam)
    if not cert.in_gamma2:
        raise DomainError(
            f"spectrum {lam.values.tolist()} is not in Gamma_2 (sigma1={cert.sigma1:.6g}, sigma2={cert.sigma2:.6g})"
        )
    return cert


def sharp_min_eig_gap(lam: Spectrum) -> float:
    """sigma1 - n/(n-2) |lambda_n|, strictly positive on Gamma_2."""
    if lam.n <= 2:
        raise DomainError(f"the sharp eigenvalue bound needs n > 2, got n = {lam.n}")
    cert = _require_gamma2(lam)
    return cert.sigma1 - lam.n / (lam.n - 2) * abs(lam.min)


def _le(a: np.ndarray, b: np.ndarray, rtol: float) -> np.ndarray:
    return a <= b + rtol * (np.abs(a) + np.abs(b))


def lemma_batch(spectra: np.ndarray, rtol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized eigenvalue gap and coefficient-bound flags.

    ``spectra`` has shape (N, n), rows sorted descending. Returns the gap
    sigma1 - n/(n-2)|lambda_n| (nan for n = 2) and an (N, 4) boolean array:
    sigma2/sigma1 <= sigma1 - lambda_1, sigma1 - lambda_1 <= (n-1)/n sigma1,
    and for every i >= 2 the lower and upper bounds on sigma1 - lambda_i.
    """
    rtol = get_settings().identity_rtol if rtol is None else rtol
    spectra = np.asarray(spectra, dtype=float)
    n = spectra.shape[-1]
    s1 = sigma_k_batch(spectra, 1)
    s2 = sigma_k_batch(spectra, 2)
    if n > 2:
        gap = s1 - n / (n - 2) * np.abs(spectra[:, -1])
    else:
        gap = np.full(s1.shape, np.nan)
    f1 = s1 - spectra[:, 0]
    rest = s1[:, None] - spectra[:, 1:]
    flags = np.stack(
        [
            _le(s2 / s1, f1, rtol),
            _le(f1, (n - 1) / n * s1, rtol),
            np.all(_le((1.0 - 1.0 / math.sqrt(2.0)) * s1[:, None], rest, rtol), axis=1),
            np.all(_le(rest, (2.0 * n - 2.0) / n * s1[:, None], rtol), axis=1),
        ],
        axis=1,
    )
    return gap, flags


def fii_bounds_check(lam: Spectrum) -> bool:
    """Whether all four bounds on sigma1 - lambda_i hold."""
    _require_gamma2(lam)
    _, flags = lemma_batch(lam.values[None, :])
    return bool(np.all(flags))


def linearized_coeffs(hessian: np.ndarray) -> LinearizedCoeffs:
    """F = tr(H) I - H for a symmetric H."""
    H = np.asarray(hessian, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {H.shape}")
    rtol = get_settings().symmetry_rtol
    asym = float(np.max(np.abs(H - H.T))) if H.size else 0.0
    if asym > rtol * float(np.max(np.abs(H))):
        raise ParameterError(f"matrix is not symmetric (asymmetry {asym:.3e})")
    n = H.shape[0]
    tr = float(np.trace(H))
    F = tr * np.eye(n) - H
    residual = abs(float(np.trace(F)) - (n - 1) * tr)
    return LinearizedCoeffs(F=F, trace_identity_residual=residual)


# ---------------------------------------------------------------------------
# Constants and polynomials of the almost Jacobi inequality
# ---------------------------------------------------------------------------

def _check_n(n: int) -> None:
    if n < 2:
        raise ParameterError(f"dimension must be at least 2, got {n}")


def dynamic_cn(n: int) -> float:
    """c(n) = (sqrt(3n^2+1) - n + 1) / (2n)."""
    _check_n(n)
    return (math.sqrt(3.0 * n * n + 1.0) - n + 1.0) / (2.0 * n)


def epsilon_slope(n: int) -> float:
    """C(n) = (sqrt(3n^2+1) - n - 1) / (3(n-1)), the slope of epsilon in the eigenvalue ratio."""
    _check_n(n)
    return (math.sqrt(3.0 * n * n + 1.0) - n - 1.0) / (3.0 * (n - 1.0))


def roots_yn(n: int) -> Tuple[float, float]:
    """Roots (y-, y+) of -2n y^2 + (2n+2) y + (n-1)."""
    _check_n(n)
    root = math.sqrt(3.0 * n * n + 1.0)
    return (n + 1.0 - root) / (2.0 * n), (n + 1.0 + root) / (2.0 * n)


def roots_ytilde(n: int) -> Tuple[float, float]:
    """Roots of -2n y^2 + (2n-4) y + 4(n-1), equal to (-1, (2n-2)/n)."""
    _check_n(n)
    root = math.sqrt(9.0 * n * n - 12.0 * n + 4.0)
    return (n - 2.0 - root) / (2.0 * n), (n - 2.0 + root) / (2.0 * n)


def _unsupported_below_four(n: int) -> None:
    if n < 4:
        raise UnsupportedDimensionError(f"the almost Jacobi inequality is stated for n = 4 and n >= 5, got n = {n}")


def epsilon_jacobi_batch(n: int, ratios: np.ndarray, clamp: bool = False) -> np.ndarray:
    """Node-wise epsilon from ratio = lambda_min / Laplacian.

    With ``clamp`` ratios below the dynamic floor are accepted and epsilon is
    cut at 0 instead of raising.
    """
    _unsupported_below_four(n)
    ratios = np.asarray(ratios, dtype=float)
    if n == 4:
        floor, slope, shift = -0.5, 2.0 / 9.0, 0.5
    else:
        floor = -dynamic_cn(n)
        slope, shift = epsilon_slope(n), dynamic_cn(n)
    if clamp:
        return np.maximum(slope * (shift + ratios), 0.0)
    bad = ratios < floor
    if np.any(bad):
        worst = float(np.min(ratios))
        raise DomainError(
            f"dynamic semi-convexity violated: lambda_min/Laplacian = {worst:.6g} < {floor:.6g} (n = {n})",
            details={"count": int(np.count_nonzero(bad)), "first": int(np.argmax(bad))},
        )
    return slope * (shift + ratios)


def epsilon_jacobi(n: int, ratio: float) -> float:
    """epsilon = (2/9)(1/2 + ratio) for n = 4, C(n)(c(n) + ratio) for n >= 5."""
    return float(epsilon_jacobi_batch(n, np.asarray(ratio)))


def _q_parts(n: int, delta, theta, y):
    q = -2.0 * n * delta * y * y + (4.0 * (n - 1) * delta - 2.0 * n + 6.0) * y + (n - 1) * (4.0 - 3.0 * delta)
    R = -2.0 * n * delta * y * y + (4.0 * (n - 1) * delta - 2.0 * n) * y + 4.0 * (n - 1)
    beta = 1.0 + theta
    full = (
        -2.0 * n * beta * delta * y * y
        + (4.0 * (n - 1) * beta * delta - 2.0 * n * beta + 6.0) * y
        + (n - 1) * (4.0 * beta - 3.0 * delta)
    )
    return q, R, full


def q_polynomials(n: int, epsilon: float, theta: float, y: float) -> Tuple[float, float, float]:
    """(q_delta(y), R_delta(y), q_{delta,theta}(y)) with delta = 1 + epsilon.

    y ranges over the closed interval [0, (2n-2)/n]; the endpoints are where
    the roots of q_1 and the remainder bounds are evaluated.
    """
    _check_n(n)
    if not 0.0 <= theta <= 0.25:
        raise ParameterError(f"theta must lie in [0, 1/4], got {theta}")
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    y_max = (2.0 * n - 2.0) / n
    if not 0.0 <= y <= y_max:
        raise DomainError(f"y must lie in [0, {y_max:.6g}], got {y}")
    q, R, full = _q_parts(n, 1.0 + epsilon, theta, y)
    split = abs(full - q - theta * R)
    if split > get_settings().identity_rtol * (1.0 + abs(q) + theta * abs(R)):
        raise Sigma2LabError(f"q_delta + theta R_delta differs from q_delta,theta by {split:.3e}")
    return float(q), float(R), float(full)


def remainder_polynomials(n: int, y):
    """(r(y), R_1(y), r~(y)): the epsilon coefficient of q_delta, R_delta at delta = 1, and the epsilon coefficient of R_delta."""
    _check_n(n)
    y = np.asarray(y, dtype=float)
    r = -2.0 * n * y * y + 4.0 * (n - 1) * y - 3.0 * (n - 1)
    R1 = -2.0 * n * y * y + (2.0 * n - 4.0) * y + 4.0 * (n - 1)
    rt = -2.0 * n * y * y + 4.0 * (n - 1) * y
    return r, R1, rt


def trace_condition(n: int, delta: float, theta: float) -> bool:
    """delta <= 3(1 - theta)/(1 + theta) * n/(2n - 2)."""
    _check_n(n)
    return bool(delta <= 3.0 * (1.0 - theta) / (1.0 + theta) * n / (2.0 * n - 2.0))


def global_delta_cap() -> float:
    """1 + C(inf)(c(2) + 1): delta bound uniform in n."""
    return 1.0 + (math.sqrt(3.0) - 1.0) / 3.0 * ((math.sqrt(13.0) - 1.0) / 4.0 + 1.0)


def constant_monotonicity(n_max: int = 64, theta: float = 0.01) -> ExperimentReport:
    """Numerical ledger for the monotonicity of c(n) and C(n) on 2..n_max."""
    if n_max < 3:
        raise ParameterError(f"n_max must be at least 3, got {n_max}")
    ns = np.arange(2, n_max + 1)
    c = np.array([dynamic_cn(int(k)) for k in ns])
    C = np.array([epsilon_slope(int(k)) for k in ns])
    cap = global_delta_cap()
    local_cap = 1.0 + C * (c + 1.0)
    trace_ok = np.array([trace_condition(int(k), cap, theta) for k in ns])
    table = pd.DataFrame({"n": ns, "c_n": c, "C_n": C, "delta_cap_n": local_cap, "trace_ok": trace_ok})
    c_limit = (math.sqrt(3.0) - 1.0) / 2.0
    C_limit = (math.sqrt(3.0) - 1.0) / 3.0
    checks = {
        "c_decreasing": bool(np.all(np.diff(c) < 0)),
        "c_above_limit": bool(np.all(c > c_limit)),
        "C_increasing": bool(np.all(np.diff(C) > 0)),
        "C_below_limit": bool(np.all(C < C_limit)),
        "cap_dominates": bool(np.all(local_cap <= cap)),
        "trace_condition": bool(np.all(trace_ok)),
    }
    violations = sum(1 for ok in checks.values() if not ok)
    summary: Dict[str, object] = {"n_max": n_max, "global_delta_cap": cap, **checks}
    return ExperimentReport(name="constants", table=table, summary=summary, violations=violations, success=violations == 0)


# ---------------------------------------------------------------------------
# Sampling and property runs
# ---------------------------------------------------------------------------

def sample_gamma2(
    n: int,
    samples: int,
    rng: np.random.Generator,
    box: Optional[Tuple[float, float]] = None,
) -> Tuple[np.ndarray, float]:
    """Rejection-sample ``samples`` spectra of Gamma_2 with entries uniform on ``box``.

    Returns rows sorted descending and the acceptance rate.
    """
    _check_n(n)
    if samples < 1:
        raise ParameterError(f"samples must be positive, got {samples}")
    lo, hi = get_settings().gamma2_box if box is None else box
    batch = max(1024, samples)
    kept = []
    accepted = drawn = 0
    while accepted < samples:
        draw = rng.uniform(lo, hi, size=(batch, n))
        _, _, inside = gamma2_mask(draw)
        kept.append(draw[inside])
        accepted += int(np.count_nonzero(inside))
        drawn += batch
    spectra = np.concatenate(kept)[:samples]
    rate = accepted / drawn
    logger.debug(f"Gamma_2 sampling n={n}: acceptance rate {rate:.4f}")
    return -np.sort(-spectra, axis=1), rate


def lemma_experiment(n: int, samples: int, seed: int) -> ExperimentReport:
    """Property run of the eigenvalue bounds on seeded Gamma_2 samples."""
    if n < 3:
        raise UnsupportedDimensionError(f"eigenvalue bounds need n > 2, got n = {n}")
    cfg = get_settings()
    logger.info(f"Eigenvalue bound run n={n} samples={samples} seed={seed}")
    spectra, rate = sample_gamma2(n, samples, make_rng(seed, STREAM_GAMMA2))
    s1 = sigma_k_batch(spectra, 1)
    s2 = sigma_k_batch(spectra, 2)
    gap, flags = lemma_batch(spectra)
    identity = s1 * s1 - np.sum(spectra * spectra, axis=1) - 2.0 * s2
    identity_ok = np.abs(identity) <= cfg.identity_rtol * (1.0 + s1 * s1)
    # F is diagonal with entries sigma1 - lambda_i; the smallest is sigma1 - lambda_1
    min_F = s1 - spectra[:, 0]
    homogeneous = np.ones(samples, dtype=bool)
    for t in (1e-6, 1.0, 1e6):
        homogeneous &= gamma2_mask(t * spectra)[2]
    table = pd.DataFrame(
        {
            "sample": np.arange(samples),
            "sigma1": s1,
            "sigma2": s2,
            "lambda_min": spectra[:, -1],
            "gap": gap,
            "bound_1": flags[:, 0],
            "bound_2": flags[:, 1],
            "bound_3": flags[:, 2],
            "bound_4": flags[:, 3],
            "identity_residual": identity,
            "min_F": min_F,
            "homogeneous": homogeneous,
        }
    )
    bad = (gap <= 0) | ~np.all(flags, axis=1) | ~identity_ok | (min_F <= 0) | ~homogeneous
    violations = int(np.count_nonzero(bad))
    if violations:
        logger.warning(f"Eigenvalue bound run n={n}: {violations} violating samples")
    summary = {
        "n": n,
        "samples": samples,
        "seed": seed,
        "acceptance_rate": rate,
        "min_gap": float(np.min(gap)),
        "min_F": float(np.min(min_F)),
        "max_identity_residual": float(np.max(np.abs(identity))),
        "violations": violations,
    }
    return ExperimentReport(name="lemmas", table=table, summary=summary, violations=violations, success=violations == 0)


def polynomial_scan(n: int, grid: int = 4096, theta: float = 0.01) -> ExperimentReport:
    """Scan q_{delta,theta} over (0, y_max] with the dimension's epsilon.

    y_max is 3/2 for n = 4 and y_n^+ for n >= 5; epsilon is (2/9)(3/2 - y)
    for n = 4 and C(n)(y_n^+ - y) for n >= 5, i.e. the epsilon of the
    inequality at F_nn/Laplacian = y.
    """
    _unsupported_below_four(n)
    if grid < 2:
        raise ParameterError(f"grid must have at least 2 points, got {grid}")
    if not 0.0 < theta <= 0.25:
        raise ParameterError(f"theta must lie in (0, 1/4], got {theta}")
    slack = get_settings().inequality_slack
    y_plus = roots_yn(n)[1]
    y = y_plus * np.arange(1, grid + 1) / grid
    if n == 4:
        eps = (2.0 / 9.0) * (1.5 - y)
    else:
        eps = epsilon_slope(n) * (y_plus - y)
    q, R, full = _q_parts(n, 1.0 + eps, theta, y)
    r, R1, rt = remainder_polynomials(n, y)
    split = np.abs(full - q - theta * R)
    table = pd.DataFrame(
        {"y": y, "epsilon": eps, "q_delta": q, "R_delta": R, "q_delta_theta": full, "r": r, "R1": R1, "r_tilde": rt}
    )
    bad = (
        (full < -slack)
        | (r < -3.0 * (n - 1) - slack)
        | (R1 < -slack)
        | (split > get_settings().identity_rtol * (1.0 + np.abs(q) + theta * np.abs(R)))
    )
    violations = int(np.count_nonzero(bad))
    if violations:
        logger.warning(f"Polynomial scan n={n}: {violations} violating grid points")
    y_minus = roots_yn(n)[0]
    yt_minus, yt_plus = roots_ytilde(n)
    summary = {
        "n": n,
        "grid": grid,
        "theta": theta,
        "y_minus": y_minus,
        "y_plus": y_plus,
        "ytilde_minus": yt_minus,
        "ytilde_plus": yt_plus,
        "min_q_delta_theta": float(np.min(full)),
        "min_r": float(np.min(r)),
        "min_R1": float(np.min(R1)),
        "violations": violations,
    }
    return ExperimentReport(name="polyscan", table=table, summary=summary, violations=violations, success=violations == 0)
