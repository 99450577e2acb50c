"""
Schema definitions for spectra, certificates and experiment reports.

This module contains Pydantic models shared by the laboratory services and the CLI.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from sigma2lab.schemas.grid_schemas import GridFunction


class Spectrum(BaseModel):
    """Eigenvalues of a Hessian candidate, sorted descending."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray = Field(..., description="Eigenvalues lambda_1 >= ... >= lambda_n")

    @field_validator("values", mode="before")
    @classmethod
    def _sort_descending(cls, v):
        arr = np.asarray(v, dtype=float).reshape(-1)
        if arr.size < 2:
            raise ValueError(f"a spectrum needs n >= 2 eigenvalues, got {arr.size}")
        # stable on -values keeps exact ties in input order
        return arr[np.argsort(-arr, kind="stable")]

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def min(self) -> float:
        return float(self.values[-1])

    def scaled(self, t: float) -> "Spectrum":
        return Spectrum(values=t * self.values)


class ConeCertificate(BaseModel):
    """Gamma_2 membership certificate."""

    sigma1: float = Field(..., description="First elementary symmetric polynomial")
    sigma2: float = Field(..., description="Second elementary symmetric polynomial")
    in_gamma2: bool = Field(..., description="Strict membership in the open Gamma_2 cone")

    @model_validator(mode="after")
    def _membership_needs_positive_sigmas(self):
        if self.in_gamma2 and not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("in_gamma2 requires sigma1 > 0 and sigma2 > 0")
        return self


class LinearizedCoeffs(BaseModel):
    """Coefficients F = tr(H) I - H of the linearized sigma_2 operator."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    F: np.ndarray = Field(..., description="n x n coefficient matrix")
    trace_identity_residual: float = Field(..., description="|sum F_ii - (n-1) tr H|")


class JacobiReport(BaseModel):
    """Per-node almost Jacobi inequality record at depth-2 nodes."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray = Field(..., description="(N, n) node coordinates")
    delta_F_b: np.ndarray = Field(..., description="Linearized Laplacian of b = log Laplacian")
    grad_F_b_sq: np.ndarray = Field(..., description="F-weighted squared gradient of b")
    epsilon: np.ndarray = Field(..., description="Node-wise epsilon (already scaled)")
    drift_term: np.ndarray = Field(..., description="sum_i f_{p_i} b_i")
    remainder: np.ndarray = Field(..., description="C Gamma^2 (1 + Laplacian)")
    residual: np.ndarray = Field(..., description="delta_F_b - epsilon grad_F_b_sq - drift + remainder")
    constant_C: float = Field(..., description="Remainder constant C")
    Gamma: float = Field(..., description="max|u| + max|Du| + 1")
    h: float = Field(..., description="Grid spacing")
    epsilon_scale: float = Field(default=1.0, description="Multiplier applied to epsilon")
    min_residual: float = Field(..., description="Minimum node residual")
    minimal_constant: float = Field(..., description="Smallest C making every residual nonnegative")
    floor_constant: float = Field(..., description="K = max(0, -min residual) / h^2")

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.points, columns=[f"x{k + 1}" for k in range(self.points.shape[1])])
        for name in ("delta_F_b", "grad_F_b_sq", "epsilon", "drift_term", "remainder", "residual"):
            frame[name] = getattr(self, name)
        return frame


class QFormInstance(BaseModel):
    """Restricted quadratic form 3|t|^2 - 2 beta <t,E>^2 - eta beta <t,L>^2 at one spectrum."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    E: np.ndarray = Field(..., description="e_i projected off DF")
    L: np.ndarray = Field(..., description="(1,...,1) projected off DF")
    DF: np.ndarray = Field(..., description="Diagonal of the linearized coefficients")
    epsilon: float
    theta: float
    beta: float
    eta: float
    trace: float = Field(..., description="Trace of the form on span{E, L}")
    det: float = Field(..., description="Determinant of the form on span{E, L}")

    def evaluate(self, t: np.ndarray) -> float:
        t = np.asarray(t, dtype=float)
        return float(3.0 * t @ t - 2.0 * self.beta * (t @ self.E) ** 2 - self.eta * self.beta * (t @ self.L) ** 2)


class DoublingConfig(BaseModel):
    """Parameters of the doubling test function."""

    n: int = Field(..., ge=2, description="Spatial dimension")
    alpha: float = Field(..., gt=0, description="Weight of x.Du - u")
    beta: float = Field(..., gt=0, description="Weight of |Du|^2 / 2")
    gamma: float = Field(..., gt=0, description="Floor of the normalized log-Laplacian")
    r_inner: float = Field(default=1.0, gt=0, description="Inner ball radius")
    r_outer: float = Field(default=2.0, gt=0, description="Outer ball radius")
    constant_C: float = Field(default=10.0, gt=0, description="Structural constant C")
    Gamma: float = Field(..., ge=1, description="3 max|Du| + max|u| + 1 used for the defaults")
    enforce_conditions: bool = Field(default=True, description="Check the parameter constraints at construction")

    @model_validator(mode="after")
    def _check_radii(self):
        if not self.r_inner < self.r_outer:
            raise ValueError(f"need r_inner < r_outer, got {self.r_inner} and {self.r_outer}")
        return self


class DoublingReport(BaseModel):
    """Measured doubling ratio of the discrete Laplacian."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sup_inner: float = Field(..., description="sup of the Laplacian over the inner ball")
    sup_outer: float = Field(..., description="sup of the Laplacian over the outer ball")
    ratio: float = Field(..., description="sup_outer / sup_inner")
    Gamma: float = Field(..., description="C^1 norm proxy")
    paper_bound: float = Field(..., description="C exp(C Gamma^6), inf when it overflows")
    log_paper_bound: float = Field(..., description="log C + C Gamma^6")
    fitted_constant: float = Field(..., description="Smallest C' with ratio <= C' exp(C' Gamma^6)")
    max_P_location: Tuple[int, ...] = Field(..., description="Full-grid index of the test-function maximizer")
    max_P_point: Tuple[float, ...] = Field(..., description="Coordinates of the maximizer")
    P_max: float = Field(..., description="Maximum of the test function")
    conditions: Dict[str, bool] = Field(default_factory=dict, description="Parameter constraint ledger")
    success: bool = Field(default=True, description="ratio <= C exp(C Gamma^6)")


class DensityKind(str, Enum):
    """Kinds of density measures."""
    CONSTANT = "constant"
    RADIAL = "radial"
    GRID = "grid"


class DensityMeasure(BaseModel):
    """Absolutely continuous measure mu = density dx."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: DensityKind = Field(..., description="Density kind")
    n: int = Field(..., ge=1, description="Spatial dimension")
    constant: float = Field(default=0.0, description="Density value of a constant measure")
    radii: Optional[np.ndarray] = Field(default=None, description="Increasing radial knots starting at 0")
    profile: Optional[np.ndarray] = Field(default=None, description="Density at the radial knots (piecewise linear)")
    grid: Optional[GridFunction] = Field(default=None, description="Nodal density values")

    @model_validator(mode="after")
    def _check_density(self):
        if self.kind == DensityKind.CONSTANT and self.constant < 0:
            raise ValueError("density must be nonnegative")
        if self.kind == DensityKind.RADIAL:
            if self.radii is None or self.profile is None or len(self.radii) != len(self.profile):
                raise ValueError("radial density needs matching radii and profile")
            radii = np.asarray(self.radii, dtype=float)
            if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
                raise ValueError("radial knots must start at 0 and increase")
            if np.any(np.asarray(self.profile) < 0):
                raise ValueError("density must be nonnegative")
        if self.kind == DensityKind.GRID:
            if self.grid is None or self.grid.n != self.n:
                raise ValueError("grid density needs a grid of matching dimension")
            if np.any(self.grid.values < 0):
                raise ValueError("density must be nonnegative")
        return self


class SeminormReport(BaseModel):
    """Distance-weighted sup norm and Hoelder seminorm on a ball."""

    weighted_sup: float = Field(..., ge=0, description="sup d_x^n |u(x)|")
    weighted_holder: float = Field(..., ge=0, description="sup d_xy^(n+gamma) |u(x)-u(y)| / |x-y|^gamma")
    gamma: float = Field(..., description="Hoelder exponent")
    R: float = Field(..., description="Ball radius")
    nodes: int = Field(..., description="Ball nodes used")
    pairs: int = Field(..., description="Node pairs examined")
    sampled: bool = Field(default=False, description="Whether the pairs were subsampled")
    seed: Optional[int] = Field(default=None, description="Seed of the pair sample")
    l1_norm: float = Field(default=0.0, description="Integral of |u| over the ball")


class HarnackReport(BaseModel):
    """sup <= C1 inf + C2 r^2 on a ball."""

    sup: float
    inf: float
    r: float
    C1: float
    C2: float
    holds: bool
    c1_fit: float = Field(..., description="sup / inf (inf when inf = 0)")
    c2_fit: float = Field(..., description="Smallest C2 making the estimate hold with the given C1")
    wolff_bound: Optional[float] = Field(default=None, description="Upper bound of W(x, 4r) from the right-hand side sup")


class OscillationReport(BaseModel):
    """Oscillation decay omega_r <= theta omega_10r + C r^2."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    radii: np.ndarray
    omega: np.ndarray
    omega_outer: np.ndarray
    theta: float
    C: float
    satisfied: np.ndarray
    exponent: Optional[float] = Field(default=None, description="Least-squares slope of log omega_r against log r")


class ExperimentReport(BaseModel):
    """CSV-serializable table plus a one-line summary."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = Field(..., description="Experiment name")
    table: pd.DataFrame = Field(..., description="One row per sample or node summary")
    summary: Dict[str, Any] = Field(default_factory=dict, description="Scalars written to the summary line")
    violations: int = Field(default=0, ge=0, description="Number of contract violations")
    success: bool = Field(default=True, description="Whether every contract held")
    error_message: Optional[str] = Field(default=None, description="Error message if any")


class Subcommand(str, Enum):
    """CLI subcommands."""
    LEMMAS = "lemmas"
    POLYSCAN = "polyscan"
    QFORM = "qform"
    SOLVE = "solve"
    JACOBI = "jacobi"
    DOUBLING = "doubling"
    WOLFF = "wolff"
    SEMINORMS = "seminorms"
    HARNACK = "harnack"
    OSCILLATION = "oscillation"


class RunConfig(BaseModel):
    """Fully resolved configuration of one CLI run."""

    subcommand: Subcommand = Field(..., description="Experiment to run")
    n: int = Field(..., ge=2, description="Spatial dimension")
    m: int = Field(..., ge=5, description="Grid points per axis")
    seed: int = Field(..., ge=0, lt=2 ** 64, description="64-bit seed")
    case: str = Field(..., description="Manufactured case identifier")
    radius: float = Field(..., gt=0, description="Grid radius")
    samples: int = Field(..., ge=1, description="Sample count")
    grid: int = Field(..., ge=2, description="Scan grid size")
    theta: float = Field(..., description="theta parameter")
    overrides: Dict[str, float] = Field(default_factory=dict, description="Numeric overrides")
    grid_in: Optional[str] = Field(default=None, description="Input grid file")
    grid_out: Optional[str] = Field(default=None, description="Output grid file")
    out: Optional[str] = Field(default=None, description="CSV output path, stdout when empty")

    def get(self, name: str, default: float) -> float:
        return float(self.overrides.get(name, default))


__all__: List[str] = [
    "Spectrum",
    "ConeCertificate",
    "LinearizedCoeffs",
    "JacobiReport",
    "QFormInstance",
    "DoublingConfig",
    "DoublingReport",
    "DensityKind",
    "DensityMeasure",
    "SeminormReport",
    "HarnackReport",
    "OscillationReport",
    "ExperimentReport",
    "Subcommand",
    "RunConfig",
]
