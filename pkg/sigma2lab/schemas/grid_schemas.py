"""
Grid-side schema definitions: grid functions, Hessian fields, right-hand sides
and solver outcomes.

A grid is a uniform tensor grid of ``m`` points per axis over a cube in R^n.
Values are stored flat in lexicographic order with the last axis fastest, which
is numpy's C order for an array of shape ``(m,) * n``.
"""

from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


ArrayFunc = Callable[[np.ndarray], np.ndarray]


class GridFunction(BaseModel):
    """Scalar field sampled on a uniform n-dimensional grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int = Field(..., ge=1, description="Spatial dimension")
    m: int = Field(..., ge=5, description="Points per axis (odd)")
    h: float = Field(..., gt=0, description="Grid spacing")
    origin: Tuple[float, ...] = Field(..., description="Coordinates of the first node")
    values: np.ndarray = Field(..., description="m**n nodal values, last axis fastest")

    @field_validator("values", mode="before")
    @classmethod
    def _flatten_values(cls, v):
        return np.ascontiguousarray(np.asarray(v, dtype=float).reshape(-1))

    @model_validator(mode="after")
    def _check_layout(self):
        if self.m % 2 == 0:
            raise ValueError(f"m must be odd so the center is a node, got {self.m}")
        if len(self.origin) != self.n:
            raise ValueError(f"origin has {len(self.origin)} entries, expected {self.n}")
        if self.values.size != self.m ** self.n:
            raise ValueError(f"values has {self.values.size} entries, expected m**n = {self.m ** self.n}")
        return self

    @classmethod
    def centered(cls, n: int, m: int, radius: float, values: Optional[np.ndarray] = None) -> "GridFunction":
        """Grid on the cube [-radius, radius]^n; zero values unless given."""
        h = 2.0 * radius / (m - 1)
        if values is None:
            values = np.zeros(m ** n)
        return cls(n=n, m=m, h=h, origin=tuple([-float(radius)] * n), values=values)

    @classmethod
    def from_callable(cls, func: ArrayFunc, n: int, m: int, radius: float = 1.0) -> "GridFunction":
        """Sample ``func`` on the centered cube; ``func`` maps (..., n) points to (...) values."""
        grid = cls.centered(n, m, radius)
        return grid.with_values(np.asarray(func(grid.points()), dtype=float))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def radius(self) -> float:
        """Half side of the cube (inscribed ball radius)."""
        return 0.5 * self.h * (self.m - 1)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + self.radius

    def array(self) -> np.ndarray:
        """Values as an n-dimensional array view."""
        return self.values.reshape(self.shape)

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.h * np.arange(self.m)

    def points(self, depth: int = 0) -> np.ndarray:
        """Node coordinates of shape ``(m - 2*depth,) * n + (n,)`` for nodes at least ``depth`` from the boundary."""
        axes = [self.axis(k)[depth:self.m - depth] for k in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def interior(self, depth: int = 1) -> np.ndarray:
        """Values of nodes at least ``depth`` from the boundary."""
        return self.array()[(slice(depth, self.m - depth),) * self.n]

    def ball_mask(self, r: float, center: Optional[np.ndarray] = None, depth: int = 0) -> np.ndarray:
        """Boolean mask of nodes with |x - center| <= r + h/2 (ball-mask convention)."""
        c = self.center if center is None else np.asarray(center, dtype=float)
        dist = np.linalg.norm(self.points(depth) - c, axis=-1)
        return dist <= r + 0.5 * self.h

    def node_index(self, flat_index: int, depth: int = 0) -> Tuple[int, ...]:
        """Full-grid multi-index of a flat index into the depth-``depth`` sub-block."""
        inner = (self.m - 2 * depth,) * self.n
        return tuple(int(i) + depth for i in np.unravel_index(int(flat_index), inner))

    def with_values(self, values: np.ndarray) -> "GridFunction":
        """Same geometry, new values."""
        return GridFunction(n=self.n, m=self.m, h=self.h, origin=self.origin, values=values)

    def copy(self) -> "GridFunction":
        return self.with_values(self.values.copy())


class HessianField(BaseModel):
    """Central-difference Hessians and gradients at every depth-1 node."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int = Field(..., description="Spatial dimension")
    m: int = Field(..., description="Points per axis of the parent grid")
    h: float = Field(..., description="Grid spacing")
    origin: Tuple[float, ...] = Field(..., description="Origin of the parent grid")
    hessians: np.ndarray = Field(..., description="(N, n, n) symmetric Hessians")
    gradients: np.ndarray = Field(..., description="(N, n) central-difference gradients")
    admissible: bool = Field(..., description="Whether every node lies in Gamma_2")

    @property
    def laplacian(self) -> np.ndarray:
        return np.trace(self.hessians, axis1=-2, axis2=-1)


class AdmissibilityReport(BaseModel):
    """Per-node Gamma_2 certificates of a grid function."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sigma1: np.ndarray = Field(..., description="Discrete Laplacian at depth-1 nodes")
    sigma2: np.ndarray = Field(..., description="sigma_2 of the discrete Hessian at depth-1 nodes")
    in_gamma2: np.ndarray = Field(..., description="Strict Gamma_2 membership per node")
    admissible: bool = Field(..., description="All nodes strictly inside Gamma_2")
    weakly_admissible: bool = Field(..., description="All nodes inside the closed cone")
    min_sigma2: float = Field(..., description="Minimum of sigma_2 over nodes")
    min_laplacian: float = Field(..., description="Minimum of the Laplacian over nodes")
    first_bad_node: Optional[Tuple[int, ...]] = Field(default=None, description="Full-grid index of the first inadmissible node")


class RHSSpec(BaseModel):
    """Right-hand side f(x, z, p) of sigma_2(D^2 u) = f.

    ``x`` has shape (..., n), ``z`` shape (...), ``p`` shape (..., n).
    Every kind carries analytic partials in z and p; ``grad_p`` may be left
    empty on separable specs built from a plain callable, in which case the
    central-difference fallback of the jacobi service is used.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["constant", "separable", "manufactured"] = Field(..., description="How f is evaluated")
    constant: float = Field(default=0.0, description="Value of a constant right-hand side")
    x_part: Optional[ArrayFunc] = Field(default=None, description="x-dependent part of a separable right-hand side")
    z_coefficient: float = Field(default=0.0, description="Linear z coefficient of a separable right-hand side")
    p_coefficients: Optional[Tuple[float, ...]] = Field(default=None, description="Linear p coefficients of a separable right-hand side")
    source: Optional[ArrayFunc] = Field(default=None, description="sigma_2(D^2 u*)(x) for manufactured kinds")
    exact: Optional[ArrayFunc] = Field(default=None, description="u*(x) for manufactured kinds")
    exact_gradient: Optional[ArrayFunc] = Field(default=None, description="Du*(x) for manufactured kinds")
    kappa: float = Field(default=0.0, ge=0.0, description="z coupling strength exp(kappa (z - u*))")
    mu: float = Field(default=0.0, ge=0.0, description="p coupling strength (1 + mu|p|^2)/(1 + mu|Du*|^2)")
    analytic_p: bool = Field(default=True, description="Whether grad_p is closed form")

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "constant" and self.constant <= 0:
            raise ValueError("constant right-hand side must be positive")
        if self.kind == "separable" and self.x_part is None:
            raise ValueError("separable right-hand side needs an x part")
        if self.kind == "manufactured" and self.source is None:
            raise ValueError("manufactured right-hand side needs a source")
        if (self.kappa or self.mu) and (self.exact is None or self.exact_gradient is None):
            raise ValueError("coupled right-hand side needs u* and Du*")
        return self

    def _coupling(self, x: np.ndarray, z: np.ndarray, p: np.ndarray) -> np.ndarray:
        factor = np.ones(np.shape(z))
        if self.kappa:
            factor = factor * np.exp(self.kappa * (z - self.exact(x)))
        if self.mu:
            dstar = self.exact_gradient(x)
            factor = factor * (1.0 + self.mu * np.sum(p * p, axis=-1)) / (1.0 + self.mu * np.sum(dstar * dstar, axis=-1))
        return factor

    def evaluate(self, x: np.ndarray, z: np.ndarray, p: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(np.shape(z), self.constant)
        if self.kind == "separable":
            out = np.asarray(self.x_part(x), dtype=float) + self.z_coefficient * z
            if self.p_coefficients is not None:
                out = out + p @ np.asarray(self.p_coefficients)
            return out
        return np.asarray(self.source(x), dtype=float) * self._coupling(x, z, p)

    def grad_z(self, x: np.ndarray, z: np.ndarray, p: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.zeros(np.shape(z))
        if self.kind == "separable":
            return np.full(np.shape(z), self.z_coefficient)
        return self.kappa * self.evaluate(x, z, p)

    def grad_p(self, x: np.ndarray, z: np.ndarray, p: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.zeros(np.shape(p))
        if self.kind == "separable":
            coeffs = np.zeros(p.shape[-1]) if self.p_coefficients is None else np.asarray(self.p_coefficients)
            return np.broadcast_to(coeffs, np.shape(p)).copy()
        if not self.mu:
            return np.zeros(np.shape(p))
        f = self.evaluate(x, z, p)
        scale = 2.0 * self.mu / (1.0 + self.mu * np.sum(p * p, axis=-1))
        return (f * scale)[..., None] * p


class SolveOutcome(BaseModel):
    """Result of a damped Newton solve."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: GridFunction = Field(..., description="Discrete solution")
    iterations: int = Field(..., ge=1, description="Newton passes, including the final converged residual check")
    final_residual: float = Field(..., description="Max-norm of sigma_2(D^2_h u) - f")
    admissible: bool = Field(..., description="Whether every interior node lies in Gamma_2")
    damping_history: List[float] = Field(default_factory=list, description="Accepted step lengths")
    residual_history: List[float] = Field(default_factory=list, description="Residual max-norm after every pass")
    tolerance: float = Field(..., description="Stopping tolerance")
    success: bool = Field(default=True, description="Whether the solve converged")
