"""
Exception hierarchy for the laboratory.

Every operation raises one of these; the CLI boundary maps ``kind`` to an exit code.
"""

from typing import Any, Dict, Optional, Sequence


class Sigma2LabError(Exception):
    """Base class for all laboratory errors."""

    kind = "general"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ParameterError(Sigma2LabError):
    """An argument is outside its documented range."""

    kind = "parameter"


class DomainError(Sigma2LabError):
    """The input is outside the mathematical domain of the operation."""

    kind = "domain"


class UnsupportedDimensionError(DomainError):
    """The operation is not defined in the requested dimension."""

    kind = "unsupported"


class AdmissibilityError(Sigma2LabError):
    """A grid function leaves the Gamma_2 cone (or has nonpositive Laplacian)."""

    kind = "admissibility"

    def __init__(self, message: str, node: Optional[Sequence[int]] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.node = tuple(int(i) for i in node) if node is not None else None


class NonconvergenceError(Sigma2LabError):
    """The damped Newton iteration stalled."""

    kind = "nonconvergence"


class LinearAlgebraError(Sigma2LabError):
    """A Newton linear system is singular to working precision."""

    kind = "linear_algebra"


class ConfigurationError(Sigma2LabError):
    """An experiment configuration is inconsistent with the grid or with itself."""

    kind = "configuration"
