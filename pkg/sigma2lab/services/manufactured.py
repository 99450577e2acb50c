"""
Manufactured solutions.

Each case is a smooth admissible u* with closed-form gradient and Hessian; its
right-hand side is built from sigma_2(D^2 u*) so that u* solves the equation
exactly.
"""

import logging
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from sigma2lab.exceptions import ParameterError
from sigma2lab.schemas.grid_schemas import GridFunction, RHSSpec
from sigma2lab.services.stencils import sigma2_of_hessians

logger = logging.getLogger(__name__)


class Manufactured(BaseModel):
    """A smooth solution with analytic derivatives; points are (..., n) arrays."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    kappa: float = 0.0
    mu: float = 0.0

    def source(self, x: np.ndarray) -> np.ndarray:
        return sigma2_of_hessians(self.hessian(x))

    def rhs(self) -> RHSSpec:
        """Right-hand side for which this function is an exact solution."""
        return RHSSpec(
            kind="manufactured",
            source=self.source,
            exact=self.value,
            exact_gradient=self.gradient,
            kappa=self.kappa,
            mu=self.mu,
        )

    def sample(self, n: int, m: int, radius: float = 1.0) -> GridFunction:
        return GridFunction.from_callable(self.value, n, m, radius)


def _quadratic_value(x):
    return 0.5 * np.sum(x * x, axis=-1)


def _identity_gradient(x):
    return np.array(x, dtype=float, copy=True)


def _quadratic_hessian(x):
    n = x.shape[-1]
    return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()


def _bump(coef: float, x: np.ndarray) -> np.ndarray:
    return coef * np.exp(x[..., 0])


def _exp_case(name: str, kappa: float = 0.0, mu: float = 0.0, coef: float = 0.05) -> Manufactured:
    def value(x):
        return _quadratic_value(x) + _bump(coef, x)

    def gradient(x):
        g = np.array(x, dtype=float, copy=True)
        g[..., 0] += _bump(coef, x)
        return g

    def hessian(x):
        H = _quadratic_hessian(x)
        H[..., 0, 0] += _bump(coef, x)
        return H

    return Manufactured(name=name, value=value, gradient=gradient, hessian=hessian, kappa=kappa, mu=mu)


def _polynomial_case(name: str, coef: float, power: int) -> Manufactured:
    def value(x):
        return _quadratic_value(x) + coef * x[..., 0] ** power

    def gradient(x):
        g = np.array(x, dtype=float, copy=True)
        g[..., 0] += coef * power * x[..., 0] ** (power - 1)
        return g

    def hessian(x):
        H = _quadratic_hessian(x)
        H[..., 0, 0] += coef * power * (power - 1) * x[..., 0] ** (power - 2)
        return H

    return Manufactured(name=name, value=value, gradient=gradient, hessian=hessian)


def _sine_case(name: str, coef: float = 0.01) -> Manufactured:
    def value(x):
        return _quadratic_value(x) + coef * np.sin(x[..., 0])

    def gradient(x):
        g = np.array(x, dtype=float, copy=True)
        g[..., 0] += coef * np.cos(x[..., 0])
        return g

    def hessian(x):
        H = _quadratic_hessian(x)
        H[..., 0, 0] -= coef * np.sin(x[..., 0])
        return H

    return Manufactured(name=name, value=value, gradient=gradient, hessian=hessian)


MANUFACTURED: Dict[str, Callable[[], Manufactured]] = {
    "quadratic": lambda: Manufactured(
        name="quadratic", value=_quadratic_value, gradient=_identity_gradient, hessian=_quadratic_hessian
    ),
    "exp": lambda: _exp_case("exp"),
    "coupled": lambda: _exp_case("coupled", kappa=0.1, mu=0.05),
    "quartic": lambda: _polynomial_case("quartic", 0.01, 4),
    "sine": lambda: _sine_case("sine"),
}

# cases the solver ships with; the others are analytic fields for the jacobi checks
SOLVER_CASES = ("quadratic", "exp", "coupled")


def get_case(name: str) -> Manufactured:
    try:
        return MANUFACTURED[name]()
    except KeyError:
        raise ParameterError(f"unknown manufactured case {name!r}; choose from {sorted(MANUFACTURED)}") from None


def initial_guess_for(case: Manufactured, n: int, m: int, radius: float) -> GridFunction:
    """Quadratic part |x|^2/2 in the interior with the exact boundary trace."""
    exact = case.sample(n, m, radius)
    guess = GridFunction.from_callable(_quadratic_value, n, m, radius)
    arr = guess.array()
    interior = (slice(1, m - 1),) * n
    out = exact.array().copy()
    out[interior] = arr[interior]
    return exact.with_values(out)


def manufactured_case(
    name: str, n: int, m: int, radius: float = 1.0
) -> Tuple[GridFunction, RHSSpec, GridFunction, Optional[GridFunction]]:
    """(u* sampled, rhs, boundary trace, init) for a named case.

    The quadratic case starts from u* itself; the others from the quadratic part.
    """
    case = get_case(name)
    exact = case.sample(n, m, radius)
    rhs = case.rhs()
    if name == "quadratic":
        return exact, rhs, exact, exact.copy()
    logger.info(f"Manufactured case {name}: n={n} m={m} radius={radius}")
    return exact, rhs, exact, initial_guess_for(case, n, m, radius)
