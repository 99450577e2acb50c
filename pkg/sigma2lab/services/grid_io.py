"""
Grid construction and the SIGMA2GRID v1 text format.

Layout: line 1 ``SIGMA2GRID v1``, line 2 ``n m h origin_1 ... origin_n``, then
m**n values one per line with 17 significant digits, last axis fastest.
17 significant digits round-trip every double exactly.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from sigma2lab.exceptions import ParameterError
from sigma2lab.schemas.grid_schemas import GridFunction

logger = logging.getLogger(__name__)

MAGIC = "SIGMA2GRID v1"


def make_grid(n: int, m: int, radius: float = 1.0) -> GridFunction:
    """Zero grid function on the centered cube [-radius, radius]^n."""
    if n < 1:
        raise ParameterError(f"dimension must be positive, got {n}")
    if m < 5 or m % 2 == 0:
        raise ParameterError(f"points per axis must be odd and >= 5, got {m}")
    if radius <= 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    return GridFunction.centered(n, m, radius)


def write_grid(path: Union[str, Path], u: GridFunction) -> None:
    """Write ``u`` in the SIGMA2GRID v1 format."""
    header = " ".join([str(u.n), str(u.m), f"{u.h:.17g}"] + [f"{o:.17g}" for o in u.origin])
    lines = [MAGIC, header]
    lines.extend(f"{v:.17g}" for v in u.values.tolist())
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote grid n={u.n} m={u.m} to {path}")


def read_grid(path: Union[str, Path]) -> GridFunction:
    """Read a SIGMA2GRID v1 file."""
    text = Path(path).read_text().splitlines()
    if len(text) < 2 or text[0].strip() != MAGIC:
        raise ParameterError(f"{path} is not a {MAGIC} file")
    fields = text[1].split()
    try:
        n, m = int(fields[0]), int(fields[1])
        h = float(fields[2])
        origin = tuple(float(x) for x in fields[3:])
    except (IndexError, ValueError) as e:
        raise ParameterError(f"malformed grid header in {path}: {text[1]!r}") from e
    if len(origin) != n:
        raise ParameterError(f"grid header declares n={n} but has {len(origin)} origin entries")
    body = [line for line in text[2:] if line.strip()]
    if len(body) != m ** n:
        raise ParameterError(f"grid file {path} has {len(body)} values, expected {m ** n}")
    values = np.array([float(line) for line in body])
    try:
        grid = GridFunction(n=n, m=m, h=h, origin=origin, values=values)
    except ValueError as e:
        raise ParameterError(f"invalid grid in {path}: {e}") from e
    logger.info(f"Read grid n={n} m={m} from {path}")
    return grid
