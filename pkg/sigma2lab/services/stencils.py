"""
Central-difference stencils on uniform tensor grids.

All stencils work on n-dimensional arrays of shape ``(m,) * n`` and return
values at nodes at least ``depth`` away from the boundary, so a stencil of
reach one needs ``depth >= 1``. Results are flattened over nodes in C order.
"""

import logging
from typing import Sequence

import numpy as np

from sigma2lab.exceptions import ParameterError

logger = logging.getLogger(__name__)


def window(arr: np.ndarray, offset: Sequence[int], depth: int) -> np.ndarray:
    """View of ``arr`` shifted by ``offset`` on the depth-``depth`` node block."""
    m = arr.shape[0]
    return arr[tuple(slice(depth + o, m - depth + o) for o in offset)]


def _unit(n: int, i: int, sign: int = 1) -> list:
    e = [0] * n
    e[i] = sign
    return e


def _pair(n: int, i: int, j: int, si: int, sj: int) -> list:
    e = [0] * n
    e[i] = si
    e[j] = sj
    return e


def _check_depth(arr: np.ndarray, depth: int) -> None:
    if depth < 1:
        raise ParameterError(f"central stencils need depth >= 1, got {depth}")
    if arr.shape[0] - 2 * depth < 1:
        raise ParameterError(f"grid with {arr.shape[0]} points per axis has no nodes at depth {depth}")


def gradient_stack(arr: np.ndarray, h: float, depth: int = 1) -> np.ndarray:
    """Central first differences, shape ``(N, n)``."""
    _check_depth(arr, depth)
    n = arr.ndim
    cols = [
        (window(arr, _unit(n, k, 1), depth) - window(arr, _unit(n, k, -1), depth)) / (2.0 * h)
        for k in range(n)
    ]
    return np.stack([c.reshape(-1) for c in cols], axis=-1)


def hessian_stack(arr: np.ndarray, h: float, depth: int = 1) -> np.ndarray:
    """Central second differences, shape ``(N, n, n)``.

    Mixed entries use the four-point cross stencil, evaluated once and stored
    in both (i, j) and (j, i), so every Hessian is exactly symmetric.
    """
    _check_depth(arr, depth)
    n = arr.ndim
    zero = [0] * n
    center = window(arr, zero, depth).reshape(-1)
    out = np.empty(center.shape + (n, n))
    h2 = h * h
    for i in range(n):
        plus = window(arr, _unit(n, i, 1), depth).reshape(-1)
        minus = window(arr, _unit(n, i, -1), depth).reshape(-1)
        out[:, i, i] = (plus - 2.0 * center + minus) / h2
        for j in range(i + 1, n):
            cross = (
                window(arr, _pair(n, i, j, 1, 1), depth)
                - window(arr, _pair(n, i, j, 1, -1), depth)
                - window(arr, _pair(n, i, j, -1, 1), depth)
                + window(arr, _pair(n, i, j, -1, -1), depth)
            ).reshape(-1) / (4.0 * h2)
            out[:, i, j] = cross
            out[:, j, i] = cross
    return out


def laplacian(arr: np.ndarray, h: float, depth: int = 1) -> np.ndarray:
    """Discrete Laplacian, the trace of ``hessian_stack`` without the mixed entries."""
    _check_depth(arr, depth)
    n = arr.ndim
    center = window(arr, [0] * n, depth)
    total = np.zeros(center.shape)
    for i in range(n):
        total += window(arr, _unit(n, i, 1), depth) - 2.0 * center + window(arr, _unit(n, i, -1), depth)
    return total.reshape(-1) / (h * h)


def third_stack(arr: np.ndarray, h: float) -> np.ndarray:
    """Third differences at depth-2 nodes, shape ``(N, n, n, n)``.

    Each entry differences one Hessian entry once more: for a sorted index
    triple (a, b, c) the value is delta_c H_ab when a < b, delta_a H_bb when
    a < b = c, and delta_c H_aa otherwise. The value is copied to every
    permutation, so the tensor is exactly symmetric.
    """
    _check_depth(arr, 2)
    n = arr.ndim
    inner = (arr.shape[0] - 2,) * n
    hess = hessian_stack(arr, h, depth=1).reshape(inner + (n, n))
    size = (arr.shape[0] - 4) ** n
    out = np.empty((size, n, n, n))

    def delta(i: int, j: int, k: int) -> np.ndarray:
        field = hess[..., i, j]
        return ((window(field, _unit(n, k, 1), 1) - window(field, _unit(n, k, -1), 1)) / (2.0 * h)).reshape(-1)

    for a in range(n):
        for b in range(a, n):
            for c in range(b, n):
                if a == b:
                    val = delta(a, a, c)
                elif b == c:
                    val = delta(b, b, a)
                else:
                    val = delta(a, b, c)
                for p, q, r in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
                    out[:, p, q, r] = val
    return out


def sigma2_of_hessians(hessians: np.ndarray) -> np.ndarray:
    """sigma_2 of each matrix as (tr^2 - |H|_F^2) / 2."""
    tr = np.trace(hessians, axis1=-2, axis2=-1)
    return 0.5 * (tr * tr - np.sum(hessians * hessians, axis=(-2, -1)))


def symmetric_eigenvalues(matrices: np.ndarray, sweeps: int = 12) -> np.ndarray:
    """Eigenvalues of a batch of symmetric matrices by cyclic Jacobi rotations.

    A fixed number of sweeps over all (p, q) pairs, every batch entry rotated
    in lockstep. Returns eigenvalues sorted descending, shape ``(..., n)``.
    """
    a = np.array(matrices, dtype=float, copy=True)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ParameterError(f"expected a batch of square matrices, got shape {a.shape}")
    n = a.shape[-1]
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    for _ in range(sweeps):
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[..., p, q].copy()
                active = apq != 0.0
                safe = np.where(active, apq, 1.0)
                with np.errstate(over="ignore"):
                    tau = (a[..., q, q] - a[..., p, p]) / (2.0 * safe)
                    sign = np.where(tau >= 0.0, 1.0, -1.0)
                    t = sign / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app = a[..., p, p].copy()
                aqq = a[..., q, q].copy()
                for k in range(n):
                    if k == p or k == q:
                        continue
                    akp = a[..., k, p].copy()
                    akq = a[..., k, q].copy()
                    a[..., k, p] = c * akp - s * akq
                    a[..., p, k] = a[..., k, p]
                    a[..., k, q] = s * akp + c * akq
                    a[..., q, k] = a[..., k, q]
                a[..., p, p] = c * c * app - 2.0 * s * c * apq + s * s * aqq
                a[..., q, q] = s * s * app + 2.0 * s * c * apq + c * c * aqq
                a[..., p, q] = 0.0
                a[..., q, p] = 0.0
    eig = np.diagonal(a, axis1=-2, axis2=-1)
    return -np.sort(-eig, axis=-1)
