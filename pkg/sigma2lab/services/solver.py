"""
Damped Newton solver for sigma_2(D^2 u) = f(x, u, Du) on uniform grids.

The unknowns are the nodal values at depth >= 1; the boundary layer carries
Dirichlet data. The residual sigma_2(D^2_h u) - f(x, u, D_h u) lives on the
same depth-1 nodes, so the Jacobian is square.
"""

import logging
import warnings
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import LinearOperator, MatrixRankWarning, gmres, spsolve

from sigma2lab.config.settings import Settings, get_settings
from sigma2lab.exceptions import (
    AdmissibilityError,
    DomainError,
    LinearAlgebraError,
    NonconvergenceError,
    ParameterError,
)
from sigma2lab.schemas.grid_schemas import (
    AdmissibilityReport,
    GridFunction,
    HessianField,
    RHSSpec,
    SolveOutcome,
)
from sigma2lab.services.cone_algebra import gamma2_mask
from sigma2lab.services.stencils import (
    gradient_stack,
    hessian_stack,
    sigma2_of_hessians,
    symmetric_eigenvalues,
)

logger = logging.getLogger(__name__)


class NewtonSolver:
    """Finite-difference Newton solver with Gamma_2 safeguarding."""

    def __init__(self, settings: Optional[Settings] = None):
        """Initialize the solver with laboratory settings."""
        self.settings = settings or get_settings()
        logger.debug(
            f"Newton solver initialized (max_iter={self.settings.solver_max_iter}, "
            f"direct limit={self.settings.direct_solve_limit})"
        )

    # ------------------------------------------------------------------
    # Discrete derivatives and admissibility
    # ------------------------------------------------------------------

    def hessian_field(self, u: GridFunction) -> HessianField:
        """Central-difference Hessians and gradients at depth-1 nodes."""
        arr = u.array()
        hess = hessian_stack(arr, u.h, depth=1)
        grads = gradient_stack(arr, u.h, depth=1)
        eig = symmetric_eigenvalues(hess, self.settings.rotation_sweeps)
        _, _, inside = gamma2_mask(eig, self.settings.cone_boundary_tol)
        return HessianField(
            n=u.n, m=u.m, h=u.h, origin=u.origin,
            hessians=hess, gradients=grads, admissible=bool(np.all(inside)),
        )

    def admissibility_scan(self, u: GridFunction) -> AdmissibilityReport:
        """Per-node Gamma_2 certificates at depth-1 nodes."""
        hess = hessian_stack(u.array(), u.h, depth=1)
        eig = symmetric_eigenvalues(hess, self.settings.rotation_sweeps)
        tol = self.settings.cone_boundary_tol
        s1, s2, inside = gamma2_mask(eig, tol)
        scale = np.max(np.abs(eig), axis=-1)
        weak = (s1 >= -tol * scale) & (s2 >= -tol * scale * scale)
        bad = np.flatnonzero(~inside)
        first = u.node_index(bad[0], depth=1) if bad.size else None
        return AdmissibilityReport(
            sigma1=s1,
            sigma2=s2,
            in_gamma2=inside,
            admissible=bool(bad.size == 0),
            weakly_admissible=bool(np.all(weak)),
            min_sigma2=float(np.min(s2)),
            min_laplacian=float(np.min(s1)),
            first_bad_node=first,
        )

    def discrete_sigma2(self, u: GridFunction) -> np.ndarray:
        """sigma_2(D^2_h u) at depth-1 nodes."""
        return sigma2_of_hessians(hessian_stack(u.array(), u.h, depth=1))

    def _node_data(self, u: GridFunction) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        arr = u.array()
        x = u.points(1).reshape(-1, u.n)
        z = u.interior(1).reshape(-1)
        p = gradient_stack(arr, u.h, depth=1)
        hess = hessian_stack(arr, u.h, depth=1)
        return x, z, p, hess

    def residual(self, u: GridFunction, rhs: RHSSpec) -> np.ndarray:
        """sigma_2(D^2_h u) - f(x, u, D_h u) at depth-1 nodes."""
        x, z, p, hess = self._node_data(u)
        return sigma2_of_hessians(hess) - rhs.evaluate(x, z, p)

    # ------------------------------------------------------------------
    # Jacobian and linear solves
    # ------------------------------------------------------------------

    def jacobian(self, u: GridFunction, rhs: RHSSpec) -> sparse.csr_matrix:
        """Sparse Jacobian of the residual in the depth-1 unknowns.

        Row c holds sum_i F_ii D_ii + 2 sum_{i<j} F_ij D_ij - f_z - sum_k f_{p_k} delta_k
        expanded on the stencil of node c; columns of boundary nodes are dropped.
        """
        n, m, h = u.n, u.m, u.h
        x, z, p, hess = self._node_data(u)
        tr = np.trace(hess, axis1=-2, axis2=-1)
        F = tr[:, None, None] * np.eye(n) - hess
        fz = rhs.grad_z(x, z, p)
        fp = rhs.grad_p(x, z, p)

        inner = m - 2
        size = inner ** n
        idx = np.indices((inner,) * n).reshape(n, -1) + 1
        unknown = -np.ones((m,) * n, dtype=np.int64)
        unknown[(slice(1, m - 1),) * n] = np.arange(size).reshape((inner,) * n)
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        vals: List[np.ndarray] = []
        all_rows = np.arange(size)

        def add(offset, coef):
            col = unknown[tuple(idx + np.asarray(offset)[:, None])]
            keep = col >= 0
            rows.append(all_rows[keep])
            cols.append(col[keep])
            vals.append(np.broadcast_to(coef, (size,))[keep])

        h2 = h * h
        add([0] * n, -2.0 * np.trace(F, axis1=-2, axis2=-1) / h2 - fz)
        for i in range(n):
            e = [0] * n
            e[i] = 1
            add(e, F[:, i, i] / h2 - fp[:, i] / (2.0 * h))
            add([-v for v in e], F[:, i, i] / h2 + fp[:, i] / (2.0 * h))
            for j in range(i + 1, n):
                c = F[:, i, j] / (2.0 * h2)
                pp = [0] * n
                pp[i], pp[j] = 1, 1
                pm = [0] * n
                pm[i], pm[j] = 1, -1
                add(pp, c)
                add([-v for v in pp], c)
                add(pm, -c)
                add([-v for v in pm], -c)

        J = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
        )
        return J.tocsr()

    def linear_solve(self, J: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
        """Solve J x = b: sparse LU below the direct limit, Jacobi-preconditioned GMRES above."""
        size = J.shape[0]
        if size <= self.settings.direct_solve_limit:
            with warnings.catch_warnings():
                warnings.simplefilter("error", MatrixRankWarning)
                try:
                    x = spsolve(J.tocsc(), b)
                except (MatrixRankWarning, RuntimeError) as e:
                    raise LinearAlgebraError(f"Newton system of size {size} is singular: {e}") from e
        else:
            diag = J.diagonal()
            if np.any(diag == 0.0):
                raise LinearAlgebraError("Newton system has a zero diagonal entry; no Jacobi preconditioner")
            M = LinearOperator(J.shape, matvec=lambda v: v / diag)
            x, info = gmres(
                J, b, M=M, rtol=self.settings.krylov_rtol, restart=self.settings.krylov_restart, maxiter=1000
            )
            if info != 0:
                raise LinearAlgebraError(f"GMRES did not converge on a system of size {size} (info={info})")
        if not np.all(np.isfinite(x)):
            raise LinearAlgebraError("Newton step is not finite")
        return x

    # ------------------------------------------------------------------
    # Initialization
    # ------------------------------------------------------------------

    def default_initial_guess(self, boundary: GridFunction) -> GridFunction:
        """Admissible quadratic fitted to the boundary trace in least squares.

        The fitted Hessian A is shifted to A + mu I until the grid function
        q_mu(x) = q(x) + mu/2 (|x - c|^2 - max_boundary |x - c|^2) is
        admissible; q_mu lies below q on the boundary, so the boundary trace
        meets the interior with a convex kink.
        """
        n, m = boundary.n, boundary.m
        pts = boundary.points().reshape(-1, n) - boundary.center
        on_boundary = np.ones((m,) * n, dtype=bool)
        on_boundary[(slice(1, m - 1),) * n] = False
        on_boundary = on_boundary.reshape(-1)
        xb = pts[on_boundary]
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        cols = [0.5 * xb[:, i] ** 2 if i == j else xb[:, i] * xb[:, j] for i, j in pairs]
        cols += [xb[:, i] for i in range(n)] + [np.ones(len(xb))]
        coef, *_ = np.linalg.lstsq(np.stack(cols, axis=1), boundary.values[on_boundary], rcond=None)
        A = np.zeros((n, n))
        for (i, j), c in zip(pairs, coef[: len(pairs)]):
            A[i, j] = A[j, i] = c
        b = coef[len(pairs): len(pairs) + n]
        c0 = coef[-1]
        sq = np.sum(pts * pts, axis=1)
        rmax = float(np.max(sq[on_boundary]))
        base = 0.5 * np.einsum("ki,ij,kj->k", pts, A, pts) + pts @ b + c0
        mu = 0.0
        step = 1e-3 * max(1.0, float(np.max(np.abs(A))))
        for attempt in range(60):
            values = np.where(on_boundary, boundary.values, base + 0.5 * mu * (sq - rmax))
            guess = boundary.with_values(values)
            if self.admissibility_scan(guess).admissible:
                logger.info(f"Initial guess: fitted quadratic with shift mu={mu:.3g} after {attempt} doublings")
                return guess
            mu = step if mu == 0.0 else 2.0 * mu
        raise AdmissibilityError("could not build an admissible initial guess from the boundary trace")

    # ------------------------------------------------------------------
    # Newton iteration
    # ------------------------------------------------------------------

    def _check_positive(self, u: GridFunction, rhs: RHSSpec) -> float:
        x, z, p, _ = self._node_data(u)
        f = rhs.evaluate(x, z, p)
        if not np.all(np.isfinite(f)) or np.min(f) <= 0.0:
            k = int(np.argmin(np.where(np.isfinite(f), f, -np.inf)))
            raise DomainError(
                f"right-hand side must be positive; f = {f[k]:.6g} at node {u.node_index(k, depth=1)}"
            )
        return float(np.max(np.abs(f)))

    def solve(
        self,
        rhs: RHSSpec,
        boundary: GridFunction,
        init: Optional[GridFunction] = None,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
    ) -> SolveOutcome:
        """Damped Newton iteration for sigma_2(D^2_h u) = f with Dirichlet data from ``boundary``.

        Args:
            rhs: right-hand side f(x, z, p)
            boundary: grid function whose boundary layer is the Dirichlet trace
            init: admissible starting iterate (default: fitted quadratic)
            tol: residual max-norm tolerance (default 1e-10 max(1, |f|_inf))
            max_iter: maximum number of Newton passes

        Returns:
            SolveOutcome with the converged grid function
        """
        cfg = self.settings
        max_iter = cfg.solver_max_iter if max_iter is None else max_iter
        if max_iter < 1:
            raise ParameterError(f"max_iter must be positive, got {max_iter}")
        if init is None:
            init = self.default_initial_guess(boundary)
        if (init.n, init.m, init.h) != (boundary.n, boundary.m, boundary.h):
            raise ParameterError("initial guess and boundary trace live on different grids")

        n, m = boundary.n, boundary.m
        interior = (slice(1, m - 1),) * n
        arr = boundary.array().copy()
        arr[interior] = init.array()[interior]
        u = boundary.with_values(arr)

        scan = self.admissibility_scan(u)
        if not scan.admissible:
            raise AdmissibilityError(
                f"initial iterate is not admissible at node {scan.first_bad_node}", node=scan.first_bad_node
            )
        f_sup = self._check_positive(u, rhs)
        tol = cfg.solver_tol_scale * max(1.0, f_sup) if tol is None else tol
        logger.info(f"Newton solve n={n} m={m} unknowns={(m - 2) ** n} tol={tol:.3e}")

        res = self.residual(u, rhs)
        rnorm = float(np.max(np.abs(res)))
        damping: List[float] = []
        history: List[float] = [rnorm]

        for iteration in range(1, max_iter + 1):
            logger.debug(f"Newton pass {iteration}: residual {rnorm:.3e}")
            if rnorm <= tol:
                logger.info(f"Newton converged in {iteration} passes, residual {rnorm:.3e}")
                return SolveOutcome(
                    u=u,
                    iterations=iteration,
                    final_residual=rnorm,
                    admissible=True,
                    damping_history=damping,
                    residual_history=history,
                    tolerance=tol,
                )
            delta = self.linear_solve(self.jacobian(u, rhs), -res)
            step = 1.0
            while True:
                cand_arr = u.array().copy()
                cand_arr[interior] += step * delta.reshape((m - 2,) * n)
                cand = u.with_values(cand_arr)
                if self.admissibility_scan(cand).admissible:
                    cand_res = self.residual(cand, rhs)
                    cand_norm = float(np.max(np.abs(cand_res)))
                    if cand_norm < rnorm:
                        break
                step *= cfg.solver_backtrack
                logger.debug(f"Backtracking to step {step:.3e}")
                if step < cfg.solver_step_floor:
                    logger.error(f"Line search stalled at pass {iteration}, residual {rnorm:.3e}")
                    raise NonconvergenceError(
                        f"line search fell below step {cfg.solver_step_floor} at Newton pass {iteration}",
                        details={"iteration": iteration, "residual": rnorm, "damping": damping, "residuals": history},
                    )
            u, res, rnorm = cand, cand_res, cand_norm
            damping.append(step)
            history.append(rnorm)

        logger.error(f"Newton did not converge in {max_iter} passes, residual {rnorm:.3e}")
        raise NonconvergenceError(
            f"no convergence in {max_iter} Newton passes (residual {rnorm:.3e}, tol {tol:.3e})",
            details={"iteration": max_iter, "residual": rnorm, "damping": damping, "residuals": history},
        )


def solve(
    rhs: RHSSpec,
    boundary: GridFunction,
    init: Optional[GridFunction] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> SolveOutcome:
    """Solve with the default settings."""
    return NewtonSolver().solve(rhs, boundary, init, tol, max_iter)


def admissibility_scan(u: GridFunction) -> AdmissibilityReport:
    return NewtonSolver().admissibility_scan(u)


def hessian_field(u: GridFunction) -> HessianField:
    return NewtonSolver().hessian_field(u)


def discrete_sigma2(u: GridFunction) -> np.ndarray:
    return NewtonSolver().discrete_sigma2(u)


def default_initial_guess(boundary: GridFunction) -> GridFunction:
    return NewtonSolver().default_initial_guess(boundary)
