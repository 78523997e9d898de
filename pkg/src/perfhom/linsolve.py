"""Jacobi-preconditioned conjugate gradients with a residual contract."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

DEFAULT_TOL = 1e-10
DENSE_LIMIT = 200


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


def cg_solve(
    A,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
    history: Optional[list] = None,
):
    """Solve A x = b for SPD A.

    Convergence is declared on the true residual ||b - A x|| <= tol ||b||;
    when the recursively updated residual claims convergence but the true
    one disagrees, the iteration restarts from the true residual.  If
    ``history`` is a list, iterates are appended to it.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side is not finite")
    n = len(b)
    if max_iter is None:
        max_iter = 20 * max(n, 1)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)

    diag = A.diagonal() if sp.issparse(A) else np.diag(A)
    if np.any(diag <= 0.0):
        raise SolverError("matrix has a non-positive diagonal entry; not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    it = 0
    target = tol * bnorm
    while True:
        z = inv_diag * r
        p = z.copy()
        rz = float(r @ z)
        rnorm = float(np.linalg.norm(r))
        while rnorm > target and it < max_iter:
            Ap = A @ p
            pAp = float(p @ Ap)
            if pAp <= 0.0:
                raise SolverError(f"non-positive curvature p^T A p = {pAp:g} at iteration {it}")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            if history is not None:
                history.append(x.copy())
            z = inv_diag * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
            rnorm = float(np.linalg.norm(r))
        r = b - A @ x
        true_rel = float(np.linalg.norm(r)) / bnorm
        if true_rel <= tol:
            return x, SolveReport(it, true_rel, True)
        if it >= max_iter:
            return x, SolveReport(it, true_rel, False)


def solve_or_raise(A, b, tol: float = DEFAULT_TOL, max_iter: Optional[int] = None, context: str = ""):
    x, report = cg_solve(A, b, tol=tol, max_iter=max_iter)
    if not report.converged:
        raise SolverError(
            f"{context}: CG did not converge in {report.iterations} iterations "
            f"(relative residual {report.relative_residual:.3e})"
        )
    return x, report


def dense_solve(A, b: np.ndarray) -> np.ndarray:
    """Direct solve for small systems; used as a test oracle."""
    n = len(b)
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to {DENSE_LIMIT} dofs, got {n}")
    M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    return np.linalg.solve(M, np.asarray(b, dtype=float))
