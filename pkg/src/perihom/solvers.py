"""Conjugate-gradient solvers shared by the cell and domain problems."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import SolverDiverged

__all__ = ["SolveStats", "pcg", "jacobi_preconditioner", "amg_preconditioner"]


class SolveStats:
    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual  # relative, in the Euclidean norm
        self.tol = tol

    def as_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual, "tol": self.tol}


def jacobi_preconditioner(matrix: sp.spmatrix):
    inv_diag = 1.0 / matrix.diagonal()

    def apply(r):
        return inv_diag * r

    return apply


def amg_preconditioner(matrix: sp.spmatrix, near_nullspace: np.ndarray | None = None):
    """Smoothed-aggregation V-cycle; falls back to Jacobi if pyamg is missing.

    The setup draws start vectors from numpy's global RNG; it is pinned (and
    restored) here so repeated runs build bitwise-identical hierarchies.
    """
    try:
        import pyamg
    except ImportError:
        return jacobi_preconditioner(matrix)
    state = np.random.get_state()
    np.random.seed(1729)
    try:
        ml = pyamg.smoothed_aggregation_solver(
            sp.csr_matrix(matrix), B=near_nullspace, max_coarse=64
        )
    finally:
        np.random.set_state(state)
    op = ml.aspreconditioner(cycle="V")

    def apply(r):
        return op.matvec(r)

    return apply


def pcg(matrix, rhs, tol: float, max_iter: int | None = None, precond=None,
        project=None, x0=None):
    """Preconditioned CG with an optional per-iteration projection.

    ``project`` is applied to the right-hand side, the initial guess, and each
    preconditioned residual; it must be the orthogonal projector onto the
    complement of the operator's null space (constant modes on the torus,
    rigid modes for pure-Neumann problems).  Convergence is declared when the
    true residual satisfies ||b - A x|| <= tol * ||b||.
    """
    matvec = matrix.dot if hasattr(matrix, "dot") else matrix
    b = np.asarray(rhs, dtype=float).copy()
    if project is not None:
        b = project(b)
    norm_b = np.linalg.norm(b)
    n = b.shape[0]
    if max_iter is None:
        max_iter = max(20 * int(np.sqrt(n)), 2000)
    if norm_b == 0.0:
        return np.zeros_like(b), SolveStats(0, 0.0, tol)
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, float).copy()
    if project is not None:
        x = project(x)
    r = b - matvec(x)
    if project is not None:
        r = project(r)
    z = precond(r) if precond is not None else r.copy()
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = float(r @ z)
    rel = np.linalg.norm(r) / norm_b
    it = 0
    while rel > tol and it < max_iter:
        Ap = matvec(p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if project is not None and it % 50 == 49:
            r = project(b - matvec(x))  # periodic re-projection kills drift
        z = precond(r) if precond is not None else r
        if project is not None:
            z = project(z)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rel = np.linalg.norm(r) / norm_b
        it += 1
    if rel > tol:
        raise SolverDiverged(tol, it, rel)
    return x, SolveStats(it, float(rel), tol)
