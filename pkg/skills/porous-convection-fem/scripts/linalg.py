#!/usr/bin/env python3
"""
Sparse matrices and linear solvers
CSR storage comes from scipy.sparse; direct solves use SuperLU (splu),
iterative solves use conjugate gradients with an optional Jacobi
preconditioner.
"""

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from errors import LinearSolverConvergenceError, SingularMatrixError

SparseMatrix = sp.csr_matrix

DIRECT = "direct"
CG = "cg"
PIVOT_TOLERANCE = 1e-14
DENSE_PIVOT_LIMIT = 4000


@dataclass
class LinearSolveReport:
    """Outcome of one linear solve"""
    method: str
    iterations: int
    residual_norm: float


def to_csr(matrix) -> SparseMatrix:
    """CSR with sorted column indices and duplicates summed"""
    csr = sp.csr_matrix(matrix)
    csr.sum_duplicates()
    csr.sort_indices()
    return csr


def coo_to_csr(rows: np.ndarray, cols: np.ndarray, values: np.ndarray, shape: tuple[int, int]) -> SparseMatrix:
    """Build CSR from triplets; repeated (row, col) pairs are accumulated"""
    coo = sp.coo_matrix((values.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    return to_csr(coo)


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(f"Dimension mismatch: matrix {A.shape} times vector {x.shape}")
    return A @ x


def _residual_norm(A: SparseMatrix, x: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(A @ x - b))


def _dense_pivot(A: SparseMatrix) -> Optional[int]:
    """Unknown whose column loses rank under partial-pivoting LU, or None"""
    if A.shape[0] > DENSE_PIVOT_LIMIT:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        factors, _ = scipy.linalg.lu_factor(A.toarray(), check_finite=False)
    pivots = np.abs(np.diag(factors))
    scale = max(float(pivots.max(initial=0.0)), 1.0)
    small = np.flatnonzero(pivots <= PIVOT_TOLERANCE * scale)
    return int(small[0]) if small.size else int(np.argmin(pivots))


def _solve_direct(A: SparseMatrix, b: np.ndarray) -> tuple[np.ndarray, LinearSolveReport]:
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        # SuperLU reports "Factor is exactly singular"
        raise SingularMatrixError(f"Direct factorization failed: {exc}", pivot=_dense_pivot(A)) from exc

    pivots = np.abs(lu.U.diagonal())
    scale = max(float(pivots.max(initial=0.0)), 1.0)
    small = np.flatnonzero(pivots <= PIVOT_TOLERANCE * scale)
    if small.size:
        k = int(small[0])
        # Pr A Pc = L U: column k of U is unknown i with perm_c[i] == k
        unknown = int(np.flatnonzero(lu.perm_c == k)[0])
        raise SingularMatrixError(f"Negligible pivot {pivots[k]:.3e} in LU factorization", pivot=unknown)

    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("Direct solve produced non-finite values")
    return x, LinearSolveReport(DIRECT, 0, _residual_norm(A, x, b))


def _solve_cg(
    A: SparseMatrix,
    b: np.ndarray,
    tol: float,
    max_iterations: Optional[int],
    jacobi: bool,
) -> tuple[np.ndarray, LinearSolveReport]:
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), LinearSolveReport(CG, 0, 0.0)

    count = 0

    def _count(_xk):
        nonlocal count
        count += 1

    preconditioner = None
    if jacobi:
        inv_diag = 1.0 / A.diagonal()
        preconditioner = spla.LinearOperator(A.shape, matvec=lambda v: inv_diag * v)

    maxiter = max_iterations if max_iterations is not None else 10 * A.shape[0]
    target = tol * b_norm
    x = np.zeros_like(b)
    residual = b_norm
    # scipy tracks a recurrence residual; restart from x until the true one meets tol
    while residual > target and count < maxiter:
        before = count
        x, _ = spla.cg(
            A, b, x0=x, rtol=0.0, atol=0.5 * target,
            maxiter=maxiter - count, M=preconditioner, callback=_count,
        )
        residual = _residual_norm(A, x, b)
        if count == before:
            break

    report = LinearSolveReport(CG, count, residual)
    if residual > target:
        raise LinearSolverConvergenceError(
            f"CG did not reach relative residual {tol:g} in {count} iterations "
            f"(residual {report.residual_norm:.3e}, |b| {b_norm:.3e})",
            report,
        )
    return x, report


def solve_linear(
    A: SparseMatrix,
    b: np.ndarray,
    method: str = DIRECT,
    tol: float = 1e-10,
    max_iterations: Optional[int] = None,
    jacobi: bool = False,
) -> tuple[np.ndarray, LinearSolveReport]:
    """Solve A x = b; cg only for symmetric positive definite A"""
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"Matrix must be square, got {A.shape}")
    if b.shape != (A.shape[0],):
        raise ValueError(f"Right-hand side shape {b.shape} does not match matrix {A.shape}")

    if method == DIRECT:
        return _solve_direct(A, b)
    if method == CG:
        return _solve_cg(A, b, tol, max_iterations, jacobi)
    raise ValueError(f"Unknown linear solver method {method!r}; use '{DIRECT}' or '{CG}'")


def write_matrix_market(A: SparseMatrix, path: Path, comment: str = "") -> Path:
    """Dump a matrix in MatrixMarket coordinate format"""
    path = Path(path)
    if path.suffix != ".mtx":
        path = path.with_name(path.name + ".mtx")
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
    return path
