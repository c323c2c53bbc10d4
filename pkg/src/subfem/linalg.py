"""Sparse SPD linear algebra: CSR wrapper, Jacobi-preconditioned CG,
complex-shifted solves for the frequency-domain oracle, and cached LU
factorizations for time loops that reuse one matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from subfem.errors import NotConvergedError


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool

    def __str__(self):
        state = "converged" if self.converged else "NOT converged"
        return (f"{state} in {self.iterations} iterations, "
                f"rel. residual {self.relative_residual:.3e}")


class SparseSym:
    """Structurally symmetric CSR matrix with a full diagonal."""

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if (m != m.T).nnz != 0:
            raise ValueError("matrix must be symmetric")
        if m.shape[0] and np.any(m.diagonal() == 0.0):
            raise ValueError("every row must carry a diagonal entry")
        self.csr = m

    @property
    def n(self):
        return self.csr.shape[0]

    @property
    def row_offsets(self):
        return self.csr.indptr

    @property
    def col_indices(self):
        return self.csr.indices

    @property
    def values(self):
        return self.csr.data

    def diagonal(self):
        return self.csr.diagonal()

    def __matmul__(self, x):
        return self.csr @ x

    def __repr__(self):
        return f"SparseSym(n={self.n}, nnz={self.csr.nnz})"


def cg_solve(a: SparseSym, b: np.ndarray, tol: float = 1e-12,
             maxit: int | None = None, x0: np.ndarray | None = None,
             callback=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns (x, SolveReport) with ||b - Ax|| / ||b|| <= tol on success;
    raises NotConvergedError (carrying the report) otherwise.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must be in (0, 1)")
    mat = a.csr
    n = a.n
    if maxit is None:
        maxit = max(20 * n, 200)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    inv_diag = 1.0 / a.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - mat @ x
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol and it < maxit:
        ap = mat @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        res = np.linalg.norm(r) / bnorm
        if callback is not None:
            callback(x.copy())
    report = SolveReport(it, res, res <= tol)
    if not report.converged:
        raise NotConvergedError(report)
    return x, report


def complex_shift_solve(m: SparseSym, k: SparseSym, sigma: complex,
                        b: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Solve (sigma M + K) x = b for complex sigma by sparse LU.

    The contract is residual-only: ||b - (sigma M + K) x|| <= tol ||b||
    in the complex 2-norm, else NotConvergedError.
    """
    mat = (sigma * m.csr + k.csr).tocsc()
    bb = np.asarray(b, dtype=complex)
    if np.linalg.norm(bb) == 0.0:
        return np.zeros(m.n, dtype=complex)
    x = spla.splu(mat.astype(complex)).solve(bb)
    res = np.linalg.norm(bb - mat @ x) / np.linalg.norm(bb)
    if not res <= tol:
        raise NotConvergedError(SolveReport(1, float(res), False),
                                "complex shifted solve residual too large")
    return x


class LuSolver:
    """Cached sparse LU of an SPD matrix, for repeated solves with one
    matrix inside a time loop."""

    def __init__(self, a: SparseSym):
        self._lu = spla.splu(a.csr.tocsc())
        self.n = a.n

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)
