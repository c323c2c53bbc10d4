"""Sparse SPD solvers: CG contract, complex-shifted solves."""

import numpy as np
import pytest
import scipy.sparse as sp

from subfem.errors import NotConvergedError
from subfem.fem import DensityLoad, assemble_load, build_space
from subfem.linalg import LuSolver, SparseSym, cg_solve, complex_shift_solve
from subfem.mesh import structured_square


def test_sparse_sym_validation():
    good = SparseSym(sp.eye(3, format="csr"))
    assert good.n == 3
    assert np.allclose(good.diagonal(), 1.0)
    with pytest.raises(ValueError):
        SparseSym(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])))
    with pytest.raises(ValueError):
        SparseSym(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))


def test_cg_identity_one_iteration():
    a = SparseSym(sp.eye(5, format="csr"))
    b = np.arange(1.0, 6.0)
    x, report = cg_solve(a, b)
    assert np.allclose(x, b, atol=1e-13)
    assert report.iterations <= 1
    assert report.converged


def test_cg_diagonal_case():
    a = SparseSym(sp.diags([1.0, 4.0]).tocsr())
    x, _ = cg_solve(a, np.array([1.0, 4.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-13)


def test_cg_zero_rhs():
    a = SparseSym(sp.eye(4, format="csr"))
    x, report = cg_solve(a, np.zeros(4))
    assert np.all(x == 0.0) and report.iterations == 0


def test_cg_manufactured_stiffness():
    """P1 stiffness on structured_square(8) with a manufactured RHS."""
    space = build_space(structured_square(8), 1)
    rng = np.random.default_rng(7)
    x_true = rng.standard_normal(space.n_free)
    b = space.K @ x_true
    x, report = cg_solve(space.K, b, tol=1e-12)
    res = np.linalg.norm(b - space.K @ x) / np.linalg.norm(b)
    assert res <= 1e-12
    assert report.converged


def test_cg_not_converged_carries_report():
    space = build_space(structured_square(8), 1)
    b = np.ones(space.n_free)
    with pytest.raises(NotConvergedError) as err:
        cg_solve(space.K, b, tol=1e-14, maxit=2)
    assert err.value.report.iterations == 2
    assert not err.value.report.converged


def test_cg_energy_error_monotone():
    """The A-norm of the error decreases monotonically along CG iterates
    (equivalently the A^-1 norm of the residual)."""
    space = build_space(structured_square(6), 1)
    rng = np.random.default_rng(3)
    x_true = rng.standard_normal(space.n_free)
    b = space.K @ x_true
    history = []
    cg_solve(space.K, b, tol=1e-12,
             callback=lambda xk: history.append(xk))
    energies = [float((x_true - xk) @ (space.K @ (x_true - xk)))
                for xk in history]
    diffs = np.diff(energies)
    assert np.all(diffs <= 1e-12 * max(energies))


def test_complex_shift_1x1_closed_form():
    m = SparseSym(sp.csr_matrix(np.array([[2.0]])))
    k = SparseSym(sp.csr_matrix(np.array([[3.0]])))
    sigma = 1.5 + 0.7j
    b = np.array([1.0 + 0.5j])
    x = complex_shift_solve(m, k, sigma, b)
    assert abs(x[0] - b[0] / (sigma * 2.0 + 3.0)) < 1e-14


def test_complex_shift_zero_rhs():
    space = build_space(structured_square(4), 1)
    x = complex_shift_solve(space.M, space.K, 1.0 + 1.0j,
                            np.zeros(space.n_free))
    assert np.all(x == 0.0)


def test_complex_shift_real_sigma_matches_cg():
    space = build_space(structured_square(8), 1)
    b = assemble_load(space, DensityLoad(lambda p: np.ones(len(p)))).b
    sigma = 2.5
    x_direct = complex_shift_solve(space.M, space.K, sigma, b.astype(complex))
    shifted = SparseSym(sigma * space.M.csr + space.K.csr)
    x_cg, _ = cg_solve(shifted, b, tol=1e-13)
    assert np.max(np.abs(x_direct.real - x_cg)) < 1e-10 * np.max(np.abs(x_cg))
    assert np.max(np.abs(x_direct.imag)) < 1e-12


def test_complex_shift_conjugate_symmetry():
    space = build_space(structured_square(6), 2)
    rng = np.random.default_rng(11)
    b = rng.standard_normal(space.n_free)
    sigma = 0.8 + 2.3j
    x = complex_shift_solve(space.M, space.K, sigma, b)
    xc = complex_shift_solve(space.M, space.K, np.conj(sigma), b)
    assert np.max(np.abs(xc - np.conj(x))) < 1e-12 * np.max(np.abs(x))


def test_lu_solver_reuse():
    space = build_space(structured_square(8), 2)
    lu = LuSolver(space.K)
    rng = np.random.default_rng(5)
    for _ in range(3):
        b = rng.standard_normal(space.n_free)
        x = lu.solve(b)
        assert np.linalg.norm(b - space.K @ x) <= 1e-11 * np.linalg.norm(b)
