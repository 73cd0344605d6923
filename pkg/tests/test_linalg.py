"""Tests for CSR helpers and the linear solvers"""

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from assembly import assemble_stiffness, restrict_to_interior
from errors import LinearSolverConvergenceError, SingularMatrixError
from linalg import CG, DIRECT, coo_to_csr, solve_linear, spmv, to_csr, write_matrix_market


def _tridiagonal(m: int, h: float):
    main = 2.0 * np.ones(m)
    off = -np.ones(m - 1)
    return to_csr(sp.diags([off, main, off], [-1, 0, 1])) / h ** 2


def test_coo_duplicates_are_summed():
    rows = np.array([0, 0, 1, 0])
    cols = np.array([1, 1, 0, 0])
    values = np.array([1.0, 2.0, 5.0, 4.0])
    A = coo_to_csr(rows, cols, values, (2, 2))
    assert A.toarray().tolist() == [[4.0, 3.0], [5.0, 0.0]]
    assert A.has_canonical_format
    for i in range(A.shape[0]):
        row_cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
        assert np.all(np.diff(row_cols) > 0)


def test_spmv_identity(rng):
    x = rng.standard_normal(6)
    assert np.array_equal(spmv(to_csr(sp.identity(6)), x), x)


def test_spmv_against_dense(rng):
    dense = rng.standard_normal((5, 5)) * (rng.random((5, 5)) < 0.5)
    x = rng.standard_normal(5)
    assert np.allclose(spmv(to_csr(dense), x), dense @ x, atol=1e-14)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError, match="Dimension mismatch"):
        spmv(to_csr(sp.identity(3)), np.ones(4))


def test_stencil_row_sum_zero(mesh4):
    K = assemble_stiffness(mesh4)
    product = spmv(K, np.ones(mesh4.num_nodes))
    assert np.allclose(product[mesh4.interior_nodes], 0.0, atol=1e-14)


@pytest.mark.parametrize("method", [DIRECT, CG])
def test_identity_solve(method, rng):
    b = rng.standard_normal(7)
    x, report = solve_linear(to_csr(sp.identity(7)), b, method=method)
    assert np.allclose(x, b, atol=1e-12)
    assert report.method == method


def test_one_dimensional_poisson():
    m = 63
    h = 1.0 / (m + 1)
    x = np.arange(1, m + 1) * h
    b = np.pi ** 2 * np.sin(np.pi * x)
    u, report = solve_linear(_tridiagonal(m, h), b)
    assert np.max(np.abs(u - np.sin(np.pi * x))) <= h * h
    assert report.residual_norm <= 1e-10 * np.linalg.norm(b)


def test_single_interior_node(mesh2):
    K = restrict_to_interior(assemble_stiffness(mesh2), mesh2)
    x, _ = solve_linear(K, np.array([1.0]))
    assert x.tolist() == [0.25]


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=20, deadline=None)
def test_direct_matches_dense(seed):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((20, 20)) + 20.0 * np.eye(20)
    b = rng.standard_normal(20)
    x, _ = solve_linear(to_csr(dense), b)
    assert np.allclose(x, np.linalg.solve(dense, b), atol=1e-10)
    assert np.linalg.norm(dense @ x - b) <= 1e-10 * np.linalg.norm(b)


@pytest.mark.parametrize("jacobi", [False, True])
def test_cg_on_interior_laplacian(mesh8, rng, jacobi):
    K = restrict_to_interior(assemble_stiffness(mesh8), mesh8)
    b = rng.standard_normal(K.shape[0])
    x, report = solve_linear(K, b, method=CG, tol=1e-12, jacobi=jacobi)
    direct, _ = solve_linear(K, b)
    assert report.iterations > 0
    assert report.residual_norm <= 1e-12 * np.linalg.norm(b)
    assert np.allclose(x, direct, atol=1e-9)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_cg_meets_tolerance_on_true_residual(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((60, 60))
    A = to_csr(M @ M.T / 60.0 + 0.05 * np.eye(60))
    b = rng.standard_normal(60)
    tol = 1e-10
    x, report = solve_linear(A, b, method=CG, tol=tol)
    assert report.residual_norm <= tol * np.linalg.norm(b)
    assert np.linalg.norm(A @ x - b) == pytest.approx(report.residual_norm)


def test_cg_zero_rhs(mesh8):
    K = restrict_to_interior(assemble_stiffness(mesh8), mesh8)
    x, report = solve_linear(K, np.zeros(K.shape[0]), method=CG)
    assert not x.any()
    assert report.iterations == 0


def test_cg_iteration_cap(mesh8, rng):
    K = restrict_to_interior(assemble_stiffness(mesh8), mesh8)
    with pytest.raises(LinearSolverConvergenceError) as info:
        solve_linear(K, rng.standard_normal(K.shape[0]), method=CG, max_iterations=2)
    assert info.value.report.method == CG
    assert info.value.report.residual_norm > 0.0


def test_exactly_singular():
    with pytest.raises(SingularMatrixError) as info:
        solve_linear(to_csr(np.array([[1.0, 2.0], [2.0, 4.0]])), np.ones(2))
    assert info.value.pivot == 1


def test_exactly_singular_names_dependent_column():
    A = to_csr(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 5.0]]))
    with pytest.raises(SingularMatrixError, match=r"\(pivot 1\)") as info:
        solve_linear(A, np.ones(3))
    assert info.value.pivot == 1


@pytest.mark.parametrize("diagonal, unknown", [
    ([1.0, 1e-17], 1),
    ([1e-17, 1.0, 2.0], 0),
    ([3.0, 2.0, 1e-18, 1.0], 2),
])
def test_negligible_pivot_named(diagonal, unknown):
    with pytest.raises(SingularMatrixError) as info:
        solve_linear(to_csr(np.diag(diagonal)), np.ones(len(diagonal)))
    assert info.value.pivot == unknown
    assert "pivot" in str(info.value)


def test_bad_arguments():
    A = to_csr(sp.identity(3))
    with pytest.raises(ValueError, match="Unknown linear solver"):
        solve_linear(A, np.ones(3), method="gmres")
    with pytest.raises(ValueError, match="does not match"):
        solve_linear(A, np.ones(4))
    with pytest.raises(ValueError, match="square"):
        solve_linear(to_csr(np.ones((2, 3))), np.ones(2))


def test_matrix_market_round_trip(tmp_path, mesh4):
    K = assemble_stiffness(mesh4)
    path = write_matrix_market(K, tmp_path / "stiffness", comment="stiffness n=4")
    assert path.name == "stiffness.mtx"
    loaded = scipy.io.mmread(str(path))
    assert np.allclose(loaded.toarray(), K.toarray(), atol=1e-15)
