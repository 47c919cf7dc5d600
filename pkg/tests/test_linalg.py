import numpy as np
import pytest
import scipy.sparse

from hallsim.bands import strip_operator
from hallsim.errors import NonConvergence
from hallsim.linalg import (SparseSymmetricOperator, TridiagonalOperator, eig_dense_window,
                            eig_sparse_window, eig_tridiagonal_lowest, eig_tridiagonal_window,
                            sturm_count)
from hallsim.model import Grid2D, HalfPlaneEdge, PowerWall, Units

from oracles import jacobi_eigenvalues


def laplacian(n, h=1.0):
    return TridiagonalOperator(np.full(n, 2.0 / h**2), np.full(n - 1, -1.0 / h**2))


def test_sturm_count_against_closed_form():
    op = laplacian(50)
    ev = jacobi_eigenvalues(50, 2.0, -1.0)
    xs = np.linspace(-0.5, 4.5, 37) + 1e-3
    expected = np.searchsorted(ev, xs)
    np.testing.assert_array_equal(sturm_count(op, xs), expected)
    for x, e in zip(xs, expected):
        assert sturm_count(op, float(x)) == e


def test_window_finds_exactly_the_closed_form_eigenvalues():
    op = laplacian(200, 0.1)
    ev = jacobi_eigenvalues(200, 200.0, -100.0)
    lo, hi = 50.0, 80.0
    pairs = eig_tridiagonal_window(op, lo, hi)
    ref = ev[(ev >= lo) & (ev <= hi)]
    assert len(pairs) == len(ref)
    np.testing.assert_allclose([p.energy for p in pairs], ref, rtol=1e-12)
    for p in pairs:
        assert p.residual < 1e-9
        assert np.linalg.norm(p.vector) == pytest.approx(1.0)


def test_empty_window_and_bad_window():
    op = laplacian(10)
    assert eig_tridiagonal_window(op, 5.0, 6.0) == []
    with pytest.raises(ValueError):
        eig_tridiagonal_window(op, 1.0, 1.0)


def test_lowest_values_and_vectors_agree():
    rng = np.random.default_rng(3)
    op = TridiagonalOperator(rng.uniform(-1, 1, 60), rng.uniform(0.1, 1, 59))
    vals = eig_tridiagonal_lowest(op, 5, vectors=False)
    pairs = eig_tridiagonal_lowest(op, 5)
    np.testing.assert_allclose(vals, [p.energy for p in pairs], atol=1e-12)
    dense = np.linalg.eigvalsh(op.to_dense())[:5]
    np.testing.assert_allclose(vals, dense, atol=1e-12)


def small_strip():
    grid = Grid2D.dirichlet_top(12, 24, 0.35, 0.3, 3.0)
    return strip_operator(HalfPlaneEdge(PowerWall(1.0, 2.0)), grid, Units(1.0))


def test_strip_operator_is_hermitian():
    op = small_strip()
    assert op.symmetry_error(0) < 1e-12
    A = op.matrix
    assert abs(A - A.conj().T).max() < 1e-12


def test_lanczos_window_matches_dense_solve():
    op = small_strip()
    lo, hi = 1.2, 3.0
    dense = eig_dense_window(op.matrix, lo, hi)
    sparse = eig_sparse_window(op, lo, hi)
    assert len(sparse) == len(dense) > 0
    np.testing.assert_allclose([p.energy for p in sparse], [p.energy for p in dense], atol=1e-9)
    V = np.column_stack([p.vector for p in sparse])
    np.testing.assert_allclose(V.conj().T @ V, np.eye(len(sparse)), atol=1e-8)


def test_lanczos_counts_degenerate_levels():
    # two identical decoupled blocks: every eigenvalue is doubled
    rng = np.random.default_rng(1)
    M = scipy.sparse.random(150, 150, density=0.05, random_state=2)
    M = M + M.T + scipy.sparse.diags(rng.uniform(0, 10, 150))
    A = scipy.sparse.block_diag([M, M]).tocsr()
    ev = np.linalg.eigvalsh(A.toarray())
    lo, hi = 4.0, 5.0
    ref = ev[(ev >= lo) & (ev <= hi)]
    pairs = eig_sparse_window(SparseSymmetricOperator(A), lo, hi)
    np.testing.assert_allclose([p.energy for p in pairs], ref, atol=1e-8)


def test_lanczos_refuses_overfull_window():
    op = small_strip()
    with pytest.raises(NonConvergence):
        eig_sparse_window(op, 0.0, 30.0, max_pairs=4)
