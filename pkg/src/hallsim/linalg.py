"""Eigensolvers: Sturm-certified tridiagonal windows and shift-invert Lanczos.

The tridiagonal path certifies completeness with its own Sturm counts and
hands the index range to LAPACK bisection + inverse iteration
(``scipy.linalg.eigh_tridiagonal``), then refines every pair by a Rayleigh
quotient.  The 2D path factorizes H - sigma once (sparse LU) and runs a
Lanczos recursion with full reorthogonalization on (H - sigma)^-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import FactorizationSingular, NonConvergence

EPS = np.finfo(float).eps


@dataclass
class EigenPair:
    energy: float
    vector: np.ndarray
    residual: float
    norm: float = 1.0
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TridiagonalOperator:
    d: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        if len(self.e) != len(self.d) - 1:
            raise ValueError("off-diagonal must have length N-1")

    @property
    def n(self):
        return len(self.d)

    def matvec(self, x):
        y = self.d * x
        y[:-1] += self.e * x[1:]
        y[1:] += self.e * x[:-1]
        return y

    def kinetic_scale(self):
        """Size of the stencil part, used to scale residual tolerances."""
        return 4.0 * float(np.max(np.abs(self.e))) if self.n > 1 else 0.0

    def to_dense(self):
        return np.diag(self.d) + np.diag(self.e, 1) + np.diag(self.e, -1)


def sturm_count(op: TridiagonalOperator, x) -> int | np.ndarray:
    """Number of eigenvalues strictly below ``x`` (LDL^T inertia)."""
    if np.ndim(x) == 0:
        return _sturm_scalar(op.d.tolist(), (op.e * op.e).tolist(), float(x))
    xs = np.asarray(x, dtype=float)
    d, e2 = op.d, op.e * op.e
    # a zero pivot is nudged to +tiny, i.e. x -> x - 0, keeping the count strict
    tiny = EPS * (np.abs(xs) + 1.0)
    q = d[0] - xs
    q = np.where(q == 0.0, tiny, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, len(d)):
        q = (d[i] - xs) - e2[i - 1] / q
        q = np.where(q == 0.0, tiny, q)
        count += q < 0
    return count


def _sturm_scalar(d, e2, x):
    tiny = EPS * (abs(x) + 1.0)
    q = (d[0] - x) or tiny
    count = 1 if q < 0 else 0
    for i in range(1, len(d)):
        q = ((d[i] - x) - e2[i - 1] / q) or tiny
        if q < 0:
            count += 1
    return count


def residual_bound(op: TridiagonalOperator, E: float, tol: float) -> float:
    # roundoff floor of a converged pair grows with the stencil size 1/h^2
    return max(tol, 64 * EPS * (op.kinetic_scale() + abs(E)))


def _refine(op, vals, vecs, tol, offset=0):
    pairs = []
    for k in range(len(vals)):
        v = vecs[:, k]
        v = v / np.linalg.norm(v)
        Tv = op.matvec(v)
        E = float(v @ Tv)
        res = float(np.linalg.norm(Tv - E * v))
        if not np.isfinite(res) or res > residual_bound(op, E, tol):
            raise NonConvergence(f"eigenpair {offset + k} residual {res:.3e}", offset + k)
        pairs.append(EigenPair(E, v, res))
    return pairs


def _bisection_tol(op, lo, hi):
    return 1e-15 * max(1.0, abs(lo), abs(hi))


def eig_tridiagonal_window(op: TridiagonalOperator, lo: float, hi: float, tol: float = 1e-9):
    """All eigenpairs with lo <= E <= hi, certified by Sturm counts."""
    if not lo < hi:
        raise ValueError("window needs lo < hi")
    i0 = sturm_count(op, lo)
    i1 = sturm_count(op, np.nextafter(hi, np.inf))
    if i1 <= i0:
        return []
    vals, vecs = scipy.linalg.eigh_tridiagonal(
        op.d, op.e, select="i", select_range=(i0, i1 - 1),
        tol=_bisection_tol(op, lo, hi))
    if len(vals) != i1 - i0:
        raise NonConvergence("bisection returned the wrong number of eigenvalues")
    return _refine(op, vals, vecs, tol, offset=i0)


def eig_tridiagonal_lowest(op: TridiagonalOperator, k: int, tol: float = 1e-9, vectors=True):
    """The k lowest eigenpairs (or eigenvalues only when ``vectors`` is False)."""
    k = min(k, op.n)
    scale = max(abs(float(np.min(op.d))), 1.0)
    if not vectors:
        vals = scipy.linalg.eigh_tridiagonal(
            op.d, op.e, eigvals_only=True, select="i", select_range=(0, k - 1),
            tol=1e-15 * scale)
        return np.asarray(vals)
    vals, vecs = scipy.linalg.eigh_tridiagonal(
        op.d, op.e, select="i", select_range=(0, k - 1), tol=1e-15 * scale)
    return _refine(op, vals, vecs, tol)


# -- 2D operators ------------------------------------------------------------


class SparseSymmetricOperator:
    """Hermitian sparse operator on an x-periodic strip (CSR storage)."""

    def __init__(self, matrix, grid=None, parts=None):
        self.matrix = scipy.sparse.csr_matrix(matrix)
        self.grid = grid
        self.parts = parts or {}

    @property
    def n(self):
        return self.matrix.shape[0]

    def matvec(self, x):
        return self.matrix @ x

    def to_dense(self):
        return self.matrix.toarray()

    def symmetry_error(self, rng=None):
        rng = np.random.default_rng(rng)
        u = rng.standard_normal(self.n) + 1j * rng.standard_normal(self.n)
        v = rng.standard_normal(self.n) + 1j * rng.standard_normal(self.n)
        a = np.vdot(u, self.matvec(v))
        b = np.vdot(self.matvec(u), v)
        return abs(a - b) / max(abs(a), 1e-300)


def _factorize(A, sigma):
    M = (A - sigma * scipy.sparse.identity(A.shape[0], dtype=A.dtype, format="csc")).tocsc()
    try:
        lu = scipy.sparse.linalg.splu(M)
    except RuntimeError as exc:
        raise FactorizationSingular(str(exc)) from None
    # exact singularity is caught above; guard against a shift on an eigenvalue
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() <= 1e3 * EPS * udiag.max():
        raise FactorizationSingular("shift too close to an eigenvalue")
    return lu


def _project_out(rows, w):
    """w - rows^T conj(rows) w, with the basis stored as rows (no large copies)."""
    c = (rows @ w.conj()).conj()
    w -= rows.T @ c
    return w


def _lanczos(solve, n, m, rng, deflate=None, dtype=complex):
    """Lanczos with two-pass full reorthogonalization; returns (Q, T)."""
    Q = np.zeros((m, n), dtype=dtype)          # basis vectors as rows
    D = None if deflate is None or not deflate.shape[1] else np.ascontiguousarray(deflate.T)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    q = rng.standard_normal(n) + (1j * rng.standard_normal(n) if dtype is complex else 0)
    q = q.astype(dtype)
    if D is not None:
        q = _project_out(D, q)
    q /= np.linalg.norm(q)
    k = 0
    for j in range(m):
        Q[j] = q
        w = solve(q)
        if D is not None:
            w = _project_out(D, w)
        alpha[j] = np.vdot(q, w).real
        for _ in range(2):
            w = _project_out(Q[: j + 1], w)
            if D is not None:
                w = _project_out(D, w)
        k = j + 1
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-12 * max(1.0, abs(alpha[j])):
            break
        q = w / b
    T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    return Q[:k].T, T, beta[k - 1]


def eig_sparse_window(op, lo: float, hi: float, max_pairs: int = 64, tol: float = 1e-7,
                      seed: int = 12345, max_krylov: int = 600):
    """Eigenpairs of a Hermitian sparse operator inside [lo, hi].

    Completeness: the converged Ritz set must bracket the window on both
    sides, and a deflated restart must find nothing new.
    """
    if not lo < hi:
        raise ValueError("window needs lo < hi")
    A = op.matrix if isinstance(op, SparseSymmetricOperator) else scipy.sparse.csr_matrix(op)
    n = A.shape[0]
    half = 0.5 * (hi - lo)
    sigma = 0.5 * (lo + hi)
    lu = None
    for attempt in range(4):
        try:
            lu = _factorize(A, sigma)
            break
        except FactorizationSingular:
            sigma += (attempt + 1) * 1e-6 * max(half, 1e-3)
    if lu is None:
        raise FactorizationSingular(f"could not factorize near {0.5 * (lo + hi)!r}")
    dtype = complex if np.iscomplexobj(A.data) else float
    rng = np.random.default_rng(seed)

    found_vals, found_vecs = [], np.zeros((n, 0), dtype=dtype)
    for _restart in range(max_pairs + 1):
        vals, vecs = _window_pass(A, lu.solve, sigma, lo, hi, n, rng, found_vecs, tol,
                                  max_pairs, max_krylov, dtype)
        if not len(vals):
            break
        found_vals.extend(vals)
        found_vecs = np.hstack([found_vecs, vecs])
        if len(found_vals) > max_pairs:
            raise NonConvergence(f"window holds more than {max_pairs} eigenvalues")

    order = np.argsort(found_vals)
    pairs = []
    for k in order:
        v = found_vecs[:, k]
        v = v / np.linalg.norm(v)
        Av = A @ v
        E = float(np.vdot(v, Av).real)
        res = float(np.linalg.norm(Av - E * v))
        if res > tol * max(1.0, abs(E)):
            raise NonConvergence(f"Ritz pair {k} residual {res:.3e}", int(k))
        pairs.append(EigenPair(E, v, res))
    if len(pairs) > 1:
        V = np.column_stack([p.vector for p in pairs])
        G = V.conj().T @ V - np.eye(len(pairs))
        if np.max(np.abs(G)) > 1e-8:
            raise NonConvergence("window eigenvectors lost orthogonality")
    return pairs


def _window_pass(A, solve, sigma, lo, hi, n, rng, deflate, tol, max_pairs, max_krylov, dtype):
    m = min(n - deflate.shape[1], 60)
    while True:
        Q, T, b_last = _lanczos(solve, n, m, rng, deflate=deflate, dtype=dtype)
        theta, S = np.linalg.eigh(T)
        lam = sigma + 1.0 / theta
        # residual of a Ritz pair of A: |b s_last| / theta^2 in the original scale
        est = np.abs(b_last * S[-1, :]) / np.maximum(theta**2, 1e-300)
        conv = est < 0.1 * tol * max(1.0, abs(sigma))
        inside = (lam >= lo) & (lam <= hi)
        above = conv & (lam > hi)
        below = conv & (lam < lo)
        exhausted = Q.shape[1] < m or Q.shape[1] >= n - deflate.shape[1]
        bracketed = (above.any() or exhausted) and (below.any() or exhausted)
        if bracketed and np.all(conv[inside]):
            idx = np.flatnonzero(inside)
            return lam[idx].tolist(), Q @ S[:, idx]
        if m >= min(max_krylov, n - deflate.shape[1]):
            raise NonConvergence(f"Lanczos did not converge within {m} vectors")
        m = min(2 * m, max_krylov, n - deflate.shape[1])


def eig_dense_window(A, lo: float, hi: float):
    """Dense Hermitian reference solve (small sizes only)."""
    M = A.toarray() if scipy.sparse.issparse(A) else np.asarray(A)
    w, V = np.linalg.eigh(M)
    keep = (w >= lo) & (w <= hi)
    pairs = []
    for E, v in zip(w[keep], V[:, keep].T):
        res = float(np.linalg.norm(M @ v - E * v))
        pairs.append(EigenPair(float(E), v, res))
    return pairs


def eig_window(op, lo, hi, dense_below=1600, **kw):
    """Dense solve for small operators, shift-invert Lanczos otherwise."""
    if op.n < dense_below:
        return eig_dense_window(op.matrix, lo, hi)
    return eig_sparse_window(op, lo, hi, **kw)
