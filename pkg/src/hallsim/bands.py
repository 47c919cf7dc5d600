"""Channel Hamiltonians, dispersion tables, spectral flow and 2D strips."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
from scipy.optimize import linear_sum_assignment

from .errors import GridMismatch, OutOfTable
from .linalg import (SparseSymmetricOperator, TridiagonalOperator, eig_tridiagonal_lowest)
from .model import (Corbino, Cylinder, Grid1D, Grid2D, HalfPlaneDirichlet, HalfPlaneEdge,
                    RadialGrid, Units, channel_parameter, check_dirichlet_grid)


@dataclass
class ChannelHamiltonian:
    kind: str
    kappa: float
    units: Units
    grid: object
    op: TridiagonalOperator
    coords: np.ndarray
    effective_potential: np.ndarray
    wall_derivative: np.ndarray
    wall: np.ndarray
    geometry: object = None
    # d(diagonal)/d(kappa), the Feynman-Hellmann operator of the channel
    dkappa: np.ndarray = None
    # magnetic velocity factor (p_x - A_x) on the nodes (strip channels only)
    velocity: np.ndarray = None

    @property
    def h(self):
        return self.grid.h


def _second_difference(n, h):
    d = np.full(n, 2.0 / (h * h))
    e = np.full(n - 1, -1.0 / (h * h))
    return d, e


def channel_hamiltonian(geom, kappa: float, grid, units: Units = Units(), scheme: str = "flux"):
    """1D operator of one Fourier / angular-momentum channel.

    Strip geometries use -d^2/dy^2 + (q + B y)^2 + V(y) with q = kappa for the
    half plane and q = kappa / R on the cylinder, so y0 = -q / B.  The Corbino
    channel acts on u = r^(1/2) psi.  ``scheme="flux"`` discretizes
    -(1/r)(r psi')' in conservative form and symmetrizes it (the -1/(4r^2)
    term is then implicit); ``scheme="explicit"`` uses the plain u-form
    -u'' + ((kappa^2 - 1/4)/r^2 - B kappa + B^2 r^2/4 + V) u.
    """
    B = units.B
    kappa = float(kappa)
    if isinstance(geom, Corbino):
        if not isinstance(grid, RadialGrid):
            raise GridMismatch("Corbino channels need a RadialGrid")
        return _corbino_channel(geom, kappa, grid, units, scheme)
    if not isinstance(grid, Grid1D):
        raise GridMismatch("strip channels need a Grid1D")
    y = grid.nodes
    h = grid.h
    if isinstance(geom, HalfPlaneDirichlet):
        check_dirichlet_grid(grid)
    if isinstance(geom, Cylinder):
        q = kappa / geom.R
        dq = 1.0 / geom.R
        kind = "cylinder"
    elif isinstance(geom, (HalfPlaneEdge, HalfPlaneDirichlet)):
        q = kappa
        dq = 1.0
        kind = "dirichlet" if isinstance(geom, HalfPlaneDirichlet) else "halfplane"
    else:
        raise GridMismatch(f"unsupported geometry {type(geom).__name__}")
    vel = q + B * y
    V = geom.wall(y)
    W = vel * vel + V
    d, e = _second_difference(grid.n, h)
    return ChannelHamiltonian(kind, kappa, units, grid, TridiagonalOperator(d + W, e), y, W,
                              geom.wall_derivative(y), V, geom, 2.0 * dq * vel, vel)


def _corbino_channel(geom, kappa, grid, units, scheme):
    B = units.B
    r = grid.nodes
    h = grid.h
    f = kappa / r - 0.5 * B * r
    V = geom.wall(r)
    if scheme == "flux":
        rp = r + 0.5 * h
        rm = r - 0.5 * h
        d = (rp + rm) / (r * h * h)
        e = -rp[:-1] / (h * h * np.sqrt(r[:-1] * r[1:]))
        W = f * f + V
    elif scheme == "explicit":
        d, e = _second_difference(grid.n, h)
        W = f * f - 0.25 / (r * r) + V
    else:
        raise ValueError(f"unknown radial scheme {scheme!r}")
    return ChannelHamiltonian("corbino", kappa, units, grid, TridiagonalOperator(d + W, e), r, W,
                              geom.wall_derivative(r), V, geom, 2.0 * f / r, f)


def channel_for(geom, l, grid, units=Units(), scheme="flux"):
    """Channel with angular momentum l at the geometry's flux."""
    return channel_hamiltonian(geom, channel_parameter(l, geom.flux_quanta), grid, units, scheme)


def lowest_states(ch: ChannelHamiltonian, n_max: int, tol: float = 1e-9):
    return eig_tridiagonal_lowest(ch.op, n_max, tol=tol)


def lowest_energies(ch: ChannelHamiltonian, n_max: int):
    return eig_tridiagonal_lowest(ch.op, n_max, vectors=False)


# -- dispersion --------------------------------------------------------------


@dataclass
class DispersionTable:
    kappa: np.ndarray
    energies: np.ndarray          # (n_kappa, n_max), tracked bands
    residuals: np.ndarray
    guiding_center: np.ndarray
    connectivity: np.ndarray      # perm[k, n]: sorted index used for band n at kappa k
    meta: dict = field(default_factory=dict)

    def band(self, n):
        return self.energies[:, n]


def track_bands(energies, vectors=None, tie_scale=1e-10):
    """Continuity tracking by nearest-eigenvalue assignment.

    ``energies`` is (n_kappa, n_max) sorted per row; ``vectors`` optionally a
    list of (N, n_max) eigenvector arrays used only to break near-ties.
    """
    nk, nb = energies.shape
    perm = np.zeros((nk, nb), dtype=int)
    perm[0] = np.arange(nb)
    for k in range(1, nk):
        prev = energies[k - 1, perm[k - 1]]
        cost = np.abs(prev[:, None] - energies[k][None, :])
        if vectors is not None:
            ov = np.abs(vectors[k - 1][:, perm[k - 1]].conj().T @ vectors[k])
            scale = tie_scale * max(1.0, float(np.max(np.abs(energies[k]))))
            cost = cost + scale * (1.0 - ov)
        rows, cols = linear_sum_assignment(cost)
        perm[k, rows] = cols
    tracked = np.take_along_axis(energies, perm, axis=1)
    return tracked, perm


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def dispersion(geom, kappas, n_max: int, grid, units: Units = Units(), workers: int | None = None,
               tol: float = 1e-9):
    kappas = np.asarray(kappas, dtype=float)
    if np.any(np.diff(kappas) < 0):
        raise ValueError("kappa grid must be sorted")

    def solve(kappa):
        ch = channel_hamiltonian(geom, kappa, grid, units)
        pairs = lowest_states(ch, n_max, tol=tol)
        return ([p.energy for p in pairs], [p.residual for p in pairs],
                np.column_stack([p.vector for p in pairs]))

    out = _map(solve, kappas, workers)
    E = np.array([o[0] for o in out])
    res = np.array([o[1] for o in out])
    tracked, perm = track_bands(E, [o[2] for o in out])
    res = np.take_along_axis(res, perm, axis=1)
    return DispersionTable(kappas, tracked, res, geom.guiding_center(kappas, units), perm,
                           {"n_max": n_max, "B": units.B})


# -- spectral flow -----------------------------------------------------------


@dataclass
class FlowTable:
    """E[n, i, j] = E_{n, l_i}(flux_j) with flux in quanta."""

    ls: np.ndarray
    flux: np.ndarray
    energies: np.ndarray
    geometry: object
    units: Units

    def kappa(self, i, j):
        return channel_parameter(self.ls[i], self.flux[j])

    def energy(self, n, l, flux_quanta):
        """Lookup using the flow identity to reduce flux into the table range."""
        i = int(l - self.ls[0])
        hits = np.flatnonzero(self.flux == flux_quanta)
        if hits.size == 0:
            shift = math.floor(flux_quanta - self.flux[0])
            base = flux_quanta - shift
            hits = np.flatnonzero(self.flux == base)
            i -= shift
            if hits.size == 0:
                raise OutOfTable(f"flux {flux_quanta!r} not on the table grid")
        if not 0 <= i < len(self.ls):
            raise OutOfTable(f"l = {l} outside table")
        return self.energies[n, i, hits[0]]


def spectral_flow(geom, flux_grid, ls, n_max: int, grid, units: Units = Units(),
                  workers: int | None = None):
    """Lowest n_max energies of every channel l at every flux node.

    Only kappa = l - flux reaches the channel builder, so entries that share
    a kappa value share an operator bit for bit.
    """
    flux_grid = np.asarray(flux_grid, dtype=float)
    ls = np.asarray(ls, dtype=int)
    kap = ls[:, None] - flux_grid[None, :]
    uniq, inv = np.unique(kap.ravel(), return_inverse=True)

    def solve(kappa):
        return lowest_energies(channel_hamiltonian(geom, kappa, grid, units), n_max)

    vals = np.array(_map(solve, uniq, workers))
    E = vals[inv].reshape(len(ls), len(flux_grid), n_max).transpose(2, 0, 1)
    return FlowTable(ls, flux_grid, np.ascontiguousarray(E), geom, units)


# -- 2D magnetic strip -------------------------------------------------------


def strip_operator(geom, grid: Grid2D, units: Units = Units(), disorder=None) -> SparseSymmetricOperator:
    """5-point magnetic Laplacian plus potential on an x-periodic strip.

    Landau gauge A_x = -B y + flux/R with Peierls phases on x bonds.  Dirichlet
    lines sit one step outside the first and last rows unless the grid is a
    torus, in which case the y wrap carries the magnetic translation phase.
    """
    B = units.B
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    x, y = grid.x, grid.y
    if isinstance(geom, HalfPlaneDirichlet) and not grid.periodic_y:
        if abs(grid.y_max) > 1e-12:
            raise GridMismatch(f"Dirichlet strip needs its top line at y=0, got {grid.y_max!r}")
    flux_shift = 0.0
    if isinstance(geom, Cylinder):
        if abs(geom.R - grid.R) > 1e-9 * geom.R:
            raise GridMismatch(f"strip circumference gives R={grid.R!r}, geometry has {geom.R!r}")
        flux_shift = geom.flux_quanta / geom.R
    if grid.periodic_y:
        quanta = B * grid.circumference * grid.ny * hy / (2 * math.pi)
        if abs(quanta - round(quanta)) > 1e-9:
            raise GridMismatch(f"torus flux {quanta!r} is not an integer number of quanta")

    N = nx * ny
    idx = np.arange(N).reshape(ny, nx)
    theta = hx * (-B * y + flux_shift)                       # per row
    phase = np.exp(-1j * theta)[:, None] * np.ones((1, nx))
    right = np.roll(idx, -1, axis=1)
    rows_x = idx.ravel()
    cols_x = right.ravel()
    hop_x = (-phase / hx**2).ravel()
    Tx = scipy.sparse.coo_matrix((hop_x, (rows_x, cols_x)), shape=(N, N))
    Tx = (Tx + Tx.conj().T + scipy.sparse.identity(N) * (2.0 / hx**2)).tocsr()
    dphase = (1j * np.exp(-1j * theta) / (geom.R * hx) if isinstance(geom, Cylinder)
              else np.zeros(ny))
    dTx = scipy.sparse.coo_matrix(((dphase[:, None] * np.ones((1, nx))).ravel(),
                                   (rows_x, cols_x)), shape=(N, N))
    dTx = (dTx + dTx.conj().T).tocsr()

    up_rows = idx[:-1].ravel()
    up_cols = idx[1:].ravel()
    vals = np.full(up_rows.size, -1.0 / hy**2, dtype=complex)
    if grid.periodic_y:
        Ly = ny * hy
        wrap = -np.exp(-1j * B * Ly * x) / hy**2
        up_rows = np.concatenate([up_rows, idx[-1]])
        up_cols = np.concatenate([up_cols, idx[0]])
        vals = np.concatenate([vals, wrap])
    Ty = scipy.sparse.coo_matrix((vals, (up_rows, up_cols)), shape=(N, N))
    Ty = (Ty + Ty.conj().T + scipy.sparse.identity(N) * (2.0 / hy**2)).tocsr()

    X, Y = grid.mesh()
    V = geom.wall(Y).ravel() if not isinstance(geom, Corbino) else None
    dV = geom.wall_derivative(Y).ravel()
    d2V = geom.wall_second_derivative(Y).ravel()
    if disorder is not None:
        V = V + disorder.values.ravel()
        dV = dV + disorder.dy.ravel()
        d2V = d2V + disorder.dyy.ravel()
    H = Tx + Ty + scipy.sparse.diags(V)
    parts = {"Tx": Tx, "Ty": Ty, "V": V, "dVy": dV, "d2Vy": d2V, "dH_dflux": dTx,
             "geometry": geom, "units": units}
    return SparseSymmetricOperator(H.tocsr(), grid, parts)


def momentum_y_strip(grid: Grid2D):
    """Central-difference p_y = -i d/dy (Hermitian) on the strip."""
    nx, ny, hy = grid.nx, grid.ny, grid.hy
    N = nx * ny
    idx = np.arange(N).reshape(ny, nx)
    r = idx[:-1].ravel()
    c = idx[1:].ravel()
    P = scipy.sparse.coo_matrix((np.full(r.size, -1j / (2 * hy)), (r, c)), shape=(N, N))
    return (P + P.conj().T).tocsr()


def momentum_1d(n, h):
    """Central-difference p = -i d/dy on interior nodes with psi = 0 outside."""
    off = np.full(n - 1, -1j / (2 * h))
    return scipy.sparse.diags([off, -off], [1, -1]).tocsr()


def with_extra_potential(ch: ChannelHamiltonian, values) -> ChannelHamiltonian:
    """Same channel with an additional potential on its nodes (e.g. a disorder cut)."""
    values = np.asarray(values, dtype=float)
    op = TridiagonalOperator(ch.op.d + values, ch.op.e)
    return ChannelHamiltonian(ch.kind, ch.kappa, ch.units, ch.grid, op, ch.coords,
                              ch.effective_potential + values, ch.wall_derivative, ch.wall + values,
                              ch.geometry, ch.dkappa, ch.velocity)
