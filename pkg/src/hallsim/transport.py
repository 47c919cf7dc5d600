"""Edge currents, virial checks, Hall conductivity and Corbino current terms.

Currents are -dE/dPhi with Phi in radians (Phi = 2 pi * flux_quanta).  Since
kappa = l - flux_quanta, -dE/dPhi = (1/2pi) dE/dkappa for a channel state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .bands import ChannelHamiltonian, FlowTable, channel_hamiltonian, lowest_states, momentum_y_strip
from .errors import NoEdgeStatesInWindow, OutOfTable, WindowNotInGap
from .model import Corbino, Cylinder, Units, gap_distance

TWO_PI = 2.0 * math.pi


@dataclass
class CurrentReport:
    state: tuple
    energy: float
    I_fh: float
    I_comm: float
    meta: dict = field(default_factory=dict)

    @property
    def discrepancy(self) -> float:
        return abs(self.I_fh - self.I_comm)


@dataclass
class HawBounds:
    window: tuple
    C_upper: float
    C_lower: float
    count: int
    signed: tuple = ()


# -- Feynman-Hellmann currents ----------------------------------------------


def edge_current_fh(table: FlowTable, n: int, l: int, flux_quanta: float, step: float) -> float:
    """Central difference -(E(Phi + s) - E(Phi - s)) / 2s from a flow table (s in quanta)."""
    try:
        hi = table.energy(n, l, flux_quanta + step)
        lo = table.energy(n, l, flux_quanta - step)
    except OutOfTable:
        raise
    return -(hi - lo) / (2.0 * step * TWO_PI)


def channel_energy(geom, kappa, n, grid, units=Units()):
    ch = channel_hamiltonian(geom, kappa, grid, units)
    return lowest_states(ch, n + 1)[n].energy


def channel_current_fd(geom, kappa, n, grid, units=Units(), step=1e-3):
    """-dE/dPhi by a central difference of step ``step`` (in quanta) on the operator."""
    ep = channel_energy(geom, kappa - step, n, grid, units)   # flux up = kappa down
    em = channel_energy(geom, kappa + step, n, grid, units)
    return -(ep - em) / (2.0 * step * TWO_PI)


def channel_current_exact(ch: ChannelHamiltonian, vector) -> float:
    """Feynman-Hellmann value (1/2pi) <dH/dkappa> of the discrete channel."""
    v = np.asarray(vector)
    return float(np.sum(ch.dkappa * v * v) / np.sum(v * v)) / TWO_PI


def richardson_current(geom, kappa, n, grid, units=Units(), step=1e-2, tol=1e-8, max_halvings=8):
    """Step-halving with Richardson extrapolation until two estimates agree to ``tol``."""
    prev = None
    h = step
    for _ in range(max_halvings):
        a = channel_current_fd(geom, kappa, n, grid, units, h)
        b = channel_current_fd(geom, kappa, n, grid, units, h / 2)
        est = (4.0 * b - a) / 3.0
        if prev is not None and abs(est - prev) < tol:
            return est
        prev = est
        h /= 2
    return prev


# -- commutator currents -----------------------------------------------------


def _weights(vector):
    v = np.asarray(vector)
    w = (v.conj() * v).real
    return w / w.sum()


def edge_current_commutator(geom, pair, dV, R=None, units=Units()) -> float:
    """-(1/(2 pi B R)) <psi, dV/dy psi> with dV the wall slope sampled on the nodes."""
    if R is None:
        R = geom.R
    return -float(np.sum(_weights(pair.vector) * np.asarray(dV))) / (TWO_PI * units.B * R)


def wall_force(pair, dV) -> float:
    """<psi, dV/dy psi> / ||psi||^2."""
    return float(np.sum(_weights(pair.vector) * np.asarray(dV)))


def strip_current_fh(op, pair) -> float:
    """-dE/dPhi = -(1/2pi) <psi, dH/dflux psi> for a 2D strip eigenpair."""
    v = pair.vector
    val = np.vdot(v, op.parts["dH_dflux"] @ v).real / np.vdot(v, v).real
    return -float(val) / TWO_PI


def current_report(geom, ch: ChannelHamiltonian, pair, state, units=Units()) -> CurrentReport:
    I_fh = channel_current_exact(ch, pair.vector)
    I_comm = edge_current_commutator(geom, pair, ch.wall_derivative, geom.R, units)
    return CurrentReport(state, pair.energy, I_fh, I_comm, {"residual": pair.residual})


# -- virial ------------------------------------------------------------------


def _commutator_expectation(A, P, v):
    """<v, i[A, P] v> = -2 Im <A v, P v> for Hermitian A, P."""
    Av = A @ v
    Pv = P @ v
    return float(-2.0 * np.vdot(Av, Pv).imag / np.vdot(v, v).real)


def virial_terms(op, pair, P=None) -> dict:
    """Pieces of <psi, i[H, P_y] psi> on the lattice.

    ``velocity`` comes from the magnetic x-hopping, ``force`` from the
    potential, ``boundary`` from the truncated y-Laplacian.  In the
    continuum the first two are -2B<p_x - A_x> and -<dV/dy>.
    """
    v = np.asarray(pair.vector)
    if op.parts is not None and "Tx" in op.parts:
        if P is None:
            P = momentum_y_strip(op.grid)
        Tx, Ty = op.parts["Tx"], op.parts["Ty"]
        V = scipy.sparse.diags(op.parts["V"])
        vel = _commutator_expectation(Tx, P, v)
        bnd = _commutator_expectation(Ty, P, v)
        force = _commutator_expectation(V, P, v)
        total = _commutator_expectation(op.matrix, P, v)
    else:
        raise ValueError("virial terms need a strip operator with stored parts")
    return {"velocity": vel, "boundary": bnd, "force": force, "total": total,
            "dVy": float(np.sum(_weights(v) * op.parts["dVy"]))}


def virial_residual(H, pair, P=None) -> float:
    """|<psi, [H, i p_y] psi>| with the central-difference p_y.

    ``H`` is a strip operator, a sparse matrix, or a ChannelHamiltonian (then
    P defaults to the 1D central difference on its grid).
    """
    v = np.asarray(pair.vector)
    if isinstance(H, ChannelHamiltonian):
        T = H.op
        n = T.n
        A = scipy.sparse.diags([T.e, T.d, T.e], [-1, 0, 1]).tocsr()
        if P is None:
            off = np.full(n - 1, -1j / (2 * H.h))
            P = scipy.sparse.diags([off, -off], [1, -1]).tocsr()
    elif hasattr(H, "matrix"):
        A = H.matrix
        if P is None:
            P = momentum_y_strip(H.grid)
    else:
        A = H
        if P is None:
            raise ValueError("need P for a bare matrix")
    return abs(_commutator_expectation(A, P, v.astype(complex)))


# -- Hall conductivity -------------------------------------------------------


def _dispersion_by_kappa(table: FlowTable, n: int):
    """E_n on the merged kappa grid l - flux, plus dE/dkappa (4th order)."""
    kap = (table.ls[:, None] - table.flux[None, :]).ravel()
    E = table.energies[n].ravel()
    order = np.argsort(kap, kind="stable")
    kap, E = kap[order], E[order]
    keep = np.concatenate([[True], np.diff(kap) > 0])
    kap, E = kap[keep], E[keep]
    h = kap[1] - kap[0]
    if not np.allclose(np.diff(kap), h, rtol=1e-9, atol=1e-12):
        raise OutOfTable("flux nodes do not tile the kappa axis uniformly")
    dE = np.gradient(E, h, edge_order=2)
    if len(E) >= 5:
        dE[2:-2] = (E[:-4] - 8 * E[1:-3] + 8 * E[3:-1] - E[4:]) / (12 * h)
    return kap, E, dE


def _check_gap(mu, units):
    if gap_distance(mu, units) < 1e-9 * units.B:
        raise WindowNotInGap(f"chemical potential {mu!r} sits on a Landau level")


@dataclass
class HallResult:
    sigma: float
    nu_estimate: int
    telescoping: float
    R: float
    mu_l: float
    mu_r: float
    flux_nodes: int
    per_band: list
    residuals: dict = field(default_factory=dict)

    def as_dict(self):
        return {"sigma": self.sigma, "nu_estimate": self.nu_estimate,
                "telescoping_sigma": self.telescoping, "R": self.R, "mu_l": self.mu_l,
                "mu_r": self.mu_r, "flux_nodes": self.flux_nodes, "per_band": self.per_band,
                "residuals": self.residuals}


def hall_conductivity(table: FlowTable, mu_l: float, mu_r: float) -> HallResult:
    """sigma_H in units e^2/2pi from the flux-averaged equilibrium current.

    At every flux node, states of the lower edge (guiding centre y0 < 0) are
    filled up to mu_l and those of the upper edge up to mu_r.  The total
    current sum_occ -dE/dPhi, averaged over the nodes of one flux period, is
    I = -sigma V_H / 2pi with V_H = mu_r - mu_l.
    """
    geom, units = table.geometry, table.units
    if not mu_l < mu_r:
        raise ValueError("need mu_l < mu_r")
    _check_gap(mu_l, units)
    _check_gap(mu_r, units)
    VH = mu_r - mu_l
    M = len(table.flux)
    total = 0.0
    per_band = []
    for n in range(table.energies.shape[0]):
        kap, E, dE = _dispersion_by_kappa(table, n)
        y0 = geom.guiding_center(kap, units)
        mu = np.where(y0 > 0, mu_r, mu_l)
        occ = E < mu
        if occ[0] or occ[-1]:
            raise OutOfTable(f"band {n} is still occupied at the table boundary")
        # sum over l at each node then average over nodes = sum over kappa / M
        I_n = float(np.sum(dE[occ])) / TWO_PI / M
        per_band.append(-TWO_PI * I_n / VH)
        total += I_n
    sigma = -TWO_PI * total / VH
    tele = _telescoping(table, mu_l, mu_r, VH)
    return HallResult(sigma, int(round(sigma)), tele, float(geom.R), mu_l, mu_r, M, per_band,
                      {"integer_distance": abs(sigma - round(sigma))})


def _telescoping(table: FlowTable, mu_l, mu_r, VH):
    """Fixed-occupation estimate: occupation frozen at flux 0 and carried
    through one period, so the average current telescopes to the band ends."""
    j0 = int(np.flatnonzero(table.flux == 0.0)[0]) if np.any(table.flux == 0.0) else 0
    geom, units = table.geometry, table.units
    y0 = geom.guiding_center(table.ls - table.flux[j0], units)
    mu = np.where(y0 > 0, mu_r, mu_l)
    total = 0.0
    for n in range(table.energies.shape[0]):
        E = table.energies[n, :, j0]
        occ = np.flatnonzero(E < mu)
        if occ.size == 0:
            continue
        i_min, i_max = occ.min(), occ.max()
        if i_min == 0:
            raise OutOfTable("telescoping needs one unoccupied channel below l_min")
        # I = -(1/2pi)(E_{l_min - 1}(0) - E_{l_max}(0))
        total += -(E[i_min - 1] - E[i_max]) / TWO_PI
    return -TWO_PI * total / VH


# -- edge-state bounds -------------------------------------------------------


def edge_mass(coords, vector, feet, width):
    """Share of |psi|^2 within ``width`` of any wall foot."""
    w = _weights(vector)
    c = np.asarray(coords)
    near = np.zeros(c.shape, dtype=bool)
    for f in feet:
        near |= np.abs(c - f) <= width
    return float(np.sum(w[near]))


@dataclass
class StateCurrent:
    energy: float
    dE_dflux: float          # dE/dPhi
    edge_mass: float
    label: tuple = ()


def channel_state_currents(geom, kappas, grid, units=Units(), n_max=2, width=4.0):
    """Energies, dE/dPhi and edge masses of clean channel states."""
    out = []
    lB = units.magnetic_length
    for kappa in kappas:
        ch = channel_hamiltonian(geom, kappa, grid, units)
        for n, p in enumerate(lowest_states(ch, n_max)):
            I = channel_current_exact(ch, p.vector)
            out.append(StateCurrent(p.energy, -I, edge_mass(ch.coords, p.vector, geom.wall_feet(),
                                                             width * lB), (n, float(kappa))))
    return out


def strip_state_currents(op, pairs, width=4.0):
    """Same data for 2D strip eigenpairs (mass measured along y)."""
    geom, units = op.parts["geometry"], op.parts["units"]
    grid = op.grid
    Y = np.repeat(grid.y, grid.nx)
    out = []
    for k, p in enumerate(pairs):
        I = strip_current_fh(op, p)
        out.append(StateCurrent(p.energy, -I, edge_mass(Y, p.vector, geom.wall_feet(),
                                                        width * units.magnetic_length), (k,)))
    return out


def haw_bounds(states, window, R, threshold=0.5) -> HawBounds:
    """Extremes of R |dE/dPhi| over window states classified as edge states."""
    lo, hi = (window.lo, window.hi) if hasattr(window, "lo") else window
    vals = [R * s.dE_dflux for s in states
            if lo <= s.energy <= hi and s.edge_mass > threshold]
    if not vals:
        raise NoEdgeStatesInWindow(f"no edge states in [{lo:.6g}, {hi:.6g}]")
    a = np.abs(vals)
    return HawBounds((lo, hi), float(a.max()), float(a.min()), len(vals),
                     (float(min(vals)), float(max(vals))))


# -- Corbino current terms ---------------------------------------------------


def corbino_current_decomposition(ch: ChannelHamiltonian, pair, B=None) -> dict:
    """Azimuthal current of a Corbino channel state split into wall, radial
    kinetic and azimuthal kinetic parts.

    With psi = e^{i l phi} u(r) / sqrt(2 pi r) and f = kappa/r - B r/2:
    I = int f u^2 / (pi r), T1 = int V' u^2 / (2 pi B r),
    T2 = (1/pi B) int ((u/sqrt r)')^2 / r  (>= 0), T3 = -(1/pi B) int f^2 u^2 / r^2.
    """
    if ch.kind != "corbino":
        raise ValueError("decomposition needs a Corbino channel")
    B = ch.units.B if B is None else B
    r = ch.coords
    h = ch.h
    u = np.asarray(pair.vector, dtype=float)
    u = u / math.sqrt(np.sum(u * u) * h)
    f = ch.velocity
    I = float(np.sum(f * u * u / r) * h / math.pi)
    T1 = float(np.sum(ch.wall_derivative * u * u / r) * h / (TWO_PI * B))
    g = np.append(u / np.sqrt(r), 0.0)           # psi vanishes past the last node
    rmid = r + 0.5 * h
    dg = np.diff(g) / h
    T2 = float(np.sum(dg * dg / rmid) * h / (math.pi * B))
    T3 = float(-np.sum(f * f * u * u / (r * r)) * h / (math.pi * B))
    total = T1 + T2 + T3
    return {"T1": T1, "T2": T2, "T3": T3, "total": total, "I_phi": I,
            "mismatch": abs(total - I), "relative": abs(total - I) / max(abs(I), 1e-300)}


def corbino_state_at_energy(geom: Corbino, E: float, grid, units=Units(), n=0, bracket=None):
    """Channel state whose band-n energy equals E, tuning kappa continuously."""
    from scipy.optimize import brentq

    def g(kappa):
        return channel_energy(geom, kappa, n, grid, units) - E

    if bracket is None:
        k0 = 0.5 * units.B * geom.R ** 2
        lo, hi = k0 - 4 * geom.R, k0 + 4 * geom.R
        bracket = (max(lo, 0.0), hi)
    kappa = brentq(g, *bracket, xtol=1e-13, rtol=1e-15)
    ch = channel_hamiltonian(geom, kappa, grid, units)
    return ch, lowest_states(ch, n + 1)[n]
