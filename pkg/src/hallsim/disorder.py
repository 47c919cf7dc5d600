"""Smooth random potentials and the spectrum inclusion checks.

A field is a superposition of Gaussian bumps exp(-|r - c|^2 / (2 l^2)) with
Poisson-distributed centres and amplitudes uniform in [-1, 1] * delta * c,
c = (rho pi l^2)^(-1/2) with bump density rho = 1/l^2.  The raw sum s is
mapped through delta * tanh(s / delta), a smooth saturation that keeps
|V_d| < delta everywhere while leaving closed-form derivatives.

Random numbers come from numpy's Philox4x32-10 counter-based generator
keyed by the integer seed, drawn in a fixed order: the Poisson count, then
x centres, y centres, amplitudes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .model import Grid2D

MAGIC = b"HSDF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIddQ")


def philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class DisorderField:
    delta: float
    ell: float
    seed: int
    circumference: float
    centers: np.ndarray            # (K, 2)
    amplitudes: np.ndarray         # (K,)
    grid: Grid2D | None = None
    values: np.ndarray | None = None
    dx: np.ndarray | None = None
    dy: np.ndarray | None = None
    dyy: np.ndarray | None = None
    saturated: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def raw(self, x, y):
        """Bump sum and its x, y, yy derivatives at arbitrary points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = np.zeros(np.broadcast(x, y).shape)
        sx = np.zeros_like(s)
        sy = np.zeros_like(s)
        syy = np.zeros_like(s)
        L = self.circumference
        l2 = self.ell**2
        reach = 7.0 * self.ell
        for (cx, cy), A in zip(self.centers, self.amplitudes):
            ddy = y - cy
            if np.min(np.abs(ddy)) > reach:
                continue
            base = np.mod(x - cx + 0.5 * L, L) - 0.5 * L
            for m in (-1, 0, 1):
                ddx = base + m * L
                g = A * np.exp(-(ddx * ddx + ddy * ddy) / (2 * l2))
                s += g
                sx -= ddx / l2 * g
                sy -= ddy / l2 * g
                syy += (ddy * ddy / l2 - 1.0) / l2 * g
        return s, sx, sy, syy

    def evaluate(self, x, y):
        """V_d and (dV/dx, dV/dy, d2V/dy2) at arbitrary points."""
        if self.delta == 0:
            z = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
            return z, z.copy(), z.copy(), z.copy()
        s, sx, sy, syy = self.raw(x, y)
        t = np.tanh(s / self.delta)
        sech2 = 1.0 - t * t
        V = self.delta * t
        Vx = sech2 * sx
        Vy = sech2 * sy
        Vyy = sech2 * syy - 2.0 * t * sech2 * sy * sy / self.delta
        return V, Vx, Vy, Vyy

    @property
    def delta1(self):
        """sup |grad V_d| on the grid."""
        return float(np.max(np.hypot(self.dx, self.dy))) if self.values is not None else 0.0

    @property
    def delta2(self):
        """sup |d2V_d/dy2| on the grid."""
        return float(np.max(np.abs(self.dyy))) if self.values is not None else 0.0

    def variance(self):
        return float(np.var(self.values)) if self.values is not None else 0.0

    def save(self, path):
        write_field(path, self)


def generate(seed: int, delta: float, ell: float, grid: Grid2D, margin: float = 3.0) -> DisorderField:
    if delta < 0 or ell <= 0:
        raise ValueError("need delta >= 0 and ell > 0")
    rng = philox(seed)
    L = grid.circumference
    y = grid.y
    y_lo = float(y[0]) - margin * ell
    y_hi = float(y[-1]) + margin * ell
    rho = 1.0 / ell**2
    K = int(rng.poisson(rho * L * (y_hi - y_lo)))
    cx = rng.uniform(0.0, L, size=K)
    cy = rng.uniform(y_lo, y_hi, size=K)
    amp = rng.uniform(-1.0, 1.0, size=K) * delta / np.sqrt(rho * np.pi * ell**2)
    fld = DisorderField(float(delta), float(ell), int(seed), L, np.column_stack([cx, cy]), amp, grid)
    X, Y = grid.mesh()
    V, Vx, Vy, Vyy = fld.evaluate(X, Y)
    fld.values, fld.dx, fld.dy, fld.dyy = V, Vx, Vy, Vyy
    if delta > 0:
        fld.saturated = np.abs(fld.raw(X, Y)[0]) > delta
    else:
        fld.saturated = np.zeros(V.shape, dtype=bool)
    return fld


def write_field(path, fld: DisorderField):
    """Header (magic, version, nx, ny, delta, ell, seed) then float64 LE rows."""
    ny, nx = fld.values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, nx, ny, fld.delta, fld.ell, fld.seed))
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, nx, ny, delta, ell, seed = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise ValueError("not a disorder field file")
        values = np.frombuffer(fh.read(), dtype="<f8").reshape(ny, nx).copy()
    return {"nx": nx, "ny": ny, "delta": delta, "ell": ell, "seed": seed}, values


def box_sup(fld: DisorderField, x0, y0, size, n=41):
    """sup |V_d| over a size x size box sampled on an n x n lattice."""
    xs = x0 + np.linspace(0, size, n)
    ys = y0 + np.linspace(0, size, n)
    X, Y = np.meshgrid(xs, ys)
    return float(np.max(np.abs(fld.evaluate(X, Y)[0])))


@dataclass
class InclusionReport:
    delta: float
    seeds: list
    max_distance: list            # per seed: max dist of a disordered level to clean spectrum
    max_shift: list               # per seed: max |E_d,i - E_c,i| in sorted order
    violations: int
    proxy_fraction: list          # per seed: share of clean levels within eps of disordered ones
    eps: float


def spectrum_inclusion_check(clean_eigs, disordered_eigs, delta, eps=None, tol=1e-9, seeds=None):
    """Second inclusion (asserted per level) and the first-inclusion proxy."""
    clean = np.sort(np.asarray(clean_eigs, dtype=float))
    eps = 0.5 * delta if eps is None else eps
    dists, shifts, fracs = [], [], []
    violations = 0
    for dis in disordered_eigs:
        dis = np.sort(np.asarray(dis, dtype=float))
        pos = np.searchsorted(clean, dis)
        lo = clean[np.clip(pos - 1, 0, len(clean) - 1)]
        hi = clean[np.clip(pos, 0, len(clean) - 1)]
        dist = np.minimum(np.abs(dis - lo), np.abs(dis - hi))
        violations += int(np.sum(dist > delta + tol))
        dists.append(float(dist.max()))
        shifts.append(float(np.max(np.abs(dis - clean))) if len(dis) == len(clean) else float("nan"))
        posc = np.searchsorted(dis, clean)
        lo = dis[np.clip(posc - 1, 0, len(dis) - 1)]
        hi = dis[np.clip(posc, 0, len(dis) - 1)]
        near = np.minimum(np.abs(clean - lo), np.abs(clean - hi)) <= eps
        fracs.append(float(np.mean(near)))
    return InclusionReport(delta, list(seeds or range(len(disordered_eigs))), dists, shifts,
                           violations, fracs, eps)


def radial_cut(seed: int, delta: float, ell: float, r) -> np.ndarray:
    """V_d sampled along the ray x = 0 of a field covering [0, r_max].

    Used as a rotation-invariant disorder for Corbino channels.
    """
    r = np.asarray(r, dtype=float)
    span = float(r[-1] - r[0])
    nx = 8
    grid = Grid2D(nx, 10, 2.0 * ell, span / 9.0, float(r[0]) - span / 9.0)
    fld = generate(seed, delta, ell, grid)
    return fld.evaluate(np.zeros_like(r), r)[0]
