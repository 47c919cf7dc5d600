"""Units, geometries, edge potentials, grids and spectral windows.

Conventions: hbar = 1, m = 1/2, e = 1, so the free magnetic Hamiltonian is
(p - A)^2 with Landau levels (2n+1)B.  Flux is stored in units of the flux
quantum (``flux_quanta = Phi / 2pi``); the channel parameter is
kappa = l - flux_quanta and flux enters nowhere else.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, WindowNotInGap


@dataclass(frozen=True)
class Units:
    B: float = 1.0

    def __post_init__(self):
        if not (self.B > 0 and math.isfinite(self.B)):
            raise ValueError(f"B must be positive and finite, got {self.B!r}")

    @property
    def omega_c(self) -> float:
        return 2.0 * self.B

    @property
    def magnetic_length(self) -> float:
        return self.B ** -0.5

    def landau_level(self, n: int) -> float:
        return landau_level(self, n)

    def landau_level_cyclotron(self, n: int) -> float:
        """Same level written as (n + 1/2) omega_c."""
        if n < 0:
            raise ValueError("band index must be >= 0")
        return (n + 0.5) * self.omega_c


def landau_level(units: Units, n: int) -> float:
    if n < 0:
        raise ValueError("band index must be >= 0")
    return (2 * n + 1) * units.B


def channel_parameter(l, flux_quanta=0.0):
    """kappa = l - Phi/2pi.  The only place where flux enters a channel."""
    return l - flux_quanta


def corbino_clean_energy(units: Units, n: int, l: int, flux_quanta: float = 0.0) -> float:
    """Closed-form clean disc energies; the kappa >= 0 branch is inclusive."""
    if n < 0:
        raise ValueError("band index must be >= 0")
    kappa = channel_parameter(l, flux_quanta)
    if kappa >= 0:
        return (n + 0.5) * units.omega_c
    return (n - kappa + 0.5) * units.omega_c


def gap_distance(E: float, units: Units) -> float:
    """dist(E, {(2n+1)B : n >= 0})."""
    n = max(0, int(round((E / units.B - 1.0) / 2.0)))
    best = abs(E - landau_level(units, n))
    if n > 0:
        best = min(best, abs(E - landau_level(units, n - 1)))
    return min(best, abs(E - landau_level(units, n + 1)))


# -- edge potentials ---------------------------------------------------------
# Every profile vanishes for y <= foot and is non-decreasing above it.


@dataclass(frozen=True)
class PowerWall:
    """V0 = ((y - foot)/a)_+^p."""

    a: float = 1.0
    p: float = 2.0
    foot: float = 0.0
    bounded = False

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("edge scale a must be positive")
        if self.p < 1:
            raise ValueError("power p must be >= 1")

    def _s(self, y):
        return np.maximum((np.asarray(y, dtype=float) - self.foot) / self.a, 0.0)

    def __call__(self, y):
        return self._s(y) ** self.p

    def derivative(self, y):
        s = self._s(y)
        return np.where(s > 0, self.p / self.a * s ** (self.p - 1), 0.0)

    def second_derivative(self, y):
        s = self._s(y)
        return np.where(s > 0, self.p * (self.p - 1) / self.a**2 * s ** (self.p - 2), 0.0)


@dataclass(frozen=True)
class ExponentialWall:
    """V0 = exp((y - foot)/a) - 1 above the foot, 0 below."""

    a: float = 1.0
    foot: float = 0.0
    bounded = False

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("edge scale a must be positive")

    def _s(self, y):
        return np.maximum((np.asarray(y, dtype=float) - self.foot) / self.a, 0.0)

    def __call__(self, y):
        return np.expm1(self._s(y))

    def derivative(self, y):
        s = self._s(y)
        return np.where(s > 0, np.exp(s) / self.a, 0.0)

    def second_derivative(self, y):
        s = self._s(y)
        return np.where(s > 0, np.exp(s) / self.a**2, 0.0)


@dataclass(frozen=True)
class SaturatingWall:
    """Bounded wall of height E0 sharing the foot of ``base``.

    V0 = E0 g(base/E0) with g(t) = t up to the knee and an exponential
    approach to 1 above it (C^1 at the knee), so the two walls coincide
    wherever base <= knee * E0.
    """

    base: object
    E0: float = 10.0
    knee: float = 0.5
    bounded = True

    def __post_init__(self):
        if self.E0 <= 0:
            raise ValueError("wall height E0 must be positive")
        if not 0 < self.knee < 1:
            raise ValueError("knee must lie in (0, 1)")

    @property
    def a(self):
        return self.base.a

    @property
    def foot(self):
        return self.base.foot

    def _parts(self, y):
        t = self.base(y) / self.E0
        k = self.knee
        over = np.maximum(t - k, 0.0) / (1.0 - k)
        decay = np.exp(-over)
        g = np.where(t <= k, t, k + (1.0 - k) * (1.0 - decay))
        dg = np.where(t <= k, 1.0, decay)
        d2g = np.where(t <= k, 0.0, -decay / (1.0 - k))
        return g, dg, d2g

    def __call__(self, y):
        return self.E0 * self._parts(y)[0]

    def derivative(self, y):
        return self._parts(y)[1] * self.base.derivative(y)

    def second_derivative(self, y):
        _, dg, d2g = self._parts(y)
        d1 = self.base.derivative(y)
        return dg * self.base.second_derivative(y) + d2g * d1 * d1 / self.E0


@dataclass(frozen=True)
class FlatPotential:
    """No wall at all."""

    bounded = True
    a = 1.0
    foot = 0.0

    def __call__(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def derivative(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def second_derivative(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))


POTENTIALS = {
    "power": PowerWall,
    "exponential": ExponentialWall,
    "none": FlatPotential,
}


def make_potential(kind: str, **params):
    """Catalog lookup used by the CLI; ``saturating`` wraps another entry."""
    if kind == "saturating":
        base_kind = params.pop("base", "power")
        E0 = params.pop("E0", 10.0)
        knee = params.pop("knee", 0.5)
        return SaturatingWall(make_potential(base_kind, **params), E0=E0, knee=knee)
    try:
        cls = POTENTIALS[kind]
    except KeyError:
        raise ValueError(f"unknown potential kind {kind!r}") from None
    return cls(**params)


# -- geometries --------------------------------------------------------------


@dataclass(frozen=True)
class HalfPlaneEdge:
    """Landau gauge A_x = -By; bulk y < 0, wall rising for y > 0."""

    potential: object = PowerWall()
    has_flux = False

    def wall(self, y):
        return self.potential(y)

    def wall_derivative(self, y):
        return self.potential.derivative(y)

    def wall_second_derivative(self, y):
        return self.potential.second_derivative(y)

    def guiding_center(self, kappa, units: Units):
        return -np.asarray(kappa, dtype=float) / units.B

    def wall_feet(self):
        return (0.0,)


@dataclass(frozen=True)
class HalfPlaneDirichlet:
    """Bulk y < 0 with psi(x, 0) = 0 and no wall potential."""

    has_flux = False
    potential = FlatPotential()

    def wall(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    wall_derivative = wall
    wall_second_derivative = wall

    def guiding_center(self, kappa, units: Units):
        return -np.asarray(kappa, dtype=float) / units.B

    def wall_feet(self):
        return (0.0,)


@dataclass(frozen=True)
class Cylinder:
    """Cylinder of radius R with A_phi = -By + Phi/(2 pi R).

    ``walls="both"`` puts wall feet at y = +-L/2 (bulk in between);
    ``walls="upper"`` keeps only the wall with foot at y = 0, bulk below.
    """

    R: float
    L: float = 8.0
    potential: object = PowerWall()
    flux_quanta: float = 0.0
    walls: str = "both"
    has_flux = True

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("cylinder radius R must be positive")
        if not self.L > 0:
            raise ValueError("cylinder length L must be positive")
        if self.walls not in ("both", "upper"):
            raise ValueError("walls must be 'both' or 'upper'")

    @property
    def flux(self) -> float:
        return 2.0 * math.pi * self.flux_quanta

    def with_flux(self, flux_quanta):
        return Cylinder(self.R, self.L, self.potential, flux_quanta, self.walls)

    def wall_feet(self):
        if self.walls == "upper":
            return (0.0,)
        return (-self.L / 2, self.L / 2)

    def wall(self, y):
        y = np.asarray(y, dtype=float)
        if self.walls == "upper":
            return self.potential(y)
        h = self.L / 2
        return self.potential(y - h) + self.potential(-y - h)

    def wall_derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self.walls == "upper":
            return self.potential.derivative(y)
        h = self.L / 2
        return self.potential.derivative(y - h) - self.potential.derivative(-y - h)

    def wall_second_derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self.walls == "upper":
            return self.potential.second_derivative(y)
        h = self.L / 2
        return self.potential.second_derivative(y - h) + self.potential.second_derivative(-y - h)

    def guiding_center(self, kappa, units: Units):
        return -np.asarray(kappa, dtype=float) / (units.B * self.R)


@dataclass(frozen=True)
class Corbino:
    """Disc with a flux tube at the origin and a wall rising for r > R."""

    R: float
    potential: object = PowerWall()
    flux_quanta: float = 0.0
    has_flux = True

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("edge radius R must be positive")

    @property
    def flux(self) -> float:
        return 2.0 * math.pi * self.flux_quanta

    def with_flux(self, flux_quanta):
        return Corbino(self.R, self.potential, flux_quanta)

    def wall(self, r):
        return self.potential(np.asarray(r, dtype=float) - self.R)

    def wall_derivative(self, r):
        return self.potential.derivative(np.asarray(r, dtype=float) - self.R)

    def wall_second_derivative(self, r):
        return self.potential.second_derivative(np.asarray(r, dtype=float) - self.R)

    def guiding_center(self, kappa, units: Units):
        """Clean-state radius r0 = sqrt(2|kappa|/B)."""
        return np.sqrt(2.0 * np.abs(np.asarray(kappa, dtype=float)) / units.B)

    def wall_feet(self):
        return (self.R,)


# -- grids -------------------------------------------------------------------


@dataclass(frozen=True)
class Grid1D:
    """Interior nodes of [y_min, y_max]; both end points carry psi = 0."""

    y_min: float
    y_max: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need at least 3 grid points")
        if not self.y_max > self.y_min:
            raise ValueError("y_max must exceed y_min")

    @property
    def h(self) -> float:
        return (self.y_max - self.y_min) / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.y_min + self.h * np.arange(1, self.n + 1)


@dataclass(frozen=True)
class RadialGrid:
    """Cell centres r_i = (i + 1/2) h, i < n; psi vanishes at r = (n + 1/2) h."""

    r_max: float
    n: int

    def __post_init__(self):
        if self.n < 3 or not self.r_max > 0:
            raise ValueError("invalid radial grid")

    @property
    def h(self) -> float:
        return self.r_max / self.n

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h


@dataclass(frozen=True)
class Grid2D:
    """x-periodic strip; x-major flattening index = j * nx + i (i along x).

    With ``periodic_y`` the strip closes into a torus (flux through it must
    be an integer number of quanta); otherwise psi = 0 on both y ends.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    y_min: float
    periodic_y: bool = False

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError("need at least 3 points per direction")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("spacings must be positive")

    @property
    def circumference(self) -> float:
        return self.nx * self.hx

    @property
    def R(self) -> float:
        return self.circumference / (2.0 * math.pi)

    @property
    def x(self) -> np.ndarray:
        return self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        if self.periodic_y:
            return self.y_min + self.hy * np.arange(self.ny)
        return self.y_min + self.hy * np.arange(1, self.ny + 1)

    @property
    def y_max(self) -> float:
        """Upper Dirichlet line (one step past the last node)."""
        return self.y_min + self.hy * (self.ny + 1)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    @classmethod
    def dirichlet_top(cls, nx, ny, hx, hy, y_top=0.0):
        """Strip whose upper Dirichlet line sits exactly at ``y_top``."""
        return cls(nx, ny, hx, hy, y_top - hy * (ny + 1))


def check_dirichlet_grid(grid, tol=1e-12):
    y_max = grid.y_max
    if abs(y_max) > tol:
        raise GridMismatch(f"Dirichlet geometry needs y_max = 0, got {y_max!r}")


# -- spectral windows --------------------------------------------------------


@dataclass(frozen=True)
class SpectralWindow:
    """Window [E - halfwidth, E + halfwidth] in a bulk gap.

    ``width`` is |Delta| (full width).  eta is the gap distance of the centre;
    construction fails unless eta > delta.
    """

    E: float
    halfwidth: float
    units: Units = Units()
    delta: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0
    E0: float | None = None

    def __post_init__(self):
        if self.halfwidth < 0 or self.delta < 0:
            raise ValueError("halfwidth and delta must be non-negative")
        if not self.eta > self.delta:
            raise WindowNotInGap(
                f"gap distance {self.eta:.6g} does not exceed disorder bound {self.delta:.6g}")

    @property
    def lo(self) -> float:
        return self.E - self.halfwidth

    @property
    def hi(self) -> float:
        return self.E + self.halfwidth

    @property
    def width(self) -> float:
        return 2.0 * self.halfwidth

    @property
    def bulk_gap_distance(self) -> float:
        return gap_distance(self.E, self.units)

    @property
    def eta(self) -> float:
        eta = self.bulk_gap_distance
        if self.E0 is not None:
            eta = min(eta, self.E0 - self.E)
        return eta

    @property
    def eta_branch(self) -> str:
        if self.E0 is not None and self.E0 - self.E < self.bulk_gap_distance:
            return "wall_height"
        return "landau_gap"

    def contains(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        return (E >= self.lo) & (E <= self.hi)


def flux_nodes(M: int = 64) -> np.ndarray:
    """One flux period in quanta, j/M for j < M (exact for power-of-two M)."""
    if M < 2:
        raise ValueError("need at least two flux nodes")
    return np.arange(M) / M
