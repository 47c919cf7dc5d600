import math

import numpy as np
import pytest

from hallsim.bands import (channel_for, channel_hamiltonian, dispersion, lowest_energies,
                           lowest_states, spectral_flow, strip_operator, track_bands)
from hallsim.errors import GridMismatch, OutOfTable
from hallsim.linalg import eig_dense_window
from hallsim.model import (Corbino, Cylinder, Grid1D, Grid2D, HalfPlaneDirichlet, HalfPlaneEdge,
                           PowerWall, RadialGrid, Units, corbino_clean_energy, flux_nodes)

from oracles import dirichlet_level

# roots of D_nu(-sqrt(2) kappa) = 0 via mpmath (30 digits), E = 2 nu + 1
DIRICHLET_E0 = {-1.0: 6.074391061607878, 0.0: 3.0, 1.0: 1.4684677434670865}


@pytest.mark.parametrize("kappa", sorted(DIRICHLET_E0))
def test_frozen_dirichlet_values_reproduce(kappa):
    assert dirichlet_level(kappa) == pytest.approx(DIRICHLET_E0[kappa], rel=1e-13)


@pytest.mark.parametrize("kappa", sorted(DIRICHLET_E0))
def test_dirichlet_channel_against_parabolic_cylinder_roots(kappa):
    grid = Grid1D(-14.0, 0.0, 7000)
    ch = channel_hamiltonian(HalfPlaneDirichlet(), kappa, grid)
    E = lowest_states(ch, 1)[0].energy
    assert E == pytest.approx(DIRICHLET_E0[kappa], rel=1e-5)


def test_dirichlet_grid_must_end_at_the_wall():
    with pytest.raises(GridMismatch):
        channel_hamiltonian(HalfPlaneDirichlet(), 0.0, Grid1D(-10.0, 0.5, 100))


def test_dirichlet_error_is_second_order():
    errs = []
    for n in (250, 500, 1000):
        ch = channel_hamiltonian(HalfPlaneDirichlet(), 0.0, Grid1D(-12.0, 0.0, n))
        errs.append(abs(lowest_energies(ch, 1)[0] - 3.0))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.1)


def test_halfplane_bands_approach_landau_levels_in_the_bulk():
    grid = Grid1D(-20.0, 8.0, 5600)
    ch = channel_hamiltonian(HalfPlaneEdge(PowerWall()), 12.0, grid)   # y0 = -12
    np.testing.assert_allclose(lowest_energies(ch, 3), [1.0, 3.0, 5.0], rtol=1e-5)


def test_halfplane_band_rises_into_the_wall():
    grid = Grid1D(-12.0, 8.0, 2000)
    tab = dispersion(HalfPlaneEdge(PowerWall()), np.linspace(-3.0, 6.0, 31), 2, grid)
    # guiding centre moves into the wall as kappa decreases
    assert np.all(np.diff(tab.band(0)) < 1e-10)
    assert tab.band(0)[0] > 5.0 > 1.0 + 1e-5 > tab.band(0)[-1]
    assert np.all(tab.energies[:, 1] > tab.energies[:, 0])
    assert tab.residuals.max() < 1e-8


def test_corbino_channel_against_closed_form():
    geom = Corbino(30.0, PowerWall())
    grid = RadialGrid(40.0, 8000)
    for kappa, n in ((40.0, 0), (40.0, 1), (-3.0, 0), (5.0, 2)):
        E = lowest_energies(channel_hamiltonian(geom, kappa, grid), n + 1)[n]
        # kappa enters the closed form as l at zero flux
        ref = corbino_clean_energy(Units(), n, kappa)
        assert E == pytest.approx(ref, rel=2e-5)


def test_corbino_explicit_scheme_agrees_away_from_origin():
    geom = Corbino(20.0)
    grid = RadialGrid(30.0, 6000)
    a = lowest_energies(channel_hamiltonian(geom, 60.0, grid, scheme="flux"), 2)
    b = lowest_energies(channel_hamiltonian(geom, 60.0, grid, scheme="explicit"), 2)
    np.testing.assert_allclose(a, b, rtol=1e-6)


def test_wrong_grid_type_is_refused():
    with pytest.raises(GridMismatch):
        channel_hamiltonian(Corbino(10.0), 1.0, Grid1D(0.0, 1.0, 10))
    with pytest.raises(GridMismatch):
        channel_hamiltonian(Cylinder(4.0), 1.0, RadialGrid(1.0, 10))


@pytest.mark.parametrize("geom,grid", [
    (Cylinder(6.0, 6.0, PowerWall()), Grid1D(-9.0, 9.0, 900)),
    (Corbino(8.0, PowerWall()), RadialGrid(14.0, 700)),
])
def test_spectral_flow_is_exact(geom, grid):
    ls = np.arange(-3, 6)
    flux = np.append(flux_nodes(8), 1.0)
    tab = spectral_flow(geom, flux, ls, 2, grid)
    err = np.abs(tab.energies[:, 1:, -1] - tab.energies[:, :-1, 0])
    assert err.max() == 0.0
    assert tab.energy(1, 2, 1.0) == tab.energy(1, 1, 0.0)
    with pytest.raises(OutOfTable):
        tab.energy(0, 99, 0.0)


def test_channel_for_uses_geometry_flux():
    grid = Grid1D(-9.0, 9.0, 300)
    a = channel_for(Cylinder(6.0, flux_quanta=0.25), 2, grid)
    assert a.kappa == 1.75


def test_track_bands_uses_vectors_at_exact_degeneracy():
    k = np.linspace(-1, 1, 21)
    E, vecs = [], []
    for kk in k:
        # level +k lives on e1, level -k on e2; sorted rows swap them at k = 0
        vals = np.array([kk, -kk])
        order = np.argsort(vals, kind="stable")
        E.append(vals[order])
        vecs.append(np.eye(2)[:, order])
    tracked, _ = track_bands(np.array(E), vecs)
    np.testing.assert_allclose(tracked[:, 0], k)
    np.testing.assert_allclose(tracked[:, 1], -k)


def test_torus_lowest_level_is_degenerate():
    n_phi = 4
    L = math.sqrt(2 * math.pi * n_phi)
    grid = Grid2D(20, 20, L / 20, L / 20, 0.0, periodic_y=True)
    op = strip_operator(HalfPlaneEdge(PowerWall(foot=1e9)), grid, Units())
    ev = np.linalg.eigvalsh(op.to_dense())
    assert np.sum(ev < 2.0) == n_phi
    assert not np.any((ev > 1.5) & (ev < 2.5))


def test_torus_flux_must_be_integer():
    with pytest.raises(GridMismatch):
        strip_operator(HalfPlaneEdge(), Grid2D(10, 10, 0.3, 0.3, 0.0, periodic_y=True))


def test_strip_spectrum_is_flux_periodic():
    grid = Grid2D.dirichlet_top(16, 30, 0.3, 0.25, 3.0)
    specs = []
    for q in (0.3, 1.3):
        geom = Cylinder(grid.R, potential=PowerWall(), flux_quanta=q, walls="upper")
        specs.append([p.energy for p in eig_dense_window(strip_operator(geom, grid).matrix, 0, 6)])
    np.testing.assert_allclose(specs[0], specs[1], atol=1e-10)


def test_strip_radius_must_match_grid():
    grid = Grid2D.dirichlet_top(16, 30, 0.3, 0.25, 3.0)
    with pytest.raises(GridMismatch):
        strip_operator(Cylinder(2 * grid.R), grid)
