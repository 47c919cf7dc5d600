import math

import numpy as np
import pytest

from hallsim.bands import channel_hamiltonian, lowest_states, spectral_flow, strip_operator
from hallsim.cli import hall_setup
from hallsim.errors import NoEdgeStatesInWindow, OutOfTable, WindowNotInGap
from hallsim.linalg import eig_dense_window
from hallsim.model import (Corbino, Cylinder, Grid1D, Grid2D, PowerWall, RadialGrid, Units,
                           flux_nodes)
from hallsim.transport import (StateCurrent, channel_current_exact, channel_current_fd,
                               channel_state_currents, corbino_current_decomposition,
                               corbino_state_at_energy, current_report, edge_current_fh,
                               hall_conductivity, haw_bounds, richardson_current, strip_current_fh,
                               strip_state_currents, virial_residual, virial_terms, wall_force)

CYL = Cylinder(8.0, 8.0, PowerWall())
GRID = Grid1D(-10.0, 10.0, 4000)


@pytest.mark.parametrize("kappa", [-39.2, 39.2])
def test_flux_derivative_equals_wall_force_current(kappa):
    ch = channel_hamiltonian(CYL, kappa, GRID)
    p = lowest_states(ch, 1)[0]
    rep = current_report(CYL, ch, p, (0, kappa))
    assert abs(rep.I_fh) > 1e-2
    assert rep.discrepancy < 1e-6 * abs(rep.I_fh)
    assert richardson_current(CYL, kappa, 0, GRID) == pytest.approx(rep.I_fh, rel=1e-8)


def test_currents_at_the_two_walls_are_opposite():
    hi = channel_hamiltonian(CYL, -39.2, GRID)     # guiding centre y0 = +4.9
    lo = channel_hamiltonian(CYL, 39.2, GRID)
    I_hi = channel_current_exact(hi, lowest_states(hi, 1)[0].vector)
    I_lo = channel_current_exact(lo, lowest_states(lo, 1)[0].vector)
    assert I_hi < 0 < I_lo
    assert I_hi == pytest.approx(-I_lo, rel=1e-9)
    # the wall force itself is positive at the upper wall
    assert wall_force(lowest_states(hi, 1)[0], hi.wall_derivative) > 0


def test_flow_table_difference_matches_operator_difference():
    grid = Grid1D(-10.0, 10.0, 800)
    tab = spectral_flow(CYL, flux_nodes(16), np.arange(36, 42), 1, grid)
    fd = edge_current_fh(tab, 0, 39, 0.25, 1 / 16)
    direct = channel_current_fd(CYL, 39 - 0.25, 0, grid, step=1 / 16)
    assert fd == pytest.approx(direct, rel=1e-8)


def test_channel_virial_residual_is_roundoff():
    ch = channel_hamiltonian(CYL, -39.2, GRID)
    for p in lowest_states(ch, 3):
        assert virial_residual(ch, p) < 1e-9


def strip_states():
    grid = Grid2D.dirichlet_top(24, 40, 0.3, 0.2, 3.0)
    geom = Cylinder(grid.R, potential=PowerWall(), flux_quanta=0.25, walls="upper")
    op = strip_operator(geom, grid)
    return op, eig_dense_window(op.matrix, 1.5, 2.5)


def test_strip_virial_terms_add_up():
    op, pairs = strip_states()
    assert pairs
    for p in pairs:
        t = virial_terms(op, p)
        assert abs(t["total"]) < 1e-8
        assert t["velocity"] + t["boundary"] + t["force"] == pytest.approx(t["total"], abs=1e-8)
        assert virial_residual(op, p) < 1e-8


def test_strip_flux_derivative_matches_finite_difference():
    grid = Grid2D.dirichlet_top(24, 40, 0.3, 0.2, 3.0)
    s = 1e-4

    def lowest_in_window(q):
        geom = Cylinder(grid.R, potential=PowerWall(), flux_quanta=q, walls="upper")
        op = strip_operator(geom, grid)
        return op, eig_dense_window(op.matrix, 1.5, 2.5)

    op, pairs = lowest_in_window(0.25)
    Ep = [p.energy for p in lowest_in_window(0.25 + s)[1]]
    Em = [p.energy for p in lowest_in_window(0.25 - s)[1]]
    fd = -(np.array(Ep) - np.array(Em)) / (2 * s * 2 * math.pi)
    exact = [strip_current_fh(op, p) for p in pairs]
    np.testing.assert_allclose(exact, fd, rtol=1e-6)


def test_hall_conductivity_integer_nu1():
    table, mu_l, mu_r = hall_setup(8.0, 1, Units(), PowerWall(1.0, 2.0), h=0.02, M=64)
    res = hall_conductivity(table, mu_l, mu_r)
    assert res.nu_estimate == 1
    assert abs(res.sigma - 1.0) < 5e-3
    assert sum(res.per_band) == pytest.approx(res.sigma)
    assert res.per_band[1] == pytest.approx(0.0, abs=1e-12)
    assert math.isfinite(res.telescoping)


def test_hall_refuses_bad_chemical_potentials():
    grid = Grid1D(-8.0, 8.0, 400)
    table = spectral_flow(Cylinder(4.0, 6.0, PowerWall()), flux_nodes(8), np.arange(-3, 4), 1, grid)
    with pytest.raises(WindowNotInGap):
        hall_conductivity(table, 1.0, 2.5)
    with pytest.raises(OutOfTable):
        # the table does not reach the walls, so band 0 is occupied at its ends
        hall_conductivity(table, 1.6, 2.4)


def test_haw_bounds_on_cylinder_edge_states():
    st = channel_state_currents(CYL, np.linspace(-50, 50, 401), GRID)
    hb = haw_bounds(st, (1.9, 2.1), CYL.R)
    assert hb.count > 0
    assert 0 < hb.C_lower <= hb.C_upper < math.inf
    lo, hi = hb.signed
    assert lo < 0 < hi
    bulk = [StateCurrent(1.0, 1e-9, 0.1), StateCurrent(2.0, 0.02, 0.2)]
    with pytest.raises(NoEdgeStatesInWindow):
        haw_bounds(bulk, (1.5, 2.5), CYL.R)


def test_strip_state_currents_classify_wall_states():
    op, pairs = strip_states()
    st = strip_state_currents(op, pairs)
    assert any(s.edge_mass > 0.5 for s in st)


def test_corbino_current_terms_add_up():
    geom = Corbino(8.0, PowerWall())
    ch, pair = corbino_state_at_energy(geom, 2.0, RadialGrid(16.0, 8000))
    assert pair.energy == pytest.approx(2.0, abs=1e-9)
    t = corbino_current_decomposition(ch, pair)
    assert t["relative"] < 1e-4
    assert t["T2"] >= 0
    assert t["T3"] < 0
    assert t["I_phi"] > 0


def test_corbino_decomposition_needs_corbino_channel():
    ch = channel_hamiltonian(CYL, 0.0, GRID)
    with pytest.raises(ValueError):
        corbino_current_decomposition(ch, lowest_states(ch, 1)[0])
