import math

import mpmath
import numpy as np
import pytest

from hallsim.bands import channel_hamiltonian, lowest_states
from hallsim.errors import CoincidentPoints, InsufficientDecayRange, OnLandauLevel
from hallsim.model import Corbino, PowerWall, RadialGrid
from hallsim.resolvent import (ResolventParams, decay_bound_check, eigenfunction_decay_fit,
                               envelope_shape, free_resolvent_kernel, gamma, gaussian_envelope,
                               kernel_modulus, log_profile, neumann_tail, tail_integral,
                               tricomi_psi)
from hallsim.transport import corbino_state_at_energy

from oracles import hyperu, resolvent_oracle, tail_integral_closed_form

# mpmath.hyperu(a, 1, z) at 40 digits
HYPERU = {
    (-0.5, 0.3): 0.17115959314687945,
    (-0.5, 2.0): 1.2459478282260945,
    (-0.5, 7.5): 2.64871938116769,
    (0.3, 1.0): 0.9430848597638677,
    (0.3, 12.0): 0.47117170355745447,
    (-2.7, 4.0): -8.059136801474724,
    (1.5, 30.0): 0.005671357454664792,
}

# Landau-level spectral sum (20000 levels, closed-form tail) at E = 2, base (0.2, 0.1),
# direction (0.6, 0.8)
LANDAU_SUM = {
    0.1: -0.3244262478270737 + 0.0016221447570308738j,
    1.0: 0.08764515093795437 - 0.004385913083767193j,
    2.5: 0.0956919446385635 - 0.012024184372698572j,
    4.0: 0.013881323771455642 - 0.002813883634619153j,
}


@pytest.mark.parametrize("az", sorted(HYPERU))
def test_tricomi_against_frozen_mpmath(az):
    assert tricomi_psi(*az) == pytest.approx(HYPERU[az], rel=1e-12)


def test_tricomi_across_the_series_switch():
    for a in (-2.3, -0.75, -0.25, 0.4, 1.7):
        for z in np.linspace(0.05, 25.0, 23):
            assert tricomi_psi(a, z) == pytest.approx(hyperu(a, z), rel=1e-11, abs=1e-14)


def test_tricomi_at_nonpositive_integers_is_laguerre():
    for n in range(4):
        for z in (0.5, 3.0, 9.0):
            ref = float((-1) ** n * mpmath.factorial(n) * mpmath.laguerre(n, 0, z))
            assert tricomi_psi(-n, z) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_tricomi_domain():
    with pytest.raises(ValueError):
        tricomi_psi(0.5, 0.0)


def test_gamma_with_sign():
    for x in (0.3, 2.5, -0.5, -1.5, -2.25):
        assert gamma(x) == pytest.approx(math.gamma(x), rel=1e-13)
    with pytest.raises(ValueError):
        gamma(-2.0)


@pytest.mark.parametrize("d", sorted(LANDAU_SUM))
def test_kernel_against_frozen_landau_sum(d):
    p = (0.2, 0.1)
    q = (0.2 + 0.6 * d, 0.1 + 0.8 * d)
    k = free_resolvent_kernel(p, q, ResolventParams(2.0))
    ref = LANDAU_SUM[d]
    assert abs(k - ref) < 1e-6 * abs(ref)


def test_kernel_against_landau_sum_off_axis_and_other_field():
    p = (-0.7, 1.1)
    q = (0.4, -0.3)
    for E, B in ((2.0, 1.0), (0.4, 1.0), (5.5, 2.0)):
        k = free_resolvent_kernel(p, q, ResolventParams(E, B))
        ref = resolvent_oracle(p, q, E, B)
        assert abs(k - ref) < 1e-6 * abs(ref)


def test_kernel_is_hermitian_for_real_energy():
    P = ResolventParams(2.0)
    p, q = (0.3, -1.2), (1.7, 0.4)
    assert free_resolvent_kernel(p, q, P) == pytest.approx(free_resolvent_kernel(q, p, P).conjugate())


def test_kernel_modulus_depends_on_distance_only():
    P = ResolventParams(2.6)
    a = abs(free_resolvent_kernel((1.0, 2.0), (1.0 + 1.2 * math.cos(0.4), 2.0 + 1.2 * math.sin(0.4)), P))
    assert a == pytest.approx(kernel_modulus(1.2, P)[0], rel=1e-13)


def test_kernel_log_singularity():
    # Psi(a, 1; z) ~ -(ln z + psi(a) + 2 gamma_E) / Gamma(a) as z -> 0
    E = 2.0
    zeta = 0.5 * (E - 1.0)
    P = ResolventParams(E)
    for d in (1e-3, 1e-4, 1e-5):
        w = 0.5 * d * d
        lead = (math.log(w) + float(mpmath.digamma(-zeta)) + 2 * float(mpmath.euler)) / (4 * math.pi)
        k = free_resolvent_kernel((0.0, 0.0), (d, 0.0), P)
        assert abs(k.real - lead) < 10 * w * abs(math.log(w))


def test_kernel_errors():
    with pytest.raises(OnLandauLevel):
        ResolventParams(3.0)
    with pytest.raises(CoincidentPoints):
        free_resolvent_kernel((1.0, 1.0), (1.0, 1.0), ResolventParams(2.0))


def test_envelope_dominates_and_xi_is_in_range():
    P = ResolventParams(2.0)
    fit = decay_bound_check(P, np.linspace(0.1, 4.0, 40))
    assert fit.violations == 0 and fit.dominates()
    assert 0.1 <= fit.xi <= 10.0
    assert fit.C > 0
    assert np.all(fit.envelope >= fit.values)


def test_envelope_shape_has_a_log_singularity():
    s = envelope_shape(np.array([1e-6, 1e-3]), 1.0)
    assert s[0] > s[1] > 1.0


def test_kernel_falls_faster_than_gaussian_comparison():
    P = ResolventParams(2.0)
    d = np.linspace(4.0, 8.0, 9)
    ratio = kernel_modulus(d, P) / gaussian_envelope(d, 1.0, 1.0)
    assert np.all(np.diff(ratio) < 0)


@pytest.mark.parametrize("xi", [0.3, 1.0, 2.7])
def test_tail_integral_closed_form(xi):
    assert tail_integral(xi) == pytest.approx(tail_integral_closed_form(xi), rel=1e-10)


def test_neumann_tail_is_linear_in_delta():
    a = neumann_tail(0.01, 1.0, C=2.0)
    b = neumann_tail(0.02, 1.0, C=2.0)
    assert b["ratio"] == pytest.approx(2 * a["ratio"])
    assert a["C_tilde"] == pytest.approx(2 * tail_integral(1.0))
    assert a["converges"]
    r = a["ratio"]
    assert a["series_bound"] == pytest.approx(r / (1 - r))
    big = neumann_tail(10.0, 1.0)
    assert not big["converges"] and big["series_bound"] == math.inf
    with pytest.raises(ValueError):
        neumann_tail(-1.0, 1.0)


def corbino_state(R, h=0.004):
    geom = Corbino(R, PowerWall())
    grid = RadialGrid(R + 8.0, int(round((R + 8.0) / h)))
    return corbino_state_at_energy(geom, 2.0, grid)


def test_log_profile_follows_the_vector_where_it_is_large():
    ch, pair = corbino_state(16.0)
    lp = log_profile(ch, pair.energy, pair.vector)
    u = np.abs(pair.vector)
    big = u > 1e-3 * u.max()
    np.testing.assert_allclose(lp[big], np.log(u[big]), atol=1e-6)
    assert np.all(np.isfinite(lp))
    # continues to decay towards the origin below roundoff
    assert lp[0] < np.log(1e-30)


def test_edge_referenced_decay_rate_is_uniform_in_R():
    lams = []
    for R in (16.0, 24.0):
        ch, pair = corbino_state(R)
        fit = eigenfunction_decay_fit(ch, pair, 4.0, R, reference="edge")
        assert fit.lam > 0 and fit.residual < 0.5
        lams.append(fit.lam)
    assert abs(lams[0] - lams[1]) / min(lams) < 0.15


def test_decay_fit_refuses_bulk_states_and_bad_ranges():
    geom = Corbino(16.0, PowerWall())
    grid = RadialGrid(24.0, 6000)
    ch = channel_hamiltonian(geom, 0.5 * 8.0**2, grid)        # guiding radius 8
    pair = lowest_states(ch, 1)[0]
    with pytest.raises(InsufficientDecayRange):
        eigenfunction_decay_fit(ch, pair, 4.0, 16.0, reference="edge")
    with pytest.raises(InsufficientDecayRange):
        eigenfunction_decay_fit(ch, pair, 20.0, 16.0)
    with pytest.raises(ValueError):
        eigenfunction_decay_fit(*corbino_state(16.0), 4.0, 16.0, reference="middle")


def test_kernel_over_log_distance_settles():
    for B in (1.0, 2.0):
        P = ResolventParams(2.0 * B, B)
        lB = B ** -0.5
        r = [abs(free_resolvent_kernel((0.0, 0.0), (s * lB, 0.0), P)) / abs(math.log(s))
             for s in (1e-2, 1e-3, 1e-4)]
        assert abs(r[1] - r[2]) / r[2] < 0.05
