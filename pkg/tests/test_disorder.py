import numpy as np
import pytest

from hallsim.bands import strip_operator
from hallsim.disorder import (box_sup, generate, radial_cut, read_field, spectrum_inclusion_check,
                              write_field)
from hallsim.model import Grid2D, HalfPlaneEdge, PowerWall, Units

GRID = Grid2D.dirichlet_top(16, 32, 0.4, 0.4, 3.0)


def test_same_seed_same_field_and_bytes(tmp_path):
    a = generate(7, 0.05, 1.0, GRID)
    b = generate(7, 0.05, 1.0, GRID)
    np.testing.assert_array_equal(a.values, b.values)
    write_field(tmp_path / "a.bin", a)
    write_field(tmp_path / "b.bin", b)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    head, values = read_field(tmp_path / "a.bin")
    assert head["seed"] == 7 and head["nx"] == 16 and head["ny"] == 32
    np.testing.assert_array_equal(values, a.values)


def test_read_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"\0" * 64)
    with pytest.raises(ValueError):
        read_field(p)


def test_different_seeds_differ():
    a = generate(1, 0.05, 1.0, GRID)
    b = generate(2, 0.05, 1.0, GRID)
    assert np.max(np.abs(a.values - b.values)) > 1e-3


def test_field_is_bounded_by_delta_everywhere():
    fld = generate(3, 0.2, 0.7, GRID)
    rng = np.random.default_rng(0)
    x = rng.uniform(-20, 20, 5000)
    y = rng.uniform(GRID.y[0] - 3, GRID.y[-1] + 3, 5000)
    V = fld.evaluate(x, y)[0]
    assert np.max(np.abs(V)) < 0.2
    assert box_sup(fld, 0.0, -5.0, 4.0) < 0.2


def test_field_is_periodic_in_x():
    fld = generate(4, 0.1, 1.0, GRID)
    y = np.linspace(-8, 2, 7)
    a = fld.evaluate(np.full_like(y, 0.3), y)
    b = fld.evaluate(np.full_like(y, 0.3 + GRID.circumference), y)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, atol=1e-14)


def test_field_derivatives_match_finite_differences():
    fld = generate(5, 0.1, 1.0, GRID)
    x = np.linspace(0.1, 6.0, 9)
    y = np.linspace(-10.0, 2.0, 9)
    h = 1e-5
    V, Vx, Vy, Vyy = fld.evaluate(x, y)
    np.testing.assert_allclose(Vx, (fld.evaluate(x + h, y)[0] - fld.evaluate(x - h, y)[0]) / (2 * h),
                               atol=1e-8)
    np.testing.assert_allclose(Vy, (fld.evaluate(x, y + h)[0] - fld.evaluate(x, y - h)[0]) / (2 * h),
                               atol=1e-8)
    np.testing.assert_allclose(Vyy, (fld.evaluate(x, y + h)[2] - fld.evaluate(x, y - h)[2]) / (2 * h),
                               atol=1e-6)
    assert fld.delta1 > 0 and fld.delta2 > 0 and fld.variance() > 0


def test_zero_amplitude_field_vanishes():
    fld = generate(1, 0.0, 1.0, GRID)
    assert not np.any(fld.values) and not fld.saturated.any()
    with pytest.raises(ValueError):
        generate(1, -0.1, 1.0, GRID)


def test_bump_count_matches_density():
    # K ~ Poisson(area / ell^2)
    area = GRID.circumference * (GRID.y[-1] - GRID.y[0] + 6.0)
    counts = [len(generate(s, 0.1, 1.0, GRID).amplitudes) for s in range(40)]
    assert abs(np.mean(counts) - area) < 4 * np.sqrt(area / 40)


def test_every_disordered_level_stays_within_delta():
    geom = HalfPlaneEdge(PowerWall())
    clean = np.linalg.eigvalsh(strip_operator(geom, GRID, Units()).to_dense())
    delta = 0.05
    dis = []
    for seed in range(1, 6):
        fld = generate(seed, delta, 1.0, GRID)
        dis.append(np.linalg.eigvalsh(strip_operator(geom, GRID, Units(), fld).to_dense()))
    rep = spectrum_inclusion_check(clean, dis, delta)
    assert rep.violations == 0
    # Weyl: a perturbation of norm < delta moves each ordered eigenvalue by less than delta
    assert max(rep.max_shift) < delta
    assert max(rep.max_distance) <= max(rep.max_shift)
    assert all(0 < f <= 1 for f in rep.proxy_fraction)


def test_inclusion_check_counts_violations():
    rep = spectrum_inclusion_check([0.0, 1.0, 2.0], [[0.05, 1.5, 2.0]], 0.1)
    assert rep.violations == 1
    assert rep.max_distance == [pytest.approx(0.5)]


def test_radial_cut_is_deterministic_and_bounded():
    r = np.linspace(0.0, 30.0, 400)
    a = radial_cut(11, 0.05, 1.0, r)
    b = radial_cut(11, 0.05, 1.0, r)
    np.testing.assert_array_equal(a, b)
    assert np.max(np.abs(a)) < 0.05
    assert np.std(a) > 1e-3
