import numpy as np
import pytest

from artifact import evolution as ev
from artifact import norms as Nm
from artifact.spectral import TorusGrid, bank

from conftest import perturbed_pair, plane_wave


def test_sobolev_single_mode(grid2):
    f = plane_wave(grid2, (3, 4))
    vol = (2 * np.pi) ** 2
    for s in (0.0, 1.0, 2.5, -1.0):
        assert np.isclose(Nm.sobolev_norm(f, grid2, s), np.sqrt(vol / 2) * 26 ** (s / 2))
    assert np.isclose(Nm.sobolev_norm(f, grid2, 0, np.inf), 1.0)


def test_besov_on_plateau_mode():
    grid = TorusGrid(1, 64)
    b = bank(grid)
    j = 3
    xi = [x for x in range(1, 32) if b.chi(j)[x] == 1.0][0]
    f = plane_wave(grid, (xi,))
    assert np.isclose(Nm.besov_norm(f, grid, 1.5), 2 ** (1.5 * j) * Nm.sobolev_norm(f, grid))


def test_norms_are_homogeneous_and_monotone(grid2, rng):
    f = grid2.random_field(rng, band=5)
    for norm in (lambda g: Nm.sobolev_norm(g, grid2, 1.5), lambda g: Nm.besov_norm(g, grid2, 1.5)):
        assert np.isclose(norm(-3 * f), 3 * norm(f))
    assert Nm.sobolev_norm(f, grid2, 1) < Nm.sobolev_norm(f, grid2, 2)
    assert Nm.besov_norm(f, grid2, 1) < Nm.besov_norm(f, grid2, 2)


def test_mixed_norm_of_time_constant_series(grid2):
    f = plane_wave(grid2, (1, 2))
    times = np.linspace(0, 2, 21)
    series = [f] * len(times)
    inner = Nm.sobolev_norm(f, grid2, 1.0, 4.0)
    assert np.isclose(Nm.mixed_norm(series, times, grid2, 3.0, 1.0, 4.0), inner * 2 ** (1 / 3))
    assert np.isclose(Nm.mixed_norm(series, times, grid2, np.inf, 1.0, 4.0), inner)


def test_data_size_vanishes_on_flat_and_is_linear(grid2):
    assert Nm.data_size(*ev.flat_pair(grid2, 2), grid2) == 0
    d = [Nm.data_size(*perturbed_pair(grid2, eps), grid2) for eps in (1e-4, 1e-3)]
    assert abs(d[1] / d[0] - 10) < 0.05


def test_product_ratios_trivial_factors(grid2, rng):
    f = grid2.random_field(rng, band=4)
    assert Nm.product_ratios(f, np.zeros(grid2.shape), grid2, 3.0, 0.05, 4.0) == [0.0, 0.0, 0.0]
    one = np.ones(grid2.shape)
    r = Nm.product_ratios(one, f, grid2, 3.0, 0.05, 4.0)
    # with f1 = 1 each ratio is a pure norm comparison bounded by |1|_{H^a}^-1
    assert all(0 < x <= 1 / Nm.sobolev_norm(one, grid2) + 1e-12 for x in r)


def test_functional_inequality_range_checks(grid2):
    with pytest.raises(Nm.RangeError):
        Nm.functional_inequality_ratios(grid2, samples=1, s=2.0)
    with pytest.raises(Nm.RangeError):
        Nm.functional_inequality_ratios(grid2, samples=1, p=np.inf)


def test_functional_inequality_ratios_bounded():
    out = Nm.functional_inequality_ratios(TorusGrid(2, 32), samples=20)
    assert all(0 < out[k] < 10 for k in ("H^{s-2}", "H^{s-3}", "H^{s-4}"))


def test_square_function_bounds_contain_samples(rng):
    grid = TorusGrid(2, 32)
    lo, hi = Nm.square_function_bounds(grid, 1.0)
    assert 0 < lo <= hi
    for _ in range(5):
        f = grid.random_field(rng, band=grid.n / 3)
        assert lo * (1 - 1e-12) <= Nm.square_function_constant(f, grid, 1.0) <= hi * (1 + 1e-12)


def test_small_constants():
    c = Nm.SmallConstants()
    assert 0 < c.s1 < c.s0
    with pytest.raises(Nm.RangeError):
        Nm.SmallConstants(s=2.6)
    with pytest.raises(Nm.RangeError):
        Nm.SmallConstants(delta0=0.5)


def test_bootstrap_quantities_flat_and_perturbed():
    grid = TorusGrid(2, 16)
    flat = ev.initial_data_from_pair(*ev.flat_pair(grid, 2), grid)
    rep = Nm.bootstrap_quantities([ev.snapshot(flat)] * 3, [0, 0.1, 0.2])
    assert rep.Q_k == 0 and rep.Q_g == 0 and rep.Q_perp == 0
    pair = perturbed_pair(grid, 1e-3, codim=2)
    st = ev.initial_data_from_pair(*pair, grid)
    states = ev.evolve(st, 0.2, 0.1)
    rep = Nm.bootstrap_quantities([ev.snapshot(s) for s in states], [s.time for s in states], data=pair)
    assert 0 < rep.Q_k < 1 and 0 < rep.Q_g < 1 and 0 < rep.Q_perp < 1
    assert rep.D > 0
    assert rep.to_csv().startswith("label,p,s,q,value\n")
