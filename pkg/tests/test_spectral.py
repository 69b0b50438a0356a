import numpy as np
import pytest

from artifact.spectral import (SpectralField, SpectralRangeError, TorusGrid, bank, chi_tilde, extend,
                               fractional_op, hl_decompose, lhh_project, lp_blocks, lp_project,
                               phi_bump, riesz_T)

from conftest import plane_wave


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(4, 16)
    with pytest.raises(ValueError):
        TorusGrid(2, 15)


def test_fft_round_trip(grid2, rng):
    f = rng.standard_normal(grid2.shape)
    back = grid2.to_real(grid2.fft(f))
    assert np.max(np.abs(back - f)) <= 10 * np.finfo(float).eps * np.max(np.abs(f)) * grid2.n


def test_derivative_of_plane_wave(grid2):
    f = np.sin(2 * grid2.x[0] + 3 * grid2.x[1])
    assert np.allclose(grid2.deriv(f, 1), 3 * np.cos(2 * grid2.x[0] + 3 * grid2.x[1]), atol=1e-12)


def test_parseval(grid2, rng):
    f = grid2.random_field(rng)
    l2 = np.sum(f**2) * grid2.cell_volume
    coef = np.sum(np.abs(grid2.fft(f)) ** 2) * grid2.volume
    assert abs(l2 - coef) <= 1e-12 * l2


def test_partition_of_unity_on_lattice():
    for grid in (TorusGrid(1, 64), TorusGrid(2, 32), TorusGrid(3, 8)):
        b = bank(grid)
        total = sum(b.chi(j) for j in range(b.jmax + 1))
        assert np.max(np.abs(total - 1)) <= 1e-14


def test_bump_plateau_and_support():
    z = np.linspace(0, 3, 601)
    p = phi_bump(z)
    assert np.all(p[z <= 1.5] == 1.0)
    assert np.all(p[z >= 1.75] == 0.0)
    assert np.all(chi_tilde(np.array([1.0, 2.0])) == 1.0)


def test_blocks_resum(grid2, rng):
    f = grid2.random_field(rng)
    assert np.max(np.abs(lp_blocks(f, grid2).sum(axis=0) - f)) <= 1e-13


def test_plateau_mode_lives_in_one_block():
    grid = TorusGrid(1, 64)
    f = np.cos(8 * grid.x[0])  # |xi| = 2^3
    for j in range(bank(grid).jmax + 1):
        expected = f if j == 3 else 0 * f
        assert np.allclose(lp_project(f, j, grid), expected, atol=1e-14)


def test_constant_is_low_block(grid2):
    f = np.full(grid2.shape, 2.5)
    assert np.allclose(lp_project(f, 0, grid2), f)
    assert np.allclose(lp_project(f, 1, grid2), 0)


def test_range_error(grid2):
    with pytest.raises(SpectralRangeError):
        lp_project(np.zeros(grid2.shape), bank(grid2).jmax + 1, grid2)


def test_lp_idempotent_far_blocks(grid2, rng):
    f = grid2.random_field(rng)
    assert np.allclose(lp_project(lp_project(f, 0, grid2), 2, grid2), 0, atol=1e-15)


def test_fractional_symbols(grid2):
    f = np.cos(3 * grid2.x[0] + 4 * grid2.x[1])
    assert np.allclose(fractional_op(f, "absD", grid=grid2), 5 * f, atol=1e-12)
    c = np.full(grid2.shape, 3.0)
    assert np.allclose(fractional_op(c, "japanese", grid=grid2), c)
    with pytest.raises(ValueError):
        fractional_op(c, "absD", -1.0, grid=grid2)


def test_riesz_pair_sums_to_abs_d_with_sign(grid2, rng):
    # sum_j d_j (d_j/|D|) f = -|D| f for mean-free f
    f = grid2.random_field(rng)
    f -= grid2.mean(f)
    total = sum(grid2.deriv(fractional_op(f, "dj_over_absD", axis=j, grid=grid2), j) for j in range(2))
    assert np.max(np.abs(total + fractional_op(f, "absD", grid=grid2))) <= 1e-12


def test_divergence_identity(rng):
    grid = TorusGrid(2, 64)
    f = grid.random_field(rng)
    for j in range(1, bank(grid).jmax + 1):
        div = sum(grid.deriv(riesz_T(lp_project(f, j, grid), i, j, grid), i) for i in range(2))
        assert np.max(np.abs(div - lp_project(f, j, grid))) <= 1e-12


def test_riesz_plateau_and_support():
    grid = TorusGrid(1, 128)
    b = bank(grid)
    xi = grid.xi[0]
    sym = b.riesz_symbol(0, 2)
    at = np.argwhere(xi == 4)[0]
    assert np.isclose(sym[tuple(at)], -1j / 4)
    far = np.abs(xi) >= 8 * 4
    assert np.all(sym[far] == 0)


def test_mikhlin_scaling():
    grid = TorusGrid(2, 64)
    b = bank(grid)
    c = [np.max(np.abs(b.riesz_symbol(0, j))) * 2.0**j for j in range(1, b.jmax + 1)]
    assert max(c) / min(c) < 2.0


def test_lhh_symmetry_and_zero(grid2, rng):
    h, f1, f2 = (grid2.random_field(rng) for _ in range(3))
    assert np.array_equal(lhh_project(h, f1, f2, grid2), lhh_project(h, f2, f1, grid2))
    assert np.all(lhh_project(h, 0 * f1, f2, grid2) == 0)


def test_lhh_matches_triple_sum(rng):
    grid = TorusGrid(1, 16)
    b = bank(grid)
    h, f1, f2 = (grid.random_field(rng) for _ in range(3))
    hb, b1, b2 = lp_blocks(h, grid), lp_blocks(f1, grid), lp_blocks(f2, grid)
    J = b.jmax

    def brute(a, c):
        out = 0.0
        for j in range(J + 1):
            for jp in range(J + 1):
                for jpp in range(J + 1):
                    if jp > j - 2 and abs(jpp - jp) <= 2:
                        out = out + hb[j] * a[jp] * c[jpp]
        return out

    expected = grid.dealias(0.5 * (brute(b1, b2) + brute(b2, b1)))
    assert np.max(np.abs(lhh_project(h, f1, f2, grid) - expected)) <= 1e-12


def test_extend_initial_slice_and_derivatives(grid2, rng):
    h = grid2.random_field(rng)
    assert np.max(np.abs(extend(h, 0.0, grid2) - h)) <= 1e-14
    for k in (1, 2):
        assert np.max(np.abs(extend(h, 0.0, grid2, derivative=k))) <= 1e-12
    assert np.all(extend(0 * h, 0.3, grid2) == 0)


def test_extend_time_bound(rng):
    grid = TorusGrid(1, 64)
    h = grid.random_field(rng)
    ts = np.linspace(0, 1, 401)
    ratios = []
    for j in range(1, bank(grid).jmax + 1):
        blk = lp_project(extend(h, ts, grid, derivative=1), j, grid)
        ratios.append(np.max(np.abs(blk)) / (2.0**j * np.max(np.abs(h))))
    assert max(ratios) < 10


def test_hl_decompose_sums(grid2, rng):
    f, g = grid2.random_field(rng), grid2.random_field(rng)
    for j in range(bank(grid2).jmax + 1):
        parts = hl_decompose(f, g, j, grid2)
        assert np.max(np.abs(sum(parts) - lp_project(f * g, j, grid2))) <= 1e-12


def test_hl_decompose_constant_factor(grid2, rng):
    f = np.full(grid2.shape, 1.7)
    g = grid2.random_field(rng)
    j = 3
    hl, lh, hh = hl_decompose(f, g, j, grid2)
    assert np.allclose(lh, 1.7 * lp_project(g, j, grid2), atol=1e-13)
    assert np.allclose(hl, 0, atol=1e-13) and np.allclose(hh, 0, atol=1e-13)


def test_hl_matches_bruteforce_pairs(rng):
    grid = TorusGrid(1, 8)
    f, g = grid.random_field(rng), grid.random_field(rng)
    fb, gb = lp_blocks(f, grid), lp_blocks(g, grid)
    J = bank(grid).jmax
    for j in range(J + 1):
        total = sum(fb[a] * gb[c] for a in range(J + 1) for c in range(J + 1))
        assert np.allclose(sum(hl_decompose(f, g, j, grid)), lp_project(total, j, grid), atol=1e-13)


def test_multipliers_commute(grid2, rng):
    f = grid2.random_field(rng)
    a = riesz_T(fractional_op(f, "japanese", -1.0, grid=grid2), 0, 2, grid2)
    b = fractional_op(riesz_T(f, 0, 2, grid2), "japanese", -1.0, grid=grid2)
    assert np.max(np.abs(a - b)) <= 1e-14


def test_spectral_field_wrapper(grid2):
    f = SpectralField(grid2, plane_wave(grid2, (1, 0)))
    g = f * f
    assert isinstance(g, SpectralField)
    assert np.allclose(lp_project(f, 0).values, f.values)
