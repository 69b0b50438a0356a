import dataclasses
from types import SimpleNamespace

import numpy as np
import pytest

from artifact import evolution as ev
from artifact import geometry as G
from artifact.gauge import sources as S
from artifact.geometry import GeometrySnapshot, Immersion, analytic_immersion
from artifact.spectral import TorusGrid, lhh_project, riesz_T

from conftest import perturbed_pair


@pytest.fixture(scope="module")
def curved():
    grid = TorusGrid(2, 16)
    return GeometrySnapshot(analytic_immersion(grid, codim=2, amplitude=0.1))


def test_sources_vanish_on_flat():
    snap = GeometrySnapshot(Immersion.flat(TorusGrid(2, 16), codim=2))
    src = S.gauge_sources(snap)
    assert np.all(src.F_natural == 0) and np.all(src.F_perp == 0)
    lhh = S.lhh_curvature(snap)
    assert np.all(lhh.riemann == 0) and np.all(lhh.rperp == 0)


def test_natural_source_brute_force(curved):
    grid = curved.grid
    mb, k = curved.mbar.value, curved.k.value
    F = S.natural_source(curved.mbar, curved.k, grid).value
    a, b = 1, 2
    ref = 0.0
    for A in range(2):
        for B in range(2):
            for l in range(grid.dim):
                tk = riesz_T(k[A, 0, l + 1], l, grid=grid)
                ref = ref + lhh_project(mb[A, B], k[B, a, b], tk, grid)
    assert np.max(np.abs(F[a, b] - ref)) < 1e-14


def test_natural_source_is_symmetric(curved):
    F = S.gauge_sources(curved).F_natural
    assert np.max(np.abs(F - F.swapaxes(0, 1))) < 1e-15
    assert np.max(np.abs(F)) > 1e-6


def test_spatial_only_matches_slice_block(curved):
    full = S.natural_source(curved.mbar, curved.k, curved.grid).value
    part = S.natural_source(curved.mbar, curved.k, curved.grid, spatial_only=True).value
    assert np.allclose(part, full[1:, 1:], atol=1e-15)


def test_tilde_vanishes_on_initial_slice(curved):
    src = S.gauge_sources(curved, t0=curved.imm.time)
    assert np.all(src.F_natural_tilde == 0) and np.all(src.F_perp_tilde == 0)
    later = GeometrySnapshot(analytic_immersion(curved.grid, codim=2, amplitude=0.1, time=0.3))
    with pytest.raises(ValueError):
        S.gauge_sources(later)
    moved = S.gauge_sources(later, initial=src)
    assert np.max(np.abs(moved.F_natural_tilde)) > 0


def test_source_jets_match_finite_differences(curved):
    grid = curved.grid
    dt = 1e-3

    def at(t, order=0):
        snap = GeometrySnapshot(analytic_immersion(grid, codim=2, amplitude=0.1, time=t))
        return S.natural_source(snap.mbar, snap.k, grid, order)

    fd = (at(dt).value - at(-dt).value) / (2 * dt)
    jet = at(0.0, order=1)
    assert np.max(np.abs(jet.data[1] - fd)) < 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_lhh_curvature_symmetries(curved):
    lhh = S.lhh_curvature(curved)
    R = lhh.riemann
    assert np.max(np.abs(R + R.swapaxes(0, 1))) < 1e-14
    assert np.max(np.abs(R + R.swapaxes(2, 3))) < 1e-14
    P = lhh.rperp
    assert np.max(np.abs(P + P.swapaxes(2, 3))) < 1e-14


def test_lhh_curvature_has_no_high_output_for_low_mode_k():
    # k below frequency 1.5 with full-band m(e) and g^-1: every output block
    # above the band reachable from the low part of the coefficients is empty
    grid = TorusGrid(2, 32)
    rng = np.random.default_rng(5)
    k = grid.random_field(rng, (2, 3, 3), band=1.5)
    k = 0.5 * (k + k.swapaxes(1, 2))
    mb = grid.random_field(rng, (2, 2))
    gi = grid.random_field(rng, (3, 3))
    fake = SimpleNamespace(grid=grid, k=SimpleNamespace(value=k), mbar=SimpleNamespace(value=mb),
                           ginv=SimpleNamespace(value=gi))
    lhh = S.lhh_curvature(fake)
    high = grid.xi_norm >= 6
    for part in (lhh.riemann, lhh.rperp):
        coef = np.abs(grid.fft(part))
        assert np.max(coef[..., high]) < 1e-15
        assert np.max(coef) > 1e-5


def test_balanced_residuals_flat():
    grid = TorusGrid(2, 16)
    snap = GeometrySnapshot(Immersion.flat(grid, codim=2))
    res = S.balanced_residuals(G.decompose_31(snap), snap, S.gauge_sources(snap))
    assert all(v == 0 for v in res.summary().values())


def test_lapse_offset_shows_in_mean():
    grid = TorusGrid(2, 16)
    snap = GeometrySnapshot(Immersion.flat(grid, codim=1))
    fol = G.decompose_31(snap)
    shifted = dataclasses.replace(fol, lapse=fol.lapse + 0.01)
    res = S.balanced_residuals(shifted, snap)
    assert np.isclose(res.lapse_mean, 0.01)
    assert np.max(np.abs(res.lapse)) < 1e-14


def test_balanced_initial_data_meets_slice_conditions():
    grid = TorusGrid(2, 32)
    state = ev.initial_data_from_pair(*perturbed_pair(grid, 1e-2), grid)
    snap = ev.snapshot(state)
    fol = G.decompose_31(snap)
    res = S.balanced_residuals(fol, snap, S.gauge_sources(snap)).summary()
    prod = ev.initial_data_from_pair(*perturbed_pair(grid, 1e-2), grid, gauge="product")
    psnap = ev.snapshot(prod)
    pres = S.balanced_residuals(G.decompose_31(psnap), psnap, S.gauge_sources(psnap)).summary()
    assert res["lapse"] < 1e-10 and res["harmonic"] < 1e-10
    assert pres["lapse"] > 1e3 * res["lapse"]
