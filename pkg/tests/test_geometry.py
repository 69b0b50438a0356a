import numpy as np
import pytest

from artifact import geometry as G
from artifact.geometry import GeometrySnapshot, Immersion, analytic_immersion
from artifact.jets import Jet
from artifact.spectral import TorusGrid


def static_graph(grid, f):
    """Y = (t, x, f(x)) in d = 1 with vanishing time derivatives."""
    data = np.zeros((5, 3) + grid.shape)
    data[0, 2] = f
    return Immersion(grid, Jet(data), 0.0, 1)


@pytest.fixture
def graph():
    grid = TorusGrid(1, 64)
    f = 0.3 * np.sin(grid.x[0])
    return grid, f, GeometrySnapshot(static_graph(grid, f))


def test_flat_immersion_geometry(grid2):
    snap = GeometrySnapshot(Immersion.flat(grid2, codim=2))
    assert np.allclose(snap.g.value, G.minkowski(3)[..., None, None] * np.ones(grid2.shape))
    assert np.all(snap.k.value == 0)
    assert G.curvature_two_ways(snap)[2] == 0
    assert G.codazzi_residual(snap)[0] == 0
    e = snap.frame.e.value
    assert np.allclose(e[0, 3], 1) and np.allclose(e[1, 4], 1)
    fol = G.decompose_31(snap)
    assert np.allclose(fol.lapse, 1) and np.allclose(fol.shift, 0) and np.allclose(fol.h, 0)


def test_static_graph_metric_and_k(graph):
    grid, f, snap = graph
    fp = 0.3 * np.cos(grid.x[0])
    fpp = -0.3 * np.sin(grid.x[0])
    g = snap.g.value
    assert np.allclose(g[0, 0], -1) and np.allclose(g[0, 1], 0)
    assert np.allclose(g[1, 1], 1 + fp**2, atol=1e-13)
    k = snap.k.value[0]
    mbar = snap.mbar.value[0, 0]
    # frame vector is not unit length; normalize by sqrt(mbar)
    kxx = k[1, 1] * np.sqrt(mbar)
    assert np.allclose(np.abs(kxx), np.abs(fpp / np.sqrt(1 + fp**2)), atol=1e-12)
    assert np.allclose(k[0], 0, atol=1e-14)
    assert np.max(np.abs(G.curvature_two_ways(snap)[0][0, 1, 0, 1])) < 1e-12


def test_static_graph_trace(graph):
    grid, f, snap = graph
    fp = 0.3 * np.cos(grid.x[0])
    fpp = -0.3 * np.sin(grid.x[0])
    tr = G.minimality_residual(snap)["trace"][0] * np.sqrt(snap.mbar.value[0, 0])
    assert np.allclose(np.abs(tr), np.abs(fpp / (1 + fp**2) ** 1.5), atol=1e-12)


def test_linear_graph_is_minimal():
    grid = TorusGrid(1, 16)
    snap = GeometrySnapshot(static_graph(grid, np.zeros(grid.shape) + 0.7))
    assert G.minimality_residual(snap)["max"] == 0


def test_metric_matches_finite_difference_oracle():
    errs = []
    for n in (16, 32):
        grid = TorusGrid(2, n)
        imm = analytic_immersion(grid, codim=1, amplitude=0.2)
        dY = imm.tangent.value
        h = grid.spacing
        U = imm.displacement.value
        fd = (-np.roll(U, -2, 1) + 8 * np.roll(U, -1, 1) - 8 * np.roll(U, 1, 1) + np.roll(U, 2, 1)) / (12 * h)
        errs.append(np.max(np.abs(dY[1] - G.flat_tangent(2, 4)[1][:, None, None] - fd)))
    assert errs[0] / errs[1] > 12


def test_symmetries():
    grid = TorusGrid(2, 16)
    snap = GeometrySnapshot(analytic_immersion(grid, codim=2))
    g, k = snap.g.value, snap.k.value
    R = snap.riemann_from_gauss.value
    assert np.max(np.abs(g - g.swapaxes(0, 1))) <= 1e-14
    assert np.max(np.abs(k - k.swapaxes(1, 2))) <= 1e-14
    assert np.max(np.abs(R + R.swapaxes(0, 1))) <= 1e-12
    assert np.max(np.abs(R + R.swapaxes(2, 3))) <= 1e-12
    assert np.max(np.abs(R - np.einsum("abcd...->cdab...", R))) <= 1e-12


@pytest.mark.parametrize("codim", [1, 2])
def test_identities_converge_spectrally(codim):
    res = []
    for n in (16, 32):
        snap = GeometrySnapshot(analytic_immersion(TorusGrid(2, n), codim=codim))
        res.append(max(G.curvature_two_ways(snap)[2], G.normal_curvature_two_ways(snap)[2],
                       G.codazzi_residual(snap)[0], G.frame_transport_residual(snap)))
    assert res[1] < max(res[0] / 100, 1e-10)


def test_codim_one_normal_curvature_flag(grid2):
    snap = GeometrySnapshot(analytic_immersion(grid2, codim=1))
    _, _, res, available = G.normal_curvature_two_ways(snap)
    assert res == 0 and not available


def test_corrupted_k_codazzi_negative_control(rng):
    grid = TorusGrid(2, 32)
    snap = GeometrySnapshot(analytic_immersion(grid, codim=1))
    clean = G.codazzi_residual(snap)[0]
    noise = 1e-6 * grid.random_field(rng, shape=snap.k.value.shape[:-2], band=4)
    noisy = snap.k.data.copy()
    noisy[0] += noise
    ck = snap.cov_k(Jet(noisy)).value
    bad = float(np.max(np.abs(ck - np.einsum("baxg...->xabg...", ck))))
    assert clean < 1e-9 and 1e-7 < bad < 1e-4


def test_decompose_31_reconstructs_metric():
    grid = TorusGrid(2, 16)
    snap = GeometrySnapshot(analytic_immersion(grid, codim=2))
    fol = G.decompose_31(snap)
    assert np.max(np.abs(fol.metric() - snap.g.value)) <= 1e-12
    gi = fol.inverse_metric()
    assert np.max(np.abs(gi - snap.ginv.value)) <= 1e-12
    g = snap.g.value
    nn = np.einsum("a...,ab...,b...->...", fol.normal, g, fol.normal)
    ni = np.einsum("a...,ai...->i...", fol.normal, g[:, 1:])
    assert np.allclose(nn, -1, atol=1e-12) and np.allclose(ni, 0, atol=1e-12)


def test_variation_and_31_gauss_codazzi():
    grid = TorusGrid(2, 32)
    fol = G.decompose_31(GeometrySnapshot(analytic_immersion(grid, codim=2)))
    res = G.variation_residuals(fol)
    for key, v in res.items():
        assert np.max(np.abs(v)) < 1e-8, key


def test_variation_needs_slices(grid2):
    fol = G.decompose_31(GeometrySnapshot(analytic_immersion(grid2, order=2)))
    with pytest.raises(G.StencilError):
        G.variation_residuals([fol, fol], 0.1)


def test_frame_scaling_with_amplitude():
    grid = TorusGrid(2, 16)
    devs = []
    for eps in (1e-2, 1e-3, 1e-4):
        snap = GeometrySnapshot(analytic_immersion(grid, codim=2, amplitude=eps))
        e = snap.frame.e.value
        ref = np.zeros_like(e)
        ref[0, 3] = ref[1, 4] = 1
        devs.append(np.max(np.abs(e - ref)))
    assert 8 < devs[0] / devs[1] < 12 and 8 < devs[1] / devs[2] < 12


def test_k00_from_minimality_on_lifted_wave():
    from artifact.evolution import graph_pair, initial_data_from_pair, snapshot, traveling_wave
    grid = TorusGrid(1, 64)
    st = initial_data_from_pair(*graph_pair(grid, *traveling_wave(grid, "sine")), grid, mode="scalar")
    snap = snapshot(st)
    assert G.minimality_residual(snap)["max"] < 1e-12
    assert np.max(np.abs(G.solve_k00(snap) - snap.k.value[:, 0, 0])) < 1e-12


def test_singular_metric_raises(grid1):
    data = np.zeros((5, 3) + grid1.shape)
    data[1, 0] = -1.0  # d_0 Y vanishes
    with pytest.raises(G.GeometryError):
        G.decompose_31(GeometrySnapshot(Immersion(grid1, Jet(data), 0.0, 1)))


def test_timelike_slice_raises(grid1):
    data = np.zeros((5, 3) + grid1.shape)
    data[0, 0] = 2 * np.sin(grid1.x[0])
    with pytest.raises(G.GeometryError):
        G.decompose_31(GeometrySnapshot(Immersion(grid1, Jet(data), 0.0, 1)))
