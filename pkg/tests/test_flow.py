import dataclasses

import numpy as np
import pytest

from artifact import evolution as ev
from artifact import geometry as G
from artifact import io as aio
from artifact.gauge import flow as F
from artifact.gauge import (balanced_residuals, derived_gauge_equation_residuals, gauge_sources,
                            wedge_divergence_check)
from artifact.geometry import GeometrySnapshot, Immersion, analytic_immersion
from artifact.spectral import TorusGrid

from conftest import perturbed_pair

DT = 0.04


def background(grid, eps, codim=2, t_final=0.4):
    state = ev.initial_data_from_pair(*perturbed_pair(grid, eps, codim), grid, gauge="product")
    return F.BackgroundSampler(ev.evolve(state, t_final, DT))


@pytest.fixture(scope="module")
def sampler():
    return background(TorusGrid(2, 16), 1e-3)


@pytest.fixture(scope="module")
def flow_run(sampler):
    return F.run_gauge_flow(sampler, 0.24, DT)


def test_smoothstep_endpoints():
    th = np.linspace(0, 1, 11)
    s = F.smoothstep(th, 4)
    assert s[0] == 0 and np.isclose(s[-1], 1) and np.all(np.diff(s) >= 0)
    assert np.allclose(s + F.smoothstep(1 - th, 4), 1)


def test_sampler_reproduces_stored_slices(sampler):
    grid = sampler.grid
    st = F.GaugeFlowState.initial(grid, sampler.codim, sampler.times[3])
    out = sampler.sample(st.psi, ("u",))["u"]
    ref = sampler.grid.to_real(sampler._slices[3]["u"][0])
    assert np.max(np.abs(out - ref)) < 1e-13


def test_sampler_rejects_far_times(sampler):
    st = F.GaugeFlowState.initial(sampler.grid, sampler.codim, 5.0)
    with pytest.raises(F.FlowError):
        sampler.sample(st.psi)


def test_initial_flow_state_is_identity(grid2):
    st = F.GaugeFlowState.initial(grid2, 2, 0.0)
    assert np.allclose(st.psi[1:], grid2.x) and np.all(st.psi[0] == 0)
    assert np.allclose(st.U, np.eye(2)[..., None, None])


def test_flat_background_is_a_fixed_point():
    grid = TorusGrid(2, 16)
    state = ev.initial_data_from_pair(*ev.flat_pair(grid, 2), grid)
    sampler = F.BackgroundSampler(ev.evolve(state, 0.32, DT))
    end = F.run_gauge_flow(sampler, 0.12, DT)[-1]
    assert max(np.max(np.abs(end.Phi)), np.max(np.abs(end.V)), np.max(np.abs(end.M))) < 1e-14


def test_flow_starts_at_identity_and_moves(flow_run):
    first, last = flow_run[0], flow_run[-1]
    assert np.all(first.Phi == 0) and np.all(first.V == 0) and np.all(first.M == 0)
    assert 1e-8 < np.max(np.abs(last.Phi)) < 1e-2


def test_flow_is_deterministic(sampler, flow_run):
    again = F.run_gauge_flow(sampler, 0.24, DT)
    for a, b in zip(flow_run, again):
        assert np.array_equal(a.Phi, b.Phi) and np.array_equal(a.V, b.V) and np.array_equal(a.M, b.M)


def test_flow_reduces_balanced_residuals(sampler, flow_run):
    def worst(states):
        out = {}
        snaps = F.transformed_snapshots(sampler, states, DT)
        init = gauge_sources(F.transformed_snapshots(sampler, states, DT, window=[0])[0])
        for sn in snaps:
            res = balanced_residuals(G.decompose_31(sn), sn, gauge_sources(sn, initial=init)).summary()
            for k, v in res.items():
                out[k] = max(out.get(k, 0.0), v)
        return out

    zero = [F.GaugeFlowState.initial(sampler.grid, 2, s.time) for s in flow_run]
    before, after = worst(zero), worst(flow_run)
    for key in ("lapse", "harmonic"):
        assert after[key] < before[key] / 10, key


def test_checkpoint_resume_matches_direct_run(sampler, flow_run, tmp_path):
    ckpt = aio.FlowCheckpointer(tmp_path)
    F.run_gauge_flow(sampler, 0.12, DT, checkpoint=ckpt)
    assert ckpt.count == 4
    resumed = F.run_gauge_flow(sampler, 0.24, DT, state=ckpt.latest(sampler.grid))
    assert np.isclose(resumed[-1].time, flow_run[-1].time)
    assert np.max(np.abs(resumed[-1].Phi - flow_run[-1].Phi)) < 1e-15


def test_flow_needs_whole_steps(sampler):
    with pytest.raises(ValueError):
        F.run_gauge_flow(sampler, 0.1, DT)


# ---------------------------------------------------------------------------
# derived gauge equations and the wedge relation

def test_derived_residuals_vanish_on_flat():
    grid = TorusGrid(2, 16)
    snap = GeometrySnapshot(Immersion.flat(grid, codim=2))
    fol = G.decompose_31(snap)
    res = derived_gauge_equation_residuals(fol, snap, gauge_sources(snap, order=1)).summary()
    assert all(v == 0 for v in res.values()), res


def test_derived_h_equation_responds_to_corrupted_h():
    grid = TorusGrid(2, 32)
    snap = ev.snapshot(ev.initial_data_from_pair(*perturbed_pair(grid, 0.02), grid))
    fol = G.decompose_31(snap)
    src = gauge_sources(snap, order=1)
    base = derived_gauge_equation_residuals(fol, snap, src).summary()
    h = fol.h.copy()
    h[0, 0] += 1e-4 * np.cos(2 * grid.x[1])
    bad = derived_gauge_equation_residuals(dataclasses.replace(fol, h=h), snap, src).summary()
    assert base["h"] < 1e-10 and base["gbar"] < 1e-10
    assert bad["h"] > 1e-5


def test_wedge_check_flat():
    snap = GeometrySnapshot(Immersion.flat(TorusGrid(2, 16), codim=2))
    chk = wedge_divergence_check(snap, 1, 1)
    assert chk.mismatch == 0 and chk.pair_sum == 0 and chk.within_bound


@pytest.mark.parametrize("amp", [1e-2, 1e-1])
def test_wedge_check_within_bound(amp):
    snap = GeometrySnapshot(analytic_immersion(TorusGrid(2, 32), codim=2, amplitude=amp))
    chk = wedge_divergence_check(snap, 1, 2)
    assert chk.within_bound
    assert chk.pair_sum < 1e-14


def test_wedge_check_rejects_bad_block():
    snap = GeometrySnapshot(Immersion.flat(TorusGrid(2, 16), codim=1))
    with pytest.raises(Exception):
        wedge_divergence_check(snap, 1, 40)
