"""Experiment orchestration: data generation, suites and their reports."""
import csv
import io
import json
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import geometry as G
from .config import RunConfig
from .elliptic import SmallnessError
from .evolution import (BreakdownError, DataError, constraint_residuals, evolve, flat_pair,
                        graph_pair, immersion, initial_data_from_pair, pair_from_perturbation, snapshot,
                        stored_immersion, traveling_wave, scalar_rhs, WAVE_PROFILES)
from .gauge import (BackgroundSampler, FlowError, GaugeFlowState, balanced_residuals,
                    gauge_sources, parabolic_constants, run_gauge_flow, transformed_snapshots)
from .norms import (data_size, functional_inequality_ratios, square_function_bounds,
                    square_function_constant)
from .spectral import TorusGrid

NUMERICAL_ERRORS = (BreakdownError, FlowError, SmallnessError, G.GeometryError, FloatingPointError)


class GenerationError(ValueError):
    pass


def code_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def make_grid(config: RunConfig):
    return TorusGrid(config.dim, config.n)


# ---------------------------------------------------------------------------
# data generation

def _draw(config, grid, scale):
    rng = np.random.default_rng(config.seed)
    band = max(1, min(config.band, grid.n // 3))
    if config.mode == "scalar":
        f = scale * grid.random_field(rng, band=band, smooth=2)
        f_t = scale * grid.random_field(rng, band=band, smooth=2)
        return graph_pair(grid, f, f_t)
    n1 = grid.dim + 1 + config.codim
    disp = scale * grid.random_field(rng, shape=(n1,), band=band, smooth=2)
    disp[:grid.dim + 1] *= 0.3
    tilt = scale * grid.random_field(rng, shape=(n1,), band=band, smooth=2)
    return pair_from_perturbation(grid, disp, tilt)


def generate_data(config: RunConfig, grid=None, rel_tol=1e-3, max_iter=40):
    """Initial pair (Ybar, nbar) for the configured data kind.

    Perturbations are rescaled by a secant iteration until the measured data
    size equals the requested amplitude to ``rel_tol``.
    """
    grid = make_grid(config) if grid is None else grid
    eps = config.amplitude
    if config.data == "flat" or (config.data == "perturbation" and eps == 0):
        return flat_pair(grid, config.codim)
    if config.data == "traveling_wave":
        if config.codim != 1:
            raise GenerationError("traveling waves are codimension-one graphs")
        return graph_pair(grid, *traveling_wave(grid, config.profile, eps or 0.3))

    def measured(scale):
        try:
            return data_size(*_draw(config, grid, scale), grid)
        except DataError as exc:
            raise GenerationError(f"perturbation of scale {scale:.3g} is not admissible: {exc}") from exc

    s0, d0 = eps, measured(eps)
    if d0 == 0:
        raise GenerationError("random perturbation vanished on this grid")
    s1 = eps * eps / d0
    d1 = measured(s1)
    for _ in range(max_iter):
        if abs(d1 - eps) <= rel_tol * eps:
            return _draw(config, grid, s1)
        if d1 == d0:
            break
        s0, s1, d0 = s1, s1 + (eps - d1) * (s1 - s0) / (d1 - d0), d1
        d1 = measured(s1)
    raise GenerationError(f"data size {eps:.3g} not reached (last {d1:.3g})")


def initial_state(config, grid=None, gauge="balanced"):
    grid = make_grid(config) if grid is None else grid
    Ybar, nbar = generate_data(config, grid)
    mode = config.mode
    return initial_data_from_pair(Ybar, nbar, grid, mode=mode, gauge=gauge)


# ---------------------------------------------------------------------------
# results

@dataclass
class Check:
    name: str
    passed: bool
    value: float = None
    bound: float = None
    identity: str = ""
    error: str = ""


@dataclass
class ExperimentOutput:
    config: RunConfig
    suite: str
    series: dict = field(default_factory=dict)  # name -> list of (t, value)
    tables: dict = field(default_factory=dict)  # name -> list of row dicts
    norms: object = None
    checks: list = field(default_factory=list)
    breakdown: bool = False
    runtime: float = 0.0

    @property
    def provenance(self):
        return {"config_hash": self.config.config_hash(), "seed": self.config.seed,
                "code_version": code_version()}

    @property
    def passed(self):
        return all(c.passed for c in self.checks) and not self.breakdown

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    @property
    def exit_code(self):
        if self.breakdown:
            return 3
        return 0 if self.passed else 1

    def add_row(self, table, **row):
        self.tables.setdefault(table, []).append({"config_hash": self.config.config_hash(), **row})

    def record(self, name, t, value):
        self.series.setdefault(name, []).append((float(t), float(value)))

    def check(self, name, value, bound, identity=""):
        c = Check(name, bool(value <= bound), float(value), float(bound), identity)
        self.checks.append(c)
        return c

    def guarded(self, name, fn, identity=""):
        """Run one independent check; numerical failures are recorded, not raised."""
        try:
            return fn()
        except NUMERICAL_ERRORS as exc:
            self.breakdown = True
            self.checks.append(Check(name, False, identity=identity, error=f"{type(exc).__name__}: {exc}"))
        except (ValueError, GenerationError) as exc:
            self.checks.append(Check(name, False, identity=identity, error=f"{type(exc).__name__}: {exc}"))
        return None

    # serialization ---------------------------------------------------------
    def series_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config_hash", "name", "t", "value"])
        h = self.config.config_hash()
        for name in sorted(self.series):
            for t, v in self.series[name]:
                w.writerow([h, name, repr(t), repr(v)])
        return buf.getvalue()

    def table_csv(self, name):
        rows = self.tables[name]
        keys = list(rows[0])
        for r in rows[1:]:
            keys += [k for k in r if k not in keys]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        return buf.getvalue()

    def summary(self):
        return {
            "suite": self.suite,
            "passed": self.passed,
            "exit_code": self.exit_code,
            "provenance": self.provenance,
            "checks": [c.__dict__ for c in self.checks],
            "failures": [c.name for c in self.failures],
            "runtime_s": self.runtime,
        }

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(self.config.to_ini())
        (out / f"{self.suite}_series.csv").write_text(self.series_csv())
        for name in self.tables:
            (out / f"{self.suite}_{name}.csv").write_text(self.table_csv(name))
        if self.norms is not None:
            (out / f"{self.suite}_norms.csv").write_text(self.norms.to_csv())
        meta = {"csv_schema_version": 1, "series_columns": ["config_hash", "name", "t", "value"],
                "tables": {k: list(v[0]) for k, v in self.tables.items()}}
        (out / f"{self.suite}_schema.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        (out / f"{self.suite}_summary.json").write_text(json.dumps(self.summary(), indent=2, default=str))
        return out


# ---------------------------------------------------------------------------
# suites

def _tol(config, key, default):
    return config.tolerances.get(key, default)


def _is_flat(config):
    return config.data == "flat" or (config.data == "perturbation" and config.amplitude == 0)


def suite_identities(config, out: ExperimentOutput):
    grid = make_grid(config)
    flat = _is_flat(config)
    tol = _tol(config, "identities", 1e-10 if flat else 1e-8)
    state = out.guarded("initial data", lambda: initial_state(config, grid))
    if state is None:
        return
    Ybar, nbar = generate_data(config, grid)
    nn, tn = constraint_residuals(Ybar, nbar, grid)
    out.check("constraints", max(nn, tn), _tol(config, "constraints", 1e-12), "unit normal constraints")
    states = out.guarded("evolution", lambda: evolve(state, config.t_final, config.dt,
                                                      store_every=max(1, len(_steps(config)) // 4)))
    if states is None:
        return
    worst = {}

    def note(name, t, v):
        out.record(name, t, v)
        worst[name] = max(worst.get(name, 0.0), v)

    for st in states:
        snap = snapshot(st)
        t = st.time
        note("gauss", t, G.curvature_two_ways(snap)[2])
        r = G.normal_curvature_two_ways(snap)
        if r[3]:
            note("ricci", t, r[2])
        note("codazzi", t, G.codazzi_residual(snap)[0])
        note("frame_transport", t, G.frame_transport_residual(snap))
        note("minimality", t, G.minimality_residual(snap)["max"])
        fol = G.decompose_31(snap)
        var = G.variation_residuals(fol)
        for key, v in var.items():
            note(f"slice_{key}", t, float(np.max(np.abs(v))))
        if flat:
            res = balanced_residuals(fol, snap).summary()
            for key, v in res.items():
                note(f"balanced_{key}", t, v)
    for name, v in sorted(worst.items()):
        out.check(name, v, tol, name.replace("_", " "))


def _steps(config):
    return range(int(round(config.t_final / config.dt)))


def _fit_order(hs, errs):
    hs, errs = np.log(np.asarray(hs)), np.log(np.asarray(errs))
    return float(np.polyfit(hs, errs, 1)[0])


def traveling_wave_errors(config, ns=None, dts=None):
    """Spatial and temporal error tables for the exact traveling wave."""
    ns = ns or [config.n, 2 * config.n, 4 * config.n]
    grid = TorusGrid(config.dim, config.n)
    dt0 = min(config.dt, 0.5 * grid.spacing)
    dts = dts or [dt0, dt0 / 2, dt0 / 4]
    amp = config.amplitude or 0.3
    spatial = []
    for n in ns:
        g = TorusGrid(config.dim, n)
        f, f_t = traveling_wave(g, config.profile, amp)
        f_tt = amp * WAVE_PROFILES[config.profile](g.x[0])[2]
        spatial.append((n, float(np.max(np.abs(scalar_rhs(f, f_t, g, dealias=False) - f_tt)))))
    temporal = []
    for dt in dts:
        st = initial_data_from_pair(*graph_pair(grid, *traveling_wave(grid, config.profile, amp)), grid,
                                    mode="scalar")
        n_steps = max(1, int(round(config.t_final / dt)))
        end = evolve(st, n_steps * dt, dt)[-1]
        exact = traveling_wave(grid, config.profile, amp, time=end.time)[0]
        temporal.append((dt, float(np.max(np.abs(end.u - exact)))))
    return spatial, temporal


def suite_convergence(config, out: ExperimentOutput):
    cfg = config.replace(mode="scalar", codim=1)
    res = out.guarded("traveling wave", lambda: traveling_wave_errors(cfg))
    if res is None:
        return
    spatial, temporal = res
    floor = _tol(config, "floor", 1e-11)
    for (n, e) in spatial:
        out.add_row("spatial", N=n, error=e)
    ok = all(e2 <= floor or e1 / max(e2, 1e-300) > 10 for (_, e1), (_, e2) in zip(spatial, spatial[1:]))
    out.checks.append(Check("spatial spectral convergence", ok, spatial[-1][1], floor,
                            "error ratio > 10 per doubling until floor"))
    order = _fit_order([h for h, _ in temporal], [e for _, e in temporal])
    for i, (h, e) in enumerate(temporal):
        local = None if i == 0 else float(np.log2(temporal[i - 1][1] / e))
        out.add_row("temporal", dt=h, error=e, order=local)
    out.add_row("fit", quantity="temporal_order", value=order)
    band = _tol(config, "order_band", 0.3)
    out.check("temporal order", abs(order - 4.0), band, "fourth-order time stepping")


def minimality_study(states, dt):
    """Max |trace k| from stencil time derivatives of stored slices, and the
    discretization scale: the largest gap between those stencil derivatives
    and the derivatives the evolution equation implies on the same slice."""
    worst, scale, series = 0.0, 0.0, []
    for c in range(2, len(states) - 2):
        imm = stored_immersion(states[c - 2:c + 3], 2, dt, order=4)
        exact = immersion(states[c], order=2)
        gap = float(np.max(np.abs(imm.displacement.data[1:3] - exact.displacement.data[1:3])))
        tr = G.minimality_residual(G.GeometrySnapshot(imm))["max"]
        series.append((states[c].time, tr, gap))
        worst, scale = max(worst, tr), max(scale, gap)
    return worst, scale, series


def suite_evolution(config, out: ExperimentOutput):
    grid = make_grid(config)
    state = out.guarded("initial data", lambda: initial_state(config, grid))
    if state is None:
        return
    dt = min(config.dt, state.max_dt())
    runs = {}
    for label, h in (("coarse", dt), ("fine", dt / 2)):
        runs[label] = out.guarded(f"evolution {label}", lambda h=h: evolve(state, config.t_final, h))
    if runs["coarse"] is None or runs["fine"] is None:
        return
    u0 = state.u
    for st in runs["coarse"]:
        out.record("displacement_change", st.time, float(np.max(np.abs(st.u - u0))))
        for key, v in st.monitors.items():
            if isinstance(v, float):
                out.record(key, st.time, v)
    floor = _tol(config, "floor", 1e-11)
    found = {}
    for label, h in (("coarse", dt), ("fine", dt / 2)):
        worst, scale, series = minimality_study(runs[label], h)
        for t, tr, gap in series:
            out.record(f"minimality_{label}", t, tr)
            out.record(f"discretization_{label}", t, gap)
        out.add_row("minimality", run=label, dt=h, trace=worst, scale=scale)
        out.check(f"minimality bound {label}", worst, max(10 * scale, floor), "trace of k vanishes")
        found[label] = worst
    out.checks.append(Check("minimality decreases", found["fine"] < found["coarse"] or found["coarse"] <= floor,
                            found["fine"], found["coarse"], "refinement"))
    if _is_flat(config):
        out.check("flat displacement", max(v for _, v in out.series["displacement_change"]),
                  _tol(config, "flat", 1e-10), "flat equilibrium")


def gauge_flow_comparison(Ybar, nbar, grid, t_flow=0.24, dt=0.02, background_margin=None,
                          source_iterations=1):
    """Balanced residuals of the product-gauge input and of the flowed solution.

    The background is evolved in the product gauge to ``t_flow`` plus a
    margin; returns (before, after, flow states, sampler).
    """
    margin = 0.5 * t_flow if background_margin is None else background_margin
    state = initial_data_from_pair(Ybar, nbar, grid, gauge="product")
    t_bg = dt * int(np.ceil((t_flow + margin) / dt))
    sampler = BackgroundSampler(evolve(state, t_bg, dt))
    flow_states = run_gauge_flow(sampler, t_flow, dt, source_iterations=source_iterations)
    zero = [GaugeFlowState.initial(grid, sampler.codim, s.time) for s in flow_states]
    return (balanced_residual_history(sampler, zero, dt),
            balanced_residual_history(sampler, flow_states, dt), flow_states, sampler)


def balanced_residual_history(sampler, flow_states, dt):
    """Worst balanced residuals over the transformed slices of a flow run."""
    snaps = transformed_snapshots(sampler, flow_states, dt)
    first = transformed_snapshots(sampler, flow_states, dt, window=[0])[0]
    initial = gauge_sources(first)
    worst = {}
    for sn in snaps:
        fol = G.decompose_31(sn)
        res = balanced_residuals(fol, sn, gauge_sources(sn, initial=initial)).summary()
        for k, v in res.items():
            worst[k] = max(worst.get(k, 0.0), v)
    return worst


def derived_equation_study(sampler, dt, slices=9, centers=(3, 4, 5), flow_states=None):
    """Derived gauge-equation residuals on the flowed solution near the middle
    of a short flow run, with the balanced residuals and the discrepancy of the
    defect identities (a direct measure of the discretization error)."""
    from .elliptic import SliceMetric
    from .gauge import defect_identities, derived_gauge_equation_residuals
    if flow_states is None:
        flow_states = run_gauge_flow(sampler, dt * (slices - 1), dt)
    snaps = transformed_snapshots(sampler, flow_states, dt, window=range(len(flow_states)))
    initial = gauge_sources(snaps[0])
    fols, metrics, gauge, derived = [], [], [], []
    for sn in snaps:
        fol = G.decompose_31(sn)
        metric = SliceMetric(sampler.grid, fol.gbar)
        src = gauge_sources(sn, initial=initial, order=1)
        fols.append(fol)
        metrics.append(metric)
        gauge.append(balanced_residuals(fol, sn, src, metric=metric))
        derived.append(derived_gauge_equation_residuals(fol, sn, src, metric=metric))
    times = [st.time for st in flow_states]
    out = {"derived": {}, "gauge": {}, "mismatch": {}}
    for i in centers:
        mism = defect_identities(gauge, derived[i], times, i, sampler.grid, metrics, fols)
        for key, v in derived[i].summary().items():
            out["derived"][key] = max(out["derived"].get(key, 0.0), v)
        for key, v in mism.items():
            out["mismatch"][key] = max(out["mismatch"].get(key, 0.0), float(np.max(np.abs(v))))
        for key, v in gauge[i].summary().items():
            out["gauge"][key] = max(out["gauge"].get(key, 0.0), v)
    return out


def suite_gauge_flow(config, out: ExperimentOutput):
    grid = make_grid(config)
    if config.mode != "parametric":
        out.checks.append(Check("gauge flow", False, error="the gauge flow needs parametric mode"))
        return
    pair = out.guarded("initial data", lambda: generate_data(config, grid))
    if pair is None:
        return
    start = GaugeFlowState.initial(grid, config.codim)
    ident = max(float(np.max(np.abs(start.psi[0]))), float(np.max(np.abs(start.psi[1:] - grid.x))),
                float(np.max(np.abs(start.U - np.eye(config.codim)[(...,) + (None,) * grid.dim]))))
    out.check("initial identity", ident, 0.0, "Psi = Id and U = I at t = 0")
    res = out.guarded("gauge flow", lambda: gauge_flow_comparison(*pair, grid, config.t_final, config.dt))
    if res is None:
        return
    before, after, states, _ = res
    factor = _tol(config, "gauge_reduction", 10.0)
    for key in before:
        ratio = before[key] / max(after[key], 1e-300)
        out.add_row("reduction", residual=key, before=before[key], after=after[key], factor=ratio)
        out.check(f"reduction {key}", 1.0 / ratio, 1.0 / factor, "balanced gauge conditions")
    for st in states:
        out.record("max_Phi", st.time, float(np.max(np.abs(st.Phi))))
        out.record("max_V", st.time, float(np.max(np.abs(st.V))))


def suite_inequalities(config, out: ExperimentOutput):
    grid = make_grid(config)
    samples = int(_tol(config, "samples", 50.0))
    ratios = out.guarded("product inequalities",
                         lambda: functional_inequality_ratios(grid, samples=samples, seed=config.seed))
    if ratios is not None:
        for key in ("H^{s-2}", "H^{s-3}", "H^{s-4}"):
            out.add_row("products", norm=key, max_ratio=ratios[key])
            out.checks.append(Check(f"product {key} finite", bool(np.isfinite(ratios[key])), ratios[key]))
    para = out.guarded("parabolic constants",
                       lambda: parabolic_constants(grid, samples=max(4, samples // 5), seed=config.seed))
    if para is not None:
        for key, v in para.items():
            if np.ndim(v) == 0:
                out.add_row("parabolic", quantity=key, value=float(v))
    rng = np.random.default_rng(config.seed)
    bounds = []
    for n in (config.n, 2 * config.n):
        g = TorusGrid(config.dim, n)
        lo, hi = square_function_bounds(g, 1.0)
        sampled = [square_function_constant(g.random_field(rng, smooth=rng.uniform(0, 3)), g, 1.0)
                   for _ in range(10)]
        out.add_row("square_function", N=n, lower=lo, upper=hi, sampled_min=min(sampled),
                    sampled_max=max(sampled))
        out.checks.append(Check(f"square function samples N={n}", lo <= min(sampled) and max(sampled) <= hi,
                                max(sampled), hi, "Littlewood-Paley square function"))
        bounds.append((lo, hi))
    spread = max(abs(bounds[1][i] - bounds[0][i]) / bounds[0][i] for i in (0, 1))
    out.check("square function stable", spread, _tol(config, "square_function", 0.1),
              "Littlewood-Paley square function")
    if config.mode == "parametric":
        amps = np.array([1e-3, 3e-3, 1e-2])
        sizes = []
        for a in amps:
            cfg = config.replace(data="perturbation", amplitude=0.0)
            sizes.append(data_size(*_draw(cfg, grid, a), grid))
        slope = _fit_order(amps, sizes)
        out.add_row("linearity", quantity="data_size_slope", value=slope)
        out.check("data size linear", abs(slope - 1.0), 0.05, "data size scaling")


SUITE_RUNNERS = {
    "identities": suite_identities,
    "convergence": suite_convergence,
    "evolution": suite_evolution,
    "gauge_flow": suite_gauge_flow,
    "inequalities": suite_inequalities,
}


def run_suite(config: RunConfig, suite=None) -> ExperimentOutput:
    suite = suite or config.suite
    if suite not in SUITE_RUNNERS:
        raise ValueError(f"unknown suite {suite!r}")
    out = ExperimentOutput(config, suite)
    t0 = time.perf_counter()
    SUITE_RUNNERS[suite](config, out)
    out.runtime = time.perf_counter() - t0
    return out
