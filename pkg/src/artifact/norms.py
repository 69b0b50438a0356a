"""Sobolev, Besov and mixed space-time norms, and the bootstrap quantities."""
import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import spacetime_partial
from .spectral import bank, fractional_symbol, lp_blocks


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class SmallConstants:
    s: float = 3.0
    delta0: float = None

    def __post_init__(self):
        gap = self.s - 2.5 - 1.0 / 6.0
        if gap <= 0:
            raise RangeError("s must exceed 5/2 + 1/6")
        bound = min(gap / 10.0, 0.01)
        if self.delta0 is None:
            object.__setattr__(self, "delta0", 0.5 * bound)
        if not 0 < self.delta0 < bound:
            raise RangeError(f"delta0 must lie in (0, {bound:.4g})")

    @property
    def s0(self):
        return self.s - 2.5 - 1.0 / 6.0 - self.delta0

    @property
    def s1(self):
        return self.s0 - self.delta0


# ---------------------------------------------------------------------------
# spatial norms

def _components(f, grid):
    f = np.asarray(f, dtype=float)
    return f.reshape((-1,) + grid.shape)


def sobolev_norm(f, grid, s=0.0, q=2.0):
    """||<D>^s f||_{L^q}; tensor fields use the pointwise Euclidean norm over components."""
    comps = _components(f, grid)
    if s != 0:
        comps = grid.apply_symbol(comps, fractional_symbol(grid, "japanese", s))
    mag = np.sqrt(np.sum(comps**2, axis=0))
    if np.isinf(q):
        return float(np.max(mag))
    return float((np.sum(mag**q) * grid.cell_volume) ** (1.0 / q))


def besov_norm(f, grid, s, p=2.0, r=2.0):
    """l^r over j of 2^{sj} ||P_j f||_{L^p}."""
    blocks = lp_blocks(np.asarray(f, dtype=float), grid)
    vals = np.array([2.0 ** (s * j) * sobolev_norm(b, grid, 0.0, p) for j, b in enumerate(blocks)])
    if np.isinf(r):
        return float(np.max(vals))
    return float(np.sum(vals**r) ** (1.0 / r))


def mixed_norm(series, times, grid, p, s, q):
    """L^p in time of W^{s,q} in space; composite trapezoid, max for p = inf."""
    inner = np.array([sobolev_norm(f, grid, s, q) for f in series])
    times = np.asarray(times, dtype=float)
    if np.isinf(p):
        return float(np.max(inner))
    if len(times) == 1:
        return 0.0
    return float(np.trapezoid(inner**p, times) ** (1.0 / p))


# ---------------------------------------------------------------------------
# data size and bootstrap quantities

def data_size(Ybar, nbar, grid, s=3.0):
    """||Y - Y_flat||_{H^s} + ||n - n_flat||_{H^{s-1}} of an initial data pair."""
    n1 = Ybar.shape[0]
    U = np.array(Ybar, dtype=float)
    U[1:grid.dim + 1] -= grid.x
    dn = np.array(nbar, dtype=float)
    dn[0] -= 1.0
    return sobolev_norm(U, grid, s) + sobolev_norm(dn, grid, s - 1)


@dataclass
class NormReport:
    Q_k: float = None
    Q_g: float = None
    Q_perp: float = None
    D: float = None
    entries: list = field(default_factory=list)

    def add(self, label, p, s, q, value):
        self.entries.append({"label": label, "p": p, "s": s, "q": q, "value": value})
        return value

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "p", "s", "q", "value"])
        for e in self.entries:
            w.writerow([e["label"], e["p"], e["s"], e["q"], repr(e["value"])])
        for name in ("Q_k", "Q_g", "Q_perp", "D"):
            w.writerow([name, "", "", "", repr(getattr(self, name))])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"Q_k": self.Q_k, "Q_g": self.Q_g, "Q_perp": self.Q_perp, "D": self.D,
                           "entries": self.entries}, indent=2, default=float)


def _derivatives(jet, grid, levels):
    """[d^0 q, d^1 q, ...] values, each derivative adding a leading spacetime axis."""
    out = [jet.value]
    cur = jet
    for _ in range(levels):
        cur = spacetime_partial(cur, grid)
        out.append(cur.value)
    return out


def _sum_entries(report, label, series_by_time, times, grid, specs):
    total = 0.0
    for p, s, q in specs:
        v = mixed_norm(series_by_time, times, grid, p, s, q)
        report.add(label, p, s, q, v)
        total += v
    return total


def bootstrap_quantities(snapshots, times, constants=SmallConstants(), data=None):
    """Q_k, Q_g, Q_perp over a stored run of geometry snapshots with time jets.

    Entries that need more time derivatives than the snapshots carry are
    marked unavailable (value None) instead of failing.
    """
    c = constants
    s, s0, s1, d0 = c.s, c.s0, c.s1, c.delta0
    grid = snapshots[0].grid
    inf = np.inf
    rep = NormReport()

    def series(getter, levels):
        try:
            return [_derivatives(getter(sn), grid, levels) for sn in snapshots]
        except (ValueError, IndexError):
            return None

    def term(label, seq, level, specs):
        if seq is None or len(seq[0]) <= level:
            for p, sp, q in specs:
                rep.add(label, p, sp, q, None)
            return 0.0
        return _sum_entries(rep, label, [x[level] for x in seq], times, grid, specs)

    k_ser = series(lambda sn: sn.k, 2)
    qk = 0.0
    for l in range(3):
        qk += term(f"d^{l} k", k_ser, l, [(inf, s - 2 - l, 2), (2, -0.5 - l + s0, inf),
                                          (4, 1 / 12 - l + s0, 4), (3.5, -l + s0, 14 / 3)])
    rep.Q_k = qk

    g_ser = series(lambda sn: sn.g, 2)
    flat = np.diag([-1.0] + [1.0] * grid.dim)[(...,) + (None,) * grid.dim]
    qg = 0.0
    if g_ser is not None:
        qg += rep.add("g - m0", inf, 0, inf, max(float(np.max(np.abs(x[0] - flat))) for x in g_ser))
    qg += term("d g", g_ser, 1, [(1, 0.25 * d0, inf), (inf, s - 2, 2), (2, 7 / 6 + s1, 2),
                                 (7 / 4, 1 + s1, 7 / 3)])
    qg += term("d^2 g", g_ser, 2, [(inf, s - 3, 2), (2, 1 / 6 + s1, 2), (7 / 4, s1, 7 / 3)])
    rep.Q_g = qg

    w_ser = series(lambda sn: sn.omega, 1)
    qp = term("omega", w_ser, 0, [(1, 0.25 * d0, inf), (2, 7 / 6 + s1, 2), (7 / 4, 1 + s1, 7 / 3),
                                  (inf, s - 2, 2)])
    qp += term("d omega", w_ser, 1, [(2, 1 / 6 + s1, 2), (7 / 4, s1, 7 / 3), (inf, s - 3, 2)])
    e_ser = series(lambda sn: sn.frame.e, 2)
    if e_ser is not None:
        d1 = grid.dim + 1
        ref = np.zeros(e_ser[0][0].shape)
        for a in range(ref.shape[0]):
            ref[a, d1 + a] = 1.0
        qp += rep.add("e - delta", inf, 0, inf, max(float(np.max(np.abs(x[0] - ref))) for x in e_ser))
    for l in (1, 2):
        qp += term(f"d^{l} e", e_ser, l, [(inf, s - 1 - l, 2), (2, 1 / 6 + 2 - l + s1, 2),
                                          (7 / 4, 2 - l + s1, 7 / 3)])
    rep.Q_perp = qp
    if data is not None:
        rep.D = data_size(*data, grid, s)
    return rep


# ---------------------------------------------------------------------------
# product inequalities

def product_ratios(f1, f2, grid, s, delta, p, z=0.5):
    """The three product-estimate ratios for one pair of fields."""
    out = []
    pairs = [
        (s - 2, s - 1 - delta, s - 2),
        (s - 3, s - 2 + z - delta, s - 2 - z),
        (s - 4, s - 2 + z - delta, s - 3 - z),
    ]
    prod = f1 * f2
    for s_out, s1_, s2_ in pairs:
        den = sobolev_norm(f1, grid, s1_, 2) * sobolev_norm(f2, grid, s2_, p)
        out.append(0.0 if den == 0 else sobolev_norm(prod, grid, s_out, p) / den)
    return out


def functional_inequality_ratios(grid, samples=200, s=3.0, delta=0.05, p=4.0, seed=0, band=None, z=0.5):
    """Max over random band-limited pairs of the product-estimate ratios."""
    if s <= 2.5 or not 0 <= delta <= 0.25 * (s - 2.5) or not 2 <= p < np.inf or not 0 <= z <= 1:
        raise RangeError("exponents outside the admissible range")
    rng = np.random.default_rng(seed)
    band = grid.n / 6 if band is None else band
    worst = np.zeros(3)
    for _ in range(samples):
        f1 = grid.random_field(rng, band=band, smooth=rng.uniform(0, 3))
        f2 = grid.random_field(rng, band=band, smooth=rng.uniform(0, 3))
        worst = np.maximum(worst, product_ratios(f1, f2, grid, s, delta, p, z))
    return {"H^{s-2}": float(worst[0]), "H^{s-3}": float(worst[1]), "H^{s-4}": float(worst[2]),
            "samples": samples, "s": s, "delta": delta, "p": p}


def square_function_constant(f, grid, s):
    """||f||^2_{H^s} / sum_j 2^{2sj} ||P_j f||^2_{L^2}."""
    return sobolev_norm(f, grid, s) ** 2 / besov_norm(f, grid, s, 2, 2) ** 2


def square_function_bounds(grid, s, band=None):
    """Best constants (A, B) with A <= ||f||^2_{H^s} / sum_j 2^{2sj}||P_j f||^2 <= B
    over all fields with modes |xi_i| < band, read off the symbols."""
    b = bank(grid)
    band = grid.n / 3.0 if band is None else band
    mask = np.all(np.abs(grid.xi) < band, axis=0)
    den = sum(2.0 ** (2 * s * j) * b.chi(j) ** 2 for j in range(b.jmax + 1))
    ratio = (1.0 + grid.xi_norm**2) ** s / den
    return float(ratio[mask].min()), float(ratio[mask].max())
