"""Curvature-derived gauge sources, their low-high-high parts, and the
residuals of the three balanced gauge conditions on one slice."""
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from ..elliptic import SliceMetric
from ..geometry import GeometrySnapshot
from ..jets import Jet, jeinsum
from ..spectral import extend, lhh_project, riesz_T


def _orders(q, order):
    """Per-order arrays of a jet (or constant array); None marks a zero order."""
    if isinstance(q, Jet):
        if q.order < order:
            raise ValueError(f"jet of order {q.order} given, order {order} needed")
        return [q.data[m] for m in range(order + 1)]
    return [np.asarray(q, dtype=float)] + [None] * order


def lhh_jet(h, f1, f2, grid, order=0):
    """P-natural of three jets by the Leibniz rule; component axes broadcast."""
    hs, as_, bs = _orders(h, order), _orders(f1, order), _orders(f2, order)
    out = []
    for m in range(order + 1):
        acc = 0.0
        for a in range(m + 1):
            for b in range(m + 1 - a):
                c = m - a - b
                if hs[a] is None or as_[b] is None or bs[c] is None:
                    continue
                coef = factorial(m) // (factorial(a) * factorial(b) * factorial(c))
                acc = acc + coef * lhh_project(hs[a], as_[b], bs[c], grid)
        if np.ndim(acc) == 0:
            shape = np.broadcast_shapes(*(np.shape(x[0]) for x in (hs, as_, bs)))
            acc = np.zeros(shape)
        out.append(acc)
    return Jet(np.stack(out))


def _view(q, index, order):
    """Reindex the component axes of a jet or of a constant array."""
    if isinstance(q, Jet):
        return Jet(q.data[: order + 1][(slice(None),) + index])
    return np.asarray(q, dtype=float)[index]


def _riesz_jet(k, grid, order):
    """[A, b, delta] -> T^(b) k^A_{b delta} for every order of a jet."""
    d = grid.dim
    data = [np.stack([riesz_T(k.data[m][:, b + 1], b, grid=grid) for b in range(d)], axis=1)
            for m in range(order + 1)]
    return Jet(np.stack(data))


def _as_jet(k):
    return k if isinstance(k, Jet) else Jet(np.asarray(k, dtype=float)[None])


def natural_source(mbar, k, grid, order=0, spatial_only=False):
    """F-natural_ab = sum P-natural[m(e)_AB, k^B_ab, T^(l) k^A_0l].

    ``k`` is a jet (or array) [A, alpha, beta]; with ``spatial_only`` only
    the slice components alpha, beta >= 1 are formed.
    """
    k = _as_jet(k).truncate(order)
    d = grid.dim
    lo = 1 if spatial_only else 0
    tk = Jet(np.stack([
        np.stack([riesz_T(k.data[m][:, 0, l + 1], l, grid=grid) for l in range(d)], axis=1)
        for m in range(order + 1)]))
    h = _view(mbar, (slice(None), slice(None), None, None, None), order)
    f1 = _view(k, (None, slice(None), slice(lo, None), slice(lo, None), None), order)
    f2 = Jet(tk.data[:, :, None, None, None, :])
    P = lhh_jet(h, f1, f2, grid, order)
    return Jet(P.data.sum(axis=(1, 2, 5)))


def perp_source(ginv, gbar_inv, k, grid, order=0):
    """F-perp^AB = -d_i(gbar^ij sum P-natural[g^cd, k^B_jc, T^(b) k^A_bd])."""
    d = grid.dim
    k = _as_jet(k).truncate(order)
    tk = _riesz_jet(k, grid, order)  # [A, b, delta]
    h = _view(ginv, (None, None, None, slice(None), slice(None), None), order)
    f1 = Jet(k.data[: order + 1][:, None, :, 1:, :, None, None])  # [., B, j, gamma]
    f2 = Jet(np.moveaxis(tk.data, 2, 3)[:, :, None, None, None, :, :])  # [A, ., ., ., delta, b]
    P = lhh_jet(h, f1, f2, grid, order)
    Q = Jet(P.data.sum(axis=(4, 5, 6)))  # [A, B, j]
    if isinstance(gbar_inv, Jet):
        flux = jeinsum("ij,abj->abi", gbar_inv.truncate(order), Q)
    else:
        flux = jeinsum("ij,abj->abi", np.asarray(gbar_inv), Q)
    div = np.stack([sum(grid.deriv(flux.data[m][:, :, i], i) for i in range(d))
                    for m in range(order + 1)])
    return Jet(-div)


@dataclass
class GaugeSource:
    """F-natural and F-perp on one slice with their tilded versions.

    The tilded fields subtract the time extension of the initial-slice value,
    so they vanish on the initial slice.  ``jets`` carries time derivatives
    when they were requested.
    """
    time: float
    F_natural: np.ndarray = None
    F_natural_tilde: np.ndarray = None
    F_perp: np.ndarray = None
    F_perp_tilde: np.ndarray = None
    initial: dict = field(default_factory=dict)
    jets: dict = field(default_factory=dict)

    def merge(self, other):
        out = GaugeSource(self.time, self.F_natural, self.F_natural_tilde,
                          self.F_perp, self.F_perp_tilde, dict(self.initial), dict(self.jets))
        for name in ("F_natural", "F_natural_tilde", "F_perp", "F_perp_tilde"):
            if getattr(out, name) is None:
                setattr(out, name, getattr(other, name))
        out.initial.update(other.initial)
        out.jets.update(other.jets)
        return out


def tilde(F: Jet, initial, time, t0, grid):
    """F - E[F|_{t0}](time - t0) as a jet (derivatives of E up to order 2)."""
    if initial is None:
        if abs(time - t0) > 1e-14:
            raise ValueError("the initial-slice value of the source is required away from t0")
        initial = F.value
    if abs(time - t0) <= 1e-14:
        data = F.data.copy()
        data[0] = 0.0
    else:
        data = np.stack([F.data[m] - extend(initial, time - t0, grid, derivative=m)
                         for m in range(F.order + 1)])
    return Jet(data), initial


def _snapshot(snapshot, frame):
    return snapshot if frame is None else GeometrySnapshot(snapshot.imm, frame)


def f_natural(snapshot, frame=None, initial=None, t0=0.0, order=0):
    """Natural source of a slice; ``initial`` is the F-natural value at t0."""
    snap = _snapshot(snapshot, frame)
    F = natural_source(snap.mbar, snap.k, snap.grid, order)
    Ft, init = tilde(F, initial, snap.imm.time, t0, snap.grid)
    return GaugeSource(snap.imm.time, F_natural=F.value, F_natural_tilde=Ft.value,
                       initial={"F_natural": init}, jets={"F_natural": F, "F_natural_tilde": Ft})


def f_perp(snapshot, frame=None, initial=None, t0=0.0, order=0):
    """Normal-bundle source of a slice; ``initial`` is the F-perp value at t0."""
    snap = _snapshot(snapshot, frame)
    ginv = snap.ginv
    gbar_inv = _spatial_inverse(snap.g)
    F = perp_source(ginv, gbar_inv, snap.k, snap.grid, order)
    Ft, init = tilde(F, initial, snap.imm.time, t0, snap.grid)
    return GaugeSource(snap.imm.time, F_perp=F.value, F_perp_tilde=Ft.value,
                       initial={"F_perp": init}, jets={"F_perp": F, "F_perp_tilde": Ft})


def gauge_sources(snapshot, frame=None, initial=None, t0=0.0, order=0):
    """Both sources; ``initial`` is a GaugeSource of the t0 slice (or None at t0)."""
    init = initial.initial if isinstance(initial, GaugeSource) else (initial or {})
    a = f_natural(snapshot, frame, init.get("F_natural"), t0, order)
    b = f_perp(snapshot, frame, init.get("F_perp"), t0, order)
    return a.merge(b)


def _spatial_inverse(g: Jet):
    from .. import jets as J
    return J.inverse(Jet(g.data[:, 1:, 1:]))


# ---------------------------------------------------------------------------
# low-high-high curvature parts

@dataclass
class LHHCurvature:
    riemann: np.ndarray  # [a, b, c, d]
    rperp: np.ndarray  # [a, b, A, B]


def lhh_curvature(snapshot, frame=None):
    """Low-high-high parts of the Gauss and Ricci expressions.

    R-natural uses the pattern of the Gauss relation; the normal part follows
    the sign of the omega-based normal curvature (see the geometry module).
    """
    snap = _snapshot(snapshot, frame)
    grid = snap.grid
    k = snap.k.value
    mb = snap.mbar.value
    gi = snap.ginv.value
    # sum_AB P[m_AB, k^B_ac, k^A_bd] as [a, b, c, d]
    t1 = lhh_project(mb[:, :, None, None, None, None], k[None, :, :, None, :, None],
                     k[:, None, None, :, None, :], grid).sum(axis=(0, 1))
    t2 = lhh_project(mb[:, :, None, None, None, None], k[:, None, :, None, None, :],
                     k[None, :, None, :, :, None], grid).sum(axis=(0, 1))
    # sum_cd P[g^cd, k^A_ac, k^B_bd] as [A, B, a, b]
    s1 = lhh_project(gi[None, None, None, None], k[:, None, :, None, :, None],
                     k[None, :, None, :, None, :], grid).sum(axis=(4, 5))
    rperp = s1 - np.swapaxes(s1, 0, 1)
    return LHHCurvature(t1 - t2, np.einsum("ABab...->abAB...", rperp))


# ---------------------------------------------------------------------------
# balanced gauge residuals

@dataclass
class BalancedResiduals:
    lapse: np.ndarray
    lapse_mean: float
    harmonic: np.ndarray
    shift_mean: np.ndarray
    frame: np.ndarray
    omega0_mean: np.ndarray

    def summary(self):
        def mx(x):
            return float(np.max(np.abs(x))) if np.size(x) else 0.0
        return {
            "lapse": mx(self.lapse) + abs(self.lapse_mean),
            "harmonic": mx(self.harmonic) + mx(self.shift_mean),
            "frame": mx(self.frame) + mx(self.omega0_mean),
        }


def balanced_residuals(foliation, snapshot, sources=None, frame=None, metric=None):
    """Residual fields of the lapse, harmonic and frame conditions on one slice.

    ``sources`` supplies the tilded F fields; without it they are taken as 0.
    """
    snap = _snapshot(snapshot, frame)
    grid = foliation.grid
    d = grid.dim
    metric = SliceMetric(grid, foliation.gbar) if metric is None else metric
    N = foliation.lapse
    beta = foliation.shift
    trh = foliation.mean_curvature()
    if sources is not None and sources.F_natural_tilde is not None:
        Fn = sources.F_natural_tilde
        gF = np.einsum("ij...,ij...->...", foliation.gbar_inv, Fn[-d:, -d:])
    else:
        gF = np.zeros(grid.shape)
    lapse = trh - metric.laplacian_absd_inverse(N - 1.0) + gF / N - metric.mean(trh + gF / N)
    lapse_mean = float(grid.mean(N) - 1.0)

    contracted = np.einsum("ij...,kij...->k...", foliation.gbar_inv, foliation.gamma_bar)
    harmonic = contracted + metric.laplacian_absd_inverse(beta)
    shift_mean = grid.mean(beta)

    w = snap.omega.value
    div = metric.divergence(w[1:])
    codim = w.shape[1]
    if sources is not None and sources.F_perp_tilde is not None:
        S = np.einsum("ac...,cb...->ab...", sources.F_perp_tilde, snap.mbar.value)
        S = S - np.expand_dims(metric.mean(S), grid.axes)
    else:
        S = np.zeros((codim, codim) + grid.shape)
    frame_res = div + metric.laplacian_absd_inverse(w[0]) - S
    return BalancedResiduals(lapse, lapse_mean, harmonic, shift_mean, frame_res, grid.mean(w[0]))
