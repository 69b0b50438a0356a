"""Residuals of the exact parabolic and elliptic equations satisfied by the
lapse, shift, slice metric, second fundamental form and normal connection
in the balanced gauge.

Each residual vanishes identically when the balanced conditions hold exactly.
Away from the gauge they reduce to explicit expressions in the condition
defects (see ``defect_identities``), which is how the signs are validated.
"""
from dataclasses import dataclass

import numpy as np

from .. import jets as J
from ..elliptic import SliceMetric, d_minus_one
from ..geometry import covariant, spatial_grad
from ..jets import Jet
from ..spectral import abs_d

E = np.einsum


@dataclass
class DerivedResiduals:
    lapse: np.ndarray
    shift: np.ndarray
    gbar: np.ndarray
    h: np.ndarray
    omega: np.ndarray

    def summary(self):
        return {name: float(np.max(np.abs(getattr(self, name))))
                for name in ("lapse", "shift", "gbar", "h", "omega")}


def _time_derivative(jet, name):
    if jet is None or jet.order < 1:
        raise ValueError(f"a time jet of order >= 1 is needed for {name}")
    return jet.data[1]


def _commutator_terms(fol, cov, N, beta, h, trh):
    """d_0 gbar^{ij} and gbar^{ij} d_0 Gamma^k_ij from the first variation formulas."""
    gi = fol.gbar_inv
    dbeta = cov(beta, "u")  # [i, k] = nabla_i beta^k
    dbeta_up = E("ia...,aj...->ij...", gi, dbeta)  # nabla^i beta^j
    h_up = E("ia...,jb...,ab...->ij...", gi, gi, h)
    dgi = 2 * N * h_up - dbeta_up - np.swapaxes(dbeta_up, 0, 1)
    Nh = N * h
    dNh = cov(Nh, "dd")  # [m, i, k]
    div_Nh = E("mi...,mik...->k...", gi, dNh)  # nabla^i (N h)_ik
    grad_Ntrh = cov(N * trh, "")
    lap_beta = E("ij...,ijk...->k...", gi, cov(dbeta, "du"))
    Rb = E("ij...,kl...,imjl...,m...->k...", gi, gi, fol.riemann_bar, beta)
    dgam = -2 * E("kl...,l...->k...", gi, div_Nh) + E("kl...,l...->k...", gi, grad_Ntrh) + lap_beta + Rb
    return dgi, dgam, dbeta_up, h_up, lap_beta


def derived_gauge_equation_residuals(foliation, snapshot, sources=None, metric=None):
    """Residuals of the five derived gauge equations on one slice.

    The foliation must carry order-1 time jets of the lapse and shift, and
    ``sources`` (if given) an order-1 jet of the tilded natural source.
    """
    fol = foliation
    grid = fol.grid
    d = grid.dim
    metric = SliceMetric(grid, fol.gbar) if metric is None else metric
    gi, gam = fol.gbar_inv, fol.gamma_bar
    N, beta, h = fol.lapse, fol.shift, fol.h
    R, Rb = fol.riemann, fol.riemann_bar

    def cov(T, kinds):
        return covariant(T, kinds, gam, grid)

    trh = fol.mean_curvature()
    dgi, dgam, dbeta_up, h_up, lap_beta = _commutator_terms(fol, cov, N, beta, h, trh)
    dN = _time_derivative(fol.jets.get("lapse"), "the lapse equation")
    dbeta = _time_derivative(fol.jets.get("shift"), "the shift equation")

    # lapse -----------------------------------------------------------------
    u = abs_d(N - 1.0, grid, -1.0)
    hess_u = cov(cov(u, ""), "d")
    grad_u = cov(u, "")
    Rt = R[1:, 0, 1:, 0]
    Rtk = R[1:, 0, 1:, 1:]
    Rs = R[1:, 1:, 1:, 1:]
    curv = (E("ij...,ij...->...", gi, Rt) - 2 * E("ij...,ijk...,k...->...", gi, Rtk, beta)
            + E("ij...,ikjl...,k...,l...->...", gi, Rs, beta, beta)) / N
    G = (curv + E("i...,i...->...", beta, cov(trh, "")) + N * E("ij...,ij...->...", h_up, h)
         - 2 * E("ij...,ij...->...", N * h_up - dbeta_up, hess_u)
         + E("k...,k...->...", dgam, grad_u))
    if sources is not None and sources.jets.get("F_natural_tilde") is not None:
        Ft = sources.jets["F_natural_tilde"]
        Fs = Jet(Ft.data[:, -d:, -d:])
        dFs = _time_derivative(Fs, "the natural source")
        gbar_jet = fol.jets["gbar"].truncate(1)
        wgt = J.jeinsum(",ij->ij", J.reciprocal(fol.jets["lapse"].truncate(1)), J.inverse(gbar_jet))
        G = G + E("ij...,ij...->...", wgt.data[0], dFs) + E("ij...,ij...->...", wgt.data[1], Fs.data[0])
    lapse = dN + abs_d(N - 1.0, grid) - d_minus_one(G, grid, metric)

    # shift (componentwise Laplace-Beltrami in the harmonic condition) ------------
    v = abs_d(beta, grid, -1.0)
    hess_v = grid.hessian(v)  # [i, j, k]
    grad_v = spatial_grad(v, grid)  # [m, k]
    contracted = E("ij...,kij...->k...", gi, gam)
    dcontracted = E("ij...,kij...->k...", dgi, gam) + dgam
    comm = E("ij...,ijk...->k...", dgi, hess_v) - E("m...,mk...->k...", dcontracted, grad_v)
    lap_scalar = (E("ij...,ijk...->k...", gi, grid.hessian(beta))
                  - E("m...,mk...->k...", contracted, spatial_grad(beta, grid)))
    Nh = N * h
    dNh = cov(Nh, "dd")
    nh_terms = (2 * E("kl...,ij...,ilj...->k...", gi, gi, dNh)
                - E("kl...,l...->k...", gi, cov(N * trh, "")))
    bracket = (2 * E("kij...,ij...->k...", gam, dbeta_up)
               - E("ij...,lk...,milj...,m...->k...", gi, gi, Rb, beta)
               - comm + nh_terms - 2 * E("kij...,ij...->k...", gam, N * h_up)
               - (lap_beta - lap_scalar))
    shift = dbeta + abs_d(beta, grid) - d_minus_one(bracket, grid, metric)

    # slice metric -----------------------------------------------------------
    gb = fol.gbar
    W = metric.laplacian_absd_inverse(beta)
    low = E("kl...,lij...->kij...", gb, gam)
    Wl = E("jk...,k...->j...", gb, W)
    dW = spatial_grad(Wl, grid)  # [i, j] = d_i (gbar_jk W^k)
    ddg = spatial_grad(spatial_grad(gb, grid), grid)
    quad = (E("kl...,cd...,cki...,dlj...->ij...", gi, gi, low, low)
            + E("kl...,cd...,cki...,jld...->ij...", gi, gi, low, low)
            + E("kl...,cd...,ckj...,ild...->ij...", gi, gi, low, low))
    ric = E("kl...,ikjl...->ij...", gi, Rb)
    gbar_res = (E("kl...,klij...->ij...", gi, ddg) + dW + np.swapaxes(dW, 0, 1)
                - 2 * E("lij...,l...->ij...", gam, Wl) + 2 * ric - 2 * quad)

    # second fundamental form --------------------------------------------------
    n = fol.normal
    lap_h = E("kl...,klij...->ij...", gi, cov(cov(h, "dd"), "ddd"))
    hess_trh = cov(cov(trh, ""), "d")
    Rn = E("liaj...,a...->lij...", R[1:, 1:, :, 1:], n)
    h_mixed = E("ma...,aj...->mj...", gi, h)
    h_res = (lap_h - hess_trh
             - E("kl...,klij...->ij...", gi, cov(Rn, "ddd"))
             - E("kl...,iljk...->ij...", gi, cov(Rn, "ddd"))
             - E("kl...,kilm...,mj...->ij...", gi, Rb, h_mixed)
             + E("kilj...,kl...->ij...", Rb, h_up))

    # normal connection ----------------------------------------------------------
    snap = snapshot
    w = snap.omega.value
    ws = w[1:]
    mbar = snap.mbar.value
    lap_w = E("il...,iljab...->jab...", gi, cov(cov(ws, "d"), "dd"))
    rperp = E("xyac...,cb...->xyab...", snap.rperp_from_ricci.value[1:, 1:], mbar)
    div_r = E("il...,iljab...->jab...", gi, cov(rperp, "dd"))
    w0 = metric.laplacian_absd_inverse(w[0])
    ww = E("iac...,jcb...->ijab...", ws, ws)
    div_ww = E("ki...,kij...->j...", gi, cov(ww, "dd"))
    div_ww_t = E("ki...,kij...->j...", gi, cov(np.swapaxes(ww, 0, 1), "dd"))
    if sources is not None and sources.F_perp_tilde is not None:
        S = E("ac...,cb...->ab...", sources.F_perp_tilde, mbar)
        dS = spatial_grad(S, grid)
    else:
        dS = 0.0
    curv_w = E("kl...,im...,ijmk...,lab...->jab...", gi, gi, Rb, ws)
    omega_res = (lap_w + spatial_grad(w0, grid) - div_r - dS - curv_w + div_ww - div_ww_t)
    return DerivedResiduals(lapse, shift, gbar_res, h_res, omega_res)


def defect_identities(residuals_series, derived, times, index, grid, metrics, foliations):
    """What each derived residual must equal at ``times[index]`` given the
    balanced-condition defects along a series of slices.

    ``residuals_series`` holds BalancedResiduals on equally spaced slices;
    five-point differences supply the time derivatives.  Returns the
    difference between each derived residual and its predicted value.
    """
    dt = times[1] - times[0]
    lo = min(max(index - 2, 0), len(times) - 5)
    w = J.fd_weights(np.arange(5) - (index - lo), 1) / dt
    win = residuals_series[lo:lo + 5]
    fols = foliations[lo:lo + 5]
    metric = metrics[index]
    fol = foliations[index]

    def ddt(getter):
        return sum(wi * getter(r, f) for wi, r, f in zip(w, win, fols))

    d_lapse = ddt(lambda r, f: r.lapse)
    d_mean_N = ddt(lambda r, f: grid.mean(f.lapse))
    d_harm = ddt(lambda r, f: r.harmonic)
    d_mean_beta = ddt(lambda r, f: grid.mean(f.shift))
    cur = residuals_series[index]
    pred_lapse = d_mean_N - d_minus_one(d_lapse, grid, metric)
    pred_shift = d_mean_beta[:, None, None] + d_minus_one(d_harm, grid, metric)
    Ch = E("jk...,k...->j...", fol.gbar, cur.harmonic)
    dCh = spatial_grad(Ch, grid)
    pred_gbar = dCh + np.swapaxes(dCh, 0, 1) - 2 * E("lij...,l...->ij...", fol.gamma_bar, Ch)
    pred_omega = spatial_grad(cur.frame, grid)
    return {
        "lapse": derived.lapse - pred_lapse,
        "shift": derived.shift - pred_shift,
        "gbar": derived.gbar - pred_gbar,
        "h": derived.h,
        "omega": derived.omega - pred_omega,
    }
