"""Exact-kernel solvers for the half-heat equation d_t f + |D| f = F."""
from math import factorial

import numpy as np
from scipy.interpolate import CubicSpline

from ..norms import sobolev_norm


def phi_functions(z, kmax):
    """[phi_0(z), ..., phi_kmax(z)] with phi_k(z) = int_0^1 e^{(1-s)z} s^{k-1}/(k-1)! ds.

    Small |z| uses the power series, larger |z| the recurrence
    phi_{k+1} = (phi_k - 1/k!)/z.
    """
    z = np.asarray(z, dtype=complex if np.iscomplexobj(z) else float)
    small = np.abs(z) < 1.0
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    out = [np.exp(z)]
    cur = np.exp(zl)
    for k in range(1, kmax + 1):
        cur = (cur - 1.0 / factorial(k - 1)) / zl
        series = sum(zs**m / factorial(m + k) for m in range(25))
        out.append(np.where(small, series, cur))
    return out


def _spatial_coefficients(values, grid):
    return grid.fft(np.asarray(values, dtype=float))


def solve_halfheat(F, times, D0, grid):
    """Solution at the nodes ``times`` of d_t f + |D| f = F, f(times[0]) = D0.

    F is sampled at the nodes (leading time axis).  Each mode is advanced
    with the exact kernel exp(-|xi| t) against the not-a-knot cubic spline
    interpolant of F-hat in time, so polynomial sources of degree <= 3 are
    integrated exactly.
    """
    times = np.asarray(times, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape[0] != len(times):
        raise ValueError("F needs one slice per time node")
    Fh = _spatial_coefficients(F, grid)
    lam = grid.xi_norm
    f = _spatial_coefficients(D0, grid)
    out = [f]
    if len(times) > 1:
        spline = CubicSpline(times, Fh, axis=0)
        cache = {}
        for n in range(len(times) - 1):
            h = times[n + 1] - times[n]
            key = round(h, 14)
            if key not in cache:
                cache[key] = phi_functions(-lam * h, 4)
            phis = cache[key]
            acc = phis[0] * f
            for k in range(4):
                c = spline.c[3 - k, n]
                acc = acc + c * factorial(k) * h ** (k + 1) * phis[k + 1]
            f = acc
            out.append(f)
    return grid.to_real(np.stack(out))


def halfheat_time_derivative(f, F, grid):
    """d_t f recovered from the equation: F - |D| f."""
    return F - grid.apply_symbol(f, grid.xi_norm)


def _slice_l2_squared(series, grid):
    series = np.asarray(series)
    axes = tuple(range(1, series.ndim))
    return np.sum(series**2, axis=axes) * grid.cell_volume


def _sup_l2(series, grid):
    return float(np.sqrt(np.max(_slice_l2_squared(series, grid))))


def _l2l2(series, times, grid):
    return float(np.sqrt(np.trapezoid(_slice_l2_squared(series, grid), times)))


def parabolic_estimate_ratios(f, F, D0, times, grid):
    """The two energy ratios ||df|| / (||D0|| + ||F||) in L^inf L^2 and L^2 L^2."""
    ft = halfheat_time_derivative(f, F, grid)
    grads = np.concatenate([ft[:, None], np.moveaxis(grid.grad(f), 0, 1)], axis=1)
    r1 = _sup_l2(grads, grid) / (sobolev_norm(D0, grid, 1.0) + _sup_l2(F, grid))
    r2 = _l2l2(grads, times, grid) / (sobolev_norm(D0, grid, 0.5) + _l2l2(F, times, grid))
    return r1, r2


def random_halfheat_problem(grid, rng, times, band=None):
    """Random band-limited initial slice and a source smooth in time."""
    band = grid.n / 4 if band is None else band
    D0 = grid.random_field(rng, band=band, smooth=rng.uniform(1.0, 2.0))
    a, b = grid.random_field(rng, shape=(2,), band=band, smooth=rng.uniform(0.0, 1.0))
    w = rng.uniform(0.5, 3.0)
    F = np.stack([np.cos(w * t) * a + np.sin(w * t) * b for t in times])
    return D0, F


def parabolic_constants(grid, samples=100, seed=0, t_final=2.0, steps=80):
    """Largest measured ratios over random inputs for both energy estimates."""
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, t_final, steps + 1)
    r = []
    for _ in range(samples):
        D0, F = random_halfheat_problem(grid, rng, times)
        f = solve_halfheat(F, times, D0, grid)
        r.append(parabolic_estimate_ratios(f, F, D0, times, grid))
    r = np.array(r)
    return {"linf_l2": float(r[:, 0].max()), "l2_l2": float(r[:, 1].max()),
            "ratios": r, "samples": samples}


# ---------------------------------------------------------------------------
# exponential Runge-Kutta stepping for semilinear systems

class ETDRK4:
    """Fourth-order exponential time differencing for du/dt = -lam u + G(t, u).

    ``lam`` broadcasts against the Fourier coefficients of u; entries with
    lam = 0 reduce to the classical Runge-Kutta scheme.
    """

    def __init__(self, lam, h):
        z = -np.asarray(lam, dtype=float) * h
        p0, p1, p2, p3 = phi_functions(z, 3)
        q0, q1 = phi_functions(z / 2, 1)
        self.h = h
        self.E, self.E2 = p0, q0
        self.half = 0.5 * h * q1
        self.f1 = h * (p1 - 3 * p2 + 4 * p3)
        self.f2 = h * (p2 - 2 * p3)
        self.f3 = h * (-p2 + 4 * p3)

    def step(self, t, u, G):
        """``u`` is a coefficient array; ``G(t, u)`` returns coefficients."""
        h = self.h
        Nu = G(t, u)
        a = self.E2 * u + self.half * Nu
        Na = G(t + h / 2, a)
        b = self.E2 * u + self.half * Na
        Nb = G(t + h / 2, b)
        c = self.E2 * a + self.half * (2 * Nb - Nu)
        Nc = G(t + h, c)
        return self.E * u + self.f1 * Nu + 2 * self.f2 * (Na + Nb) + self.f3 * Nc
