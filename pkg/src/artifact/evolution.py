"""Time integration of the minimal surface equation.

Two formulations are supported: the scalar graph equation for codimension
one, and the parametric system g^{ab}(dY) d_a d_b Y = 0 for the displacement
U = Y - Y_flat, whose normal part is the minimal surface equation and whose
tangential part fixes the parametrization.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import jets as J
from .elliptic import SliceMetric, d_minus_one
from .geometry import GeometrySnapshot, Immersion, NormalFrame, flat_tangent, minkowski
from .jets import Jet, jeinsum


class BreakdownError(RuntimeError):
    """Loss of hyperbolicity or non-finite values; carries the last valid state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class DataError(ValueError):
    pass


@dataclass
class EvolutionState:
    grid: object
    mode: str
    u: np.ndarray
    u_t: np.ndarray
    time: float = 0.0
    codim: int = 1
    cfl: float = 0.5
    dealias: bool = True
    monitors: dict = field(default_factory=dict)

    @property
    def target_dim(self):
        return self.grid.dim + 1 + self.codim

    @property
    def Y(self):
        """Full immersion values (parametric mode)."""
        if self.mode != "parametric":
            return lift_graph(self).Y
        out = self.u.copy()
        out[0] += self.time
        out[1:self.grid.dim + 1] += self.grid.x
        return out

    def max_dt(self):
        return self.cfl * self.grid.spacing


# ---------------------------------------------------------------------------
# right-hand sides

def timelike_margin(f, f_t, grid):
    grad = grid.grad(f)
    return 1.0 - f_t**2 + np.sum(grad**2, axis=0)


def scalar_rhs(f, f_t, grid, dealias=True):
    """d_t^2 f from the divergence form of the graph equation.

    Expanding gives gt^{ab} d_a d_b f = 0 with gt^{ab} = (1+Q) m^{ab} - f^a f^b,
    Q = m^{ab} f_a f_b, which is solved pointwise for f_tt.
    """
    grad = grid.grad(f)
    grad_t = grid.grad(f_t)
    hess = grid.hessian(f)
    q = -f_t**2 + np.sum(grad**2, axis=0)
    if np.any(1.0 + q <= 0):
        raise BreakdownError("graph lost its timelike character (1 + Q <= 0)")
    g00 = -(1.0 + np.sum(grad**2, axis=0))
    g0i = f_t * grad
    gij = (1.0 + q) * np.eye(grid.dim)[(...,) + (None,) * grid.dim] \
        - np.einsum("i...,j...->ij...", grad, grad)
    num = 2 * np.einsum("i...,i...->...", g0i, grad_t) + np.einsum("ij...,ij...->...", gij, hess)
    out = -num / g00
    return grid.dealias(out) if dealias else out


def _tangents(U, U_t, grid):
    d = grid.dim
    n1 = U.shape[0]
    flat = flat_tangent(d, n1)[(...,) + (None,) * d]
    return np.concatenate([U_t[None], grid.grad(U)]) + flat


def parametric_rhs(U, U_t, grid, dealias=True, threshold=1e-8):
    """d_t^2 U = -(2 g^{0i} d_i U_t + g^{ij} d_i d_j U) / g^{00}."""
    dY = _tangents(U, U_t, grid)
    m = minkowski(U.shape[0])
    g = np.einsum("aA...,AB,bB...->ab...", dY, m, dY)
    mats = np.moveaxis(np.moveaxis(g, 0, -1), 0, -1)
    if np.any(np.linalg.det(mats) >= 0):
        raise BreakdownError("induced metric is no longer Lorentzian")
    gi = np.moveaxis(np.moveaxis(np.linalg.inv(mats), -1, 0), -1, 0)
    if np.any(np.abs(gi[0, 0]) < threshold):
        raise BreakdownError("g^00 degenerate")
    d = grid.dim
    grad_t = grid.grad(U_t)  # [i, A]
    hess = grid.hessian(U)  # [i, j, A]
    num = 2 * np.einsum("i...,iA...->A...", gi[0, 1:], grad_t) \
        + np.einsum("ij...,ijA...->A...", gi[1:, 1:], hess)
    out = -num / gi[0, 0]
    return grid.dealias(out) if dealias else out


def rhs(state):
    fn = scalar_rhs if state.mode == "scalar" else parametric_rhs
    return fn(state.u, state.u_t, state.grid, state.dealias)


# ---------------------------------------------------------------------------
# exact time jets by repeated substitution

def _spatial_hessian_jet(q: Jet, grid):
    return Jet(np.stack([grid.hessian(x) for x in q.data]))


def _spatial_grad_jet(q: Jet, grid):
    return Jet(np.stack([grid.grad(x) for x in q.data]))


def _scalar_rhs_jet(f: Jet, grid):
    """f_tt as a jet one order below f."""
    o = f.order - 1
    ft = f.dt()
    grad = _spatial_grad_jet(f, grid).truncate(o)
    grad_t = _spatial_grad_jet(ft, grid)
    hess = _spatial_hessian_jet(f, grid).truncate(o)
    gg = jeinsum("i,i->", grad, grad)
    q = gg - jeinsum(",->", ft, ft)
    g00 = (gg + 1.0) * -1.0
    lap = Jet(np.einsum("zii...->z...", hess.data))
    num = jeinsum(",i,i->", ft, grad, grad_t) * 2.0 \
        + jeinsum(",->", q + 1.0, lap) \
        - jeinsum("i,j,ij->", grad, grad, hess)
    return jeinsum(",->", num, J.reciprocal(g00)) * -1.0


def _parametric_rhs_jet(U: Jet, grid):
    d = grid.dim
    o = U.order - 1
    Ut = U.dt()
    grad = _spatial_grad_jet(U, grid).truncate(o)  # [i, A]
    flat = flat_tangent(d, U.shape[0])[(...,) + (None,) * d]
    dY = J.stack([Ut] + [grad[i] for i in range(d)]) + flat
    g = jeinsum("aA,AB,bB->ab", dY, minkowski(U.shape[0]), dY)
    gi = J.inverse(g)
    grad_t = _spatial_grad_jet(Ut, grid)
    hess = _spatial_hessian_jet(U, grid).truncate(o)
    g0i = Jet(gi.data[:, 0, 1:])
    gij = Jet(gi.data[:, 1:, 1:])
    num = jeinsum("i,iA->A", g0i, grad_t) * 2.0 + jeinsum("ij,ijA->A", gij, hess)
    return jeinsum("A,->A", num, J.reciprocal(Jet(gi.data[:, 0, 0]))) * -1.0


def time_jet(state, order=4):
    """Jet of u at the state's time with d_t^m u, m <= order, from the equation."""
    fn = _scalar_rhs_jet if state.mode == "scalar" else _parametric_rhs_jet
    data = [state.u, state.u_t]
    for m in range(2, order + 1):
        acc = fn(Jet(np.stack(data)), state.grid)
        data.append(acc.data[m - 2])
    return Jet(np.stack(data[: order + 1]))


# ---------------------------------------------------------------------------
# stepping

def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def step(state, dt):
    """One classical RK4 step of the first-order system (u, u_t)."""
    if dt > state.max_dt() * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} violates the CFL bound {state.max_dt():.3g}")
    grid, dl = state.grid, state.dealias
    fn = scalar_rhs if state.mode == "scalar" else parametric_rhs
    u, v = state.u, state.u_t
    try:
        a1 = fn(u, v, grid, dl)
        a2 = fn(u + 0.5 * dt * v, v + 0.5 * dt * a1, grid, dl)
        a3 = fn(u + 0.5 * dt * v + 0.25 * dt**2 * a1, v + 0.5 * dt * a2, grid, dl)
        a4 = fn(u + dt * v + 0.5 * dt**2 * a2, v + dt * a3, grid, dl)
    except BreakdownError as exc:
        raise BreakdownError(str(exc), state) from exc
    new_u = u + dt * v + dt**2 / 6 * (a1 + a2 + a3)
    new_v = v + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    if not _finite(new_u, new_v):
        raise BreakdownError("non-finite values after RK4 step", state)
    new = replace(state, u=new_u, u_t=new_v, time=state.time + dt, monitors=dict(state.monitors))
    update_monitors(new)
    return new


def update_monitors(state):
    if state.mode == "scalar":
        state.monitors["timelike_margin"] = float(np.min(timelike_margin(state.u, state.u_t, state.grid)))
    else:
        dY = _tangents(state.u, state.u_t, state.grid)
        g = np.einsum("aA...,AB,bB...->ab...", dY, minkowski(state.u.shape[0]), dY)
        state.monitors["max_det_g"] = float(np.max(np.linalg.det(np.moveaxis(np.moveaxis(g, 0, -1), 0, -1))))
    return state


def evolve(state, t_final, dt, store_every=1):
    """Integrate to ``t_final``; returns the list of stored states (first included)."""
    n_steps = int(round((t_final - state.time) / dt))
    if n_steps < 0 or abs(state.time + n_steps * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ValueError("t_final - time must be a multiple of dt")
    out = [state]
    for n in range(1, n_steps + 1):
        state = step(state, dt)
        if n % store_every == 0 or n == n_steps:
            out.append(state)
    return out


# ---------------------------------------------------------------------------
# data and lifts

def flat_pair(grid, codim=1):
    n1 = grid.dim + 1 + codim
    Y = np.zeros((n1,) + grid.shape)
    Y[1:grid.dim + 1] = grid.x
    n = np.zeros_like(Y)
    n[0] = 1.0
    return Y, n


def pair_from_perturbation(grid, displacement, normal_tilt):
    """Initial data pair Y = Y_flat + displacement with the unit normal obtained
    by removing the tangential part of e_0 + normal_tilt and normalizing."""
    n1 = displacement.shape[0]
    Ybar = flat_pair(grid, n1 - grid.dim - 1)[0] + displacement
    m = minkowski(n1)
    dY = grid.grad(displacement) + flat_tangent(grid.dim, n1)[1:][(...,) + (None,) * grid.dim]
    gbar = np.einsum("iA...,AB,jB...->ij...", dY, m, dY)
    ginv = np.moveaxis(np.moveaxis(np.linalg.inv(np.moveaxis(np.moveaxis(gbar, 0, -1), 0, -1)), -1, 0), -1, 0)
    v = np.array(normal_tilt, dtype=float, copy=True)
    v[0] += 1.0
    for _ in range(2):  # second pass removes roundoff
        coef = np.einsum("ij...,jA...,AB,B...->i...", ginv, dY, m, v)
        v = v - np.einsum("i...,iA...->A...", coef, dY)
    norm2 = -np.einsum("A...,AB,B...->...", v, m, v)
    if np.any(norm2 <= 0):
        raise DataError("perturbed normal is not timelike")
    return Ybar, v / np.sqrt(norm2)


def _exp_sine(x):
    e = np.exp(np.sin(x))
    return e - 1.0, np.cos(x) * e, (np.cos(x) ** 2 - np.sin(x)) * e


def _bump(x):
    b = np.exp(2 * np.cos(x) - 2)
    return b, -2 * np.sin(x) * b, (4 * np.sin(x) ** 2 - 2 * np.cos(x)) * b


# profile -> (phi, phi', phi'')
WAVE_PROFILES = {
    "sine": lambda x: (np.sin(x), np.cos(x), -np.sin(x)),
    "exp_sine": _exp_sine,
    "bump": _bump,
}


def traveling_wave(grid, profile="sine", amplitude=0.3, time=0.0):
    """(f, f_t) of the exact graph solution f = a phi(x^1 - t).

    The gradient of such a wave is null, so the graph equation reduces to
    the linear wave equation, which it satisfies.
    """
    phi, dphi, _ = WAVE_PROFILES[profile](grid.x[0] - time)
    return amplitude * phi, -amplitude * dphi


def graph_pair(grid, f, f_t):
    """Initial pair (Y, n) of the graph x^{d+1} = f with velocity f_t."""
    Y, _ = flat_pair(grid, 1)
    Y[-1] = f
    tilt = np.zeros_like(Y)
    tilt[-1] = f_t
    _, n = pair_from_perturbation(grid, Y - flat_pair(grid, 1)[0], tilt)
    return Y, n


def constraint_residuals(Ybar, nbar, grid):
    """(m(n,n) + 1, m(d_i Y, n)) maxima for an initial data pair."""
    n1 = Ybar.shape[0]
    m = minkowski(n1)
    U = Ybar - flat_pair(grid, n1 - grid.dim - 1)[0]
    dY = grid.grad(U) + flat_tangent(grid.dim, n1)[1:][(...,) + (None,) * grid.dim]
    nn = np.einsum("A...,AB,B...->...", nbar, m, nbar) + 1.0
    tn = np.einsum("iA...,AB,B...->i...", dY, m, nbar)
    return float(np.max(np.abs(nn))), float(np.max(np.abs(tn)))


def slice_data(Ybar, nbar, grid):
    """Slice metric, slice tangents and h_ij = m(n, d_i d_j Y)."""
    n1 = Ybar.shape[0]
    m = minkowski(n1)
    U = Ybar - flat_pair(grid, n1 - grid.dim - 1)[0]
    dY = grid.grad(U) + flat_tangent(grid.dim, n1)[1:][(...,) + (None,) * grid.dim]
    gbar = np.einsum("iA...,AB,jB...->ij...", dY, m, dY)
    h = np.einsum("A...,AB,ijB...->ij...", nbar, m, grid.hessian(U))
    return gbar, dY, h


def initial_lapse_shift(Ybar, nbar, grid):
    """(N0, beta0) for which the lapse and harmonic slice conditions hold."""
    gbar, _, h = slice_data(Ybar, nbar, grid)
    metric = SliceMetric(grid, gbar)
    tr_h = np.einsum("ij...,ij...->...", metric.inv, h)
    lapse = 1.0 + d_minus_one(tr_h, grid, metric)
    shift = -d_minus_one(metric.contracted_christoffel(), grid, metric)
    return lapse, shift


def initial_data_from_pair(Ybar, nbar, grid, mode="parametric", tol=1e-8, cfl=0.5, gauge="balanced"):
    """Evolution state from an initial pair (Ybar, nbar).

    In parametric mode ``gauge`` picks d_0 Y on the initial slice:
    "balanced" uses the lapse and shift that satisfy the slice conditions,
    "product" uses N = 1, beta = 0, so d_0 Y = nbar.
    """
    Ybar = np.asarray(Ybar, dtype=float)
    nbar = np.asarray(nbar, dtype=float)
    codim = Ybar.shape[0] - grid.dim - 1
    nn, tn = constraint_residuals(Ybar, nbar, grid)
    if nn > tol or tn > tol:
        raise DataError(f"initial data constraints violated: |m(n,n)+1|={nn:.3g}, |m(dY,n)|={tn:.3g}")
    if np.any(nbar[0] <= 0):
        raise DataError("normal must be future directed")
    U = Ybar - flat_pair(grid, codim)[0]
    if mode == "scalar":
        if codim != 1:
            raise DataError("the scalar formulation is codimension one")
        if np.max(np.abs(U[: grid.dim + 1])) > tol:
            raise DataError("scalar mode needs a graph: Y^0 = 0 and Y^i = x^i")
        # n is orthogonal to the graph normal (f_t, -grad f, 1)
        f = U[-1]
        f_t = (nbar[-1] - np.einsum("i...,i...->...", nbar[1:-1], grid.grad(f))) / nbar[0]
        state = EvolutionState(grid, "scalar", f, f_t, 0.0, 1, cfl)
        state.monitors.update(lapse=None, shift=None)
        return update_monitors(state)
    if gauge == "balanced":
        lapse, shift = initial_lapse_shift(Ybar, nbar, grid)
    elif gauge == "product":
        lapse, shift = np.ones(grid.shape), np.zeros((grid.dim,) + grid.shape)
    else:
        raise ValueError(f"unknown initial gauge {gauge!r}")
    _, dY, _ = slice_data(Ybar, nbar, grid)
    velocity = lapse * nbar + np.einsum("i...,iA...->A...", shift, dY)
    U_t = velocity.copy()
    U_t[0] -= 1.0
    state = EvolutionState(grid, "parametric", U, U_t, 0.0, codim, cfl)
    state.monitors.update(lapse=lapse, shift=shift)
    return update_monitors(state)


def lift_graph(state):
    """Parametric state (t, x, f) of a scalar state, with its unit normal frame."""
    if state.mode != "scalar":
        raise ValueError("lift_graph expects a scalar state")
    grid = state.grid
    d = grid.dim
    U = np.zeros((d + 2,) + grid.shape)
    U_t = np.zeros_like(U)
    U[-1] = state.u
    U_t[-1] = state.u_t
    out = EvolutionState(grid, "parametric", U, U_t, state.time, 1, state.cfl, state.dealias)
    out.monitors["frame"] = graph_normal(state.u, state.u_t, grid)
    return update_monitors(out)


def graph_normal(f, f_t, grid):
    """Unit normal (f_t, -grad f, 1)/sqrt(1 + Q) of the graph x^{d+1} = f."""
    grad = grid.grad(f)
    q = -f_t**2 + np.sum(grad**2, axis=0)
    nu = np.concatenate([f_t[None], -grad, np.ones((1,) + grid.shape)])
    return nu / np.sqrt(1.0 + q)


def immersion(state, order=4, jet=None):
    """Immersion of a parametric (or lifted scalar) state with exact time jets."""
    jet = time_jet(state, order) if jet is None else jet
    if state.mode == "scalar":
        return Immersion(state.grid, _lift_jet(jet, state.grid), state.time, 1)
    return Immersion(state.grid, jet, state.time, state.codim)


def _lift_jet(f_jet, grid):
    d = grid.dim
    data = np.zeros((f_jet.order + 1, d + 2) + grid.shape)
    data[:, -1] = f_jet.data
    return Jet(data)


def snapshot(state, order=4):
    return GeometrySnapshot(immersion(state, order))


def stored_immersion(states, center, dt, order=2):
    """Immersion at ``states[center]`` with time jets from finite differences of stored slices."""
    st = states
    if st[center].mode == "scalar":
        slices = [lift_graph(s).u for s in st]
        codim = 1
    else:
        slices = [s.u for s in st]
        codim = st[center].codim
    jet = J.jet_from_slices(slices, dt, center, order)
    return Immersion(st[center].grid, jet, st[center].time, codim)


def k_wave_residual(source, dt=None, center=None, order=4):
    """Wave-equation residual for k on a stored stencil or a single state.

    ``source`` is a GeometrySnapshot, an EvolutionState (exact jets), or a
    list of at least five stored states with spacing ``dt``.
    """
    from .geometry import k_wave_residual as kwr
    if isinstance(source, GeometrySnapshot):
        return kwr(source)
    if isinstance(source, EvolutionState):
        return kwr(snapshot(source, order))
    states = list(source)
    if len(states) < 5 or dt is None:
        from .geometry import StencilError
        raise StencilError("k wave residual needs at least five stored slices and dt")
    center = len(states) // 2 if center is None else center
    return kwr(GeometrySnapshot(stored_immersion(states, center, dt, order=min(order, len(states) - 1))))
