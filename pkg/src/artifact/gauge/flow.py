"""Gauge-fixing flow: a diffeomorphism Psi and a normal frame rotation U that
carry a stored background solution into the balanced gauge.

The unknowns are Phi (Psi = (t, x) + <D>^{-1} Phi), V and the constant matrix
path M (U = I + M + |D|(1 + |D|)^{-1} V).  At each flow time the slice
{Psi(t, x)} of the background is sampled, its induced geometry is computed,
and the lapse, shift and frame rotation rate that satisfy the balanced
conditions are assembled.  Phi and V then follow d_t u + |D| u = G with
exponential time differencing; M follows its ODE with classical RK4 (the
lam = 0 case of the same scheme).
"""
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .. import jets as J
from ..elliptic import SliceMetric, SmallnessError, d_minus_one
from ..evolution import immersion
from ..geometry import FoliationError, GeometrySnapshot, Immersion, NormalFrame, minkowski
from ..jets import Jet, jet_from_slices
from ..spectral import extend, fractional_symbol
from .halfheat import ETDRK4
from .sources import GaugeSource, natural_source, perp_source


class FlowError(RuntimeError):
    """The flow left the regime where its elliptic operators are invertible."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


def _move(a):
    return J._move(a)


def _back(a):
    return J._back(a)


def _mat_inv(a):
    return _back(np.linalg.inv(_move(a)))


# ---------------------------------------------------------------------------
# background sampling

class BackgroundSampler:
    """Evaluates a stored background run at arbitrary spacetime points.

    Each stored slice carries exact time jets; a point (t', x') is evaluated
    by Taylor expansions in t' about the two bracketing slices, blended with
    a smooth weight, and by the trigonometric interpolant in x'.
    """

    def __init__(self, states, order=6, smooth=4):
        if not states:
            raise ValueError("no background states")
        self.grid = states[0].grid
        self.codim = states[0].codim
        self.times = np.array([s.time for s in states])
        self.order = order
        self.smooth = smooth
        self._slices = []
        for st in states:
            imm = immersion(st, order)
            snap = GeometrySnapshot(imm)
            self._slices.append({
                "u": self.grid.fft(imm.displacement.data),
                "E": self.grid.fft(imm.tangent.data),
                "omega": self.grid.fft(snap.omega.data),
            })

    @property
    def t_range(self):
        return float(self.times[0]), float(self.times[-1])

    def _weights(self, t_points):
        """{slice index: weight per point} blending the two bracketing slices.

        The weight is a smoothstep whose first ``smooth`` derivatives vanish
        at the nodes, so the sampled fields are C^smooth in time even though
        neighbouring slices' jets disagree by the background's time error.
        """
        times = self.times
        spacing = np.max(np.diff(times)) if len(times) > 1 else 1.0
        if np.min(t_points) < times[0] - spacing or np.max(t_points) > times[-1] + spacing:
            raise FlowError("Psi left the time range of the stored background")
        if len(times) == 1:
            return {0: np.ones_like(t_points)}
        n = np.clip(np.searchsorted(times, t_points, side="right") - 1, 0, len(times) - 2)
        theta = np.clip((t_points - times[n]) / (times[n + 1] - times[n]), 0.0, 1.0)
        s = smoothstep(theta, self.smooth)
        out = {}
        for k in np.unique(np.concatenate([n, n + 1])):
            w = np.where(n == k, 1.0 - s, 0.0) + np.where(n + 1 == k, s, 0.0)
            if np.any(w != 0):
                out[int(k)] = w
        return out

    def sample(self, psi, names=("u", "E", "omega")):
        """Background fields at the points psi[alpha, ...] (same grid shape)."""
        grid = self.grid
        t_pts = psi[0].reshape(-1)
        x_pts = psi[1:].reshape(grid.dim, -1)
        weights = self._weights(t_pts)
        out = {}
        for name in names:
            acc = 0.0
            for k, w in weights.items():
                vals = grid.interpolate_coefficients(self._slices[k][name], x_pts)
                acc = acc + w * Jet(vals).taylor(t_pts - self.times[k])
            out[name] = acc.reshape(acc.shape[:-1] + grid.shape)
        return out


def smoothstep(theta, k):
    """Polynomial step from 0 to 1 on [0, 1] with k vanishing derivatives at both ends."""
    theta = np.asarray(theta, dtype=float)
    acc = sum(comb(k + j, j) * (1.0 - theta) ** j for j in range(k + 1))
    return theta ** (k + 1) * acc


# ---------------------------------------------------------------------------
# flow state

@dataclass
class GaugeFlowState:
    grid: object
    time: float
    Phi: np.ndarray  # [alpha, ...]
    V: np.ndarray  # [a, b, ...]
    M: np.ndarray  # [a, b]
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, grid, codim, time=0.0):
        d = grid.dim
        return cls(grid, time, np.zeros((d + 1,) + grid.shape),
                   np.zeros((codim, codim) + grid.shape), np.zeros((codim, codim)))

    @property
    def codim(self):
        return self.M.shape[0]

    @property
    def psi(self):
        """Psi^alpha(t, x) = (t, x) + <D>^{-1} Phi^alpha."""
        grid = self.grid
        out = grid.apply_symbol(self.Phi, fractional_symbol(grid, "japanese", -1.0))
        out[0] += self.time
        out[1:] += grid.x
        return out

    @property
    def U(self):
        grid = self.grid
        c = self.codim
        sym = grid.xi_norm / (1.0 + grid.xi_norm)
        out = grid.apply_symbol(self.V, sym)
        out += (np.eye(c) + self.M)[(...,) + (None,) * grid.dim]
        return out

    def dpsi(self):
        """d_k Psi^alpha as [k, alpha]."""
        grid = self.grid
        pot = grid.apply_symbol(self.Phi, fractional_symbol(grid, "japanese", -1.0))
        out = grid.grad(pot)
        for k in range(grid.dim):
            out[k, k + 1] += 1.0
        return out

    def dU(self):
        grid = self.grid
        sym = grid.xi_norm / (1.0 + grid.xi_norm)
        return grid.grad(grid.apply_symbol(self.V, sym))

    def pack(self):
        g = self.grid
        return np.concatenate([g.fft(self.Phi).ravel(), g.fft(self.V).ravel(),
                               self.M.astype(complex).ravel()])

    def unpack(self, vec, time):
        g = self.grid
        c = self.codim
        n_phi = self.Phi.size
        n_v = self.V.size
        Phi = g.to_real(vec[:n_phi].reshape(self.Phi.shape))
        V = g.to_real(vec[n_phi:n_phi + n_v].reshape(self.V.shape))
        M = vec[n_phi + n_v:].real.reshape(c, c)
        return GaugeFlowState(g, time, Phi, V, M)


# ---------------------------------------------------------------------------
# geometry of the Psi-slice

def _reference_frame(E, n1, d, codim):
    """Frame vectors e_a = delta_a - g^{ab} m(delta_a, E_a) E_b at each point."""
    m = np.diag(minkowski(n1))
    g = np.einsum("aA...,A,bA...->ab...", E, m, E)
    gi = _mat_inv(g)
    e = np.zeros((codim, n1) + E.shape[2:])
    for a in range(codim):
        e[a, d + 1 + a] = 1.0
        e[a] -= np.einsum("xy...,x...,yA...->A...", gi, E[:, d + 1 + a], E)
    return e


@dataclass
class SliceGauge:
    """Balanced lapse, shift and frame data of one flow slice."""
    N: np.ndarray
    beta: np.ndarray
    normal: np.ndarray  # n-hat^alpha in background coordinates
    dpsi0: np.ndarray
    omega0: np.ndarray
    dU0: np.ndarray
    frame: np.ndarray  # e_new[b, A]
    mbar: np.ndarray
    gbar: np.ndarray
    sources: GaugeSource = None


class GaugeFlow:
    """Right-hand side of the flow for one background."""

    def __init__(self, sampler: BackgroundSampler, source_iterations=1):
        self.sampler = sampler
        self.grid = sampler.grid
        self.codim = sampler.codim
        self.source_iterations = source_iterations
        self.initial_sources = None
        g = self.grid
        with np.errstate(divide="ignore"):
            sym = np.where(g.xi_norm > 0, (1.0 + g.xi_norm) / np.where(g.xi_norm > 0, g.xi_norm, 1.0), 0.0)
        self._v_symbol = sym

    # slice geometry -------------------------------------------------------
    def slice_gauge(self, state: GaugeFlowState, with_sources=True):
        grid = self.grid
        d = grid.dim
        c = self.codim
        n1 = d + 1 + c
        m = np.diag(minkowski(n1))
        psi = state.psi
        dpsi = state.dpsi()
        bg = self.sampler.sample(psi, ("E", "omega"))
        E, wbg = bg["E"], bg["omega"]
        Z = np.einsum("aA...,ka...->kA...", E, dpsi)
        gbar = np.einsum("iA...,A,jA...->ij...", Z, m, Z)
        gbar = 0.5 * (gbar + np.swapaxes(gbar, 0, 1))
        if np.any(np.linalg.eigvalsh(_move(gbar))[..., 0] <= 0):
            raise FoliationError("Psi-slice is not spacelike")
        H = grid.grad(Z)
        H = 0.5 * (H + np.swapaxes(H, 0, 1))
        try:
            metric = SliceMetric(grid, gbar)
        except np.linalg.LinAlgError as exc:
            raise FoliationError("degenerate Psi-slice metric") from exc
        gi = metric.inv
        cvec = np.einsum("A...,A,iA...->i...", E[0], m, Z)
        coef = np.einsum("ij...,i...->j...", gi, cvec)
        v = E[0] - np.einsum("j...,jA...->A...", coef, Z)
        norm2 = -np.einsum("A...,A,A...->...", v, m, v)
        if np.any(norm2 <= 0):
            raise FoliationError("Psi-slice is not spacelike")
        norm = np.sqrt(norm2)
        n = v / norm
        nhat = -np.einsum("j...,ja...->a...", coef, dpsi)
        nhat[0] += 1.0
        nhat /= norm
        h = np.einsum("ijA...,A,A...->ij...", H, m, n)
        trh = np.einsum("ij...,ij...->...", gi, h)

        e_ref = _reference_frame(E, n1, d, c)
        mref = np.einsum("aA...,A,bA...->ab...", e_ref, m, e_ref)
        T = state.U
        dT = state.dU()
        Tinv = _mat_inv(T)
        e_new = np.einsum("cA...,cb...->bA...", e_ref, T)
        mbar = np.einsum("ca...,cd...,db...->ab...", T, mref, T)
        Om = np.einsum("mab...,km...->kab...", wbg, dpsi)
        W = np.einsum("ac...,kcb...->kab...", Tinv,
                      dT + np.einsum("kac...,cb...->kab...", Om, T))

        try:
            beta = d_minus_one(metric.drift, grid, metric)
            N, dpsi0 = self._lapse(metric, trh, nhat, beta, dpsi, None)
            src = None
            Ft_perp = None
            if with_sources and self.initial_sources is not None and state.time > 0:
                for _ in range(self.source_iterations):
                    src = self._sources(state, E, Z, H, dpsi, dpsi0, e_new, mbar, metric)
                    N, dpsi0 = self._lapse(metric, trh, nhat, beta, dpsi, src.F_natural_tilde)
                Ft_perp = src.F_perp_tilde
            div = metric.divergence(W)
            if Ft_perp is not None:
                S = np.einsum("ac...,cb...->ab...", Ft_perp, mbar)
                div = div - S
            omega0 = -d_minus_one(div, grid, metric)
        except SmallnessError as exc:
            raise FlowError(str(exc), state) from exc
        Om0 = np.einsum("mab...,m...->ab...", wbg, dpsi0)
        dU0 = np.einsum("ac...,cb...->ab...", T, omega0) - np.einsum("ac...,cb...->ab...", Om0, T)
        return SliceGauge(N, beta, nhat, dpsi0, omega0, dU0, e_new, mbar, gbar, src)

    def _lapse(self, metric, trh, nhat, beta, dpsi, Ft_natural, tol=1e-14, max_iter=50):
        grid = self.grid
        d = grid.dim
        if Ft_natural is None:
            N = 1.0 + d_minus_one(trh, grid, metric)
        else:
            gF = np.einsum("ij...,ij...->...", metric.inv, Ft_natural[-d:, -d:])
            N = np.ones(grid.shape)
            for _ in range(max_iter):
                new = 1.0 + d_minus_one(trh + gF / N, grid, metric)
                step = float(np.max(np.abs(new - N)))
                N = new
                if step < tol:
                    break
        dpsi0 = N * nhat + np.einsum("k...,ka...->a...", beta, dpsi)
        return N, dpsi0

    def _sources(self, state, E, Z, H, dpsi, dpsi0, e_new, mbar, metric):
        """F-natural (slice block) and F-perp of the transformed data, with tildes."""
        grid = self.grid
        d = grid.dim
        n1 = E.shape[1]
        m = np.diag(minkowski(n1))
        mbar_inv = _mat_inv(mbar)
        X0 = np.einsum("aA...,a...->A...", E, dpsi0)
        dX0 = grid.grad(X0)  # [l, A]

        def normal_part(X, lead):
            # X has `lead` leading tangent indices followed by the target index
            letters = "ijk"[:lead]
            p = np.einsum(f"{letters}A...,A,bA...->{letters}b...", X, m, e_new)
            return np.einsum(f"ab...,{letters}b...->a{letters}...", mbar_inv, p)

        kij = normal_part(H, 2)  # [a, i, j]
        k0l = normal_part(dX0, 1)  # [a, l]
        c = mbar.shape[0]
        k = np.zeros((c, d + 1, d + 1) + grid.shape)
        k[:, 1:, 1:] = kij
        k[:, 0, 1:] = k0l
        k[:, 1:, 0] = k0l
        cols = np.concatenate([X0[None], Z], axis=0)
        g = np.einsum("aA...,A,bA...->ab...", cols, m, cols)
        ginv = _mat_inv(g)
        Fn = natural_source(mbar, k, grid, spatial_only=True).value
        Fp = perp_source(ginv, metric.inv, k, grid).value
        init = self.initial_sources
        t = state.time
        Fn_t = Fn - extend(init["F_natural"], t, grid)
        Fp_t = Fp - extend(init["F_perp"], t, grid)
        return GaugeSource(t, Fn, Fn_t, Fp, Fp_t, dict(init))

    def set_initial_sources(self, state):
        """Record the sources of the transformed data on the initial flow slice."""
        self.initial_sources = None
        sg = self.slice_gauge(state, with_sources=False)
        grid = self.grid
        E = self.sampler.sample(state.psi, ("E",))["E"]
        dpsi = state.dpsi()
        Z = np.einsum("aA...,ka...->kA...", E, dpsi)
        H = grid.grad(Z)
        H = 0.5 * (H + np.swapaxes(H, 0, 1))
        metric = SliceMetric(grid, sg.gbar)
        zero = {"F_natural": np.zeros((grid.dim, grid.dim) + grid.shape),
                "F_perp": np.zeros((self.codim, self.codim) + grid.shape)}
        self.initial_sources = zero
        src = self._sources(GaugeFlowState(grid, 0.0, state.Phi, state.V, state.M),
                            E, Z, H, dpsi, sg.dpsi0, sg.frame, sg.mbar, metric)
        self.initial_sources = {"F_natural": src.F_natural, "F_perp": src.F_perp}
        return self.initial_sources

    # right-hand side --------------------------------------------------------
    def rates(self, state: GaugeFlowState):
        """G_Phi, G_V and dM/dt for d_t u + |D| u = G."""
        grid = self.grid
        sg = self.slice_gauge(state)
        jap = fractional_symbol(grid, "japanese", 1.0)
        dpsi0 = sg.dpsi0.copy()
        dpsi0[0] -= 1.0
        absd = grid.xi_norm
        G_phi = grid.fft(dpsi0) * jap + absd * grid.fft(state.Phi)
        dU0_hat = grid.fft(sg.dU0)
        dM = dU0_hat[(...,) + (0,) * grid.dim].real
        G_V = self._v_symbol * dU0_hat + absd * grid.fft(state.V)
        return G_phi, G_V, dM, sg


def _lam_vector(state):
    g = state.grid
    lam_phi = np.broadcast_to(g.xi_norm, state.Phi.shape).ravel()
    lam_v = np.broadcast_to(g.xi_norm, state.V.shape).ravel()
    return np.concatenate([lam_phi, lam_v, np.zeros(state.M.size)])


def run_gauge_flow(sampler: BackgroundSampler, t_flow, dt, store_every=1, state=None,
                   source_iterations=1, checkpoint=None):
    """Integrate the flow from Phi = V = M = 0 (or ``state``) to ``t_flow``.

    Returns the stored GaugeFlowState list.  ``checkpoint(state)`` is called
    on every stored state.
    """
    grid = sampler.grid
    flow = GaugeFlow(sampler, source_iterations)
    start = GaugeFlowState.initial(grid, sampler.codim, 0.0)
    flow.set_initial_sources(start)
    state = start if state is None else state
    n_steps = int(round((t_flow - state.time) / dt))
    if n_steps < 0 or abs(state.time + n_steps * dt - t_flow) > 1e-9 * max(1.0, t_flow):
        raise ValueError("t_flow - time must be a multiple of dt")
    integrator = ETDRK4(_lam_vector(state), dt)
    template = state

    def G(t, vec):
        st = template.unpack(vec, t)
        gp, gv, dm, sg = flow.rates(st)
        G.last = sg
        return np.concatenate([gp.ravel(), gv.ravel(), dm.astype(complex).ravel()])

    stored = [state]
    if checkpoint is not None:
        checkpoint(state)
    vec = state.pack()
    t = state.time
    for n in range(1, n_steps + 1):
        try:
            vec = integrator.step(t, vec, G)
        except (FlowError, FoliationError) as exc:
            raise FlowError(str(exc), stored[-1]) from exc
        t = state.time + n * dt
        if not np.all(np.isfinite(vec)):
            raise FlowError("non-finite values in the gauge flow", stored[-1])
        if n % store_every == 0 or n == n_steps:
            new = template.unpack(vec, t)
            stored.append(new)
            if checkpoint is not None:
                checkpoint(new)
    return stored


# ---------------------------------------------------------------------------
# the transformed solution

def transformed_slice(sampler: BackgroundSampler, state: GaugeFlowState):
    """Displacement of Y o Psi and the rotated frame on one flow slice."""
    grid = sampler.grid
    d = grid.dim
    c = sampler.codim
    n1 = d + 1 + c
    psi = state.psi
    bg = sampler.sample(psi, ("u", "E"))
    disp = bg["u"].copy()
    disp[0] += psi[0] - state.time
    disp[1:d + 1] += psi[1:] - grid.x
    e_ref = _reference_frame(bg["E"], n1, d, c)
    e_new = np.einsum("cA...,cb...->bA...", e_ref, state.U)
    return disp, e_new


def transformed_snapshots(sampler, states, dt, window=None, order=3):
    """Geometry snapshots of the transformed solution at interior flow times.

    Time jets of the displacement (order ``order`` <= 4, the frame one less)
    come from five-point stencils over the stored flow states, which must be
    equally spaced by ``dt``.
    """
    if len(states) < 5:
        raise ValueError("need at least five stored flow states")
    slices = [transformed_slice(sampler, s) for s in states]
    disp = np.stack([s[0] for s in slices])
    frames = np.stack([s[1] for s in slices])
    idx = range(2, len(states) - 2) if window is None else window
    out = []
    for i in idx:
        lo = min(max(i - 2, 0), len(states) - 5)
        center = i - lo
        jet = jet_from_slices(disp[lo:lo + 5], dt, center, order)
        ejet = jet_from_slices(frames[lo:lo + 5], dt, center, order - 1)
        imm = Immersion(sampler.grid, jet, states[i].time, sampler.codim)
        out.append(GeometrySnapshot(imm, NormalFrame(ejet)))
    return out
