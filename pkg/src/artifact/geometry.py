"""Extrinsic geometry of immersions of [0,T] x T^d into Minkowski space.

Index layout (component axes come before the spatial axes):

* immersion displacement ``U[A]`` with Y = Y_flat + U, Y_flat = (t, x, 0)
* tangent vectors ``dY[alpha, A]``, second derivatives ``ddY[alpha, beta, A]``
* metric ``g[alpha, beta]``, Christoffel ``Gamma[gamma, alpha, beta]`` (upper first)
* normal frame ``e[a, A]``, second fundamental form ``k[a, alpha, beta]``
* connection ``omega[alpha, a, b]`` for omega^a_{alpha b}
* curvature ``R[alpha, beta, gamma, delta]`` and ``Rperp[alpha, beta, a, b]``
  with both normal indices up.

Every quantity is a :class:`~artifact.jets.Jet`, so time derivatives are
carried along exactly from those of the immersion.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import jets as J
from .jets import Jet, jeinsum


class GeometryError(RuntimeError):
    pass


class DegenerateSurfaceError(GeometryError):
    pass


class FrameError(GeometryError):
    pass


class FoliationError(GeometryError):
    pass


class StencilError(GeometryError):
    pass


def minkowski(n1):
    m = np.eye(n1)
    m[0, 0] = -1.0
    return m


def flat_tangent(dim, n1):
    """delta^A_alpha: the tangent vectors of the flat immersion."""
    out = np.zeros((dim + 1, n1))
    out[np.arange(dim + 1), np.arange(dim + 1)] = 1.0
    return out


def _perm(q, spec):
    """Permute component axes of a jet (or jet data): spec like 'abc->bac'."""
    data = q.data if isinstance(q, Jet) else q
    src, dst = spec.split("->")
    return np.einsum(f"z{src}...->z{dst}...", data)


def spacetime_partial(q: Jet, grid):
    """All first partials d_alpha q on a new leading axis (order drops by 1)."""
    parts = [q.dt()] + [q.dx(grid, i).truncate(q.order - 1) for i in range(grid.dim)]
    return J.stack(parts)


# ---------------------------------------------------------------------------
# immersion and frames

@dataclass
class Immersion:
    """One time slice of an immersion, stored as a jet of its displacement."""

    grid: object
    displacement: Jet
    time: float = 0.0
    codim: int = 1

    def __post_init__(self):
        n1 = self.displacement.shape[0]
        if n1 != self.grid.dim + 1 + self.codim:
            raise ValueError(
                f"{n1} target components do not match dim={self.grid.dim}, codim={self.codim}")

    @classmethod
    def from_arrays(cls, grid, Y, dY0, time=0.0, codim=None, extra=()):
        """Build from the full map Y (with Y^0 = t, Y^i = x^i + periodic) and d_0 Y."""
        n1 = Y.shape[0]
        codim = n1 - grid.dim - 1 if codim is None else codim
        flat = flat_values(grid, n1, time)
        U = np.asarray(Y) - flat
        U1 = np.asarray(dY0) - flat_velocity(grid, n1)
        data = [U, U1] + [np.asarray(x) for x in extra]
        return cls(grid, Jet(np.stack(data)), time, codim)

    @classmethod
    def flat(cls, grid, codim=1, order=4, time=0.0):
        n1 = grid.dim + 1 + codim
        return cls(grid, Jet(np.zeros((order + 1, n1) + grid.shape)), time, codim)

    @property
    def target_dim(self):
        return self.displacement.shape[0]

    @property
    def order(self):
        return self.displacement.order

    @property
    def metric(self):
        return minkowski(self.target_dim)

    @property
    def Y(self):
        return flat_values(self.grid, self.target_dim, self.time) + self.displacement.value

    @property
    def dY0(self):
        return flat_velocity(self.grid, self.target_dim) + self.displacement.data[1]

    @cached_property
    def tangent(self):
        """d_alpha Y^A, order one below the displacement jet."""
        d = self.grid.dim
        base = spacetime_partial(self.displacement, self.grid)
        return base + flat_tangent(d, self.target_dim)[(...,) + (None,) * d]

    @cached_property
    def hessian(self):
        return spacetime_partial(self.tangent, self.grid)


def flat_values(grid, n1, time):
    out = np.zeros((n1,) + grid.shape)
    out[0] = time
    out[1:grid.dim + 1] = grid.x
    return out


def flat_velocity(grid, n1):
    out = np.zeros((n1,) + grid.shape)
    out[0] = 1.0
    return out


@dataclass
class NormalFrame:
    e: Jet

    @property
    def codim(self):
        return self.e.shape[0]

    def gram(self):
        n1 = self.e.shape[1]
        return jeinsum("aA,AB,bB->ab", self.e, minkowski(n1), self.e)


def frame_from_reference(imm: Immersion, order=None):
    """Normal frame obtained by removing the tangential part of the unit
    vectors along the extra target directions."""
    dY = imm.tangent
    order = dY.order if order is None else order
    dY = dY.truncate(order)
    m = imm.metric
    g = jeinsum("xA,AB,yB->xy", dY, m, dY)
    try:
        ginv = J.inverse(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSurfaceError("induced metric is singular") from exc
    d = imm.grid.dim
    n1 = imm.target_dim
    delta = np.zeros((imm.codim, n1) + imm.grid.shape)
    for a in range(imm.codim):
        delta[a, d + 1 + a] = 1.0
    # m(delta_a, d_alpha Y) is the (d+1+a) component of d_alpha Y
    mdelta = J.Jet(dY.data[:, :, d + 1:].swapaxes(1, 2))  # [a, alpha]
    proj = jeinsum("ax,xy,yA->aA", mdelta, ginv, dY)
    return NormalFrame(proj * -1.0 + delta)


# ---------------------------------------------------------------------------
# snapshot

class GeometrySnapshot:
    """Geometric quantities of one slice; everything is computed lazily."""

    def __init__(self, imm: Immersion, frame: NormalFrame = None):
        self.imm = imm
        self.grid = imm.grid
        self.frame = frame if frame is not None else frame_from_reference(imm)

    # metric ----------------------------------------------------------
    @cached_property
    def dY(self):
        return self.imm.tangent

    @cached_property
    def ddY(self):
        return self.imm.hessian

    @cached_property
    def g(self):
        g = jeinsum("xA,AB,yB->xy", self.dY, self.imm.metric, self.dY)
        return Jet(0.5 * (g.data + g.data.swapaxes(1, 2)))

    @cached_property
    def ginv(self):
        det = J.determinant(self.g)
        spatial = J._move(self.g.value[1:, 1:])
        if np.any(det >= 0) or np.any(np.linalg.eigvalsh(spatial)[..., 0] <= 0):
            raise DegenerateSurfaceError("induced metric is not Lorentzian with spacelike slices")
        return J.inverse(self.g)

    @cached_property
    def dg(self):
        """dg[kappa, alpha, beta] = d_kappa g_alpha beta."""
        return spacetime_partial(self.g, self.grid)

    @cached_property
    def christoffel_lower(self):
        """low[lam, mu, nu] = Gamma_{lam mu nu}."""
        dg = self.dg.data
        return Jet(0.5 * (_perm(dg, "mln->lmn") + _perm(dg, "nlm->lmn") - dg))

    @cached_property
    def christoffel(self):
        return jeinsum("gd,dab->gab", self.ginv, self.christoffel_lower)

    # projections -----------------------------------------------------
    @cached_property
    def basis_inverse(self):
        order = min(self.dY.order, self.frame.e.order)
        basis = J.stack([self.dY.truncate(order)[i] for i in range(self.dY.shape[0])]
                        + [self.frame.e.truncate(order)[a] for a in range(self.frame.codim)])
        try:
            return J.inverse(basis)
        except np.linalg.LinAlgError as exc:
            raise FrameError("tangent vectors and frame do not span the target") from exc

    @cached_property
    def Pi(self):
        """Pi[beta, A]: tangential coefficients."""
        d1 = self.grid.dim + 1
        inv = self.basis_inverse.data
        return Jet(inv[:, :, :d1].swapaxes(1, 2))

    @cached_property
    def Pi_perp(self):
        d1 = self.grid.dim + 1
        inv = self.basis_inverse.data
        return Jet(inv[:, :, d1:].swapaxes(1, 2))

    @cached_property
    def mbar(self):
        return self.frame.gram()

    @cached_property
    def mbar_inv(self):
        return J.inverse(self.mbar)

    @cached_property
    def k(self):
        k = jeinsum("aB,xyB->axy", self.Pi_perp, self.ddY)
        return Jet(0.5 * (k.data + k.data.swapaxes(2, 3)))

    @cached_property
    def christoffel_projected(self):
        return jeinsum("gB,xyB->gxy", self.Pi, self.ddY)

    @cached_property
    def de(self):
        return spacetime_partial(self.frame.e, self.grid)

    @cached_property
    def omega(self):
        return jeinsum("aB,xbB->xab", self.Pi_perp, self.de)

    # curvature ----------------------------------------------------------
    @cached_property
    def riemann_from_christoffel(self):
        low = self.christoffel_lower
        dlow = spacetime_partial(low, self.grid).data  # [a, g, b, d] = d_a Gamma_gbd
        lin = _perm(dlow, "agbd->abgd") - _perm(dlow, "bgad->abgd")
        quad = jeinsum("lag,lbd->abgd", low, self.christoffel).data[: lin.shape[0]]
        return Jet(lin - quad + _perm(quad, "bagd->abgd"))

    @cached_property
    def riemann_from_gauss(self):
        kk = jeinsum("ab,axg,byd->xygd", self.mbar, self.k, self.k)
        return Jet(kk.data - _perm(kk, "xydg->xygd"))

    @cached_property
    def rperp_from_omega(self):
        w = self.omega
        dw = spacetime_partial(w, self.grid).data  # [a, b, A, B] = d_a omega_b^A_B
        lin = dw - _perm(dw, "yxab->xyab")
        ww = jeinsum("xac,ycb->xyab", w, w).data[: lin.shape[0]]
        mixed = Jet(lin + ww - _perm(ww, "yxab->xyab"))
        return jeinsum("xyac,cb->xyab", mixed, self.mbar_inv)

    @cached_property
    def rperp_from_ricci(self):
        # sign fixed so that it agrees with the commutator definition via omega
        kk = jeinsum("gd,axg,byd->xyab", self.ginv, self.k, self.k)
        return Jet(kk.data - _perm(kk, "xyba->xyab"))

    # covariant derivatives -------------------------------------------------
    def cov_k(self, k=None):
        """nabla_alpha k^a_beta gamma as [alpha, a, beta, gamma]."""
        k = self.k if k is None else k
        dk = spacetime_partial(k, self.grid)
        G = self.christoffel
        w = self.omega
        out = dk - jeinsum("lxb,alg->xabg", G, k) - jeinsum("lxg,abl->xabg", G, k) \
            + jeinsum("xac,cbg->xabg", w, k)
        return out

    @cached_property
    def codazzi(self):
        """nabla_x k^a_bg - nabla_b k^a_xg as [x, a, b, g]."""
        ck = self.cov_k().data
        return Jet(ck - _perm(ck, "baxg->xabg"))

    @cached_property
    def trace_k(self):
        return jeinsum("xy,axy->a", self.ginv, self.k)


def _max(x):
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def curvature_two_ways(snap: GeometrySnapshot):
    a = snap.riemann_from_christoffel.value
    b = snap.riemann_from_gauss.value
    return a, b, _max(a - b)


def normal_curvature_two_ways(snap: GeometrySnapshot):
    """Returns (from_omega, from_ricci, residual, available)."""
    if snap.frame.codim < 2:
        z = np.zeros(snap.rperp_from_ricci.value.shape)
        return z, z, 0.0, False
    a = snap.rperp_from_omega.value
    b = snap.rperp_from_ricci.value
    return a, b, _max(a - b), True


def codazzi_residual(snap: GeometrySnapshot):
    res = snap.codazzi.value
    return _max(res), res


def second_fundamental_form(imm, frame=None):
    snap = GeometrySnapshot(imm, frame)
    return snap.k.value, snap.christoffel_projected.value


def induced_metric(imm):
    snap = GeometrySnapshot(imm)
    return snap.g.value, snap.ginv.value


def minimality_residual(snap: GeometrySnapshot):
    tr = snap.trace_k.value
    vol = snap.grid.cell_volume
    return {
        "trace": tr,
        "max": _max(tr),
        "l2": float(np.sqrt(np.sum(tr**2) * vol)),
    }


def solve_k00(snap: GeometrySnapshot):
    """k_00 re-expressed through the minimal surface equation."""
    gi = snap.ginv.value
    k = snap.k.value
    d1 = snap.grid.dim + 1
    rest = 2 * np.einsum("i...,ai...->a...", gi[0, 1:d1], k[:, 0, 1:d1]) \
        + np.einsum("ij...,aij...->a...", gi[1:d1, 1:d1], k[:, 1:d1, 1:d1])
    return -rest / gi[0, 0]


def frame_transport_residual(snap: GeometrySnapshot):
    """d_beta e_a minus the frame-derivative relation in terms of omega and k."""
    de = snap.de.value  # [beta, a, A]
    w = snap.omega.value
    e = snap.frame.e.value
    rhs = np.einsum("xba...,bA...->xaA...", w, e) - np.einsum(
        "gd...,ab...,bxg...,dA...->xaA...", snap.ginv.value, snap.mbar.value, snap.k.value, snap.dY.value)
    return _max(de - rhs)


def analytic_immersion(grid, codim=1, amplitude=0.1, seed=0, order=4, time=0.0, modes=2):
    """Smooth, non band-limited test immersion with exact time jets.

    Each displacement component is a sum of terms
    a * exp(s cos(x_j)) sin(k.x + p) cos(w t + q).
    """
    rng = np.random.default_rng(seed)
    d = grid.dim
    n1 = d + 1 + codim
    x = grid.x
    data = np.zeros((order + 1, n1) + grid.shape)
    for A in range(n1):
        scale = amplitude if A > d else 0.3 * amplitude
        for _ in range(modes):
            kvec = rng.integers(-2, 3, size=d)
            if not kvec.any():
                kvec[0] = 1
            phase, tphase = rng.uniform(0, 2 * np.pi, size=2)
            freq = rng.uniform(0.5, 1.5)
            axis = rng.integers(d)
            s = rng.uniform(0.2, 0.5)
            spatial = np.exp(s * np.cos(x[axis])) * np.sin(
                np.tensordot(kvec, x, axes=1) + phase)
            spatial /= np.exp(s)
            amp = scale * rng.uniform(0.5, 1.0) / modes
            for m in range(order + 1):
                data[m, A] += amp * freq**m * np.cos(freq * time + tphase + m * np.pi / 2) * spatial
    return Immersion(grid, Jet(data), time, codim)


# ---------------------------------------------------------------------------
# spatial tensors on a slice (plain arrays, component axes first)

def spatial_grad(T, grid):
    return np.stack([grid.deriv(T, i) for i in range(grid.dim)])


def spatial_christoffel(gbar, grid):
    """(gbar_inv, Gamma_low[k,i,j], Gamma[k,i,j]) of a Riemannian slice metric."""
    inv = J._back(np.linalg.inv(J._move(gbar)))
    dg = spatial_grad(gbar, grid)
    low = 0.5 * (np.einsum("ikj...->kij...", dg) + np.einsum("jki...->kij...", dg) - dg)
    return inv, low, np.einsum("kl...,lij...->kij...", inv, low)


def spatial_riemann(gbar, grid):
    """Rbar_ijkl with the same index convention as the spacetime tensor."""
    _, low, up = spatial_christoffel(gbar, grid)
    dlow = spatial_grad(low, grid)  # [a, g, b, d]
    lin = np.einsum("agbd...->abgd...", dlow) - np.einsum("bgad...->abgd...", dlow)
    quad = np.einsum("lag...,lbd...->abgd...", low, up)
    return lin - quad + np.einsum("bagd...->abgd...", quad)


def covariant(T, kinds, gamma, grid):
    """nabla_m T for a tensor whose component axes have kinds 'u' (up) or 'd' (down)."""
    out = spatial_grad(T, grid)
    letters = "abcdefgh"[: len(kinds)]
    for pos, kind in enumerate(kinds):
        src = letters[:pos] + "z" + letters[pos + 1:]
        dst = "m" + letters
        if kind == "u":
            out = out + np.einsum(f"{letters[pos]}mz...,{src}...->{dst}...", gamma, T)
        else:
            out = out - np.einsum(f"zm{letters[pos]}...,{src}...->{dst}...", gamma, T)
    return out


@dataclass
class Foliation31:
    grid: object
    lapse: np.ndarray
    shift: np.ndarray
    gbar: np.ndarray
    gbar_inv: np.ndarray
    h: np.ndarray
    normal: np.ndarray
    gamma_bar: np.ndarray
    riemann_bar: np.ndarray
    riemann: np.ndarray = None
    time: float = 0.0
    jets: dict = field(default_factory=dict)

    def metric(self):
        """Reassemble g from (N, beta, gbar)."""
        d = self.grid.dim
        beta_low = np.einsum("ij...,j...->i...", self.gbar, self.shift)
        g = np.zeros((d + 1, d + 1) + self.lapse.shape)
        g[0, 0] = -self.lapse**2 + np.einsum("i...,i...->...", beta_low, self.shift)
        g[0, 1:] = beta_low
        g[1:, 0] = beta_low
        g[1:, 1:] = self.gbar
        return g

    def inverse_metric(self):
        d = self.grid.dim
        n2 = self.lapse**-2
        gi = np.zeros((d + 1, d + 1) + self.lapse.shape)
        gi[0, 0] = -n2
        gi[0, 1:] = n2 * self.shift
        gi[1:, 0] = n2 * self.shift
        gi[1:, 1:] = self.gbar_inv - n2 * np.einsum("i...,j...->ij...", self.shift, self.shift)
        return gi

    @property
    def shift_low(self):
        return np.einsum("ij...,j...->i...", self.gbar, self.shift)

    def mean_curvature(self):
        return np.einsum("ij...,ij...->...", self.gbar_inv, self.h)


def _lapse_shift(g: Jet):
    gbar = g[1:, 1:]
    ginv = J.inverse(gbar)
    shift = jeinsum("ij,j->i", ginv, J.Jet(g.data[:, 0, 1:]))
    n2 = jeinsum("i,i->", J.Jet(g.data[:, 0, 1:]), shift) - J.Jet(g.data[:, 0, 0])
    return gbar, ginv, shift, n2


def decompose_31(snap: GeometrySnapshot):
    grid = snap.grid
    gbar, ginv, shift, n2 = _lapse_shift(snap.g)
    if np.any(np.linalg.eigvalsh(J._move(gbar.value))[..., 0] <= 0) or np.any(n2.value <= 0):
        raise FoliationError("time slices are not spacelike")
    lapse = J.sqrt(n2)
    # h_ij = -N Gamma^0_ij
    gam0 = J.Jet(snap.christoffel.data[:, 0, 1:, 1:])
    order = min(lapse.order, gam0.order)
    h = jeinsum(",ij->ij", lapse.truncate(order), gam0.truncate(order)) * -1.0
    h = Jet(0.5 * (h.data + h.data.swapaxes(1, 2)))
    N = lapse.value
    normal = np.concatenate([(1.0 / N)[None], -shift.value / N], axis=0)
    inv, _, gam = spatial_christoffel(gbar.value, grid)
    R = snap.riemann_from_gauss.value
    return Foliation31(
        grid, N, shift.value, gbar.value, inv, h.value, normal, gam,
        spatial_riemann(gbar.value, grid), R, snap.imm.time,
        jets={"lapse": lapse, "shift": shift, "gbar": gbar, "h": h},
    )


def _variation_rhs(fol: Foliation31):
    grid = fol.grid
    gam = fol.gamma_bar
    N, beta, h = fol.lapse, fol.shift, fol.h
    gi = fol.gbar_inv
    beta_low = fol.shift_low
    dbeta_low = covariant(beta_low, "d", gam, grid)  # [i, j] = nabla_i beta_j
    dbeta = covariant(beta, "u", gam, grid)  # [i, k] = nabla_i beta^k
    gdot = -2 * N * h + dbeta_low + np.einsum("ij...->ji...", dbeta_low)

    hess_N = covariant(covariant(N, "", gam, grid), "d", gam, grid)
    h_mixed = np.einsum("kl...,lj...->kj...", gi, h)  # h^k_j
    hh = np.einsum("ik...,kj...->ij...", h, h_mixed)
    d1 = grid.dim + 1
    R = fol.riemann
    Rnn = np.einsum("iajb...,a...,b...->ij...", R[1:d1, :, 1:d1, :], fol.normal, fol.normal)
    dh = covariant(h, "dd", gam, grid)
    # curvature term sign follows from the Riemann convention used here
    hdot = (-hess_N - N * hh + N * Rnn
            + np.einsum("kj...,ik...->ij...", h, dbeta)
            + np.einsum("ki...,jk...->ij...", h, dbeta)
            + np.einsum("k...,kij...->ij...", beta, dh))

    Nh_mixed = N * h_mixed  # [k, j] = N h^k_j
    dNh_mixed = covariant(Nh_mixed, "ud", gam, grid)  # [i, k, j]
    dNh = covariant(N * h, "dd", gam, grid)  # [l, i, j]
    up = np.einsum("kl...,lij...->kij...", gi, dNh)
    hess_beta = covariant(dbeta, "du", gam, grid)  # [i, j, k] = nabla_i nabla_j beta^k
    Rb = np.einsum("kl...,imjl...,m...->kij...", gi, fol.riemann_bar, beta)
    gamdot = (-(np.einsum("ikj...->kij...", dNh_mixed) + np.einsum("jki...->kij...", dNh_mixed) - up)
              + np.einsum("ijk...->kij...", hess_beta) + Rb)
    return {"gbar": gdot, "h": hdot, "gamma_bar": gamdot}


def gauss_codazzi_31(fol: Foliation31):
    """Residuals of the slice Gauss and Codazzi relations."""
    d1 = fol.grid.dim + 1
    h = fol.h
    R = fol.riemann
    gauss = fol.riemann_bar - (np.einsum("il...,jk...->ijkl...", h, h)
                               - np.einsum("ik...,jl...->ijkl...", h, h)) - R[1:d1, 1:d1, 1:d1, 1:d1]
    dh = covariant(h, "dd", fol.gamma_bar, fol.grid)
    codazzi = dh - np.einsum("jik...->ijk...", dh) - np.einsum(
        "ijak...,a...->ijk...", R[1:d1, 1:d1, :, 1:d1], fol.normal)
    return gauss, codazzi


def variation_residuals(foliations, dt=None):
    """Residuals of the first-variation formulas for (gbar, h, Gamma_bar).

    With a list of at least five equally spaced slices, time derivatives
    at the middle slice come from the centered fourth-order stencil. A
    single foliation carrying jets uses the exact time derivatives.
    """
    if isinstance(foliations, Foliation31):
        fol = foliations
        if fol.jets.get("h") is None or fol.jets["h"].order < 1:
            raise StencilError("foliation has no time jets; pass at least five slices")
        grid = fol.grid
        gbar = fol.jets["gbar"]
        inv = J.inverse(gbar)
        dg = J.Jet(np.stack([grid.deriv(gbar.data, i) for i in range(grid.dim)], axis=1))
        low = Jet(0.5 * (np.einsum("zikj...->zkij...", dg.data)
                         + np.einsum("zjki...->zkij...", dg.data) - dg.data))
        gam = jeinsum("kl,lij->kij", inv, low)
        dot = {"gbar": gbar.data[1], "h": fol.jets["h"].data[1], "gamma_bar": gam.data[1]}
    else:
        fols = list(foliations)
        if len(fols) < 5:
            raise StencilError("need at least five slices for fourth-order differencing")
        if dt is None:
            raise StencilError("slice spacing dt is required")
        c = len(fols) // 2
        w = J.fd_weights(np.arange(5) - 2, 1)
        window = fols[c - 2:c + 3]
        dot = {key: sum(wi * getattr(f, attr) for wi, f in zip(w, window)) / dt
               for key, attr in (("gbar", "gbar"), ("h", "h"), ("gamma_bar", "gamma_bar"))}
        fol = fols[c]
    rhs = _variation_rhs(fol)
    gauss, codazzi = gauss_codazzi_31(fol)
    res = {key: dot[key] - rhs[key] for key in rhs}
    res["gauss"] = gauss
    res["codazzi"] = codazzi
    return res


def k_wave_residual(snap: GeometrySnapshot, subtract_trace=False):
    """g^{mn} nabla_m nabla_n k minus its curvature couplings, as [a, alpha, beta].

    With ``subtract_trace`` the term nabla_alpha nabla_beta (g^{mn} k_mn), which
    vanishes on minimal immersions, is also removed; the result is then an
    identity valid for any immersion.
    """
    grid = snap.grid
    G = snap.christoffel
    w = snap.omega
    ck = snap.cov_k()  # [n, a, x, y]
    dck = spacetime_partial(ck, grid)  # [m, n, a, x, y]
    o = dck.order
    G0, w0, ck0 = G.truncate(o), w.truncate(o), ck.truncate(o)
    second = (dck
              - jeinsum("lmn,laxy->mnaxy", G0, ck0)
              - jeinsum("lmx,naly->mnaxy", G0, ck0)
              - jeinsum("lmy,naxl->mnaxy", G0, ck0)
              + jeinsum("mac,ncxy->mnaxy", w0, ck0)).value
    gi = snap.ginv.value
    box = np.einsum("mn...,mnaxy...->axy...", gi, second)

    R = snap.riemann_from_gauss.value
    k = snap.k.value
    mixed = np.einsum("xyac...,cb...->xyab...", snap.rperp_from_ricci.value, snap.mbar.value)
    t1 = np.einsum("gr...,ms...,mars...,Agb...->Aab...", gi, gi, R, k)
    t2 = np.einsum("mr...,gs...,rasb...,Amg...->Aab...", gi, gi, R, k)
    t3 = np.einsum("mr...,raAB...,Bmb...->Aab...", gi, mixed, k)
    # tangential curvature terms enter with a minus sign in this Riemann convention
    res = box - (-t1 - t2 + t3)
    if subtract_trace:
        tr = snap.trace_k  # jet [A]
        dtr = spacetime_partial(tr, grid)
        # nabla_m nabla_n H^A = d_m (nabla_n H) - Gamma nabla H + omega nabla H
        dH = (dtr + jeinsum("nAc,c->nA", w.truncate(dtr.order), tr.truncate(dtr.order)))
        ddH = spacetime_partial(dH, grid)
        o = ddH.order
        hess = (ddH - jeinsum("lmn,lA->mnA", G.truncate(o), dH.truncate(o))
                + jeinsum("mAc,nc->mnA", w.truncate(o), dH.truncate(o))).value
        res = res - np.einsum("xyA...->Axy...", hess)
    return res
