"""Fourier machinery on the periodic torus [0, 2pi)^d.

Arrays carry their spatial axes last; any number of leading component
axes is allowed and every operator acts on all of them at once.
Coefficients are normalised so that f(x) = sum_xi fhat(xi) exp(i xi.x).
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import expit


class SpectralRangeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# smooth cutoffs

def _transition(u, derivative=0):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, logistic in between."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0) & (u < 1)
    if derivative == 0:
        out[u >= 1] = 1.0
    v = u[inside]
    w = 1.0 / v - 1.0 / (1.0 - v)
    s = expit(-w)
    if derivative == 0:
        out[inside] = s
        return out
    dw = -1.0 / v**2 - 1.0 / (1.0 - v) ** 2
    ds = -s * (1 - s) * dw
    if derivative == 1:
        out[inside] = ds
        return out
    if derivative == 2:
        d2w = 2.0 / v**3 - 2.0 / (1.0 - v) ** 3
        out[inside] = -(ds * (1 - 2 * s) * dw + s * (1 - s) * d2w)
        return out
    raise ValueError("derivatives above 2 are not tabulated")


def phi_bump(z):
    """Equal to 1 for z <= 3/2 and to 0 for z >= 7/4."""
    return 1.0 - _transition((np.asarray(z, dtype=float) - 1.5) / 0.25)


def phi_tilde(s):
    """Equal to 1 on [0, 1], supported in [0, 2]."""
    return 1.0 - _transition(np.asarray(s, dtype=float) - 1.0)


def chi_tilde(s):
    """Annular profile, 1 on [1/2, 4] and supported in (1/4, 8)."""
    s = np.asarray(s, dtype=float)
    return phi_tilde(s / 4.0) - phi_tilde(4.0 * s)


def time_bump(t, derivative=0):
    """Even bump, identically 1 for |t| <= 1/2 and 0 for |t| >= 1."""
    t = np.asarray(t, dtype=float)
    u = (np.abs(t) - 0.5) / 0.5
    if derivative == 0:
        return 1.0 - _transition(u)
    sign = np.sign(t) ** derivative
    return -sign * _transition(u, derivative) * 2.0**derivative


# ---------------------------------------------------------------------------
# grid

@dataclass(frozen=True)
class TorusGrid:
    dim: int
    points_per_axis: int
    time_extent: float = 1.0
    time_steps: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = self.points_per_axis
        if n < 4 or n % 2:
            raise ValueError(f"points_per_axis must be an even integer >= 4, got {n}")
        if self.time_extent <= 0:
            raise ValueError("time_extent must be positive")

    @property
    def n(self):
        return self.points_per_axis

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def spacing(self):
        return 2 * np.pi / self.n

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    @property
    def volume(self):
        return (2 * np.pi) ** self.dim

    @property
    def dt(self):
        return self.time_extent / self.time_steps

    @property
    def axes(self):
        return tuple(range(-self.dim, 0))

    @cached_property
    def x(self):
        """Coordinates, shape (dim, N, ..., N)."""
        line = np.arange(self.n) * self.spacing
        return np.array(np.meshgrid(*([line] * self.dim), indexing="ij"))

    @cached_property
    def xi(self):
        """Integer wave vectors, shape (dim, N, ..., N); Nyquist kept as -N/2."""
        line = np.fft.fftfreq(self.n, 1.0 / self.n)
        return np.array(np.meshgrid(*([line] * self.dim), indexing="ij"))

    @cached_property
    def xi_odd(self):
        """Wave vectors with the Nyquist entry zeroed, for odd symbols."""
        k = self.xi.copy()
        k[np.abs(k) == self.n // 2] = 0.0
        return k

    @cached_property
    def xi_norm(self):
        return np.sqrt(np.sum(self.xi**2, axis=0))

    @cached_property
    def xi_norm_safe(self):
        norm = self.xi_norm.copy()
        norm[norm == 0] = 1.0
        return norm

    @cached_property
    def dealias_mask(self):
        keep = np.abs(self.xi) < self.n / 3.0
        return np.all(keep, axis=0).astype(float)

    @cached_property
    def max_dyadic(self):
        """Smallest j with phi(2^-j |xi|) = 1 on the whole lattice."""
        top = float(self.xi_norm.max())
        j = 0
        while 1.5 * 2**j < top:
            j += 1
        return j

    # transforms -------------------------------------------------------
    def fft(self, f):
        return np.fft.fftn(f, axes=self.axes) / self.n**self.dim

    def ifft(self, fhat):
        return np.fft.ifftn(fhat, axes=self.axes) * self.n**self.dim

    def to_real(self, fhat):
        return self.ifft(fhat).real

    def apply_symbol(self, f, symbol):
        """Multiply the coefficients of a real field by a symbol; real output."""
        return self.to_real(self.fft(f) * symbol)

    def deriv(self, f, axis, order=1):
        sym = (1j * self.xi_odd[axis]) ** order if order % 2 else (1j * self.xi[axis]) ** order
        return self.apply_symbol(f, sym)

    def grad(self, f):
        """Spatial gradient with a new leading axis of length dim."""
        fh = self.fft(f)
        return np.stack([self.to_real(fh * 1j * self.xi_odd[i]) for i in range(self.dim)])

    def hessian(self, f):
        fh = self.fft(f)
        out = np.empty((self.dim, self.dim) + np.shape(f))
        for i in range(self.dim):
            for j in range(i, self.dim):
                if i == j:
                    sym = -self.xi[i] ** 2
                else:
                    sym = -self.xi_odd[i] * self.xi_odd[j]
                out[i, j] = self.to_real(fh * sym)
                out[j, i] = out[i, j]
        return out

    def dealias(self, f):
        return self.apply_symbol(f, self.dealias_mask)

    def mean(self, f):
        return np.mean(f, axis=self.axes)

    def integrate(self, f):
        return np.sum(f, axis=self.axes) * self.cell_volume

    def laplacian(self, f):
        return self.apply_symbol(f, -self.xi_norm**2)

    def inverse_laplacian(self, f):
        """Mean-free solution of Delta u = f - mean(f)."""
        sym = -1.0 / self.xi_norm_safe**2
        sym = np.where(self.xi_norm == 0, 0.0, sym)
        return self.apply_symbol(f, sym)

    def interpolate(self, f, points):
        """Evaluate the trigonometric interpolant at arbitrary points.

        ``points`` has shape (dim, M); the result has the leading shape of
        ``f`` followed by M.  Nyquist modes are evaluated as cosines so that
        real fields stay real off the grid.
        """
        return self.interpolate_coefficients(self.fft(f), points)

    def interpolate_coefficients(self, fh, points):
        """Same as ``interpolate`` for precomputed coefficients."""
        lead = fh.shape[: fh.ndim - self.dim]
        coeffs = fh.reshape((-1,) + self.shape)
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        nyq = np.abs(k) == self.n // 2
        bases = []
        for i in range(self.dim):
            e = np.exp(1j * np.outer(points[i], k))
            e[:, nyq] = np.cos(self.n // 2 * points[i])[:, None]
            bases.append(e)
        n, m = self.n, points.shape[1]
        # contract the last axis with a matrix product, then the others pointwise
        tmp = coeffs.reshape(-1, n) @ bases[-1].T
        tmp = tmp.reshape(coeffs.shape[:-1] + (m,))
        for i in range(self.dim - 2, -1, -1):
            tmp = np.einsum("...ap,pa->...p", tmp, bases[i])
        return tmp.real.reshape(lead + (m,))

    def random_field(self, rng, shape=(), band=None, smooth=0.0):
        """Real random field with modes |xi_i| < band (default: 2/3 rule)."""
        band = self.n / 3.0 if band is None else band
        raw = rng.standard_normal(tuple(shape) + self.shape)
        mask = np.all(np.abs(self.xi) < band, axis=0)
        weight = mask / (1.0 + self.xi_norm**2) ** (smooth / 2)
        return self.apply_symbol(raw, weight)


# ---------------------------------------------------------------------------
# field wrapper

@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: TorusGrid
    values: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape[self.values.ndim - self.grid.dim:] != self.grid.shape:
            raise ValueError("trailing axes do not match the grid")

    @cached_property
    def coefficients(self):
        return self.grid.fft(self.values)

    @property
    def rank(self):
        return self.values.ndim - self.grid.dim

    @classmethod
    def from_coefficients(cls, grid, coefficients, labels=()):
        return cls(grid, grid.to_real(coefficients), labels)

    def _wrap(self, values):
        return SpectralField(self.grid, values, self.labels)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __rsub__(self, other):
        return self._wrap(_vals(other) - self.values)

    def __neg__(self):
        return self._wrap(-self.values)

    def __mul__(self, other):
        if np.isscalar(other):
            return self._wrap(self.values * other)
        return self._wrap(self.grid.dealias(self.values * _vals(other)))

    __rmul__ = __mul__

    def derivative(self, axis, order=1):
        return self._wrap(self.grid.deriv(self.values, axis, order))

    def norm_l2(self):
        return float(np.sqrt(self.grid.integrate(self.values**2)))


def _vals(obj):
    return obj.values if isinstance(obj, SpectralField) else obj


def _unwrap(f, grid=None):
    if isinstance(f, SpectralField):
        return f.grid, f.values, True
    if grid is None:
        raise TypeError("a grid is required for raw arrays")
    return grid, np.asarray(f, dtype=float), False


def _rewrap(grid, values, wrapped, labels=()):
    return SpectralField(grid, values, labels) if wrapped else values


# ---------------------------------------------------------------------------
# multipliers

class MultiplierBank:
    """Tabulated Littlewood-Paley profiles and related symbols for one grid."""

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.jmax = grid.max_dyadic
        r = grid.xi_norm
        self.phi = [phi_bump(r / 2.0**j) for j in range(self.jmax + 2)]
        self.chi_profiles = [self.phi[0]] + [
            self.phi[j] - self.phi[j - 1] for j in range(1, self.jmax + 1)
        ]

    def check_index(self, j):
        if not 0 <= j <= self.jmax:
            raise SpectralRangeError(f"dyadic index {j} outside [0, {self.jmax}]")

    def chi(self, j):
        if j < 0 or j > self.jmax:
            return np.zeros(self.grid.shape)
        return self.chi_profiles[j]

    def chi_low(self, j):
        """Symbol of P_{<=j}."""
        if j < 0:
            return np.zeros(self.grid.shape)
        return self.phi[min(j, self.jmax)]

    def riesz_symbol(self, i, j):
        g = self.grid
        ct = chi_tilde(g.xi_norm / 2.0**j)
        return np.where(g.xi_norm == 0, 0.0, -1j * g.xi_odd[i] / g.xi_norm_safe**2 * ct)


_BANKS = {}


def bank(grid):
    key = (grid.dim, grid.n)
    if key not in _BANKS:
        _BANKS[key] = MultiplierBank(grid)
    return _BANKS[key]


def lp_project(f, j, grid=None, low=False):
    """P_j f, or P_{<=j} f when ``low`` is set."""
    grid, v, wrapped = _unwrap(f, grid)
    b = bank(grid)
    b.check_index(j)
    sym = b.chi_low(j) if low else b.chi(j)
    return _rewrap(grid, grid.apply_symbol(v, sym), wrapped)


def lp_blocks(f, grid=None):
    """All dyadic blocks P_0 f, ..., P_jmax f stacked on a new leading axis."""
    grid, v, _ = _unwrap(f, grid)
    b = bank(grid)
    fh = grid.fft(v)
    return np.stack([grid.to_real(fh * b.chi(j)) for j in range(b.jmax + 1)])


FRACTIONAL_KINDS = ("absD", "japanese", "absD_inverse_meanfree", "dj_over_absD")


def fractional_symbol(grid, kind, power=1.0, axis=None):
    r = grid.xi_norm
    if kind == "absD":
        if power < 0:
            return np.where(r == 0, 0.0, grid.xi_norm_safe**power)
        return r**power
    if kind == "japanese":
        return (1.0 + r**2) ** (power / 2.0)
    if kind == "absD_inverse_meanfree":
        return np.where(r == 0, 0.0, grid.xi_norm_safe ** (-abs(power)))
    if kind == "dj_over_absD":
        if axis is None:
            raise ValueError("dj_over_absD needs an axis")
        return np.where(r == 0, 0.0, 1j * grid.xi_odd[axis] / grid.xi_norm_safe)
    raise ValueError(f"unknown multiplier kind {kind!r}")


def fractional_op(f, kind, power=1.0, axis=None, grid=None, atol=1e-12):
    """|D|^power, <D>^power, mean-free |D|^-power or d_j |D|^-1.

    Negative powers of ``absD`` refuse fields with a nonzero mean.
    """
    grid, v, wrapped = _unwrap(f, grid)
    if kind == "absD" and power < 0:
        scale = max(np.max(np.abs(v)), 1.0)
        if np.max(np.abs(grid.mean(v))) > atol * scale:
            raise ValueError("negative power of |D| applied to a field with nonzero mean")
    out = grid.apply_symbol(v, fractional_symbol(grid, kind, power, axis))
    return _rewrap(grid, out, wrapped)


def abs_d(v, grid, power=1.0):
    return grid.apply_symbol(v, fractional_symbol(grid, "absD", power))


def japanese(v, grid, power=1.0):
    return grid.apply_symbol(v, fractional_symbol(grid, "japanese", power))


def riesz_T(f, i, j=None, grid=None):
    """Localised inverse divergence; ``j=None`` gives the summed operator."""
    grid, v, wrapped = _unwrap(f, grid)
    b = bank(grid)
    if j is None:
        sym = sum(b.riesz_symbol(i, jj) for jj in range(b.jmax + 1))
    else:
        b.check_index(j)
        sym = b.riesz_symbol(i, j)
    return _rewrap(grid, grid.apply_symbol(v, sym), wrapped)


def lhh_project(h, f1, f2, grid=None, symmetric=True, dealias=True):
    """Low-high-high trilinear projector.

    Sums (P_j h)(P_j' f1)(P_j'' f2) over j' > j - 2 and |j'' - j'| <= 2.
    With ``symmetric`` the result is averaged over the two high slots.
    """
    grid, hv, wrapped = _unwrap(h, grid)
    f1v = _unwrap(f1, grid)[1]
    f2v = _unwrap(f2, grid)[1]
    out = _lhh_raw(grid, hv, f1v, f2v)
    if symmetric:
        out = 0.5 * (out + _lhh_raw(grid, hv, f2v, f1v))
    if dealias:
        out = grid.dealias(out)
    return _rewrap(grid, out, wrapped)


def _lhh_raw(grid, h, f1, f2):
    b = bank(grid)
    hh, f1h, f2h = grid.fft(h), grid.fft(f1), grid.fft(f2)
    out = 0.0
    for jp in range(b.jmax + 1):
        low = grid.to_real(hh * b.chi_low(jp + 1))
        high1 = grid.to_real(f1h * b.chi(jp))
        window = sum(b.chi(jpp) for jpp in range(jp - 2, jp + 3))
        high2 = grid.to_real(f2h * window)
        out = out + low * high1 * high2
    return out * np.ones(np.broadcast_shapes(np.shape(h), np.shape(f1), np.shape(f2)))


def extend(h, t, grid=None, derivative=0):
    """Time extension sum_j Psi(2^j t) P_j h, or its time derivatives.

    ``t`` may be a scalar or 1-d array; an array adds a leading time axis.
    """
    grid, v, wrapped = _unwrap(h, grid)
    b = bank(grid)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    hh = grid.fft(v)
    blocks = [grid.to_real(hh * b.chi(j)) for j in range(b.jmax + 1)]
    out = np.zeros((len(ts),) + v.shape)
    for j, blk in enumerate(blocks):
        w = time_bump(2.0**j * ts, derivative) * 2.0 ** (j * derivative)
        out += w.reshape((-1,) + (1,) * v.ndim) * blk
    if np.ndim(t) == 0:
        out = out[0]
    return _rewrap(grid, out, wrapped) if np.ndim(t) == 0 else out


def hl_decompose(f, g, j, grid=None):
    """Paraproduct pieces (HL_j, LH_j, HH_j) of P_j(f g).

    LH_j also carries the single block pair (j-2, j+1), which is needed for
    the three pieces to add up to P_j(f g) exactly.
    """
    grid, fv, wrapped = _unwrap(f, grid)
    gv = _unwrap(g, grid)[1]
    b = bank(grid)
    b.check_index(j)
    fb = lp_blocks(fv, grid)
    gb = lp_blocks(gv, grid)
    J = b.jmax

    def blk(arr, i):
        return arr[i] if 0 <= i <= J else 0.0

    def low(arr, i):
        return arr[: max(min(i, J) + 1, 0)].sum(axis=0) if i >= 0 else 0.0

    hl = sum(blk(fb, jp) * low(gb, jp + 2) for jp in range(j - 2, j + 3))
    window = sum(blk(gb, jpp) for jpp in range(j - 2, j + 3))
    lh = low(fb, j - 3) * window
    lh = lh + blk(fb, j - 2) * (blk(gb, j + 1) + blk(gb, j + 2))
    hh = sum(blk(fb, jp) * sum(blk(gb, jp + l) for l in range(-2, 3)) for jp in range(j + 3, J + 1))
    parts = []
    for piece in (hl, lh, hh):
        piece = np.zeros(grid.shape) + piece
        parts.append(_rewrap(grid, grid.apply_symbol(piece, b.chi(j)), wrapped))
    return tuple(parts)
