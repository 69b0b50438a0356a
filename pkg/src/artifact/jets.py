"""Truncated Taylor series in time for fields on one time slice.

A jet stores d^m/dt^m of a field for m = 0..order along a leading axis.
Products follow the Leibniz rule, so time derivatives of every derived
geometric quantity come out exactly from those of the immersion.
"""
from itertools import product
from math import comb, factorial

import numpy as np


class Jet:
    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=float)

    @classmethod
    def constant(cls, value, order):
        value = np.asarray(value, dtype=float)
        data = np.zeros((order + 1,) + value.shape)
        data[0] = value
        return cls(data)

    @property
    def order(self):
        return self.data.shape[0] - 1

    @property
    def value(self):
        return self.data[0]

    @property
    def shape(self):
        return self.data.shape[1:]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.data[(slice(None),) + idx])

    def truncate(self, order):
        if order > self.order:
            raise ValueError(f"jet of order {self.order} cannot be raised to {order}")
        return Jet(self.data[: order + 1])

    def dt(self):
        if self.order == 0:
            raise ValueError("no time derivative left in this jet")
        return Jet(self.data[1:])

    def dx(self, grid, axis):
        return Jet(grid.deriv(self.data, axis))

    def apply(self, fn):
        """Apply a linear map acting on the trailing axes of each order."""
        return Jet(np.stack([fn(d) for d in self.data]))

    def _coerce(self, other):
        if isinstance(other, Jet):
            m = min(self.order, other.order)
            return self.data[: m + 1], other.data[: m + 1]
        return self.data, other

    def __add__(self, other):
        a, b = self._coerce(other)
        if not isinstance(other, Jet):
            out = a.copy()
            out[0] = out[0] + b
            return Jet(out)
        return Jet(a + b)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.data)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            raise TypeError("use jeinsum for jet products")
        return Jet(self.data * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Jet(self.data / scalar)

    def taylor(self, tau):
        """Sum_m tau^m / m! data[m]; tau broadcasts against the trailing axes."""
        out = self.data[self.order] + 0.0 * tau
        for m in range(self.order - 1, -1, -1):
            out = self.data[m] + tau / (m + 1) * out
        return out


def stack(jets, axis=0):
    order = min(j.order for j in jets)
    return Jet(np.stack([j.data[: order + 1] for j in jets], axis=axis + 1))


def _spec(spec, n_ops):
    ins, out = spec.split("->")
    terms = ins.split(",")
    if len(terms) != n_ops:
        raise ValueError("operand count does not match the subscripts")
    return ",".join(t + "..." for t in terms) + "->" + out + "..."


def jeinsum(spec, *ops):
    """Leibniz-rule einsum over jets (plain arrays count as constants).

    Component subscripts only; the spatial axes ride along as '...'.
    """
    full = _spec(spec, len(ops))
    jets = [o for o in ops if isinstance(o, Jet)]
    order = min(j.order for j in jets)
    datas = []
    for o in ops:
        if isinstance(o, Jet):
            datas.append(o.data)
        else:
            datas.append(None)
    idx = [i for i, o in enumerate(ops) if isinstance(o, Jet)]
    result = None
    for ls in product(range(order + 1), repeat=len(idx)):
        m = sum(ls)
        if m > order:
            continue
        coef = factorial(m)
        for l in ls:
            coef //= factorial(l)
        args = list(ops)
        for pos, l in zip(idx, ls):
            args[pos] = datas[pos][l]
        term = np.einsum(full, *args)
        if result is None:
            result = np.zeros((order + 1,) + term.shape)
        result[m] += coef * term
    return Jet(result)


def reciprocal(a):
    d = a.data
    out = np.zeros_like(d)
    out[0] = 1.0 / d[0]
    for m in range(1, a.order + 1):
        acc = sum(comb(m, l) * d[l] * out[m - l] for l in range(1, m + 1))
        out[m] = -acc * out[0]
    return Jet(out)


def sqrt(a):
    d = a.data
    out = np.zeros_like(d)
    out[0] = np.sqrt(d[0])
    for m in range(1, a.order + 1):
        acc = sum(comb(m, l) * out[l] * out[m - l] for l in range(1, m))
        out[m] = (d[m] - acc) / (2 * out[0])
    return Jet(out)


def _move(a):
    """Matrix axes to the back for batched linear algebra."""
    return np.moveaxis(np.moveaxis(a, 0, -1), 0, -1)


def _back(a):
    return np.moveaxis(np.moveaxis(a, -1, 0), -1, 0)


def inverse(a):
    """Pointwise inverse of a matrix-valued jet with shape (order+1, n, n, ...)."""
    d = a.data
    inv0 = np.linalg.inv(_move(d[0]))
    out = [_back(inv0)]
    for m in range(1, a.order + 1):
        acc = 0.0
        for l in range(1, m + 1):
            acc = acc + comb(m, l) * np.einsum("ab...,bc...->ac...", d[l], out[m - l])
        out.append(-np.einsum("ab...,bc...->ac...", out[0], acc))
    return Jet(np.stack(out))


def determinant(a):
    """Order-0 determinant of the matrix axes of a jet value."""
    return np.linalg.det(_move(a.value))


def fd_weights(offsets, derivative):
    """Finite-difference weights for the given stencil offsets (units of h)."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    mat = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[derivative] = factorial(derivative)
    return np.linalg.solve(mat, rhs)


def jet_from_slices(slices, dt, center, order):
    """Time jet at ``slices[center]`` from equally spaced stored slices."""
    slices = np.asarray(slices, dtype=float)
    offsets = np.arange(len(slices)) - center
    data = [slices[center]]
    for m in range(1, order + 1):
        w = fd_weights(offsets, m)
        data.append(np.tensordot(w, slices, axes=1) / dt**m)
    return Jet(np.stack(data))
