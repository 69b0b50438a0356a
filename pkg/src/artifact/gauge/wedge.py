"""Frequency-localised Codazzi relation and the wedge pairing of projected
second fundamental forms."""
from dataclasses import dataclass

import numpy as np

from ..geometry import GeometrySnapshot, spacetime_partial
from ..jets import Jet
from ..spectral import bank, lp_project, riesz_T

E = np.einsum


def _localise(jet: Jet, i, j, grid):
    """T^(i)_j P_j applied slot by slot; it commutes with time derivatives."""
    return Jet(riesz_T(lp_project(jet.data, j, grid), i, j, grid))


def localiser_norm(grid, i, j):
    """Operator norm of T^(i)_j P_j on sup-norm fields: l1 mass of its kernel."""
    b = bank(grid)
    kernel = np.fft.ifftn(b.riesz_symbol(i, j) * b.chi(j))
    return float(np.sum(np.abs(kernel)))


def wedge(chi, psi):
    """(chi ^ psi)^{AB}_{abgd} = chi^B_ag psi^A_bd - chi^A_ad psi^B_bg."""
    return E("Bag...,Abd...->ABabgd...", chi, psi) - E("Aad...,Bbg...->ABabgd...", chi, psi)


def codazzi_lower_order(snap: GeometrySnapshot):
    """d_x k_bg - d_b k_xg expressed through Christoffel and connection terms."""
    k = snap.k.value
    G = snap.christoffel.value
    w = snap.omega.value
    return (E("lxg...,abl...->xabg...", G, k) - E("lbg...,axl...->xabg...", G, k)
            - E("xac...,cbg...->xabg...", w, k) + E("bac...,cxg...->xabg...", w, k))


@dataclass
class WedgeCheck:
    mismatch: float
    codazzi: float
    bound: float
    pair_sum: float

    @property
    def within_bound(self):
        return self.mismatch <= self.bound * (1 + 1e-8) + 1e-13


def wedge_divergence_check(snapshot: GeometrySnapshot, j_prime: int, J_prime: int):
    """Compare d_x(T P k_bg) - d_b(T P k_xg) with T P of the lower-order terms.

    The mismatch is T^(i)_j' P_j' of the Codazzi residual, so it is bounded by
    the multiplier norm times the raw residual.  ``pair_sum`` is the wedge
    pairing summed over the two orderings of (j', j' + J'), which cancels.
    """
    snap = snapshot
    grid = snap.grid
    if snap.k.order < 1:
        raise ValueError("k needs an order-1 time jet")
    j2 = j_prime + J_prime
    bank(grid).check_index(j_prime)
    bank(grid).check_index(j2)
    rhs_raw = codazzi_lower_order(snap)
    codazzi = float(np.max(np.abs(snap.codazzi.value)))
    mismatch = 0.0
    bound = 0.0
    for i in range(grid.dim):
        q = _localise(snap.k.truncate(1), i, j_prime, grid)
        dq = spacetime_partial(q, grid).value  # [x, a, b, g]
        lhs = dq - np.moveaxis(dq, (0, 2), (2, 0))
        rhs = riesz_T(lp_project(rhs_raw, j_prime, grid), i, j_prime, grid)
        mismatch = max(mismatch, float(np.max(np.abs(lhs - rhs))))
        bound = max(bound, localiser_norm(grid, i, j_prime) * codazzi)

    mbar = snap.mbar.value
    k = snap.k.value
    blocks = {jj: lp_project(k, jj, grid) for jj in (j_prime, j2)}
    total = 0.0
    for j1, jj2 in ((j_prime, j2), (j2, j_prime)):
        anti = wedge(blocks[j1], blocks[jj2]) - wedge(blocks[jj2], blocks[j1])
        total = total + E("AB...,ABabgd...->abgd...", mbar, anti)
    pair_sum = float(np.max(np.abs(total)))
    return WedgeCheck(mismatch, codazzi, bound, pair_sum)
