"""Elliptic operators of a Riemannian metric on the torus and their inverses.

The inverse of the Laplace-Beltrami operator is computed by a fixed-point
iteration around the flat Laplacian, which converges when the metric is
close to the identity.
"""
import numpy as np

from .spectral import abs_d, fractional_symbol

# Largest deviation |gbar - delta| (pointwise spectral norm) for which the
# iteration is run. For eigenvalues lam of gbar the flat-Laplacian splitting
# contracts with factor max|1 - 1/lam|; at 0.3 this is 0.43, while the
# counterexample gbar = (1 - 2*C0) delta gives factor 1.5.
C0 = 0.3


class SmallnessError(RuntimeError):
    """The perturbative iteration failed to contract."""


def metric_deviation(gbar):
    """max over grid points of the spectral norm of gbar - delta."""
    d = gbar.shape[0]
    mats = np.moveaxis(np.moveaxis(gbar, 0, -1), 0, -1) - np.eye(d)
    return float(np.max(np.abs(np.linalg.eigvalsh(mats))))


def contraction_bound(gbar):
    """max |1 - 1/lam| over eigenvalues of gbar: the iteration's principal factor."""
    d = gbar.shape[0]
    lam = np.linalg.eigvalsh(np.moveaxis(np.moveaxis(gbar, 0, -1), 0, -1))
    return float(np.max(np.abs(1.0 - 1.0 / lam)))


class SliceMetric:
    """Cached data of a Riemannian metric on one slice."""

    def __init__(self, grid, gbar):
        self.grid = grid
        self.gbar = np.asarray(gbar, dtype=float)
        d = grid.dim
        mats = np.moveaxis(np.moveaxis(self.gbar, 0, -1), 0, -1)
        self.inv = np.moveaxis(np.moveaxis(np.linalg.inv(mats), -1, 0), -1, 0)
        self.sqrt_det = np.sqrt(np.linalg.det(mats))
        # first-order coefficient of Delta_gbar: (1/sqrt g) d_i (sqrt g g^ij)
        flux = self.sqrt_det * self.inv
        self.drift = np.stack([
            sum(grid.deriv(flux[i, j], i) for i in range(d)) for j in range(d)
        ]) / self.sqrt_det
        self.b = np.eye(d)[(...,) + (None,) * d] - self.inv

    @classmethod
    def flat(cls, grid):
        d = grid.dim
        return cls(grid, np.broadcast_to(np.eye(d)[(...,) + (None,) * d], (d, d) + grid.shape))

    def mean(self, f):
        """Volume-weighted mean over the slice."""
        w = self.sqrt_det
        return np.sum(f * w, axis=self.grid.axes) / np.sum(w)

    def project(self, f):
        """Remove the volume-weighted mean."""
        m = self.mean(f)
        return f - np.expand_dims(m, self.grid.axes)

    def laplace_beltrami(self, u):
        g = self.grid
        hess = g.hessian(u)
        grad = g.grad(u)
        return (np.einsum("ij...,ij...->...", self.inv, hess)
                + np.einsum("j...,j...->...", self.drift, grad))

    def principal_part(self, u):
        return np.einsum("ij...,ij...->...", self.inv, self.grid.hessian(u))

    def laplacian_absd_inverse(self, f):
        """Delta_gbar |D|^{-1} f = (1/sqrt g) d_i (g^ij sqrt g d_j |D|^{-1} f)."""
        g = self.grid
        d = g.dim
        dj = [g.apply_symbol(f, fractional_symbol(g, "dj_over_absD", axis=j)) for j in range(d)]
        flux = [self.sqrt_det * sum(self.inv[i, j] * dj[j] for j in range(d)) for i in range(d)]
        return sum(g.deriv(flux[i], i) for i in range(d)) / self.sqrt_det

    def divergence(self, w):
        """gbar^ij nabla_i w_j for a one-form on the slice (extra axes ride along)."""
        g = self.grid
        d = g.dim
        gam = self.contracted_christoffel()
        return sum(self.inv[i, j] * g.deriv(w[j], i) for i in range(d) for j in range(d)) \
            - sum(gam[k] * w[k] for k in range(d))

    def contracted_christoffel(self):
        """gbar^ij Gamma^k_ij = -(1/sqrt g) d_i (sqrt g g^ik)."""
        return -self.drift


def solve_elliptic_perturbative(gbar, F, grid, operator_kind="laplace_beltrami",
                                tol=1e-12, max_iter=500, metric=None):
    """Solve L u = F with L = Delta_gbar or gbar^ij d_i d_j; mean-free u.

    For ``laplace_beltrami`` the right side is first projected to zero
    volume-weighted mean, so the solution satisfies Delta_gbar u = P F.
    Leading axes of F are solved independently.
    """
    metric = SliceMetric(grid, gbar) if metric is None else metric
    F = np.asarray(F, dtype=float)
    if operator_kind == "laplace_beltrami":
        rhs = metric.project(F)

        def correction(u):
            return np.einsum("ij...,ij...->...", metric.b, grid.hessian(u)) \
                - np.einsum("j...,j...->...", metric.drift, grid.grad(u))
    elif operator_kind == "principal_part":
        rhs = F

        def correction(u):
            return np.einsum("ij...,ij...->...", metric.b, grid.hessian(u))
    else:
        raise ValueError(f"unknown operator kind {operator_kind!r}")

    lead = F.shape[: F.ndim - grid.dim]
    if lead:
        out = np.empty_like(F)
        for idx in np.ndindex(*lead):
            out[idx] = solve_elliptic_perturbative(
                gbar, F[idx], grid, operator_kind, tol, max_iter, metric)
        return out

    u = grid.inverse_laplacian(rhs)
    prev = None
    growth = 0
    for _ in range(max_iter):
        new = grid.inverse_laplacian(rhs + correction(u))
        step = float(np.max(np.abs(new - u)))
        u = new
        if step <= 0.1 * tol * max(float(np.max(np.abs(u))), 1e-300):
            break
        if prev is not None and step >= prev:
            growth += 1
            if growth >= 3:
                raise SmallnessError(
                    f"perturbative elliptic iteration does not contract "
                    f"(|gbar - delta| = {metric_deviation(metric.gbar):.3g}, C0 = {C0})")
        else:
            growth = 0
        prev = step
    else:
        raise SmallnessError("perturbative elliptic iteration did not converge")
    return u


def d_minus_one(f, grid, metric):
    """|D| Delta_gbar^{-1} P_gbar f, applied componentwise over leading axes."""
    u = solve_elliptic_perturbative(metric.gbar, f, grid, metric=metric)
    return abs_d(u, grid)


def commutator(f1, f2, grid, metric):
    """D^{-1}[f1 f2] - (D^{-1} f1) f2."""
    return d_minus_one(f1 * f2, grid, metric) - d_minus_one(f1, grid, metric) * f2
