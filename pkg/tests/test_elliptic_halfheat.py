import numpy as np
import pytest

from artifact import elliptic as E
from artifact.gauge import halfheat as H
from artifact.spectral import TorusGrid


def near_identity_metric(grid, eps):
    x, y = grid.x
    a = eps * np.cos(x + y)
    b = eps * np.sin(x) * np.cos(y)
    return np.array([[1 + a, b], [b, 1 - 0.5 * a]])


def exact_u(grid):
    x, y = grid.x
    u = np.sin(x) * np.cos(2 * y) + 0.3 * np.cos(3 * x - y)
    return u - grid.mean(u)


@pytest.mark.parametrize("kind", ["laplace_beltrami", "principal_part"])
def test_manufactured_solution(kind):
    grid = TorusGrid(2, 32)
    gbar = near_identity_metric(grid, 0.1)
    metric = E.SliceMetric(grid, gbar)
    u = exact_u(grid)
    F = metric.laplace_beltrami(u) if kind == "laplace_beltrami" else metric.principal_part(u)
    sol = E.solve_elliptic_perturbative(gbar, F, grid, kind)
    assert np.max(np.abs(sol - u)) < 1e-10


def test_laplace_beltrami_projects_mean():
    grid = TorusGrid(2, 32)
    gbar = near_identity_metric(grid, 0.1)
    metric = E.SliceMetric(grid, gbar)
    u = exact_u(grid)
    F = metric.laplace_beltrami(u)
    sol = E.solve_elliptic_perturbative(gbar, F + 2.5, grid)
    assert np.max(np.abs(sol - u)) < 1e-10
    assert abs(metric.mean(F)) < 1e-12


def test_leading_axes_solved_independently():
    grid = TorusGrid(2, 16)
    gbar = near_identity_metric(grid, 0.05)
    metric = E.SliceMetric(grid, gbar)
    u = np.stack([exact_u(grid), 2 * exact_u(grid)])
    F = np.stack([metric.laplace_beltrami(v) for v in u])
    assert np.max(np.abs(E.solve_elliptic_perturbative(gbar, F, grid) - u)) < 1e-10


def test_flat_inverse_is_exact():
    grid = TorusGrid(2, 16)
    u = exact_u(grid)
    sol = E.solve_elliptic_perturbative(E.SliceMetric.flat(grid).gbar, grid.hessian(u).trace(), grid)
    assert np.max(np.abs(sol - u)) < 1e-13


def test_iteration_fails_beyond_smallness_threshold():
    grid = TorusGrid(2, 16)
    gbar = (1 - 2 * E.C0) * np.broadcast_to(np.eye(2)[..., None, None], (2, 2) + grid.shape)
    assert E.contraction_bound(gbar) > 1 > E.contraction_bound(near_identity_metric(grid, E.C0))
    with pytest.raises(E.SmallnessError):
        E.solve_elliptic_perturbative(gbar, np.cos(grid.x[0]), grid)


def test_d_minus_one_on_flat_metric():
    grid = TorusGrid(2, 16)
    x, y = grid.x
    f = np.cos(3 * x + 4 * y)
    out = E.d_minus_one(f, grid, E.SliceMetric.flat(grid))
    assert np.allclose(out, -f / 5, atol=1e-13)


def test_halfheat_single_mode_decay():
    grid = TorusGrid(2, 16)
    x, y = grid.x
    times = np.linspace(0, 1, 11)
    D0 = np.cos(3 * x - 4 * y)
    f = H.solve_halfheat(np.zeros((11,) + grid.shape), times, D0, grid)
    exact = np.exp(-5 * times)[:, None, None] * D0
    assert np.max(np.abs(f - exact)) < 1e-12


def test_halfheat_constant_source():
    grid = TorusGrid(1, 16)
    times = np.linspace(0, 2, 9)
    F = np.broadcast_to(1.0 + np.cos(2 * grid.x[0]), (9,) + grid.shape)
    f = H.solve_halfheat(F, times, np.zeros(grid.shape), grid)
    exact = times[:, None] + 0.5 * (1 - np.exp(-2 * times))[:, None] * np.cos(2 * grid.x[0])
    assert np.max(np.abs(f - exact)) < 1e-12


def test_halfheat_cubic_source_is_exact():
    grid = TorusGrid(1, 16)
    times = np.linspace(0, 1, 7)
    mode = np.cos(grid.x[0])
    # f = t^3 cos x solves f_t + |D| f = (3 t^2 + t^3) cos x
    F = (3 * times**2 + times**3)[:, None] * mode
    f = H.solve_halfheat(F, times, np.zeros(grid.shape), grid)
    assert np.max(np.abs(f - times[:, None] ** 3 * mode)) < 1e-12


def test_phi_functions_match_quadrature():
    z = np.array([-1e-3, -0.5, -3.0, -40.0])
    phis = H.phi_functions(z, 3)
    s = np.linspace(0, 1, 200001)
    for k in (1, 2, 3):
        from math import factorial
        integrand = np.exp(np.outer(z, 1 - s)) * s ** (k - 1) / factorial(k - 1)
        assert np.allclose(phis[k], np.trapezoid(integrand, s, axis=1), rtol=1e-8, atol=1e-14)


def test_etdrk4_fourth_order():
    lam = np.array([0.0, 1.0, 30.0])
    errs = []
    for n in (20, 40):
        h = 1.0 / n
        stepper = H.ETDRK4(lam, h)
        u = np.ones(3)
        for i in range(n):
            u = stepper.step(i * h, u, lambda t, v: np.sin(t) + 0 * v + 0.1 * v**2)
        errs.append(u)
    # reference with a much finer step
    ref = np.ones(3)
    stepper = H.ETDRK4(lam, 1 / 640)
    for i in range(640):
        ref = stepper.step(i / 640, ref, lambda t, v: np.sin(t) + 0.1 * v**2)
    e = [np.max(np.abs(x - ref)) for x in errs]
    assert 3.5 < np.log2(e[0] / e[1]) < 4.6


def test_parabolic_constants_are_stable():
    grid = TorusGrid(1, 32)
    a = H.parabolic_constants(grid, samples=30, seed=1, steps=40)
    b = H.parabolic_constants(grid, samples=30, seed=2, steps=40)
    for key in ("linf_l2", "l2_l2"):
        assert abs(a[key] - b[key]) <= 0.2 * max(a[key], b[key])
        assert 0 < a[key] < 10
