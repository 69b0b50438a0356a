import numpy as np

from artifact import jets as J
from artifact.jets import Jet


def _series(fn_values):
    return Jet(np.array(fn_values, dtype=float).reshape(-1, 1))


def test_product_rule():
    # a = e^t, b = sin t at t = 0.3
    t = 0.3
    a = _series([np.exp(t)] * 4)
    b = _series([np.sin(t), np.cos(t), -np.sin(t), -np.cos(t)])
    ab = J.jeinsum(",->", a, b)
    exact = [np.exp(t) * (np.sin(t)), np.exp(t) * (np.sin(t) + np.cos(t)), 2 * np.exp(t) * np.cos(t),
             2 * np.exp(t) * (np.cos(t) - np.sin(t))]
    assert np.allclose(ab.data[:, 0], exact)


def test_reciprocal_and_sqrt():
    t = 0.2
    a = _series([1 + t, 1, 0, 0])
    r = J.reciprocal(a)
    assert np.allclose(r.data[:, 0], [1 / (1 + t), -1 / (1 + t) ** 2, 2 / (1 + t) ** 3, -6 / (1 + t) ** 4])
    s = J.sqrt(a)
    u = 1 + t
    assert np.allclose(s.data[:, 0], [u**0.5, 0.5 * u**-0.5, -0.25 * u**-1.5, 0.375 * u**-2.5])


def test_matrix_inverse_jet(rng):
    m0 = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
    m1 = rng.standard_normal((3, 3))
    data = np.stack([m0, m1, np.zeros((3, 3))])[..., None]
    inv = J.inverse(Jet(data))
    i0 = np.linalg.inv(m0)
    assert np.allclose(inv.data[0, ..., 0], i0)
    assert np.allclose(inv.data[1, ..., 0], -i0 @ m1 @ i0)
    assert np.allclose(inv.data[2, ..., 0], 2 * i0 @ m1 @ i0 @ m1 @ i0)


def test_fd_weights_exact_on_polynomials():
    w = J.fd_weights(np.arange(5) - 2, 2)
    x = np.arange(5) - 2.0
    assert np.isclose(w @ x**4, 0.0) and np.isclose(w @ x**2, 2.0)


def test_jet_from_slices_fourth_order():
    errs = []
    for dt in (0.1, 0.05):
        ts = 0.4 + dt * (np.arange(5) - 2)
        jet = J.jet_from_slices(np.sin(ts)[:, None], dt, 2, 1)
        errs.append(abs(jet.data[1, 0] - np.cos(0.4)))
    assert 12 < errs[0] / errs[1] < 20
