import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitvib import kernels
from gaitvib.dynamics.simulate import _step_matrices

compiled = pytest.mark.skipif(kernels.compiled_backend is None,
                              reason="compiled extension not built")
py = kernels.python_backend


def _rbf(x, gamma=0.5):
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    return np.exp(-gamma * sq)


@compiled
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), omega=st.floats(20.0, 1300.0), zeta=st.floats(0.005, 0.2))
def test_modal_recurrence_backends_agree(seed, omega, zeta):
    rng = np.random.default_rng(seed)
    load = rng.normal(size=300)
    dt = 1e-3
    trans, g0, g1 = _step_matrices(omega, zeta, dt)
    d_py, v_py = py.modal_recurrence(trans, g0, g1, load, dt)
    d_c, v_c = kernels.compiled_backend.modal_recurrence(trans, g0, g1, load, dt)
    np.testing.assert_allclose(d_c, d_py, rtol=1e-12, atol=1e-18)
    np.testing.assert_allclose(v_c, v_py, rtol=1e-12, atol=1e-15)


@compiled
def test_newmark_backends_agree():
    rng = np.random.default_rng(3)
    n = 3
    a = rng.normal(size=(n, n))
    mass = a @ a.T + n * np.eye(n)
    stiff = 1e4 * np.eye(n) + 10 * (a + a.T)
    damp = 0.01 * stiff
    dt, gamma, beta = 1e-4, 0.5, 0.25
    eff = mass / (beta * dt * dt) + damp * gamma / (beta * dt) + stiff
    eff_inv = np.linalg.inv(eff)
    load = rng.normal(size=(50, n))
    acc0 = np.linalg.solve(mass, load[0])
    out_py = py.newmark_integrate(mass, damp, eff_inv, acc0, load, 4, dt, gamma, beta)
    out_c = kernels.compiled_backend.newmark_integrate(mass, damp, eff_inv, acc0, load, 4,
                                                       dt, gamma, beta)
    np.testing.assert_allclose(out_c, out_py, rtol=1e-10, atol=1e-14)


@compiled
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), C=st.sampled_from([0.5, 10.0, 1e3]))
def test_smo_backends_agree(seed, C):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, 3))
    y = np.where(x[:, 0] + 0.5 * rng.normal(size=40) > 0, 1.0, -1.0)
    if abs(y.sum()) == 40:
        y[0] = -y[0]
    k = _rbf(x)
    a_py, g_py, it_py = py.smo_solve(k, y, C, 1e-4, 100000)
    a_c, g_c, it_c = kernels.compiled_backend.smo_solve(k, y, C, 1e-4, 100000)
    assert it_py == it_c
    np.testing.assert_allclose(a_c, a_py, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(g_c, g_py, rtol=1e-9, atol=1e-10)


def test_smo_dual_feasibility_and_gradient():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(60, 2))
    y = np.where(x[:, 0] * x[:, 1] > 0, 1.0, -1.0)
    k = _rbf(x, 1.0)
    C = 5.0
    alpha, grad, _ = kernels.smo_solve(k, y, C, 1e-5, 100000)
    assert np.all(alpha >= 0) and np.all(alpha <= C)
    assert abs(alpha @ y) < 1e-9
    # gradient of 0.5 a'Qa - e'a
    q = (y[:, None] * y[None, :]) * k
    np.testing.assert_allclose(grad, q @ alpha - 1.0, atol=1e-8)


def test_backend_is_reported():
    assert kernels.BACKEND in ("compiled", "python")
