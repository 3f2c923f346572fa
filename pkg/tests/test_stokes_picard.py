import math

import numpy as np
import pytest
from scipy.integrate import quad

from nsblowup.errors import InvalidArgument
from nsblowup.stokes_picard import (PicardConfig, PicardProblem, StokesGrid, delta0_search,
                                    etd_weights, kernel_bound_audit, picard_passed, picard_solve,
                                    stokes_duhamel, time_nodes)

SMALL = PicardConfig(L=8.0, n=32, horizon=2, substeps=2, m_max=8)


def _rot(x):
    return np.stack([x[..., 1], -x[..., 0], np.zeros(x.shape[:-1])], axis=-1)


def test_etd_weights_match_quadrature():
    for z in (1e-4, 5e-3, 0.3, 4.0, 50.0):
        a, b = etd_weights(z)
        qa = quad(lambda s: math.exp(-z * (1 - s)) * (1 - s), 0, 1)[0]
        qb = quad(lambda s: math.exp(-z * (1 - s)) * s, 0, 1)[0]
        assert float(a) == pytest.approx(qa, rel=1e-10)
        assert float(b) == pytest.approx(qb, rel=1e-10)


def test_time_nodes():
    s = time_nodes(0.75, 1.0, 2)
    assert np.allclose(s, [0, 1 - 2 ** -0.5, 0.5, 1 - 2 ** -1.5, 0.75])
    assert np.array_equal(time_nodes(0.0), [0.0])
    with pytest.raises(InvalidArgument):
        time_nodes(1.0)


def test_stokes_zero_and_gradient_forces():
    g = StokesGrid(8.0, 64)
    pts = np.array([[0.3, 0.2, 0.1], [1.0, -0.5, 0.4]])
    zero = stokes_duhamel(lambda x, s: 0 * x, 0.5, pts, grid=g)
    assert np.all(zero == 0)
    # a pure gradient is absorbed by the pressure
    grad = lambda x, s: -2 * x * np.exp(-np.sum(x * x, -1))[..., None] * (1 + s)
    assert np.max(np.abs(stokes_duhamel(grad, 0.5, pts, grid=g))) < 1e-10


def test_stokes_exact_solution():
    # Z = t g(r) (x2, -x1, 0), g = e^{-r^2}, is divergence free with
    # Delta Z - d_t Z = (t (4 r^2 - 10) - 1) g rot(x)
    def force(x, t):
        r2 = np.sum(x * x, -1)
        return ((t * (4 * r2 - 10) - 1) * np.exp(-r2))[..., None] * _rot(x)
    pts = np.array([[0.3, 0.2, 0.1], [1.0, -0.5, 0.4], [0.0, 0.7, -0.2]])
    t = 0.5
    Z = stokes_duhamel(force, t, pts, grid=StokesGrid(8.0, 64), substeps=2)
    exact = t * np.exp(-np.sum(pts * pts, -1))[:, None] * _rot(pts)
    assert np.allclose(Z, exact, atol=1e-9)


def test_leray_divergence_free():
    g = StokesGrid(6.0, 32)
    X = g.grid_points()
    vec = np.exp(-np.sum(X * X, -1))[..., None] * np.stack([X[..., 0] ** 2, X[..., 1], np.ones(X.shape[:-1])], -1)
    P = g.leray(g.forward(vec))
    div = sum(1j * g.kd[i] * P[i] for i in range(3))
    assert np.max(np.abs(div)) < 1e-9 * np.max(np.abs(P))


def test_kernel_bound():
    for seed in range(3):
        C, margin, ok = kernel_bound_audit(seed=seed)
        assert ok and C > 0 and margin >= 0


def test_kernel_bound_forced_failure():
    # a slack below the fitted spread must fail
    assert not kernel_bound_audit(slack=0.5)[2]


def test_picard_delta_zero_trivial():
    st = picard_solve(0.0, config=SMALL)
    assert st.converged and st.iterates == 1
    assert max(st.x_norms) == 0.0 and st.residual == 0.0


def test_picard_rejects_delta():
    with pytest.raises(InvalidArgument):
        PicardProblem(1.5, SMALL)


def test_first_iterate_quadratic_in_delta():
    n = []
    for d in (0.01, 0.02):
        p = PicardProblem(d, SMALL)
        n.append(p.x_norm(p.apply(p.zero())[0]))
    assert n[1] / n[0] == pytest.approx(4.0, rel=1e-10)


def test_picard_small_delta_converges():
    st = picard_solve(0.01, config=SMALL)
    assert picard_passed(st)
    assert all(r < 1 for r in st.contraction_ratios)
    assert st.residual < 1e-6 * st.eta
    u = st.field
    assert np.all(u(np.ones((2, 3)), 0.0) == 0)
    g = u.grad(np.array([[0.2, 0.1, -0.3]]), u.t_max)
    assert abs(np.trace(g[0])) < 1e-8 * max(np.max(np.abs(g)), 1e-300)


def test_delta0_search_monotone():
    best, status = delta0_search(candidates=(2 ** -9, 2 ** -8, 2 ** -7), config=SMALL)
    assert best == 2 ** -7
    assert all(s == "verified" for s in status.values())


def test_delta0_search_stops_at_failure():
    # an eta rule that rejects every delta above 2^-8
    rule = lambda d, x0: 4 * x0 if d <= 2 ** -8 else 0.5 * x0
    best, status = delta0_search(candidates=(2 ** -9, 2 ** -8, 2 ** -7, 2 ** -6), eta_rule=rule, config=SMALL)
    assert best == 2 ** -8
    assert status[2 ** -7] != "verified" and 2 ** -6 not in status
