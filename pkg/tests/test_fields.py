import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsblowup._quadrature import ChebTable, panel_rule
from nsblowup.errors import InvalidArgument
from nsblowup.fields import (SampleGrid, SphericalGrid, dyadic_shells, fd_derivative, lp_norm,
                             make_time_ladder, sup_norm)


def test_ladder_levels():
    lad = make_time_ladder(1.0, 3)
    assert lad.levels == (0.0, 0.5, 0.75, 0.875)
    assert lad.gap(3) == pytest.approx(0.125)


@pytest.mark.parametrize("T,k", [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, 2.5)])
def test_ladder_rejects_bad_input(T, k):
    with pytest.raises(InvalidArgument):
        make_time_ladder(T, k)


@given(st.floats(0.1, 10.0), st.integers(1, 20))
def test_ladder_geometric(T, k):
    lad = make_time_ladder(T, k)
    gaps = T - np.array(lad.levels)
    assert np.allclose(gaps[1:] / gaps[:-1], 0.5)
    assert all(t < T for t in lad.levels)


def test_sample_grid_symmetry():
    g = SampleGrid(2.0, 8)
    pts = g.points
    assert len(pts) == 9 ** 3
    s = {tuple(np.round(p, 12)) for p in pts}
    assert all(tuple(np.round(-p, 12)) in s for p in pts)
    assert all(tuple(np.round(p[[1, 0, 2]], 12)) in s for p in pts)
    assert g.weights.sum() == pytest.approx(64.0)


def test_sample_grid_odd_n():
    with pytest.raises(InvalidArgument):
        SampleGrid(1.0, 7)


def test_dyadic_shells():
    pts = dyadic_shells(0.25, 3)
    r = np.linalg.norm(pts, axis=1)
    assert set(np.round(r, 12)) == {0.25, 0.5, 1.0}
    assert len(pts) == 3 * 14


def test_spherical_grid_volume():
    g = SphericalGrid(3.0, scale=0.1)
    assert g.weights.sum() == pytest.approx(4 * math.pi * 27 / 3, rel=1e-12)


def test_gaussian_l2_norm_exact():
    # ||e^{-|x|^2}||_2^2 = (pi/2)^{3/2}
    f = lambda x, t: np.exp(-np.sum(x * x, axis=-1))
    res = lp_norm(f, 2, SphericalGrid(8.0), tail_decay=20.0)
    assert res.value == pytest.approx((math.pi / 2) ** 0.75, rel=1e-10)
    assert res.error < 1e-10


def test_power_tail_matches_closed_form():
    # f = (1 + r^2)^{-2}: ||f||_2^2 = 4 pi int r^2 (1+r^2)^{-4} dr = pi^2 / 8
    f = lambda x, t: 1.0 / (1.0 + np.sum(x * x, axis=-1)) ** 2
    res = lp_norm(f, 2, SphericalGrid(20.0), tail_decay=4.0)
    assert res.value == pytest.approx(math.sqrt(math.pi ** 2 / 8), rel=1e-4)
    assert res.tail > 0


def test_divergent_tail_reported():
    f = lambda x, t: 1.0 / (1.0 + np.sum(x * x, axis=-1))
    res = lp_norm(f, 1.5, SphericalGrid(5.0), tail_decay=2.0)
    assert res.divergent and math.isinf(res.value)


def test_sup_norm():
    f = lambda x, t: np.exp(-np.sum(x * x, axis=-1))
    assert sup_norm(f, SampleGrid(1.0, 4).points, 0.0) == 1.0


def test_fd_derivatives_of_polynomial():
    f = lambda x, t: x[..., 0] ** 3 + x[..., 1] * x[..., 2] + t ** 2
    p = np.array([0.3, -0.2, 0.5])
    g = fd_derivative(f, p, 0.4, "gradient", 0.1)
    assert np.allclose(g, [3 * 0.09, 0.5, -0.2], atol=1e-12)
    assert fd_derivative(f, p, 0.4, "laplacian", 0.1) == pytest.approx(6 * 0.3, abs=1e-11)
    assert fd_derivative(f, p, 0.4, "time", 0.1) == pytest.approx(0.8, abs=1e-12)
    # one-sided near t = 0
    assert fd_derivative(f, p, 0.05, "time", 0.1) == pytest.approx(0.1, abs=1e-12)


def test_fd_stencil_crossing_T():
    f = lambda x, t: t
    with pytest.raises(InvalidArgument):
        fd_derivative(f, np.zeros(3), 0.95, "time", 0.05, T=1.0)


def test_fd_fourth_order():
    f = lambda x, t: np.sin(x[..., 0]) * np.exp(t)
    p = np.array([0.4, 0.0, 0.0])
    errs = [abs(fd_derivative(f, p, 0.5, "laplacian", h) + np.sin(0.4) * np.exp(0.5))
            for h in (0.1, 0.05)]
    assert errs[0] / errs[1] > 14


def test_panel_rule_and_cheb_table():
    x, w = panel_rule(np.array([0.0, 0.5, 0.5, 2.0]), 8)
    assert np.sum(w * x ** 3) == pytest.approx(4.0)
    tab = ChebTable(np.linspace(0.0, 2.0, 5), 12)
    tab.fit(np.exp(-tab.nodes)[:, None])
    r = np.linspace(0, 2, 37)
    assert np.max(np.abs(tab(r, 0) - np.exp(-r))) < 1e-13
    integ = tab.integral_table(0, weight_power=2)
    exact = lambda r: 2 - np.exp(-r) * (r * r + 2 * r + 2)
    assert np.max(np.abs(integ(r, 0) - exact(r))) < 1e-12
    assert integ.total == pytest.approx(exact(2.0), abs=1e-13)
