"""Gauss-Legendre panel rules and piecewise Chebyshev tables."""

from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(breaks, order):
    """Composite Gauss-Legendre rule over consecutive breakpoints.

    ``breaks`` has shape (..., nb) and must be sorted along the last axis;
    zero-width panels are allowed and simply carry zero weight.  Returns
    nodes and weights of shape (..., (nb - 1) * order).
    """
    x, w = gauss_legendre(order)
    a = breaks[..., :-1, None]
    b = breaks[..., 1:, None]
    half = 0.5 * (b - a)
    nodes = a + half * (x + 1.0)
    weights = half * w
    shape = breaks.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


class ChebTable:
    """Piecewise Chebyshev interpolant of one or more functions on panels.

    Values are sampled on Chebyshev points of the first kind in each panel,
    so that an endpoint singularity at r = 0 is never touched.
    """

    def __init__(self, breaks, degree):
        self.breaks = np.asarray(breaks, dtype=float)
        self.degree = degree
        k = np.arange(degree + 1)
        self._ref = np.cos(np.pi * (k + 0.5) / (degree + 1))[::-1]
        a, b = self.breaks[:-1, None], self.breaks[1:, None]
        self.nodes = (0.5 * (a + b) + 0.5 * (b - a) * self._ref).ravel()
        self.coeffs = None

    @property
    def n_panels(self):
        return len(self.breaks) - 1

    def fit(self, values):
        """Set coefficients from samples at ``self.nodes``; values (n_nodes, m)."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        v = values.reshape(self.n_panels, self.degree + 1, -1)
        V = C.chebvander(self._ref, self.degree)
        inv = np.linalg.inv(V)
        self.coeffs = np.einsum("ij,pjm->pim", inv, v)
        return self

    def _locate(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.clip(np.searchsorted(self.breaks, r, side="right") - 1, 0, self.n_panels - 1)
        a, b = self.breaks[idx], self.breaks[idx + 1]
        u = (2.0 * r - a - b) / (b - a)
        return idx, u

    def __call__(self, r, col=None):
        """Evaluate column(s) at r; r outside the table range is extrapolated."""
        r = np.asarray(r, dtype=float)
        idx, u = self._locate(r.ravel())
        c = self.coeffs[idx]  # (N, deg+1, m)
        # Clenshaw, vectorised over points and columns
        b1 = np.zeros((len(u), c.shape[2]))
        b2 = np.zeros_like(b1)
        uu = u[:, None]
        for j in range(self.degree, 0, -1):
            b1, b2 = 2.0 * uu * b1 - b2 + c[:, j, :], b1
        out = uu * b1 - b2 + c[:, 0, :]
        out = out.reshape(r.shape + (c.shape[2],))
        if col is not None:
            return out[..., col]
        return out

    def integral_table(self, col, weight_power=0):
        """Return a ChebTable of r -> int_{breaks[0]}^r s**weight_power * f_col(s) ds.

        The weight is folded in exactly by sampling; accuracy is that of the
        underlying interpolant.
        """
        out = ChebTable(self.breaks, self.degree + weight_power + 1)
        x, w = gauss_legendre(self.degree + weight_power + 2)
        cum = 0.0
        vals = np.empty(out.nodes.shape)
        nd = out.degree + 1
        for p in range(self.n_panels):
            a, b = self.breaks[p], self.breaks[p + 1]
            nodes = out.nodes[p * nd:(p + 1) * nd]
            # integral from a to each node by a GL rule mapped to [a, node]
            half = 0.5 * (nodes - a)
            s = a + half[:, None] * (x + 1.0)
            f = self(s, col) * s ** weight_power
            vals[p * nd:(p + 1) * nd] = cum + (half[:, None] * w * f).sum(axis=1)
            half_p = 0.5 * (b - a)
            s = a + half_p * (x + 1.0)
            cum += half_p * np.sum(w * self(s, col) * s ** weight_power)
        out.fit(vals)
        out.total = cum
        return out
