"""Numerical substrate: time ladders, sample grids, finite differences and
L^p norms with analytic tail corrections.

A *field* throughout the package is any callable ``field(x, t)`` taking an
array of points ``x`` with shape (..., 3) and a scalar time, and returning an
array of shape (...,) or (..., k) for vector/tensor fields.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import lebedev_rule

from ._quadrature import panel_rule
from .errors import InvalidArgument


@dataclass(frozen=True)
class TimeLadder:
    """Geometric schedule t_k = T (1 - 2^-k), k = 0..k_max."""

    T: float
    k_max: int
    levels: tuple

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]

    def gap(self, k):
        """Distance T - t_k to the blow-up time."""
        return self.T * 2.0 ** (-k)


def make_time_ladder(T, k_max):
    if not T > 0:
        raise InvalidArgument(f"T must be positive, got {T}")
    if int(k_max) != k_max or k_max < 1:
        raise InvalidArgument(f"k_max must be an integer >= 1, got {k_max}")
    k = np.arange(int(k_max) + 1)
    return TimeLadder(float(T), int(k_max), tuple(float(T) * (1.0 - 2.0 ** -k)))


@dataclass
class SampleGrid:
    """Lattice {-L + i * 2L/n}, i = 0..n, per axis (so both +-L are included).

    The lattice is symmetric under x -> -x and coordinate permutations.  With
    ``shells`` set, dyadic radial probes 2^m * r0 along all axes and diagonals
    are available through :meth:`probe_points` for sup-norm estimation.
    """

    L: float
    n: int
    r0: float | None = None
    n_shells: int = 0

    def __post_init__(self):
        if not self.L > 0:
            raise InvalidArgument(f"grid half-width L must be positive, got {self.L}")
        if self.n % 2:
            raise InvalidArgument(f"grid resolution n must be even, got {self.n}")

    @property
    def spacing(self):
        return 2.0 * self.L / self.n

    @property
    def axis(self):
        return -self.L + self.spacing * np.arange(self.n + 1)

    @property
    def points(self):
        a = self.axis
        X = np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)
        return X.reshape(-1, 3)

    @property
    def weights(self):
        w1 = np.full(self.n + 1, self.spacing)
        w1[[0, -1]] *= 0.5
        return np.einsum("i,j,k->ijk", w1, w1, w1).ravel()

    @property
    def outer_radius(self):
        return self.L

    def refined(self):
        return SampleGrid(self.L, 2 * self.n, self.r0, self.n_shells)

    def boundary_points(self):
        a = self.axis
        X = self.points
        return X[np.max(np.abs(X), axis=1) >= self.L * (1 - 1e-12)]

    def shell_points(self):
        if not self.n_shells:
            return np.zeros((0, 3))
        r0 = self.r0 if self.r0 is not None else self.spacing
        return dyadic_shells(r0, self.n_shells)

    def probe_points(self):
        return np.concatenate([self.points, self.shell_points()])


def dyadic_shells(r0, n_shells):
    """Points 2^m r0 (m = 0..n_shells-1) along +-axes and all body diagonals."""
    dirs = []
    for i in range(3):
        for s in (1.0, -1.0):
            e = np.zeros(3)
            e[i] = s
            dirs.append(e)
    for signs in itertools.product((1.0, -1.0), repeat=3):
        dirs.append(np.array(signs) / math.sqrt(3.0))
    dirs = np.array(dirs)
    radii = r0 * 2.0 ** np.arange(n_shells)
    return (radii[:, None, None] * dirs[None]).reshape(-1, 3)


@dataclass
class SphericalGrid:
    """Product rule: composite Gauss-Legendre in r times a Lebedev sphere rule.

    Radial panels are graded geometrically from ``scale / 8`` so that fields
    with structure at a small length (e.g. sqrt(T - t) near blow-up) are
    resolved.  The Lebedev rule is invariant under coordinate permutations and
    sign flips.
    """

    R: float
    scale: float = 1.0
    radial_order: int = 12
    lebedev_order: int = 41
    center: tuple = (0.0, 0.0, 0.0)
    unit_panels: float = 1.0

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidArgument(f"outer radius must be positive, got {self.R}")

    @property
    def outer_radius(self):
        return self.R

    def radial_rule(self):
        lo = min(self.scale / 8.0, self.R / 8.0)
        top = min(self.R, max(1.0, lo * 2))
        n_geo = max(int(math.ceil(math.log2(top / lo))), 1)
        geo = lo * (top / lo) ** (np.arange(n_geo + 1) / n_geo)
        n_out = int(math.ceil((self.R - top) / self.unit_panels))
        outer = top + (self.R - top) * np.arange(1, n_out + 1) / max(n_out, 1) if n_out else []
        brk = np.concatenate([[0.0], geo, outer])
        r, w = panel_rule(brk, self.radial_order)
        return r, w * r * r

    def angular_rule(self):
        x, w = lebedev_rule(self.lebedev_order)
        return x.T, w

    @property
    def points(self):
        r, _ = self.radial_rule()
        omega, _ = self.angular_rule()
        return (r[:, None, None] * omega[None]).reshape(-1, 3) + np.asarray(self.center)

    @property
    def weights(self):
        _, wr = self.radial_rule()
        _, wa = self.angular_rule()
        return (wr[:, None] * wa[None]).ravel()

    def refined(self):
        return SphericalGrid(self.R, self.scale, self.radial_order + 6,
                             _next_lebedev(self.lebedev_order), self.center, self.unit_panels / 2)

    def boundary_points(self):
        omega, _ = self.angular_rule()
        return self.R * omega + np.asarray(self.center)


_LEBEDEV_ORDERS = (3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 35, 41, 47, 53,
                   59, 65, 71, 77, 83, 89, 95, 101, 107, 113, 119, 125, 131)


def _next_lebedev(order):
    for o in _LEBEDEV_ORDERS:
        if o >= order + 12:
            return o
    return _LEBEDEV_ORDERS[-1]


@dataclass
class NormResult:
    """One L^p (or sup) norm with its quadrature error and tail estimates.

    ``tail`` is the part of ``value`` contributed by the analytic tail bound;
    ``divergent`` marks a tail whose envelope is not p-integrable, in which
    case ``value`` is ``inf``.
    """

    value: float
    error: float = 0.0
    tail: float = 0.0
    divergent: bool = False

    def __float__(self):
        return float(self.value)


def _magnitude(vals):
    vals = np.asarray(vals, dtype=float)
    if vals.ndim > 1:
        return np.sqrt(np.sum(vals.reshape(vals.shape[0], -1) ** 2, axis=1))
    return np.abs(vals)


def _box_integral(field, p, grid, t):
    pts = grid.points
    vals = _magnitude(field(pts, t))
    return float(np.sum(grid.weights * vals ** p))


def lp_norm(field, p, grid, tail_decay, t=0.0, check=True):
    """L^p norm of ``field(., t)`` over R^3.

    The box (or ball) integral is done with the grid's quadrature rule; beyond
    the grid's outer radius R the field is bounded by C |x|^-tail_decay with C
    fitted as the max of |field| R^tail_decay over the grid boundary, and the
    radial tail 4 pi C^p R^(3 - a p) / (a p - 3) is added.  A tail with
    a p <= 3 is reported as divergent instead of as a number.
    """
    if p < 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    a = float(tail_decay)
    if not a > 0:
        raise InvalidArgument("tail_decay must be positive")
    R = grid.outer_radius
    bvals = _magnitude(field(grid.boundary_points(), t))
    C = float(np.max(bvals)) * R ** a if len(bvals) else 0.0
    if a * p <= 3 and C > 0:
        return NormResult(math.inf, 0.0, math.inf, True)
    box = _box_integral(field, p, grid, t)
    tail_int = 4 * math.pi * C ** p * R ** (3 - a * p) / (a * p - 3) if C > 0 else 0.0
    value = (box + tail_int) ** (1.0 / p)
    tail = value - box ** (1.0 / p)
    err = 0.0
    if check:
        box2 = _box_integral(field, p, grid.refined(), t)
        err = abs(box2 ** (1.0 / p) - box ** (1.0 / p))
    return NormResult(value, err, tail, False)


def sup_norm(field, points, t):
    return float(np.max(_magnitude(field(points, t))))


# --- finite differences -----------------------------------------------------------

_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_FWD1 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_OFFS = np.arange(-2, 3)


def fd_derivative(field, point, t, order, step, T=None):
    """4th-order finite-difference derivative of ``field`` at one (x, t).

    order: ``"gradient"`` (returns d/dx_i stacked on a new last axis),
    ``"laplacian"``, or ``"time"``.  Time derivatives are central unless the
    stencil would reach t < 0, in which case a one-sided forward stencil is
    used.  A stencil that reaches t >= T raises InvalidArgument.
    """
    x = np.asarray(point, dtype=float)
    if order == "time":
        central = t - 2 * step >= 0
        reach = t + (2 if central else 4) * step
        if T is not None and reach >= T:
            raise InvalidArgument(f"time stencil at t={t} with step {step} crosses T={T}")
        if central:
            vals = [field(x, t + o * step) for o in _OFFS]
            coef = _C1
        else:
            vals = [field(x, t + o * step) for o in range(5)]
            coef = _FWD1
        return sum(c * np.asarray(v) for c, v in zip(coef, vals)) / step
    if order not in ("gradient", "laplacian"):
        raise InvalidArgument(f"unknown derivative order {order!r}")
    stencil = x[None, None, :] + step * _OFFS[None, :, None] * np.eye(3)[:, None, :]
    vals = np.asarray(field(stencil, t))  # (3, 5, ...)
    if order == "gradient":
        g = np.tensordot(vals, _C1, axes=([1], [0])) / step  # (3, ...)
        return np.moveaxis(g, 0, -1)
    return np.tensordot(vals, _C2, axes=([1], [0])).sum(axis=0) / step ** 2


@dataclass
class NormReport:
    """Norm series indexed by ladder level; ``series[name][k]`` is a NormResult."""

    times: list
    series: dict = dc_field(default_factory=dict)

    def add(self, name, result):
        self.series.setdefault(name, []).append(result)

    def values(self, name):
        return np.array([float(r.value) for r in self.series[name]])

    def rows(self):
        """(name, k, t_k, value, error, tail) records in a stable order."""
        out = []
        for name in sorted(self.series):
            for k, (t, r) in enumerate(zip(self.times, self.series[name])):
                out.append((name, k, t, r.value, r.error, r.tail))
        return out
