"""Explicit critical forcing profiles and the forced heat solution h = (h1, 0, 0).

h1 solves ``Delta h1 - d_t h1 = f1`` with zero initial data, where f1 is one
of the radially symmetric forcing profiles below.  It is evaluated from its
Duhamel representation after the change of variables that freezes the heat
kernel: with lag ``tau = t - s`` and ``y = sqrt(tau) * sigma * omega``,

    h1(x, t) = (4 pi)^(-3/2) int_0^t int e^{-|x/sqrt(tau) - y|^2 / 4}
               Q(tau |y|^2, T - t + tau) dy dtau,

Q being the (positive) magnitude of the forcing density.  Because h1 is
radial the angular integral is done in closed form, which leaves a 2-D
(tau, sigma) integral.  Radial derivatives are obtained by differentiating
the frozen kernel with respect to ``a = |x| / sqrt(tau)``.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._quadrature import ChebTable, panel_rule
from .errors import AccuracyError, InvalidArgument
from .fields import fd_derivative

FOUR_PI_M32 = (4.0 * math.pi) ** -1.5


class Variant(enum.Enum):
    CRITICAL_A = "A"
    CRITICAL_LOG_B = "B"
    SCALED_LOG_B = "scaledB"


@dataclass(frozen=True)
class ForcingProfile:
    """One of the explicit forces ``f = f1 e1`` with blow-up time T.

    Variant A:  f1 = -e^{-|x|^2} / (|x|^2 + T - t)
    Variant B:  f1 = -e^{-|x|^2} / ((|x|^2 + T - t) (1 + |ln(|x|^2 + T - t)|))
    Scaled B:   delta times variant B.
    """

    variant: Variant = Variant.CRITICAL_A
    T: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", Variant(self.variant))
        if not self.T > 0:
            raise InvalidArgument(f"T must be positive, got {self.T}")
        if self.variant is Variant.SCALED_LOG_B:
            if not 0.0 <= self.delta <= 1.0:
                raise InvalidArgument(f"delta must lie in (0, 1], got {self.delta}")
        elif self.delta != 1.0:
            raise InvalidArgument("variants A and B fix delta = 1")

    @property
    def has_log(self):
        return self.variant is not Variant.CRITICAL_A

    def density(self, u, w):
        """Magnitude -f1 as a function of u = |y|^2 and w = T - s (both arrays)."""
        d = u + w
        out = np.exp(-u) / d
        if self.has_log:
            out = out / (1.0 + np.abs(np.log(d)))
        return self.delta * out if self.variant is Variant.SCALED_LOG_B else out

    def f1(self, x, t):
        """First forcing component at points x (..., 3) and time t."""
        _check_time(t, self.T)
        x = np.asarray(x, dtype=float)
        return -self.density(np.sum(x * x, axis=-1), self.T - t)

    def f1_radial(self, r, t):
        r = np.asarray(r, dtype=float)
        return -self.density(r * r, self.T - t)

    def scaled(self, delta):
        """The same profile with the log-B shape scaled by delta."""
        return ForcingProfile(Variant.SCALED_LOG_B, self.T, delta)


def forcing_eval(profile: ForcingProfile, x, t):
    """The full force vector ``(f1, 0, 0)`` at points x (..., 3)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    out[..., 0] = profile.f1(x, t)
    return out


def _check_time(t, T):
    if not t < T:
        raise InvalidArgument(f"time t={t} must be strictly below the blow-up time T={T}")
    if t < 0:
        raise InvalidArgument(f"time t={t} must be nonnegative")


def c_star():
    """Lower-bound constant (4 pi)^{-3/2} int e^{-1.25|y|^2} / (1 + |y|^2) dy.

    Radially this is (4 pi)^{-1/2} int_0^inf r^2 e^{-b r^2} / (1 + r^2) dr with
    b = 1.25, whose closed form is (1/2) sqrt(pi/b) - (pi/2) e^b erfc(sqrt b).
    """
    b = 1.25
    radial = 0.5 * math.sqrt(math.pi / b) - 0.5 * math.pi * special.erfcx(math.sqrt(b))
    return radial / math.sqrt(4.0 * math.pi)


# --- frozen-kernel angular integrals -----------------------------------------

def _angular_kernels(a, sigma, nderiv):
    """Angular integral of e^{-|a e1 - sigma w|^2/4} over the sphere and its
    first two a-derivatives, each multiplied by sigma^2."""
    z = 0.5 * a * sigma
    small = z < 0.1
    zs = np.where(small, 1.0, z)
    ep = np.exp(-0.25 * (a - sigma) ** 2)
    em = np.exp(-0.25 * (a + sigma) ** 2)
    esh = 0.5 * (ep - em)
    ech = 0.5 * (ep + em)
    E = np.exp(-0.25 * (a * a + sigma * sigma))
    z2 = z * z
    S = np.where(small, E * (1 + z2 / 6 * (1 + z2 / 20 * (1 + z2 / 42))), esh / zs)
    out = [4.0 * np.pi * sigma * sigma * S]
    if nderiv >= 1:
        S1 = np.where(small, E * z * (1 / 3 + z2 * (1 / 30 + z2 / 840)), ech / zs - esh / zs ** 2)
        out.append(4.0 * np.pi * sigma * sigma * (-0.5 * a * S + 0.5 * sigma * S1))
    if nderiv >= 2:
        S2 = np.where(small, E * (1 / 3 + z2 * (1 / 10 + z2 / 168)),
                      esh / zs - 2 * ech / zs ** 2 + 2 * esh / zs ** 3)
        out.append(4.0 * np.pi * sigma * sigma
                   * ((0.25 * a * a - 0.5) * S - 0.5 * a * sigma * S1 + 0.25 * sigma * sigma * S2))
    return out


def _tau_breaks(profile, r, t, refine):
    """Per-radius lag breakpoints, geometric toward tau = 0; shape (nr, nb)."""
    w0 = profile.T - t
    tau_c = 0.05 * (w0 + r * r) / (1.0 + r * r) ** 2
    tau_c = np.minimum(tau_c, 0.5 * t)
    n_geo = int(math.ceil(refine * math.log2(t / tau_c.min()))) + 1
    j = np.arange(n_geo + 1) / n_geo
    geo = tau_c[:, None] * (t / tau_c[:, None]) ** j
    # a few panels below tau_c: the log kink can sit on the kernel peak there
    low = tau_c[:, None] * 2.0 ** -np.arange(1, 4 * refine + 1)
    kink = np.full((len(r), 1), min(max(1.0 - w0, 0.0), t))
    parts = [np.zeros((len(r), 1)), low, geo, kink]
    return np.sort(np.concatenate(parts, axis=1), axis=1)


def _sigma_breaks(profile, a, tau, w, refine):
    """Per-(r, tau) scaled-radius breakpoints; the last axis is the panel axis."""
    lo = np.maximum(a - 13.0, 0.0)
    hi = np.minimum(a + 13.0, np.sqrt(42.0 / tau))
    hi = np.maximum(hi, lo)
    n_uni = 16 * refine
    uni = lo[..., None] + (hi - lo)[..., None] * (np.arange(n_uni + 1) / n_uni)
    sig_star = np.sqrt(w / tau)
    steps = np.arange(-10 * refine, 4 * refine + 1) / refine
    graded = sig_star[..., None] * 2.0 ** steps
    kink = np.sqrt(np.maximum(1.0 - w, 0.0) / tau)[..., None]
    brk = np.concatenate([uni, graded, kink], axis=-1)
    brk = np.clip(brk, lo[..., None], hi[..., None])
    return np.sort(brk, axis=-1)


def radial_duhamel(profile, r, t, nderiv=2, refine=1, tau_order=10, sigma_order=8):
    """H(r), H'(r), H''(r) of the radial profile h1(x, t) = H(|x|).

    r: 1-D array of radii.  Returns an array (nderiv + 1, len(r)).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros((nderiv + 1, len(r)))
    if t == 0 or len(r) == 0 or (profile.variant is Variant.SCALED_LOG_B and profile.delta == 0):
        return out
    tb = _tau_breaks(profile, r, t, refine)
    tau, wt = panel_rule(tb, tau_order)  # (nr, ntau)
    keep = wt > 0
    # drop zero-width panels uniformly across the batch
    cols = np.any(keep, axis=0)
    tau, wt = tau[:, cols], wt[:, cols]
    tau = np.where(tau > 0, tau, 1e-300)
    a = r[:, None] / np.sqrt(tau)
    w = profile.T - t + tau
    sb = _sigma_breaks(profile, a, tau, w, refine)
    sig, ws = panel_rule(sb, sigma_order)  # (nr, ntau, nsig)
    q = profile.density(tau[..., None] * sig * sig, w[..., None])
    kers = _angular_kernels(a[..., None], sig, nderiv)
    for d, ker in enumerate(kers):
        inner = np.sum(ws * ker * q, axis=-1)
        out[d] = FOUR_PI_M32 * np.sum(wt * inner * tau ** (-0.5 * d), axis=-1)
    return out


def _radial_duhamel_checked(profile, r, t, nderiv, tol, max_refine=4):
    est = np.inf
    refine = 1
    while refine <= max_refine:
        lo = radial_duhamel(profile, r, t, nderiv, refine, 10, 8)
        hi = radial_duhamel(profile, r, t, nderiv, refine, 14, 12)
        diff = np.abs(hi - lo)
        scale = np.maximum(np.abs(hi), 1.0)
        est = float(np.max(diff / scale))
        if est <= tol:
            return hi, est
        refine *= 2
    raise AccuracyError("h1 quadrature did not converge", est)


# --- evaluator ----------------------------------------------------------------

class HeatSolution:
    """Point evaluator for h1 and its first and second spatial derivatives.

    Values are memoised on exact (x, t) keys.  Radial tables (see
    :meth:`radial_table`) are cached per time.
    """

    def __init__(self, profile: ForcingProfile, tol=1e-8, hess_tol=1e-6):
        self.profile = profile
        self.tol = tol
        self.hess_tol = hess_tol
        self._memo = {}
        self._tables = {}
        self._lock = threading.Lock()

    @property
    def T(self):
        return self.profile.T

    def _radial(self, r, t, nderiv):
        _check_time(t, self.T)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        keys = [(round(float(x), 15), float(t), nderiv) for x in r]
        missing = sorted({k for k in keys if k not in self._memo})
        tol = self.tol if nderiv < 2 else self.hess_tol
        for c in range(0, len(missing), 32):
            chunk = missing[c:c + 32]
            vals, _ = _radial_duhamel_checked(self.profile, np.array([k[0] for k in chunk]),
                                              t, nderiv, tol)
            with self._lock:
                for j, k in enumerate(chunk):
                    self._memo[k] = vals[:, j]
        return np.stack([self._memo[k] for k in keys], axis=1)

    def radial(self, r, t, nderiv=0):
        """Rows H, H', H'' (up to nderiv) at radii r."""
        return self._radial(r, t, nderiv)

    def h1(self, x, t):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x.reshape(-1, 3), axis=1)
        return self._radial(r, t, 0)[0].reshape(x.shape[:-1])

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        xs = x.reshape(-1, 3)
        r = np.linalg.norm(xs, axis=1)
        H1 = self._radial(r, t, 1)[1]
        rs = np.where(r > 0, r, 1.0)
        g = (H1 / rs)[:, None] * xs
        return g.reshape(x.shape)

    def hess(self, x, t):
        x = np.asarray(x, dtype=float)
        xs = x.reshape(-1, 3)
        r = np.linalg.norm(xs, axis=1)
        _, H1, H2 = self._radial(r, t, 2)
        return _radial_hessian(xs, r, H1, H2).reshape(x.shape + (3,))

    def __call__(self, x, t):
        return self.h1(x, t)

    def radial_table(self, t, r_max=14.0, degree=12):
        """Cached :class:`RadialProfile` at time t."""
        key = float(t)
        with self._lock:
            tab = self._tables.get(key)
        if tab is None:
            tab = RadialProfile.build(self.profile, t, r_max=r_max, degree=degree, tol=self.tol)
            with self._lock:
                self._tables[key] = tab
        return tab


def _radial_hessian(xs, r, H1, H2):
    rs = np.where(r > 0, r, 1.0)
    xh = xs / rs[:, None]
    small = r < 1e-12
    # at the origin H'(r)/r -> H''(0)
    ratio = np.where(small, H2, H1 / rs)
    outer = np.einsum("ni,nj->nij", xh, xh)
    eye = np.eye(3)[None]
    hess = (H2 - ratio)[:, None, None] * outer + ratio[:, None, None] * eye
    return hess


def radial_breaks(scale, r_max, kink=math.nan):
    """Panels graded geometrically from the blow-up length scale up to r = 1,
    then wider panels out to r_max.  A finite ``kink`` radius becomes a
    breakpoint (nearby breakpoints are dropped)."""
    lo = min(scale / 8.0, 0.05)
    n_geo = max(int(math.ceil(math.log2(1.0 / lo))), 1)
    geo = lo * (1.0 / lo) ** (np.arange(n_geo + 1) / n_geo)
    outer = np.concatenate([np.arange(2.0, 4.0), np.arange(4.0, r_max + 1e-9, 2.0)])
    brk = np.concatenate([[0.0], geo, outer])
    if 0.0 < kink < r_max:
        brk = brk[np.abs(brk - kink) > 0.02 * kink]
        brk = np.sort(np.append(brk, kink))
    return brk


class RadialProfile:
    """Piecewise Chebyshev table of H, H', H'' on [0, r_max] at one time, plus
    the mass function m(r) = r^{-3} int_0^r s^2 H(s) ds used by the potentials."""

    def __init__(self, t, table, r_max, f_table=None):
        self.t = t
        self.table = table
        self.r_max = r_max
        self._mass = table.integral_table(0, weight_power=2)
        self.total_mass = self._mass.total  # int_0^rmax s^2 H ds
        self._mass_small = None

    @classmethod
    def build(cls, profile, t, r_max=14.0, degree=12, tol=1e-8):
        ell = math.sqrt(profile.T - t)
        tab = ChebTable(radial_breaks(ell, r_max, log_kink_radius(profile, t)), degree)
        vals = np.zeros((3, len(tab.nodes)))
        if t > 0:
            chunk = 8
            for i in range(0, len(tab.nodes), chunk):
                vals[:, i:i + chunk] = radial_duhamel(profile, tab.nodes[i:i + chunk], t, 2, 1, 10, 8)
        tab.fit(vals.T)
        prof = cls(t, tab, r_max)
        prof.T = profile.T
        return prof

    def H(self, r, d=0):
        r = np.asarray(r, dtype=float)
        v = self.table(np.minimum(r, self.r_max), d)
        return np.where(r <= self.r_max, v, 0.0)

    def mass(self, r):
        """M(r) = int_0^r s^2 H(s) ds (constant beyond r_max)."""
        r = np.asarray(r, dtype=float)
        return self._mass(np.minimum(r, self.r_max), 0)

    def mean_mass_ratio(self, r):
        """m(r) = M(r) / r^3, continuous at r = 0 where it equals H(0)/3."""
        r = np.asarray(r, dtype=float)
        small = r < 1e-3 * self.table.breaks[1]
        rs = np.where(small, 1.0, r)
        m = self.mass(r) / rs ** 3
        H0 = self.H(0.0)
        H2 = self.H(0.0, 2)
        # M = H0 r^3/3 + H''(0) r^5/10 + ...
        return np.where(small, H0 / 3.0 + H2 * r * r / 10.0, m)


# --- residual audit -------------------------------------------------------------

def log_kink_radius(profile, t):
    """Radius where |x|^2 + T - t = 1, across which the log forcing has a kink
    (nan when there is no such radius or no log)."""
    d = 1.0 - (profile.T - t)
    return math.sqrt(d) if profile.has_log and d >= 0 else math.nan


def heat_residual(ev: HeatSolution, points, times, space_step=0.05, time_step=None,
                  eps_floor=1e-12, field=None):
    """Max relative residual |Delta h1 - d_t h1 - f1| / (|f1| + eps_floor).

    Laplacian and time derivative come from 4th-order finite differences of
    ``field`` (default: the evaluator's h1), one sample per (point, time).
    For the log variants the stencils lose their order where they straddle
    :func:`log_kink_radius`.
    """
    field = ev.h1 if field is None else field
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    times = np.broadcast_to(np.asarray(times, dtype=float), (len(points),))
    worst = 0.0
    for x, t in zip(points, times):
        if not 0 < t < ev.T:
            raise InvalidArgument(f"residual sample time {t} outside (0, T)")
        ht = time_step if time_step is not None else min(1e-2, (ev.T - t) / 8.0)
        if t < 4 * ht:
            raise InvalidArgument("sample too close to t = 0 for the time stencil")
        lap = fd_derivative(field, x, t, "laplacian", space_step)
        dt = fd_derivative(field, x, t, "time", ht, T=ev.T)
        f1 = ev.profile.f1(x, t)
        res = abs(lap - dt - f1) / (abs(f1) + eps_floor)
        worst = max(worst, float(res))
    return worst


def h1_eval(ev: HeatSolution, x, t):
    return ev.h1(x, t)


def h1_grad_eval(ev: HeatSolution, x, t):
    return ev.grad(x, t)


def h1_hess_eval(ev: HeatSolution, x, t):
    return ev.hess(x, t)
