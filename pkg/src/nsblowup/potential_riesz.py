"""Newtonian potentials, second Riesz derivatives, and the velocity, pressure
and force fields built from the forced heat solution.

With Phi = (-Delta)^{-1} h1 the velocity is

    v = curl curl (Phi e1) = (-(d22 + d33) Phi, d21 Phi, d31 Phi).

For a radial source every second derivative of Phi is closed form in the
mass function m(r) = r^-3 int_0^r s^2 H(s) ds:

    d_i d_j Phi = A(r) xh_i xh_j + B(r) delta_ij,   A = 3m - H,  B = -m,

which is the production path ("radial").  Two generic paths are provided for
cross-validation on arbitrary scalar sources: a principal-value quadrature
("pv") and a Fourier multiplier on a truncated periodic box ("fourier").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import lebedev_rule

from ._quadrature import ChebTable, panel_rule
from .errors import CrossValidationError, InvalidArgument, InvalidConfiguration
from .fields import fd_derivative
from .heat_forced import HeatSolution, log_kink_radius, radial_breaks

_EYE = np.eye(3)


# --- generic potentials -------------------------------------------------------------

def _centered_radial_rule(x, R, extra=(), order=12, eps=0.0):
    """Panels on [eps, R] graded toward 0 and refined around the radii in extra."""
    brk = [eps, R]
    lo = max(eps, 1e-3)
    brk += list(lo * (min(1.0, R) / lo) ** (np.arange(11) / 10.0))
    brk += list(np.arange(1.0, R, 0.5))
    for c in extra:
        brk += [c + d for d in (-0.5, -0.2, -0.05, 0.0, 0.05, 0.2, 0.5)]
    brk = np.unique(np.clip(np.asarray(brk, dtype=float), eps, R))
    return panel_rule(brk, order)


def newton_potential(field, x, t, R=None, lebedev_order=41):
    """(1/4pi) int field(y, t) / |x - y| dy by quadrature in spherical
    coordinates centred at x, where the 1/|x - y| singularity is cancelled by
    the Jacobian.  ``field`` must decay like a Gaussian beyond |y| ~ 14."""
    x = np.asarray(x, dtype=float)
    R = (np.linalg.norm(x) + 14.0) if R is None else R
    rho, wr = _centered_radial_rule(x, R, extra=(np.linalg.norm(x),))
    om, wa = lebedev_rule(lebedev_order)
    pts = x + rho[:, None, None] * om.T[None]
    vals = np.asarray(field(pts, t))
    return float(np.einsum("r,a,ra->", wr * rho, wa, vals) / (4 * math.pi))


def riesz_second_pv(i, j, field, x, t, eps0=0.05, R=None, lebedev_order=53):
    """d_i d_j (-Delta)^{-1} field at x as PV integral plus local term.

    The kernel (3 w_i w_j - delta_ij) / (4 pi rho^3) is integrated over
    eps < |x - y| < R with the field value at x subtracted (the kernel has zero
    spherical mean, so this leaves the PV unchanged), then extrapolated to
    eps -> 0 from eps0 and eps0/2 using the O(eps^2) error law.  The local term
    -delta_ij/3 field(x) is pinned by the trace identity sum_i d_i^2 = -Id.
    """
    x = np.asarray(x, dtype=float)
    R = (np.linalg.norm(x) + 14.0) if R is None else R
    om, wa = lebedev_rule(lebedev_order)
    om = om.T
    ker = (3.0 * om[:, i] * om[:, j] - (1.0 if i == j else 0.0)) / (4 * math.pi)
    g0 = float(np.asarray(field(x[None], t))[0])
    vals = []
    for eps in (eps0, eps0 / 2):
        rho, wr = _centered_radial_rule(x, R, extra=(np.linalg.norm(x),), eps=eps)
        pts = x - rho[:, None, None] * om[None]
        g = np.asarray(field(pts, t)) - g0
        vals.append(float(np.einsum("r,a,ra->", wr / rho, wa * ker, g)))
    pv = vals[1] + (vals[1] - vals[0]) / 3.0
    return pv - (g0 / 3.0 if i == j else 0.0)


class FourierRiesz:
    """Riesz multipliers on the periodic box [-L, L)^3 with n points per axis.

    The symbol of d_i d_j (-Delta)^{-1} is -xi_i xi_j / |xi|^2.  The zero mode
    of the periodic problem is undetermined; it is assigned the isotropic
    value -mean(field) delta_ij / 3, which restores the trace identity exactly.
    """

    def __init__(self, L=12.0, n=128):
        if n % 2:
            raise InvalidArgument("Fourier resolution must be even")
        self.L = float(L)
        self.n = int(n)
        self.h = 2 * self.L / self.n
        self.axis = -self.L + self.h * np.arange(self.n)
        k = 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        kr = 2 * np.pi * np.fft.rfftfreq(self.n, d=self.h)
        self.k = (k[:, None, None], k[None, :, None], kr[None, None, :])
        k2 = self.k[0] ** 2 + self.k[1] ** 2 + self.k[2] ** 2
        k2[0, 0, 0] = 1.0
        self.k2 = k2

    def grid_points(self):
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)

    def transform(self, values):
        """Forward transform of grid samples (n, n, n)."""
        return np.fft.rfftn(values)

    def symbol(self, i, j):
        s = -self.k[i] * self.k[j] / self.k2
        s = np.array(s, copy=True) if np.ndim(s) == 3 else np.broadcast_to(s, self.k2.shape).copy()
        s[0, 0, 0] = -1.0 / 3.0 if i == j else 0.0
        return s

    def apply(self, ghat, i, j):
        """Grid values of d_i d_j (-Delta)^{-1} g from its transform."""
        return np.fft.irfftn(ghat * self.symbol(i, j), s=(self.n,) * 3, axes=(0, 1, 2))

    def derivative(self, ghat, k):
        """Spectral d_k of a grid field given its transform."""
        kk = self.k[k]
        kk = np.where(np.abs(kk) >= np.pi / self.h * (1 - 1e-12), 0.0, kk)  # Nyquist
        return np.fft.irfftn(1j * kk * ghat, s=(self.n,) * 3, axes=(0, 1, 2))

    def interpolate(self, ghat, points, symbol=None):
        """Trigonometric interpolant of the (optionally multiplied) field at
        arbitrary points, by direct summation over all modes."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        c = ghat if symbol is None else ghat * symbol
        n = self.n
        # full-spectrum weights for the half-spectrum storage
        wts = np.full(c.shape[2], 2.0)
        wts[0] = 1.0
        if n % 2 == 0:
            wts[-1] = 1.0
        kx, ky, kz = (np.broadcast_to(kk, c.shape).ravel() for kk in self.k)
        c = (c * wts[None, None, :]).ravel()
        # the Nyquist planes carry no imaginary part after projection to real fields
        out = np.empty(len(points))
        shift = points + self.L
        for m, p in enumerate(shift):
            phase = np.exp(1j * (kx * p[0] + ky * p[1] + kz * p[2]))
            out[m] = np.real(np.sum(c * phase)) / n ** 3
        return out


def riesz_second_fourier(i, j, field, x, t, L=12.0, n=128, fr=None):
    fr = FourierRiesz(L, n) if fr is None else fr
    ghat = fr.transform(np.asarray(field(fr.grid_points(), t)))
    return fr.interpolate(ghat, np.atleast_2d(x), fr.symbol(i, j))


def riesz_second(i, j, field, x, t, method="pv", **kw):
    """d_i d_j (-Delta)^{-1} field at points x by the PV or Fourier path."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if method == "pv":
        return np.array([riesz_second_pv(i, j, field, p, t, **kw) for p in x])
    if method == "fourier":
        return riesz_second_fourier(i, j, field, x, t, **kw)
    raise InvalidArgument(f"unknown Riesz method {method!r}")


# --- radial closed forms ------------------------------------------------------------

class RadialPotential:
    """Closed-form derivatives of Phi = (-Delta)^{-1} h1 for radial h1 at one time."""

    def __init__(self, prof, scale=1.0):
        self.prof = prof
        self.scale = scale

    def _parts(self, r):
        H = self.prof.H(r)
        H1 = self.prof.H(r, 1)
        m = self.prof.mean_mass_ratio(r)
        A = 3 * m - H
        small = r < 1e-3 * self.prof.table.breaks[1]
        rs = np.where(small, 1.0, r)
        H2_0 = self.prof.H(0.0, 2)
        A_over_r = np.where(small, -H2_0 * r / 5.0, A / rs)
        s = self.scale
        return s * H, s * H1, s * m, s * A, s * A_over_r

    def phi_grad(self, x):
        """d_j Phi = -m(r) x_j."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return -self.scale * self.prof.mean_mass_ratio(r)[..., None] * x

    def second(self, x):
        """Matrix d_i d_j Phi, shape (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        _, _, m, A, _ = self._parts(r)
        xh = _unit(x, r)
        return A[..., None, None] * xh[..., :, None] * xh[..., None, :] - m[..., None, None] * _EYE

    def third(self, x):
        """Tensor d_k d_i d_j Phi, indexed [..., i, j, k]."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        H, H1, m, A, Ar = self._parts(r)
        xh = _unit(x, r)
        c3 = (-5.0 * Ar - H1)[..., None, None, None]
        xxx = xh[..., :, None, None] * xh[..., None, :, None] * xh[..., None, None, :]
        sym = (_EYE[:, None, :] * xh[..., None, :, None]      # delta_ik x_j
               + _EYE[None, :, :] * xh[..., :, None, None]    # delta_jk x_i
               + _EYE[:, :, None] * xh[..., None, None, :])   # delta_ij x_k
        return c3 * xxx + Ar[..., None, None, None] * sym


def _unit(x, r):
    rs = np.where(r > 0, r, 1.0)
    return x / rs[..., None]


def velocity_from_second(g):
    """v = (-(g22 + g33), g21, g31) from the Hessian of Phi."""
    return np.stack([-(g[..., 1, 1] + g[..., 2, 2]), g[..., 1, 0], g[..., 2, 0]], axis=-1)


def velocity_grad_from_third(g3):
    """grad v[i, k] = d_k v_i from third derivatives d_k d_i d_j Phi."""
    return np.stack([-(g3[..., 1, 1, :] + g3[..., 2, 2, :]), g3[..., 1, 0, :], g3[..., 2, 0, :]],
                    axis=-2)


# --- cutoff -----------------------------------------------------------------------------

def _smooth_step(s):
    """S(s) = g(s) / (g(s) + g(1 - s)) with g(s) = e^{-1/s}; values, S', S''."""
    s = np.asarray(s, dtype=float)

    def g(u):
        up = np.where(u > 0, u, 1.0)
        e = np.where(u > 0, np.exp(-1.0 / up), 0.0)
        g1 = np.where(u > 0, e / up ** 2, 0.0)
        g2 = np.where(u > 0, e * (1.0 - 2.0 * up) / up ** 4, 0.0)
        return e, g1, g2

    n0, n1, n2 = g(s)
    m0, m1, m2 = g(1.0 - s)
    D = n0 + m0
    D1 = n1 - m1
    D2 = n2 + m2
    S = n0 / D
    S1 = (n1 * D - n0 * D1) / D ** 2
    S2 = (n2 * D - n0 * D2) / D ** 2 - 2 * D1 * (n1 * D - n0 * D1) / D ** 3
    return S, S1, S2


@dataclass(frozen=True)
class CutoffSpec:
    """phi(x, t) = psi(|x|) chi(t), with psi = 1 on r <= 1, 0 on r >= 2 and
    chi = 0 on t <= T/4, 1 on t >= T/2, both glued by the e^{-1/s} step."""

    T: float = 1.0

    def psi(self, r):
        S, S1, S2 = _smooth_step(2.0 - np.asarray(r, dtype=float))
        return S, -S1, S2

    def chi(self, t):
        q = self.T / 4.0
        S, S1, _ = _smooth_step((t - q) / q)
        return float(S), float(S1) / q

    def phi(self, x, t):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return self.psi(r)[0] * self.chi(t)[0]

    def parts(self, x, t):
        """phi, grad phi, Hessian phi, d_t phi at points x."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        p0, p1, p2 = self.psi(r)
        c0, c1 = self.chi(t)
        xh = _unit(x, r)
        rs = np.where(r > 0, r, 1.0)
        p1r = np.where(r > 0, p1 / rs, 0.0)
        outer = xh[..., :, None] * xh[..., None, :]
        hess = c0 * ((p2 - p1r)[..., None, None] * outer + p1r[..., None, None] * _EYE)
        return c0 * p0, (c0 * p1)[..., None] * xh, hess, c1 * p0


# --- velocity, pressure ----------------------------------------------------------------

class VelocityField:
    """v = curl curl (-Delta)^{-1} (h1 e1), optionally localised by a cutoff
    as v = curl(phi curl (-Delta)^{-1} h).

    method: "radial" (closed form, default), "pv" or "fourier" (generic
    Riesz paths used for cross-validation; cutoff-free only).
    """

    def __init__(self, source: HeatSolution, method="radial", cutoff: CutoffSpec | None = None,
                 fourier=None, pv_eps=0.05):
        if method not in ("radial", "pv", "fourier"):
            raise InvalidArgument(f"unknown Riesz method {method!r}")
        if cutoff is not None and method != "radial":
            raise InvalidConfiguration("the cutoff configuration is only implemented on the radial path")
        self.source = source
        self.method = method
        self.cutoff = cutoff
        self.fourier = fourier
        self.pv_eps = pv_eps
        self._fourier_cache = {}

    @property
    def T(self):
        return self.source.T

    def potential(self, t):
        return RadialPotential(self.source.radial_table(t))

    # generic Riesz paths -----------------------------------------------------
    def _h1_field(self, t):
        prof = self.source.radial_table(t)
        return lambda y, s: prof.H(np.linalg.norm(y, axis=-1))

    def _dh1_field(self, t, k):
        prof = self.source.radial_table(t)

        def f(y, s):
            y = np.asarray(y, dtype=float)
            r = np.linalg.norm(y, axis=-1)
            return prof.H(r, 1) * _unit(y, r)[..., k]
        return f

    def _fourier_state(self, t):
        st = self._fourier_cache.get(t)
        if st is None:
            fr = self.fourier if self.fourier is not None else FourierRiesz()
            prof = self.source.radial_table(t)
            X = fr.grid_points()
            hhat = fr.transform(prof.H(np.linalg.norm(X, axis=-1)))
            st = (fr, hhat)
            self._fourier_cache = {t: st}
        return st

    def _generic_second(self, x, t):
        """Hessian of Phi at each point via the PV or Fourier path."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        g = np.zeros((len(x), 3, 3))
        pairs = [(1, 1), (2, 2), (1, 0), (2, 0)]
        if self.method == "pv":
            f = self._h1_field(t)
            for n, p in enumerate(x):
                for i, j in pairs:
                    g[n, i, j] = riesz_second_pv(i, j, f, p, t, self.pv_eps)
        else:
            fr, hhat = self._fourier_state(t)
            for i, j in pairs:
                g[:, i, j] = fr.interpolate(hhat, x, fr.symbol(i, j))
        return g

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        if t == 0:
            return np.zeros(x.shape)
        if self.method != "radial":
            return velocity_from_second(self._generic_second(x.reshape(-1, 3), t)).reshape(x.shape)
        pot = self.potential(t)
        vb = velocity_from_second(pot.second(x))
        if self.cutoff is None:
            return vb
        phi, dphi, _, _ = self.cutoff.parts(x, t)
        c = self._curl_phi(pot, x)
        return phi[..., None] * vb + np.cross(dphi, c)

    @staticmethod
    def _curl_phi(pot, x):
        """curl(Phi e1) = (0, d3 Phi, -d2 Phi)."""
        dP = pot.phi_grad(x)
        return np.stack([np.zeros(dP.shape[:-1]), dP[..., 2], -dP[..., 1]], axis=-1)

    def grad(self, x, t):
        """grad v[..., i, k] = d_k v_i."""
        x = np.asarray(x, dtype=float)
        if t == 0:
            return np.zeros(x.shape + (3,))
        if self.method == "pv":
            return self._pv_grad(x.reshape(-1, 3), t).reshape(x.shape + (3,))
        if self.method == "fourier":
            return self._fourier_grad(x.reshape(-1, 3), t).reshape(x.shape + (3,))
        pot = self.potential(t)
        gv = velocity_grad_from_third(pot.third(x))
        if self.cutoff is None:
            return gv
        vb = velocity_from_second(pot.second(x))
        phi, dphi, hphi, _ = self.cutoff.parts(x, t)
        c = self._curl_phi(pot, x)
        g2 = pot.second(x)
        # d_k c = (0, g_{3k}, -g_{2k})
        dc = np.stack([np.zeros(g2.shape[:-1]), g2[..., 2, :], -g2[..., 1, :]], axis=-2)  # [q, k]
        out = phi[..., None, None] * gv + vb[..., :, None] * dphi[..., None, :]
        # d_k (grad phi x c)_i = eps_ipq (d_k d_p phi c_q + d_p phi d_k c_q)
        out = out + np.einsum("ipq,...pk,...q->...ik", _LEVI, hphi, c)
        out = out + np.einsum("ipq,...p,...qk->...ik", _LEVI, dphi, dc)
        return out

    def _pv_grad(self, x, t):
        out = np.zeros((len(x), 3, 3))
        for k in range(3):
            f = self._dh1_field(t, k)
            for n, p in enumerate(x):
                r22 = riesz_second_pv(1, 1, f, p, t, self.pv_eps)
                r33 = riesz_second_pv(2, 2, f, p, t, self.pv_eps)
                r21 = riesz_second_pv(1, 0, f, p, t, self.pv_eps)
                r31 = riesz_second_pv(2, 0, f, p, t, self.pv_eps)
                out[n, :, k] = (-(r22 + r33), r21, r31)
        return out

    def _fourier_grad(self, x, t):
        fr, hhat = self._fourier_state(t)
        out = np.zeros((len(x), 3, 3))
        for k in range(3):
            dk = 1j * fr.k[k]
            s = lambda i, j: fr.symbol(i, j) * dk
            out[:, 0, k] = fr.interpolate(hhat, x, -(s(1, 1) + s(2, 2)))
            out[:, 1, k] = fr.interpolate(hhat, x, s(1, 0))
            out[:, 2, k] = fr.interpolate(hhat, x, s(2, 0))
        return out


_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0


class ForcingPotential:
    """Closed-form radial table of Psi = (-Delta)^{-1} f1 derivatives at one time."""

    def __init__(self, profile, t, degree=12, r_max=14.0):
        ell = math.sqrt(profile.T - t)
        tab = ChebTable(radial_breaks(ell, r_max, log_kink_radius(profile, t)), degree)
        tab.fit(profile.f1_radial(tab.nodes, t)[:, None])
        self.table = tab
        self.mass = tab.integral_table(0, weight_power=2)
        self.r_max = r_max

    def f1(self, r):
        return self.table(np.minimum(r, self.r_max), 0)

    def m(self, r):
        """r^-3 int_0^r s^2 f1 ds, with its r -> 0 limit f1(0)/3."""
        r = np.asarray(r, dtype=float)
        small = r < 1e-3 * self.table.breaks[1]
        rs = np.where(small, 1.0, r)
        M = self.mass(np.minimum(r, self.r_max), 0)
        return np.where(small, self.f1(0.0) / 3.0, M / rs ** 3)


class PressureField:
    """P = d_1 (-Delta)^{-1} f1 = -m_f(r) x1, the reduced form of
    (Delta - d_t) d_1 (-Delta)^{-1} h1 obtained from the heat equation."""

    def __init__(self, source: HeatSolution):
        self.source = source
        self._cache = {}

    @property
    def T(self):
        return self.source.T

    def _pot(self, t):
        p = self._cache.get(t)
        if p is None:
            p = ForcingPotential(self.source.profile, t)
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[t] = p
        return p

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return -self._pot(t).m(r) * x[..., 0]

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        pot = self._pot(t)
        r = np.linalg.norm(x, axis=-1)
        m = pot.m(r)
        rs = np.where(r > 0, r, 1.0)
        dm = np.where(r > 0, (pot.f1(r) - 3 * m) / rs, 0.0)
        xh = _unit(x, r)
        out = -(dm * x[..., 0])[..., None] * xh
        out[..., 0] -= m
        return out


def pressure_unreduced(vf: VelocityField, x, t, space_step=1e-2, time_step=None):
    """(Delta - d_t) d_1 Phi by finite differences, for auditing PressureField."""
    def d1phi(y, s):
        return vf.potential(s).phi_grad(y)[..., 0]
    ht = time_step if time_step is not None else min(1e-3, (vf.T - t) / 8.0)
    lap = fd_derivative(d1phi, x, t, "laplacian", space_step)
    dt = fd_derivative(d1phi, x, t, "time", ht, T=vf.T)
    return lap - dt


# --- lower-order force, total force, residual ------------------------------------------

def velocity_eval(vf: VelocityField, x, t):
    return vf(x, t)


def velocity_grad_eval(vf: VelocityField, x, t):
    return vf.grad(x, t)


def pressure_eval(pf: PressureField, x, t):
    return pf(x, t)


def convective(vf, x, t):
    """(v . grad) v assembled from the velocity and its gradient."""
    v = vf(x, t)
    g = vf.grad(x, t)
    return np.einsum("...ik,...k->...i", g, v)


def fb_eval(vf: VelocityField, x, t, space_step=1e-2, time_step=None):
    """Lower-order force of the cutoff construction (four terms)::

        2 (grad phi . grad) h + h (Delta phi - d_t phi)
        + (Delta - d_t)[(phi - 1) grad d_1 Phi] + (Delta - d_t)[grad phi x curl(Phi e1)]

    The last two terms are differenced with 4th-order stencils.
    """
    if vf.cutoff is None:
        raise InvalidConfiguration("f_b is only defined for the cutoff configuration")
    x = np.asarray(x, dtype=float)
    cut = vf.cutoff
    heat = vf.source
    ht = time_step if time_step is not None else min(1e-3, (vf.T - t) / 8.0)

    def term3(y, s):
        pot = vf.potential(s)
        phi = cut.phi(y, s)
        return (phi - 1.0)[..., None] * pot.second(y)[..., :, 0]

    def term4(y, s):
        pot = vf.potential(s)
        _, dphi, _, _ = cut.parts(y, s)
        return np.cross(dphi, VelocityField._curl_phi(pot, y))

    out = np.zeros(x.shape)
    for n, p in enumerate(x.reshape(-1, 3)):
        phi, dphi, hphi, dtphi = cut.parts(p, t)
        prof = heat.radial_table(t)
        r = np.linalg.norm(p)
        h = prof.H(r)
        gh = prof.H(r, 1) * _unit(p, np.asarray(r))
        lap_phi = np.trace(hphi)
        val = np.zeros(3)
        val[0] = 2 * np.dot(dphi, gh) + h * (lap_phi - dtphi)
        if np.any(np.abs(dphi) > 0) or abs(phi - 1.0) > 0 or _near_support_edge(p, t, cut, space_step, ht):
            for term in (term3, term4):
                lap = fd_derivative(term, p, t, "laplacian", space_step)
                dtt = fd_derivative(term, p, t, "time", ht, T=vf.T)
                val += lap - dtt
        out.reshape(-1, 3)[n] = val
    return out


def _near_support_edge(p, t, cut, hs, ht):
    r = np.linalg.norm(p)
    return r > 1.0 - 2.5 * hs or t < cut.T / 2 + 2.5 * ht


def force_assemble(vf: VelocityField, x, t, fb=None, **fd):
    """Total force: f phi - (v.grad)v + f_b with a cutoff, f - (v.grad)v without."""
    x = np.asarray(x, dtype=float)
    prof = vf.source.profile
    f = np.zeros(x.shape)
    f[..., 0] = prof.f1(x, t)
    conv = convective(vf, x, t)
    if vf.cutoff is None:
        return f - conv
    phi = vf.cutoff.phi(x, t)
    fb = fb_eval(vf, x, t, **fd) if fb is None else fb
    return phi[..., None] * f - conv + fb


def ns_residual(velocity, pressure, force, samples, space_step=1e-2, time_step=None,
                T=1.0, eps_floor=1e-12, nonlinear=True):
    """Max over samples of |Delta v - (v.grad)v - grad P - d_t v - F| / (|F| + eps_floor).

    velocity: field with ``__call__`` and ``grad``; pressure, force: fields.
    samples: iterable of (x, t).  With ``nonlinear=False`` the convective
    term is dropped (linear Stokes check).
    """
    worst = 0.0
    for x, t in samples:
        x = np.asarray(x, dtype=float)
        ht = time_step if time_step is not None else min(1e-3, (T - t) / 8.0)
        lap = fd_derivative(velocity, x, t, "laplacian", space_step)
        dt = fd_derivative(velocity, x, t, "time", ht, T=T)
        gp = fd_derivative(pressure, x, t, "gradient", space_step)
        F = np.asarray(force(x, t))
        res = lap - gp - dt - F
        if nonlinear:
            res = res - np.asarray(velocity.grad(x, t)) @ np.asarray(velocity(x, t))
        worst = max(worst, float(np.linalg.norm(res) / (np.linalg.norm(F) + eps_floor)))
    return worst


def cross_validate(a, b, tol, what="Riesz paths"):
    """Raise CrossValidationError when |a - b| exceeds 10x the combined tolerance."""
    d = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    if d > 10 * tol:
        raise CrossValidationError(what + " disagree", d, 10 * tol)
    return d
