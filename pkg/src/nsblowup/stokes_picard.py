"""Spectral Stokes propagator and Picard iteration for the perturbation u in
v = Z + u, where Z = delta * v_B is the explicit Stokes solution driven by the
scaled log-forcing.

The periodic box [-L, L)^3 stands in for R^3.  Time integration is
exponential (ETD): the heat factor e^{-|xi|^2 (t - s)} is applied exactly and
the force is taken piecewise linear in s between nodes, so the only time
error is the interpolation of the force.  Nodes follow the geometric ladder
with ``substeps`` nodes per level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, PicardDivergence
from .heat_forced import ForcingProfile, HeatSolution, Variant
from .potential_riesz import (FourierRiesz, PressureField, RadialPotential, VelocityField,
                              velocity_from_second, velocity_grad_from_third)


def etd_weights(z):
    """phi_a = (1 - (1 + z) e^{-z}) / z^2, phi_b = (z - 1 + e^{-z}) / z^2, so that
    int_0^D e^{-lam (D - s)} g(s) ds = D (phi_a g(0) + phi_b g(D)) for linear g."""
    z = np.asarray(z, dtype=float)
    small = z < 1e-2
    zs = np.where(small, 1.0, z)
    em = np.exp(-zs)
    pa = (1.0 - (1.0 + zs) * em) / zs ** 2
    pb = (zs - 1.0 + em) / zs ** 2
    sa = 0.5 - z / 3 + z ** 2 / 8 - z ** 3 / 30 + z ** 4 / 144
    sb = 0.5 - z / 6 + z ** 2 / 24 - z ** 3 / 120 + z ** 4 / 720
    return np.where(small, sa, pa), np.where(small, sb, pb)


def time_nodes(t_end, T=1.0, substeps=4):
    """0 = s_0 < ... < s_N = t_end with s_j = T (1 - 2^{-j/substeps}) below t_end."""
    if not 0 <= t_end < T:
        raise InvalidArgument(f"time {t_end} must lie in [0, T={T})")
    if substeps < 1:
        raise InvalidArgument("substeps must be >= 1")
    s = [0.0]
    j = 1
    while True:
        sj = T * (1.0 - 2.0 ** (-j / substeps))
        if sj >= t_end * (1 - 1e-12):
            break
        s.append(sj)
        j += 1
    if t_end > 0:
        s.append(float(t_end))
    return np.array(s)


class StokesGrid(FourierRiesz):
    """Periodic spectral grid with Leray projection and the heat factor."""

    def __init__(self, L=8.0, n=64):
        super().__init__(L, n)
        nyq = math.pi / self.h * (1 - 1e-12)
        self.kd = tuple(np.where(np.abs(kk) >= nyq, 0.0, kk) for kk in self.k)
        self.ksq = self.k[0] ** 2 + self.k[1] ** 2 + self.k[2] ** 2
        kd2 = self.kd[0] ** 2 + self.kd[1] ** 2 + self.kd[2] ** 2
        self.kd2 = np.where(kd2 > 0, kd2, 1.0)

    def forward(self, vec):
        """Transforms of the components of a grid vector field (n, n, n, 3)."""
        return np.stack([np.fft.rfftn(vec[..., i]) for i in range(vec.shape[-1])])

    def inverse(self, vhat):
        return np.stack([np.fft.irfftn(c, s=(self.n,) * 3, axes=(0, 1, 2)) for c in vhat], axis=-1)

    def leray(self, vhat):
        """delta_ij - xi_i xi_j / |xi|^2 with the Nyquist-free wavenumbers used for
        derivatives, so the output is discretely divergence free; the zero mode
        keeps 2/3 of each component, matching the isotropic Riesz convention."""
        kdot = sum(self.kd[i] * vhat[i] for i in range(3)) / self.kd2
        out = np.stack([vhat[i] - self.kd[i] * kdot for i in range(3)])
        out[:, 0, 0, 0] = vhat[:, 0, 0, 0] * (2.0 / 3.0)
        return out

    def grad(self, vhat):
        """Grid gradient [..., i, k] = d_k v_i from component transforms."""
        g = np.empty((self.n,) * 3 + (len(vhat), 3))
        for i, c in enumerate(vhat):
            for k in range(3):
                g[..., i, k] = np.fft.irfftn(1j * self.kd[k] * c, s=(self.n,) * 3, axes=(0, 1, 2))
        return g

    def pressure_hat(self, ghat):
        """P solving -Delta P = div G: P^ = i xi . G^ / |xi|^2 (zero mode 0)."""
        p = 1j * sum(self.kd[i] * ghat[i] for i in range(3)) / self.kd2
        p[0, 0, 0] = 0.0
        return p

    def interpolate_vector(self, vhat, points):
        points = np.atleast_2d(points)
        return np.stack([self.interpolate(c, points) for c in vhat], axis=-1)


class _ETDStepper:
    """Accumulates W(t) = int_0^t e^{(t - s) Delta} G(s) ds with G linear between nodes."""

    def __init__(self, grid: StokesGrid, nodes):
        self.grid = grid
        self.nodes = np.asarray(nodes, dtype=float)

    def run(self, ghats):
        """W^ at every node from the force transforms at every node."""
        W = [np.zeros_like(ghats[0])]
        for j in range(len(self.nodes) - 1):
            W.append(self.step(W[-1], ghats[j], ghats[j + 1], self.nodes[j + 1] - self.nodes[j]))
        return W

    def step(self, W, ga, gb, dt):
        z = self.grid.ksq * dt
        pa, pb = etd_weights(z)
        return np.exp(-z) * W + dt * (pa * ga + pb * gb)


def stokes_duhamel(force, t, points, grid: StokesGrid | None = None, T=1.0, substeps=16):
    """Z(x, t) = -P int_0^t e^{(t - s) Delta} F(s) ds at ``points``, the Stokes
    solution of Delta Z - grad P - d_t Z = F with zero data.  ``force(x, s)``
    returns (..., 3) vectors."""
    grid = StokesGrid() if grid is None else grid
    nodes = time_nodes(t, T, substeps)
    X = grid.grid_points()
    ghats = [grid.forward(np.asarray(force(X, s))) for s in nodes]
    W = _ETDStepper(grid, nodes).run(ghats)[-1]
    return grid.interpolate_vector(-grid.leray(W), points)


# --- explicit part Z ---------------------------------------------------------------------

_Z_CACHE = {}


def _zb_on_grid(heat: HeatSolution, grid: StokesGrid, t):
    """v_B and grad v_B at the grid nodes (cached; Z = delta v_B by linearity)."""
    key = (id(heat), grid.L, grid.n, float(t))
    hit = _Z_CACHE.get(key)
    if hit is None:
        X = grid.grid_points()
        if t == 0:
            hit = (np.zeros(X.shape), np.zeros(X.shape + (3,)))
        else:
            pot = RadialPotential(heat.radial_table(t))
            hit = (velocity_from_second(pot.second(X)), velocity_grad_from_third(pot.third(X)))
        _Z_CACHE[key] = hit
    return hit


_HEAT_B = {}


def heat_b(T=1.0):
    """Shared evaluator of the unscaled log-forced heat solution."""
    if T not in _HEAT_B:
        _HEAT_B[T] = HeatSolution(ForcingProfile(Variant.CRITICAL_LOG_B, T))
    return _HEAT_B[T]


# --- Picard ------------------------------------------------------------------------------

@dataclass
class PicardConfig:
    L: float = 8.0
    n: int = 64
    T: float = 1.0
    horizon: int = 3          # iterate on [0, t_horizon] of the ladder
    substeps: int = 4
    m_max: int = 12


@dataclass
class PicardState:
    delta: float
    eta: float
    iterates: int
    contraction_ratios: list
    x_norms: list
    residual: float
    converged: bool
    field: "PicardField" = field(default=None, repr=False)


class PicardProblem:
    """The map M(u) = S[(w . grad) w], w = u + delta v_B, on the node grid."""

    def __init__(self, delta, config: PicardConfig | None = None, heat: HeatSolution | None = None):
        if not 0 <= delta <= 1:
            raise InvalidArgument(f"delta must lie in [0, 1], got {delta}")
        self.delta = float(delta)
        self.cfg = PicardConfig() if config is None else config
        self.heat = heat_b(self.cfg.T) if heat is None else heat
        self.grid = StokesGrid(self.cfg.L, self.cfg.n)
        t_end = self.cfg.T * (1.0 - 2.0 ** -self.cfg.horizon)
        self.nodes = time_nodes(t_end, self.cfg.T, self.cfg.substeps)
        self.stepper = _ETDStepper(self.grid, self.nodes)
        X = self.grid.grid_points()
        self.weight = (1.0 + np.linalg.norm(X, axis=-1)) ** 2

    def zero(self):
        shape = (3,) + self.grid.k2.shape
        return [np.zeros(shape, complex) for _ in self.nodes]

    def forcing(self, uhats):
        """Transforms of G = (w . grad) w at every node."""
        g = self.grid
        out = []
        for uh, s in zip(uhats, self.nodes):
            zb, dzb = _zb_on_grid(self.heat, g, s)
            w = g.inverse(uh) + self.delta * zb
            dw = g.grad(uh) + self.delta * dzb
            out.append(g.forward(np.einsum("...ik,...k->...i", dw, w)))
        return out

    def apply(self, uhats):
        """(M u, G, W) at every node, with M u = -P W."""
        ghats = self.forcing(uhats)
        W = self.stepper.run(ghats)
        return [-self.grid.leray(w) for w in W], ghats, W

    def x_norm(self, uhats):
        """sup over nodes and grid points of (1 + |x|)^2 |u|."""
        best = 0.0
        for uh in uhats:
            u = self.grid.inverse(uh)
            best = max(best, float(np.max(self.weight * np.linalg.norm(u, axis=-1))))
        return best

    def diff_norm(self, a, b):
        return self.x_norm([x - y for x, y in zip(a, b)])


def picard_map(problem: PicardProblem, uhats):
    return problem.apply(uhats)[0]


def picard_solve(delta, eta=None, m_max=None, tol=None, config=None, heat=None):
    """Iterate u_{m+1} = M(u_m) from u_0 = 0.

    eta defaults to 4 x_norm(M 0); tol to 1e-6 eta.  Raises PicardDivergence
    when an iterate leaves the ball of radius 10 eta.
    """
    prob = PicardProblem(delta, config, heat)
    m_max = prob.cfg.m_max if m_max is None else int(m_max)
    u = prob.zero()
    u_next, G, W = prob.apply(u)
    x0 = prob.x_norm(u_next)
    eta = 4.0 * x0 if eta is None else float(eta)
    if tol is None:
        tol = 1e-6 * eta if eta > 0 else 1e-300
    tol = float(tol)
    norms, ratios = [x0], []
    prev_step = x0
    it = 1
    converged = prev_step < tol or x0 == 0.0
    while not converged and it < m_max:
        u = u_next
        u_next, G, W = prob.apply(u)
        it += 1
        xn = prob.x_norm(u_next)
        norms.append(xn)
        if xn > 10 * eta or not np.isfinite(xn):
            raise PicardDivergence(prob.delta, eta, xn)
        step = prob.diff_norm(u_next, u)
        ratios.append(step / prev_step if prev_step > 0 else 0.0)
        prev_step = step
        converged = step < tol
    # fixed-point residual of the returned iterate
    u_check = prob.apply(u_next)[0]
    residual = prob.diff_norm(u_check, u_next)
    state = PicardState(prob.delta, eta, it, ratios, norms, residual, converged,
                        PicardField(prob, u_next, G, W))
    return state


def default_candidates():
    return tuple(2.0 ** -j for j in range(1, 11))


def delta0_search(candidates=None, eta_rule=None, config=None, heat=None):
    """Largest candidate delta whose Picard run verifies, scanning upward from
    the smallest so that every smaller candidate verifies too.

    eta_rule(delta, x_norm_M0) -> eta; default is the 4 x_norm(M0) rule.
    Returns (delta_hat, {delta: status}); delta_hat = 0 when nothing passes.
    """
    candidates = default_candidates() if candidates is None else candidates
    status = {}
    best = 0.0
    for d in sorted(candidates):
        try:
            eta = None
            if eta_rule is not None:
                prob = PicardProblem(d, config, heat)
                eta = eta_rule(d, prob.x_norm(prob.apply(prob.zero())[0]))
            st = picard_solve(d, eta=eta, config=config, heat=heat)
            ok = picard_passed(st)
            status[d] = "verified" if ok else "unverified"
        except PicardDivergence:
            status[d] = "divergent"
            ok = False
        if not ok:
            break
        best = d
    return best, status


def picard_passed(state: PicardState):
    """Convergence with every contraction ratio < 1 and every iterate in the eta ball."""
    return bool(state.converged and all(r < 1 for r in state.contraction_ratios)
                and max(state.x_norms) <= state.eta)


# --- assembled solution ------------------------------------------------------------------

class PicardField:
    """u (and its pressure) at arbitrary (x, t) on [0, t_horizon], from the node
    transforms via a partial ETD step with the last force snapshots."""

    def __init__(self, problem: PicardProblem, uhats, ghats, whats):
        self.problem = problem
        self.uhats = uhats
        self.ghats = ghats
        self.whats = whats
        self._cache = {}

    @property
    def t_max(self):
        return float(self.problem.nodes[-1])

    def _state(self, t):
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        nodes = self.problem.nodes
        if not 0 <= t <= nodes[-1] * (1 + 1e-12):
            raise InvalidArgument(f"t={t} outside the Picard horizon [0, {nodes[-1]}]")
        g = self.problem.grid
        j = min(int(np.searchsorted(nodes, t, side="right")) - 1, len(nodes) - 2)
        D = nodes[j + 1] - nodes[j]
        th = (t - nodes[j]) / D
        G_t = (1 - th) * self.ghats[j] + th * self.ghats[j + 1]
        W_j = self.whats[j]
        W_t = self.problem.stepper.step(W_j, self.ghats[j], G_t, t - nodes[j]) if t > nodes[j] else W_j
        uh = -g.leray(W_t)
        ph = g.pressure_hat(G_t)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[t] = (uh, ph)
        return uh, ph

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        uh, _ = self._state(t)
        return self.problem.grid.interpolate_vector(uh, x.reshape(-1, 3)).reshape(x.shape)

    def grad(self, x, t):
        x = np.asarray(x, dtype=float)
        uh, _ = self._state(t)
        g = self.problem.grid
        pts = x.reshape(-1, 3)
        out = np.empty((len(pts), 3, 3))
        for i in range(3):
            for k in range(3):
                out[:, i, k] = g.interpolate(uh[i], pts, 1j * g.kd[k])
        return out.reshape(x.shape + (3,))

    def pressure(self, x, t):
        x = np.asarray(x, dtype=float)
        _, ph = self._state(t)
        return self.problem.grid.interpolate(ph, x.reshape(-1, 3)).reshape(x.shape[:-1])


class AssembledSolution:
    """v = delta v_B + u with pressure delta P_B + P_u and force delta f_B."""

    def __init__(self, state: PicardState):
        self.state = state
        self.u = state.field
        prob = self.u.problem
        self.delta = prob.delta
        self.zb = VelocityField(prob.heat)
        self.pb = PressureField(prob.heat)
        self.profile = prob.heat.profile.scaled(self.delta)
        self.T = prob.cfg.T

    def __call__(self, x, t):
        return self.delta * self.zb(x, t) + self.u(x, t)

    def grad(self, x, t):
        return self.delta * self.zb.grad(x, t) + self.u.grad(x, t)

    def pressure(self, x, t):
        return self.delta * self.pb(x, t) + self.u.pressure(x, t)

    def force(self, x, t):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 0] = self.profile.f1(x, t)
        return out


def blowup_solution_assemble(state: PicardState):
    return AssembledSolution(state)


# --- kernel bound --------------------------------------------------------------------------

def kernel_bound_audit(t=0.25, grid=None, width=None, n_octaves=9, n_dirs=48, slack=1.5, seed=0):
    """Empirical check of |e^{t Delta} P delta_0 (x)| <= C (|x| + sqrt t)^-3.

    A narrow normalised Gaussian stands in for the point mass.  Samples lie on
    shells from sqrt(t)/4 out to at most L/4 (beyond that the periodic images
    matter); C is fitted on a seeded random half and validated on the other.  Returns (C, worst_margin, passed).
    """
    grid = StokesGrid(8.0, 64) if grid is None else grid
    width = 2 * grid.h if width is None else width
    X = grid.grid_points()
    bump = np.exp(-np.sum(X * X, axis=-1) / (2 * width ** 2)) / (2 * math.pi * width ** 2) ** 1.5
    vec = np.zeros(X.shape)
    vec[..., 0] = bump
    vh = grid.leray(grid.forward(vec)) * np.exp(-grid.ksq * t)
    # Fibonacci directions on the sphere, four radii per octave
    j = np.arange(n_dirs) + 0.5
    z = 1 - 2 * j / n_dirs
    az = math.pi * (1 + math.sqrt(5.0)) * j
    dirs = np.stack([np.sqrt(1 - z * z) * np.cos(az), np.sqrt(1 - z * z) * np.sin(az), z], axis=-1)
    radii = math.sqrt(t) / 4 * 2.0 ** (np.arange(4 * n_octaves) / 4)
    radii = radii[radii <= grid.L / 4]
    pts = (radii[:, None, None] * dirs[None]).reshape(-1, 3)
    vals = np.linalg.norm(grid.interpolate_vector(vh, pts), axis=-1)
    env = (np.linalg.norm(pts, axis=1) + math.sqrt(t)) ** -3.0
    perm = np.random.default_rng(seed).permutation(len(pts))
    train = np.zeros(len(pts), bool)
    train[perm[: len(pts) // 2]] = True
    C = float(np.max(vals[train] / env[train]))
    margin = float(np.min(1.0 - vals[~train] / (slack * C * env[~train])))
    return C, margin, margin >= 0
