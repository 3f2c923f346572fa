"""Experiment runner: ``nsblowup [run] {heat,velocity,audit,picard,baseline,all} [config]``.

The config file holds ``key = value`` lines (``#`` starts a comment).  Flags
override the file.  Outputs go to ``--out``: one CSV per series with columns
k, t_k, value, error_estimate, tail_estimate, plus ``report.json`` carrying
every series, fit and audit together with the config hash and version.
The exit status is 1 iff some audit failed (2 for configuration errors).

Set NSBLOWUP_WORKERS to run the suites of ``all`` in parallel threads.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .audit import (Inequality, RateModel, audit_cloud, baseline_supercritical, blowup_fit,
                    bound_audit, critical_norm_report, energy_report, evaluate_on_cloud,
                    magnitude, symmetry_check)
from .fields import make_time_ladder
from .heat_forced import ForcingProfile, HeatSolution, Variant, heat_residual
from .potential_riesz import (FourierRiesz, PressureField, VelocityField, cross_validate,
                              force_assemble, ns_residual)
from .stokes_picard import (PicardConfig, StokesGrid, blowup_solution_assemble, delta0_search,
                            heat_b, kernel_bound_audit, picard_passed, picard_solve,
                            stokes_duhamel)

SUBCOMMANDS = ("heat", "velocity", "audit", "picard", "baseline", "all")
CSV_COLUMNS = ("k", "t_k", "value", "error_estimate", "tail_estimate")
WORKERS_ENV = "NSBLOWUP_WORKERS"


class ConfigError(ValueError):
    def __init__(self, key, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"config key {key!r}{where}: {message}")
        self.key = key
        self.line = line


@dataclass
class ExperimentConfig:
    variant: str = "A"
    T: float = 1.0
    k_max: int = 12
    grid_L: float = 8.0
    grid_n: int = 64
    tol: float = 1e-8
    delta: float = 0.01
    seed: int = 0
    cloud_size: int = 100
    picard_horizon: int = 3
    audits: str = "all"
    out: str = "nsblowup-out"

    def validate(self):
        if self.variant not in ("A", "B"):
            raise ConfigError("variant", f"must be A or B, got {self.variant!r}")
        if not self.T > 0:
            raise ConfigError("T", f"must be positive, got {self.T}")
        if self.k_max < 1:
            raise ConfigError("k_max", f"must be >= 1, got {self.k_max}")
        if not self.grid_L > 0:
            raise ConfigError("grid_L", f"must be positive, got {self.grid_L}")
        if self.grid_n < 8 or self.grid_n % 2:
            raise ConfigError("grid_n", f"must be an even integer >= 8, got {self.grid_n}")
        if not self.tol > 0:
            raise ConfigError("tol", f"must be positive, got {self.tol}")
        if not 0 < self.delta <= 1:
            raise ConfigError("delta", f"must lie in (0, 1], got {self.delta}")
        if self.cloud_size < 4:
            raise ConfigError("cloud_size", f"must be >= 4, got {self.cloud_size}")
        if self.picard_horizon < 1:
            raise ConfigError("picard_horizon", f"must be >= 1, got {self.picard_horizon}")
        return self

    def digest(self):
        d = asdict(self)
        d.pop("out")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CAST = {"float": float, "int": int, "str": str}


def _coerce(key, raw, line=None):
    kind = _TYPES[key]
    try:
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return _CAST[kind](raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind}", line) from None


def parse_config(text):
    """Parse ``key = value`` lines into a dict of typed values."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, "expected 'key = value'", n)
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(key, "unknown key", n)
        out[key] = _coerce(key, raw, n)
    return out


def load_config(path=None, overrides=None):
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config(fh.read()))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return ExperimentConfig(**values).validate()


# --- report bundle -------------------------------------------------------------------

@dataclass
class ReportBundle:
    series: dict = field(default_factory=dict)    # name -> list of (k, t, value, err, tail)
    records: dict = field(default_factory=dict)   # name -> JSON-able dict
    audits: dict = field(default_factory=dict)    # name -> bool

    def add_series(self, name, rows):
        self.series[name] = [tuple(float(x) if i else int(x) for i, x in enumerate(r)) for r in rows]

    def add_report(self, prefix, report):
        for name in sorted(report.series):
            rows = [(k, t, r.value, r.error, r.tail)
                    for k, (t, r) in enumerate(zip(report.times, report.series[name]))]
            self.add_series(f"{prefix}_{name}", rows)

    def audit(self, name, passed, **info):
        self.audits[name] = bool(passed)
        self.records[name] = {"pass": bool(passed), **info}

    def merge(self, other):
        self.series.update(other.series)
        self.records.update(other.records)
        self.audits.update(other.audits)

    @property
    def failed(self):
        return sorted(k for k, v in self.audits.items() if not v)


def _safe_name(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def emit(bundle: ReportBundle, out_dir, fmt="both", config: ExperimentConfig | None = None):
    """Write CSV tables and/or the structured JSON report; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if fmt in ("csv", "both"):
        for name in sorted(bundle.series):
            p = os.path.join(out_dir, _safe_name(name) + ".csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for row in bundle.series[name]:
                    w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
            paths.append(p)
    if fmt in ("structured", "both"):
        doc = {
            "version": __version__,
            "config": asdict(config) if config is not None else None,
            "config_hash": config.digest() if config is not None else None,
            "series": {k: {"columns": list(CSV_COLUMNS), "rows": [list(r) for r in v]}
                       for k, v in sorted(bundle.series.items())},
            "records": _jsonable(bundle.records),
            "failed_audits": bundle.failed,
        }
        p = os.path.join(out_dir, "report.json")
        with open(p, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=True)
            fh.write("\n")
        paths.append(p)
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# --- suites -----------------------------------------------------------------------------

class Context:
    """Shared evaluators for one run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.ladder = make_time_ladder(cfg.T, cfg.k_max)
        self.profile = ForcingProfile(Variant(cfg.variant), cfg.T)
        self.heat = HeatSolution(self.profile, tol=cfg.tol)
        self.vel = VelocityField(self.heat)
        self.pres = PressureField(self.heat)
        self.rng_seed = cfg.seed

    def heat_for(self, variant):
        if variant == self.cfg.variant:
            return self.heat
        return HeatSolution(ForcingProfile(Variant(variant), self.cfg.T), tol=self.cfg.tol)

    def residual_cloud(self, n, r_max=2.0, t_lo=0.25, t_hi=0.9, seed_offset=0):
        rng = np.random.default_rng(self.cfg.seed + seed_offset)
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pts = d * (r_max * rng.uniform(size=n) ** (1 / 3))[:, None]
        ts = self.cfg.T * rng.uniform(t_lo, t_hi, size=n)
        return pts, ts


def _rate_fit(ctx, heat, model):
    lad = ctx.ladder
    vals = [float(heat.radial(np.array([0.0]), t)[0, 0]) for t in lad.levels]
    km = lad.k_max
    fit = blowup_fit(vals, lad, model, fit_from=min(4, km - 1), bound_from=min(6, km))
    return vals, fit


def suite_heat(ctx: Context):
    b = ReportBundle()
    cfg = ctx.cfg
    model = RateModel.LOG if cfg.variant == "A" else RateModel.LOGLOG
    vals, fit = _rate_fit(ctx, ctx.heat, model)
    b.add_series("h1_origin", [(k, t, v, cfg.tol, 0.0) for k, (t, v) in enumerate(zip(ctx.ladder, vals))])
    b.records["h1_rate_fit"] = {"model": model.value, "slope": fit.slope, "intercept": fit.intercept,
                                "lower_const": fit.lower_const, "monotone": fit.monotone}
    b.audit("h1_monotone_origin", fit.monotone)
    b.audit("h1_rate_lower_const_positive", fit.lower_const > 0, lower_const=fit.lower_const)
    n = min(cfg.cloud_size, 100)
    pts, ts = ctx.residual_cloud(n)
    res = heat_residual(ctx.heat, pts, ts)
    res2 = heat_residual(ctx.heat, pts, ts, space_step=0.025, time_step=0.005)
    b.audit("heat_residual", res < 1e-3, residual=res, residual_half_step=res2,
            reduction=res / max(res2, 1e-300), cloud=pts, times=ts)
    return b


def _div_defect(g):
    """|trace grad v| / |grad v|_F per point (0 where grad v vanishes)."""
    nrm = np.linalg.norm(g.reshape(len(g), -1), axis=1)
    tr = np.abs(np.trace(g, axis1=1, axis2=2))
    return np.where(nrm > 0, tr / np.where(nrm > 0, nrm, 1.0), 0.0)


def suite_velocity(ctx: Context):
    b = ReportBundle()
    cfg = ctx.cfg
    lad = ctx.ladder
    v0 = [float(ctx.vel(np.zeros(3), t)[0]) for t in lad.levels]
    b.add_series("v1_origin", [(k, t, v, cfg.tol, 0.0) for k, (t, v) in enumerate(zip(lad, v0))])
    b.audit("v_origin_increasing", bool(np.all(np.diff(np.abs(v0)) > 0)))
    # divergence on a seeded cloud at ladder times, radial and Fourier paths
    pts, ts = audit_cloud(max(cfg.cloud_size // 4, 8), seed=cfg.seed, r_max=2.0,
                          t_levels=[t for t in lad.levels[1:]], T=1.0)
    ts = ts * cfg.T
    g = evaluate_on_cloud(ctx.vel.grad, pts, ts)
    div = _div_defect(g)
    b.audit("divergence_radial", float(np.max(div)) <= 1e-3, worst=float(np.max(div)))
    fv = VelocityField(ctx.heat, method="fourier", fourier=FourierRiesz(12.0, cfg.grid_n * 2))
    t_mid = lad.levels[min(2, lad.k_max)]
    sub = pts[:8]
    gf = fv.grad(sub, t_mid)
    divf = _div_defect(gf)
    b.audit("divergence_fourier", float(np.max(divf)) <= 1e-3, worst=float(np.max(divf)))
    va = ctx.vel(sub, t_mid)
    vb = fv(sub, t_mid)
    try:
        d = cross_validate(va, vb, 1e-3 * float(np.max(np.abs(va))))
        b.audit("riesz_cross_validation", True, discrepancy=d)
    except Exception as exc:  # recorded, run continues
        b.audit("riesz_cross_validation", False, error=str(exc))
    # part (b) critical norm of the total force
    F = lambda x, t: force_assemble(ctx.vel, x, t)
    rep = critical_norm_report(F, lad, R=30.0)
    b.add_report("partb", rep)
    vals = rep.values("F_L3/2")
    k4 = min(4, lad.k_max)
    ratio = float(np.max(vals) / vals[k4])
    b.audit("critical_norm_bounded", ratio <= 1.5, ratio=ratio)
    # NSE residual, part (b)
    n = min(cfg.cloud_size, 20)
    rpts, rts = ctx.residual_cloud(n, seed_offset=1)
    res = ns_residual(ctx.vel, ctx.pres, F, zip(rpts, rts), T=cfg.T)
    b.audit("ns_residual_partb", res < 1e-2, residual=res)
    return b


def suite_audit(ctx: Context):
    b = ReportBundle()
    cfg = ctx.cfg
    lad = ctx.ladder
    levels = [t for k, t in enumerate(lad.levels) if 2 <= k <= min(lad.k_max, 10)] or [lad.levels[-1]]
    pts, ts = audit_cloud(2 * cfg.cloud_size, seed=cfg.seed, r_max=4.0, t_levels=levels, T=1.0)
    ts = ts * cfg.T
    heat = ctx.heat

    def prof_eval(fn):
        return lambda x, t: fn(heat.radial_table(t), x)

    def h(prof, x):
        return prof.H(np.linalg.norm(x, axis=-1))

    def gh(prof, x):
        return prof.H(np.linalg.norm(x, axis=-1), 1)

    def hh(prof, x):
        # eigenvalues of the radial Hessian are H'' and H'/r (twice)
        r = np.linalg.norm(x, axis=-1)
        d2 = prof.H(r, 2)
        d1r = np.where(r > 0, prof.H(r, 1) / np.where(r > 0, r, 1.0), d2)
        return np.maximum(np.abs(d2), np.abs(d1r))

    zb = VelocityField(heat_b(cfg.T))
    evals = {
        Inequality.H1SJ: prof_eval(h),
        Inequality.GRAD_H1: prof_eval(gh),
        Inequality.HESS_H1: prof_eval(hh),
        Inequality.VJIE: lambda x, t: magnitude(ctx.vel(x, t)),
        Inequality.DVJIE: lambda x, t: magnitude(ctx.vel.grad(x, t)),
        Inequality.ZJIE: lambda x, t: magnitude(cfg.delta * zb(x, t)),
        Inequality.DZJIE: lambda x, t: magnitude(cfg.delta * zb.grad(x, t)),
    }
    for ineq, fn in evals.items():
        vals = np.abs(evaluate_on_cloud(fn, pts, ts))
        au = bound_audit(ineq, pts, ts, vals, T=cfg.T, seed=cfg.seed)
        b.audit(f"bound_{ineq.value}", au.passed, c=au.fitted_constants[0], C=au.C,
                worst_margin=au.worst_margin)
    # energy
    rep = energy_report(ctx.vel, lad)
    b.add_report("energy", rep)
    v2 = rep.values("v_L2")
    cum = rep.values("cum_grad_h1_sq")
    if lad.k_max >= 12:
        inc = float(abs(v2[12] - v2[10]) / v2[10])
        b.audit("energy_v_saturation", inc < 0.05, increment=inc)
        cinc = float((cum[12] - cum[10]) / cum[12])
        b.audit("energy_dissipation_cauchy", cinc < 0.10, increment=cinc)
    else:
        b.records["energy_saturation"] = {"skipped": "needs k_max >= 12"}
    # symmetry
    t_sym = lad.levels[min(2, lad.k_max)]
    sym = symmetry_check(lambda x, t: heat.radial_table(t).H(np.linalg.norm(x, axis=-1)), t_sym,
                         FourierRiesz(12.0, cfg.grid_n), seed=cfg.seed)
    b.audit("symmetry_permutation", sym.permutation_defect < 1e-6, defect=sym.permutation_defect)
    b.audit("symmetry_sum", sym.sum_defect < 1e-4, defect=sym.sum_defect)
    return b


def suite_picard(ctx: Context):
    b = ReportBundle()
    cfg = ctx.cfg
    pc = PicardConfig(L=cfg.grid_L, n=cfg.grid_n, T=cfg.T, horizon=min(cfg.picard_horizon, cfg.k_max))
    st = picard_solve(cfg.delta, config=pc)
    ok = picard_passed(st)
    b.add_series("picard_x_norm", [(m, 0.0, x, 0.0, 0.0) for m, x in enumerate(st.x_norms)])
    b.audit("picard_contraction", ok, delta=st.delta, eta=st.eta, iterates=st.iterates,
            ratios=st.contraction_ratios, residual=st.residual)
    st2 = picard_solve(min(2 * cfg.delta, 1.0), config=pc)
    q = st2.x_norms[0] / st.x_norms[0] if st.x_norms[0] > 0 else math.nan
    b.audit("picard_T4_scaling", abs(q - 4.0) <= 0.4, ratio=q)
    d_hat, status = delta0_search(config=pc)
    b.audit("delta0_positive", d_hat > 0, delta_hat=d_hat, status=status)
    C, margin, ok = kernel_bound_audit(grid=StokesGrid(cfg.grid_L, cfg.grid_n), seed=cfg.seed)
    b.audit("kernel_bound", ok, C=C, worst_margin=margin)
    # Stokes equivalence
    grid = StokesGrid(cfg.grid_L, 2 * cfg.grid_n)
    t_eq = st.field.t_max
    rng = np.random.default_rng(cfg.seed)
    probes = rng.uniform(-1.5, 1.5, size=(20, 3))
    prof = heat_b(cfg.T).profile.scaled(cfg.delta)
    Zs = stokes_duhamel(lambda x, s: np.stack([prof.f1(x, s), 0 * x[..., 0], 0 * x[..., 0]], -1),
                        t_eq, probes, grid, T=cfg.T)
    Zr = cfg.delta * VelocityField(heat_b(cfg.T))(probes, t_eq)
    rel = float(np.max(np.abs(Zs - Zr)) / np.max(np.abs(Zr)))
    b.audit("stokes_equivalence", rel < 1e-3, relative_error=rel, t=t_eq)
    # assembled solution residual
    sol = blowup_solution_assemble(st)
    rpts, _ = ctx.residual_cloud(6, r_max=1.0, seed_offset=2)
    t_hi = st.field.t_max
    rts = np.linspace(0.3 * t_hi, 0.9 * t_hi, len(rpts))

    class _P:
        def __call__(self, x, t):
            return sol.pressure(x, t)

    res = ns_residual(sol, _P(), sol.force, zip(rpts, rts), T=t_hi)
    b.audit("ns_residual_assembled", res < 1e-2, residual=res)
    return b


def suite_baseline(ctx: Context):
    b = ReportBundle()
    lad = ctx.ladder
    rep = baseline_supercritical(lad)
    b.add_report("baseline", rep)
    b.audit("baseline_divergence", rep.div_defect < 1e-8, defect=rep.div_defect)
    if lad.k_max < 12:
        b.records["baseline_growth"] = {"skipped": "needs k_max >= 12"}
        return b
    ks = list(range(6, 13))
    f15 = rep.values("F_L1.5")
    f14 = rep.values("F_L1.4")
    lg = np.log(1.0 / (1.0 - np.asarray(lad.levels)))
    ratio = f15[ks] / lg[ks]
    b.audit("baseline_L15_log_growth", float(ratio.max() / ratio.min()) <= 1.15,
            spread=float(ratio.max() / ratio.min()))
    b.audit("baseline_L14_bounded", float(f14[ks].max() / f14[ks].min()) <= 2.0,
            spread=float(f14[ks].max() / f14[ks].min()))
    return b


SUITES = {"heat": suite_heat, "velocity": suite_velocity, "audit": suite_audit,
          "picard": suite_picard, "baseline": suite_baseline}


def _run_suite(name, ctx):
    try:
        return SUITES[name](ctx)
    except Exception as exc:  # evaluator failures are recorded, the run goes on
        b = ReportBundle()
        b.audit(f"{name}_suite", False, error=f"{type(exc).__name__}: {exc}",
                trace=traceback.format_exc().splitlines()[-3:])
        return b


def run(subcommand, cfg: ExperimentConfig, workers=None):
    """Run one suite or all of them; returns the merged ReportBundle."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    ctx = Context(cfg)
    names = list(SUITES) if subcommand == "all" else [subcommand]
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda n: _run_suite(n, ctx), names))
    else:
        parts = [_run_suite(n, ctx) for n in names]
    bundle = ReportBundle()
    for p in parts:  # merged in a fixed order
        bundle.merge(p)
    return bundle


def build_parser():
    p = argparse.ArgumentParser(prog="nsblowup", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config", nargs="?", help="key = value config file")
    p.add_argument("--tol", type=float)
    p.add_argument("--kmax", type=int, dest="k_max")
    p.add_argument("--grid-n", type=int, dest="grid_n")
    p.add_argument("--grid-L", type=float, dest="grid_L")
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "structured", "both"), default="both")
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    args = build_parser().parse_args(argv)
    keys = ("tol", "k_max", "grid_n", "grid_L", "delta", "seed", "variant", "out")
    try:
        cfg = load_config(args.config, {k: getattr(args, k) for k in keys})
    except (ConfigError, OSError) as exc:
        print(f"nsblowup: {exc}", file=sys.stderr)
        return 2
    except TypeError as exc:
        print(f"nsblowup: {exc}", file=sys.stderr)
        return 2
    bundle = run(args.subcommand, cfg)
    emit(bundle, cfg.out, args.format, cfg)
    for name in sorted(bundle.audits):
        print(f"{'PASS' if bundle.audits[name] else 'FAIL'}  {name}")
    return 1 if bundle.failed else 0


if __name__ == "__main__":
    sys.exit(main())
