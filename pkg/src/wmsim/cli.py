"""Command-line entry point: ``wmsim <subcommand> [flags]``.

Every subcommand writes one table, as CSV (default) or JSON, to ``--out``
or standard output.  Exit status: 0 success, 2 invalid flags, 3 numerical
non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
import warnings

import numpy as np

from . import __version__, classical, models, quantum
from .quadrature import QuadratureError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


class Table:
    """Rows of scalars plus metadata for the JSON form."""

    def __init__(self, columns, rows=None, meta=None):
        self.columns = list(columns)
        self.rows = list(rows or [])
        self.meta = dict(meta or {})

    def add(self, *values):
        if len(values) != len(self.columns):
            raise AssertionError("row width mismatch")
        self.rows.append(values)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _json_value(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else _fmt(v)
    return v


def render(table: Table, fmt: str) -> str:
    if fmt == "json":
        doc = {"columns": table.columns,
               "rows": [dict(zip(table.columns, map(_json_value, r))) for r in table.rows],
               "meta": {k: _json_value(v) for k, v in table.meta.items()}}
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _positive(x: float, name: str):
    if not x > 0:
        raise UsageError(f"{name} must be positive")


def _nonneg(x: float, name: str):
    if not x >= 0:
        raise UsageError(f"{name} must be nonnegative")


# ---------------------------------------------------------------------------
# subcommands


def _dwell(args):
    try:
        return models.DoubleWellParams(args.eps, args.tau, args.kt)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _times(args):
    t = (args.t1, args.t2, args.t3)
    if not t[0] <= t[1] <= t[2]:
        raise UsageError("times must satisfy t1 <= t2 <= t3")
    return t


def cmd_dwell_corr(args) -> Table:
    p, t = _dwell(args), _times(args)
    h, _ = models.dwell_model(p)
    rho = models.dwell_state(p)
    table = Table(["eps", "tau", "kt", "t1", "t2", "t3", "method", "g", "samples", "value", "stderr"])
    head = (p.eps, p.tau, p.kT, *t, args.method)
    if args.method == "analytic":
        table.add(*head, None, None, models.dwell_corr_analytic(p, *t), None)
    elif args.method == "superop":
        _nonneg(args.g, "g")
        q = quantum.quasiprob(models.dwell_plan(t, args.g), rho, h)
        table.add(*head, args.g, None, q.moment(), None)
    else:
        g = 0.3 if args.g == 0 else args.g
        _positive(g, "g")
        if args.samples < 2:
            raise UsageError("samples must be at least 2")
        batch = quantum.sample_sequence(models.dwell_plan(t, g), rho, h, args.samples, args.seed,
                                        workers=args.threads)
        m = quantum.deconvolve_moments(batch)
        table.add(*head, g, args.samples, m[(0, 1, 2)], m.error((0, 1, 2)))
    return table


def cmd_dwell_asym(args) -> Table:
    p, t = _dwell(args), _times(args)
    _nonneg(args.g, "g")
    h, _ = models.dwell_model(p)
    rho = models.dwell_state(p)
    plan = models.dwell_plan(t, args.g)
    fwd = quantum.quasiprob(plan, rho, h)
    rev = quantum.time_reversed_quasiprob(plan, rho, h)
    table = Table(["label", "a1", "a2", "a3", "q_forward", "q_reversed", "delta"])
    df, dr = fwd.as_dict(), rev.as_dict()
    for key in sorted(set(df) | set(dr)):
        a, b = df.get(key, 0.0), dr.get(key, 0.0)
        table.add("cell", *key, a, b, a - b)
    mf, mr = fwd.moment(), rev.moment()
    table.add("moment", None, None, None, mf, mr, mf - mr)
    table.add("delta_T", None, None, None, None, None, quantum.table_distance(fwd, rev))
    return table


def _dot(args):
    try:
        return models.DotParams(args.eps, args.gamma, args.kt)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_dot_s3(args) -> Table:
    p = _dot(args)
    _positive(args.tol, "tol")
    if args.grid is not None:
        if args.grid < 2:
            raise UsageError("grid needs at least 2 points per axis")
        _positive(args.wmax, "wmax")
        axis = models.symmetric_axis(args.wmax, args.grid)
        results = models.s3n_grid(p, axis, tol=args.tol, workers=args.threads, max_evals=args.max_evals)
    else:
        if args.omega is None or args.omega_p is None:
            raise UsageError("give --omega and --omega-p, or --grid")
        results = [models.s3n(args.omega, args.omega_p, p, args.tol, args.max_evals)]
    table = Table(["omega", "omega_p", "s3_re", "s3_im", "err_est", "evals"])
    for r in results:
        table.add(r.omega, r.omega_p, r.value.real, r.value.imag, r.abs_error_estimate, r.evaluations)
    table.meta["tol"] = args.tol
    return table


def cmd_junction(args) -> Table:
    try:
        j = models.JunctionParams(args.gammap, args.epsp, args.V, args.C)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    d = _dot(args)
    q = models.junction_quantities(j)
    report = models.regime_check(j, d, args.factor)
    table = Table(["quantity", "value", "passed"])
    table.add("transmission", q.transmission, None)
    table.add("mean_current", models.mean_current(j), None)
    table.add("chi", q.chi, None)
    table.add("s3_i0", q.s3_i0, None)
    for e in report.entries:
        table.add(e.name, e.ratio, e.passed)
    table.add("regime", None, report.passed)
    if args.omega is not None and args.omega_p is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = models.s3_total(j, d, args.omega, args.omega_p, args.tol)
        table.add("s3_total_re", s.real, None)
        table.add("s3_total_im", s.imag, None)
    return table


_SYSTEMS = {
    "harmonic": classical.ClassicalSystem.harmonic,
    "quartic": classical.ClassicalSystem.quartic_double_well,
    "cubic": classical.ClassicalSystem.cubic_anharmonic,
}


def _classical_setup(args, g):
    _positive(args.kt, "kt")
    _positive(args.dt, "dt")
    if args.n < 2:
        raise UsageError("n must be at least 2")
    obs = {"q": classical.position(), "p": classical.momentum()}
    names = args.observables.split(",")
    if len(names) != len(args.times) or any(n not in obs for n in names):
        raise UsageError("--observables needs one of q/p per entry of --times")
    try:
        det = classical.ClassicalDetectorSpec(args.sigma_q, args.sigma_p)
        proto = classical.ClassicalProtocol(tuple(zip(args.times, (obs[n] for n in names))), g, det,
                                            args.dt)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    system = _SYSTEMS[args.system]()
    return system, proto


def cmd_classical_sym(args) -> Table:
    system, proto = _classical_setup(args, args.g)
    ens = classical.PhaseEnsemble.boltzmann(system, args.kt, args.n, args.seed)
    fwd = classical.run_experiment(ens, system, proto, args.seed, workers=args.threads)
    if args.pairing == "common":
        rev = classical.reverse_experiment(ens, system, proto, args.seed, workers=args.threads)
    else:
        ens2 = classical.PhaseEnsemble.boltzmann(system, args.kt, args.n, args.seed + 1)
        rev = classical.reverse_experiment(ens2, system, proto, args.seed + 1, workers=args.threads)
    mf = classical.estimate_moments(fwd, args.g, args.sigma_q)
    mr = classical.estimate_moments(rev, args.g, args.sigma_q)
    z = classical.moment_discrepancy(mf, mr)
    table = Table(["moment", "forward", "forward_stderr", "reversed", "reversed_stderr", "z"])
    for key in mf.keys():
        table.add("-".join(map(str, key)), mf[key], mf.error(key), mr[key], mr.error(key), z[key])
    table.meta["pairing"] = args.pairing
    return table


def cmd_disturbance_scan(args) -> Table:
    gs = np.asarray(args.gs, dtype=float)
    if gs.size < 2 or np.any(gs <= 0):
        raise UsageError("--gs needs at least two positive strengths")
    values = []
    if args.model == "quantum":
        p, t = _dwell(args), _times(args)
        h, _ = models.dwell_model(p)
        rho = models.dwell_state(p)
        for g in gs:
            values.append(quantum.disturbance(models.dwell_plan(t, g), rho, h, args.index))
    else:
        for g in gs:
            system, proto = _classical_setup(args, g)
            if not 0 <= args.index < len(proto.steps):
                raise UsageError("--index out of range")
            ens = classical.PhaseEnsemble.boltzmann(system, args.kt, args.n, args.seed)
            values.append(classical.disturbance(ens, system, proto, args.index, args.seed,
                                                workers=args.threads))
    slope = float(np.polyfit(np.log(gs), np.log(values), 1)[0])
    table = Table(["model", "g", "disturbance", "slope"])
    for g, v in zip(gs, values):
        table.add(args.model, g, v, slope)
    return table


def cmd_smoothing_scan(args) -> Table:
    p, t = _dwell(args), _times(args)
    widths = np.asarray(args.widths, dtype=float)
    if widths.size == 0 or np.any(widths < 0):
        raise UsageError("--widths must be nonnegative")
    h, z = models.dwell_model(p)
    rho = models.dwell_state(p)
    table = Table(["width", "width_over_hbar_delta", "delta_T", "ratio"])
    base = None
    for wu in widths:
        w = wu / p.Delta
        tw, ww = quantum.gaussian_window(w, args.points)
        obs = [quantum.smoothed_observable(z, h, tk + tw, ww) for tk in t]
        plan = quantum.MeasurementPlan.of(obs, [0.0] * len(obs), 0.0)
        d = quantum.asymmetry(plan, rho, h)
        base = d if base is None else base
        table.add(w, wu, d, d / base if base > 0 else None)
    return table


# ---------------------------------------------------------------------------
# self-tests: quick checks of the elementary examples behind each command


def _check(name, ok):
    return name, bool(ok)


def _selftest_quantum():
    x, _, zm = quantum.linalg.pauli()
    h = quantum.Hamiltonian(zm)
    a = quantum.heisenberg_evolve(np.eye(2), quantum.Hamiltonian(x), 0.7)
    rho = quantum.thermal_state(quantum.Hamiltonian(np.diag([1.0, -1.0])), 0.5)
    single = quantum.quasiprob(quantum.MeasurementPlan.of([x], [0.0], 0.4), rho, h)
    two = quantum.MeasurementPlan.of([zm, x], [0.0, 1.0])
    return [
        _check("heisenberg: identity stays identity", np.allclose(a.matrix, np.eye(2), atol=1e-12)),
        _check("thermal: <Z> = -tanh(eps/kT)", abs(rho.expect(zm) + np.tanh(2.0)) < 1e-12),
        _check("quasiprob: single step is a probability", single.min_weight() >= -1e-10),
        _check("weak moment: one step is Tr A rho",
               abs(quantum.weak_moment(quantum.MeasurementPlan.of([zm], [0.0]), rho, h)
                   - rho.expect(zm)) < 1e-12),
        _check("two-step plan is time symmetric", quantum.asymmetry(two, rho, h) < 1e-10),
        _check("compatibility: Z and X incompatible",
               not quantum.compatibility_check(quantum.MeasurementPlan.of([zm, x], [0, 0]), h)),
        _check("marginal of one step is {(): 1}",
               abs(quantum.marginalize(single, 0).total() - 1.0) < 1e-12),
    ]


def _selftest_dwell():
    p = models.DoubleWellParams(1.0, 1.0, 0.1)
    h, _ = models.dwell_model(p)
    rho = models.dwell_state(p)
    t = (0.0, 1.0, 3.0)
    sup = quantum.quasiprob(models.dwell_plan(t), rho, h).moment()
    return _selftest_quantum() + [
        _check("analytic equals superoperator", abs(sup - models.dwell_corr_analytic(p, *t)) < 1e-10),
        _check("witness plan is time asymmetric",
               quantum.asymmetry(models.dwell_plan(t), rho, h) > 0.01),
    ]


def _selftest_dot():
    p = models.DotParams(0.5, 1.0, 0.0)
    s = [models.s3n(w, wp, p, 1e-9).value for w, wp in [(1.0, 1.0), (1.0, -2.0), (-2.0, 1.0)]]
    z = models.s3n(0.0, 0.7, p, 1e-9).value
    big = models.s3n(1.0, 1.0, models.DotParams(20.0, 1.0, 0.0), 1e-12).value
    return [
        _check("permutation invariance", abs(s[0] - s[1]) < 1e-7 and abs(s[0] - s[2]) < 1e-7),
        _check("Im vanishes at omega = 0", abs(z.imag) < 1e-7),
        _check("far-detuned level is quiet", abs(big) < 1e-2 * abs(s[0])),
    ]


def _selftest_junction():
    half = models.junction_quantities(models.JunctionParams(1.0, 1.0, 1.0, 1.0))
    full = models.junction_quantities(models.JunctionParams(1.0, 0.0, 1.0, 1.0))
    return [
        _check("T = 1/2 has no intrinsic third cumulant", half.s3_i0 == 0.0),
        _check("T = 1 has no intrinsic third cumulant", full.s3_i0 == 0.0),
        _check("chi vanishes at eps' = 0", full.chi == 0.0),
    ]


def _selftest_classical():
    free = classical.ClassicalSystem.free()
    pt = classical.PhasePoint([0.3], [0.7])
    moved = classical.leapfrog_evolve(pt, free, 0.01, 100)
    kicked, shift = classical.measurement_kick(pt, classical.position(), 0.2, 0.5)
    still, _ = classical.measurement_kick(pt, classical.momentum(), 0.2, 0.0)
    pk, _ = classical.measurement_kick(pt, classical.momentum(), 0.2, 0.5)
    static = classical.PhaseEnsemble(classical.PhasePoint(np.full((4, 1), 0.5), np.zeros((4, 1))), 0, "static")
    proto = classical.ClassicalProtocol(((0.0, classical.position()), (1.0, classical.position())), 1.0)
    out = classical.run_experiment(static, free, proto, 0).outcomes
    rng = np.random.default_rng(0)
    noise = rng.normal(size=(4000, 2))
    m = classical.estimate_moments(classical.SampleBatch(noise, 1.0, 0, 0.0), 1.0, 0.0)
    return [
        _check("free particle drifts by p t / m", abs(moved.q[0] - (0.3 + 0.7)) < 1e-12),
        _check("q-kick shifts p only", kicked.q[0] == 0.3 and abs(kicked.p[0] - 0.6) < 1e-15
               and abs(float(shift) - 0.06) < 1e-15),
        _check("p-kick shifts q only", abs(pk.q[0] - 0.4) < 1e-15 and pk.p[0] == 0.7),
        _check("sigma_p = 0 leaves the point unchanged", still.q[0] == 0.3 and still.p[0] == 0.7),
        _check("static system reads identically", np.all(out == 0.5)),
        _check("sigma_q = 0 leaves raw moments", m[(0, 1)] == float(np.mean(noise[:, 0] * noise[:, 1]))),
    ]


SELFTESTS = {
    "dwell-corr": _selftest_dwell,
    "dwell-asym": _selftest_dwell,
    "dot-s3": _selftest_dot,
    "junction": _selftest_junction,
    "classical-sym": _selftest_classical,
    "disturbance-scan": lambda: _selftest_quantum() + _selftest_classical(),
    "smoothing-scan": _selftest_quantum,
}


def run_selftest(name: str) -> Table:
    table = Table(["check", "passed"])
    for check, ok in SELFTESTS[name]():
        table.add(check, ok)
    return table


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", default="-", help="output file ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker cap")
    p.add_argument("--selftest", action="store_true", help="run built-in checks instead")
    p.add_argument("--record-time", action="store_true",
                   help="store wall time in JSON meta (output is then not reproducible)")


def _dwell_flags(p, with_times=True):
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--kt", type=float, default=0.1)
    if with_times:
        p.add_argument("--t1", type=float, default=0.0)
        p.add_argument("--t2", type=float, default=1.0)
        p.add_argument("--t3", type=float, default=3.0)


def _dot_flags(p):
    p.add_argument("--eps", type=float, default=0.5, help="dot level")
    p.add_argument("--gamma", type=float, default=1.0, help="dot tunneling rate")
    p.add_argument("--kt", type=float, default=0.0)


def _classical_flags(p, g_default=0.05):
    p.add_argument("--system", choices=sorted(_SYSTEMS), default="quartic")
    p.add_argument("--kt", type=float, default=0.5)
    p.add_argument("--n", type=int, default=100_000, help="trajectories")
    p.add_argument("--times", type=_float_list, default=[0.2, 0.7, 1.5])
    p.add_argument("--observables", default="q,p,q", help="q or p per step")
    p.add_argument("--sigma-q", type=float, default=1.0)
    p.add_argument("--sigma-p", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-2)
    if g_default is not None:
        p.add_argument("--g", type=float, default=g_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wmsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wmsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dwell-corr", help="three-point Z correlator of the double well")
    _dwell_flags(p)
    p.add_argument("--method", choices=("analytic", "superop", "mc"), default="analytic")
    p.add_argument("--g", type=float, default=0.0, help="strength (mc defaults to 0.3)")
    p.add_argument("--samples", type=int, default=1_000_000)
    _common(p)
    p.set_defaults(func=cmd_dwell_corr)

    p = sub.add_parser("dwell-asym", help="forward vs reversed quasiprobability tables")
    _dwell_flags(p)
    p.add_argument("--g", type=float, default=0.0)
    _common(p)
    p.set_defaults(func=cmd_dwell_asym)

    p = sub.add_parser("dot-s3", help="third cumulant of the dot occupation")
    _dot_flags(p)
    p.add_argument("--omega", type=float)
    p.add_argument("--omega-p", type=float)
    p.add_argument("--grid", type=int, help="points per axis of a square grid")
    p.add_argument("--wmax", type=float, default=3.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-evals", type=int, default=1_000_000)
    _common(p)
    p.set_defaults(func=cmd_dot_s3)

    p = sub.add_parser("junction", help="junction detector quantities and regime report")
    _dot_flags(p)
    p.add_argument("--gammap", type=float, default=10.0)
    p.add_argument("--epsp", type=float, default=10.0)
    p.add_argument("--V", type=float, default=0.1)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--factor", type=float, default=10.0)
    p.add_argument("--omega", type=float)
    p.add_argument("--omega-p", type=float)
    p.add_argument("--tol", type=float, default=1e-8)
    _common(p)
    p.set_defaults(func=cmd_junction)

    p = sub.add_parser("classical-sym", help="forward vs reversed classical moments")
    _classical_flags(p)
    p.add_argument("--pairing", choices=("common", "independent"), default="common",
                   help="share ensemble and detector draws, or use fresh ones for the reversed run")
    _common(p)
    p.set_defaults(func=cmd_classical_sym)

    p = sub.add_parser("disturbance-scan", help="g^2 scaling of measurement disturbance")
    p.add_argument("--model", choices=("quantum", "classical"), default="quantum")
    p.add_argument("--gs", type=_float_list, default=[0.4, 0.2, 0.1, 0.05])
    p.add_argument("--index", type=int, default=1, help="step whose disturbance is measured")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--t1", type=float, default=0.0)
    p.add_argument("--t2", type=float, default=1.0)
    p.add_argument("--t3", type=float, default=3.0)
    p.add_argument("--system", choices=sorted(_SYSTEMS), default="quartic")
    p.add_argument("--kt", type=float, default=None, help="0.1 (quantum) or 0.5 (classical)")
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--times", type=_float_list, default=[0.0, 0.5, 1.0])
    p.add_argument("--observables", default="q,q,q")
    p.add_argument("--sigma-q", type=float, default=1e-4)
    p.add_argument("--sigma-p", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-2)
    _common(p)
    p.set_defaults(func=cmd_disturbance_scan)

    p = sub.add_parser("smoothing-scan", help="time asymmetry vs switching-window width")
    _dwell_flags(p)
    p.add_argument("--widths", type=_float_list, default=[0, 0.5, 1, 2, 5, 10],
                   help="window widths in units of hbar/Delta")
    p.add_argument("--points", type=int, default=201)
    _common(p)
    p.set_defaults(func=cmd_smoothing_scan)
    return parser


def _write(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if getattr(args, "kt", 0) is None:
        args.kt = 0.1 if args.model == "quantum" else 0.5
    if args.threads < 1:
        print("wmsim: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE

    start = time.perf_counter()
    try:
        if args.selftest:
            table = run_selftest(args.command)
        else:
            table = args.func(args)
    except (UsageError, quantum.PlanError) as exc:
        print(f"wmsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, FloatingPointError) as exc:
        print(f"wmsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    table.meta.update({"command": args.command, "seed": args.seed, "version": __version__,
                       "wall_time": time.perf_counter() - start if args.record_time else None})
    _write(render(table, args.format), args.out)
    if args.selftest and not all(r[1] for r in table.rows):
        return 1
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
