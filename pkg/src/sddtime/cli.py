"""Command line entry point: ``sddtime solve|transform|verify|experiment <config>``.

Exit codes: 0 all checks pass, 1 I/O or parse failure, 2 certificate or
precondition violation, 3 at least one verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import CertificateRequired, SddError
from .scenario import Scenario, ScenarioError, load_scenario
from .sdd import delay_floor_certificate, integrate_sdd, monotonicity_certificate, sigma_slope_floor
from .transform import alpha_bounds_check, default_omega, time_equivalence_constants
from .transformed import integrate_transformed, process_restart_check
from .verify import (
    VerificationReport,
    alpha_convergence_experiment,
    assumption_A_estimates,
    boundedness_transfer_check,
    continuous_dependence_experiment,
    manifold_residual,
    stability_transfer_check,
    verify_equivalence,
)

EXIT_OK, EXIT_IO, EXIT_PRECONDITION, EXIT_FAILED = 0, 1, 2, 3

TOLERANCES = {
    "equivalence": 1e-5,
    "delay_range": 1e-9,
    "sigma_monotone": 1e-6,
    "bounds": 1e-9,
    "process": 1e-8,
}


def _fmt(x) -> str:
    return "%.17g" % x


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _node_slopes(traj, t):
    # right-hand slope at each node, left-hand at the final one
    d = traj.eval_derivative(t, "right")
    d[-1] = traj.eval_derivative(t[-1], "left")
    return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _omega(sc: Scenario):
    return default_omega(sc.initial, sc.params, sc.s0, sc.d0)


def _transform(sc: Scenario):
    if not monotonicity_certificate(sc.params):
        p = sc.params
        raise CertificateRequired(
            f"transform requires 2*mu*eta_bar < 1, got 2*{p.mu}*{p.eta_bar} = {2 * p.mu * p.eta_bar}")
    ts = integrate_transformed(sc.params, sc.initial, _omega(sc), sc.S, sc.ds)
    if sc.inject_alpha_shift:
        ts = ts.with_alpha(ts.alpha.shifted(sc.inject_alpha_shift))
    return ts


def cmd_solve(sc: Scenario, out: Path, report: dict) -> int:
    sol = integrate_sdd(sc.params, sc.initial, sc.T, sc.dt)
    t = sol.mesh
    y, dy = sol.y.eval(t), _node_slopes(sol.y, t)
    eta, deta = sol.eta.eval(t)[:, 0], _node_slopes(sol.eta, t)[:, 0]
    m = sc.params.dim
    header = ["t", *[f"y_{i + 1}" for i in range(m)], "eta", *[f"dy_{i + 1}" for i in range(m)], "deta"]
    write_csv(out / "solve.csv", header,
              ([t[k], *y[k], eta[k], *dy[k], deta[k]] for k in range(len(t))))
    report["artifacts"] = ["solve.csv"]
    report["summary"] = dict(T=sol.T, n_steps=len(t) - 1, eta_min=float(eta.min()), eta_max=float(eta.max()),
                             certified=monotonicity_certificate(sc.params))
    return EXIT_OK


def cmd_transform(sc: Scenario, out: Path, report: dict) -> int:
    ts = _transform(sc)
    s = ts.mesh
    z, dz = ts.z.eval(s), _node_slopes(ts.z, s)
    chi, dchi = ts.chi.eval(s)[:, 0], _node_slopes(ts.chi, s)[:, 0]
    a, da = ts.alpha(s), _node_slopes(ts.alpha.traj, s)[:, 0]
    m = sc.params.dim
    header = ["s", *[f"z_{i + 1}" for i in range(m)], "chi", "alpha",
              *[f"dz_{i + 1}" for i in range(m)], "dchi", "dalpha"]
    write_csv(out / "transform.csv", header,
              ([s[k], *z[k], chi[k], a[k], *dz[k], dchi[k], da[k]] for k in range(len(s))))
    report["artifacts"] = ["transform.csv"]
    report["summary"] = dict(S=ts.S, alpha_end=float(a[-1]), min_denominator=ts.min_denominator,
                             max_denominator=ts.max_denominator, joins=ts.joins)
    return EXIT_OK


def run_checks(sc: Scenario) -> VerificationReport:
    """Run the checks requested by the scenario and collect them in one report."""
    p, init = sc.params, sc.initial
    ts = _transform(sc)
    t_end = max(sc.T, float(ts.alpha(ts.s0 + ts.S)) + 2 * sc.dt)
    sdd = integrate_sdd(p, init, t_end, sc.dt)
    rep = VerificationReport(scenario=sc.name)
    want = set(sc.checks)
    if "equivalence" in want:
        rep.merge(verify_equivalence(sdd, ts, tol=TOLERANCES["equivalence"]))
    if "delay_range" in want:
        eta = sdd.eta.y[:, 0]
        tol = TOLERANCES["delay_range"]
        rep.add("-min eta", "delay-range", -float(eta.min()), tol)
        rep.add("max eta - h", "delay-range", float(eta.max()) - p.h, tol)
    if "sigma_monotone" in want and sdd.sigma is not None:
        slope = float(sdd.sigma.underlying.node_derivatives().min())
        rep.add("min sigma'", "sigma-monotone", slope, sigma_slope_floor(p) - TOLERANCES["sigma_monotone"], ">=")
    if "bounds" in want:
        b = alpha_bounds_check(ts.alpha, sc.h1, TOLERANCES["bounds"])
        rep.add("upper bound margin", "alpha-upper", b.upper_margin, -b.tol, ">=")
        certified = sc.h1 is not None and delay_floor_certificate(p, sc.h1) and init.eta0 >= sc.h1
        if b.lower_margin is not None and certified:
            rep.add("lower bound margin", "alpha-lower", b.lower_margin, -b.tol, ">=")
        rep.meta["bounds"] = dict(upper=b.upper_margin, lower=b.lower_margin, h1=b.h1, certified=certified)
    if "time_equivalence" in want:
        eq = time_equivalence_constants(ts.alpha, sc.h1)
        rep.add("envelope slope", "time-equivalence", eq.A1, 0.0, ">=")
        rep.meta["time_equivalence"] = dict(A=eq.A1, B1=eq.B1, B2=eq.B2, horizon=eq.horizon, dual_ok=eq.dual_ok,
                                            floor_envelope=eq.floor_envelope, floor_valid=eq.floor_valid,
                                            floor_dominates=eq.floor_dominates)
    if "process" in want:
        k = int(round(sc.S / 2 / sc.ds))
        r = process_restart_check(p, init, _omega(sc), sc.s0 + k * sc.ds, sc.S, sc.ds)
        rep.add("restart distance", "process", r.distance, TOLERANCES["process"])
    if "assumptions" in want:
        rep.merge(assumption_A_estimates(ts.alpha))
    if "stability" in want:
        rep.merge(stability_transfer_check(sdd, ts))
    if "boundedness" in want:
        t1 = init.t0 + p.h if sc.t1 is None else sc.t1
        rep.merge(boundedness_transfer_check(sdd, ts, t1))
    if "manifold" in want:
        rep.meta["manifold_residual"] = manifold_residual(p, init)
    return rep


def _margin_rows(rep: VerificationReport):
    for c in rep.checks:
        margin = c.threshold - c.value if c.relation == "<=" else c.value - c.threshold
        yield [c.name, c.anchor, c.value, c.relation, c.threshold, margin, "pass" if c.passed else "fail"]


def cmd_verify(sc: Scenario, out: Path, report: dict) -> int:
    rep = run_checks(sc)
    write_csv(out / "margins.csv", ["check", "anchor", "value", "relation", "threshold", "margin", "status"],
              _margin_rows(rep))
    report["artifacts"] = ["margins.csv"]
    report["verification"] = rep.to_dict()
    for c in rep.checks:
        print(c.line())
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_experiment(sc: Scenario, out: Path, report: dict) -> int:
    p, init = sc.params, sc.initial
    dep = continuous_dependence_experiment(p, init, sc.deltas, sc.T, sc.dt)
    rows = [["dependence", r["delta"], r["observed"], r["bound"], float("nan")] for r in dep.meta["rows"]]
    rep = VerificationReport(scenario=sc.name).merge(dep)
    if monotonicity_certificate(p):
        conv = alpha_convergence_experiment(p, init, _omega(sc), sc.deltas, sc.S, sc.dt)
        rows += [["alpha_convergence", r["delta"], r["distance"], float("nan"), r["min_alpha_dot"]]
                 for r in conv.meta["rows"]]
        rep.merge(conv)
        rep.meta["alpha_rows"] = conv.meta["rows"]
    write_csv(out / "experiment.csv", ["experiment", "delta", "distance", "bound", "min_alpha_dot"], rows)
    report["artifacts"] = ["experiment.csv"]
    report["verification"] = rep.to_dict()
    for c in rep.checks:
        print(c.line())
    return EXIT_OK if rep.passed else EXIT_FAILED


COMMANDS = {"solve": cmd_solve, "transform": cmd_transform, "verify": cmd_verify, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sddtime", description="State-dependent delay solver and time-map checks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", type=Path, help="scenario file (YAML)")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
    ap.add_argument("--dt", type=float, default=None, help="override the t-step")
    ap.add_argument("--ds", type=float, default=None, help="override the s-step")
    return ap


def _write_report(out: Path, report: dict) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    report = {"command": args.command, "config": str(args.config), "version": __version__,
              "tolerances": TOLERANCES}
    start = time.perf_counter()
    code = EXIT_OK
    try:
        sc = load_scenario(args.config, dt=args.dt, ds=args.ds)
        report.update(scenario=sc.name, scenario_hash=sc.digest, steps=dict(dt=sc.dt, ds=sc.ds),
                      horizons=dict(T=sc.T, S=sc.S), params=dict(mu=sc.params.mu, eta_bar=sc.params.eta_bar,
                                                                 h=sc.params.h, eta0=sc.initial.eta0,
                                                                 t0=sc.initial.t0, s0=sc.s0))
        args.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](sc, args.out, report)
    except (OSError, yaml.YAMLError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        report["error"] = str(exc)
        code = EXIT_IO
    except SddError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        report["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_PRECONDITION
    report["exit_code"] = code
    report["runtime"] = time.perf_counter() - start
    _write_report(args.out, report)
    return code


if __name__ == "__main__":
    sys.exit(main())
