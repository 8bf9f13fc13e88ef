"""Command-line workbench: ``monitor``, ``solve``, ``mpc`` and ``export-lp``.

Exit codes: 0 success (monitor: resiliency requirement satisfied), 1 violated
requirement or solver failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import case_studies as cs
from .linear_system import ControlConstraintSet, LinearSystem
from .milp import BACKENDS, export_lp_file
from .mpc import DmStrategy, RolloutAborted, run_mpc
from .pareto import (ResilientControlProblem, SolverError, SolverSettings, WitnessMismatch,
                     build_p_epsilon, solve_resilient_control)
from .resilience import SrsSpec, resv, time_robustness_plus
from .stl import STLError, parse_formula, read_trace_csv, satisfies, write_trace_csv

OUT_DIR_ENV = "STLRES_OUT_DIR"
DEFAULT_OUT_DIR = "stlres-out"

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    pass


# --------------------------------------------------------------------------
# Run configuration
# --------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, pairs) -> dict:
    """Apply ``key=value`` overrides; dotted keys address nested sections.

    A bare key goes to ``settings`` (case studies) or ``problem`` (custom).
    """
    doc = json.loads(json.dumps(doc))
    for item in pairs or ():
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        path = key.strip().split(".")
        if len(path) == 1:
            path = ["problem" if "problem" in doc else "settings"] + path
        node = doc
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise InputError(f"cannot set {key}: {p} is not a section")
        node[path[-1]] = _parse_value(value)
    return doc


def load_config(path: str | None, overrides=()) -> dict:
    if path is None:
        doc = {}
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError("config must be a JSON object")
    return apply_overrides(doc, overrides)


def _steps(value, units: str, dt: float, what: str) -> int:
    if units == "seconds":
        return cs.seconds_to_steps(float(value), dt, what)
    if units != "steps":
        raise InputError(f"units must be 'steps' or 'seconds', got {units!r}")
    if float(value) != int(value):
        raise InputError(f"{what}={value} is not an integer number of steps")
    return int(value)


def _custom_problem(p: dict) -> ResilientControlProblem:
    try:
        F = np.atleast_2d(np.array(p["F"], float))
        G = np.array(p["G"], float)
        system = LinearSystem(F, G)
        names = p.get("state_names") or [f"x{i}" for i in range(system.n)]
        dt = float(p.get("dt", 1.0))
        units = p.get("units", "steps")
        c = p.get("controls", {})
        controls = ControlConstraintSet.box(c["lower"], c["upper"], binary=c.get("binary"),
                                            rate_limit=c.get("rate_limit"))
        phi = parse_formula(p["formula"], names)
        spec = SrsSpec(phi, _steps(p["alpha"], units, dt, "alpha"), _steps(p["beta"], units, dt, "beta"))
        box = p.get("state_box")
        return ResilientControlProblem(system, p["x0"], controls, int(p["horizon"]), spec,
                                       None if box is None else np.array(box, float),
                                       dt, tuple(names))
    except KeyError as exc:
        raise InputError(f"custom problem is missing {exc}") from None


def build_problem(doc: dict) -> ResilientControlProblem:
    has_case, has_custom = "case" in doc, "problem" in doc
    if has_case == has_custom:
        raise InputError("config needs exactly one of 'case' or 'problem'")
    if has_custom:
        return _custom_problem(doc["problem"])
    cfg = cs.make_config(doc["case"], doc.get("settings", {}))
    return cs.BUILDERS[doc["case"]](cfg)


def solver_settings(doc: dict, args, lp_dir=None) -> SolverSettings:
    s = dict(doc.get("solver", {}))
    backend = getattr(args, "backend", None) or s.get("backend", "native")
    if backend not in BACKENDS:
        raise InputError(f"unknown backend {backend!r}")
    return SolverSettings(backend, s.get("node_limit"), s.get("time_limit"),
                          lp_dir if backend == "lp-export" else None)


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    d.mkdir(parents=True, exist_ok=True)
    return d


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_monitor(args) -> int:
    try:
        text = Path(args.trace).read_text()
    except OSError as exc:
        raise InputError(f"cannot read trace: {exc}") from None
    trace = read_trace_csv(text, args.dt)
    phi = parse_formula(args.formula, trace.names)
    alpha = _steps(args.alpha, args.units, args.dt, "alpha")
    beta = _steps(args.beta, args.units, args.dt, "beta")
    spec = SrsSpec(phi, alpha, beta)
    if not 0 <= args.t <= trace.horizon:
        raise InputError(f"t={args.t} outside the trace [0, {trace.horizon}]")
    pair = resv(spec, trace, args.t)
    ok = satisfies(spec.formula(), trace, args.t)
    theta = time_robustness_plus(phi, trace, args.t)
    rs, ds = pair.seconds(args.dt)
    print(f"rec = {pair.rec} steps ({rs:g} s)")
    print(f"dur = {pair.dur} steps ({ds:g} s)")
    print(f"srs = {'satisfied' if ok else 'violated'}")
    print(f"theta_plus = {theta}")
    return EXIT_OK if ok else EXIT_FAIL


def _print_front(result, dt):
    print(f"{'#':>3} {'rec':>6} {'dur':>6} {'rec[s]':>8} {'dur[s]':>8}")
    for i, s in enumerate(result.solutions):
        print(f"{i:>3} {s.pair.rec:>6} {s.pair.dur:>6} {s.pair.rec * dt:>8.3g} {s.pair.dur * dt:>8.3g}")
    if result.fallback:
        print("(no recovery within the sweep; worst-case pair reported)")


def cmd_solve(args) -> int:
    doc = load_config(args.config, args.set)
    problem = build_problem(doc)
    out = _out_dir(args)
    settings = solver_settings(doc, args, str(out / "lp"))
    result = solve_resilient_control(problem, settings)
    (out / "pareto.json").write_text(result.to_json() + "\n")
    for i, s in enumerate(result.solutions):
        (out / f"witness_{i}.csv").write_text(write_trace_csv(s.trace, problem.state_names))
    _print_front(result, problem.step_seconds)
    return EXIT_OK


def cmd_mpc(args) -> int:
    doc = load_config(args.config, args.set)
    problem = build_problem(doc)
    out = _out_dir(args)
    settings = solver_settings(doc, args, str(out / "lp"))
    dm = DmStrategy.parse(args.dm)
    problem_at = None
    if doc.get("case") == "lane-keeping":
        cfg = cs.make_config("lane-keeping", doc.get("settings", {}))
        if cfg.reference:
            problem_at = lambda k, x: cs.build_lane_keeping(cfg, x0=x, start_step=k)  # noqa: E731
    code = EXIT_OK
    try:
        roll = run_mpc(problem, dm, args.steps, settings, problem_at)
    except RolloutAborted as exc:
        roll = exc.partial
        print(f"rollout aborted: {exc}", file=sys.stderr)
        code = EXIT_FAIL
    (out / "rollout.json").write_text(roll.to_json() + "\n")
    (out / "trace.csv").write_text(roll.trace_csv(problem.state_names))
    if roll.final_pair is not None:
        rs, ds = roll.final_pair.seconds(problem.step_seconds)
        print(f"realized rec = {roll.final_pair.rec} ({rs:g} s), dur = {roll.final_pair.dur} ({ds:g} s)")
    return code


def cmd_export_lp(args) -> int:
    doc = load_config(args.config, args.set)
    problem = build_problem(doc)
    if args.eps_seconds is not None:
        eps = cs.seconds_to_steps(args.eps_seconds, problem.step_seconds, "eps")
    else:
        if float(args.eps) != int(float(args.eps)):
            raise InputError(f"eps={args.eps} is not an integer number of steps")
        eps = int(float(args.eps))
    enc = build_p_epsilon(problem, eps)
    path = Path(args.output) if args.output else _out_dir(args) / f"p_eps_{eps}.lp"
    path.write_text(export_lp_file(enc.model))
    print(path)
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stlres", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("monitor", help="recoverability/durability of a recorded trace")
    m.add_argument("trace", help="CSV with header t,<state names> and rows t = 0..H")
    m.add_argument("--formula", "-f", required=True, help="STL formula over the CSV column names")
    m.add_argument("--alpha", required=True, type=float)
    m.add_argument("--beta", required=True, type=float)
    m.add_argument("--t", type=int, default=0, help="evaluation time step")
    m.add_argument("--dt", type=float, default=1.0, help="seconds per step")
    m.add_argument("--units", choices=("steps", "seconds"), default="steps",
                   help="units of --alpha/--beta")
    m.set_defaults(func=cmd_monitor)

    def problem_args(p):
        p.add_argument("config", nargs="?", help="JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")
        p.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
        p.add_argument("--backend", choices=BACKENDS)

    s = sub.add_parser("solve", help="exact resilience front at the initial state")
    problem_args(s)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("mpc", help="closed-loop rollout with a decision maker")
    problem_args(r)
    r.add_argument("--dm", default="pro-dur", help="pro-rec, pro-dur, min-distance or adaptive")
    r.add_argument("--steps", type=int, default=10)
    r.set_defaults(func=cmd_mpc)

    e = sub.add_parser("export-lp", help="write the epsilon-constrained MILP as a CPLEX LP file")
    problem_args(e)
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--eps", help="recoverability level in steps")
    g.add_argument("--eps-seconds", type=float, help="recoverability level in seconds")
    e.add_argument("-o", "--output", help="LP file path")
    e.set_defaults(func=cmd_export_lp)
    return ap


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, STLError, cs.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, WitnessMismatch) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
