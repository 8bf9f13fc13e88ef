"""Exact maximum-resilience fronts by an epsilon-constraint sweep over MILPs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import milp
from .encoding import (MONITOR_ATOL, EncodedObjectives, EncodingContext, encode_boolean,
                       encode_resilience_counters, encode_trace)
from .linear_system import ControlConstraintSet, DimensionError, LinearSystem, check_controls, simulate
from .milp import Model, Sense, Status
from .resilience import ResvPair, SrsSpec, max_re, resv
from .stl import Formula, Trace, write_trace_csv

SCHEMA_VERSION = 1
#: Monitor tolerance used when re-checking witnesses; half the encoder's atom margin.
VERIFY_ATOL = MONITOR_ATOL


class SolverError(RuntimeError):
    """The MILP backend stopped without a verdict (node, pivot or time limit)."""

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = list(log or [])


class WitnessMismatch(RuntimeError):
    """A MILP witness re-monitors to a different (rec, dur) pair than the model claimed."""


@dataclass(frozen=True)
class IndicatorCoupling:
    """Tie control component ``control`` to the truth of ``formula``: ``u[t][control] = [x_t |= formula]``."""

    control: int
    formula: Formula
    name: str = "indicator"


@dataclass(frozen=True)
class SolverSettings:
    backend: str = "native"
    node_limit: int | None = None
    time_limit: float | None = None
    lp_dir: str | None = None  # lp-export keeps one file per solve here


@dataclass
class ResilientControlProblem:
    system: LinearSystem
    x0: np.ndarray
    controls: ControlConstraintSet
    horizon: int
    spec: SrsSpec
    state_box: np.ndarray | None = None
    step_seconds: float = 1.0
    state_names: Sequence[str] = ()
    couplings: tuple = ()
    big_M: float | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, float).reshape(-1)
        if self.x0.shape[0] != self.system.n:
            raise DimensionError(f"x0 has dimension {self.x0.shape[0]}, system has {self.system.n}")
        if self.controls.m != self.system.m:
            raise DimensionError(f"control set has {self.controls.m} components, system has {self.system.m}")
        if int(self.horizon) != self.horizon or self.horizon < 2:
            raise ValueError(f"horizon must be an integer >= 2, got {self.horizon}")
        self.horizon = int(self.horizon)
        if not (0 <= self.spec.alpha <= self.horizon and 0 <= self.spec.beta <= self.horizon):
            raise ValueError("alpha and beta must lie in [0, horizon]")
        self.couplings = tuple(self.couplings)
        if not self.state_names:
            self.state_names = tuple(f"x{i}" for i in range(self.system.n))

    def with_state(self, x0) -> "ResilientControlProblem":
        return ResilientControlProblem(self.system, x0, self.controls, self.horizon, self.spec,
                                       self.state_box, self.step_seconds, self.state_names,
                                       self.couplings, self.big_M)


class EncodedProblem(NamedTuple):
    model: Model
    controls: list
    context: EncodingContext
    objectives: EncodedObjectives


def encode_problem(problem: ResilientControlProblem) -> EncodedProblem:
    """Dynamics, control constraints, couplings, satisfaction and counters (no objective)."""
    model = Model("resilient_control")
    ctx, u = encode_trace(model, problem.system, problem.x0, problem.controls, problem.horizon,
                          problem.state_box, problem.big_M)
    for cp in problem.couplings:
        zc = encode_boolean(cp.formula, ctx)
        for t in range(problem.horizon):
            model.add_constr(u[t][cp.control] == zc[t], f"{cp.name}_{t}")
    z = encode_boolean(problem.spec.phi, ctx)
    obj = encode_resilience_counters(z, ctx, problem.spec.alpha, problem.spec.beta)
    return EncodedProblem(model, u, ctx, obj)


def build_p_epsilon(problem: ResilientControlProblem, eps: int) -> EncodedProblem:
    """Maximise durability subject to ``rec >= eps``.

    Among durability-optimal points the objective prefers the larger
    recoverability: ``(H + 2) * dur + rec`` orders pairs lexicographically
    because ``rec`` spans only ``H + 1`` values.
    """
    enc = encode_problem(problem)
    rec, dur = enc.objectives
    enc.model.add_constr(rec >= eps, "eps")
    enc.model.set_objective(dur * (problem.horizon + 2) + rec, Sense.MAXIMIZE)
    enc.model.name = f"p_eps_{eps}"
    return enc


@dataclass
class PEpsilonResult:
    controls: np.ndarray
    f: int
    g: int
    trace: Trace
    nodes: int = 0


@dataclass
class EpsilonStep:
    eps: int
    status: str
    f: int | None
    g: int | None
    bound: float | None = None
    nodes: int = 0

    def as_dict(self):
        return {"eps": self.eps, "status": self.status, "f": self.f, "g": self.g,
                "bound": self.bound, "nodes": self.nodes}


def _run(model: Model, settings: SolverSettings, tag: str):
    lp_path = None
    if settings.backend == "lp-export" and settings.lp_dir:
        os.makedirs(settings.lp_dir, exist_ok=True)
        lp_path = os.path.join(settings.lp_dir, f"{tag}.lp")
    return milp.solve(model, settings.backend, node_limit=settings.node_limit,
                      time_limit=settings.time_limit, lp_path=lp_path)


def _witness(problem, enc: EncodedProblem, sol) -> PEpsilonResult:
    u = np.array([[sol[v] for v in row] for row in enc.controls]).reshape(problem.horizon, problem.system.m)
    u = np.where(problem.controls.binary[None, :], np.round(u), u)
    trace = simulate(problem.system, problem.x0, u, problem.step_seconds)
    f = int(round(sol[enc.objectives.rec_expr]))
    g = int(round(sol[enc.objectives.dur_expr]))
    got = resv(problem.spec, trace, 0, atol=VERIFY_ATOL)
    if got != (f, g):
        raise WitnessMismatch(f"MILP claims (rec, dur) = ({f}, {g}) but the witness monitors to {tuple(got)}")
    return PEpsilonResult(u, f, g, trace, sol.nodes)


def solve_p_epsilon(problem: ResilientControlProblem, eps: int,
                    settings: SolverSettings = SolverSettings(), log=None) -> PEpsilonResult | None:
    """Witness and ``(f*, g*)`` of the epsilon-constrained problem, or None if infeasible."""
    enc = build_p_epsilon(problem, int(eps))
    sol = _run(enc.model, settings, f"p_eps_{int(eps)}")
    step = EpsilonStep(int(eps), sol.status.value, None, None, sol.bound, sol.nodes)
    if log is not None:
        log.append(step)
    if sol.status is Status.INFEASIBLE:
        return None
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"epsilon={eps}: solver stopped with {sol.status.value} ({sol.message})", log)
    res = _witness(problem, enc, sol)
    step.f, step.g = res.f, res.g
    return res


@dataclass
class ParetoSolution:
    pair: ResvPair
    controls: np.ndarray
    trace: Trace


@dataclass
class ParetoResult:
    solutions: list
    epsilon_log: list
    step_seconds: float = 1.0
    fallback: bool = False
    swept: list = field(default_factory=list)  # every (f*, g*) before the final filter

    @property
    def pairs(self) -> list:
        return [s.pair for s in self.solutions]

    def to_dict(self, state_names=None) -> dict:
        dt = self.step_seconds
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "pareto_result",
            "step_seconds": dt,
            "fallback": self.fallback,
            "solutions": [{
                "rec_steps": s.pair.rec, "dur_steps": s.pair.dur,
                "rec_seconds": s.pair.rec * dt, "dur_seconds": s.pair.dur * dt,
                "controls": s.controls.tolist(),
                "trace": s.trace.states.tolist(),
            } for s in self.solutions],
            "epsilon_log": [e.as_dict() for e in self.epsilon_log],
            "swept": [list(p) for p in self.swept],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trace_csvs(self, state_names) -> list[str]:
        return [write_trace_csv(s.trace, state_names) for s in self.solutions]


def solve_resilient_control(problem: ResilientControlProblem,
                            settings: SolverSettings = SolverSettings(),
                            on_step: Callable[[EpsilonStep], None] | None = None) -> ParetoResult:
    """Sweep ``eps`` upward from ``alpha - (H - 1)``, then keep the ``max_re`` pairs."""
    alpha, H = problem.spec.alpha, problem.horizon
    log: list = []
    found: list[PEpsilonResult] = []
    eps = alpha - (H - 1)
    while eps < alpha + 1:
        res = solve_p_epsilon(problem, eps, settings, log)
        if on_step:
            on_step(log[-1])
        if res is None:
            break
        found.append(res)
        eps = res.f + 1
    fallback = False
    if not found:
        # Never recovers within the sweep: report the worst pair so callers always get an action.
        res = solve_p_epsilon(problem, alpha - H, settings, log)
        if res is None:
            raise SolverError("control constraints are infeasible for this problem", log)
        found.append(res)
        fallback = True
    swept = [ResvPair(r.f, r.g) for r in found]
    keep = max_re(swept)
    sols, seen = [], set()
    for r, p in zip(found, swept):
        if p in keep and p not in seen:
            seen.add(p)
            sols.append(ParetoSolution(p, r.controls, r.trace))
    return ParetoResult(sols, log, problem.step_seconds, fallback, swept)


def verify_result(problem: ResilientControlProblem, result: ParetoResult) -> list[str]:
    """Re-simulate and re-monitor every witness; returns a list of problems found."""
    issues = []
    for s in result.solutions:
        ok, bad = check_controls(problem.controls, s.controls)
        if not ok:
            issues.extend(bad)
        tr = simulate(problem.system, problem.x0, s.controls, problem.step_seconds)
        if not np.allclose(tr.states, s.trace.states, rtol=0, atol=1e-9):
            issues.append(f"trace of {tuple(s.pair)} is not the simulation of its controls")
        got = resv(problem.spec, tr, 0, atol=VERIFY_ATOL)
        if got != s.pair:
            issues.append(f"witness for {tuple(s.pair)} monitors to {tuple(got)}")
    return issues
