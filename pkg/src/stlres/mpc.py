"""Receding-horizon control that re-solves the resilience front every step."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .linear_system import CrossRow, simulate
from .milp import Sense, Status
from .pareto import (SCHEMA_VERSION, ParetoResult, ResilientControlProblem, SolverError,
                     SolverSettings, VERIFY_ATOL, _run, _witness, encode_problem)
from .resilience import ResvPair, resv
from .stl import Trace, write_trace_csv


class DmStrategy(enum.Enum):
    PRO_RECOVERABILITY = "pro-rec"
    PRO_DURABILITY = "pro-dur"
    MIN_DISTANCE = "min-distance"
    ADAPTIVE = "adaptive"

    @classmethod
    def parse(cls, text: str) -> "DmStrategy":
        key = text.strip().lower().replace("_", "-")
        aliases = {"pro-recoverability": "pro-rec", "prorec": "pro-rec", "pro-durability": "pro-dur",
                   "produr": "pro-dur", "mindistance": "min-distance", "min-dist": "min-distance"}
        key = aliases.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ValueError(f"unknown decision maker {text!r}; choose from {', '.join(s.value for s in cls)}")


def _pairs(front) -> list:
    if isinstance(front, ParetoResult):
        return front.pairs
    return [ResvPair(*p) for p in front]


def select(dm: DmStrategy, front, alpha: int, beta: int, horizon: int) -> int:
    """Index of the pair the decision maker picks.

    Ties go to the larger other coordinate, then the lowest index.  Adaptive
    favours recoverability when the best recoverability on the front is below
    the best durability, and durability otherwise (including equality).
    """
    pairs = _pairs(front)
    if not pairs:
        raise ValueError("cannot select from an empty front")
    if dm is DmStrategy.ADAPTIVE:
        max_rec = max(p.rec for p in pairs)
        max_dur = max(p.dur for p in pairs)
        dm = DmStrategy.PRO_RECOVERABILITY if max_rec < max_dur else DmStrategy.PRO_DURABILITY
    idx = range(len(pairs))
    if dm is DmStrategy.PRO_RECOVERABILITY:
        return max(idx, key=lambda i: (pairs[i].rec, pairs[i].dur, -i))
    if dm is DmStrategy.PRO_DURABILITY:
        return max(idx, key=lambda i: (pairs[i].dur, pairs[i].rec, -i))
    ideal = (alpha, horizon - beta)
    return min(idx, key=lambda i: ((pairs[i].rec - ideal[0]) ** 2 + (pairs[i].dur - ideal[1]) ** 2,
                                   -pairs[i].rec, -pairs[i].dur, i))


@dataclass
class RolloutResult:
    controls: np.ndarray
    trace: Trace
    chosen: list
    front_sizes: list
    fronts: list
    final_pair: ResvPair | None
    aborted: str = ""

    def to_dict(self) -> dict:
        dt = self.trace.step_seconds
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "rollout_result",
            "step_seconds": dt,
            "controls": self.controls.tolist(),
            "steps": [{"rec_steps": p.rec, "dur_steps": p.dur, "rec_seconds": p.rec * dt,
                       "dur_seconds": p.dur * dt, "front_size": n, "front": [list(q) for q in f]}
                      for p, n, f in zip(self.chosen, self.front_sizes, self.fronts)],
            "final": None if self.final_pair is None else {
                "rec_steps": self.final_pair.rec, "dur_steps": self.final_pair.dur,
                "rec_seconds": self.final_pair.rec * dt, "dur_seconds": self.final_pair.dur * dt},
            "aborted": self.aborted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trace_csv(self, names: Sequence[str] | None = None) -> str:
        return write_trace_csv(self.trace, names)


class RolloutAborted(RuntimeError):
    def __init__(self, message: str, partial: RolloutResult):
        super().__init__(message)
        self.partial = partial


def _with_previous_control(problem: ResilientControlProblem, u_prev) -> ResilientControlProblem:
    """Carry the rate limit across the step boundary: ``|u_0 - u_prev| <= rate``."""
    cs = problem.controls
    if cs.rate_limit is None or u_prev is None:
        return problem
    rows = [CrossRow((((0, j), 1.0),), u_prev[j] - r, u_prev[j] + r, f"rate_prev_{j}")
            for j, r in enumerate(cs.rate_limit) if np.isfinite(r)]
    return replace(problem, controls=replace(cs, cross_rows=tuple(cs.cross_rows) + tuple(rows)))


def run_mpc(problem: ResilientControlProblem, dm: DmStrategy, steps: int,
            settings: SolverSettings = SolverSettings(),
            problem_at: Callable[[int, np.ndarray], ResilientControlProblem] | None = None,
            solve: Callable | None = None, on_step: Callable | None = None) -> RolloutResult:
    """Apply the first control of the chosen Pareto witness, ``steps`` times.

    ``problem_at(k, x)`` rebuilds the problem at step ``k`` from state ``x``
    (defaults to re-rooting ``problem`` at ``x``).  ``solve`` replaces the
    front solver, mainly for testing.
    """
    from .pareto import solve_resilient_control

    if steps < 1:
        raise ValueError("steps must be >= 1")
    solve = solve or solve_resilient_control
    sys = problem.system
    x = problem.x0.copy()
    applied, chosen, sizes, fronts = [], [], [], []
    u_prev = None

    def result(msg=""):
        u = np.array(applied, float).reshape(len(applied), sys.m)
        if len(applied):
            tr = simulate(sys, problem.x0, u, problem.step_seconds)
            final = resv(problem.spec, tr, 0, atol=VERIFY_ATOL) if tr.horizon >= 1 else None
        else:
            tr = Trace(np.vstack([problem.x0, problem.x0]), problem.step_seconds)
            final = None
        return RolloutResult(u, tr, chosen, sizes, fronts, final, msg)

    for k in range(steps):
        p = problem_at(k, x) if problem_at else problem.with_state(x)
        p = _with_previous_control(p, u_prev)
        try:
            front = solve(p, settings)
        except (SolverError, RuntimeError) as exc:
            raise RolloutAborted(f"step {k}: {exc}", result(f"step {k}: {exc}")) from exc
        i = select(dm, front, p.spec.alpha, p.spec.beta, p.horizon)
        sol = front.solutions[i]
        u0 = np.asarray(sol.controls[0], float)
        applied.append(u0)
        chosen.append(sol.pair)
        sizes.append(len(front.solutions))
        fronts.append(front.pairs)
        if on_step:
            on_step(k, sol.pair, front)
        x = sys.F @ x + sys.G @ u0
        u_prev = u0
    return result()


def min_distance_direct(problem: ResilientControlProblem, settings: SolverSettings = SolverSettings()):
    """One MILP minimising the L1 gap to the ideal pair ``(alpha, H - beta)``.

    Both gaps are non-negative, so this maximises ``rec + dur``; ties prefer
    the larger ``rec``.  Returns ``(controls, ResvPair)``.
    """
    enc = encode_problem(problem)
    rec, dur = enc.objectives
    weight = 2 * problem.horizon + 3
    enc.model.set_objective((rec + dur) * weight + rec, Sense.MAXIMIZE)
    enc.model.name = "min_distance"
    sol = _run(enc.model, settings, "min_distance")
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"min-distance solve stopped with {sol.status.value} ({sol.message})")
    w = _witness(problem, enc, sol)
    return w.controls, ResvPair(w.f, w.g)
