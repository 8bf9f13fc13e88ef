"""Acceptance criteria: one PASS/FAIL line each, with tolerances and time budgets pinned here.

The lines are repeated in the pytest terminal summary.  Optional knobs:
``STLRES_LANE_BACKEND`` (default ``highs``) picks the lane-keeping solver and
``STLRES_ACCEPT_ROLLOUTS=1`` adds the 60-step lane-keeping rollouts.
"""

import itertools
import os
import random
import time

import numpy as np
import pytest

from families import (INTEGRATOR, INTEGRATOR_CONTROLS, SMALL_DELIVERY, diff_cases, fixed_control_completion,
                      hand_schedule, integrator_cases, run_diff_case)
from oracles import brute_force_front, enumerate_milp, max_pareto_oracle, random_formula, random_milp
from report import record
from stlres.case_studies import PackageDeliveryConfig, build_lane_keeping, build_package_delivery
from stlres.encoding import EncodingContext, counter_values, encode_resilience_counters
from stlres.linear_system import check_controls, simulate
from stlres.milp import LinExpr, Model, Sense, Status, VarKind, export_lp_file, import_lp_file, solve_milp
from stlres.mpc import DmStrategy, run_mpc, select
from stlres.pareto import (VERIFY_ATOL, ResilientControlProblem, SolverSettings, build_p_epsilon,
                           solve_resilient_control, verify_result)
from stlres.resilience import ResvOrdering, ResvPair, SrsSpec, compare_re, max_pareto, max_re, resv
from stlres.stl import Atom, Trace, characteristic, satisfies, signal

EXAMPLE_CHI = [-1, 1, 1, -1, -1, -1, 1, 1, 1, -1]
EXAMPLE_ROWS = {
    "c1": [0, 2, 1, 0, 0, 0, 3, 2, 1, 0],
    "c2": [2, 0, 0, 3, 3, 3, 0, 0, 0, 0],
    "c_rec": [1, 0, 0, 3, 2, 1, 0, 0, 0, 0],
    "c_dur": [2, 2, 1, 3, 3, 3, 3, 2, 1, 0],
}

# Lane-keeping targets in seconds (dt = 0.1 s).
LANE_TARGET = {(-0.2, 1.5), (0.1, -2.2), (0.2, -2.3)}
LANE_ROLLOUT_TARGET = {"pro-rec": (0.3, -2.1), "pro-dur": (-0.2, 1.5), "adaptive": (0.0, -1.9),
                       "min-distance": (-0.2, 1.5)}
LANE_BUDGET_S = 30 * 60

N_DIFF, DIFF_BUDGET_S = 500, 120
N_SWEEP, SWEEP_BUDGET_S = 24, 300
N_SETS, SETS_BUDGET_S = 1000, 10
N_SOUND, SOUND_BUDGET_S = 1000, 60
N_MILP, MILP_BUDGET_S, MILP_ATOL = 200, 120, 1e-6


def seconds(pairs, dt=0.1):
    return {(round(p[0] * dt, 6), round(p[1] * dt, 6)) for p in pairs}


# --------------------------------------------------------------------------
# Shared runs
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_runs():
    t0 = time.perf_counter()
    runs = []
    for case in integrator_cases(N_SWEEP):
        p = ResilientControlProblem(INTEGRATOR, [case.x0], INTEGRATOR_CONTROLS, case.horizon, case.spec)
        result = solve_resilient_control(p)
        expect, _ = brute_force_front(case.phi, case.x0, case.horizon, case.alpha, case.beta)
        runs.append((case, p, result, expect))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def lane_run():
    backend = os.environ.get("STLRES_LANE_BACKEND", "highs")
    p = build_lane_keeping()
    t0 = time.perf_counter()
    result = solve_resilient_control(p, SolverSettings(backend, time_limit=LANE_BUDGET_S))
    return p, result, time.perf_counter() - t0, backend


def sweep_ok(result, horizon):
    solved = [e for e in result.epsilon_log if e.status == "optimal"]
    fs, gs = [e.f for e in solved], [e.g for e in solved]
    mono = result.fallback or (all(a < b for a, b in zip(fs, fs[1:])) and all(a >= b for a, b in zip(gs, gs[1:])))
    return mono and len(result.epsilon_log) <= horizon


# --------------------------------------------------------------------------
# Criteria
# --------------------------------------------------------------------------


def test_example_trace_oracle():
    t0 = time.perf_counter()
    x = Trace(np.array([float(c) for c in EXAMPLE_CHI]))
    phi = Atom((1.0,), 0.0)
    chi = [characteristic(phi, x, t) for t in range(10)]
    z_row = [int(c > 0) for c in chi]
    rows_ok = chi == EXAMPLE_CHI and counter_values(z_row) == EXAMPLE_ROWS

    model = Model("example_trace")
    z = [model.add_var(f"z{t}", VarKind.BINARY, v, v) for t, v in enumerate(z_row)]
    ctx = EncodingContext(model, [], np.empty((0, 0)), np.empty((0, 0)))
    encode_resilience_counters(z, ctx, 2, 1)
    # One adversarial solve: indicator up/dn may be 1 only if a counter sits above/below its
    # table value, so an optimum of 0 proves the table point is the only integer-feasible one.
    deviations = []
    for key in ("c1", "c2", "c_rec"):
        for t, (c, want) in enumerate(zip(ctx.counters[key], EXAMPLE_ROWS[key])):
            info = model.variables[c.index]
            up = model.add_var(f"up_{key}_{t}", VarKind.BINARY)
            dn = model.add_var(f"dn_{key}_{t}", VarKind.BINARY)
            model.add_constr(c >= want + 1 - (want + 1 - info.lb) * (1 - up))
            model.add_constr(c <= want - 1 + (info.ub - want + 1) * (1 - dn))
            deviations += [up, dn]
    model.set_objective(sum(deviations, LinExpr()), Sense.MAXIMIZE)
    sol = solve_milp(model)
    unique = sol.status is Status.OPTIMAL and sol.objective == 0
    elapsed = time.perf_counter() - t0
    ok = rows_ok and unique and elapsed < 1.0
    assert record("counter example trace oracle", ok,
                  f"recursions {'exact' if rows_ok else 'WRONG'}, MILP point {'unique' if unique else 'NOT unique'}, "
                  f"{elapsed:.2f} s (budget 1 s)")


def test_encoder_monitor_differential():
    t0 = time.perf_counter()
    cases = diff_cases(N_DIFF)
    failures = []
    for i, case in enumerate(cases):
        ok, msg = run_diff_case(case)
        if not ok:
            failures.append((i, msg))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < DIFF_BUDGET_S
    assert record("encoder/monitor differential", ok,
                  f"{N_DIFF - len(failures)}/{N_DIFF} cases agree (depth <= 3, H <= 12, atom gap > 1e-6), "
                  f"{elapsed:.1f} s (budget {DIFF_BUDGET_S} s)" + (f"; first failure {failures[0]}" if failures else ""))


def test_pareto_sweep_vs_brute_force(sweep_runs):
    runs, elapsed = sweep_runs
    bad = [i for i, (_, _, r, expect) in enumerate(runs) if set(r.pairs) != expect]
    multi = sum(len(expect) > 1 for *_, expect in runs)
    ok = not bad and elapsed < SWEEP_BUDGET_S
    assert record("Pareto sweep vs brute force", ok,
                  f"{len(runs) - len(bad)}/{len(runs)} fronts equal ({multi} with several points), "
                  f"{elapsed:.1f} s (budget {SWEEP_BUDGET_S} s)" + (f"; mismatches at {bad}" if bad else ""))


def test_dominance_property_suite():
    t0 = time.perf_counter()
    rng = random.Random(1)
    subset = 0
    for _ in range(N_SETS):
        pts = {(rng.randint(-6, 6), rng.randint(-6, 6)) for _ in range(rng.randint(1, 30))}
        front = max_re(pts)
        subset += front <= max_pareto(pts) and max_pareto(pts) == max_pareto_oracle(pts)
    grid = list(itertools.product(range(-6, 7), repeat=2))
    better = np.array([[compare_re(a, b) is ResvOrdering.DOMINATES for b in grid] for a in grid])
    irreflexive = not better.diagonal().any()
    asymmetric = not (better & better.T).any()
    transitive = not ((better.astype(int) @ better.astype(int) > 0) & ~better).any()
    fixture = compare_re((1, 1), (-1, 2)) is ResvOrdering.DOMINATES
    elapsed = time.perf_counter() - t0
    ok = subset == N_SETS and irreflexive and asymmetric and transitive and fixture and elapsed < SETS_BUDGET_S
    assert record("dominance property suite", ok,
                  f"max_re within max_Pareto on {subset}/{N_SETS} sets; strict partial order on [-6,6]^2: "
                  f"irreflexive={irreflexive} asymmetric={asymmetric} transitive={transitive}; "
                  f"(1,1) over (-1,2)={fixture}; {elapsed:.2f} s (budget {SETS_BUDGET_S} s)")


def test_resv_soundness():
    t0 = time.perf_counter()
    rng = random.Random(2)
    atom = lambda r: Atom((r.choice([-1.0, 1.0]),), r.choice([-1.0, 0.0, 1.0]))  # noqa: E731
    premise = violations = 0
    for _ in range(N_SOUND):
        H = rng.randint(3, 12)
        phi = random_formula(rng, 2, atom, 3)
        x = Trace(np.array([rng.choice([-2.0, -1.0, 0.0, 1.0, 2.0]) for _ in range(H + 1)]))
        spec = SrsSpec(phi, rng.randint(0, H), rng.randint(1, H))
        r, d = resv(spec, x, 0)
        if r >= 0 and d >= 0 and (r > 0 or d > 0):
            premise += 1
            violations += not satisfies(spec.formula(), x, 0)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and premise > 0 and elapsed < SOUND_BUDGET_S
    assert record("resv soundness", ok,
                  f"{N_SOUND} random cases, {premise} meet the premise, {violations} counterexamples, "
                  f"{elapsed:.1f} s (budget {SOUND_BUDGET_S} s)")


def test_sweep_monotone_and_bounded(sweep_runs, lane_run):
    runs, _ = sweep_runs
    p, lane, _, _ = lane_run
    results = [(r, prob.horizon) for _, prob, r, _ in runs] + [(lane, p.horizon)]
    bad = [i for i, (r, H) in enumerate(results) if not sweep_ok(r, H)]
    longest = max(len(r.epsilon_log) for r, _ in results)
    assert record("epsilon sweep monotone, <= H iterations", not bad,
                  f"{len(results) - len(bad)}/{len(results)} sweeps with f* strictly rising and g* not rising; "
                  f"longest sweep {longest} solves")


def test_milp_solver_oracle():
    t0 = time.perf_counter()
    rng = random.Random(2024)
    agree = deterministic = 0
    for _ in range(N_MILP):
        m = random_milp(rng, max_bin=12)
        a, b, ref = solve_milp(m), solve_milp(m), enumerate_milp(m)
        if ref is None:
            agree += a.status is Status.INFEASIBLE
        else:
            agree += a.status is Status.OPTIMAL and abs(a.objective - ref) <= MILP_ATOL and not m.violations(a.values)
        deterministic += a.status is b.status and a.nodes == b.nodes and (
            a.values is None or np.array_equal(a.values, b.values))
    elapsed = time.perf_counter() - t0
    ok = agree == deterministic == N_MILP and elapsed < MILP_BUDGET_S
    assert record("MILP solver oracle", ok,
                  f"{agree}/{N_MILP} match enumeration (atol {MILP_ATOL:g}), {deterministic}/{N_MILP} repeat "
                  f"bit-identically, {elapsed:.1f} s (budget {MILP_BUDGET_S} s)")


@pytest.mark.slow
def test_lane_keeping_reproduction(lane_run):
    p, result, elapsed, backend = lane_run
    got = seconds(result.pairs)
    issues = verify_result(p, result)
    solved = elapsed < LANE_BUDGET_S and not issues and max_re(result.swept) == set(result.pairs)
    target = "MATCH" if got == LANE_TARGET else "MISMATCH"
    log = "; ".join(f"eps={e.eps}: {e.status}" + (f" (f={e.f}, g={e.g})" if e.f is not None else "")
                    for e in result.epsilon_log)
    assert record("lane-keeping reproduction (target, not gate)", solved,
                  f"{backend} sweep in {elapsed:.1f} s (budget {LANE_BUDGET_S} s), witnesses verified; "
                  f"target {target}: got {sorted(got)} s, expected {sorted(LANE_TARGET)} s; epsilon log: {log}")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("STLRES_ACCEPT_ROLLOUTS") != "1", reason="set STLRES_ACCEPT_ROLLOUTS=1")
def test_lane_keeping_rollout_targets():
    p = build_lane_keeping()
    backend = os.environ.get("STLRES_LANE_BACKEND", "highs")
    parts, all_match = [], True
    for dm in DmStrategy:
        roll = run_mpc(p, dm, p.horizon, SolverSettings(backend))
        got = tuple(round(v, 6) for v in roll.final_pair.seconds(p.step_seconds))
        all_match &= got == LANE_ROLLOUT_TARGET[dm.value]
        parts.append(f"{dm.value} {got} vs {LANE_ROLLOUT_TARGET[dm.value]}")
    assert record("lane-keeping rollouts (target, not gate)", True,
                  f"targets {'MATCH' if all_match else 'MISMATCH'}: " + "; ".join(parts))


def test_package_delivery_properties():
    cfg = PackageDeliveryConfig()
    p = build_package_delivery(cfg)
    u = hand_schedule(cfg, p)
    enc, sol = fixed_control_completion(p, u)
    tr = simulate(p.system, p.x0, u)
    z_ok = sol.status is Status.OPTIMAL and [round(sol[enc.context.z[p.spec.phi, t]]) for t in range(p.horizon + 1)] \
        == signal(p.spec.phi, tr, VERIFY_ATOL).astype(int).tolist()
    feasible = check_controls(p.controls, u)[0] and sol.status is Status.OPTIMAL and not enc.model.violations(sol.values)

    model = build_p_epsilon(p, p.spec.alpha - (p.horizon - 1)).model
    text = export_lp_file(model)
    back = import_lp_file(text)
    well_formed = (back.num_vars, back.num_constrs) == (model.num_vars, model.num_constrs) \
        and export_lp_file(back).splitlines()[1:] == text.splitlines()[1:]

    small = build_package_delivery(PackageDeliveryConfig(**SMALL_DELIVERY))
    ext = solve_resilient_control(small, SolverSettings("highs"))
    front = set(ext.pairs)
    remon = [resv(small.spec, simulate(small.system, small.x0, s.controls), 0, atol=VERIFY_ATOL) for s in ext.solutions]
    non_dominated = not verify_result(small, ext) and all(q in front and max_re(front | {q}) == front for q in remon)

    ok = feasible and z_ok and well_formed and non_dominated
    assert record("package delivery (property acceptance)", ok,
                  f"hand schedule feasible={feasible} (satisfaction bits match monitor={z_ok}); "
                  f"LP export round-trips={well_formed} ({model.num_vars} vars, {model.num_constrs} rows); "
                  f"HiGHS front {sorted(map(tuple, front))} on the reduced instance re-monitors non-dominated="
                  f"{non_dominated}")


def test_min_distance_fixture():
    front_s = [(-0.2, 1.5), (0.1, -2.2), (0.2, -2.3)]
    front = [ResvPair(round(r / 0.1), round(d / 0.1)) for r, d in front_s]
    i = select(DmStrategy.MIN_DISTANCE, front, 18, 25, 60)
    j = select(DmStrategy.PRO_DURABILITY, front, 18, 25, 60)
    ok = front_s[i] == (-0.2, 1.5) and i == j
    assert record("MinDistance fixture", ok,
                  f"picks {front_s[i]} s (pro-durability picks {front_s[j]} s)")
