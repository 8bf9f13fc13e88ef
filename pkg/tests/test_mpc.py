import itertools
import json

import numpy as np
import pytest

from families import INTEGRATOR, INTEGRATOR_CONTROLS, IntegratorCase, ge, integrator_cases, two_mode
from oracles import brute_force_front, max_pareto_oracle
from stlres.linear_system import ControlConstraintSet, simulate
from stlres.mpc import DmStrategy, RolloutAborted, min_distance_direct, run_mpc, select
from stlres.pareto import VERIFY_ATOL, ResilientControlProblem, SolverError, solve_resilient_control
from stlres.resilience import ResvPair, resv

# Reference lane-keeping front in steps (dt = 0.1 s), H = 60, alpha = 18, beta = 25.
LANE_FRONT = [ResvPair(-2, 15), ResvPair(1, -22), ResvPair(2, -23)]
LANE = dict(alpha=18, beta=25, horizon=60)


def problem(case, controls=INTEGRATOR_CONTROLS):
    return ResilientControlProblem(INTEGRATOR, [case.x0], controls, case.horizon, case.spec)


TWO_POINT = IntegratorCase(two_mode(0, -2, 0, 2), -2.0, 8, 3, 1)  # front {(0, 4), (3, 0)}


# --------------------------------------------------------------------------
# Decision makers
# --------------------------------------------------------------------------


@pytest.mark.parametrize("dm, expect", [
    (DmStrategy.PRO_RECOVERABILITY, ResvPair(2, -23)),
    (DmStrategy.PRO_DURABILITY, ResvPair(-2, 15)),
    (DmStrategy.MIN_DISTANCE, ResvPair(-2, 15)),
    (DmStrategy.ADAPTIVE, ResvPair(2, -23)),
])
def test_select_on_lane_front(dm, expect):
    assert LANE_FRONT[select(dm, LANE_FRONT, **LANE)] == expect


def test_min_distance_squared_gaps():
    ideal = (LANE["alpha"], LANE["horizon"] - LANE["beta"])
    d2 = [(p.rec - ideal[0]) ** 2 + (p.dur - ideal[1]) ** 2 for p in LANE_FRONT]
    assert d2 == [800, 3538, 3620]


@pytest.mark.parametrize("dm", list(DmStrategy))
def test_select_singleton(dm):
    assert select(dm, [(3, -1)], 2, 2, 10) == 0


def test_select_empty_front():
    with pytest.raises(ValueError):
        select(DmStrategy.PRO_DURABILITY, [], 1, 1, 5)


def test_adaptive_tie_goes_to_durability():
    front = [ResvPair(4, 1), ResvPair(1, 4)]
    assert select(DmStrategy.ADAPTIVE, front, 4, 1, 8) == 1


def test_adaptive_prefers_durability_when_recovery_leads():
    front = [ResvPair(5, 0), ResvPair(0, 3)]
    assert select(DmStrategy.ADAPTIVE, front, 5, 1, 8) == 1


@pytest.mark.parametrize("dm", list(DmStrategy))
def test_select_permutation_invariant(dm):
    front = [ResvPair(-2, 15), ResvPair(1, -22), ResvPair(2, -23), ResvPair(0, 0)]
    picks = {perm[select(dm, list(perm), **LANE)] for perm in itertools.permutations(front)}
    assert len(picks) == 1


def test_dm_parse_aliases():
    assert DmStrategy.parse("Pro_Recoverability") is DmStrategy.PRO_RECOVERABILITY
    assert DmStrategy.parse("min-dist") is DmStrategy.MIN_DISTANCE
    with pytest.raises(ValueError):
        DmStrategy.parse("greedy")


# --------------------------------------------------------------------------
# Rollouts
# --------------------------------------------------------------------------


def test_rollout_deterministic_and_resimulates():
    p = problem(TWO_POINT)
    a = run_mpc(p, DmStrategy.MIN_DISTANCE, 4)
    b = run_mpc(p, DmStrategy.MIN_DISTANCE, 4)
    assert a.to_json() == b.to_json()
    np.testing.assert_allclose(a.trace.states, simulate(INTEGRATOR, p.x0, a.controls).states)
    assert a.final_pair == resv(p.spec, a.trace, 0, atol=VERIFY_ATOL)
    assert len(a.chosen) == len(a.front_sizes) == len(a.fronts) == 4


def test_first_step_follows_the_chosen_witness():
    p = problem(TWO_POINT)
    front = solve_resilient_control(p)
    for dm in (DmStrategy.PRO_RECOVERABILITY, DmStrategy.PRO_DURABILITY):
        r = run_mpc(p, dm, 1)
        sol = front.solutions[select(dm, front, 3, 1, 8)]
        assert r.chosen == [sol.pair]
        np.testing.assert_allclose(r.controls[0], sol.controls[0])


def test_pro_rec_recovers_no_later_than_pro_dur():
    p = problem(TWO_POINT)
    rec = run_mpc(p, DmStrategy.PRO_RECOVERABILITY, 1).chosen[0]
    dur = run_mpc(p, DmStrategy.PRO_DURABILITY, 1).chosen[0]
    # t_rec = alpha - rec, so the larger rec recovers no later.
    assert rec.rec >= dur.rec and dur.dur >= rec.dur


def test_rate_limit_carries_across_steps():
    controls = ControlConstraintSet.box([-1.0], [1.0], rate_limit=[0.5])
    p = problem(TWO_POINT, controls)
    r = run_mpc(p, DmStrategy.PRO_RECOVERABILITY, 4)
    assert np.all(np.abs(np.diff(r.controls[:, 0])) <= 0.5 + 1e-9)


def test_abort_keeps_partial_rollout():
    p = problem(TWO_POINT)
    calls = []

    def flaky(prob, settings):
        calls.append(prob.x0.copy())
        if len(calls) == 3:
            raise SolverError("node limit")
        return solve_resilient_control(prob, settings)

    with pytest.raises(RolloutAborted) as info:
        run_mpc(p, DmStrategy.PRO_DURABILITY, 5, solve=flaky)
    part = info.value.partial
    assert part.controls.shape == (2, 1) and len(part.chosen) == 2
    assert part.aborted.startswith("step 2")
    assert json.loads(part.to_json())["aborted"].startswith("step 2")


def test_steps_must_be_positive():
    with pytest.raises(ValueError):
        run_mpc(problem(TWO_POINT), DmStrategy.ADAPTIVE, 0)


# --------------------------------------------------------------------------
# Direct L1 min-distance
# --------------------------------------------------------------------------


def test_min_distance_direct_singleton_front():
    p = problem(IntegratorCase(ge(0), -3.0, 8, 4, 2))
    _, pair = min_distance_direct(p)
    assert pair == ResvPair(1, 3)


@pytest.mark.parametrize("case", integrator_cases(6, seed=21), ids=lambda c: f"H{c.horizon}")
def test_min_distance_direct_against_enumeration(case):
    u, pair = min_distance_direct(problem(case))
    _, pairs = brute_force_front(case.phi, case.x0, case.horizon, case.alpha, case.beta)
    best = max(r + d for r, d in pairs)
    assert pair.rec + pair.dur == best
    assert pair.rec == max(r for r, d in pairs if r + d == best)
    assert tuple(pair) in max_pareto_oracle(pairs)
    assert resv(case.spec, simulate(INTEGRATOR, [case.x0], u), 0, atol=VERIFY_ATOL) == pair


def test_min_distance_direct_extremes():
    # alpha = 0 and beta = H put the ideal at (0, 0).
    case = IntegratorCase(two_mode(0, -2, 0, 2), -2.0, 8, 0, 8)
    _, pair = min_distance_direct(problem(case))
    _, pairs = brute_force_front(case.phi, case.x0, case.horizon, 0, 8)
    assert pair.rec + pair.dur == max(r + d for r, d in pairs)
