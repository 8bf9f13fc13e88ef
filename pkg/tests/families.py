"""Random instance families shared by the unit and acceptance tests."""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from oracles import batch_signal, brute_force_front, random_formula, rec_dur_oracle
from stlres.encoding import encode_boolean, encode_resilience_counters, encode_trace
from stlres.linear_system import ControlConstraintSet, LinearSystem, simulate
from stlres.milp import Model, Sense, Status, solve_milp
from stlres.resilience import SrsSpec
from stlres.stl import And, Atom, Eventually, Interval, Not, Or

# --------------------------------------------------------------------------
# Encoder / monitor differential: 2-D toy plant
# --------------------------------------------------------------------------

TOY = LinearSystem([[1.0, 0.5], [0.0, 1.0]], [[0.0, 0.5], [1.0, 0.0]])
TOY_CONTROLS = ControlConstraintSet.box([-1.0, -1.0], [1.0, 1.0])
CONTROL_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)


def _toy_atom(rng):
    # States stay on the 0.125 grid; thresholds sit between grid points, so no
    # atom ever lands within the 1e-6 exclusion band of its threshold.
    coeffs = (rng.choice([-1.0, 0.0, 1.0, 2.0]), rng.choice([-1.0, 1.0]))
    return Atom(coeffs, rng.choice([-1.5, -0.5, 0.0, 0.5, 1.5]) + 0.0625)


@dataclass
class DiffCase:
    phi: object
    x0: np.ndarray
    controls: np.ndarray
    horizon: int


def random_diff_case(rng: random.Random) -> DiffCase:
    H = rng.randint(2, 12)
    phi = random_formula(rng, 3, _toy_atom, max_hi=4)
    x0 = np.array([rng.choice([-1.0, 0.0, 1.0]), rng.choice([-0.5, 0.0, 0.5])])
    u = np.array([[rng.choice(CONTROL_GRID) for _ in range(2)] for _ in range(H)])
    return DiffCase(phi, x0, u, H)


def min_atom_gap(case: DiffCase) -> float:
    from stlres.stl import atoms

    tr = simulate(TOY, case.x0, case.controls)
    gaps = [np.abs(a.value(tr.states)).min() for a in atoms(case.phi)]
    return min(gaps, default=np.inf)


def run_diff_case(case: DiffCase):
    """Fix the controls, maximise disagreement with the monitor, and report it.

    Returns ``(ok, message)``.  The objective rewards every satisfaction
    variable that differs from the oracle verdict, so an optimum of 0 shows the
    oracle assignment is the only integer-feasible one.
    """
    model = Model("diff")
    ctx, u = encode_trace(model, TOY, case.x0, TOY_CONTROLS, case.horizon)
    for t in range(case.horizon):
        for j in range(2):
            info = model.variables[u[t][j].index]
            info.lb = info.ub = float(case.controls[t, j])
    z = encode_boolean(case.phi, ctx)
    encode_resilience_counters(z, ctx, 0, 1)
    trace = simulate(TOY, case.x0, case.controls)
    states = trace.states[None]
    disagree = 0
    for (node, t), var in ctx.z.items():
        truth = bool(batch_signal(node, states)[0, t])
        disagree = disagree + ((1 - var) if truth else var)
    model.set_objective(disagree, Sense.MAXIMIZE)
    sol = solve_milp(model)
    if sol.status is not Status.OPTIMAL:
        return False, f"encoder model {sol.status.value}"
    if sol.objective > 0.5:
        return False, f"{int(round(sol.objective))} satisfaction variables can disagree with the monitor"
    sig = batch_signal(case.phi, states)[0]
    want = rec_dur_oracle(list(sig), 0)
    got = (round(sol[ctx.counters["c_rec"][0]]),
           round(sol[ctx.counters["c1"][0]]) + round(sol[ctx.counters["c2"][0]]))
    if got != want:
        return False, f"counters give (t_rec, t_dur) = {got}, monitor {want}"
    return True, ""


def diff_cases(n: int, seed: int = 0):
    rng = random.Random(seed)
    out = []
    while len(out) < n:
        case = random_diff_case(rng)
        if min_atom_gap(case) > 1e-6:
            out.append(case)
    return out


# --------------------------------------------------------------------------
# Pareto sweep vs brute force: 1-D integrator x+ = x + u, |u| <= 1
# --------------------------------------------------------------------------

INTEGRATOR = LinearSystem([[1.0]], [[1.0]])
INTEGRATOR_CONTROLS = ControlConstraintSet.box([-1.0], [1.0])


def ge(c):
    return Atom((1.0,), float(c))


def two_mode(band_lo, jump_from, reach, width):
    """Either sit in the band ``[band_lo, band_lo + 2)`` or stay low while a
    later climb to ``reach`` is still possible; the two modes trade early
    recovery against long durability."""
    band = And((ge(band_lo), Not(ge(band_lo + 2))))
    burst = And((Not(ge(jump_from + 1)), Eventually(Interval(1, width), ge(reach))))
    return Or((band, burst))


@dataclass
class IntegratorCase:
    phi: object
    x0: float
    horizon: int
    alpha: int
    beta: int

    @property
    def spec(self):
        return SrsSpec(self.phi, self.alpha, self.beta)


def integrator_cases(n: int, seed: int = 3, min_multi: int | None = None):
    """Two-mode formulas mixed with random integer-threshold formulas.

    At least ``min_multi`` (default ``n // 4``) instances have a front with
    more than one point, picked by the brute-force oracle.

    Atoms are ``x >= c`` with integer ``c`` and ``x0`` is an integer, so
    rounding any real trajectory ``x_t`` down to ``floor(x_t)`` keeps every
    verdict and stays reachable with controls in {-1, 0, 1}: the grid attains
    every (rec, dur) pair the continuous problem can.
    """
    rng = random.Random(seed)
    min_multi = n // 4 if min_multi is None else min_multi
    out = []
    while len(out) < min_multi:
        # Climbing two units from x0 is what makes both modes reachable.
        H, x0 = rng.randint(7, 10), rng.randint(-4, -2)
        case = IntegratorCase(two_mode(rng.randint(0, 1), x0, x0 + 2, rng.randint(2, 3)), float(x0), H,
                              rng.randint(0, 4), rng.randint(1, 4))
        if len(brute_force_front(case.phi, case.x0, H, case.alpha, case.beta)[0]) > 1:
            out.append(case)
    for k in range(n - len(out)):
        H, x0 = rng.randint(6, 10), rng.randint(-4, -2)
        if k % 2 == 0:
            phi = two_mode(rng.randint(0, 1), x0 + rng.randint(0, 1), x0 + rng.randint(1, 2), rng.randint(1, 3))
        else:
            phi = random_formula(rng, 2, lambda r: ge(r.randint(-3, 3)), max_hi=3)
        out.append(IntegratorCase(phi, float(x0), H, rng.randint(0, 4), rng.randint(1, min(4, H - 2))))
    return out


# --------------------------------------------------------------------------
# Package delivery fixtures
# --------------------------------------------------------------------------

#: Reduced instance: robot 1 starts below the battery threshold and must charge.
SMALL_DELIVERY = dict(horizon=16, alpha=5, beta=3, E_l=5.2, R1=(0.0, 4.0, 0.0, 3.0), R2=(6.0, 10.0, 2.2, 4.0))


def hand_schedule(cfg, problem):
    """Robot 1 creeps left into C1 and charges while there; robot 2 waits."""
    from stlres.stl import signal

    H = cfg.horizon
    u = np.zeros((H, 4 * cfg.robots))
    u[:, 3::4] = cfg.e_con
    u[0:4, 0], u[4:8, 0] = -1.0, 1.0
    tr = simulate(problem.system, problem.x0, u)
    for i, cp in enumerate(problem.couplings):
        u[:, 4 * i + 2] = signal(cp.formula, tr)[:H]
    return u


def fixed_control_completion(problem, u):
    """Complete a fixed control schedule to a full MILP assignment with HiGHS.

    Returns ``(encoded problem, solution)``.
    """
    from stlres.milp.highs import solve_highs
    from stlres.pareto import encode_problem

    enc = encode_problem(problem)
    for t in range(problem.horizon):
        for j, var in enumerate(enc.controls[t]):
            info = enc.model.variables[var.index]
            info.lb = info.ub = float(u[t, j])
    return enc, solve_highs(enc.model)
