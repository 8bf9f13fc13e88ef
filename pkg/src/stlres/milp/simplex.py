"""Bounded-variable revised primal simplex (dense, explicit basis inverse).

Rows ``lo <= A x <= hi`` become ``A x - s = 0`` with the slack ``s`` carrying
the row bounds, so the working system is always ``M z = 0`` with
``l <= z <= u``.  Phase 1 adds one artificial per row whose slack cannot start
basic inside its bounds.
"""

from __future__ import annotations

import math

import numpy as np

from .model import OPT_TOL, Model, Sense, Solution, Status

PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9
PRIMAL_TOL = 1e-9
PHASE1_TOL = 1e-7
REFACTOR_EVERY = 64
STALL_LIMIT = 30

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3


class _Simplex:
    def __init__(self, M, lower, upper, x, basis, max_iter, state=None):
        self.M = M
        self.l = lower
        self.u = upper
        self.x = x
        self.basis = list(basis)
        m, N = M.shape
        if state is None:
            state = np.full(N, _LOWER)
            for j in range(N):
                if x[j] == upper[j] and lower[j] != upper[j]:
                    state[j] = _UPPER
                elif not math.isfinite(lower[j]) and not math.isfinite(upper[j]):
                    state[j] = _FREE
        self.state = state
        self.state[self.basis] = _BASIC
        self.iterations = 0
        self.max_iter = max_iter
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nb = self.state != _BASIC
        xb = -self.Binv @ (self.M[:, nb] @ self.x[nb])
        self.x[self.basis] = xb
        self.since_refactor = 0

    def run(self, cost) -> str:
        """Minimise ``cost . z``; returns "optimal", "unbounded" or "limit"."""
        stall = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                return "limit"
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.M
            st = self.state
            cand = np.zeros_like(d)
            lo_ok = (st == _LOWER) & (d < -DUAL_TOL) & (self.u > self.l)
            up_ok = (st == _UPPER) & (d > DUAL_TOL)
            fr_ok = (st == _FREE) & (np.abs(d) > DUAL_TOL)
            cand[lo_ok] = -d[lo_ok]
            cand[up_ok] = d[up_ok]
            cand[fr_ok] = np.abs(d[fr_ok])
            eligible = np.flatnonzero(cand > 0)
            if eligible.size == 0:
                self.duals = y
                return "optimal"
            if bland:
                j = int(eligible[0])
            else:
                j = int(eligible[np.argmax(cand[eligible])])
            direction = 1.0 if d[j] < 0 else -1.0
            alpha = self.Binv @ self.M[:, j]
            rate = -direction * alpha  # d x_B / d theta

            theta = self.u[j] - self.l[j]  # bound flip
            leave = -1
            leave_to = None
            xb = self.x[self.basis]
            lb = self.l[self.basis]
            ub = self.u[self.basis]
            dec = rate < -PIVOT_TOL
            inc = rate > PIVOT_TOL
            ratios = np.full(len(self.basis), math.inf)
            with np.errstate(divide="ignore", invalid="ignore"):
                r_dec = np.maximum(xb - lb, 0.0) / -rate
                r_inc = np.maximum(ub - xb, 0.0) / rate
            ratios[dec] = r_dec[dec]
            ratios[inc] = r_inc[inc]
            ratios[~np.isfinite(ratios)] = math.inf
            best = ratios.min() if ratios.size else math.inf
            if best < theta - PRIMAL_TOL or (best <= theta and math.isfinite(best) and not math.isfinite(theta)):
                ties = np.flatnonzero(ratios <= best + PRIMAL_TOL)
                if bland:
                    i = int(min(ties, key=lambda k: self.basis[k]))
                else:
                    i = int(ties[np.argmax(np.abs(alpha[ties]))])
                theta = ratios[i]
                leave = i
                leave_to = _LOWER if rate[i] < 0 else _UPPER
            if not math.isfinite(theta):
                return "unbounded"

            self.iterations += 1
            if theta <= PRIMAL_TOL:
                stall += 1
                if stall > STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                bland = False

            self.x[j] += direction * theta
            self.x[self.basis] = xb + theta * rate
            if leave < 0:
                self.state[j] = _UPPER if direction > 0 else _LOWER
                continue
            out = self.basis[leave]
            self.x[out] = self.l[out] if leave_to == _LOWER else self.u[out]
            self.state[out] = leave_to
            if self.l[out] == self.u[out]:
                self.state[out] = _LOWER
            self.state[j] = _BASIC
            self.basis[leave] = j
            # eta update of the explicit inverse
            piv = alpha[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[leave] = row
            self.since_refactor += 1

    def run_dual(self, cost) -> str:
        """Dual simplex from a dual-feasible basis; "optimal", "infeasible" or "limit"."""
        while True:
            if self.iterations >= self.max_iter:
                return "limit"
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
            xb = self.x[self.basis]
            below = self.l[self.basis] - xb
            above = xb - self.u[self.basis]
            infeas = np.maximum(below, above)
            r = int(np.argmax(infeas))
            if infeas[r] <= PRIMAL_TOL * (1.0 + abs(xb[r])):
                return "optimal"
            raise_r = below[r] > 0
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.M
            arow = self.Binv[r] @ self.M
            st = self.state
            movable = self.u > self.l
            # x_r moves by -arow_j per unit increase of x_j.
            gain = -arow if raise_r else arow
            elig = movable & (((st == _LOWER) & (gain > PIVOT_TOL))
                              | ((st == _UPPER) & (gain < -PIVOT_TOL))
                              | ((st == _FREE) & (np.abs(arow) > PIVOT_TOL)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "infeasible"
            ratio = np.abs(d[cand]) / np.abs(arow[cand])
            ties = cand[ratio <= ratio.min() + 1e-12]
            j = int(ties[np.argmax(np.abs(arow[ties]))])
            out = self.basis[r]
            target = self.l[out] if raise_r else self.u[out]
            step = (target - xb[r]) / -arow[j]
            alpha = self.Binv @ self.M[:, j]
            self.iterations += 1
            self.x[j] += step
            self.x[self.basis] = xb - step * alpha
            self.x[out] = target
            self.state[out] = _LOWER if raise_r or self.l[out] == self.u[out] else _UPPER
            self.state[j] = _BASIC
            self.basis[r] = j
            piv = alpha[r]
            row = self.Binv[r] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[r] = row
            self.since_refactor += 1


def solve_lp_arrays(c, A, row_lo, row_hi, lb, ub, max_iter: int | None = None) -> Solution:
    """Minimise ``c . x`` subject to ``row_lo <= A x <= row_hi``, ``lb <= x <= ub``."""
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(-1, c.shape[0])
    row_lo = np.asarray(row_lo, float)
    row_hi = np.asarray(row_hi, float)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    if np.any(lb > ub + PRIMAL_TOL) or np.any(row_lo > row_hi + PRIMAL_TOL):
        return Solution(Status.INFEASIBLE, message="crossed bounds")

    # Drop fixed columns and rows left without variables.
    fixed = ub - lb <= 1e-12
    x = np.where(fixed, (lb + ub) / 2, 0.0)
    free_cols = np.flatnonzero(~fixed)
    shift = A[:, fixed] @ x[fixed] if fixed.any() else np.zeros(A.shape[0])
    lo_r = row_lo - shift
    hi_r = row_hi - shift
    Ar = A[:, free_cols]
    nonempty = np.any(np.abs(Ar) > 0, axis=1)
    if np.any((~nonempty) & ((lo_r > PHASE1_TOL) | (hi_r < -PHASE1_TOL))):
        return Solution(Status.INFEASIBLE, message="empty row violated")
    keep = nonempty & (np.isfinite(lo_r) | np.isfinite(hi_r))
    Ar = Ar[keep]
    lo_r = lo_r[keep]
    hi_r = hi_r[keep]
    cr = c[free_cols]
    lbr = lb[free_cols]
    ubr = ub[free_cols]
    m, nr = Ar.shape
    if max_iter is None:
        max_iter = 10 * (m + nr) ** 2 + 100

    if m == 0:
        # Box-only problem: each variable sits at its best bound.
        xr = np.where(cr > 0, lbr, np.where(cr < 0, ubr, np.where(np.isfinite(lbr), lbr, np.where(np.isfinite(ubr), ubr, 0.0))))
        if not np.all(np.isfinite(xr)):
            return Solution(Status.UNBOUNDED, message="unbounded variable")
        x[free_cols] = xr
        return Solution(Status.OPTIMAL, x, float(c @ x), duals=np.zeros(A.shape[0]))

    # Initial nonbasic point.
    start = np.where(np.isfinite(lbr), lbr, np.where(np.isfinite(ubr), ubr, 0.0))
    act = Ar @ start
    art_rows, art_sign, slack_start = [], [], act.copy()
    for i in range(m):
        if act[i] < lo_r[i] - PRIMAL_TOL:
            art_rows.append(i)
            art_sign.append(1.0)
            slack_start[i] = lo_r[i]
        elif act[i] > hi_r[i] + PRIMAL_TOL:
            art_rows.append(i)
            art_sign.append(-1.0)
            slack_start[i] = hi_r[i]
    k = len(art_rows)
    Mfull = np.zeros((m, nr + m + k))
    Mfull[:, :nr] = Ar
    Mfull[:, nr:nr + m] = -np.eye(m)
    for a, (i, s) in enumerate(zip(art_rows, art_sign)):
        Mfull[i, nr + m + a] = s
    lower = np.concatenate([lbr, lo_r, np.zeros(k)])
    upper = np.concatenate([ubr, hi_r, np.full(k, math.inf)])
    z = np.concatenate([start, slack_start, np.zeros(k)])
    basis = [nr + i for i in range(m)]
    for a, i in enumerate(art_rows):
        basis[i] = nr + m + a
        z[nr + m + a] = abs(lo_r[i] - act[i]) if art_sign[a] > 0 else abs(act[i] - hi_r[i])

    sx = _Simplex(Mfull, lower, upper, z, basis, max_iter)
    if k:
        cost1 = np.zeros(nr + m + k)
        cost1[nr + m:] = 1.0
        res = sx.run(cost1)
        if res == "limit":
            return Solution(Status.ITERATION_LIMIT, iterations=sx.iterations, message="phase 1 pivot limit")
        infeas = float(sx.x[nr + m:].sum())
        if infeas > PHASE1_TOL:
            return Solution(Status.INFEASIBLE, iterations=sx.iterations,
                            message=f"phase 1 optimum {infeas:.3g}")
        sx.u[nr + m:] = 0.0
        sx.x[nr + m:] = np.minimum(sx.x[nr + m:], 0.0)
        sx.refactor()
    cost2 = np.concatenate([cr, np.zeros(m + k)])
    res = sx.run(cost2)
    if res == "limit":
        return Solution(Status.ITERATION_LIMIT, iterations=sx.iterations, message="phase 2 pivot limit")
    if res == "unbounded":
        return Solution(Status.UNBOUNDED, iterations=sx.iterations)
    x[free_cols] = sx.x[:nr]
    duals = np.zeros(A.shape[0])
    duals[np.flatnonzero(keep)] = sx.duals
    return Solution(Status.OPTIMAL, x, float(c @ x), iterations=sx.iterations, duals=duals)


def solve_lp(model: Model, max_iter: int | None = None, lb=None, ub=None) -> Solution:
    """LP relaxation of ``model`` (integrality ignored).

    ``lb``/``ub`` override the model's variable bounds (used by branch-and-bound).
    """
    A, lo, hi = model.dense_rows()
    mlb, mub = model.bounds()
    lb = mlb if lb is None else lb
    ub = mub if ub is None else ub
    c = model.objective_vector()
    flip = -1.0 if model.sense is Sense.MAXIMIZE else 1.0
    sol = solve_lp_arrays(flip * c, A, lo, hi, lb, ub, max_iter)
    if sol.status is Status.OPTIMAL:
        sol.objective = float(c @ sol.values + model.objective.const)
        sol.bound = sol.objective
    return sol


def lagrangian_bound(model: Model, duals: np.ndarray) -> float:
    """Weak-duality bound on the LP optimum from row multipliers ``duals``.

    ``duals`` are multipliers of the minimisation form (as returned by
    :func:`solve_lp`); the result is a lower bound for MINIMIZE models and an
    upper bound for MAXIMIZE models.
    """
    A, lo, hi = model.dense_rows()
    lb, ub = model.bounds()
    flip = -1.0 if model.sense is Sense.MAXIMIZE else 1.0
    c = flip * model.objective_vector()
    # L(x, y) = c.x - y.(A x) + sum_i y_i * (lo_i if y_i > 0 else hi_i)
    red = c - duals @ A
    total = 0.0
    for j, r in enumerate(red):
        if abs(r) <= OPT_TOL:
            continue
        b = lb[j] if r > 0 else ub[j]
        if not math.isfinite(b):
            return -math.inf
        total += r * b
    for i, y in enumerate(duals):
        if abs(y) <= OPT_TOL:
            continue
        b = lo[i] if y > 0 else hi[i]
        if not math.isfinite(b):
            return -math.inf
        total += y * b
    return flip * total + model.objective.const


class WarmLP:
    """One constraint matrix re-solved under changing variable bounds.

    ``solve`` returns ``(solution, basis)``; passing that basis back for
    tighter bounds re-optimises with the dual simplex, since tightening
    bounds keeps an optimal basis dual feasible.  Any failure of the warm
    path falls back to a cold two-phase solve.
    """

    def __init__(self, c, A, row_lo, row_hi, max_iter: int | None = None):
        self.c = np.asarray(c, float)
        self.A = np.asarray(A, float).reshape(-1, self.c.shape[0])
        self.row_lo = np.asarray(row_lo, float)
        self.row_hi = np.asarray(row_hi, float)
        m, n = self.A.shape
        self.max_iter = max_iter if max_iter is not None else 10 * (m + n) ** 2 + 100
        self.cold_solves = 0

    def solve(self, lb, ub, basis=None):
        lb = np.asarray(lb, float)
        ub = np.asarray(ub, float)
        if np.any(lb > ub + PRIMAL_TOL):
            return Solution(Status.INFEASIBLE, message="crossed bounds"), None
        if basis is not None:
            try:
                out = self._warm(lb, ub, basis)
            except np.linalg.LinAlgError:
                out = None
            if out is not None:
                return out
        return self._cold(lb, ub)

    def _finish(self, sx, k):
        n = self.c.shape[0]
        x = sx.x[:n].copy()
        sol = Solution(Status.OPTIMAL, x, float(self.c @ x), iterations=sx.iterations,
                       duals=sx.duals.copy())
        return sol, (sx.M, k, tuple(sx.basis), sx.state.copy())

    def _cold(self, lb, ub):
        self.cold_solves += 1
        A, lo_r, hi_r = self.A, self.row_lo, self.row_hi
        m, n = A.shape
        start = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        act = A @ start
        slack = np.clip(act, lo_r, hi_r)
        art = np.flatnonzero(np.abs(act - slack) > PRIMAL_TOL)
        k = art.size
        M = np.zeros((m, n + m + k))
        M[:, :n] = A
        M[:, n:n + m] = -np.eye(m)
        M[art, n + m + np.arange(k)] = np.sign(slack[art] - act[art])
        lower = np.concatenate([lb, lo_r, np.zeros(k)])
        upper = np.concatenate([ub, hi_r, np.full(k, math.inf)])
        z = np.concatenate([start, slack, np.abs(slack[art] - act[art])])
        basis = list(range(n, n + m))
        for a, i in enumerate(art):
            basis[i] = n + m + a
        sx = _Simplex(M, lower, upper, z, basis, self.max_iter)
        if k:
            cost1 = np.zeros(n + m + k)
            cost1[n + m:] = 1.0
            if sx.run(cost1) == "limit":
                return Solution(Status.ITERATION_LIMIT, iterations=sx.iterations,
                                message="phase 1 pivot limit"), None
            infeas = float(sx.x[n + m:].sum())
            if infeas > PHASE1_TOL:
                return Solution(Status.INFEASIBLE, iterations=sx.iterations,
                                message=f"phase 1 optimum {infeas:.3g}"), None
            sx.u[n + m:] = 0.0
            sx.x[n + m:] = 0.0
            sx.refactor()
        res = sx.run(np.concatenate([self.c, np.zeros(m + k)]))
        if res == "limit":
            return Solution(Status.ITERATION_LIMIT, iterations=sx.iterations,
                            message="phase 2 pivot limit"), None
        if res == "unbounded":
            return Solution(Status.UNBOUNDED, iterations=sx.iterations), None
        return self._finish(sx, k)

    def _warm(self, lb, ub, basis):
        M, k, cols, state = basis
        m, n = self.A.shape
        lower = np.concatenate([lb, self.row_lo, np.zeros(k)])
        upper = np.concatenate([ub, self.row_hi, np.zeros(k)])
        state = state.copy()
        x = np.zeros(n + m + k)
        nb = np.flatnonzero(state != _BASIC)
        for j in nb:
            if state[j] == _FREE:
                if math.isfinite(lower[j]):
                    state[j] = _LOWER
                elif math.isfinite(upper[j]):
                    state[j] = _UPPER
            if state[j] == _LOWER:
                x[j] = lower[j] if math.isfinite(lower[j]) else 0.0
            elif state[j] == _UPPER:
                x[j] = upper[j]
        if np.any(~np.isfinite(x)):
            return None
        sx = _Simplex(M, lower, upper, x, cols, min(self.max_iter, 20 * (m + n) + 100), state)
        cost = np.concatenate([self.c, np.zeros(m + k)])
        res = sx.run_dual(cost)
        if res == "infeasible":
            return Solution(Status.INFEASIBLE, iterations=sx.iterations,
                            message="dual simplex: no entering column"), None
        if res != "optimal":
            return None
        # Clean up any dual infeasibility left by round-off.
        if sx.run(cost) != "optimal":
            return None
        xb = sx.x[sx.basis]
        if np.any(xb < sx.l[sx.basis] - 1e-7) or np.any(xb > sx.u[sx.basis] + 1e-7):
            return None
        return self._finish(sx, k)
