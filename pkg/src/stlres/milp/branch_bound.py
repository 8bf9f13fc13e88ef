"""Best-bound branch-and-bound over the in-tree simplex, with bound propagation at every node."""

from __future__ import annotations

import heapq
import math

import numpy as np

from .model import INT_TOL, Model, Sense, Solution, Status
from .simplex import WarmLP

PROP_TOL = 1e-9
DEFAULT_NODE_LIMIT = 10**6
BRANCHING_RULES = ("first", "most-fractional")


class _Rows:
    """Row-wise sparse copy of the constraint matrix for propagation."""

    def __init__(self, A, lo, hi):
        self.idx = []
        self.coef = []
        for i in range(A.shape[0]):
            nz = np.flatnonzero(A[i])
            self.idx.append(nz)
            self.coef.append(A[i, nz])
        self.lo = lo.copy()
        self.hi = hi.copy()
        n = A.shape[1]
        occ = [[] for _ in range(n)]
        for i, nz in enumerate(self.idx):
            for j in nz:
                occ[j].append(i)
        self.rows_of = [np.array(r, dtype=int) for r in occ]


def propagate(rows: _Rows, lb: np.ndarray, ub: np.ndarray, is_int: np.ndarray,
              start_rows=None, max_work: int | None = None) -> bool:
    """Tighten ``lb``/``ub`` in place from the linear rows; False if infeasible."""
    nrows = len(rows.idx)
    queue = list(range(nrows)) if start_rows is None else sorted(set(start_rows))
    queued = np.zeros(nrows, dtype=bool)
    queued[queue] = True
    head = 0
    work = 0
    max_work = max_work or 30 * max(nrows, 1)
    while head < len(queue) and work < max_work:
        i = queue[head]
        head += 1
        queued[i] = False
        work += 1
        idx, a = rows.idx[i], rows.coef[i]
        if idx.size == 0:
            if rows.lo[i] > PROP_TOL or rows.hi[i] < -PROP_TOL:
                return False
            continue
        l, u = lb[idx], ub[idx]
        pos = a > 0
        minc = np.where(pos, a * l, a * u)
        maxc = np.where(pos, a * u, a * l)
        fin_min = np.isfinite(minc)
        fin_max = np.isfinite(maxc)
        n_inf_min = idx.size - int(fin_min.sum())
        n_inf_max = idx.size - int(fin_max.sum())
        smin = float(minc[fin_min].sum())
        smax = float(maxc[fin_max].sum())
        hi_i, lo_i = rows.hi[i], rows.lo[i]
        scale = 1.0 + abs(smin) + abs(smax)
        if n_inf_min == 0 and smin > hi_i + PROP_TOL * scale:
            return False
        if n_inf_max == 0 and smax < lo_i - PROP_TOL * scale:
            return False
        new_lb = l.copy()
        new_ub = u.copy()
        if math.isfinite(hi_i) and n_inf_min <= 1:
            if n_inf_min == 0:
                rest = smin - minc
            else:
                rest = np.where(fin_min, -math.inf, smin)
            with np.errstate(invalid="ignore"):
                cap = (hi_i - rest) / a  # a_j x_j <= hi - rest_j
            ok = np.isfinite(cap)
            new_ub = np.where(ok & pos, np.minimum(new_ub, cap), new_ub)
            new_lb = np.where(ok & ~pos, np.maximum(new_lb, cap), new_lb)
        if math.isfinite(lo_i) and n_inf_max <= 1:
            if n_inf_max == 0:
                rest = smax - maxc
            else:
                rest = np.where(fin_max, math.inf, smax)
            with np.errstate(invalid="ignore"):
                cap = (lo_i - rest) / a  # a_j x_j >= lo - rest_j
            ok = np.isfinite(cap)
            new_lb = np.where(ok & pos, np.maximum(new_lb, cap), new_lb)
            new_ub = np.where(ok & ~pos, np.minimum(new_ub, cap), new_ub)
        ints = is_int[idx]
        new_lb = np.where(ints, np.ceil(new_lb - 1e-9), new_lb)
        new_ub = np.where(ints, np.floor(new_ub + 1e-9), new_ub)
        width = np.where(np.isfinite(u - l), u - l, math.inf)
        thresh = np.where(ints, 0.5, np.maximum(1e-3 * np.minimum(width, 1e6), 1e-7))
        tighter_lb = new_lb > l + thresh
        tighter_ub = new_ub < u - thresh
        changed = tighter_lb | tighter_ub
        if not changed.any():
            continue
        for k in np.flatnonzero(changed):
            j = idx[k]
            if tighter_lb[k]:
                lb[j] = new_lb[k]
            if tighter_ub[k]:
                ub[j] = new_ub[k]
            if lb[j] > ub[j]:
                if lb[j] - ub[j] > PROP_TOL * (1.0 + abs(lb[j])) or is_int[j]:
                    return False
                lb[j] = ub[j] = 0.5 * (lb[j] + ub[j])
            for r in rows.rows_of[j]:
                if r != i and not queued[r]:
                    queued[r] = True
                    queue.append(r)
    return True


def _pick(frac, rule):
    if rule == "first":
        return int(np.flatnonzero(frac > INT_TOL)[0])
    return int(np.argmax(frac))


def _is_integral_objective(c, is_int) -> bool:
    if np.any(c[~is_int] != 0):
        return False
    return bool(np.all(c[is_int] == np.round(c[is_int])))


def solve_milp(model: Model, node_limit: int = DEFAULT_NODE_LIMIT, max_iter: int | None = None,
               use_propagation: bool = True, branching: str = "first") -> Solution:
    """Exact MILP optimum by best-bound branch-and-bound.

    ``branching="first"`` picks the lowest-index fractional variable (encoders
    create variables in time order, so this branches along the trace);
    ``"most-fractional"`` picks the variable farthest from an integer, lowest
    index on ties.  The open node
    with the best LP bound is expanded next, deeper nodes first on ties, then
    in insertion order.  Children re-solve their LP warm from the parent's
    basis.  Deterministic.
    """
    if branching not in BRANCHING_RULES:
        raise ValueError(f"unknown branching rule {branching!r}")
    A, lo, hi = model.dense_rows()
    lb0, ub0 = model.bounds()
    is_int = model.integer_mask()
    lb0 = np.where(is_int, np.ceil(lb0 - 1e-9), lb0)
    ub0 = np.where(is_int, np.floor(ub0 + 1e-9), ub0)
    flip = -1.0 if model.sense is Sense.MAXIMIZE else 1.0
    c = flip * model.objective_vector()
    const = model.objective.const
    integral_obj = _is_integral_objective(c, is_int)

    # The last propagation row is the objective cutoff ``c.x <= incumbent - step``.
    A_prop = np.vstack([A, c[None, :]]) if A.size or c.size else A
    rows = _Rows(A_prop, np.append(lo, -math.inf), np.append(hi, math.inf))
    cut_row = len(rows.idx) - 1

    def finish(status, best_x, best_obj, nodes, iters, bound=None, msg=""):
        if best_x is None:
            return Solution(status, nodes=nodes, iterations=iters, message=msg)
        return Solution(status, best_x, flip * best_obj + const, nodes=nodes, iterations=iters,
                        bound=None if bound is None else flip * bound + const, message=msg)

    lb, ub = lb0.copy(), ub0.copy()
    if np.any(lb > ub) or (use_propagation and not propagate(rows, lb, ub, is_int)):
        return Solution(Status.INFEASIBLE, message="infeasible at root propagation")

    best_x, best_obj = None, math.inf
    lp = WarmLP(c, A, lo, hi, max_iter)
    heap = [(-math.inf, 0, 0, lb, ub, None)]
    counter = 1
    nodes = iters = 0

    def prunable(bound):
        if best_x is None:
            return False
        if integral_obj:
            return math.ceil(bound - 1e-6) >= best_obj
        return bound >= best_obj - 1e-6 * max(1.0, abs(best_obj))

    while heap:
        bound, negdepth, _, lb, ub, basis = heapq.heappop(heap)
        if prunable(bound):
            continue
        if nodes >= node_limit:
            return finish(Status.ITERATION_LIMIT, best_x, best_obj, nodes, iters, bound,
                          "node limit reached")
        nodes += 1
        if best_x is not None and use_propagation:
            rows.hi[cut_row] = best_obj - (1.0 if integral_obj else 1e-6 * max(1.0, abs(best_obj)))
            if not propagate(rows, lb, ub, is_int, start_rows=[cut_row]):
                continue
        sol, basis = lp.solve(lb, ub, basis)
        iters += sol.iterations
        if sol.status is Status.INFEASIBLE:
            continue
        if sol.status is Status.ITERATION_LIMIT:
            return finish(Status.ITERATION_LIMIT, best_x, best_obj, nodes, iters, bound, sol.message)
        if sol.status is Status.UNBOUNDED:
            return Solution(Status.UNBOUNDED, nodes=nodes, iterations=iters, message="LP relaxation unbounded")
        x = sol.values
        obj = float(c @ x)
        if prunable(obj):
            continue
        frac = np.abs(x - np.round(x))
        frac = np.where(is_int, frac, 0.0)
        branch_on = None
        if frac.max(initial=0.0) > INT_TOL:
            branch_on = _pick(frac, branching)
        else:
            polished = _polish(lp, A, lo, hi, lb, ub, x, is_int, basis)
            if polished is not None:
                pobj = float(c @ polished)
                if pobj < best_obj:
                    best_x, best_obj = polished, pobj
                continue
            if frac.max(initial=0.0) > 1e-12:
                branch_on = int(np.argmax(frac))
            else:
                continue
        v = x[branch_on]
        down_ub = ub.copy()
        down_ub[branch_on] = math.floor(v)
        up_lb = lb.copy()
        up_lb[branch_on] = math.ceil(v)
        for clb, cub in ((lb.copy(), down_ub), (up_lb, ub.copy())):
            if clb[branch_on] > cub[branch_on]:
                continue
            if use_propagation and not propagate(rows, clb, cub, is_int, start_rows=rows.rows_of[branch_on]):
                continue
            heapq.heappush(heap, (obj, negdepth - 1, counter, clb, cub, basis))
            counter += 1

    if best_x is None:
        return Solution(Status.INFEASIBLE, nodes=nodes, iterations=iters, message="no integer-feasible point")
    return finish(Status.OPTIMAL, best_x, best_obj, nodes, iters, best_obj)


def _polish(lp, A, lo, hi, lb, ub, x, is_int, basis):
    """Round integer variables, re-solve for the continuous ones; None if that fails."""
    r = np.round(x)
    plb = np.where(is_int, r, lb)
    pub = np.where(is_int, r, ub)
    if np.any(plb < lb - 1e-9) or np.any(pub > ub + 1e-9):
        return None
    if not np.any(~is_int):
        act = A @ r
        if np.all(act >= lo - 1e-7) and np.all(act <= hi + 1e-7):
            return r
        return None
    sol, _ = lp.solve(plb, pub, basis)
    if sol.status is not Status.OPTIMAL:
        return None
    out = sol.values.copy()
    out[is_int] = r[is_int]
    return out
