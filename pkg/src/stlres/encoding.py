"""Big-M MILP encoding of STL satisfaction and of the recovery/durability counters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .linear_system import ControlConstraintSet, LinearSystem
from .milp import LinExpr, Model, Var, VarKind
from .stl import (Always, And, Atom, Eventually, Formula, Not, Or, UnboundedUntil, Until)

#: z = 0 forces ``mu(x) - c <= -ATOM_MARGIN``; z = 1 forces ``mu(x) - c >= 0``.
ATOM_MARGIN = 1e-6
#: Monitor tolerance that matches the encoding: values in (-ATOM_MARGIN, 0) are
#: float noise around the threshold, read as satisfied from -MONITOR_ATOL up.
MONITOR_ATOL = ATOM_MARGIN / 2
#: Atom big-M = BIG_M_SLACK * (interval bound of |mu(x) - c|).
BIG_M_SLACK = 1.1
#: Used when a state component has no finite bound.
FALLBACK_BIG_M = 1e5


class BigMError(ValueError):
    pass


@dataclass
class EncodingContext:
    """Symbolic trace plus caches shared by every encoded subformula.

    ``states[t][i]`` is the MILP variable for component ``i`` of ``x_t``;
    ``lower``/``upper`` are valid bounds on those variables, shape ``(H+1, n)``.
    """

    model: Model
    states: list
    lower: np.ndarray
    upper: np.ndarray
    big_M: float | None = None
    z: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    @property
    def binaries(self) -> int:
        return len(self.z)


class EncodedObjectives(NamedTuple):
    rec_expr: LinExpr  # alpha - c_rec_0
    dur_expr: LinExpr  # c_dur_0 - beta


# --------------------------------------------------------------------------
# Symbolic trace
# --------------------------------------------------------------------------


def reachable_bounds(system: LinearSystem, x0, controls: ControlConstraintSet, horizon: int):
    """Interval over-approximation of every reachable state ``x_0..x_H``."""
    F, G = system.F, system.G
    lo = np.empty((horizon + 1, system.n))
    hi = np.empty_like(lo)
    lo[0] = hi[0] = np.asarray(x0, float)
    Fp, Fn = np.maximum(F, 0), np.minimum(F, 0)
    Gp, Gn = np.maximum(G, 0), np.minimum(G, 0)
    ul, uh = controls.lower, controls.upper
    for t in range(horizon):
        lo[t + 1] = Fp @ lo[t] + Fn @ hi[t] + Gp @ ul + Gn @ uh
        hi[t + 1] = Fp @ hi[t] + Fn @ lo[t] + Gp @ uh + Gn @ ul
    return lo, hi


def encode_trace(model: Model, system: LinearSystem, x0, controls: ControlConstraintSet,
                 horizon: int, state_box=None, big_M: float | None = None):
    """Add control and state variables linked by the dynamics.

    Returns ``(ctx, u)`` where ``u[t][j]`` are the control variables.  State
    bounds come from interval reachability, intersected with ``state_box``
    (an ``(n, 2)`` array) when given; the box is then a hard constraint.
    """
    x0 = np.asarray(x0, float).reshape(-1)
    lo, hi = reachable_bounds(system, x0, controls, horizon)
    if state_box is not None:
        box = np.asarray(state_box, float).reshape(system.n, 2)
        lo = np.maximum(lo, box[:, 0])
        hi = np.minimum(hi, box[:, 1])
        lo[0] = hi[0] = x0
    u = []
    for t in range(horizon):
        row = []
        for j in range(system.m):
            kind = VarKind.BINARY if controls.binary[j] else VarKind.CONTINUOUS
            row.append(model.add_var(f"u_{t}_{j}", kind, controls.lower[j], controls.upper[j]))
        u.append(row)
        for k in range(controls.step_A.shape[0]):
            expr = sum((controls.step_A[k, j] * row[j] for j in range(system.m)), LinExpr())
            model.add_constr(expr <= controls.step_b[k], f"poly_{k}_{t}")
    for cr in controls.rows_for_horizon(horizon):
        expr = sum((c * u[t][j] for (t, j), c in cr.terms), LinExpr())
        if math.isfinite(cr.lo):
            model.add_constr(expr >= cr.lo, f"{cr.name or 'cross'}_lo")
        if math.isfinite(cr.hi):
            model.add_constr(expr <= cr.hi, f"{cr.name or 'cross'}_hi")
    states = []
    for t in range(horizon + 1):
        states.append([model.add_var(f"x_{t}_{i}", VarKind.CONTINUOUS, lo[t, i], hi[t, i])
                       for i in range(system.n)])
    for t in range(horizon):
        for i in range(system.n):
            rhs = LinExpr()
            for k in np.flatnonzero(system.F[i]):
                rhs = rhs + system.F[i, k] * states[t][k]
            for j in np.flatnonzero(system.G[i]):
                rhs = rhs + system.G[i, j] * u[t][j]
            model.add_constr(states[t + 1][i] == rhs, f"dyn_{t}_{i}")
    return EncodingContext(model, states, lo, hi, big_M), u


# --------------------------------------------------------------------------
# Boolean satisfaction
# --------------------------------------------------------------------------


def _fixed(ctx: EncodingContext, value: bool, name: str) -> Var:
    v = 1.0 if value else 0.0
    return ctx.model.add_var(name, VarKind.BINARY, v, v)


def _conj(ctx, parts, name):
    if len(parts) == 1:
        return parts[0]
    z = ctx.model.add_var(name, VarKind.BINARY)
    for p in parts:
        ctx.model.add_constr(z <= p)
    ctx.model.add_constr(z >= sum(parts, LinExpr()) - (len(parts) - 1))
    return z


def _disj(ctx, parts, name):
    if len(parts) == 1:
        return parts[0]
    z = ctx.model.add_var(name, VarKind.BINARY)
    for p in parts:
        ctx.model.add_constr(z >= p)
    ctx.model.add_constr(z <= sum(parts, LinExpr()))
    return z


def _atom_bounds(ctx, atom: Atom, t: int):
    a = np.asarray(atom.coefficients)
    lo = ctx.lower[t]
    hi = ctx.upper[t]
    nz = a != 0
    with np.errstate(invalid="ignore"):
        vlo = np.where(a > 0, a * lo, a * hi)[nz].sum() - atom.constant
        vhi = np.where(a > 0, a * hi, a * lo)[nz].sum() - atom.constant
    return float(vlo), float(vhi)


def _encode_atom(ctx: EncodingContext, atom: Atom, t: int, name: str):
    if atom.dim != len(ctx.states[t]):
        raise BigMError(f"atom has {atom.dim} coefficients, trace has {len(ctx.states[t])} states")
    vlo, vhi = _atom_bounds(ctx, atom, t)
    if vlo >= 0:
        return _fixed(ctx, True, name)
    if vhi <= -ATOM_MARGIN:
        return _fixed(ctx, False, name)
    if vlo == vhi:
        # Constant inside the exclusion band: decide it the way witnesses are re-monitored.
        return _fixed(ctx, vlo >= -MONITOR_ATOL, name)
    if ctx.big_M is not None:
        need = max(abs(vlo), abs(vhi))
        if math.isfinite(need) and ctx.big_M < need:
            raise BigMError(f"big_M={ctx.big_M:g} below |mu(x_{t}) - c| bound {need:g} for {name}")
        m_on = m_off = ctx.big_M
    else:
        # One-sided constants: each row only needs the bound on its own side.
        m_on = BIG_M_SLACK * -vlo if math.isfinite(vlo) else FALLBACK_BIG_M
        m_off = BIG_M_SLACK * vhi if math.isfinite(vhi) else FALLBACK_BIG_M
    mu = LinExpr()
    for i, c in enumerate(atom.coefficients):
        if c:
            mu = mu + c * ctx.states[t][i]
    z = ctx.model.add_var(name, VarKind.BINARY)
    ctx.model.add_constr(mu - m_on * z >= atom.constant - m_on, f"{name}_on")
    ctx.model.add_constr(mu - (m_off + ATOM_MARGIN) * z <= atom.constant - ATOM_MARGIN, f"{name}_off")
    return z


def encode_boolean(phi: Formula, ctx: EncodingContext) -> list:
    """Satisfaction variables ``z[t]`` of ``phi`` for ``t = 0..H``."""
    return [_z(ctx, phi, t) for t in range(ctx.horizon + 1)]


def _z(ctx: EncodingContext, phi: Formula, t: int):
    key = (phi, t)
    if key in ctx.z:
        return ctx.z[key]
    H = ctx.horizon
    name = f"z{_node_id(ctx, phi)}_{t}"
    if isinstance(phi, Atom):
        z = _encode_atom(ctx, phi, t, name)
    elif isinstance(phi, Not):
        child = _z(ctx, phi.child, t)
        z = ctx.model.add_var(name, VarKind.BINARY)
        ctx.model.add_constr(z + child == 1.0)
    elif isinstance(phi, (And, Or)):
        parts = [_z(ctx, c, t) for c in phi.children]
        z = _conj(ctx, parts, name) if isinstance(phi, And) else _disj(ctx, parts, name)
    elif isinstance(phi, (Always, Eventually)):
        window = phi.interval.window(t, H)
        if len(window) == 0:
            z = _fixed(ctx, isinstance(phi, Always), name)
        else:
            parts = [_z(ctx, phi.child, s) for s in window]
            z = _conj(ctx, parts, name) if isinstance(phi, Always) else _disj(ctx, parts, name)
    elif isinstance(phi, UnboundedUntil):
        right = _z(ctx, phi.right, t)
        if t == H:
            z = right
        else:
            hold = _conj(ctx, [_z(ctx, phi.left, t), _z(ctx, phi, t + 1)], name + "_h")
            z = _disj(ctx, [right, hold], name)
    elif isinstance(phi, Until):
        z = _encode_until(ctx, phi, t, name)
    else:
        raise TypeError(f"not a formula: {phi!r}")
    ctx.z[key] = z
    return z


def _encode_until(ctx, phi: Until, t: int, name: str):
    """``left U[a,b] right`` as left on ``[t, s)``, right somewhere in the window,
    and an unbounded until from ``s = min(t + a, H)``."""
    H = ctx.horizon
    if phi.interval.empty:
        return _fixed(ctx, False, name)
    s = min(t + phi.interval.lo, H)
    parts = [_z(ctx, phi.left, k) for k in range(t, s)]
    parts.append(_z(ctx, Eventually(phi.interval, phi.right), t))
    parts.append(_z(ctx, UnboundedUntil(phi.left, phi.right), s))
    return _conj(ctx, parts, name)


def _node_id(ctx, phi) -> int:
    ids = ctx.counters.setdefault("_node_ids", {})
    return ids.setdefault(phi, len(ids))


# --------------------------------------------------------------------------
# Counters
# --------------------------------------------------------------------------


def linearize_product(model: Model, z, c, c_lo: float, c_hi: float, name: str = "") -> Var:
    """Integer ``y`` equal to ``z * c`` at integer-feasible points.

    ``z`` is an affine binary expression (a variable or ``1 - var``), ``c`` an
    affine integer expression with ``c_lo <= c <= c_hi``.
    """
    z = LinExpr.of(z)
    c = LinExpr.of(c)
    y = model.add_var(name or None, VarKind.INTEGER, min(0.0, c_lo), max(0.0, c_hi))
    model.add_constr(y >= c_lo * z, f"{y.name}_a")
    model.add_constr(y <= c_hi * z, f"{y.name}_b")
    model.add_constr(y >= c - c_hi * (1 - z), f"{y.name}_c")
    model.add_constr(y <= c - c_lo * (1 - z), f"{y.name}_d")
    return y


def encode_resilience_counters(z: list, ctx: EncodingContext, alpha: int, beta: int) -> EncodedObjectives:
    """Recovery and durability counters driven by satisfaction variables ``z[0..H]``.

    ``c_rec[t] = (1 - z[t]) (c_rec[t+1] + 1)``, ``c1[t] = z[t] (c1[t+1] + 1)``,
    ``c2[t] = (1 - z[t]) (c1[t+1] + c2[t+1])``, all zero at ``t = H``.
    """
    m = ctx.model
    H = len(z) - 1
    zero = lambda n: m.add_var(n, VarKind.INTEGER, 0.0, 0.0)  # noqa: E731
    c_rec = [None] * (H + 1)
    c1 = [None] * (H + 1)
    c2 = [None] * (H + 1)
    c_rec[H], c1[H], c2[H] = zero(f"crec_{H}"), zero(f"c1_{H}"), zero(f"c2_{H}")
    for t in range(H - 1, -1, -1):
        cap = H - t  # a counter at t never exceeds the samples left before H
        off = 1 - LinExpr.of(z[t])
        c_rec[t] = linearize_product(m, off, c_rec[t + 1] + 1, 1.0, cap, f"crec_{t}")
        c1[t] = linearize_product(m, z[t], c1[t + 1] + 1, 1.0, cap, f"c1_{t}")
        c2[t] = linearize_product(m, off, c1[t + 1] + c2[t + 1], 0.0, cap - 1, f"c2_{t}")
    ctx.counters.update(c_rec=c_rec, c1=c1, c2=c2)
    return EncodedObjectives(alpha - LinExpr.of(c_rec[0]), c1[0] + c2[0] - beta)


def counter_values(z_values, horizon: int | None = None) -> dict:
    """Evaluate the counter recursions on a 0/1 sequence (no MILP)."""
    z = [int(round(v)) for v in z_values]
    H = len(z) - 1 if horizon is None else horizon
    c_rec = [0] * (H + 1)
    c1 = [0] * (H + 1)
    c2 = [0] * (H + 1)
    for t in range(H - 1, -1, -1):
        c_rec[t] = (1 - z[t]) * (c_rec[t + 1] + 1)
        c1[t] = z[t] * (c1[t + 1] + 1)
        c2[t] = (1 - z[t]) * (c1[t + 1] + c2[t + 1])
    return {"c_rec": c_rec, "c1": c1, "c2": c2, "c_dur": [a + b for a, b in zip(c1, c2)]}
