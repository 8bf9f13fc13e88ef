"""Discrete-time linear plants ``x[t+1] = F x[t] + G u[t]`` and control constraint sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .stl import Trace

FEAS_TOL = 1e-6


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class LinearSystem:
    F: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.array(self.F, dtype=float))
        G = np.array(self.G, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        if F.shape[0] != F.shape[1]:
            raise DimensionError(f"F must be square, got {F.shape}")
        if G.shape[0] != F.shape[0]:
            raise DimensionError(f"G has {G.shape[0]} rows, expected {F.shape[0]}")
        F.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]


def as_controls(controls, m: int) -> np.ndarray:
    u = np.array(controls, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, m) if m > 1 else u[:, None]
    if u.ndim != 2 or u.shape[1] != m:
        raise DimensionError(f"controls must have shape (H, {m}), got {u.shape}")
    return u


def simulate(sys: LinearSystem, x0, controls, step_seconds: float = 1.0) -> Trace:
    """Roll the plant forward; ``H`` controls give ``H + 1`` states."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n:
        raise DimensionError(f"x0 has dimension {x0.shape[0]}, expected {sys.n}")
    u = as_controls(controls, sys.m)
    if u.shape[0] < 1:
        raise DimensionError("need at least one control step")
    xs = np.empty((u.shape[0] + 1, sys.n))
    xs[0] = x0
    for t in range(u.shape[0]):
        xs[t + 1] = sys.F @ xs[t] + sys.G @ u[t]
    return Trace(xs, step_seconds)


@dataclass(frozen=True)
class CrossRow:
    """``lo <= sum(coef * u[t][j]) <= hi`` over entries ``{(t, j): coef}``."""

    terms: tuple
    lo: float = -np.inf
    hi: float = np.inf
    name: str = ""


@dataclass(frozen=True)
class ControlConstraintSet:
    """Box, per-step polytope ``A u <= b``, rate limits and explicit cross-step rows.

    ``binary[j]`` marks control component ``j`` as 0/1 valued; its box is
    intersected with ``[0, 1]``.
    """

    lower: np.ndarray
    upper: np.ndarray
    binary: np.ndarray | None = None
    step_A: np.ndarray | None = None
    step_b: np.ndarray | None = None
    rate_limit: np.ndarray | None = None
    cross_rows: tuple = field(default=())

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        m = lo.shape[0]
        if hi.shape[0] != m:
            raise DimensionError("lower and upper bounds differ in length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DimensionError("control bounds must be finite (closed polytope)")
        if np.any(lo > hi):
            raise DimensionError("control lower bound exceeds upper bound")
        binary = np.zeros(m, bool) if self.binary is None else np.asarray(self.binary, bool)
        if binary.shape != (m,):
            raise DimensionError("binary mask must have one entry per control component")
        lo = np.where(binary, np.maximum(lo, 0.0), lo)
        hi = np.where(binary, np.minimum(hi, 1.0), hi)
        A = np.zeros((0, m)) if self.step_A is None else np.atleast_2d(np.asarray(self.step_A, float))
        b = np.zeros(0) if self.step_b is None else np.asarray(self.step_b, float).reshape(-1)
        if A.shape[1] != m or A.shape[0] != b.shape[0]:
            raise DimensionError("per-step rows must be k x m with k right-hand sides")
        rate = None
        if self.rate_limit is not None:
            rate = np.broadcast_to(np.asarray(self.rate_limit, float), (m,)).copy()
        for name, arr in (("lower", lo), ("upper", hi), ("binary", binary), ("A", A), ("b", b)):
            arr.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "binary", binary)
        object.__setattr__(self, "step_A", A)
        object.__setattr__(self, "step_b", b)
        object.__setattr__(self, "rate_limit", rate)
        object.__setattr__(self, "cross_rows", tuple(self.cross_rows))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], **kw) -> "ControlConstraintSet":
        return cls(np.asarray(lower, float), np.asarray(upper, float), **kw)

    @property
    def m(self) -> int:
        return self.lower.shape[0]

    def rows_for_horizon(self, horizon: int) -> list[CrossRow]:
        """Rate-limit rows plus explicit cross rows that fit within ``horizon`` steps."""
        rows = []
        if self.rate_limit is not None:
            for t in range(horizon - 1):
                for j, r in enumerate(self.rate_limit):
                    if np.isfinite(r):
                        rows.append(CrossRow((((t + 1, j), 1.0), ((t, j), -1.0)), -r, r,
                                             f"rate_{j}_{t}"))
        for row in self.cross_rows:
            if all(0 <= t < horizon for (t, _), _c in row.terms):
                rows.append(row)
        return rows


def check_controls(cs: ControlConstraintSet, controls, tol: float = FEAS_TOL) -> tuple[bool, list[str]]:
    """Return ``(ok, violations)``; each violation names the offending row."""
    u = as_controls(controls, cs.m)
    bad = []
    for t, ut in enumerate(u):
        for j, v in enumerate(ut):
            if v < cs.lower[j] - tol or v > cs.upper[j] + tol:
                bad.append(f"box u[{t}][{j}]={v:g} not in [{cs.lower[j]:g}, {cs.upper[j]:g}]")
            if cs.binary[j] and min(abs(v), abs(v - 1.0)) > tol:
                bad.append(f"integrality u[{t}][{j}]={v:g} is not 0/1")
        if cs.step_A.shape[0]:
            lhs = cs.step_A @ ut
            for k in np.flatnonzero(lhs > cs.step_b + tol):
                bad.append(f"polytope row {k} at step {t}: {lhs[k]:g} > {cs.step_b[k]:g}")
    for row in cs.rows_for_horizon(u.shape[0]):
        val = sum(c * u[t, j] for (t, j), c in row.terms)
        if val < row.lo - tol or val > row.hi + tol:
            bad.append(f"cross row {row.name or row.terms}: {val:g} not in [{row.lo:g}, {row.hi:g}]")
    return (not bad, bad)
