"""Recoverability/durability monitoring and the resiliency ordering on (rec, dur) pairs."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .stl import (Always, And, Atom, Eventually, Formula, Interval, Not, Or, STLError,
                  Trace, UnboundedUntil, Until, signal)

#: ``|xi| = H``: the never-recovered fallback at time t is ``H - t``.
HORIZON = "horizon"
#: ``|xi| = H + 1`` (number of samples); offered for comparison only.
SAMPLES = "samples"


@dataclass(frozen=True)
class SrsSpec:
    """Resiliency requirement: recover ``phi`` within ``alpha`` steps, then hold it ``beta`` steps."""

    phi: Formula
    alpha: int
    beta: int

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 0:
            raise STLError(f"alpha must be a non-negative integer number of steps, got {self.alpha}")
        if int(self.beta) != self.beta or self.beta < 1:
            raise STLError(f"beta must be a positive integer number of steps, got {self.beta}")
        object.__setattr__(self, "alpha", int(self.alpha))
        object.__setattr__(self, "beta", int(self.beta))

    def formula(self) -> Formula:
        """``!phi U[0, alpha] G[0, beta - 1] phi``."""
        return Until(Interval(0, self.alpha), Not(self.phi),
                     Always(Interval(0, self.beta - 1), self.phi))


class ResvPair(NamedTuple):
    rec: int
    dur: int

    def seconds(self, step_seconds: float) -> tuple[float, float]:
        return (self.rec * step_seconds, self.dur * step_seconds)


class ResvOrdering(enum.Enum):
    DOMINATES = "dominates"
    DOMINATED = "dominated"
    NON_DOMINATED = "mutually-non-dominated"


def _fallback(horizon: int, convention: str) -> int:
    if convention == HORIZON:
        return horizon
    if convention == SAMPLES:
        return horizon + 1
    raise ValueError(f"unknown convention {convention!r}")


def _first(values: np.ndarray, start: int, stop: int) -> int | None:
    idx = np.flatnonzero(values[start:stop])
    return None if idx.size == 0 else int(idx[0])


def t_rec_from_signal(sig: np.ndarray, t: int = 0, convention: str = HORIZON) -> int:
    end = _fallback(len(sig) - 1, convention)
    d = _first(sig, t, min(end, len(sig)))
    return end - t if d is None else d


def t_dur_from_signal(sig: np.ndarray, t: int = 0, convention: str = HORIZON) -> int:
    end = _fallback(len(sig) - 1, convention)
    tp = t + t_rec_from_signal(sig, t, convention)
    d = _first(~sig, tp, min(end, len(sig)))
    return end - tp if d is None else d


def _check_t(trace: Trace, t: int):
    if not 0 <= t <= trace.horizon:
        raise STLError(f"time {t} outside [0, {trace.horizon}]")


def t_rec(phi: Formula, trace: Trace, t: int = 0, *, atol: float = 0.0,
          convention: str = HORIZON) -> int:
    """Steps until ``phi`` next holds at or after ``t`` (``H - t`` if it never does)."""
    _check_t(trace, t)
    return t_rec_from_signal(signal(phi, trace, atol), t, convention)


def t_dur(phi: Formula, trace: Trace, t: int = 0, *, atol: float = 0.0,
          convention: str = HORIZON) -> int:
    """Steps ``phi`` keeps holding from its recovery time ``t + t_rec``."""
    _check_t(trace, t)
    return t_dur_from_signal(signal(phi, trace, atol), t, convention)


def resv(spec: SrsSpec, trace: Trace, t: int = 0, *, atol: float = 0.0,
         convention: str = HORIZON) -> ResvPair:
    _check_t(trace, t)
    sig = signal(spec.phi, trace, atol)
    return ResvPair(spec.alpha - t_rec_from_signal(sig, t, convention),
                    t_dur_from_signal(sig, t, convention) - spec.beta)


# --------------------------------------------------------------------------
# Orderings
# --------------------------------------------------------------------------


def sign_class(x) -> int:
    return int(np.sign(x[0]) + np.sign(x[1]))


def pareto_dominates(x, y) -> bool:
    return x[0] >= y[0] and x[1] >= y[1] and (x[0] > y[0] or x[1] > y[1])


def compare_re(x, y) -> ResvOrdering:
    sx, sy = sign_class(x), sign_class(y)
    if sx > sy:
        return ResvOrdering.DOMINATES
    if sx < sy:
        return ResvOrdering.DOMINATED
    if pareto_dominates(x, y):
        return ResvOrdering.DOMINATES
    if pareto_dominates(y, x):
        return ResvOrdering.DOMINATED
    return ResvOrdering.NON_DOMINATED


def _front(points: list) -> list:
    """Pareto-maximal points of a duplicate-free 2-D set, by a descending sweep."""
    out = []
    best_dur = None
    for p in sorted(points, key=lambda p: (-p[0], -p[1])):
        if best_dur is None or p[1] > best_dur:
            out.append(p)
            best_dur = p[1]
    return out


def max_pareto(points: Iterable) -> set:
    pts = {(int(p[0]), int(p[1])) for p in points}
    if not pts:
        raise ValueError("max_pareto of an empty set")
    return {ResvPair(*p) for p in _front(list(pts))}


def max_re(points: Iterable) -> set:
    """Maximum resilience set: Pareto front of the best sign class.

    Any point outside the top sign class is beaten by a point inside it, so
    only that class can contribute.
    """
    pts = {(int(p[0]), int(p[1])) for p in points}
    if not pts:
        raise ValueError("max_re of an empty set")
    top = max(sign_class(p) for p in pts)
    return {ResvPair(*p) for p in _front([p for p in pts if sign_class(p) == top])}


# --------------------------------------------------------------------------
# Time robustness (right shift)
# --------------------------------------------------------------------------


def time_robustness_plus(phi: Formula, trace: Trace, t: int = 0) -> int:
    """Signed number of steps the trace can be shifted right without changing the verdict."""
    _check_t(trace, t)
    return int(_theta(phi, trace, {})[t])


def _theta(phi, trace, cache) -> np.ndarray:
    if phi in cache:
        return cache[phi]
    H = trace.horizon
    if isinstance(phi, Atom):
        chi = np.where(signal(phi, trace), 1, -1)
        run = np.zeros(H + 1, dtype=int)
        for t in range(H - 1, -1, -1):
            run[t] = run[t + 1] + 1 if chi[t + 1] == chi[t] else 0
        out = chi * run
    elif isinstance(phi, Not):
        out = -_theta(phi.child, trace, cache)
    elif isinstance(phi, And):
        out = np.min([_theta(c, trace, cache) for c in phi.children], axis=0)
    elif isinstance(phi, Or):
        out = np.max([_theta(c, trace, cache) for c in phi.children], axis=0)
    elif isinstance(phi, Always):
        th = _theta(phi.child, trace, cache)
        out = np.array([min((th[i] for i in phi.interval.window(t, H)), default=H - t)
                        for t in range(H + 1)])
    elif isinstance(phi, Eventually):
        th = _theta(phi.child, trace, cache)
        out = np.array([max((th[i] for i in phi.interval.window(t, H)), default=-(H - t))
                        for t in range(H + 1)])
    elif isinstance(phi, (Until, UnboundedUntil)):
        iv = phi.interval if isinstance(phi, Until) else Interval(0, float("inf"))
        left = _theta(phi.left, trace, cache)
        right = _theta(phi.right, trace, cache)
        out = np.empty(H + 1, dtype=int)
        for t in range(H + 1):
            best = None
            for tp in iv.window(t, H):
                v = right[tp] if tp == t else min(right[tp], left[t:tp].min())
                best = v if best is None else max(best, v)
            out[t] = -(H - t) if best is None else best
    else:
        raise TypeError(f"not a formula: {phi!r}")
    out = np.asarray(out, dtype=int)
    cache[phi] = out
    return out
