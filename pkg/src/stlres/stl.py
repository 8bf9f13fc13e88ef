"""STL formulas over linear predicates, a text parser/printer and a Boolean monitor.

Time is discrete.  A trace holds states ``x_0 .. x_H``; every temporal window
``t + [a, b]`` is clamped to ``[min(t + a, H), min(t + b, H)]`` so that the
monitor and the MILP encoder agree sample by sample.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

INF = math.inf


class STLError(ValueError):
    """Base class for formula and trace errors."""


class STLSyntaxError(STLError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifier(STLError):
    pass


class NonlinearExpression(STLError):
    pass


class DimensionMismatch(STLError):
    pass


# --------------------------------------------------------------------------
# Abstract syntax
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: float  # int steps, or INF (only for unbounded until)

    def __post_init__(self):
        if self.lo < 0:
            raise STLError(f"interval lower bound must be >= 0, got {self.lo}")
        if self.hi != INF and int(self.hi) != self.hi:
            raise STLError(f"interval bounds must be integer steps, got {self.hi}")

    @property
    def empty(self) -> bool:
        return self.hi < self.lo

    def window(self, t: int, horizon: int) -> range:
        """Sample indices covered at time ``t`` on a trace ending at ``horizon``."""
        if self.empty:
            return range(0)
        start = min(t + self.lo, horizon)
        stop = horizon if self.hi == INF else min(t + int(self.hi), horizon)
        return range(start, stop + 1)

    def __str__(self):
        hi = "inf" if self.hi == INF else str(int(self.hi))
        return f"[{self.lo},{hi}]"


@dataclass(frozen=True)
class Atom:
    """Linear predicate ``coefficients . x >= constant``."""

    coefficients: tuple
    constant: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def dim(self) -> int:
        return len(self.coefficients)

    def value(self, states: np.ndarray) -> np.ndarray:
        """``mu(x_t) - c`` for every row of ``states``."""
        states = np.atleast_2d(states)
        if states.shape[1] != self.dim:
            raise DimensionMismatch(
                f"atom has {self.dim} coefficients but trace has dimension {states.shape[1]}"
            )
        return states @ np.asarray(self.coefficients) - self.constant


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise STLError("And needs at least two operands")


@dataclass(frozen=True)
class Or:
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise STLError("Or needs at least two operands")


@dataclass(frozen=True)
class Until:
    interval: Interval
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Always:
    interval: Interval
    child: "Formula"


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    child: "Formula"


@dataclass(frozen=True)
class UnboundedUntil:
    """``left U right`` with no time bound; only the encoder's Until rewrite builds these."""

    left: "Formula"
    right: "Formula"


Formula = Union[Atom, Not, And, Or, Until, Always, Eventually, UnboundedUntil]


def true_atom(dim: int) -> Atom:
    return Atom((0.0,) * dim, 0.0)


def false_atom(dim: int) -> Atom:
    return Atom((0.0,) * dim, 1.0)


def children(phi: Formula) -> tuple:
    if isinstance(phi, Atom):
        return ()
    if isinstance(phi, (Not, Always, Eventually)):
        return (phi.child,)
    if isinstance(phi, (And, Or)):
        return phi.children
    if isinstance(phi, (Until, UnboundedUntil)):
        return (phi.left, phi.right)
    raise TypeError(f"not a formula: {phi!r}")


def atoms(phi: Formula) -> list[Atom]:
    """Distinct atoms in depth-first order."""
    seen: dict[Atom, None] = {}

    def walk(node):
        if isinstance(node, Atom):
            seen.setdefault(node, None)
        for c in children(node):
            walk(c)

    walk(phi)
    return list(seen)


def subformulas(phi: Formula) -> list:
    """Distinct nodes, children before parents."""
    out: dict = {}

    def walk(node):
        for c in children(node):
            walk(c)
        out.setdefault(node, None)

    walk(phi)
    return list(out)


def depth(phi: Formula) -> int:
    cs = children(phi)
    return 0 if not cs else 1 + max(depth(c) for c in cs)


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Trace:
    """States ``x_0 .. x_H`` sampled every ``step_seconds``."""

    states: np.ndarray
    step_seconds: float = 1.0
    names: tuple = field(default=(), compare=False)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2:
            raise STLError("trace states must be a 2-D array (H+1, n)")
        if states.shape[0] < 2:
            raise STLError("a trace needs at least two samples (H >= 1)")
        if self.step_seconds <= 0:
            raise STLError("step_seconds must be positive")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.states.shape[0]


def read_trace_csv(text: str, step_seconds: float = 1.0) -> Trace:
    """Parse ``t,<names...>`` CSV text; rows must be t = 0, 1, ..., H."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise STLError("empty trace file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t" or len(header) < 2:
        raise STLError("trace header must be 't,<state names...>'")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise STLError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            t = int(row[0])
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise STLError(f"line {lineno}: {exc}") from None
        if t != len(data):
            raise STLError(f"line {lineno}: expected t={len(data)}, got {t}")
        data.append(values)
    return Trace(np.array(data, dtype=float).reshape(len(data), len(header) - 1),
                 step_seconds, tuple(header[1:]))


def write_trace_csv(trace: Trace, names: Sequence[str] | None = None) -> str:
    names = list(names or trace.names or [f"x{i}" for i in range(trace.dim)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *names])
    for t, row in enumerate(trace.states):
        w.writerow([t, *(repr(float(v)) for v in row)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Boolean monitor
# --------------------------------------------------------------------------


def signal(phi: Formula, trace: Trace, atol: float = 0.0) -> np.ndarray:
    """Boolean satisfaction of ``phi`` at every sample ``t = 0..H``.

    ``atol`` loosens atoms to ``mu(x) - c >= -atol``; the default is the
    exact semantics.
    """
    cache: dict = {}
    return _signal(phi, trace, atol, cache)


def _signal(phi, trace, atol, cache) -> np.ndarray:
    if phi in cache:
        return cache[phi]
    H = trace.horizon
    if isinstance(phi, Atom):
        out = phi.value(trace.states) >= -atol
    elif isinstance(phi, Not):
        out = ~_signal(phi.child, trace, atol, cache)
    elif isinstance(phi, And):
        out = np.logical_and.reduce([_signal(c, trace, atol, cache) for c in phi.children])
    elif isinstance(phi, Or):
        out = np.logical_or.reduce([_signal(c, trace, atol, cache) for c in phi.children])
    elif isinstance(phi, Always):
        s = _signal(phi.child, trace, atol, cache)
        out = np.array([all(s[i] for i in phi.interval.window(t, H)) for t in range(H + 1)])
    elif isinstance(phi, Eventually):
        s = _signal(phi.child, trace, atol, cache)
        out = np.array([any(s[i] for i in phi.interval.window(t, H)) for t in range(H + 1)])
    elif isinstance(phi, Until):
        left = _signal(phi.left, trace, atol, cache)
        right = _signal(phi.right, trace, atol, cache)
        out = np.array([_until_at(left, right, phi.interval.window(t, H), t) for t in range(H + 1)])
    elif isinstance(phi, UnboundedUntil):
        left = _signal(phi.left, trace, atol, cache)
        right = _signal(phi.right, trace, atol, cache)
        out = np.zeros(H + 1, dtype=bool)
        out[H] = right[H]
        for t in range(H - 1, -1, -1):
            out[t] = right[t] or (left[t] and out[t + 1])
    else:
        raise TypeError(f"not a formula: {phi!r}")
    out = np.asarray(out, dtype=bool).reshape(H + 1)
    cache[phi] = out
    return out


def _until_at(left, right, window, t) -> bool:
    for tp in window:
        if right[tp] and all(left[t:tp]):
            return True
    return False


def satisfies(phi: Formula, trace: Trace, t: int = 0, atol: float = 0.0) -> bool:
    if not 0 <= t <= trace.horizon:
        raise STLError(f"time {t} outside [0, {trace.horizon}]")
    return bool(signal(phi, trace, atol)[t])


def characteristic(phi: Formula, trace: Trace, t: int = 0) -> int:
    return 1 if satisfies(phi, trace, t) else -1


# --------------------------------------------------------------------------
# Concrete syntax
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
      | (?P<op><=|>=|[-+*()\[\],!&|~])
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
    )""",
    re.VERBOSE,
)

_KEYWORDS = {"G", "F", "U", "true", "false", "inf"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise STLSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        val = m.group(kind)
        start = m.start(kind)
        if kind == "name" and val in _KEYWORDS:
            kind = val
        toks.append(_Tok(kind, val, start))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Linear:
    """Affine expression ``coeffs . x + const`` built while parsing."""

    def __init__(self, n, coeffs=None, const=0.0):
        self.coeffs = np.zeros(n) if coeffs is None else coeffs
        self.const = const

    @property
    def is_constant(self):
        return not np.any(self.coeffs)


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = {name: i for i, name in enumerate(names)}
        self.n = len(names)
        self.toks = _tokenize(text)
        self.i = 0

    # helpers
    def peek(self, k=0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self, kind=None) -> _Tok:
        tok = self.peek()
        if kind is not None and tok.kind != kind and tok.text != kind:
            want = "end of input" if kind == "eof" else repr(kind)
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise STLSyntaxError(f"expected {want}, got {got}", tok.pos)
        self.i += 1
        return tok

    def at(self, text) -> bool:
        tok = self.peek()
        return tok.text == text and tok.kind in ("op", text)

    # formula grammar: until < or < and < unary
    def parse(self) -> Formula:
        phi = self.until()
        self.take("eof")
        return phi

    def until(self):
        left = self.disj()
        if self.peek().kind == "U":
            self.take()
            iv = self.interval()
            right = self.until()
            return Until(iv, left, right)
        return left

    def disj(self):
        items = [self.conj()]
        while self.at("|"):
            self.take()
            items.append(self.conj())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conj(self):
        items = [self.unary()]
        while self.at("&"):
            self.take()
            items.append(self.unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def unary(self):
        tok = self.peek()
        if tok.text in ("!", "~") and tok.kind == "op":
            self.take()
            return Not(self.unary())
        if tok.kind in ("G", "F"):
            self.take()
            iv = self.interval()
            child = self.unary()
            return Always(iv, child) if tok.kind == "G" else Eventually(iv, child)
        if tok.kind == "true":
            self.take()
            return true_atom(self.n)
        if tok.kind == "false":
            self.take()
            return false_atom(self.n)
        if tok.text == "(":
            # Either a parenthesised formula or a comparison whose left side
            # starts with '('; try the comparison first.
            save = self.i
            try:
                return self.comparison()
            except STLSyntaxError:
                self.i = save
            self.take("(")
            phi = self.until()
            self.take(")")
            return phi
        return self.comparison()

    def interval(self) -> Interval:
        self.take("[")
        lo = self.integer()
        self.take(",")
        hi = self.integer()
        self.take("]")
        if hi < lo:
            raise STLSyntaxError(f"empty interval [{lo},{hi}]", self.peek(-1).pos)
        return Interval(lo, hi)

    def integer(self) -> int:
        tok = self.take("num")
        try:
            return int(tok.text)
        except ValueError:
            raise STLSyntaxError(f"interval bounds are integer steps, got {tok.text}", tok.pos) from None

    def comparison(self) -> Atom:
        lhs = self.expr()
        tok = self.peek()
        if tok.text not in (">=", "<="):
            raise STLSyntaxError("expected '>=' or '<='", tok.pos)
        self.take()
        rhs = self.expr()
        if tok.text == "<=":
            lhs, rhs = rhs, lhs
        # lhs >= rhs  <=>  (lhs.coeffs - rhs.coeffs) . x >= rhs.const - lhs.const
        coeffs = lhs.coeffs - rhs.coeffs
        return Atom(tuple(coeffs + 0.0), rhs.const - lhs.const + 0.0)

    def expr(self) -> _Linear:
        acc = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.take().text
            rhs = self.term()
            sgn = 1.0 if op == "+" else -1.0
            acc = _Linear(self.n, acc.coeffs + sgn * rhs.coeffs, acc.const + sgn * rhs.const)
        return acc

    def term(self) -> _Linear:
        acc = self.factor()
        while self.at("*"):
            tok = self.take()
            rhs = self.factor()
            if acc.is_constant:
                acc = _Linear(self.n, acc.const * rhs.coeffs, acc.const * rhs.const)
            elif rhs.is_constant:
                acc = _Linear(self.n, rhs.const * acc.coeffs, rhs.const * acc.const)
            else:
                raise NonlinearExpression(f"product of two state expressions at position {tok.pos}")
        return acc

    def factor(self) -> _Linear:
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("-", "+"):
            self.take()
            inner = self.factor()
            if tok.text == "+":
                return inner
            return _Linear(self.n, -inner.coeffs, -inner.const)
        if tok.kind == "num":
            self.take()
            return _Linear(self.n, const=float(tok.text))
        if tok.kind == "name":
            self.take()
            if tok.text not in self.names:
                raise UnknownIdentifier(f"unknown identifier {tok.text!r} at position {tok.pos}")
            coeffs = np.zeros(self.n)
            coeffs[self.names[tok.text]] = 1.0
            return _Linear(self.n, coeffs)
        if tok.text == "(":
            self.take()
            inner = self.expr()
            self.take(")")
            return inner
        got = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise STLSyntaxError(f"unexpected {got}", tok.pos)


def parse_formula(text: str, state_names: Sequence[str]) -> Formula:
    """Parse formula text over the named state components.

    Grammar (loosest binding first)::

        formula := disj ['U' interval formula]
        disj    := conj {'|' conj}
        conj    := unary {'&' unary}
        unary   := ('!' | '~') unary | ('G' | 'F') interval unary
                 | 'true' | 'false' | '(' formula ')' | expr ('>=' | '<=') expr
        expr    := linear arithmetic over state names and numbers
        interval:= '[' int ',' int ']'      (steps)
    """
    bad = [n for n in state_names if n in _KEYWORDS or not re.fullmatch(r"[A-Za-z_]\w*", n)]
    if bad:
        raise STLError(f"invalid state names: {bad}")
    return _Parser(text, state_names).parse()


def _fmt_num(x: float) -> str:
    return repr(float(x))


def format_formula(phi: Formula, state_names: Sequence[str]) -> str:
    """Inverse of :func:`parse_formula` (every composite operand is parenthesised)."""
    if isinstance(phi, Atom):
        if len(phi.coefficients) != len(state_names):
            raise DimensionMismatch("atom dimension differs from the number of state names")
        terms = [f"{_fmt_num(c)}*{name}" for c, name in zip(phi.coefficients, state_names) if c != 0.0]
        lhs = " + ".join(terms) if terms else "0"
        return f"{lhs} >= {_fmt_num(phi.constant)}"
    f = lambda p: f"({format_formula(p, state_names)})"  # noqa: E731
    if isinstance(phi, Not):
        return f"!{f(phi.child)}"
    if isinstance(phi, And):
        return " & ".join(f(c) for c in phi.children)
    if isinstance(phi, Or):
        return " | ".join(f(c) for c in phi.children)
    if isinstance(phi, Always):
        return f"G{phi.interval} {f(phi.child)}"
    if isinstance(phi, Eventually):
        return f"F{phi.interval} {f(phi.child)}"
    if isinstance(phi, Until):
        return f"{f(phi.left)} U{phi.interval} {f(phi.right)}"
    raise STLError(f"cannot print {type(phi).__name__}")

