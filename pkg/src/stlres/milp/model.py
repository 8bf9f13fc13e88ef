"""Mixed-integer linear model container with a small expression algebra."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from numbers import Real

import numpy as np

FEAS_TOL = 1e-6
INT_TOL = 1e-6
OPT_TOL = 1e-7


class VarKind(enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Sense(enum.Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"


class ModelError(ValueError):
    pass


class LinExpr:
    """Sparse affine expression ``sum(coef[i] * x[i]) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms: dict[int, float] = dict(terms or {})
        self.const = float(const)

    @staticmethod
    def of(x) -> "LinExpr":
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, Var):
            return LinExpr({x.index: 1.0})
        if isinstance(x, Real):
            return LinExpr(const=float(x))
        raise TypeError(f"cannot use {type(x).__name__} in a linear expression")

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def _combine(self, other, sign):
        other = LinExpr.of(other)
        out = self.copy()
        for k, v in other.terms.items():
            out.terms[k] = out.terms.get(k, 0.0) + sign * v
        out.const += sign * other.const
        return out

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return LinExpr.of(other)._combine(self, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        if not isinstance(k, Real):
            raise TypeError("only scalar multiplication keeps an expression linear")
        return LinExpr({i: k * v for i, v in self.terms.items()}, k * self.const)

    __rmul__ = __mul__

    def __le__(self, other):
        return Constraint.build(self, "<=", other)

    def __ge__(self, other):
        return Constraint.build(self, ">=", other)

    def __eq__(self, other):  # noqa: D105 - builds a constraint, like most modelling layers
        return Constraint.build(self, "==", other)

    __hash__ = None

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[i] for i, v in self.terms.items())

    def __repr__(self):
        body = " + ".join(f"{v:g}*x{i}" for i, v in sorted(self.terms.items()))
        return f"LinExpr({body or '0'} + {self.const:g})"


class Var:
    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str):
        self.index = index
        self.name = name

    def _e(self):
        return LinExpr({self.index: 1.0})

    def __add__(self, o):
        return self._e() + o

    __radd__ = __add__

    def __sub__(self, o):
        return self._e() - o

    def __rsub__(self, o):
        return LinExpr.of(o) - self._e()

    def __neg__(self):
        return self._e() * -1.0

    def __mul__(self, k):
        return self._e() * k

    __rmul__ = __mul__

    def __le__(self, o):
        return self._e() <= o

    def __ge__(self, o):
        return self._e() >= o

    def __eq__(self, o):
        return self._e() == o

    def __hash__(self):
        return hash(("var", self.index))

    def __repr__(self):
        return f"Var({self.name})"


@dataclass
class Constraint:
    terms: dict
    sense: str  # "<=", ">=", "=="
    rhs: float
    name: str = ""

    @classmethod
    def build(cls, lhs, sense, rhs) -> "Constraint":
        e = LinExpr.of(lhs) - LinExpr.of(rhs)
        terms = {k: v for k, v in e.terms.items() if v != 0.0}
        return cls(terms, sense, -e.const)

    def bounds(self) -> tuple[float, float]:
        if self.sense == "<=":
            return -math.inf, self.rhs
        if self.sense == ">=":
            return self.rhs, math.inf
        return self.rhs, self.rhs


@dataclass
class VarInfo:
    name: str
    kind: VarKind
    lb: float
    ub: float


@dataclass
class Model:
    name: str = "model"
    variables: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    sense: Sense = Sense.MINIMIZE

    def add_var(self, name: str | None = None, kind: VarKind = VarKind.CONTINUOUS,
                lb: float = 0.0, ub: float = math.inf) -> Var:
        if kind is VarKind.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ModelError(f"variable {name}: lower bound {lb} exceeds upper bound {ub}")
        idx = len(self.variables)
        name = name or f"x{idx}"
        self.variables.append(VarInfo(name, kind, float(lb), float(ub)))
        return Var(idx, name)

    def var(self, index: int) -> Var:
        return Var(index, self.variables[index].name)

    def add_constr(self, c: Constraint, name: str | None = None) -> Constraint:
        if not isinstance(c, Constraint):
            raise TypeError("add_constr expects a Constraint (build one with <=, >= or ==)")
        for k in c.terms:
            if not 0 <= k < len(self.variables):
                raise ModelError(f"constraint references undeclared variable {k}")
        c.name = name or c.name or f"c{len(self.constraints)}"
        self.constraints.append(c)
        return c

    def set_objective(self, expr, sense: Sense = Sense.MINIMIZE):
        expr = LinExpr.of(expr)
        for k in expr.terms:
            if not 0 <= k < len(self.variables):
                raise ModelError(f"objective references undeclared variable {k}")
        self.objective = expr
        self.sense = sense

    # -- views -------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constrs(self) -> int:
        return len(self.constraints)

    def integer_mask(self) -> np.ndarray:
        return np.array([v.kind is not VarKind.CONTINUOUS for v in self.variables], dtype=bool)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([v.lb for v in self.variables], dtype=float),
                np.array([v.ub for v in self.variables], dtype=float))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for k, v in self.objective.terms.items():
            c[k] = v
        return c

    def dense_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constraint matrix with row bounds ``lo <= A x <= hi``."""
        A = np.zeros((self.num_constrs, self.num_vars))
        lo = np.empty(self.num_constrs)
        hi = np.empty(self.num_constrs)
        for i, c in enumerate(self.constraints):
            for k, v in c.terms.items():
                A[i, k] += v
            lo[i], hi[i] = c.bounds()
        return A, lo, hi

    def relaxed(self) -> "Model":
        """Copy with every integer/binary variable made continuous."""
        m = Model(self.name + "_relaxed",
                  [VarInfo(v.name, VarKind.CONTINUOUS, v.lb, v.ub) for v in self.variables],
                  list(self.constraints), self.objective.copy(), self.sense)
        return m

    def violations(self, x, tol: float = FEAS_TOL, int_tol: float = INT_TOL) -> list[str]:
        x = np.asarray(x, dtype=float)
        out = []
        for i, v in enumerate(self.variables):
            if x[i] < v.lb - tol or x[i] > v.ub + tol:
                out.append(f"bound {v.name}={x[i]:g} not in [{v.lb:g}, {v.ub:g}]")
            if v.kind is not VarKind.CONTINUOUS and abs(x[i] - round(x[i])) > int_tol:
                out.append(f"integrality {v.name}={x[i]:g}")
        for c in self.constraints:
            act = sum(v * x[k] for k, v in c.terms.items())
            lo, hi = c.bounds()
            if act < lo - tol or act > hi + tol:
                out.append(f"row {c.name}: {act:g} {c.sense} {c.rhs:g}")
        return out


@dataclass
class Solution:
    status: Status
    values: np.ndarray | None = None
    objective: float | None = None
    nodes: int = 0
    iterations: int = 0
    bound: float | None = None
    duals: np.ndarray | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, item):
        if self.values is None:
            raise ModelError(f"no values: solve status {self.status.value}")
        if isinstance(item, Var):
            return float(self.values[item.index])
        return LinExpr.of(item).value(self.values)
