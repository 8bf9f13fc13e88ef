"""Mixed-integer linear programming: models, simplex, branch-and-bound, LP files."""

from .branch_bound import solve_milp
from .lpfile import LPParseError, export_lp_file, import_lp_file
from .model import (FEAS_TOL, INT_TOL, OPT_TOL, Constraint, LinExpr, Model, ModelError, Sense,
                    Solution, Status, Var, VarKind)
from .simplex import lagrangian_bound, solve_lp

BACKENDS = ("native", "highs", "lp-export")


def solve(model: Model, backend: str = "native", *, node_limit: int | None = None,
          time_limit: float | None = None, lp_path: str | None = None) -> Solution:
    """Solve ``model`` with the named backend.

    ``native`` is the in-tree branch-and-bound; ``highs`` hands the model to
    HiGHS in memory; ``lp-export`` writes a CPLEX LP file (kept at ``lp_path``
    when given) and has HiGHS solve it from disk.
    """
    if backend == "native":
        kw = {} if node_limit is None else {"node_limit": node_limit}
        return solve_milp(model, **kw)
    from . import highs

    if backend == "highs":
        return highs.solve_highs(model, time_limit)
    if backend == "lp-export":
        return highs.solve_via_lp_file(model, lp_path, time_limit)
    raise ValueError(f"unknown backend {backend!r}; choose from {', '.join(BACKENDS)}")


__all__ = [
    "BACKENDS", "Constraint", "FEAS_TOL", "INT_TOL", "LPParseError", "LinExpr", "Model",
    "ModelError", "OPT_TOL", "Sense", "Solution", "Status", "Var", "VarKind", "export_lp_file",
    "import_lp_file", "lagrangian_bound", "solve", "solve_lp", "solve_milp",
]
