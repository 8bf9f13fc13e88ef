"""HiGHS backend (in-memory or through an exported LP file)."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .lpfile import export_lp_file
from .model import Model, ModelError, Sense, Solution, Status, VarKind

try:
    import highspy
except ImportError:  # pragma: no cover - exercised only without the wheel
    highspy = None

MIP_FEAS_TOL = 1e-9


def available() -> bool:
    return highspy is not None


def _configured(time_limit: float | None) -> "highspy.Highs":
    if highspy is None:
        raise ModelError("highspy is not installed")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 1e-7)
    h.setOptionValue("mip_feasibility_tolerance", MIP_FEAS_TOL)
    h.setOptionValue("primal_feasibility_tolerance", MIP_FEAS_TOL)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    return h


def _pass_model(h, model: Model):
    A, lo, hi = model.dense_rows()
    lb, ub = model.bounds()
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = model.num_constrs
    lp.col_cost_ = model.objective_vector()
    lp.col_lower_ = lb
    lp.col_upper_ = ub
    lp.row_lower_ = np.where(np.isfinite(lo), lo, -highspy.kHighsInf)
    lp.row_upper_ = np.where(np.isfinite(hi), hi, highspy.kHighsInf)
    lp.offset_ = model.objective.const
    lp.sense_ = highspy.ObjSense.kMaximize if model.sense is Sense.MAXIMIZE else highspy.ObjSense.kMinimize
    starts, index, value = [0], [], []
    for j in range(model.num_vars):
        nz = np.flatnonzero(A[:, j])
        index.extend(nz.tolist())
        value.extend(A[nz, j].tolist())
        starts.append(len(index))
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = starts
    lp.a_matrix_.index_ = index
    lp.a_matrix_.value_ = value
    lp.integrality_ = [highspy.HighsVarType.kContinuous if v.kind is VarKind.CONTINUOUS
                       else highspy.HighsVarType.kInteger for v in model.variables]
    h.passModel(lp)


def _collect(h, n: int, sense: Sense, integer_mask) -> Solution:
    st = h.getModelStatus()
    MS = highspy.HighsModelStatus
    info = h.getInfo()
    nodes = int(getattr(info, "mip_node_count", 0) or 0)
    if st == MS.kOptimal:
        x = np.array(h.getSolution().col_value, dtype=float)[:n]
        x = np.where(integer_mask, np.round(x), x)
        return Solution(Status.OPTIMAL, x, float(info.objective_function_value), nodes=nodes,
                        bound=float(getattr(info, "mip_dual_bound", info.objective_function_value)))
    if st in (MS.kInfeasible,):
        return Solution(Status.INFEASIBLE, nodes=nodes, message="HiGHS: infeasible")
    if st in (MS.kUnbounded, MS.kUnboundedOrInfeasible):
        return Solution(Status.UNBOUNDED, nodes=nodes, message=f"HiGHS: {h.modelStatusToString(st)}")
    return Solution(Status.ITERATION_LIMIT, nodes=nodes, message=f"HiGHS: {h.modelStatusToString(st)}")


def solve_highs(model: Model, time_limit: float | None = None) -> Solution:
    h = _configured(time_limit)
    _pass_model(h, model)
    h.run()
    return _collect(h, model.num_vars, model.sense, model.integer_mask())


def solve_via_lp_file(model: Model, path: str | None = None, time_limit: float | None = None) -> Solution:
    """Write ``model`` as an LP file, have HiGHS read it back, and solve.

    Column order in the file follows variable ids, so values map back directly
    as long as every variable appears in the file (the writer guarantees it).
    """
    text = export_lp_file(model)
    own = path is None
    if own:
        fd, path = tempfile.mkstemp(suffix=".lp")
        os.close(fd)
    try:
        with open(path, "w") as fh:
            fh.write(text)
        h = _configured(time_limit)
        if h.readModel(path) != highspy.HighsStatus.kOk:
            raise ModelError(f"HiGHS could not read {path}")
        if h.getNumCol() != model.num_vars:
            raise ModelError("LP file column count differs from the model")
        h.run()
        return _collect(h, model.num_vars, model.sense, model.integer_mask())
    finally:
        if own:
            os.unlink(path)
