"""LP relaxation kernel: one persistent HiGHS simplex instance per solve.

Bounds change between branch-and-bound nodes; HiGHS keeps the previous
basis, so each node re-solve is a dual simplex hot start.
"""
from __future__ import annotations

import highspy
import numpy as np

from .model import MilpModel

PIVOT_CAP = 2_000_000


class NumericalFailure(RuntimeError):
    pass


def _highs(feas_tol: float, presolve: str = "off") -> highspy.Highs:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("log_to_console", False)
    h.setOptionValue("primal_feasibility_tolerance", feas_tol)
    h.setOptionValue("dual_feasibility_tolerance", feas_tol)
    h.setOptionValue("presolve", presolve)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("threads", 1)
    return h


def to_highs_lp(model: MilpModel, with_integrality: bool = False) -> highspy.HighsLp:
    A = model.matrix().tocsc()
    lo, hi = model.row_bounds()
    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = model.num_rows
    lp.col_cost_ = np.array(model.obj, dtype=float)
    lp.offset_ = model.obj_const
    lp.col_lower_ = np.where(np.isinf(model.lb), -inf, model.lb).astype(float)
    lp.col_upper_ = np.where(np.isinf(model.ub), inf, model.ub).astype(float)
    lp.row_lower_ = np.where(np.isinf(lo), -inf, lo)
    lp.row_upper_ = np.where(np.isinf(hi), inf, hi)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    if with_integrality:
        lp.integrality_ = [highspy.HighsVarType.kInteger if k != "C" else highspy.HighsVarType.kContinuous
                           for k in model.kinds]
    return lp


_RETRY = (highspy.HighsModelStatus.kUnknown, highspy.HighsModelStatus.kSolveError,
          highspy.HighsModelStatus.kNotset)


class LpKernel:
    def __init__(self, model: MilpModel, feas_tol: float = 1e-9):
        self.model = model
        self.feas_tol = feas_tol
        self.h = _highs(feas_tol)
        self.h.setOptionValue("simplex_iteration_limit", PIVOT_CAP)
        self.h.passModel(to_highs_lp(model))
        self.lb0 = np.array(model.lb, dtype=float)
        self.ub0 = np.array(model.ub, dtype=float)
        self.pivots = 0

    def set_bounds(self, idx: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
        if len(idx):
            self.h.changeColsBounds(len(idx), idx.astype(np.int32), lo.astype(float), hi.astype(float))

    def solve(self):
        """Return (status, objective, x) with status optimal/infeasible/unbounded."""
        self.h.run()
        st = self.h.getModelStatus()
        if st in _RETRY:
            # a stale basis occasionally stalls the hot start; retry cold
            self.h.clearSolver()
            self.h.run()
            st = self.h.getModelStatus()
        if st in _RETRY:
            return self._fresh_solve()
        info = self.h.getInfo()
        self.pivots += max(info.simplex_iteration_count, 0)
        S = highspy.HighsModelStatus
        if st == S.kOptimal:
            x = np.array(self.h.getSolution().col_value)
            return "optimal", info.objective_function_value, x
        if st == S.kInfeasible:
            return "infeasible", np.inf, None
        if st in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return self._classify_unbounded()
        if st == S.kIterationLimit:
            raise NumericalFailure("LP kernel exceeded its pivot cap")
        raise NumericalFailure(f"LP kernel failed with status {self.h.modelStatusToString(st)}")

    def _current_lp(self) -> highspy.HighsLp:
        lp = to_highs_lp(self.model)
        cur = self.h.getLp()
        lp.col_lower_ = np.array(cur.col_lower_)
        lp.col_upper_ = np.array(cur.col_upper_)
        return lp

    def _fresh_solve(self):
        # badly scaled rows can leave plain simplex undecided; presolve settles them
        h = _highs(self.feas_tol, presolve="on")
        h.setOptionValue("simplex_iteration_limit", PIVOT_CAP)
        h.passModel(self._current_lp())
        h.run()
        st = h.getModelStatus()
        S = highspy.HighsModelStatus
        if st == S.kOptimal:
            return "optimal", h.getInfo().objective_function_value, np.array(h.getSolution().col_value)
        if st == S.kInfeasible:
            return "infeasible", np.inf, None
        if st in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return self._classify_unbounded()
        raise NumericalFailure(f"LP kernel failed with status {h.modelStatusToString(st)}")

    def _classify_unbounded(self):
        # re-solve the feasibility problem to tell the two cases apart
        h = _highs(self.feas_tol, presolve="on")
        lp = self._current_lp()
        lp.col_cost_ = np.zeros(self.model.num_vars)
        h.passModel(lp)
        h.run()
        if h.getModelStatus() == highspy.HighsModelStatus.kOptimal:
            return "unbounded", -np.inf, None
        return "infeasible", np.inf, None
