"""Adapter that hands the whole model to the HiGHS MIP engine."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import highspy
import numpy as np

from .lpkernel import LpKernel, NumericalFailure, _highs, to_highs_lp
from .model import MilpModel, MilpSolution, WarmStartError, validate_warm_start


@dataclass
class HighsMip:
    gap_rel: float = 1e-6
    int_tol: float = 1e-6
    feas_tol: float = 1e-9

    name = "highs"

    def solve(self, model: MilpModel, time_limit_s: Optional[float] = None,
              warm_start=None) -> MilpSolution:
        t0 = time.perf_counter()
        h = _highs(self.feas_tol, presolve="on")
        h.setOptionValue("mip_rel_gap", self.gap_rel)
        h.setOptionValue("mip_feasibility_tolerance", self.int_tol)
        if time_limit_s is not None:
            h.setOptionValue("time_limit", float(time_limit_s))
        h.passModel(to_highs_lp(model, with_integrality=True))
        ints = model.is_integer()
        if warm_start is not None:
            rep = validate_warm_start(model, warm_start)
            if not rep.ok:
                raise WarmStartError(rep)
            v, _ = model.assignment_vector(warm_start)
            v[ints] = np.round(v[ints])
            sol = highspy.HighsSolution()
            sol.col_value = list(v)
            sol.value_valid = True
            h.setSolution(sol)
        h.run()
        st = h.getModelStatus()
        info = h.getInfo()
        S = highspy.HighsModelStatus
        names = dict(model._index)
        secs = time.perf_counter() - t0
        nodes = int(max(info.mip_node_count, 0))
        if st == S.kInfeasible:
            return MilpSolution("infeasible", None, math.inf, math.inf, nodes, secs, names)
        if st in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return MilpSolution("unbounded", None, -math.inf, -math.inf, nodes, secs, names)
        has = info.primal_solution_status == 2
        if st == S.kOptimal:
            status = "optimal"
        elif st in (S.kTimeLimit, S.kInterrupt, S.kSolutionLimit, S.kIterationLimit):
            status = "feasible" if has else "no_solution"
        else:
            raise NumericalFailure(f"HiGHS MIP failed with status {h.modelStatusToString(st)}")
        bound = float(info.mip_dual_bound) if model.num_vars else 0.0
        if not has:
            return MilpSolution(status, None, math.inf, bound, nodes, secs, names)
        x = np.array(h.getSolution().col_value)
        x, obj = self._polish(model, x, ints)
        return MilpSolution(status, x, obj, min(bound, obj), nodes, secs, names)

    def _polish(self, model: MilpModel, x: np.ndarray, ints: np.ndarray):
        """Fix the rounded integers and re-solve the LP at tight tolerance."""
        idx = np.flatnonzero(ints)
        fixed = np.round(x[idx])
        if len(idx) < model.num_vars:
            kern = LpKernel(model, self.feas_tol)
            kern.set_bounds(idx, fixed, fixed)
            st, _, px = kern.solve()
            if st == "optimal":
                x = px
        x[idx] = fixed
        return x, model.objective_value(x)
