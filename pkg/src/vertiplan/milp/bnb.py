"""Deterministic LP-based branch-and-bound.

Node selection is best dual bound with FIFO tie-breaking; branching picks
the most fractional integer variable, lowest index on ties.  Child LPs are
solved when created so every open node carries an exact bound.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lpkernel import LpKernel
from .model import MilpModel, MilpSolution, WarmStartError, validate_warm_start


@dataclass
class BranchAndBound:
    gap_rel: float = 1e-6
    gap_abs: float = 1e-7
    int_tol: float = 1e-6
    feas_tol: float = 1e-9
    node_limit: Optional[int] = None
    dive: bool = True

    name = "bnb"

    def solve(self, model: MilpModel, time_limit_s: Optional[float] = None,
              warm_start=None) -> MilpSolution:
        t0 = time.perf_counter()
        deadline = math.inf if time_limit_s is None else t0 + time_limit_s
        ints = np.flatnonzero(model.is_integer())
        kern = LpKernel(model, self.feas_tol)
        lb0, ub0 = kern.lb0[ints].copy(), kern.ub0[ints].copy()
        names = dict(model._index)

        best_x, best_obj = None, math.inf
        if warm_start is not None:
            rep = validate_warm_start(model, warm_start)
            if not rep.ok:
                raise WarmStartError(rep)
            v, _ = model.assignment_vector(warm_start)
            v[ints] = np.round(v[ints])
            best_x, best_obj = v, model.objective_value(v)

        def load(changes):
            lo, hi = lb0.copy(), ub0.copy()
            for k, l, u in changes:
                lo[k], hi[k] = l, u
            kern.set_bounds(ints, lo, hi)
            return lo, hi

        def done_gap(bound):
            return best_obj - bound <= max(self.gap_abs, self.gap_rel * abs(best_obj))

        def fractional(x):
            v = x[ints]
            frac = np.abs(v - np.round(v))
            return v, frac

        def polish(x, lo, hi):
            fixed = np.clip(np.round(x[ints]), lo, hi)
            kern.set_bounds(ints, fixed, fixed)
            st, obj, px = kern.solve()
            kern.set_bounds(ints, lo, hi)
            if st != "optimal":
                return None, math.inf
            px[ints] = fixed
            return px, obj

        status, obj, x = kern.solve()
        nodes = 1
        if status == "infeasible":
            return MilpSolution("infeasible", None, math.inf, math.inf, nodes, time.perf_counter() - t0, names)
        if status == "unbounded":
            return MilpSolution("unbounded", None, -math.inf, -math.inf, nodes, time.perf_counter() - t0, names)

        seq = itertools.count()
        heap = [(obj, next(seq), (), x)]
        if self.dive and len(ints):
            dx, dobj, used = self._dive(kern, ints, lb0, ub0, x, deadline)
            nodes += used
            if dx is not None:
                px, pobj = polish(dx, lb0, ub0)
                if px is not None and pobj < best_obj:
                    best_x, best_obj = px, pobj
            kern.set_bounds(ints, lb0, ub0)

        timed_out = False
        while heap:
            bound, _, changes, x = heap[0]
            if best_x is not None and done_gap(bound):
                break
            if time.perf_counter() > deadline or (self.node_limit and nodes >= self.node_limit):
                timed_out = True
                break
            heapq.heappop(heap)
            v, frac = fractional(x)
            if frac.max(initial=0.0) <= self.int_tol:
                lo, hi = load(changes)
                px, pobj = polish(x, lo, hi)
                if px is not None and pobj < best_obj:
                    best_x, best_obj = px, pobj
                continue
            k = int(np.argmax(frac))
            val = v[k]
            lo, hi = load(changes)
            for l, u in ((lo[k], math.floor(val)), (math.ceil(val), hi[k])):
                if l > u:
                    continue
                kern.set_bounds(ints[k:k + 1], np.array([l]), np.array([u]))
                st, cobj, cx = kern.solve()
                nodes += 1
                kern.set_bounds(ints[k:k + 1], np.array([lo[k]]), np.array([hi[k]]))
                if st != "optimal":
                    continue
                if best_x is not None and cobj >= best_obj - max(self.gap_abs, self.gap_rel * abs(best_obj)):
                    continue
                heapq.heappush(heap, (cobj, next(seq), changes + ((k, l, u),), cx))

        secs = time.perf_counter() - t0
        bound = heap[0][0] if heap else best_obj
        bound = min(bound, best_obj)
        if best_x is None:
            status = "no_solution" if timed_out else "infeasible"
            return MilpSolution(status, None, math.inf, bound if timed_out else math.inf, nodes, secs, names)
        status = "feasible" if timed_out and not done_gap(bound) else "optimal"
        return MilpSolution(status, best_x, best_obj, bound, nodes, secs, names)

    def _dive(self, kern, ints, lb0, ub0, x, deadline):
        """Fix the most fractional variable to its nearest integer until integral."""
        lo, hi = lb0.copy(), ub0.copy()
        used = 0
        for _ in range(len(ints) + 1):
            v = x[ints]
            frac = np.abs(v - np.round(v))
            if frac.max(initial=0.0) <= self.int_tol:
                return x, None, used
            if time.perf_counter() > deadline:
                return None, None, used
            # fix everything already integral, then round the worst offender
            settled = frac <= self.int_tol
            lo[settled] = hi[settled] = np.round(v[settled])
            k = int(np.argmax(frac))
            r = float(np.clip(np.round(v[k]), lo[k], hi[k]))
            lo[k] = hi[k] = r
            kern.set_bounds(ints, lo, hi)
            st, _, x = kern.solve()
            used += 1
            if st != "optimal":
                return None, None, used
        return None, None, used
