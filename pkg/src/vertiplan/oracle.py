"""Reference optimum for tiny instances by spatial branch-and-bound on rho.

Each node is a box of service levels.  Inside a box the queue length is
bracketed from below by tangents at the box ends and from above by the
chord, which gives a relaxation (lower bound) and a restriction whose
solutions are exactly feasible.  Boxes are bisected down to ``grid_unit``;
surviving leaves are then polished by shrinking the box around their best
rho with the binaries fixed.

The MILP rows are assembled here from the instance directly, not through
the linearization module, so the oracle is an independent check on it.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from .instance import Instance
from .milp import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, HighsMip, MilpModel
from .model import (FULL, ModelVariant, PlanSolution, check_nonlinear_feasibility, queue_length,
                    route_feasibility)

MAX_CANDIDATES, MAX_OD, MAX_APRONS = 4, 8, 3

Box = Dict[str, Tuple[float, float]]


class OracleSizeError(ValueError):
    pass


@dataclass
class OracleResult:
    objective: float
    bound: float
    solution: Optional[PlanSolution]
    boxes: int
    seconds: float
    status: str  # optimal | time_limit | infeasible


def _tangent(at: float):
    d = (1.0 - at) ** 2
    return 1.0 / d, -at * at / d


def _chord(a: float, b: float):
    if b - a < 1e-15:
        return _tangent(a)
    d = (1.0 - a) * (1.0 - b)
    return 1.0 / d, -a * b / d


class _Builder:
    def __init__(self, inst: Instance, variant: ModelVariant):
        self.inst = inst
        self.variant = variant
        delta = route_feasibility(inst, variant)
        self.routes = [r for r in delta.feasible() if inst.demand.get((r[0], r[3]), 0.0) > 0]
        self.N = inst.candidate_ids
        n_open = min(inst.max_vertiports, len(self.N))
        tmax = max(inst.flight_time.values())
        self.fleet_cap = math.ceil(n_open * queue_length(inst.rho_max)
                                   + 2 * tmax * inst.total_demand / inst.pooling_size + 1)
        if variant.apron_capacity:
            self.fleet_cap = min(self.fleet_cap, n_open * max(inst.apron_options))

    def model(self, box: Box, relax: bool, fixed: Optional[PlanSolution] = None):
        inst, N, H = self.inst, self.N, self.inst.apron_options
        m = MilpModel("oracle")
        v = {}
        for i in N:
            v["x", i] = m.add_var(f"x{i}", BINARY)
            for h in H:
                v["z", i, h] = m.add_var(f"z{i}_{h}", BINARY)
            v["rho", i] = m.add_var(f"rho{i}", CONTINUOUS, box[i][0], box[i][1])
            v["theta", i] = m.add_var(f"theta{i}", CONTINUOUS, 0.0, math.inf)
        v["G"] = m.add_var("G", INTEGER, 0, self.fleet_cap, obj=inst.drone_daily_cost)
        for r in self.routes:
            o, i, j, d = r
            v["y", r] = m.add_var(f"y{r}", BINARY)
            v["a", r] = m.add_var(f"a{r}", CONTINUOUS, 0.0, 1.0,
                                  obj=inst.demand[o, d] * (inst.courier_cost[o, i] + inst.courier_cost[d, j]))
        arcs = {}
        for i in N:
            for j in N:
                arcs[i, j] = m.add_var(f"f{i}_{j}", CONTINUOUS, 0.0, math.inf, obj=inst.flight_cost[i, j])
        if fixed is not None:
            for i in N:
                m.fix(v["x", i], fixed.x.get(i, 0))
                for h in H:
                    m.fix(v["z", i, h], fixed.z.get((i, h), 0))
            for r in self.routes:
                m.fix(v["y", r], fixed.y.get(r, 0))

        # loaded and empty flights are aggregated per arc: the loaded part is
        # pinned by demand and any excess is empty repositioning
        load = {k: [] for k in arcs}
        for r in self.routes:
            load[r[1], r[2]].append(r)
        for (i, j), col in arcs.items():
            terms = [(col, 1.0)] + [(v["a", r], -inst.demand[r[0], r[3]] / inst.pooling_size) for r in load[i, j]]
            m.add_constr(terms, EQ if i == j else GE, 0.0)
        for i in N:
            m.add_constr([(arcs[j, i], 1.0) for j in N if j != i] + [(arcs[i, j], -1.0) for j in N if j != i], EQ, 0.0)

        m.add_constr([(v["x", i], 1.0) for i in N], LE, inst.max_vertiports)
        for i in N:
            m.add_constr([(v["z", i, h], 1.0) for h in H] + [(v["x", i], -1.0)], EQ, 0.0)
            m.add_constr({v["rho", i]: 1.0, v["x", i]: -inst.rho_max}, LE, 0.0)
        if self.variant.apron_capacity:
            m.add_constr([(v["z", i, h], float(h)) for i in N for h in H] + [(v["G"], -1.0)], GE, 0.0)
        per_od = {}
        for r in self.routes:
            o, i, j, d = r
            m.add_constr({v["y", r]: 1.0, v["x", i]: -1.0}, LE, 0.0)
            m.add_constr({v["y", r]: 1.0, v["x", j]: -1.0}, LE, 0.0)
            per_od.setdefault((o, d), []).append(v["y", r])
            m.add_constr({v["a", r]: 1.0, v["y", r]: -1.0}, LE, 0.0)
            m.add_constr({v["a", r]: 1.0, v["rho", i]: -1.0}, LE, 0.0)
            m.add_constr({v["a", r]: 1.0, v["rho", i]: -1.0, v["y", r]: -1.0}, GE, -1.0)
        for ys in per_od.values():
            m.add_constr([(y, 1.0) for y in ys], LE, 1.0)
        m.add_constr([(v["a", r], inst.demand[r[0], r[3]]) for r in self.routes], GE,
                     inst.market_share * inst.total_demand)

        # queue length bracket on the box
        for i in N:
            lo, hi = box[i]
            cuts = [_tangent(lo), _tangent(hi)] if relax else [_chord(lo, hi)]
            for s, q in cuts:
                m.add_constr({v["theta", i]: 1.0, v["rho", i]: -s}, GE, q)
        m.add_constr([(v["theta", i], 1.0) for i in N]
                     + [(col, inst.flight_time[k]) for k, col in arcs.items()] + [(v["G"], -1.0)], LE, 0.0)
        if self.variant.charging:
            for i in N:
                lo, hi = box[i]
                s, q = _chord(lo, hi) if relax else _tangent(lo)
                terms = [(arcs[i, j], inst.charge_ratio * inst.flight_time[i, j]) for j in N]
                terms.append((v["rho", i], -s))
                m.add_constr(terms, LE, q)
        if self.variant.overflow:
            g = inst.overflow_cap
            for i in N:
                # rho * sum_h g^(1/h) z <= sum_h g^(1/(h+1)) z with one z active
                coef = [(v["z", i, h], -(g ** (1.0 / (h + 1)) / g ** (1.0 / h)) if inst.overflow_form == "literal"
                         else -(g ** (1.0 / h))) for h in H]
                m.add_constr([(v["rho", i], 1.0)] + coef, LE, 0.0)
        return m, v, arcs

    def plan(self, sol, v, arcs) -> PlanSolution:
        inst, N, H = self.inst, self.N, self.inst.apron_options
        val = sol.values

        def b(k):
            return int(round(val[v[k]]))

        rho = {i: min(max(float(val[v["rho", i]]), 0.0), inst.rho_max) for i in N}
        alpha = {r: min(max(float(val[v["a", r]]), 0.0), 1.0) for r in self.routes}
        psi: Dict[Tuple[str, str], float] = {}
        for r, a in alpha.items():
            k = (r[1], r[2])
            psi[k] = psi.get(k, 0.0) + inst.demand[r[0], r[3]] / inst.pooling_size * a
        phi = {}
        for k, col in arcs.items():
            if k[0] != k[1]:
                extra = float(val[col]) - psi.get(k, 0.0)
                if extra > 0:
                    phi[k] = extra
        return PlanSolution(
            x={i: b(("x", i)) for i in N},
            z={(i, h): 1 for i in N for h in H if b(("z", i, h))},
            y={r: 1 for r in self.routes if b(("y", r))},
            fleet_size=b("G"), rho=rho,
            psi={k: p for k, p in psi.items() if p > 0}, phi=phi,
            alpha={r: a for r, a in alpha.items() if a > 0},
            objective=sol.objective,
        )


def solve_oracle(instance: Instance, grid_unit: float = 0.005, variant: ModelVariant = FULL,
                 time_limit_s: Optional[float] = None, rel_tol: float = 1e-9) -> OracleResult:
    """Best exactly-feasible plan and a certified lower bound."""
    if (len(instance.candidates) > MAX_CANDIDATES or len(instance.od_pairs) > MAX_OD
            or len(instance.apron_options) > MAX_APRONS):
        raise OracleSizeError(
            f"oracle accepts at most {MAX_CANDIDATES} candidates, {MAX_OD} O-D pairs and "
            f"{MAX_APRONS} apron options")
    if not 0 < grid_unit < 1:
        raise ValueError("grid_unit must lie in (0, 1)")
    t0 = time.perf_counter()
    deadline = math.inf if time_limit_s is None else t0 + time_limit_s
    inst = instance
    bld = _Builder(inst, variant)
    mip = HighsMip(gap_rel=1e-10)
    top = inst.rho_max

    if inst.total_demand == 0:
        return OracleResult(0.0, 0.0, PlanSolution.zero(inst), 0, time.perf_counter() - t0, "optimal")

    best_obj, best_plan = math.inf, None

    def consider(plan: Optional[PlanSolution]):
        nonlocal best_obj, best_plan
        if plan is None or plan.objective >= best_obj:
            return
        if check_nonlinear_feasibility(inst, plan, 1e-7, variant).ok:
            best_obj, best_plan = plan.objective, plan

    def run(box: Box, relax: bool, fixed=None):
        m, v, arcs = bld.model(box, relax, fixed)
        sol = mip.solve(m)
        return sol, (bld.plan(sol, v, arcs) if sol.has_solution else None)

    def tol():
        return rel_tol * max(1.0, abs(best_obj)) if math.isfinite(best_obj) else 0.0

    def polish(plan: PlanSolution, box: Box):
        # shrink the box around the best rho with binaries held fixed
        centre = dict(plan.rho)
        w = grid_unit
        while w > 1e-7:
            w /= 4.0
            nb = {i: ((max(box[i][0], centre[i] - w), min(box[i][1], centre[i] + w)) if plan.x.get(i) else (0.0, 0.0))
                  for i in inst.candidates}
            _, p = run(nb, relax=False, fixed=plan)
            if p is not None:
                consider(p)
                if p.objective <= plan.objective:
                    plan, centre = p, dict(p.rho)

    root: Box = {i: (0.0, top) for i in inst.candidates}
    seq = itertools.count()
    sol, rplan = run(root, relax=True)
    if sol.status == "infeasible":
        return OracleResult(math.inf, math.inf, None, 1, time.perf_counter() - t0, "infeasible")
    heap = [(sol.dual_bound, next(seq), root, rplan)]
    leaves = []
    boxes = 1
    status = "optimal"
    while heap:
        bound, _, box, rplan = heapq.heappop(heap)
        if bound >= best_obj - tol():
            continue
        if time.perf_counter() > deadline:
            heapq.heappush(heap, (bound, next(seq), box, rplan))
            status = "time_limit"
            break
        _, fplan = run(box, relax=False)
        consider(fplan)
        if bound >= best_obj - tol():
            continue
        opened = [i for i in inst.candidates if rplan.x.get(i)]
        wide = [i for i in opened if box[i][1] - box[i][0] > grid_unit + 1e-12]
        if not wide:
            if fplan is not None:
                polish(fplan, box)
            leaves.append((bound, box))
            continue
        i = max(wide, key=lambda k: (queue_length(box[k][1]) - queue_length(box[k][0]), -opened.index(k)))
        lo, hi = box[i]
        mid = 0.5 * (lo + hi)
        for part in ((lo, mid), (mid, hi)):
            child = dict(box)
            child[i] = part
            csol, cplan = run(child, relax=True)
            boxes += 1
            if csol.has_solution and csol.dual_bound < best_obj - tol():
                heapq.heappush(heap, (csol.dual_bound, next(seq), child, cplan))

    open_bounds = [b for b, *_ in heap] + [b for b, _ in leaves if b < best_obj - tol()]
    bound = min([best_obj] + open_bounds)
    secs = time.perf_counter() - t0
    if best_plan is None:
        return OracleResult(math.inf, bound, None, boxes, secs, status if status == "time_limit" else "infeasible")
    return OracleResult(best_obj, bound, best_plan, boxes, secs, status)
