"""Large-instance heuristic: a cheap location surrogate proposes promising
vertiports and the conservative model is solved on that growing subset."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .adaptive import BoundsTrace, SolverConfig, TraceRecord, _Clock, _solve
from .instance import Instance
from .linearize import Discretization, build_conservative, initial_discretization
from .milp import BINARY, EQ, GE, LE, MilpModel, get_backend
from .model import FULL, ModelVariant, PlanSolution, feasible_routes

SURROGATES = ("coverage", "pmedian")


@dataclass
class Surrogate:
    milp: MilpModel
    x: Dict[str, int]
    sign: float  # +1 for minimization, -1 when a maximization was negated

    def selected(self, values) -> List[str]:
        return [i for i, j in self.x.items() if round(values[j]) == 1]


def _hamming_row(m: MilpModel, x: Dict[str, int], prior: Iterable[str], n_switch: int) -> None:
    prior = set(prior)
    # sum_i x_i (1 - w_i) + (1 - x_i) w_i >= N_S, constants moved to the right
    terms = [(j, -1.0 if i in prior else 1.0) for i, j in x.items()]
    m.add_constr(terms, GE, n_switch - len([i for i in x if i in prior]), "diversify")
    # the Hamming row alone can be met by dropping members; require one newcomer
    m.add_constr([(j, 1.0) for i, j in x.items() if i not in prior], GE, 1.0, "newcomer")


def build_coverage_surrogate(instance: Instance, prior_set: Optional[Iterable[str]] = None,
                             n_switch: Optional[int] = None, variant: ModelVariant = FULL) -> Surrogate:
    """Maximize demand on range-feasible routes through at most P vertiports
    (negated for the minimizing solver)."""
    m = MilpModel("coverage")
    x = {i: m.add_var(f"x[{i}]", BINARY) for i in instance.candidates}
    routes = feasible_routes(instance, variant)
    y = {r: m.add_var(f"y[{','.join(r)}]", BINARY, obj=-instance.demand[r[0], r[3]]) for r in routes}
    m.add_constr({j: 1.0 for j in x.values()}, LE, instance.max_vertiports, "max_vertiports")
    by_od: Dict[Tuple[str, str], List[int]] = {}
    for r, j in y.items():
        m.add_constr({j: 1.0, x[r[1]]: -1.0}, LE, 0.0)
        if r[2] != r[1]:
            m.add_constr({j: 1.0, x[r[2]]: -1.0}, LE, 0.0)
        by_od.setdefault((r[0], r[3]), []).append(j)
    for od, js in by_od.items():
        m.add_constr({j: 1.0 for j in js}, LE, 1.0, f"single[{od[0]},{od[1]}]")
    if prior_set is not None:
        if n_switch is None or n_switch < 1:
            raise ValueError("n_switch must be >= 1 when a prior set is given")
        _hamming_row(m, x, prior_set, n_switch)
    return Surrogate(m, x, -1.0)


def build_pmedian_surrogate(instance: Instance, prior_set: Optional[Iterable[str]] = None,
                            n_switch: Optional[int] = None) -> Surrogate:
    """P-median over demand-weighted courier times to and from vertiports."""
    m = MilpModel("pmedian")
    N = instance.candidate_ids
    x = {i: m.add_var(f"x[{i}]", BINARY) for i in N}
    out_w: Dict[str, float] = {}
    in_w: Dict[str, float] = {}
    for (o, d), v in instance.demand.items():
        if v > 0:
            out_w[o] = out_w.get(o, 0.0) + v
            in_w[d] = in_w.get(d, 0.0) + v
    for side, weights in (("o", out_w), ("d", in_w)):
        for r, w in weights.items():
            ys = [m.add_var(f"y{side}[{r},{i}]", BINARY, obj=w * instance.courier_time[r, i]) for i in N]
            m.add_constr({j: 1.0 for j in ys}, EQ, 1.0, f"assign_{side}[{r}]")
            for i, j in zip(N, ys):
                m.add_constr({j: 1.0, x[i]: -1.0}, LE, 0.0)
    m.add_constr({j: 1.0 for j in x.values()}, LE, instance.max_vertiports, "max_vertiports")
    if prior_set is not None:
        if n_switch is None or n_switch < 1:
            raise ValueError("n_switch must be >= 1 when a prior set is given")
        _hamming_row(m, x, prior_set, n_switch)
    return Surrogate(m, x, 1.0)


@dataclass
class PromisingSet:
    members: List[str] = field(default_factory=list)
    additions: List[List[str]] = field(default_factory=list)

    def add(self, ids: Iterable[str]) -> List[str]:
        new = [i for i in ids if i not in self.members]
        self.members.extend(new)
        self.additions.append(new)
        return new


@dataclass
class MatheuristicResult:
    solution: Optional[PlanSolution]
    trace: BoundsTrace
    promising: PromisingSet
    ub_history: List[float]

    def __iter__(self):
        return iter((self.solution, self.trace))

    @property
    def status(self) -> str:
        return self.trace.status


def solve_matheuristic(instance: Instance, config: SolverConfig = SolverConfig(solve_limit_s=500.0),
                       n_switch: int = 2, surrogate: str = "coverage",
                       initial_set: Optional[Iterable[str]] = None) -> MatheuristicResult:
    """Alternate surrogate location proposals and restricted conservative solves.

    Stops when the relative UB improvement falls to ``config.eps`` or on the
    time limit. Once the surrogate runs out of new vertiports the restricted
    model keeps refining its grid until the same improvement test fires.
    """
    if surrogate not in SURROGATES:
        raise ValueError(f"surrogate must be one of {SURROGATES}")
    clock = _Clock(config)
    backend = get_backend(config.backend)
    trace = BoundsTrace()
    promising = PromisingSet()
    grids: Dict[str, Tuple[float, ...]] = {}
    template = initial_discretization(instance, config.min_gap)
    best: Optional[PlanSolution] = None
    prev: Optional[PlanSolution] = None
    ub = math.inf
    history: List[float] = []
    saturated = False
    r = 0

    if initial_set is not None:
        for i in promising.add(initial_set):
            if i not in instance.candidates:
                raise ValueError(f"unknown candidate {i!r}")
            grids[i] = template.points[i]
        saturated = len(promising.members) == len(instance.candidates)

    while True:
        if not saturated and not (r == 0 and initial_set is not None):
            prior = list(promising.members) if promising.members else None
            if surrogate == "coverage":
                sg = build_coverage_surrogate(instance, prior, n_switch if prior else None, config.variant)
            else:
                sg = build_pmedian_surrogate(instance, prior, n_switch if prior else None)
            ssol = backend.solve(sg.milp, clock.budget())
            if ssol.has_solution:
                for i in promising.add(sg.selected(ssol.values)):
                    grids[i] = template.points[i]
            else:
                saturated = True

        r += 1
        trace.iterations = r
        sub = instance.restricted(promising.members)
        disc = Discretization({i: grids[i] for i in promising.members}, config.min_gap)
        mc = build_conservative(sub, disc, variant=config.variant)
        sol = _solve(mc, config, clock.budget(), [("conservative", prev)], trace, r, "MC")
        last_ub = ub
        if sol.has_solution:
            plan = mc.to_plan(sol)
            prev = plan
            if plan.objective < ub:
                ub, best = plan.objective, plan
            grids.update(disc.refine(plan.rho).points)
        history.append(ub)
        trace.add(TraceRecord(r, "MC", sol.objective, ub, -math.inf, math.inf, clock.elapsed,
                              sum(len(p) for p in grids.values())))
        if clock.remaining() <= 0:
            trace.status = "time_limit"
            break
        if math.isfinite(ub) and math.isfinite(last_ub) and (last_ub - ub) / ub <= config.eps:
            trace.status = "converged"
            break
        if saturated and not sol.has_solution:
            trace.status = "infeasible"
            break
        if config.max_iterations is not None and r >= config.max_iterations:
            trace.status = "iteration_limit"
            break

    if best is not None:
        full_x = {i: best.x.get(i, 0) for i in instance.candidates}
        full_rho = {i: best.rho.get(i, 0.0) for i in instance.candidates}
        best = PlanSolution(**{**best.__dict__, "x": full_x, "rho": full_rho, "status": trace.status,
                               "meta": {**best.meta, "algorithm": "matheuristic", "surrogate": surrogate,
                                        "promising": list(promising.members), "iterations": r}})
    return MatheuristicResult(best, trace, promising, history)


def coverage_value(instance: Instance, selected: Iterable[str], variant: ModelVariant = FULL) -> float:
    """Demand coverable by a vertiport subset; used to cross-check the surrogate."""
    s: Set[str] = set(selected)
    covered = {(r[0], r[3]) for r in feasible_routes(instance, variant) if r[1] in s and r[2] in s}
    return sum(instance.demand[od] for od in covered)


def pmedian_value(instance: Instance, selected: Iterable[str]) -> float:
    s = list(selected)
    if not s:
        return math.inf
    total = 0.0
    for (o, d), v in instance.demand.items():
        if v > 0:
            total += v * min(instance.courier_time[o, i] for i in s)
            total += v * min(instance.courier_time[d, j] for j in s)
    return total

