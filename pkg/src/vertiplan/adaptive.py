"""Alternating conservative/relaxed solve with adaptive breakpoint refinement."""
from __future__ import annotations

import csv
import io
import math
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .instance import Instance
from .linearize import (DEFAULT_MIN_GAP, Discretization, LinearizedModel, build_conservative,
                        build_relaxed, initial_discretization, uniform_grid)
from .milp import MilpSolution, get_backend, validate_warm_start
from .model import FULL, ModelVariant, PlanSolution

TRACE_HEADER = ("iteration", "model", "objective", "ub", "lb", "gap", "seconds")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 0.01
    time_limit_s: float = 7200.0
    solve_limit_s: float = 3600.0
    min_gap: float = DEFAULT_MIN_GAP
    neighborhood_unit: float = 0.05
    oracle_unit: float = 0.005
    backend: str = "highs"
    max_iterations: Optional[int] = None
    variant: ModelVariant = FULL

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.time_limit_s <= 0 or self.solve_limit_s <= 0:
            raise ConfigError("time limits must be positive")
        if not 0 <= self.min_gap < 1 or not 0 < self.neighborhood_unit < 1 or not 0 < self.oracle_unit < 1:
            raise ConfigError("grid units must lie in (0, 1)")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")


def relative_gap(ub: float, lb: float) -> float:
    if not math.isfinite(ub):
        return math.inf
    if lb <= 1e-6:
        return max(ub - lb, 0.0)
    return max(ub - lb, 0.0) / lb


@dataclass
class TraceRecord:
    iteration: int
    model: str
    objective: float
    ub: float
    lb: float
    gap: float
    seconds: float
    grid_points: int = 0


@dataclass
class WarmStartEvent:
    """One validated warm-start candidate.

    ``source`` is ``conservative`` for the previous conservative optimum,
    which the nested-grid property guarantees to be feasible, and
    ``neighborhood`` for the best incumbent, tried first when it fits.
    """

    iteration: int
    target: str
    source: str
    violations: int
    installed: bool


@dataclass
class BoundsTrace:
    records: List[TraceRecord] = field(default_factory=list)
    warm_starts: List[WarmStartEvent] = field(default_factory=list)
    status: str = "running"
    iterations: int = 0

    _lock = threading.Lock()

    def add(self, rec: TraceRecord) -> None:
        with self._lock:
            self.records.append(rec)

    @property
    def ub(self) -> float:
        return self.records[-1].ub if self.records else math.inf

    @property
    def lb(self) -> float:
        return self.records[-1].lb if self.records else -math.inf

    @property
    def gap(self) -> float:
        return relative_gap(self.ub, self.lb)

    def of_model(self, model: str) -> List[TraceRecord]:
        return [r for r in self.records if r.model == model]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r.iteration, r.model, _num(r.objective), _num(r.ub), _num(r.lb), _num(r.gap),
                        f"{r.seconds:.3f}"])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "BoundsTrace":
        tr = cls()
        with open(path, encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                tr.records.append(TraceRecord(int(row["iteration"]), row["model"], float(row["objective"]),
                                              float(row["ub"]), float(row["lb"]), float(row["gap"]),
                                              float(row["seconds"])))
        tr.iterations = max((r.iteration for r in tr.records), default=0)
        tr.status = "loaded"
        return tr

    def to_dict(self) -> dict:
        return {"status": self.status, "iterations": self.iterations,
                "records": [asdict(r) for r in self.records],
                "warm_starts": [asdict(w) for w in self.warm_starts]}


def _num(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else "-inf")


class _Clock:
    def __init__(self, config: SolverConfig):
        self.t0 = time.perf_counter()
        self.config = config

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def remaining(self) -> float:
        return self.config.time_limit_s - self.elapsed

    def budget(self) -> float:
        return max(min(self.config.solve_limit_s, self.remaining()), 1e-3)


def _solve(lm: LinearizedModel, config: SolverConfig, limit: float, starts, trace: BoundsTrace,
           iteration: int, target: str) -> MilpSolution:
    """Validate every candidate warm start and install the first valid one."""
    chosen = None
    for source, plan in starts:
        if plan is None:
            continue
        assignment = lm.warm_start(plan)
        rep = validate_warm_start(lm.milp, assignment)
        n_bad = len(rep.violations) + len(rep.bound_violations) + len(rep.integrality) + len(rep.missing)
        use = rep.ok and chosen is None
        trace.warm_starts.append(WarmStartEvent(iteration, target, source, n_bad, use))
        if use:
            chosen = assignment
    return get_backend(config.backend).solve(lm.milp, limit, chosen)


def neighborhood_search(instance: Instance, x_fixed: Mapping[str, int], rho_incumbent: Mapping[str, float],
                        config: SolverConfig = SolverConfig(), warm_start: Optional[PlanSolution] = None,
                        time_limit_s: Optional[float] = None,
                        trace: Optional[BoundsTrace] = None, iteration: int = 0):
    """Re-solve the conservative model with locations frozen on a fine grid.

    Open candidates get a uniform grid that also contains their incumbent
    rho; closed ones keep only the end points.  Returns the plan (or None)
    and the raw MILP result.
    """
    disc = neighborhood_grid(instance, x_fixed, rho_incumbent, config)
    lm = build_conservative(instance, disc, variant=config.variant, fix_x=x_fixed,
                            name=f"neighborhood-{instance.name}")
    trace = trace if trace is not None else BoundsTrace()
    limit = time_limit_s if time_limit_s is not None else config.solve_limit_s
    sol = _solve(lm, config, limit, [("conservative", warm_start)], trace, iteration, "MCN")
    plan = lm.to_plan(sol) if sol.has_solution else None
    return plan, sol


def neighborhood_grid(instance: Instance, x_fixed: Mapping[str, int], rho_incumbent: Mapping[str, float],
                      config: SolverConfig) -> Discretization:
    open_ids = [i for i in instance.candidates if x_fixed.get(i, 0)]
    fine = uniform_grid(instance, config.neighborhood_unit, config.min_gap, open_ids, rho_incumbent)
    pts = {i: (0.0, instance.rho_max) for i in instance.candidates}
    pts.update(fine.points)
    return Discretization(pts, config.min_gap)


@dataclass
class ExactResult:
    solution: Optional[PlanSolution]
    trace: BoundsTrace
    discretization: Discretization

    def __iter__(self):
        return iter((self.solution, self.trace))

    @property
    def status(self) -> str:
        return self.trace.status


def solve_exact(instance: Instance, config: SolverConfig = SolverConfig(),
                discretization: Optional[Discretization] = None, on_record=None) -> ExactResult:
    """Alternate conservative, neighborhood and relaxed solves until the
    relative gap drops to ``config.eps`` or time runs out.

    Statuses: ``optimal`` (gap met), ``time_limit``, ``iteration_limit``,
    ``stalled`` (no breakpoint could be added), ``infeasible``.
    """
    clock = _Clock(config)
    disc = discretization or initial_discretization(instance, config.min_gap)
    trace = BoundsTrace()
    best: Optional[PlanSolution] = None
    ub, lb = math.inf, -math.inf
    prev_mc: Optional[PlanSolution] = None
    variant = config.variant

    def record(it, model, obj):
        rec = TraceRecord(it, model, obj, ub, lb, relative_gap(ub, lb), clock.elapsed,
                          sum(disc.sizes().values()))
        trace.add(rec)
        if on_record:
            on_record(rec)

    def done() -> bool:
        return math.isfinite(ub) and relative_gap(ub, lb) <= config.eps

    it = 0
    while True:
        it += 1
        trace.iterations = it

        # conservative model
        mc = build_conservative(instance, disc, variant=variant)
        sol_c = _solve(mc, config, clock.budget(), [("neighborhood", best), ("conservative", prev_mc)],
                       trace, it, "MC")
        plan_c = mc.to_plan(sol_c) if sol_c.has_solution else None
        if plan_c is not None:
            prev_mc = plan_c
            if plan_c.objective < ub:
                ub, best = plan_c.objective, plan_c
        record(it, "MC", sol_c.objective)

        # neighborhood search around the conservative optimum
        plan_n = None
        if plan_c is not None and clock.remaining() > 0:
            plan_n, sol_n = neighborhood_search(instance, plan_c.x, plan_c.rho, config, warm_start=plan_c,
                                                time_limit_s=clock.budget(), trace=trace, iteration=it)
            if plan_n is not None and plan_n.objective < ub:
                ub, best = plan_n.objective, plan_n
            record(it, "MCN", sol_n.objective)
        if done():
            trace.status = "optimal"
            break
        if clock.remaining() <= 0:
            trace.status = "time_limit"
            break
        before = disc
        if plan_n is not None:
            disc = disc.refine(plan_n.rho)

        # relaxed model
        mr = build_relaxed(instance, disc, variant=variant)
        sol_r = _solve(mr, config, clock.budget(), [("neighborhood", best), ("conservative", prev_mc)],
                       trace, it, "MR")
        if sol_r.status == "infeasible":
            trace.status = "infeasible"
            record(it, "MR", math.inf)
            break
        if math.isfinite(sol_r.dual_bound):
            lb = max(lb, sol_r.dual_bound)
        record(it, "MR", sol_r.objective)
        if done():
            trace.status = "optimal"
            break
        if clock.remaining() <= 0:
            trace.status = "time_limit"
            break
        if sol_r.has_solution:
            disc = disc.refine(mr.to_plan(sol_r).rho)
        if config.max_iterations is not None and it >= config.max_iterations:
            trace.status = "iteration_limit"
            break
        if disc.points == before.points:
            trace.status = "stalled"
            break

    if best is not None:
        best = PlanSolution(**{**best.__dict__, "status": trace.status,
                               "meta": {**best.meta, "ub": ub, "lb": lb, "gap": relative_gap(ub, lb),
                                        "iterations": it}})
    return ExactResult(best, trace, disc)


@dataclass
class StaticResult:
    unit: float
    conservative: Optional[PlanSolution]
    relaxed_bound: float
    conservative_objective: float
    seconds: float

    @property
    def gap(self) -> float:
        return relative_gap(self.conservative_objective, self.relaxed_bound)


def solve_static(instance: Instance, unit: float, config: SolverConfig = SolverConfig()) -> StaticResult:
    """One conservative and one relaxed solve on a uniform grid."""
    t0 = time.perf_counter()
    disc = uniform_grid(instance, unit, config.min_gap)
    backend = get_backend(config.backend)
    mc = build_conservative(instance, disc, variant=config.variant)
    sc = backend.solve(mc.milp, config.solve_limit_s)
    mr = build_relaxed(instance, disc, variant=config.variant)
    sr = backend.solve(mr.milp, config.solve_limit_s)
    plan = mc.to_plan(sc) if sc.has_solution else None
    return StaticResult(unit, plan, sr.dual_bound if sr.status != "infeasible" else math.inf,
                        sc.objective, time.perf_counter() - t0)


def grid_sizes(disc: Discretization) -> Dict[str, int]:
    return disc.sizes()


def iteration_bounds(trace: BoundsTrace) -> List[Tuple[int, float, float]]:
    """(iteration, UB, LB) at the end of each completed iteration."""
    out: Dict[int, Tuple[float, float]] = {}
    for r in trace.records:
        out[r.iteration] = (r.ub, r.lb)
    return [(k, *v) for k, v in sorted(out.items())]


def feasibility_probe(instance: Instance, config: SolverConfig = SolverConfig()) -> str:
    """``feasible`` if the conservative model on the initial grid has a
    solution, ``infeasible`` if the relaxed one has none, else ``unknown``."""
    disc = initial_discretization(instance, config.min_gap)
    backend = get_backend(config.backend)
    if backend.solve(build_conservative(instance, disc, variant=config.variant).milp,
                     config.solve_limit_s).has_solution:
        return "feasible"
    if backend.solve(build_relaxed(instance, disc, variant=config.variant).milp,
                     config.solve_limit_s).status == "infeasible":
        return "infeasible"
    return "unknown"
