"""Alternative delivery modes used as baselines.

* ``D2D-C``: dedicated couriers carry parcels door to door.
* ``H&S-C``: the hub network, but couriers ride the hub-to-hub legs.
* ``H&S-D&C``: the drone network itself (``solve_exact``).

Plus the two-stage heuristic that locates hubs first and sizes the fleet
afterwards.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .adaptive import SolverConfig, relative_gap, solve_exact
from .instance import Instance, euclidean
from .linearize import (INITIAL_INTERIOR, Discretization, _secant_coefs, _tangent_coefs,
                        build_conservative, initial_discretization, uniform_grid)
from .milp import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel, get_backend
from .model import (FULL, ModelVariant, PlanSolution, check_nonlinear_feasibility, compute_metrics,
                    queue_length)

Pair = Tuple[str, str]

NO_CAPACITY = ModelVariant(charging=False, apron_capacity=False, overflow=False, flight_range=False)
QUEUE_FREE = ModelVariant(charging=False, apron_capacity=False, overflow=False, flight_range=True)
MODES = ("D2D-C", "H&S-C", "H&S-D&C")


@dataclass(frozen=True)
class CourierParams:
    daily_wage: float
    courier_fare: float = 1.25   # CNY per km per kg
    trip_capacity_kg: float = 12.0
    pooling_size: float = 1.0
    speed_mps: float = 5.0
    detour: float = 1.4
    wage_ratio: float = 4.0

    def __post_init__(self):
        if min(self.daily_wage, self.courier_fare, self.trip_capacity_kg, self.speed_mps, self.detour) < 0:
            raise ValueError("courier parameters must be non-negative")
        if self.pooling_size < 1:
            raise ValueError("pooling size must be >= 1")

    @classmethod
    def from_instance(cls, instance: Instance, wage_ratio: float = 4.0, **overrides) -> "CourierParams":
        """Defaults derived from the drone cost of ``instance``; the wage is
        ``wage_ratio`` times the daily drone cost."""
        gen = instance.meta.get("generator", {}) if isinstance(instance.meta, dict) else {}
        p = gen.get("params", {}) if isinstance(gen, dict) else {}
        base = dict(daily_wage=wage_ratio * instance.drone_daily_cost,
                    courier_fare=p.get("courier_fare", 1.25),
                    trip_capacity_kg=instance.payload_capacity,
                    pooling_size=instance.pooling_size,
                    speed_mps=p.get("courier_mps", 5.0),
                    detour=p.get("detour", 1.4),
                    wage_ratio=wage_ratio)
        base.update(overrides)
        return cls(**base)

    def distance(self, a, b) -> float:
        return euclidean(a, b) * self.detour

    def travel_minutes(self, km: float) -> float:
        return km * 1000.0 / self.speed_mps / 60.0

    def trip_cost(self, km: float, operating_minutes: float) -> float:
        """Daily cost of one trip per minute over ``km``."""
        return self.courier_fare * km * self.trip_capacity_kg * operating_minutes


# ---------------------------------------------------------------------------
# door-to-door couriers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CourierSolution:
    """Door-to-door plan: a service level per origin, trips between points."""

    rho: Dict[str, float]
    y: Dict[Pair, int]
    alpha: Dict[Pair, float]
    psi: Dict[Pair, float]
    phi: Dict[Pair, float]
    staff: int
    travel_time: Dict[Pair, float]
    pooling_size: float
    objective: float
    status: str = "feasible"
    meta: Dict[str, object] = field(default_factory=dict, compare=False)

    def served_routes(self, instance: Instance) -> Iterator[tuple]:
        for od, a in self.alpha.items():
            rate = a * instance.demand[od]
            if rate > 0:
                yield od, rate, self.travel_time[od], od


@dataclass
class _CourierNetwork:
    points: Tuple[str, ...]
    origins: Tuple[str, ...]
    pairs: Tuple[Pair, ...]
    dist: Dict[Pair, float]
    minutes: Dict[Pair, float]
    cost: Dict[Pair, float]


def _courier_network(instance: Instance, params: CourierParams) -> _CourierNetwork:
    pairs = instance.od_pairs
    used = sorted({p for od in pairs for p in od}, key=list(instance.demand_points).index)
    origins = tuple(sorted({o for o, _ in pairs}, key=used.index))
    dist, minutes, cost = {}, {}, {}
    for a in used:
        for b in used:
            if a != b:
                km = params.distance(instance.demand_points[a], instance.demand_points[b])
                dist[a, b] = km
                minutes[a, b] = params.travel_minutes(km)
                cost[a, b] = params.trip_cost(km, instance.operating_minutes)
    return _CourierNetwork(tuple(used), origins, tuple(pairs), dist, minutes, cost)


@dataclass
class _CourierModel:
    milp: MilpModel
    rho: Dict[str, int]
    y: Dict[Pair, int]
    alpha: Dict[Pair, int]
    psi: Dict[Pair, int]
    phi: Dict[Pair, int]
    staff: int


def _build_courier(instance: Instance, params: CourierParams, net: _CourierNetwork,
                   grid: Discretization, conservative: bool) -> _CourierModel:
    m = MilpModel("d2d-" + ("conservative" if conservative else "relaxed"))
    top = instance.rho_max
    Q = params.pooling_size
    tmax = max(net.minutes.values(), default=0.0)
    staff_cap = math.ceil(len(net.origins) * queue_length(top) + 2 * tmax * instance.total_demand / Q + 1)
    staff = m.add_var("staff", INTEGER, 0, staff_cap, obj=params.daily_wage)
    rho = {o: m.add_var(f"rho[{o}]", CONTINUOUS, 0.0, top) for o in net.origins}
    theta = {o: m.add_var(f"theta[{o}]") for o in net.origins}
    y = {od: m.add_var(f"y[{od[0]},{od[1]}]", BINARY) for od in net.pairs}
    alpha = {od: m.add_var(f"alpha[{od[0]},{od[1]}]", CONTINUOUS, 0.0, 1.0) for od in net.pairs}
    psi = {od: m.add_var(f"psi[{od[0]},{od[1]}]", obj=net.cost[od]) for od in net.pairs}
    phi = {k: m.add_var(f"phi[{k[0]},{k[1]}]", obj=net.cost[k]) for k in net.dist}

    m.add_constr({alpha[od]: instance.demand[od] for od in net.pairs}, GE,
                 instance.market_share * instance.total_demand, "market_share")
    for od in net.pairs:
        o = od[0]
        m.add_constr({alpha[od]: 1.0, rho[o]: -1.0}, LE, 0.0)
        m.add_constr({alpha[od]: 1.0, y[od]: -1.0}, LE, 0.0)
        m.add_constr({alpha[od]: 1.0, rho[o]: -1.0, y[od]: -1.0}, GE, -1.0)
        m.add_constr({psi[od]: 1.0, alpha[od]: -instance.demand[od] / Q}, EQ, 0.0, f"trips[{o},{od[1]}]")
    for p in net.points:
        terms = []
        for (a, b), j in list(psi.items()) + list(phi.items()):
            if b == p:
                terms.append((j, 1.0))
            if a == p:
                terms.append((j, -1.0))
        m.add_constr(terms, EQ, 0.0, f"balance[{p}]")
    for o in net.origins:
        pts = grid.points[o]
        cuts = ([_secant_coefs(a, b) for a, b in zip(pts, pts[1:])] if conservative
                else [_tangent_coefs(a) for a in pts[:-1]])
        for s, q in cuts:
            m.add_constr({theta[o]: 1.0, rho[o]: -s}, GE, q)
    travel = [(j, net.minutes[k]) for k, j in list(psi.items()) + list(phi.items())]
    m.add_constr([(theta[o], 1.0) for o in net.origins] + travel + [(staff, -1.0)], LE, 0.0, "staff")
    return _CourierModel(m, rho, y, alpha, psi, phi, staff)


def _courier_plan(cm: _CourierModel, values, net: _CourierNetwork, params: CourierParams,
                  objective: float, status: str, top: float) -> CourierSolution:
    def c(j, hi=math.inf):
        return float(min(max(values[j], 0.0), hi))

    return CourierSolution(
        rho={o: c(j, top) for o, j in cm.rho.items()},
        y={k: int(round(values[j])) for k, j in cm.y.items() if round(values[j])},
        alpha={k: c(j, 1.0) for k, j in cm.alpha.items() if c(j, 1.0) > 0},
        psi={k: c(j) for k, j in cm.psi.items() if c(j) > 0},
        phi={k: c(j) for k, j in cm.phi.items() if c(j) > 0},
        staff=int(round(values[cm.staff])),
        travel_time={od: net.minutes[od] for od in net.pairs},
        pooling_size=params.pooling_size,
        objective=objective, status=status,
    )


def solve_d2d_courier(instance: Instance, params: Optional[CourierParams] = None,
                      config: SolverConfig = SolverConfig()) -> Tuple[Optional[CourierSolution], dict]:
    """Door-to-door courier service with queueing couriers at each origin.

    Uses the same upper/lower bounding scheme as the hub model: secants of
    the queue curve give feasible staffing, tangents give a bound, and the
    breakpoints are refined around each optimum until the gap closes.
    Returns the best plan and a summary with ``ub``, ``lb``, ``gap``,
    ``iterations`` and ``status``.
    """
    params = params or CourierParams.from_instance(instance)
    net = _courier_network(instance, params)
    top = instance.rho_max
    if not net.pairs:
        empty = CourierSolution({}, {}, {}, {}, {}, 0, {}, params.pooling_size, 0.0, "optimal")
        return empty, {"ub": 0.0, "lb": 0.0, "gap": 0.0, "iterations": 0, "status": "optimal"}
    inner = tuple(v for v in INITIAL_INTERIOR if 0 < v < top)
    grid = Discretization({o: (0.0, *inner, top) for o in net.origins}, config.min_gap)
    backend = get_backend(config.backend)
    t0 = time.perf_counter()
    ub, lb, best, status, it = math.inf, -math.inf, None, "time_limit", 0
    while True:
        it += 1
        left = config.time_limit_s - (time.perf_counter() - t0)
        cm = _build_courier(instance, params, net, grid, True)
        sc = backend.solve(cm.milp, max(min(config.solve_limit_s, left), 1e-3))
        before = grid
        if sc.has_solution:
            plan = _courier_plan(cm, sc.values, net, params, sc.objective, sc.status, top)
            if sc.objective < ub:
                ub, best = sc.objective, plan
            grid = grid.refine(plan.rho)
        left = config.time_limit_s - (time.perf_counter() - t0)
        cr = _build_courier(instance, params, net, grid, False)
        sr = backend.solve(cr.milp, max(min(config.solve_limit_s, left), 1e-3))
        if sr.status == "infeasible":
            status = "infeasible"
            break
        if math.isfinite(sr.dual_bound):
            lb = max(lb, sr.dual_bound)
        if math.isfinite(ub) and relative_gap(ub, lb) <= config.eps:
            status = "optimal"
            break
        if sr.has_solution:
            grid = grid.refine(_courier_plan(cr, sr.values, net, params, sr.objective, sr.status, top).rho)
        if time.perf_counter() - t0 >= config.time_limit_s:
            status = "time_limit"
            break
        if config.max_iterations is not None and it >= config.max_iterations:
            status = "iteration_limit"
            break
        if grid.points == before.points:
            status = "stalled"
            break
    summary = {"ub": ub, "lb": lb, "gap": relative_gap(ub, lb), "iterations": it, "status": status}
    if best is not None:
        best = replace(best, status=status, meta={**best.meta, **summary, "algorithm": "d2d-courier"})
    return best, summary


def check_courier_feasibility(instance: Instance, sol: CourierSolution, params: CourierParams,
                              tol: float = 1e-8) -> Dict[str, float]:
    """Worst violation per constraint family, evaluated with the exact queue length."""
    net = _courier_network(instance, params)
    Q = sol.pooling_size
    worst: Dict[str, float] = {}

    def add(name, v):
        worst[name] = max(worst.get(name, 0.0), v)

    served = sum(a * instance.demand[od] for od, a in sol.alpha.items())
    add("market_share", instance.market_share * instance.total_demand - served)
    for od in net.pairs:
        a = sol.alpha.get(od, 0.0)
        r = sol.rho.get(od[0], 0.0)
        yv = sol.y.get(od, 0)
        add("alpha_link", max(a - r, a - yv, r - (1 - yv) - a))
        add("trips", abs(sol.psi.get(od, 0.0) - instance.demand[od] * a / Q))
    for o, r in sol.rho.items():
        add("service_level", max(r - instance.rho_max, -r))
    for p in net.points:
        inflow = sum(v for (a, b), v in list(sol.psi.items()) + list(sol.phi.items()) if b == p)
        outflow = sum(v for (a, b), v in list(sol.psi.items()) + list(sol.phi.items()) if a == p)
        add("balance", abs(inflow - outflow))
    need = sum(queue_length(r) for r in sol.rho.values())
    need += sum(net.minutes[k] * v for k, v in list(sol.psi.items()) + list(sol.phi.items()))
    add("staff", need - sol.staff)
    return {k: v for k, v in worst.items() if v > tol}


def courier_objective(instance: Instance, sol: CourierSolution, params: CourierParams) -> float:
    net = _courier_network(instance, params)
    return params.daily_wage * sol.staff + sum(
        net.cost[k] * v for k, v in list(sol.psi.items()) + list(sol.phi.items()))


# ---------------------------------------------------------------------------
# hub network with courier line-haul
# ---------------------------------------------------------------------------

def courier_hub_instance(instance: Instance, params: Optional[CourierParams] = None) -> Instance:
    """Swap drone line-haul for couriers: hub legs use road distance,
    courier speed and courier fares; the fleet cost becomes the wage."""
    params = params or CourierParams.from_instance(instance)
    ft, fc = {}, {}
    for (i, j), km in instance.flight_dist.items():
        road = km * params.detour
        ft[i, j] = params.travel_minutes(road)
        fc[i, j] = params.trip_cost(road, instance.operating_minutes)
    return instance.with_changes(flight_time=ft, flight_cost=fc, drone_daily_cost=params.daily_wage,
                                 pooling_size=params.pooling_size,
                                 name=f"{instance.name}-courier-hub")


def solve_hs_courier(instance: Instance, params: Optional[CourierParams] = None,
                     config: SolverConfig = SolverConfig()):
    """Hub-and-spoke with couriers on every leg.  Charging, apron and
    flight-range rows are dropped; courier legs keep the service radius.

    Returns ``(ExactResult, transformed instance)``.
    """
    sub = courier_hub_instance(instance, params)
    return solve_exact(sub, replace(config, variant=NO_CAPACITY)), sub


# ---------------------------------------------------------------------------
# two-stage heuristic
# ---------------------------------------------------------------------------

@dataclass
class TwoStageResult:
    solution: Optional[PlanSolution]
    stage1_objective: float
    stage1: Optional[PlanSolution]
    status: str  # "feasible", "infeasible" or "no_design"
    seconds: float


def solve_fixed_design(instance: Instance, x: Dict[str, int], y: Dict, config: SolverConfig = SolverConfig(),
                       unit: float = 0.05, extra: Optional[Dict[str, float]] = None):
    """Conservative model on a static grid with locations and allocations fixed."""
    disc = uniform_grid(instance, unit, config.min_gap, extra=extra)
    lm = build_conservative(instance, disc, variant=config.variant, fix_x=x, fix_y=y,
                            name=f"fixed-design-{instance.name}")
    sol = get_backend(config.backend).solve(lm.milp, config.solve_limit_s)
    return (lm.to_plan(sol) if sol.has_solution else None), sol


def two_stage_heuristic(instance: Instance, config: SolverConfig = SolverConfig(), unit: float = 0.05) -> TwoStageResult:
    """Locate hubs and allocate routes ignoring queues, then size the fleet.

    An infeasible second stage is reported as such; the design is not
    repaired.
    """
    t0 = time.perf_counter()
    backend = get_backend(config.backend)
    lm = build_conservative(instance, initial_discretization(instance, config.min_gap), variant=QUEUE_FREE,
                            name=f"stage1-{instance.name}")
    lm.milp.obj[lm.fleet] = 0.0  # fleet is not priced in the first stage
    s1 = backend.solve(lm.milp, config.solve_limit_s)
    if not s1.has_solution:
        return TwoStageResult(None, math.inf, None, "no_design", time.perf_counter() - t0)
    stage1 = lm.to_plan(s1)
    plan, s2 = solve_fixed_design(instance, stage1.x, stage1.y, config, unit)
    if plan is None:
        return TwoStageResult(None, s1.objective, stage1, "infeasible", time.perf_counter() - t0)
    plan = replace(plan, meta={**plan.meta, "algorithm": "two-stage", "stage1_objective": s1.objective})
    return TwoStageResult(plan, s1.objective, stage1, "feasible", time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# mode comparison
# ---------------------------------------------------------------------------

CSV_HEADER = ("mode", "Q", "mean_cost_cny", "mean_lead_min", "status")


@dataclass
class ModeRow:
    mode: str
    Q: float
    mean_cost_cny: float
    mean_lead_min: float
    status: str
    objective: float = math.nan
    feasible: Optional[bool] = None


@dataclass
class ModeComparison:
    instance: str
    rows: List[ModeRow]

    def get(self, mode: str, Q: float) -> ModeRow:
        for r in self.rows:
            if r.mode == mode and r.Q == Q:
                return r
        raise KeyError((mode, Q))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.mode, f"{r.Q:g}", _fmt(r.mean_cost_cny), _fmt(r.mean_lead_min), r.status])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(v: float) -> str:
    return "" if v is None or not math.isfinite(v) else f"{v:.6g}"


def _row(mode: str, Q: float, instance: Instance, sol, status: str, feasible: Optional[bool]) -> ModeRow:
    if sol is None:
        return ModeRow(mode, Q, math.nan, math.nan, status, math.nan, feasible)
    met = compute_metrics(instance, sol)
    return ModeRow(mode, Q, met.mean_operating_cost, met.mean_lead_time, status, sol.objective, feasible)


def compare_modes(instance: Instance, pooling_sizes: Sequence[float] = (1, 2, 4),
                  config: SolverConfig = SolverConfig(), wage_ratio: float = 4.0) -> ModeComparison:
    """Run every mode for every pooling size and collect cost and lead time."""
    if not pooling_sizes:
        raise ValueError("pooling_sizes must not be empty")
    rows: List[ModeRow] = []
    for Q in pooling_sizes:
        inst_q = instance.with_changes(pooling_size=float(Q))
        params = CourierParams.from_instance(inst_q, wage_ratio)

        sol, summary = solve_d2d_courier(inst_q, params, config)
        ok = None if sol is None else not check_courier_feasibility(inst_q, sol, params)
        rows.append(_row("D2D-C", Q, inst_q, sol, summary["status"], ok))

        res, sub = solve_hs_courier(inst_q, params, config)
        ok = None if res.solution is None else check_nonlinear_feasibility(sub, res.solution,
                                                                            variant=NO_CAPACITY).ok
        rows.append(_row("H&S-C", Q, sub, res.solution, res.status, ok))

        res = solve_exact(inst_q, config)
        ok = None if res.solution is None else check_nonlinear_feasibility(inst_q, res.solution,
                                                                            variant=config.variant).ok
        rows.append(_row("H&S-D&C", Q, inst_q, res.solution, res.status, ok))
    return ModeComparison(instance.name, rows)
