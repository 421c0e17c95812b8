"""Nonlinear network design model: queueing formulas, objective, exact
feasibility check and service metrics.

Everything here is evaluated exactly, with no piecewise approximation, so
it serves as the reference that every linearized model is certified
against.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Tuple

from .instance import Instance

Route = Tuple[str, str, str, str]  # (o, i, j, d)

DEFAULT_TOL = 1e-8


# ---------------------------------------------------------------------------
# queueing formulas
# ---------------------------------------------------------------------------

def queue_length(rho: float) -> float:
    """Steady-state number of drones at an M/M/1 vertiport, rho / (1 - rho)."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"traffic intensity must lie in [0, 1), got {rho}")
    return rho / (1.0 - rho)


def overflow_probability(rho: float, aprons: int) -> float:
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"traffic intensity must lie in [0, 1), got {rho}")
    if aprons < 1:
        raise ValueError(f"apron count must be >= 1, got {aprons}")
    return rho ** aprons


def flight_time_from_distance(l_km: float, cruise_mps: float) -> float:
    """Flight minutes for ``l_km``, plus one minute for take-off and landing."""
    if l_km < 0 or cruise_mps <= 0:
        raise ValueError("need l_km >= 0 and cruise_mps > 0")
    return l_km * 1000.0 / cruise_mps / 60.0 + 1.0


# ---------------------------------------------------------------------------
# route feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelVariant:
    """Which capacity-type constraint families are active.

    The courier hub-and-spoke benchmark switches all four off.
    """

    charging: bool = True
    apron_capacity: bool = True
    overflow: bool = True
    flight_range: bool = True


FULL = ModelVariant()


@dataclass(frozen=True)
class RouteFeasibility:
    delta: Dict[Route, int]

    def feasible(self) -> Tuple[Route, ...]:
        return tuple(r for r, v in self.delta.items() if v)

    def __getitem__(self, route: Route) -> int:
        return self.delta.get(route, 0)


def route_feasibility(instance: Instance, variant: ModelVariant = FULL) -> RouteFeasibility:
    """Evaluate the range tests for every demand pair and vertiport pair.

    Boundaries are inclusive.  With ``variant.flight_range`` off the
    vertiport-to-vertiport leg is not range limited.
    """
    LS, LD = instance.service_range_km, instance.flight_range_km
    N = instance.candidate_ids
    delta = {}
    for (o, d) in instance.demand:
        for i in N:
            ok_o = instance.courier_dist[o, i] <= LS
            for j in N:
                ok = ok_o and instance.courier_dist[d, j] <= LS
                if variant.flight_range:
                    ok = ok and instance.flight_dist[i, j] <= LD
                delta[(o, i, j, d)] = int(ok)
    return RouteFeasibility(delta)


def feasible_routes(instance: Instance, variant: ModelVariant = FULL) -> Tuple[Route, ...]:
    """Feasible routes for pairs with positive demand (the model's y index set)."""
    rf = route_feasibility(instance, variant)
    return tuple(r for r in rf.feasible() if instance.demand[r[0], r[3]] > 0)


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanSolution:
    """Full decision vector; absent keys in the sparse maps are zero."""

    x: Dict[str, int]
    z: Dict[Tuple[str, int], int]
    y: Dict[Route, int]
    fleet_size: int
    rho: Dict[str, float]
    psi: Dict[Tuple[str, str], float]
    phi: Dict[Tuple[str, str], float]
    alpha: Dict[Route, float]
    objective: float = float("nan")
    status: str = "feasible"
    meta: Dict[str, object] = field(default_factory=dict, compare=False)

    @classmethod
    def zero(cls, instance: Instance) -> "PlanSolution":
        return cls(x={i: 0 for i in instance.candidates}, z={}, y={}, fleet_size=0,
                   rho={i: 0.0 for i in instance.candidates}, psi={}, phi={}, alpha={},
                   objective=0.0)

    def open_vertiports(self) -> Tuple[str, ...]:
        return tuple(i for i, v in self.x.items() if v)

    def served_routes(self, instance: Instance) -> Iterator[tuple]:
        """(key, served rate, travel minutes, pooling key) per served route."""
        for (o, i, j, d), a in self.alpha.items():
            if a <= 0:
                continue
            rate = a * instance.demand[o, d]
            if rate <= 0:
                continue
            travel = instance.courier_time[o, i] + instance.flight_time[i, j] + instance.courier_time[d, j]
            yield (o, i, j, d), rate, travel, (i, j)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "x": dict(self.x),
            "z": [[i, h, v] for (i, h), v in self.z.items() if v],
            "y": [[*r, v] for r, v in self.y.items() if v],
            "fleet_size": self.fleet_size,
            "rho": dict(self.rho),
            "psi": [[i, j, v] for (i, j), v in self.psi.items() if v],
            "phi": [[i, j, v] for (i, j), v in self.phi.items() if v],
            "alpha": [[*r, v] for r, v in self.alpha.items() if v],
            "objective": self.objective,
            "status": self.status,
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlanSolution":
        return cls(
            x={k: int(v) for k, v in data["x"].items()},
            z={(i, int(h)): int(v) for i, h, v in data.get("z", [])},
            y={tuple(row[:4]): int(row[4]) for row in data.get("y", [])},
            fleet_size=int(data["fleet_size"]),
            rho={k: float(v) for k, v in data["rho"].items()},
            psi={(i, j): float(v) for i, j, v in data.get("psi", [])},
            phi={(i, j): float(v) for i, j, v in data.get("phi", [])},
            alpha={tuple(row[:4]): float(row[4]) for row in data.get("alpha", [])},
            objective=float(data.get("objective", float("nan"))),
            status=data.get("status", "feasible"),
            meta=data.get("meta", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PlanSolution":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _check_ids(instance: Instance, sol: PlanSolution) -> None:
    N, R = instance.candidates, instance.demand_points
    bad = [i for i in list(sol.x) + list(sol.rho) if i not in N]
    bad += [p for p in list(sol.psi) + list(sol.phi) if p[0] not in N or p[1] not in N]
    bad += [r for r in list(sol.y) + list(sol.alpha)
            if r[0] not in R or r[3] not in R or r[1] not in N or r[2] not in N]
    bad += [k for k in sol.z if k[0] not in N]
    if bad:
        raise ValueError(f"solution does not match instance dimensions: {bad[:5]}")


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def evaluate_objective(instance: Instance, solution: PlanSolution) -> float:
    """Daily operating cost: fleet + drone transport + courier legs."""
    _check_ids(instance, solution)
    total = instance.drone_daily_cost * solution.fleet_size
    for key, v in solution.psi.items():
        total += instance.flight_cost[key] * v
    for key, v in solution.phi.items():
        total += instance.flight_cost[key] * v
    for (o, i, j, d), a in solution.alpha.items():
        total += instance.demand[o, d] * (instance.courier_cost[o, i] + instance.courier_cost[d, j]) * a
    return total


# ---------------------------------------------------------------------------
# exact feasibility
# ---------------------------------------------------------------------------

@dataclass
class FamilyResult:
    passed: bool
    worst: float
    where: str = ""


@dataclass
class FeasibilityReport:
    families: Dict[str, FamilyResult]
    tol: float

    @property
    def ok(self) -> bool:
        return all(f.passed for f in self.families.values())

    def failures(self) -> Dict[str, FamilyResult]:
        return {k: v for k, v in self.families.items() if not v.passed}

    def to_dict(self) -> dict:
        return {
            "overall": self.ok,
            "tol": self.tol,
            "families": {k: {"passed": v.passed, "worst_violation": v.worst, "where": v.where}
                         for k, v in self.families.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


class _Families:
    def __init__(self, tol):
        self.tol = tol
        self.worst: Dict[str, Tuple[float, str]] = {}

    def add(self, family: str, violation: float, where: str = "") -> None:
        cur = self.worst.get(family)
        if cur is None or violation > cur[0]:
            self.worst[family] = (violation, where)

    def report(self) -> FeasibilityReport:
        fams = {}
        for k, (v, w) in self.worst.items():
            v = max(v, 0.0)
            fams[k] = FamilyResult(passed=v <= self.tol, worst=v, where=w if v > 0 else "")
        return FeasibilityReport(fams, self.tol)


def check_nonlinear_feasibility(instance: Instance, solution: PlanSolution, tol: float = DEFAULT_TOL,
                                variant: ModelVariant = FULL) -> FeasibilityReport:
    """Check every constraint family of the nonlinear model exactly.

    Each family reports its worst absolute violation; the fleet and
    charging rows use the exact queue length, not an approximation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_ids(instance, solution)
    N = instance.candidate_ids
    H = instance.apron_options
    fam = _Families(tol)
    x = {i: solution.x.get(i, 0) for i in N}
    rho = {i: solution.rho.get(i, 0.0) for i in N}
    rho_max = instance.rho_max

    def flow(table, i, j):
        return table.get((i, j), 0.0)

    # integrality
    fam.add("integrality", 0.0)
    for i, v in x.items():
        fam.add("integrality", abs(v - round(v)) + max(0, -v, v - 1), f"x[{i}]")
    for k, v in solution.z.items():
        fam.add("integrality", abs(v - round(v)) + max(0, -v, v - 1), f"z{k}")
    for k, v in solution.y.items():
        fam.add("integrality", abs(v - round(v)) + max(0, -v, v - 1), f"y{k}")
    G = solution.fleet_size
    fam.add("integrality", abs(G - round(G)) + max(0, -G), "fleet_size")

    # network design
    fam.add("vertiport_count", sum(x.values()) - instance.max_vertiports, "sum x")
    for i in N:
        s = sum(solution.z.get((i, h), 0) for h in H)
        fam.add("apron_choice", abs(s - x[i]), f"i={i}")
    stray = [k for k, v in solution.z.items() if v and k[1] not in H]
    fam.add("apron_choice", float(len(stray)), f"z outside H: {stray[:3]}" if stray else "")
    if variant.apron_capacity:
        cap = sum(h * solution.z.get((i, h), 0) for i in N for h in H)
        fam.add("apron_capacity", G - cap, "fleet vs aprons")
    rf = route_feasibility(instance, variant)
    per_od = defaultdict(float)
    fam.add("route_open", 0.0)
    fam.add("route_feasibility", 0.0)
    for r, v in solution.y.items():
        o, i, j, d = r
        fam.add("route_open", max(v - x[i], v - x[j]), f"y{r}")
        fam.add("route_feasibility", v - rf[r], f"y{r}")
        per_od[o, d] += v
    fam.add("single_allocation", 0.0)
    for od, s in per_od.items():
        fam.add("single_allocation", s - 1, f"od={od}")

    # service level
    for i in N:
        fam.add("service_level", max(rho[i] - rho_max * x[i], -rho[i]), f"rho[{i}]")
    served = sum(a * instance.demand[r[0], r[3]] for r, a in solution.alpha.items())
    fam.add("market_share", instance.market_share * instance.total_demand - served, "served demand")
    fam.add("alpha_link", 0.0)
    routes = set(solution.alpha) | set(solution.y)
    for r in routes:
        a = solution.alpha.get(r, 0.0)
        y = solution.y.get(r, 0)
        ri = rho[r[1]]
        fam.add("alpha_link", max(a - ri, ri - (1 - y) - a, a - y), f"alpha{r}")
    fam.add("nonnegativity", 0.0)
    for table, nm in ((solution.alpha, "alpha"), (solution.psi, "psi"), (solution.phi, "phi")):
        for k, v in table.items():
            fam.add("nonnegativity", -v, f"{nm}{k}")

    # traffic flows
    psi_req = defaultdict(float)
    for (o, i, j, d), a in solution.alpha.items():
        psi_req[i, j] += instance.demand[o, d] / instance.pooling_size * a
    fam.add("transit_flow", 0.0)
    for key in set(psi_req) | set(solution.psi):
        fam.add("transit_flow", abs(solution.psi.get(key, 0.0) - psi_req.get(key, 0.0)), f"psi{key}")
    for i in N:
        inflow = sum(flow(solution.psi, j, i) + flow(solution.phi, j, i) for j in N)
        outflow = sum(flow(solution.psi, i, j) + flow(solution.phi, i, j) for j in N)
        fam.add("flow_balance", abs(inflow - outflow), f"i={i}")

    # drone operations
    def f(r):
        return queue_length(r) if 0 <= r < 1 else math.inf

    travel = sum(instance.flight_time[k] * v for k, v in solution.psi.items())
    travel += sum(instance.flight_time[k] * v for k, v in solution.phi.items())
    need = sum(f(rho[i]) for i in N) + travel
    fam.add("fleet", need - G, "sum f(rho) + travel - fleet")
    if variant.charging:
        for i in N:
            dep = sum(instance.flight_time[i, j] * (flow(solution.psi, i, j) + flow(solution.phi, i, j)) for j in N)
            fam.add("charging", instance.charge_ratio * dep - f(rho[i]), f"i={i}")
    if variant.overflow:
        g = instance.overflow_cap
        for i in N:
            if instance.overflow_form == "literal":
                lhs = sum(g ** (1.0 / h) * solution.z.get((i, h), 0) for h in H) * rho[i]
                rhs = sum(g ** (1.0 / (h + 1)) * solution.z.get((i, h), 0) for h in H)
            else:
                lhs = rho[i]
                rhs = sum(g ** (1.0 / h) * solution.z.get((i, h), 0) for h in H)
            fam.add("overflow", lhs - rhs, f"i={i}")
    return fam.report()


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    mean_operating_cost: float
    mean_lead_time: float
    served_demand: float
    route_lead_times: Dict[tuple, float]
    pooling_times: Dict[tuple, float]

    @property
    def defined(self) -> bool:
        return self.served_demand > 0


def compute_metrics(instance: Instance, solution, objective: float | None = None) -> Metrics:
    """Mean cost per kg and demand-weighted mean lead time.

    Works for any solution exposing ``served_routes(instance)``; pooling
    groups are whatever key the solution reports (vertiport pair for hub
    networks, O-D pair for door-to-door service).  A solution may carry its
    own ``pooling_size``.
    """
    obj = solution.objective if objective is None else objective
    Q = getattr(solution, "pooling_size", None) or instance.pooling_size
    rows = list(solution.served_routes(instance))
    pooled = defaultdict(float)
    for _, rate, _, pool in rows:
        pooled[pool] += rate
    served = sum(pooled.values())
    if served <= 0:
        return Metrics(float("nan"), float("nan"), 0.0, {}, {})
    pooling = {k: (Q - 1.0) / v for k, v in pooled.items()}
    lead = {}
    weighted = 0.0
    for key, rate, travel, pool in rows:
        lead[key] = travel + pooling[pool]
        weighted += rate * lead[key]
    return Metrics(
        mean_operating_cost=obj / (served * instance.operating_minutes),
        mean_lead_time=weighted / served,
        served_demand=served,
        route_lead_times=lead,
        pooling_times=pooling,
    )
