"""Piecewise-linear approximations of the queue length and the two MILPs
built from them.

The conservative model over-estimates the drones held in queues and
under-estimates the charging capacity, so each of its feasible points is
feasible for the nonlinear model.  The relaxed model does the opposite and
its optimum is a lower bound.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

from .instance import Instance
from .milp import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel, MilpSolution
from .model import FULL, ModelVariant, PlanSolution, Route, feasible_routes, queue_length

CONSERVATIVE, RELAXED = "conservative", "relaxed"
INITIAL_INTERIOR = (0.3, 0.6, 0.8, 0.9)
DEFAULT_MIN_GAP = 0.01


class DiscretizationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# cut formulas
# ---------------------------------------------------------------------------

def intersection_point(a: float, b: float) -> float:
    """Abscissa where the tangents of rho/(1-rho) at ``a`` and ``b`` cross."""
    if not 0.0 <= a < b < 1.0:
        raise DiscretizationError(f"need 0 <= a < b < 1, got a={a}, b={b}")
    return (a + b - 2.0 * a * b) / (2.0 - a - b)


def secant_value(a: float, b: float, rho: float) -> float:
    """Chord of the queue-length curve through ``a`` and ``b``, evaluated at ``rho``."""
    if not a < b:
        raise DiscretizationError(f"secant needs a < b, got a={a}, b={b}")
    return (rho - a * b) / ((1.0 - a) * (1.0 - b))


def tangent_value(at: float, rho: float) -> float:
    if not 0.0 <= at < 1.0:
        raise DiscretizationError(f"tangent point must lie in [0, 1), got {at}")
    return (rho - at * at) / (1.0 - at) ** 2


def _secant_coefs(a: float, b: float) -> Tuple[float, float]:
    """(slope, intercept) of the chord."""
    den = (1.0 - a) * (1.0 - b)
    return 1.0 / den, -a * b / den


def _tangent_coefs(at: float) -> Tuple[float, float]:
    den = (1.0 - at) ** 2
    return 1.0 / den, -at * at / den


# ---------------------------------------------------------------------------
# breakpoints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Discretization:
    """Per-candidate sorted breakpoints from 0 to the service-level cap."""

    points: Dict[str, Tuple[float, ...]]
    min_gap: float = DEFAULT_MIN_GAP

    def __post_init__(self):
        pts = {}
        for i, p in self.points.items():
            p = tuple(float(v) for v in p)
            if len(p) < 2 or p[0] != 0.0:
                raise DiscretizationError(f"grid for {i} must start at 0 and have a segment: {p}")
            if any(b <= a for a, b in zip(p, p[1:])):
                raise DiscretizationError(f"grid for {i} is not strictly increasing")
            if p[-1] >= 1.0:
                raise DiscretizationError(f"grid for {i} reaches {p[-1]}; the last point must be below 1")
            pts[i] = p
        object.__setattr__(self, "points", pts)
        if self.min_gap < 0:
            raise DiscretizationError("min_gap must be non-negative")

    def bar_points(self, i: str) -> Tuple[float, ...]:
        """Gating breakpoints of the conservative model: the end points plus
        tangent intersections of consecutive interior points."""
        p = self.points[i]
        K = len(p) - 1
        out = [p[0]]
        out += [intersection_point(p[k - 1], p[k]) for k in range(1, K)]
        out.append(p[K])
        return tuple(out)

    def segments(self, i: str) -> int:
        return len(self.points[i]) - 1

    def sizes(self) -> Dict[str, int]:
        return {i: len(p) for i, p in self.points.items()}

    def locate(self, i: str, rho: float) -> int:
        """0-based segment holding ``rho``; left-closed, the last one closed."""
        p = self.points[i]
        k = bisect.bisect_right(p, rho) - 1
        return min(max(k, 0), len(p) - 2)

    def refine(self, rho_star: Mapping[str, float], min_gap: Optional[float] = None) -> "Discretization":
        return refine(self, rho_star, self.min_gap if min_gap is None else min_gap)

    def contains(self, other: "Discretization") -> bool:
        """True when every breakpoint of ``other`` is also one of ours."""
        return all(set(other.points[i]) <= set(self.points.get(i, ())) for i in other.points)

    def to_dict(self) -> dict:
        return {"min_gap": self.min_gap,
                "points": {i: list(p) for i, p in self.points.items()},
                "bar_points": {i: list(self.bar_points(i)) for i in self.points}}

    @classmethod
    def from_dict(cls, data: dict) -> "Discretization":
        return cls({i: tuple(p) for i, p in data["points"].items()}, data.get("min_gap", DEFAULT_MIN_GAP))


def initial_discretization(instance: Instance, min_gap: float = DEFAULT_MIN_GAP,
                           interior: Sequence[float] = INITIAL_INTERIOR) -> Discretization:
    top = instance.rho_max
    inner = tuple(v for v in interior if 0.0 < v < top)
    return Discretization({i: (0.0, *inner, top) for i in instance.candidates}, min_gap)


def uniform_grid(instance: Instance, unit: float, min_gap: float = DEFAULT_MIN_GAP,
                 candidates: Optional[Iterable[str]] = None,
                 extra: Optional[Mapping[str, float]] = None) -> Discretization:
    """Grid with spacing ``unit`` below the cap; ``extra`` points are added
    unless they already coincide with a grid point."""
    if not 0 < unit < 1:
        raise DiscretizationError("unit must lie in (0, 1)")
    top = instance.rho_max
    steps = int(math.floor(top / unit + 1e-9))
    base = [round(k * unit, 12) for k in range(steps + 1)]
    base = [v for v in base if v < top - 1e-9] + [top]
    ids = list(instance.candidates) if candidates is None else list(candidates)
    pts = {}
    for i in ids:
        p = list(base)
        if extra and i in extra:
            r = min(max(float(extra[i]), 0.0), top)
            if min(abs(r - v) for v in p) > 1e-9:
                bisect.insort(p, r)
        pts[i] = tuple(p)
    return Discretization(pts, min_gap)


def refine(disc: Discretization, rho_star: Mapping[str, float], min_gap: float) -> Discretization:
    """Insert rho*, and the midpoints towards both ends of its segment, where
    each lies more than ``min_gap`` from every point kept so far."""
    new = dict(disc.points)
    for i, r in rho_star.items():
        if i not in new:
            continue
        p = list(new[i])
        r = min(max(float(r), 0.0), p[-1])
        k = disc.locate(i, r)
        lo, hi = p[k], p[k + 1]
        for cand in (r, 0.5 * (lo + r), 0.5 * (r + hi)):
            if all(abs(cand - v) > min_gap for v in p):
                bisect.insort(p, cand)
        new[i] = tuple(p)
    return Discretization(new, disc.min_gap)


def trivial_grid(instance: Instance, candidates: Iterable[str]) -> Dict[str, Tuple[float, ...]]:
    return {i: (0.0, instance.rho_max) for i in candidates}


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------

def fleet_upper_bound(instance: Instance, variant: ModelVariant = FULL) -> int:
    """Finite bound on the integer fleet size."""
    n_open = min(instance.max_vertiports, len(instance.candidates))
    tmax = max(instance.flight_time.values(), default=0.0)
    loaded = instance.total_demand / instance.pooling_size
    bound = math.ceil(n_open * queue_length(instance.rho_max) + 2.0 * tmax * loaded + 1e-9)
    if variant.apron_capacity:
        bound = min(bound, n_open * max(instance.apron_options))
    return max(int(bound), 0)


def _key(*parts) -> str:
    return ",".join(str(p) for p in parts)


@dataclass
class LinearizedModel:
    """A built MILP together with the maps back to plan variables."""

    kind: str
    instance: Instance
    discretization: Discretization
    variant: ModelVariant
    milp: MilpModel
    x: Dict[str, int]
    z: Dict[Tuple[str, int], int]
    y: Dict[Route, int]
    fleet: int
    rho: Dict[str, int]
    alpha: Dict[Route, int]
    psi: Dict[Tuple[str, str], int]
    phi: Dict[Tuple[str, str], int]
    theta: Dict[str, int]
    beta: Dict[Tuple[str, int], int] = field(default_factory=dict)
    pi: Dict[Tuple[str, int], int] = field(default_factory=dict)

    # -- gating intervals ------------------------------------------------
    def intervals(self, i: str) -> Tuple[float, ...]:
        if self.kind == CONSERVATIVE:
            return self.discretization.bar_points(i)
        return self.discretization.points[i]

    def theta_cuts(self, i: str):
        p = self.discretization.points[i]
        if self.kind == CONSERVATIVE:
            return [_secant_coefs(a, b) for a, b in zip(p, p[1:])]
        return [_tangent_coefs(a) for a in p[:-1]]

    def charge_pieces(self, i: str):
        p = self.discretization.points[i]
        if self.kind == CONSERVATIVE:
            return [_tangent_coefs(a) for a in p[:-1]]
        return [_secant_coefs(a, b) for a, b in zip(p, p[1:])]

    # -- solutions -------------------------------------------------------
    def to_plan(self, sol: MilpSolution) -> PlanSolution:
        if not sol.has_solution:
            raise ValueError(f"no solution to extract (status {sol.status})")
        v = sol.values
        inst = self.instance
        top = inst.rho_max

        def b(j):
            return int(round(v[j]))

        def c(j, hi=math.inf):
            return float(min(max(v[j], 0.0), hi))

        return PlanSolution(
            x={i: b(j) for i, j in self.x.items()},
            z={k: b(j) for k, j in self.z.items() if b(j)},
            y={k: b(j) for k, j in self.y.items() if b(j)},
            fleet_size=b(self.fleet),
            rho={i: c(j, top) for i, j in self.rho.items()},
            psi={k: c(j) for k, j in self.psi.items() if c(j) > 0},
            phi={k: c(j) for k, j in self.phi.items() if c(j) > 0},
            alpha={k: c(j, 1.0) for k, j in self.alpha.items() if c(j, 1.0) > 0},
            objective=sol.objective,
            status=sol.status,
            meta={"model": self.kind, "dual_bound": sol.dual_bound, "nodes": sol.nodes,
                  "seconds": sol.seconds},
        )

    def warm_start(self, plan: PlanSolution) -> Dict[str, float]:
        """Express ``plan`` in this model's variables.

        Segment indicators pick the interval holding each rho; theta takes
        the largest cut value, so a plan feasible for a coarser nested grid
        satisfies every row here.
        """
        names = self.milp.var_names
        a: Dict[str, float] = {}
        for i, j in self.x.items():
            a[names[j]] = plan.x.get(i, 0)
        for k, j in self.z.items():
            a[names[j]] = plan.z.get(k, 0)
        for k, j in self.y.items():
            a[names[j]] = plan.y.get(k, 0)
        a[names[self.fleet]] = plan.fleet_size
        for i, j in self.rho.items():
            a[names[j]] = plan.rho.get(i, 0.0)
        for tab, src in ((self.alpha, plan.alpha), (self.psi, plan.psi), (self.phi, plan.phi)):
            for k, j in tab.items():
                a[names[j]] = src.get(k, 0.0)
        for i, j in self.theta.items():
            r = plan.rho.get(i, 0.0)
            a[names[j]] = max(0.0, max(s * r + q for s, q in self.theta_cuts(i)))
        if self.beta:
            for i in self.rho:
                r = plan.rho.get(i, 0.0)
                bars = self.intervals(i)
                K = len(bars) - 1
                k_on = self._pick_segment(i, r, bars)
                for k in range(K):
                    on = 1 if k == k_on else 0
                    a[names[self.beta[i, k]]] = on
                    a[names[self.pi[i, k]]] = r * on
        return a

    def _pick_segment(self, i: str, r: float, bars: Sequence[float]) -> int:
        # among intervals holding r, prefer the one giving the most charging capacity
        pieces = self.charge_pieces(i)
        best, best_val = None, -math.inf
        for k in range(len(bars) - 1):
            if bars[k] - 1e-12 <= r <= bars[k + 1] + 1e-12:
                s, q = pieces[k]
                val = s * r + q
                if val > best_val:
                    best, best_val = k, val
        if best is None:
            best = min(range(len(bars) - 1), key=lambda k: min(abs(r - bars[k]), abs(r - bars[k + 1])))
        return best

    def cut_system(self) -> dict:
        """JSON-ready dump of breakpoints and the approximation rows."""
        m = self.milp
        rows = []
        for r, nm in enumerate(m.row_names):
            if nm.split("[")[0] in ("theta_cut", "charging", "gate_lo", "gate_hi", "one_segment",
                                    "pi_rho", "pi_beta", "pi_lo", "fleet"):
                rows.append({"name": nm, "sense": m.senses[r], "rhs": m.rhs[r],
                             "terms": {m.var_names[j]: float(a) for j, a in zip(m.row_idx[r], m.row_val[r])}})
        return {"model": self.kind, "discretization": self.discretization.to_dict(), "rows": rows}

    def dump_cuts(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.cut_system(), fh, indent=1)


def build_conservative(instance: Instance, discretization: Discretization, **options) -> LinearizedModel:
    return _build(CONSERVATIVE, instance, discretization, **options)


def build_relaxed(instance: Instance, discretization: Discretization, **options) -> LinearizedModel:
    return _build(RELAXED, instance, discretization, **options)


def _build(kind: str, inst: Instance, disc: Discretization, variant: ModelVariant = FULL,
           fix_x: Optional[Mapping[str, int]] = None, fix_y: Optional[Mapping[Route, int]] = None,
           name: Optional[str] = None) -> LinearizedModel:
    N = inst.candidate_ids
    H = inst.apron_options
    top = inst.rho_max
    for i in N:
        if i not in disc.points:
            raise DiscretizationError(f"no grid for candidate {i}")
        p = disc.points[i]
        if p[-1] >= 1.0:
            raise DiscretizationError(f"grid for {i} ends at {p[-1]}; it must end at the cap {top}")
        if abs(p[-1] - top) > 1e-12:
            raise DiscretizationError(f"grid for {i} ends at {p[-1]}, expected the cap {top}")

    m = MilpModel(name or f"{kind}-{inst.name or 'instance'}")
    routes = feasible_routes(inst, variant)
    pairs_used = sorted({(r[1], r[2]) for r in routes}, key=lambda k: (N.index(k[0]), N.index(k[1])))

    x = {i: m.add_var(f"x[{i}]", BINARY) for i in N}
    z = {(i, h): m.add_var(f"z[{_key(i, h)}]", BINARY) for i in N for h in H}
    y = {r: m.add_var(f"y[{_key(*r)}]", BINARY) for r in routes}
    fleet = m.add_var("fleet", INTEGER, 0, fleet_upper_bound(inst, variant), obj=inst.drone_daily_cost)
    rho = {i: m.add_var(f"rho[{i}]", CONTINUOUS, 0.0, top) for i in N}
    alpha = {}
    for r in routes:
        o, i, j, d = r
        cost = inst.demand[o, d] * (inst.courier_cost[o, i] + inst.courier_cost[d, j])
        alpha[r] = m.add_var(f"alpha[{_key(*r)}]", CONTINUOUS, 0.0, 1.0, obj=cost)
    psi = {k: m.add_var(f"psi[{_key(*k)}]", CONTINUOUS, 0.0, math.inf, obj=inst.flight_cost[k]) for k in pairs_used}
    phi = {(i, j): m.add_var(f"phi[{_key(i, j)}]", CONTINUOUS, 0.0, math.inf, obj=inst.flight_cost[i, j])
           for i in N for j in N if i != j}
    theta = {i: m.add_var(f"theta[{i}]", CONTINUOUS, 0.0, math.inf) for i in N}

    if fix_x is not None:
        for i in N:
            m.fix(x[i], int(fix_x.get(i, 0)))
    if fix_y is not None:
        for r in routes:
            m.fix(y[r], int(fix_y.get(r, 0)))

    # network design
    m.add_constr({x[i]: 1.0 for i in N}, LE, inst.max_vertiports, "max_vertiports")
    for i in N:
        m.add_constr([(z[i, h], 1.0) for h in H] + [(x[i], -1.0)], EQ, 0.0, f"apron_choice[{i}]")
    if variant.apron_capacity:
        m.add_constr([(z[i, h], float(h)) for i in N for h in H] + [(fleet, -1.0)], GE, 0.0, "apron_capacity")
    by_od: Dict[Tuple[str, str], list] = {}
    for r in routes:
        o, i, j, d = r
        m.add_constr({y[r]: 1.0, x[i]: -1.0}, LE, 0.0, f"route_open_i[{_key(*r)}]")
        if j != i:
            m.add_constr({y[r]: 1.0, x[j]: -1.0}, LE, 0.0, f"route_open_j[{_key(*r)}]")
        by_od.setdefault((o, d), []).append(r)
    for od, rs in by_od.items():
        m.add_constr({y[r]: 1.0 for r in rs}, LE, 1.0, f"single_allocation[{_key(*od)}]")

    # service level and demand
    for i in N:
        m.add_constr({rho[i]: 1.0, x[i]: -top}, LE, 0.0, f"service_cap[{i}]")
    m.add_constr({alpha[r]: inst.demand[r[0], r[3]] for r in routes}, GE,
                 inst.market_share * inst.total_demand, "market_share")
    for r in routes:
        i = r[1]
        m.add_constr({alpha[r]: 1.0, rho[i]: -1.0, y[r]: -1.0}, GE, -1.0, f"alpha_lo[{_key(*r)}]")
        m.add_constr({alpha[r]: 1.0, rho[i]: -1.0}, LE, 0.0, f"alpha_rho[{_key(*r)}]")
        m.add_constr({alpha[r]: 1.0, y[r]: -1.0}, LE, 0.0, f"alpha_y[{_key(*r)}]")

    # flows
    feeding: Dict[Tuple[str, str], list] = {}
    for r in routes:
        feeding.setdefault((r[1], r[2]), []).append(r)
    for k in pairs_used:
        terms = [(psi[k], 1.0)] + [(alpha[r], -inst.demand[r[0], r[3]] / inst.pooling_size) for r in feeding[k]]
        m.add_constr(terms, EQ, 0.0, f"transit_flow[{_key(*k)}]")
    for i in N:
        terms = []
        for (a, b), j in list(psi.items()) + list(phi.items()):
            if a == b:
                continue
            if b == i:
                terms.append((j, 1.0))
            if a == i:
                terms.append((j, -1.0))
        m.add_constr(terms, EQ, 0.0, f"flow_balance[{i}]")

    lm = LinearizedModel(kind, inst, disc, variant, m, x, z, y, fleet, rho, alpha, psi, phi, theta)

    # drones in queues
    for i in N:
        for k, (s, q) in enumerate(lm.theta_cuts(i)):
            m.add_constr({theta[i]: 1.0, rho[i]: -s}, GE, q, f"theta_cut[{_key(i, k)}]")
    travel = [(j, inst.flight_time[k]) for k, j in list(psi.items()) + list(phi.items())]
    m.add_constr([(theta[i], 1.0) for i in N] + travel + [(fleet, -1.0)], LE, 0.0, "fleet")

    # charging, with one active piece per candidate
    if variant.charging:
        for i in N:
            bars = lm.intervals(i)
            K = len(bars) - 1
            pieces = lm.charge_pieces(i)
            beta = [m.add_var(f"beta[{_key(i, k)}]", BINARY) for k in range(K)]
            pis = [m.add_var(f"pi[{_key(i, k)}]", CONTINUOUS, 0.0, 1.0) for k in range(K)]
            for k in range(K):
                lm.beta[i, k], lm.pi[i, k] = beta[k], pis[k]
            terms = []
            for (a, b), j in list(psi.items()) + list(phi.items()):
                if a == i:
                    terms.append((j, inst.charge_ratio * inst.flight_time[a, b]))
            for k, (s, q) in enumerate(pieces):
                terms += [(pis[k], -s), (beta[k], -q)]
            m.add_constr(terms, LE, 0.0, f"charging[{i}]")
            m.add_constr([(beta[k], bars[k]) for k in range(K)] + [(rho[i], -1.0)], LE, 0.0, f"gate_lo[{i}]")
            m.add_constr([(rho[i], 1.0)] + [(beta[k], -bars[k + 1]) for k in range(K)], LE, 0.0, f"gate_hi[{i}]")
            m.add_constr({b: 1.0 for b in beta}, EQ, 1.0, f"one_segment[{i}]")
            for k in range(K):
                m.add_constr({pis[k]: 1.0, rho[i]: -1.0}, LE, 0.0, f"pi_rho[{_key(i, k)}]")
                m.add_constr({pis[k]: 1.0, beta[k]: -1.0}, LE, 0.0, f"pi_beta[{_key(i, k)}]")
                m.add_constr({pis[k]: 1.0, rho[i]: -1.0, beta[k]: -1.0}, GE, -1.0, f"pi_lo[{_key(i, k)}]")

    # apron overflow
    if variant.overflow:
        coef = inst.overflow_coefficients()
        for i in N:
            m.add_constr([(rho[i], 1.0)] + [(z[i, h], -coef[h]) for h in H], LE, 0.0, f"overflow[{i}]")
    return lm
