"""Simulation checks for the queueing formulas.

Vertiport queues are simulated customer by customer with the Lindley
recursion, vectorized as a reflected random walk; the number in system is
then recovered by sweeping the merged arrival/departure times.  Travel legs
are infinite-server queues.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .instance import Instance
from .model import PlanSolution, queue_length

MAX_STATE = 50
BATCHES = 20


@dataclass(frozen=True)
class SimConfig:
    arrival_rate: float
    rho: float
    aprons: int = 2
    horizon: int = 1_000_000  # arrivals
    warmup: float = 0.1
    seed: int = 0
    service: str = "exponential"  # or "erlang"
    erlang_stages: int = 1

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"traffic intensity must lie in (0, 1), got {self.rho}")
        if self.arrival_rate <= 0:
            raise ValueError("arrival rate must be positive")
        if self.horizon < 10_000:
            raise ValueError("horizon must be at least 10^4 arrivals")
        if not 0 <= self.warmup < 1:
            raise ValueError("warmup must lie in [0, 1)")
        if self.service not in ("exponential", "erlang") or self.erlang_stages < 1:
            raise ValueError("service must be 'exponential' or 'erlang' with >= 1 stages")

    @property
    def service_rate(self) -> float:
        return self.arrival_rate / self.rho


@dataclass
class SimReport:
    mean_queue_length: float
    std_error: float
    distribution: List[float]  # time fraction with n in system, n = 0..MAX_STATE
    tail_mass: float           # time fraction with more than MAX_STATE
    overflow_gt: float         # fraction of time with N > aprons
    overflow_ge: float         # fraction of time with N >= aprons
    observed_time: float
    config: SimConfig

    def tv_distance_geometric(self) -> float:
        """Total variation distance to (1 - rho) rho^n, tail included."""
        r = self.config.rho
        geo = [(1 - r) * r ** n for n in range(len(self.distribution))]
        diff = sum(abs(a - b) for a, b in zip(self.distribution, geo))
        diff += abs(self.tail_mass - r ** len(self.distribution))
        return 0.5 * diff

    def to_dict(self) -> dict:
        d = asdict(self)
        d["analytic_mean"] = queue_length(self.config.rho)
        d["tv_distance_geometric"] = self.tv_distance_geometric()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _reflected_walk(steps: np.ndarray) -> np.ndarray:
    """W_0 = 0, W_k = max(W_{k-1} + steps_k, 0), without a Python loop."""
    s = np.concatenate(([0.0], np.cumsum(steps)))
    return s - np.minimum.accumulate(np.minimum(s, 0.0))


def _occupancy(arrivals: np.ndarray, departures: np.ndarray, t0: float, t1: float):
    """Time spent at each occupancy level on [t0, t1], from event times."""
    times = np.concatenate((arrivals, departures))
    delta = np.concatenate((np.ones(len(arrivals), dtype=np.int64), -np.ones(len(departures), dtype=np.int64)))
    order = np.argsort(times, kind="stable")
    times, delta = times[order], delta[order]
    level = np.cumsum(delta)
    # level[k] holds on [times[k], times[k+1])
    start = np.clip(times, t0, t1)
    end = np.clip(np.append(times[1:], t1), t0, t1)
    return level, end - start


def _batch_se(level: np.ndarray, dt: np.ndarray, starts: np.ndarray, t0: float, t1: float) -> float:
    edges = np.linspace(t0, t1, BATCHES + 1)
    means = []
    for a, b in zip(edges, edges[1:]):
        w = np.clip(np.minimum(starts + dt, b) - np.maximum(starts, a), 0.0, None)
        means.append(float(np.dot(level, w) / (b - a)))
    return float(np.std(means, ddof=1) / math.sqrt(BATCHES))


def simulate_vertiport_queue(config: SimConfig) -> SimReport:
    """Single-server queue with Poisson arrivals; time-averaged statistics
    after discarding the warm-up share of the horizon."""
    rng = np.random.default_rng(config.seed)
    n = config.horizon
    gaps = rng.exponential(1.0 / config.arrival_rate, size=n)
    if config.service == "exponential":
        service = rng.exponential(1.0 / config.service_rate, size=n)
    else:
        k = config.erlang_stages
        service = rng.gamma(k, 1.0 / (k * config.service_rate), size=n)
    arrivals = np.cumsum(gaps)
    wait = _reflected_walk(service[:-1] - gaps[1:])
    departures = arrivals + wait + service
    t0 = float(arrivals[int(config.warmup * n)])
    t1 = float(arrivals[-1])
    level, dt = _occupancy(arrivals, departures, t0, t1)
    span = t1 - t0
    counts = np.bincount(np.minimum(level, MAX_STATE + 1), weights=dt, minlength=MAX_STATE + 2) / span
    starts = np.clip(np.sort(np.concatenate((arrivals, departures)), kind="stable"), t0, t1)
    h = config.aprons
    return SimReport(
        mean_queue_length=float(np.dot(level, dt) / span),
        std_error=_batch_se(level, dt, starts, t0, t1),
        distribution=[float(v) for v in counts[: MAX_STATE + 1]],
        tail_mass=float(counts[MAX_STATE + 1]),
        overflow_gt=float(dt[level > h].sum() / span),
        overflow_ge=float(dt[level >= h].sum() / span),
        observed_time=span,
        config=config,
    )


@dataclass(frozen=True)
class ServiceDist:
    kind: str  # "deterministic" or "exponential"
    mean: float

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(n, self.mean)
        if self.kind == "exponential":
            return rng.exponential(self.mean, size=n)
        raise ValueError(f"unknown service distribution {self.kind!r}")


@dataclass
class TravelReport:
    mean_occupancy: float
    std_error: float
    analytic: float


def simulate_travel_queue(rate: float, service: ServiceDist, horizon: int = 1_000_000, seed: int = 0,
                          warmup: float = 0.1) -> TravelReport:
    """Infinite-server queue; the analytic value is rate times mean service."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if rate == 0:
        return TravelReport(0.0, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / rate, size=horizon))
    departures = arrivals + service.sample(rng, horizon)
    t0 = max(float(arrivals[int(warmup * horizon)]), float(service.mean) * 5)
    t1 = float(arrivals[-1])
    level, dt = _occupancy(arrivals, departures, t0, t1)
    starts = np.clip(np.sort(np.concatenate((arrivals, departures)), kind="stable"), t0, t1)
    return TravelReport(float(np.dot(level, dt) / (t1 - t0)), _batch_se(level, dt, starts, t0, t1),
                        rate * service.mean)


@dataclass
class QueueDeviation:
    kind: str  # "vertiport" or "travel"
    key: str
    analytic: float
    simulated: float
    std_error: float

    @property
    def deviation(self) -> float:
        return self.simulated - self.analytic


@dataclass
class QueueValidation:
    queues: List[QueueDeviation]
    fleet_size: int
    analytic_total: float
    simulated_total: float
    std_error: float
    slack: float

    @property
    def relative_deviation(self) -> float:
        if self.analytic_total == 0:
            return abs(self.simulated_total)
        return abs(self.simulated_total - self.analytic_total) / self.analytic_total

    @property
    def within_fleet(self) -> bool:
        return self.simulated_total <= self.fleet_size + self.slack

    def to_dict(self) -> dict:
        return {
            "fleet_size": self.fleet_size,
            "analytic_total": self.analytic_total,
            "simulated_total": self.simulated_total,
            "std_error": self.std_error,
            "relative_deviation": self.relative_deviation,
            "within_fleet": self.within_fleet,
            "queues": [{**asdict(q), "deviation": q.deviation} for q in self.queues],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def validate_solution_queues(instance: Instance, solution: PlanSolution, horizon: int = 1_000_000,
                             seed: int = 0, slack_se: float = 3.0) -> QueueValidation:
    """Simulate every vertiport and travel queue of a plan and compare the
    total drone count with the fleet size.

    Each queue gets its own child stream of ``seed``.  ``slack_se`` standard
    errors are allowed on top of the fleet size.
    """
    N = instance.candidate_ids
    flows: Dict[Tuple[str, str], float] = {}
    for table in (solution.psi, solution.phi):
        for k, v in table.items():
            flows[k] = flows.get(k, 0.0) + v
    queues: List[QueueDeviation] = []
    streams = iter(np.random.SeedSequence(seed).spawn(len(N) + len(flows)))
    for i in N:
        stream = next(streams)
        rho = solution.rho.get(i, 0.0)
        lam = sum(v for (a, b), v in flows.items() if b == i)
        if rho <= 0:
            queues.append(QueueDeviation("vertiport", i, 0.0, 0.0, 0.0))
            continue
        if lam <= 0:
            # no traffic to drive a simulation; the analytic count stands in
            queues.append(QueueDeviation("vertiport", i, queue_length(rho), queue_length(rho), 0.0))
            continue
        rep = simulate_vertiport_queue(SimConfig(lam, rho, horizon=horizon,
                                                 seed=int(stream.generate_state(1)[0])))
        queues.append(QueueDeviation("vertiport", i, queue_length(rho), rep.mean_queue_length, rep.std_error))
    for (a, b), v in sorted(flows.items()):
        stream = next(streams)
        if v <= 0:
            continue
        t = instance.flight_time[a, b]
        rep = simulate_travel_queue(v, ServiceDist("deterministic", t), horizon,
                                    int(stream.generate_state(1)[0]))
        queues.append(QueueDeviation("travel", f"{a}->{b}", rep.analytic, rep.mean_occupancy, rep.std_error))
    analytic = sum(q.analytic for q in queues)
    simulated = sum(q.simulated for q in queues)
    se = math.sqrt(sum(q.std_error ** 2 for q in queues))
    return QueueValidation(queues, solution.fleet_size, analytic, simulated, se, slack_se * se)
