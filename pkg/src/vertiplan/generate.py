"""Synthetic city instances: random demand points, heavy-tailed O-D rates,
busiest-pair selection and drone/courier cost calibration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .instance import Instance, InstanceError, euclidean
from .model import FULL, feasible_routes, flight_time_from_distance


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class DroneParameters:
    payload_kg: float = 12.0
    cruise_mps: float = 15.0
    range_km: float = 15.0
    price_cny: float = 130_800.0
    lifespan_years: float = 5.0
    flight_fare: float = 0.51    # CNY per km per kg
    courier_fare: float = 1.25   # CNY per km per kg
    service_range_km: float = 5.0
    market_share: float = 0.20
    demand_scale: float = 1.5
    overflow_cap: float = 0.05
    charge_ratio: float = 1.0
    detour: float = 1.4
    courier_mps: float = 5.0
    operating_minutes: float = 720.0  # 9:00 to 21:00

    @property
    def daily_cost(self) -> float:
        return round(self.price_cny / (self.lifespan_years * 365.0), 2)

    def flight_cost_per_trip(self, km: float) -> float:
        """Fare of one full-payload flight over ``km``."""
        return self.flight_fare * km * self.payload_kg


def default_parameters() -> DroneParameters:
    return DroneParameters()


@dataclass(frozen=True)
class GenConfig:
    side_km: float = 30.0
    n_points: int = 40
    n_candidates: int = 8
    n_od: int = 20
    max_vertiports: int = 4
    apron_options: Tuple[int, ...] = (2, 4, 6)
    pooling_size: float = 1.0
    rate_mu: float = -3.0
    rate_sigma: float = 1.0
    rand_low: float = 0.5
    rand_high: float = 1.5
    min_rate: float = 0.0  # pairs below this base rate are dropped; off by default
    seed: int = 0
    params: DroneParameters = field(default_factory=DroneParameters)
    name: str = ""

    def validate(self) -> None:
        if min(self.n_points, self.n_candidates, self.n_od, self.max_vertiports) < 1:
            raise GenerationError("counts must be positive")
        if self.n_candidates > self.n_points:
            raise GenerationError("cannot place more candidates than demand points")
        if self.n_od > self.n_points * (self.n_points - 1):
            raise GenerationError("more O-D pairs requested than ordered pairs exist")
        if self.side_km <= 0 or not 0 < self.rand_low <= self.rand_high:
            raise GenerationError("side_km and randomization range must be positive")


def generate(config: GenConfig) -> Instance:
    config.validate()
    p = config.params
    rng = np.random.default_rng(config.seed)
    n = config.n_points
    xy = rng.uniform(0.0, config.side_km, size=(n, 2))
    base = rng.lognormal(config.rate_mu, config.rate_sigma, size=(n, n))
    np.fill_diagonal(base, 0.0)
    if config.min_rate > 0:
        base[base < config.min_rate] = 0.0

    # busiest ordered pairs by round-trip demand; stable order breaks ties
    round_trip = base + base.T
    order = [(o, d) for o in range(n) for d in range(n) if o != d and base[o, d] > 0]
    order.sort(key=lambda od: -round_trip[od])
    chosen = order[: config.n_od]
    if len(chosen) < config.n_od:
        raise GenerationError("not enough O-D pairs with positive demand")

    u = rng.uniform(config.rand_low, config.rand_high, size=len(chosen))
    rates = {od: float(base[od] * p.demand_scale * f) for od, f in zip(chosen, u)}

    weight = np.zeros(n)
    for (o, d), v in rates.items():
        weight[o] += v
        weight[d] += v
    cand_idx = sorted(range(n), key=lambda k: (-weight[k], k))[: config.n_candidates]

    pid = [f"r{k}" for k in range(n)]
    points = {pid[k]: (float(xy[k, 0]), float(xy[k, 1])) for k in range(n)}
    cands = {f"v{k}": points[pid[k]] for k in cand_idx}
    demand = {(pid[o], pid[d]): v for (o, d), v in rates.items()}

    courier_dist, courier_time, courier_cost = {}, {}, {}
    for r, pr in points.items():
        for i, pc in cands.items():
            dist = euclidean(pr, pc) * p.detour
            courier_dist[r, i] = dist
            courier_time[r, i] = dist * 1000.0 / p.courier_mps / 60.0
            courier_cost[r, i] = p.courier_fare * dist * p.operating_minutes
    flight_dist, flight_time, flight_cost = {}, {}, {}
    for i, pi in cands.items():
        for j, pj in cands.items():
            dist = euclidean(pi, pj)
            flight_dist[i, j] = dist
            flight_time[i, j] = flight_time_from_distance(dist, p.cruise_mps)
            flight_cost[i, j] = p.flight_cost_per_trip(dist) * p.operating_minutes

    try:
        inst = Instance(
            demand_points=points, candidates=cands, demand=demand,
            courier_dist=courier_dist, flight_dist=flight_dist,
            max_vertiports=config.max_vertiports, apron_options=config.apron_options,
            market_share=p.market_share, pooling_size=config.pooling_size,
            payload_capacity=p.payload_kg, service_range_km=p.service_range_km,
            flight_range_km=p.range_km, flight_time=flight_time, courier_time=courier_time,
            drone_daily_cost=p.daily_cost, flight_cost=flight_cost, courier_cost=courier_cost,
            charge_ratio=p.charge_ratio, overflow_cap=p.overflow_cap,
            operating_minutes=p.operating_minutes,
            name=config.name or f"gen-{config.n_od}-{config.n_candidates}-{config.max_vertiports}-s{config.seed}",
            meta={"generator": _config_dict(config)},
        )
    except InstanceError as exc:
        raise GenerationError(str(exc)) from exc

    routes = feasible_routes(inst, FULL)
    if not routes:
        raise GenerationError("no O-D pair can be served by any vertiport pair")
    coverable = sum(inst.demand[od] for od in {(r[0], r[3]) for r in routes})
    if coverable * inst.rho_max < inst.market_share * inst.total_demand:
        raise GenerationError("servable demand is below the market-share target")
    return inst


def generate_feasible(config: GenConfig, attempts: int = 50) -> Instance:
    """Advance the seed until generation succeeds."""
    last: Optional[Exception] = None
    for k in range(attempts):
        try:
            return generate(replace(config, seed=config.seed + k))
        except GenerationError as exc:
            last = exc
    raise GenerationError(f"no valid instance in {attempts} seeds from {config.seed}: {last}")


def _config_dict(config: GenConfig) -> Dict[str, object]:
    d = asdict(config)
    d["apron_options"] = list(config.apron_options)
    return d


def tiny_config(seed: int, **kw) -> GenConfig:
    """Fixture size accepted by the brute-force oracle."""
    base = dict(side_km=10.0, n_points=8, n_candidates=4, n_od=8, max_vertiports=3,
                apron_options=(2, 4, 6), seed=seed)
    base.update(kw)
    return GenConfig(**base)


def medium_config(seed: int, **kw) -> GenConfig:
    base = dict(side_km=16.0, n_points=20, n_candidates=8, n_od=20, max_vertiports=4,
                apron_options=(2, 4, 6), seed=seed)
    base.update(kw)
    return GenConfig(**base)

