"""Problem data for the vertiport network design problem.

An :class:`Instance` is immutable once built.  Pair-indexed parameters are
stored as plain dicts keyed by id tuples; the JSON layout stores them as
``[from, to, value]`` triples so that files stay diffable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, Tuple

import jsonschema

Pair = Tuple[str, str]
Coord = Tuple[float, float]

OVERFLOW_FORMS = ("literal", "direct")


class InstanceError(ValueError):
    """Raised when instance data violates its invariants."""


_TRIPLES = {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}}
_POINTS = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["id", "x", "y"],
        "properties": {"id": {"type": "string"}, "x": {"type": "number"}, "y": {"type": "number"}},
    },
}

INSTANCE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "vertiplan instance",
    "type": "object",
    "required": [
        "demand_points", "candidates", "demand", "courier_dist", "flight_dist",
        "max_vertiports", "apron_options", "market_share", "pooling_size",
        "payload_capacity", "service_range_km", "flight_range_km", "flight_time",
        "courier_time", "drone_daily_cost", "flight_cost", "courier_cost",
    ],
    "properties": {
        "name": {"type": "string"},
        "demand_points": _POINTS,
        "candidates": _POINTS,
        "demand": _TRIPLES,
        "courier_dist": _TRIPLES,
        "flight_dist": _TRIPLES,
        "flight_time": _TRIPLES,
        "courier_time": _TRIPLES,
        "flight_cost": _TRIPLES,
        "courier_cost": _TRIPLES,
        "max_vertiports": {"type": "integer", "minimum": 1},
        "apron_options": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "market_share": {"type": "number"},
        "pooling_size": {"type": "number"},
        "payload_capacity": {"type": "number"},
        "service_range_km": {"type": "number"},
        "flight_range_km": {"type": "number"},
        "drone_daily_cost": {"type": "number"},
        "charge_ratio": {"type": "number"},
        "overflow_cap": {"type": "number"},
        "service_level_cap": {"type": "number"},
        "overflow_form": {"enum": list(OVERFLOW_FORMS)},
        "operating_minutes": {"type": "number"},
    },
}

_PAIR_FIELDS = (
    "demand", "courier_dist", "flight_dist", "flight_time",
    "courier_time", "flight_cost", "courier_cost",
)


@dataclass(frozen=True)
class Instance:
    """Immutable problem data.

    Rates are in kg/min, distances in km, times in minutes.  Cost
    coefficients are expressed per unit of the quantity they multiply in the
    objective: ``flight_cost`` per unit flight rate, ``courier_cost`` per
    unit demand rate.  ``operating_minutes`` converts a served rate into a
    daily mass for the mean-cost metric (1.0 when costs are already per kg).
    """

    demand_points: Dict[str, Coord]
    candidates: Dict[str, Coord]
    demand: Dict[Pair, float]
    courier_dist: Dict[Pair, float]
    flight_dist: Dict[Pair, float]
    max_vertiports: int
    apron_options: Tuple[int, ...]
    market_share: float
    pooling_size: float
    payload_capacity: float
    service_range_km: float
    flight_range_km: float
    flight_time: Dict[Pair, float]
    courier_time: Dict[Pair, float]
    drone_daily_cost: float
    flight_cost: Dict[Pair, float]
    courier_cost: Dict[Pair, float]
    charge_ratio: float = 1.0
    overflow_cap: float = 0.05
    service_level_cap: float = 0.99
    overflow_form: str = "literal"
    operating_minutes: float = 1.0
    name: str = ""
    meta: Dict[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "apron_options", tuple(int(h) for h in self.apron_options))
        self.validate()

    # -- invariants -------------------------------------------------------
    def validate(self) -> None:
        R, N = self.demand_points, self.candidates
        if not N:
            raise InstanceError("no candidate vertiports")
        if self.max_vertiports < 1:
            raise InstanceError("max_vertiports must be positive")
        H = self.apron_options
        if not H or list(H) != sorted(set(H)) or H[0] < 1:
            raise InstanceError(f"apron_options must be non-empty, sorted, distinct positives: {H}")
        if not 0 < self.market_share <= 1:
            raise InstanceError("market_share must lie in (0, 1]")
        if not 0 < self.overflow_cap < 1:
            raise InstanceError("overflow_cap must lie in (0, 1)")
        if not 0 < self.service_level_cap < 1:
            raise InstanceError("service_level_cap must lie in (0, 1)")
        if self.pooling_size <= 0 or self.pooling_size > self.payload_capacity:
            raise InstanceError("need 0 < pooling_size <= payload_capacity")
        if self.service_range_km <= 0 or self.flight_range_km <= 0:
            raise InstanceError("ranges must be positive")
        if self.charge_ratio <= 0 or self.operating_minutes <= 0:
            raise InstanceError("charge_ratio and operating_minutes must be positive")
        if self.overflow_form not in OVERFLOW_FORMS:
            raise InstanceError(f"overflow_form must be one of {OVERFLOW_FORMS}")
        if self.drone_daily_cost < 0:
            raise InstanceError("drone_daily_cost must be non-negative")
        for (o, d), rate in self.demand.items():
            if o not in R or d not in R:
                raise InstanceError(f"demand pair ({o}, {d}) references unknown point")
            if not rate >= 0:
                raise InstanceError(f"negative demand on ({o}, {d})")
        for name in ("courier_dist", "courier_time", "courier_cost"):
            table = getattr(self, name)
            for r in R:
                for i in N:
                    v = table.get((r, i))
                    if v is None or not v >= 0:
                        raise InstanceError(f"{name}[{r},{i}] missing or negative")
        for name in ("flight_dist", "flight_time", "flight_cost"):
            table = getattr(self, name)
            for i in N:
                for j in N:
                    v = table.get((i, j))
                    if v is None or not v >= 0:
                        raise InstanceError(f"{name}[{i},{j}] missing or negative")
                    if name == "flight_time" and i != j and v <= 0:
                        raise InstanceError(f"flight_time[{i},{j}] must be positive")

    # -- derived data -----------------------------------------------------
    @cached_property
    def total_demand(self) -> float:
        return float(sum(self.demand.values()))

    @cached_property
    def od_pairs(self) -> Tuple[Pair, ...]:
        """O-D pairs carrying positive demand, in insertion order."""
        return tuple(p for p, v in self.demand.items() if v > 0)

    @property
    def candidate_ids(self) -> Tuple[str, ...]:
        return tuple(self.candidates)

    @property
    def rho_max(self) -> float:
        return self.service_level_cap

    def overflow_coefficients(self) -> Dict[int, float]:
        """Per-apron-count multiplier ``c_h`` such that (10c) reads rho <= c_h.

        ``literal`` divides the right-hand coefficient of the printed
        constraint by the left-hand one; ``direct`` is the root of the
        overflow probability cap.
        """
        g = self.overflow_cap
        if self.overflow_form == "direct":
            return {h: g ** (1.0 / h) for h in self.apron_options}
        return {h: g ** (1.0 / (h + 1)) / g ** (1.0 / h) for h in self.apron_options}

    def with_changes(self, **changes) -> "Instance":
        return replace(self, **changes)

    def restricted(self, candidates: Iterable[str]) -> "Instance":
        keep = [i for i in self.candidates if i in set(candidates)]
        ks = set(keep)
        return replace(
            self,
            candidates={i: self.candidates[i] for i in keep},
            courier_dist={k: v for k, v in self.courier_dist.items() if k[1] in ks},
            courier_time={k: v for k, v in self.courier_time.items() if k[1] in ks},
            courier_cost={k: v for k, v in self.courier_cost.items() if k[1] in ks},
            flight_dist={k: v for k, v in self.flight_dist.items() if k[0] in ks and k[1] in ks},
            flight_time={k: v for k, v in self.flight_time.items() if k[0] in ks and k[1] in ks},
            flight_cost={k: v for k, v in self.flight_cost.items() if k[0] in ks and k[1] in ks},
        )

    def scaled(self, factor: float) -> "Instance":
        return scale_instance(self, factor)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "demand_points": [{"id": k, "x": v[0], "y": v[1]} for k, v in self.demand_points.items()],
            "candidates": [{"id": k, "x": v[0], "y": v[1]} for k, v in self.candidates.items()],
        }
        for name in _PAIR_FIELDS:
            out[name] = [[a, b, v] for (a, b), v in getattr(self, name).items()]
        for name in (
            "max_vertiports", "market_share", "pooling_size", "payload_capacity",
            "service_range_km", "flight_range_km", "drone_daily_cost", "charge_ratio",
            "overflow_cap", "service_level_cap", "overflow_form", "operating_minutes",
        ):
            out[name] = getattr(self, name)
        out["apron_options"] = list(self.apron_options)
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        try:
            jsonschema.validate(data, INSTANCE_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise InstanceError(f"schema violation: {exc.message}") from exc
        kw = {k: v for k, v in data.items() if k not in _PAIR_FIELDS and k not in ("demand_points", "candidates")}
        kw["demand_points"] = {p["id"]: (float(p["x"]), float(p["y"])) for p in data["demand_points"]}
        kw["candidates"] = {p["id"]: (float(p["x"]), float(p["y"])) for p in data["candidates"]}
        for name in _PAIR_FIELDS:
            kw[name] = {(str(a), str(b)): float(v) for a, b, v in data[name]}
        kw["apron_options"] = tuple(data["apron_options"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise InstanceError(str(exc)) from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def scale_instance(instance: Instance, factor: float) -> Instance:
    """Multiply every demand rate by ``factor``; everything else unchanged."""
    if not (factor > 0 and math.isfinite(factor)):
        raise InstanceError(f"scale factor must be positive, got {factor}")
    return replace(instance, demand={k: v * factor for k, v in instance.demand.items()})


def euclidean(a: Coord, b: Coord) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
