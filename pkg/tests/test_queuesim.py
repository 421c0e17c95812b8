import json
import math

import numpy as np
import pytest

from helpers import fixtures
from vertiplan.adaptive import solve_exact
from vertiplan.model import PlanSolution, queue_length
from vertiplan.queuesim import (ServiceDist, SimConfig, simulate_travel_queue, simulate_vertiport_queue,
                                validate_solution_queues)


@pytest.fixture(scope="module")
def half():
    return simulate_vertiport_queue(SimConfig(arrival_rate=1.0, rho=0.5))


def test_mean_queue_length_at_half_load(half):
    assert abs(half.mean_queue_length - 1.0) <= 0.03


def test_tail_probabilities_at_half_load(half):
    assert abs(half.overflow_ge - 0.25) <= 0.01
    assert abs(half.overflow_gt - 0.125) <= 0.01
    assert half.tv_distance_geometric() <= 0.01
    assert sum(half.distribution) + half.tail_mass == pytest.approx(1.0)


def test_light_load():
    rep = simulate_vertiport_queue(SimConfig(arrival_rate=0.3, rho=0.05))
    assert rep.mean_queue_length == pytest.approx(queue_length(0.05), rel=0.05)


def test_reproducible_and_seed_sensitive():
    a = simulate_vertiport_queue(SimConfig(1.0, 0.6, horizon=50_000, seed=4))
    b = simulate_vertiport_queue(SimConfig(1.0, 0.6, horizon=50_000, seed=4))
    c = simulate_vertiport_queue(SimConfig(1.0, 0.6, horizon=50_000, seed=5))
    assert a.to_json() == b.to_json()
    assert a.mean_queue_length != c.mean_queue_length
    assert json.loads(a.to_json())["analytic_mean"] == pytest.approx(1.5)


def test_erlang_service_follows_pollaczek_khinchine():
    # Erlang-k service: L = rho + rho^2 (1 + 1/k) / (2 (1 - rho))
    rho, k = 0.5, 4
    rep = simulate_vertiport_queue(SimConfig(1.0, rho, service="erlang", erlang_stages=k))
    want = rho + rho * rho * (1 + 1 / k) / (2 * (1 - rho))
    assert rep.mean_queue_length == pytest.approx(want, rel=0.03)


@pytest.mark.parametrize("bad", [dict(rho=1.0), dict(rho=0.0), dict(horizon=100), dict(arrival_rate=0.0),
                                 dict(service="uniform"), dict(warmup=1.0)])
def test_config_guards(bad):
    with pytest.raises(ValueError):
        SimConfig(**{"arrival_rate": 1.0, "rho": 0.5, **bad})


def test_standard_error_shrinks_with_horizon():
    def mean_se(h):
        return np.mean([simulate_vertiport_queue(SimConfig(1.0, 0.5, horizon=h, seed=s)).std_error
                        for s in range(10)])
    ratio = mean_se(400_000) / mean_se(200_000)
    assert ratio == pytest.approx(1 / math.sqrt(2), abs=0.12)


def test_travel_queue_littles_law():
    det = simulate_travel_queue(2.0, ServiceDist("deterministic", 3.0))
    exp = simulate_travel_queue(2.0, ServiceDist("exponential", 3.0), seed=1)
    assert det.analytic == 6.0
    assert det.mean_occupancy == pytest.approx(6.0, rel=0.03)
    assert abs(det.mean_occupancy - exp.mean_occupancy) <= 3 * math.hypot(det.std_error, exp.std_error) + 0.02
    assert simulate_travel_queue(0.0, ServiceDist("deterministic", 3.0)).mean_occupancy == 0.0
    with pytest.raises(ValueError):
        simulate_travel_queue(-1.0, ServiceDist("deterministic", 3.0))


def test_plan_queues_against_fleet():
    inst = fixtures("tiny", 1)[0]
    sol = solve_exact(inst).solution
    rep = validate_solution_queues(inst, sol, horizon=1_000_000, seed=0)
    assert rep.relative_deviation <= 0.05
    assert rep.within_fleet
    assert {q.key for q in rep.queues if q.kind == "vertiport"} == set(inst.candidates)
    assert json.loads(rep.to_json())["fleet_size"] == sol.fleet_size


def test_empty_plan_has_empty_queues():
    inst = fixtures("tiny", 1)[0]
    rep = validate_solution_queues(inst, PlanSolution.zero(inst), horizon=10_000)
    assert all(q.simulated == 0.0 for q in rep.queues if q.kind == "vertiport")
    assert rep.simulated_total == 0.0
