import math

import pytest

from helpers import fixtures, two_hub_instance
from vertiplan.adaptive import (BoundsTrace, ConfigError, SolverConfig, iteration_bounds, neighborhood_grid,
                                neighborhood_search, relative_gap, solve_exact, solve_static)
from vertiplan.linearize import build_conservative, initial_discretization
from vertiplan.milp import get_backend
from vertiplan.model import check_nonlinear_feasibility


@pytest.fixture(scope="module")
def runs():
    return [(inst, solve_exact(inst)) for inst in fixtures("tiny", 4)]


def test_bounds_are_monotone(runs):
    for _, res in runs:
        bounds = iteration_bounds(res.trace)
        ubs = [u for _, u, _ in bounds]
        lbs = [l for _, _, l in bounds]
        assert all(b <= a for a, b in zip(ubs, ubs[1:]))
        assert all(b >= a for a, b in zip(lbs, lbs[1:]))


def test_converges_and_certifies(runs):
    for inst, res in runs:
        assert res.status == "optimal"
        assert res.trace.gap <= 0.01
        sol = res.solution
        assert check_nonlinear_feasibility(inst, sol, 1e-8).ok
        assert sol.meta["lb"] <= sol.objective == res.trace.ub
        assert res.trace.iterations <= 10


def test_refined_grid_contains_incumbent_rho(runs):
    for inst, res in runs:
        if res.trace.iterations > 1:
            for i, r in res.solution.rho.items():
                if res.solution.x.get(i):
                    assert any(abs(p - r) < 1e-9 for p in res.discretization.points[i]) or \
                        min(abs(p - r) for p in res.discretization.points[i]) <= res.discretization.min_gap


def test_neighborhood_never_worse_than_conservative(runs):
    for _, res in runs:
        by_it = {}
        for r in res.trace.records:
            by_it.setdefault(r.iteration, {})[r.model] = r.objective
        for objs in by_it.values():
            if "MC" in objs and "MCN" in objs and math.isfinite(objs["MC"]):
                assert objs["MCN"] <= objs["MC"] * (1 + 1e-9)


def test_warm_starts_from_conservative_chain_are_valid(runs):
    for _, res in runs:
        chain = [e for e in res.trace.warm_starts if e.source == "conservative"]
        assert chain
        assert all(e.violations == 0 for e in chain)
        assert all(e.violations == 0 for e in res.trace.warm_starts if e.installed)


def test_neighborhood_grid_shape():
    inst = two_hub_instance()
    cfg = SolverConfig()
    g = neighborhood_grid(inst, {"h1": 1, "h2": 0}, {"h1": 0.123}, cfg)
    assert g.points["h2"] == (0.0, inst.rho_max)
    assert 0.123 in g.points["h1"]
    assert len(g.points["h1"]) > 15


def test_neighborhood_search_improves_on_start():
    inst = two_hub_instance()
    disc = initial_discretization(inst)
    mc = build_conservative(inst, disc)
    plan = mc.to_plan(get_backend("highs").solve(mc.milp))
    better, _ = neighborhood_search(inst, plan.x, plan.rho, warm_start=plan)
    assert better.objective <= plan.objective * (1 + 1e-9)
    assert better.x == plan.x


def test_trace_csv_round_trip(tmp_path, runs):
    trace = runs[0][1].trace
    path = tmp_path / "t.trace.csv"
    trace.write_csv(path)
    back = BoundsTrace.read_csv(path)
    assert [(r.iteration, r.model) for r in back.records] == [(r.iteration, r.model) for r in trace.records]
    for a, b in zip(back.records, trace.records):
        for f in ("objective", "ub", "lb"):
            x, y = getattr(a, f), getattr(b, f)
            assert (math.isinf(x) and math.isinf(y)) or x == pytest.approx(y, rel=1e-9)


def test_iteration_limit_and_config_guards():
    inst = fixtures("tiny", 1)[0]
    res = solve_exact(inst, SolverConfig(eps=1e-6, max_iterations=1))
    assert res.status in ("iteration_limit", "optimal")
    assert res.trace.iterations == 1
    for bad in (dict(eps=0), dict(eps=1.5), dict(time_limit_s=0), dict(max_iterations=0), dict(min_gap=1.0)):
        with pytest.raises(ConfigError):
            SolverConfig(**bad)


def test_static_grid_sandwich():
    inst = fixtures("tiny", 1)[0]
    exact = solve_exact(inst).solution.objective
    for unit in (0.2, 0.1):
        s = solve_static(inst, unit)
        assert s.relaxed_bound <= exact * (1 + 1e-9)
        assert s.conservative_objective >= s.relaxed_bound * (1 - 1e-9)


def test_relative_gap_cases():
    assert relative_gap(110, 100) == pytest.approx(0.1)
    assert relative_gap(math.inf, 1) == math.inf
    assert relative_gap(0.0, 0.0) == 0.0
    assert relative_gap(90, 100) == 0.0
