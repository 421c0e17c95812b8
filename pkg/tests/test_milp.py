import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import enumerate_milp, random_small_milp
from vertiplan.milp import (BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel, ModelError, WarmStartError,
                            get_backend, solve, to_lp_string, validate_warm_start)


def test_integer_rounding_up():
    m = MilpModel()
    x = m.add_var("x", INTEGER, 0, 10, obj=1.0)
    m.add_constr({x: 1.0}, GE, 2.5)
    s = solve(m)
    assert s.status == "optimal"
    assert s.value("x") == 3.0 and s.objective == 3.0


def test_infeasible_lp():
    m = MilpModel()
    x = m.add_var("x", CONTINUOUS, 0, 1, obj=1.0)
    m.add_constr({x: 1.0}, GE, 2.0)
    assert solve(m).status == "infeasible"
    assert solve(m, backend="highs").status == "infeasible"


def test_knapsack_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(10):
        m = MilpModel("knapsack")
        w = rng.integers(1, 20, size=10)
        v = rng.integers(1, 30, size=10)
        xs = [m.add_var(f"x{k}", BINARY, obj=-float(v[k])) for k in range(10)]
        m.add_constr(list(zip(xs, w.astype(float))), LE, float(w.sum() // 2))
        assert solve(m).objective == pytest.approx(enumerate_milp(m), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_branch_and_bound_matches_enumeration(seed):
    m = random_small_milp(seed)
    want = enumerate_milp(m)
    got = solve(m)
    if math.isinf(want):
        assert got.status == "infeasible"
    else:
        assert got.status == "optimal"
        assert got.objective == pytest.approx(want, rel=1e-6, abs=1e-6)
        assert validate_warm_start(m, got.values).ok


def test_deterministic_repeat():
    for seed in range(5):
        m = random_small_milp(seed + 100)
        a, b = solve(m), solve(m)
        assert a.status == b.status and a.objective == b.objective
        if a.has_solution:
            assert np.array_equal(a.values, b.values)


def test_highs_agrees_with_branch_and_bound():
    for seed in range(20):
        m = random_small_milp(seed + 500)
        a, b = solve(m), solve(m, backend="highs")
        assert a.status in ("optimal", "infeasible") and b.status in ("optimal", "infeasible")
        assert (a.status == "infeasible") == (b.status == "infeasible")
        if a.has_solution:
            assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6)


def _cover_model():
    m = MilpModel("cover")
    xs = [m.add_var(f"x{k}", BINARY, obj=1.0 + k) for k in range(4)]
    m.add_constr({xs[0]: 1, xs[1]: 1}, GE, 1, "c01")
    m.add_constr({xs[1]: 1, xs[2]: 1}, GE, 1, "c12")
    m.add_constr({xs[2]: 1, xs[3]: 1}, GE, 1, "c23")
    return m


def test_warm_start_validation_names_violated_rows():
    m = _cover_model()
    good = {"x0": 1, "x1": 0, "x2": 1, "x3": 0}
    assert validate_warm_start(m, good).ok
    rep = validate_warm_start(m, {**good, "x2": 0})
    assert sorted(v.row for v in rep.violations) == ["c12", "c23"]
    assert not validate_warm_start(m, {}).ok
    assert validate_warm_start(m, {"x0": 1}).missing == ["x1", "x2", "x3"]
    assert validate_warm_start(m, {**good, "x1": 0.5}).integrality[0].row == "x1"
    with pytest.raises(WarmStartError):
        solve(m, warm_start={**good, "x2": 0})


def test_valid_warm_start_keeps_optimum():
    m = _cover_model()
    s = solve(m, warm_start={"x0": 1, "x1": 1, "x2": 1, "x3": 1})
    assert s.objective == pytest.approx(enumerate_milp(m))


def test_model_guards():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("n", INTEGER, 0, math.inf)
    with pytest.raises(ModelError):
        m.add_constr({5: 1.0}, LE, 0.0)
    with pytest.raises(ModelError):
        m.add_constr({0: 1.0}, "<", 0.0)
    with pytest.raises(ValueError):
        get_backend("cplex")


def test_lp_format_layout(tmp_path):
    m = MilpModel("demo")
    x = m.add_var("x[a,b]", BINARY, obj=2.0)
    n = m.add_var("n", INTEGER, 0, 5, obj=-1.0)
    y = m.add_var("y", CONTINUOUS, -math.inf, 3.0)
    m.add_constr({x: 1.0, n: 2.0, y: -1.0}, LE, 4.0, "cap")
    m.add_constr({n: 1.0}, EQ, 2.0, "fixn")
    text = to_lp_string(m)
    lines = text.splitlines()
    assert lines[1] == "Minimize"
    for head in ("Subject To", "Bounds", "Generals", "Binaries", "End"):
        assert head in lines
    assert " -inf <= y <= 3.0" in lines
    assert lines[lines.index("Binaries") + 1].strip() == "x(a,b)"
    assert lines[lines.index("Generals") + 1].strip() == "n"
    # the export reads back into HiGHS with the same optimum
    import highspy
    path = tmp_path / "demo.lp"
    path.write_text(text)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(solve(m).objective)


def test_exported_hub_model_reads_back(tmp_path):
    import highspy
    from helpers import two_hub_instance
    from vertiplan.linearize import build_conservative, initial_discretization

    inst = two_hub_instance()
    lm = build_conservative(inst, initial_discretization(inst))
    path = tmp_path / "hub.lp"
    path.write_text(to_lp_string(lm.milp))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(solve(lm.milp, backend="highs").objective, rel=1e-7)
