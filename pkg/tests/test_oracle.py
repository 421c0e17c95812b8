import pytest

from helpers import fixtures, make_instance, two_hub_instance
from vertiplan.adaptive import solve_exact
from vertiplan.model import check_nonlinear_feasibility
from vertiplan.oracle import OracleSizeError, solve_oracle


def test_zero_demand_is_free():
    inst = two_hub_instance().with_changes(demand={k: 0.0 for k in two_hub_instance().demand})
    res = solve_oracle(inst)
    assert res.status == "optimal" and res.objective == 0.0


def test_bound_below_objective_and_plan_feasible():
    for inst in fixtures("tiny", 2):
        res = solve_oracle(inst, grid_unit=0.02)
        assert res.status == "optimal"
        assert res.bound <= res.objective
        assert check_nonlinear_feasibility(inst, res.solution, 1e-7).ok


def test_oracle_agrees_with_adaptive_on_two_hub_case():
    inst = two_hub_instance()
    res = solve_oracle(inst)
    ex = solve_exact(inst).solution
    assert res.bound <= ex.objective * (1 + 1e-6)
    assert ex.meta["lb"] <= res.objective * (1 + 1e-6)


def test_size_limit():
    pts = {f"p{k}": (float(k), 0.0) for k in range(2)}
    cands = {f"h{k}": (float(k), 0.1) for k in range(5)}
    inst = make_instance(pts, cands, {("p0", "p1"): 0.1})
    with pytest.raises(OracleSizeError):
        solve_oracle(inst)
    with pytest.raises(ValueError):
        solve_oracle(two_hub_instance(), grid_unit=0.0)
