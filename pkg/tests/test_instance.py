import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from helpers import two_hub_instance
from vertiplan.instance import Instance, InstanceError, scale_instance


def test_json_round_trip_is_exact(tmp_path):
    inst = two_hub_instance()
    path = tmp_path / "inst.json"
    inst.save(path)
    back = Instance.load(path)
    assert back == inst
    assert back.dumps() == inst.dumps()


def test_schema_rejects_missing_field():
    data = two_hub_instance().to_dict()
    del data["demand"]
    with pytest.raises(InstanceError):
        Instance.from_dict(data)


@pytest.mark.parametrize("change", [
    {"market_share": 0.0},
    {"market_share": 1.5},
    {"apron_options": (4, 2)},
    {"pooling_size": 20.0},
    {"overflow_cap": 1.0},
    {"max_vertiports": 0},
    {"overflow_form": "other"},
])
def test_invalid_parameters_rejected(change):
    with pytest.raises(InstanceError):
        two_hub_instance(**change)


def test_negative_demand_rejected():
    inst = two_hub_instance()
    with pytest.raises(InstanceError):
        inst.with_changes(demand={**inst.demand, ("a", "c"): -1.0})


def test_missing_flight_entry_rejected():
    inst = two_hub_instance()
    ft = dict(inst.flight_time)
    del ft["h1", "h2"]
    with pytest.raises(InstanceError):
        inst.with_changes(flight_time=ft)


def test_scale_identity_and_zero():
    inst = two_hub_instance()
    assert scale_instance(inst, 1.0).demand == inst.demand
    with pytest.raises(ValueError):
        scale_instance(inst, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0))
def test_scaling_is_linear_in_market_share_threshold(factor):
    inst = two_hub_instance()
    scaled = inst.scaled(factor)
    lhs = scaled.market_share * scaled.total_demand
    assert lhs == pytest.approx(factor * inst.market_share * inst.total_demand, rel=1e-12)
    assert scaled.candidates == inst.candidates and scaled.flight_cost == inst.flight_cost


def test_restricted_keeps_only_chosen_candidates():
    inst = two_hub_instance()
    sub = inst.restricted(["h2"])
    assert list(sub.candidates) == ["h2"]
    assert all(k[1] == "h2" for k in sub.courier_dist)
    assert set(sub.flight_dist) == {("h2", "h2")}


def test_overflow_coefficients_literal_is_vacuous():
    inst = two_hub_instance()
    lit = inst.overflow_coefficients()
    direct = inst.with_changes(overflow_form="direct").overflow_coefficients()
    for h in inst.apron_options:
        assert lit[h] > 1.0
        assert direct[h] == pytest.approx(inst.overflow_cap ** (1.0 / h))


def test_od_pairs_skip_zero_rates():
    inst = two_hub_instance()
    inst2 = inst.with_changes(demand={**inst.demand, ("a", "d"): 0.0})
    assert ("a", "d") not in inst2.od_pairs
    assert math.isclose(inst2.total_demand, inst.total_demand)
