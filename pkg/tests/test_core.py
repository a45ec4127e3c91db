import json

import numpy as np
import pytest

from mcast_twin.core import (
    ChannelParams,
    Scenario,
    ScenarioError,
    SchedulingDecision,
    SmgState,
    UserSpec,
    Video,
    VideoCatalog,
    validate_config,
)
from mcast_twin.scenarios import standard_scenario, tiny_scenario

from conftest import make_catalog, make_resources, make_smgs


def test_valid_toy_scenario_is_accepted():
    cat = make_catalog([[0.1, 0.2], [0.3]])
    smgs = make_smgs([[1e-9], [2e-9]])
    res = make_resources()
    out = validate_config(cat, smgs, res)
    assert out[0] is cat and out[2] is res and list(out[1]) == smgs


def test_probability_out_of_range_is_rejected():
    with pytest.raises(ScenarioError, match="probability out of range"):
        Video((1.2,), ((1.0,),))


def test_negative_size_is_rejected():
    with pytest.raises(ScenarioError, match="negative or zero size"):
        Video((0.1,), ((1.0, -0.5),))


def test_duplicate_membership_is_rejected():
    cat = make_catalog([[0.1], [0.2]])
    a = SmgState(0, ("u1", "u2"), (1.0, 1.0), (0.0, 0.0))
    b = SmgState(1, ("u2",), (1.0,), (0.0,), playhead=(1, 0))
    with pytest.raises(ScenarioError, match="duplicate membership"):
        validate_config(cat, [a, b], make_resources())


def test_empty_smg_is_rejected():
    with pytest.raises(ScenarioError, match="empty SMG"):
        SmgState(0, (), (), (0.0,))


def test_all_violations_reported_together():
    with pytest.raises(ScenarioError) as err:
        Video((1.5, -0.1), ((1.0,), (0.0,)))
    assert len(err.value.violations) >= 3


def test_nonpositive_resources_rejected():
    with pytest.raises(ScenarioError, match="bandwidth"):
        make_resources(bandwidth=0.0)


def test_wrong_buffer_count_is_rejected():
    cat = make_catalog([[0.1], [0.2]])
    a = SmgState(0, ("u1",), (1.0,), (0.0,))  # SMG 0 of 2 needs two buffers
    b = SmgState(1, ("u2",), (1.0,), (0.0,), playhead=(1, 0))
    with pytest.raises(ScenarioError, match="virtual buffers"):
        validate_config(cat, [a, b], make_resources())


def test_cumulative_size_and_segments_from():
    cat = make_catalog([[0.1, 0.2, 0.3], [0.4]], sizes=(1.0, 0.5, 0.25))
    assert cat.cumulative_size((0, 1), 2) == pytest.approx(1.5)
    assert cat.cumulative_size((0, 1), 3) == pytest.approx(1.75)
    assert cat.segments_from((0, 1)) == [(0, 1), (0, 2), (1, 0)]


def test_one_hot_round_trip():
    d = SchedulingDecision(((1, 3), (2,)), (0.5, 0.5))
    sel = d.one_hot(3)
    assert (sel[0] == np.array([[1, 0, 0], [0, 0, 1]])).all()
    assert SchedulingDecision.from_one_hot(sel, d.betas) == d


def test_one_hot_requires_exactly_one_version():
    with pytest.raises(ScenarioError, match="exactly one version"):
        SchedulingDecision.from_one_hot([np.array([[1, 1]])], (1.0,))


def test_decision_violations():
    d = SchedulingDecision(((1, 5),), (0.7,))
    assert any("outside 1..4" in v for v in d.violations(4))
    d = SchedulingDecision(((1,), (1,)), (0.7, 0.4))
    assert any("sum to" in v for v in d.violations(4))


@pytest.mark.parametrize("factory", [tiny_scenario, standard_scenario])
def test_scenario_json_round_trip_is_lossless(factory, tmp_path):
    sc = factory(3)
    again = Scenario.from_json(sc.to_json())
    assert again == sc
    path = tmp_path / "s.json"
    sc.save(path)
    assert Scenario.from_json(path.read_text()) == sc
    assert json.loads(sc.to_json()) == json.loads(again.to_json())


def test_scenario_requires_user_placement():
    cat = make_catalog([[0.1]])
    smgs = [SmgState(0, ("u1",), (1.0,), (0.0,))]
    with pytest.raises(ScenarioError, match="without placement"):
        Scenario(cat, smgs, make_resources(), (UserSpec("x", 10.0),), ChannelParams())
