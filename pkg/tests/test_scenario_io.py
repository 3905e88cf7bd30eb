import json

import pytest
from hypothesis import given, settings, strategies as st

from platoon_mpc.errors import ScenarioError
from platoon_mpc.scenario_io import (BUNDLED, bundled_scenario, bundled_scenario_text,
                                     dumps_scenario, load_scenario, parse_scenario,
                                     scenario_from_dict, scenario_hash, scenario_to_dict)
from platoon_mpc.sim import InitialState, NoiseSpec


def test_bundled_study_scenario(study_scenario):
    sc = study_scenario
    assert sc.m == 5 and sc.dt == 0.5 and sc.duration == 400.0 and sc.horizon == 20
    assert [v.tau for v in sc.vehicles] == [0.5, 0.2, 0.3, 0.6, 0.4]
    assert [v.standstill for v in sc.vehicles] == [6.0, 6.0, 5.0, 8.0, 7.0]
    assert [v.headway for v in sc.vehicles] == [1.0, 1.3, 1.5, 0.8, 1.2]
    assert [e.kind for e in sc.events] == ["takeover", "release"] + ["set_headway"] * 4
    assert [e.headway for e in sc.events[2:]] == [3.0, 2.6, 4.0, 2.5]


@pytest.mark.parametrize("name", BUNDLED)
def test_round_trip_bundled(name):
    sc = bundled_scenario(name)
    again = parse_scenario(dumps_scenario(sc))
    assert again == sc
    assert dumps_scenario(again) == dumps_scenario(sc)
    assert scenario_hash(again) == scenario_hash(sc)
    # the packaged file itself is already in canonical form up to layout
    assert scenario_from_dict(json.loads(bundled_scenario_text(name))) == sc


@settings(max_examples=30, deadline=None)
@given(dt=st.sampled_from([0.1, 0.25, 0.5]), v_d=st.floats(1.0, 27.0),
       h=st.lists(st.floats(0.0, 4.0), min_size=1, max_size=4),
       var=st.floats(0.0, 1.0), seed=st.integers(0, 1000))
def test_round_trip_generated(dt, v_d, h, var, seed):
    m = len(h)
    data = {
        "vehicles": [{"tau": 0.3 + 0.1 * i, "headway": hi} for i, hi in enumerate(h)],
        "dt": dt, "duration_s": 20 * dt, "v_d": v_d,
        "initial": {"positions": [-20.0 * i for i in range(m)]},
        "noise": {"seed": seed, "covariance": [var] * m},
        "events": [{"time": 2 * dt, "kind": "set_headway", "vehicle": 1, "headway": 1.5}],
    }
    sc = scenario_from_dict(data)
    assert parse_scenario(dumps_scenario(sc)) == sc
    assert sc.initial == InitialState(tuple(-20.0 * i for i in range(m)))
    assert sc.noise == NoiseSpec(seed, (var,) * m)


def _study_dict():
    return scenario_to_dict(bundled_scenario())


@pytest.mark.parametrize("mutate,where", [
    (lambda d: d["vehicles"][1].__setitem__("headway", -1), "vehicles[1].headway"),
    (lambda d: d["vehicles"][0].__setitem__("tau", "fast"), "vehicles[0].tau"),
    (lambda d: d["vehicles"][0].__setitem__("mass", 1200), "vehicles[0]"),
    (lambda d: d.__setitem__("colour", "red"), "scenario"),
    (lambda d: d["weights"].__setitem__("r", 0), "weights.r"),
    (lambda d: d["constraints"].__setitem__("v_max", -1), "constraints"),
    (lambda d: d["events"][0].__setitem__("time", 100.3), "time 100.3"),
    (lambda d: d["events"][0].__setitem__("kind", "teleport"), "events[0].kind"),
    (lambda d: d["events"][0]["profile"].__setitem__(0, [1.0]), "events[0].profile[0]"),
    (lambda d: d.__setitem__("horizon", 0), "horizon"),
    (lambda d: d.__setitem__("vehicles", []), "vehicles"),
])
def test_errors_name_the_field(mutate, where):
    d = _study_dict()
    mutate(d)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(json.dumps(d), "case.json")
    assert where in str(info.value)
    assert str(info.value).startswith("case.json")


def test_syntax_error_has_line_and_column():
    with pytest.raises(ScenarioError, match=r"bad\.json:3:\d+: invalid JSON"):
        parse_scenario('{\n  "vehicles": [\n    ,]\n}', "bad.json")


def test_load_from_file_and_by_name(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(dumps_scenario(bundled_scenario()))
    assert load_scenario(path) == load_scenario("paper_study")
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "missing.json")
    with pytest.raises(ScenarioError, match="unknown bundled"):
        bundled_scenario("nope")
