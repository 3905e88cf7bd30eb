from dataclasses import replace

import numpy as np
import pytest

from platoon_mpc.analysis import constraint_violations
from platoon_mpc.costfn import ConstraintSpec
from platoon_mpc.dynamics import VehicleParams, discretize_vehicle
from platoon_mpc.errors import ScenarioError
from platoon_mpc.reference import constant_distances
from platoon_mpc.sim import (Event, InitialState, NoiseSpec, Scenario, human_control,
                             initial_conditions, run_scenario, target_velocity)


def test_default_initial_positions(vehicles):
    x0 = initial_conditions(Scenario(vehicles))
    np.testing.assert_allclose(x0.positions, [0.0, -12.0, -24.0, -36.0, -48.0])
    np.testing.assert_array_equal(x0.x[5:], 0.0)


def test_explicit_initial_state_echoed(vehicles):
    init = InitialState((0.0, -20.0, -40.0, -60.0, -80.0), (1.0, 2.0, 3.0, 4.0, 5.0))
    x0 = initial_conditions(Scenario(vehicles, initial=init))
    np.testing.assert_array_equal(x0.positions, init.positions)
    np.testing.assert_array_equal(x0.velocities, init.velocities)


def test_overlapping_initial_positions_rejected(vehicles):
    init = InitialState((0.0, -1.0, -20.0, -40.0, -60.0))
    with pytest.raises(ScenarioError, match="vehicles 1 and 2"):
        initial_conditions(Scenario(vehicles, initial=init))


def test_validation_messages(vehicles):
    with pytest.raises(ScenarioError, match="events\\[0\\].vehicle"):
        Scenario(vehicles, events=(Event(10.0, "release", 9),)).validate()
    with pytest.raises(ScenarioError, match="not a multiple"):
        Scenario(vehicles, events=(Event(10.25, "takeover", 1, ((10.25, 0.0),)),)).validate()
    with pytest.raises(ScenarioError, match="was not taken over"):
        Scenario(vehicles, events=(Event(10.0, "release", 2),)).validate()
    with pytest.raises(ScenarioError, match="profile"):
        Scenario(vehicles, events=(Event(10.0, "takeover", 2),)).validate()
    with pytest.raises(ScenarioError, match="headway"):
        Scenario(vehicles, events=(Event(10.0, "set_headway", 2, headway=-1.0),)).validate()


def test_target_velocity_profile():
    profile = ((100.0, 0.0), (150.0, 11.0))
    assert target_velocity(profile, 90.0) == 0.0
    assert target_velocity(profile, 120.0) == 0.0
    assert target_velocity(profile, 150.0) == 11.0


def test_human_control_respects_limits():
    veh = discretize_vehicle(0.3, 0.5)
    spec = ConstraintSpec()
    assert human_control(veh, [0.0, 20.0, 0.0], 0.0, 0.0, spec, 1.0) == -6.0
    assert human_control(veh, [0.0, 5.0, 0.0], 0.0, 11.0, spec, 1.0) == 3.0
    u = human_control(veh, [0.0, 0.3, 0.0], 0.0, 0.0, spec, 1.0)
    assert 0.3 + veh.b_vec[1] * u >= -1e-12


def _equilibrium(vehicles, duration=30.0, **kw):
    h = np.array([v.headway for v in vehicles])
    gaps = (constant_distances(vehicles) + h * 27.78)[1:]
    pos = tuple(-np.concatenate([[0.0], np.cumsum(gaps)]))
    init = InitialState(pos, (27.78,) * len(vehicles), (0.0,) * len(vehicles))
    return Scenario(vehicles, duration=duration, horizon=10, initial=init, **kw)


def test_equilibrium_run_stays_on_reference(vehicles):
    tel = run_scenario(_equilibrium(vehicles))
    assert len(tel) == 61
    np.testing.assert_allclose(tel.velocities, 27.78, atol=1e-6)
    assert all(s == "optimal" for s in tel.status)
    assert sum(constraint_violations(tel, _equilibrium(vehicles)).values()) == 0


def test_noise_is_seeded(vehicles):
    sc = _equilibrium(vehicles, 5.0, noise=NoiseSpec(3, (0.01,) * 5))
    a, b = run_scenario(sc), run_scenario(sc)
    np.testing.assert_array_equal(a.array("x"), b.array("x"))
    c = run_scenario(replace(sc, noise=NoiseSpec(4, (0.01,) * 5)))
    assert not np.array_equal(a.array("x"), c.array("x"))
    # noise enters only through the accelerations
    assert np.all(np.isfinite(a.array("predicted_next")))


def test_takeover_run_records_mask():
    veh = tuple(VehicleParams(t) for t in (0.5, 0.3, 0.4))
    ev = (Event(5.0, "takeover", 2, ((5.0, 0.0),)), Event(10.0, "release", 2))
    tel = run_scenario(Scenario(veh, duration=15.0, horizon=8, events=ev))
    assert tel.human_mask[9] == (False, False, False)
    assert tel.human_mask[10] == (False, True, False)
    assert tel.human_mask[20] == (False, False, False)
    assert tel.gaps.min() >= 2.0 - 1e-6
    # the driver brakes as hard as the limits allow
    assert tel.array("u")[10, 1] < 0
