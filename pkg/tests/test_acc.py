import numpy as np
import pytest

from ecoacc.config import AccConfig, MonitorConfig, PowertrainParams, VehicleParams
from ecoacc.core.acc import AccController, LightAhead, acc_command, gap_accel, safety_monitor, stop_accel
from ecoacc.core.signals import Phase
from ecoacc.core.vehicle import acceleration, advance, torque_for_accel

ACC = AccConfig()
VEHICLE = VehicleParams()
POWERTRAIN = PowertrainParams()


def command(v_ref, v, lead=None, light=None, config=ACC, **kwargs):
    return acc_command(v_ref, v, lead, light, config, VEHICLE, POWERTRAIN, **kwargs)


def test_tracking_at_reference_balances_resistance():
    result = command(12.0, 12.0, light=LightAhead(200.0, Phase.GREEN))
    assert result.branch == "track"
    assert result.accel == 0.0
    assert result.torque == pytest.approx(torque_for_accel(0.0, 12.0, 0.0, VEHICLE))


def test_stopped_lead_at_minimum_gap_brakes():
    result = command(14.0, 5.0, lead=(ACC.min_gap_m, 0.0))
    assert result.branch == "gap"
    assert result.torque <= 0.0
    assert result.accel == -ACC.emergency_decel


def test_red_light_stopping_kinematics():
    config = AccConfig(stop_line_tolerance_m=0.0)
    assert stop_accel(14.0, LightAhead(40.0, Phase.RED), config) == pytest.approx(-14.0**2 / 80.0)
    result = command(14.0, 14.0, light=LightAhead(40.0, Phase.RED), config=config)
    assert result.branch == "stop"
    assert result.accel == pytest.approx(-2.45)
    assert result.torque == pytest.approx(torque_for_accel(-2.45, 14.0, 0.0, VEHICLE))


def test_yellow_proceeds_when_stopping_is_too_harsh():
    assert stop_accel(14.0, LightAhead(10.0, Phase.YELLOW), ACC) is None
    assert stop_accel(14.0, LightAhead(80.0, Phase.YELLOW), ACC) is not None
    assert stop_accel(14.0, LightAhead(10.0, Phase.GREEN), ACC) is None


def test_red_light_at_stop_line_holds():
    result = command(10.0, 0.0, light=LightAhead(0.5, Phase.RED))
    assert result.branch == "hold"
    assert result.accel == -ACC.emergency_decel


def test_slow_approach_creeps_to_the_line():
    creep = stop_accel(0.5, LightAhead(30.0, Phase.RED), ACC)
    assert creep is not None and creep > 0


def test_gap_bound_matches_lead_speed_before_minimum_gap():
    accel = gap_accel(20.0, 40.0, 10.0, ACC)
    assert accel <= -(20.0**2 - 10.0**2) / (2.0 * (40.0 - ACC.min_gap_m))


def test_overrides_never_exceed_tracking():
    rng = np.random.default_rng(0)
    for _ in range(300):
        v = rng.uniform(0.0, 16.0)
        v_ref = rng.uniform(0.0, 16.0)
        lead = (rng.uniform(0.5, 80.0), rng.uniform(0.0, 16.0)) if rng.random() < 0.7 else None
        light = LightAhead(rng.uniform(0.0, 120.0), Phase(rng.choice(["red", "green", "yellow"])))
        tracking = command(v_ref, v)
        result = command(v_ref, v, lead=lead, light=light)
        if result.branch != "track":
            assert result.torque <= tracking.torque + 1e-9
            assert result.accel <= tracking.accel


def test_committed_yellow_is_not_reversed_by_red():
    controller = AccController(ACC, VEHICLE, POWERTRAIN)
    first = controller.step(14.0, 14.0, 0.2, light=LightAhead(10.0, Phase.YELLOW, 0))
    assert first.branch == "track"
    then = controller.step(14.0, 14.0, 0.2, light=LightAhead(7.2, Phase.RED, 0))
    assert then.branch == "track"
    assert then.accel >= 0.0
    # a new light clears the commitment
    later = controller.step(14.0, 14.0, 0.2, light=LightAhead(7.0, Phase.RED, 1))
    assert later.branch == "stop"


def test_integral_is_clamped_and_frozen_during_overrides():
    controller = AccController(ACC, VEHICLE, POWERTRAIN)
    for _ in range(50):
        controller.step(15.0, 5.0, 1.0)
    assert controller.integral == ACC.integral_limit
    controller.reset()
    controller.step(15.0, 5.0, 1.0, lead=(ACC.min_gap_m, 0.0))
    assert controller.integral == 0.0


def test_free_road_converges_to_reference():
    controller = AccController(ACC, VEHICLE, POWERTRAIN)
    v, dt = 11.0, 0.2
    for _ in range(int(30.0 / dt)):
        result = controller.step(12.0, v, dt, light=LightAhead(500.0, Phase.GREEN))
        v += float(acceleration(v, result.torque, 0.0, VEHICLE)) * dt
    assert v == pytest.approx(12.0, rel=0.01)


def test_lead_emergency_stop_from_two_second_headway():
    controller = AccController(ACC, VEHICLE, POWERTRAIN)
    dt, v, lead_v = 0.2, 14.0, 14.0
    ego, lead = 0.0, ACC.min_gap_m + 2.0 * 14.0
    smallest = lead - ego
    for _ in range(200):
        result = controller.step(14.0, v, dt, lead=(lead - ego, lead_v))
        ego, v = advance(ego, v, result.accel, dt)
        lead, lead_v = advance(lead, lead_v, -8.0, dt)
        smallest = min(smallest, lead - ego)
    assert lead_v == 0.0
    assert smallest > 0.0


def test_monitor_quiet_on_empty_road():
    assert safety_monitor(1.0, 12.0, 0.3, None, None, [], ACC, MonitorConfig()) == []


def test_monitor_flags_each_violation_kind():
    found = safety_monitor(1.0, 12.0, -9.0, 1.0, 10.0, [0], ACC, MonitorConfig())
    assert sorted(v.kind for v in found) == ["accel", "gap", "red-light"]


def test_monitor_ignores_close_gap_when_stopped():
    assert safety_monitor(1.0, 0.0, 0.0, 1.0, 0.0, [], ACC, MonitorConfig()) == []
