import numpy as np
import pandas as pd
import pytest

from ecoacc.config import TrafficConfig
from ecoacc.core.acc import LightAhead
from ecoacc.core.planner import planned_trajectory, solve_dp
from ecoacc.core.powertrain import ecms_split
from ecoacc.core.signals import LeadSpawn, Phase, Scenario, SignalTimingSpec, mean_signals, phase_at, sample_scenario
from ecoacc.core.sim import (
    TRACE_COLUMNS,
    LeadState,
    PlantState,
    _red_crossings,
    idm_accel,
    lead_vehicle_update,
    light_ahead,
    plant_step,
    prepare_artifacts,
    replay_plan,
    run_episode,
)
from ecoacc.core.vehicle import State
from ecoacc.errors import SimulationTimeout
from ecoacc.plugins import PluginManager

TRAFFIC = TrafficConfig()


def controller(plugin_id):
    return PluginManager().create(plugin_id)


@pytest.fixture
def scenario(config):
    return sample_scenario(config.route, config.traffic, 11)


def test_plant_step_coasting_advances_and_draws_auxiliaries(config):
    split, _ = ecms_split(10.0, 0.0, 0.9, config.powertrain, config.vehicle)
    state, flow = plant_step(PlantState(0.0, 0.0, 10.0, 0.9), split, 0.2, 0.0, config.vehicle, config.powertrain)
    assert state.time_s == pytest.approx(0.2)
    assert 1.9 < state.position_m < 2.0
    assert state.v < 10.0
    assert flow.fuel_power == 0.0
    assert flow.elec_power > 0.0
    assert state.soc < 0.9


def test_idm_free_road():
    assert idm_accel(0.0, 14.0, 1.5, TRAFFIC) == pytest.approx(TRAFFIC.max_accel)
    assert idm_accel(14.0, 14.0, 1.5, TRAFFIC) == pytest.approx(0.0)
    assert idm_accel(10.0, 14.0, 1.5, TRAFFIC, (3.0, 0.0)) < -TRAFFIC.comfort_decel


def test_lead_stops_before_red_light():
    spawn = LeadSpawn(entry_time_s=0.0, entry_speed=12.0, desired_speed=14.0, time_headway_s=1.5)
    lead = LeadState(0.0, 12.0, spawn)
    for _ in range(400):
        light = LightAhead(100.0 - lead.position_m, Phase.RED) if lead.position_m < 100.0 else None
        lead = lead_vehicle_update(lead, 0.2, TRAFFIC, light=light)
    assert lead.position_m < 100.0
    assert lead.v == pytest.approx(0.0, abs=0.05)


def test_lead_keeps_its_distance_to_the_predecessor():
    spawn = LeadSpawn(entry_time_s=0.0, entry_speed=14.0, desired_speed=14.0, time_headway_s=1.5)
    front = LeadState(30.0, 0.0, spawn)
    follower = LeadState(0.0, 14.0, spawn)
    for _ in range(300):
        follower = lead_vehicle_update(follower, 0.2, TRAFFIC, predecessor=front)
    assert follower.position_m < front.position_m - TRAFFIC.length_m


def test_light_ahead_finds_the_next_stop_line(artifacts):
    signals = mean_signals(artifacts.config.route)
    light = light_ahead(artifacts.route, signals, 100.0, 0.0)
    assert light.distance_m == 50.0 and light.index == 0
    assert light_ahead(artifacts.route, signals, 150.0, 0.0) is None


def test_red_crossing_detected_at_interpolated_time(artifacts):
    signals = (SignalTimingSpec(cycle_s=60.0, red_s=20.0, yellow_s=3.0, offset_s=0.0),)
    on_red = _red_crossings(artifacts.route, signals, PlantState(10.0, 149.0, 10.0, 0.9), PlantState(10.2, 151.0, 10.0, 0.9))
    on_green = _red_crossings(artifacts.route, signals, PlantState(30.0, 149.0, 10.0, 0.9), PlantState(30.2, 151.0, 10.0, 0.9))
    assert (on_red, on_green) == ([0], [])


def test_acc_only_episode_trace(artifacts, scenario, config):
    trace = run_episode(artifacts, scenario, controller("acc-only"))
    frame = trace.frame
    assert list(frame.columns) == TRACE_COLUMNS
    assert np.all(np.diff(frame.position_m) >= 0)
    np.testing.assert_allclose(np.diff(frame.time_s), config.sim.control_period_s)
    assert trace.totals["red_violations"] == 0
    assert trace.totals["distance_m"] == 300.0
    assert trace.totals["fuel_energy_j"] == pytest.approx((frame.fuel_power_w * config.sim.control_period_s).sum())
    assert trace.activations == [(0, 0, 0)]
    assert set(frame.branch) <= {"track", "gap", "stop", "hold"}


def test_trace_records_ground_truth_phases(artifacts, scenario):
    frame = run_episode(artifacts, scenario, controller("acc-only")).frame
    (light,) = scenario.signals
    for row in frame.iloc[::25].itertuples():
        assert row.phases == phase_at(light, row.time_s).value[0].upper()


def test_episode_is_deterministic(artifacts, scenario):
    first = run_episode(artifacts, scenario, controller("eco-acc-receding"))
    second = run_episode(artifacts, scenario, controller("eco-acc-receding"))
    pd.testing.assert_frame_equal(first.frame, second.frame)
    assert first.totals == second.totals


def test_replans_activate_after_modeled_latency(artifacts, scenario, config):
    trace = run_episode(artifacts, scenario, controller("eco-acc-receding"))
    latency_ticks = round(config.sim.planner_latency_s / config.sim.control_period_s)
    replans = trace.activations[1:]
    assert replans
    for policy_id, submitted, active in replans:
        assert active - submitted == latency_ticks
    assert trace.frame.policy_id.is_monotonic_increasing
    assert trace.totals["red_violations"] == 0


def test_zero_latency_swaps_policy_immediately(config, cost_map, scenario):
    sim = config.sim.model_copy(update={"planner_latency_s": 0.0})
    artifacts = prepare_artifacts(config.model_copy(update={"sim": sim}), cost_map=cost_map)
    trace = run_episode(artifacts, scenario, controller("eco-acc-receding"))
    assert all(active == submitted for _, submitted, active in trace.activations)


def test_global_controller_plans_once_and_obeys_lights(artifacts, scenario):
    trace = run_episode(artifacts, scenario, controller("eco-acc-global"))
    assert trace.activations == [(0, 0, 0)]
    assert trace.totals["red_violations"] == 0


def test_timeout_raises(config, cost_map, scenario):
    sim = config.sim.model_copy(update={"max_time_s": 5.0})
    artifacts = prepare_artifacts(config.model_copy(update={"sim": sim}), cost_map=cost_map)
    with pytest.raises(SimulationTimeout):
        run_episode(artifacts, scenario, controller("acc-only"))


def test_leads_are_spread_ahead_at_departure(artifacts, config):
    scenario = Scenario(
        scenario_id=0,
        signals=mean_signals(config.route),
        leads=(
            LeadSpawn(entry_time_s=-12.0, entry_speed=12.0, desired_speed=14.0, time_headway_s=1.5),
            LeadSpawn(entry_time_s=-6.0, entry_speed=12.0, desired_speed=14.0, time_headway_s=1.5),
        ),
    )
    trace = run_episode(artifacts, scenario, controller("acc-only"))
    first_gap = trace.frame.lead_gap_m.iloc[0]
    assert 40.0 < first_gap < 90.0
    assert trace.totals["gap_violations"] == 0


def test_trace_csv_round_trip(tmp_path, artifacts, scenario):
    trace = run_episode(artifacts, scenario, controller("acc-only"))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    loaded = pd.read_csv(path)
    assert list(loaded.columns) == TRACE_COLUMNS
    assert len(loaded) == len(trace.frame)


def test_replayed_plan_arrives_close_to_schedule(artifacts, config):
    context = artifacts.planning_context(mean_signals(config.route))
    policy = solve_dp(State(10.0, 0.0), 0.0, None, None, 0.9, context)
    plan = planned_trajectory(policy, context)
    arrival = replay_plan(plan, artifacts, soc=0.9)
    assert arrival == pytest.approx(plan.t.iloc[-1], rel=0.02)


@pytest.mark.slow
def test_replayed_default_plan_arrives_close_to_schedule(default_artifacts, default_config):
    context = default_artifacts.planning_context(mean_signals(default_config.route))
    policy = solve_dp(State(10.0, 0.0), 0.0, None, None, 0.9, context)
    plan = planned_trajectory(policy, context)
    assert plan.position_m.iloc[-1] == pytest.approx(default_config.planner.horizon_m)
    arrival = replay_plan(plan, default_artifacts, soc=0.9)
    assert arrival == pytest.approx(plan.t.iloc[-1], rel=0.02)
