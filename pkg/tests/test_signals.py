import numpy as np
import pytest

from ecoacc.config import HistoryConfig, TrafficConfig
from ecoacc.core.signals import (
    HistoricalSpat,
    LiveSpat,
    Phase,
    SignalTimingSpec,
    cycle_clock,
    estimate_red,
    generate_history,
    infeasible_downstream,
    infeasible_first,
    live_spat,
    load_scenario,
    mean_signals,
    phase_at,
    phases,
    red_estimates,
    sample_scenario,
    save_scenario,
    truncated_normal,
)
from ecoacc.errors import ConfigError, EmptyHistory

NO_YELLOW = SignalTimingSpec(name="A", cycle_s=60.0, red_s=20.0, yellow_s=0.0, offset_s=0.0)
WITH_YELLOW = SignalTimingSpec(name="B", cycle_s=60.0, red_s=20.0, yellow_s=3.0, offset_s=7.0)
# sample times that avoid every phase boundary
TIMES = np.arange(0.05, 240.0, 0.5)


@pytest.mark.parametrize("t, offset, cycle, expected", [(70.0, 0.0, 60.0, 10.0), (0.0, 0.0, 60.0, 0.0), (59.9, 0.2, 60.0, 0.1)])
def test_cycle_clock(t, offset, cycle, expected):
    assert float(cycle_clock(t, offset, cycle)) == pytest.approx(expected)


def test_cycle_clock_range_and_periodicity():
    clock = cycle_clock(TIMES, 13.0, 60.0)
    assert np.all((clock >= 0) & (clock < 60.0))
    np.testing.assert_allclose(cycle_clock(TIMES + 3 * 60.0, 13.0, 60.0), clock, atol=1e-9)


@pytest.mark.parametrize("t, expected", [(10.0, True), (25.0, False), (20.0, True)])
def test_infeasible_downstream_examples(t, expected):
    assert bool(infeasible_downstream(t, NO_YELLOW, 20.0)) is expected


def test_infeasible_first_examples():
    red = LiveSpat(intersection=0, phase=Phase.RED, remaining_s=15.0)
    green = LiveSpat(intersection=0, phase=Phase.GREEN, remaining_s=15.0)
    assert infeasible_first(10.0, red, NO_YELLOW, 20.0)
    assert not infeasible_first(10.0, green, NO_YELLOW, 20.0)
    assert infeasible_first(25.0, green, NO_YELLOW, 20.0)


def test_yellow_snapshot_blocks_until_red_clears():
    yellow = LiveSpat(intersection=0, phase=Phase.YELLOW, remaining_s=2.0)
    assert infeasible_first(1.0, yellow, WITH_YELLOW, 20.0)
    assert infeasible_first(2.0 + 19.0, yellow, WITH_YELLOW, 20.0)
    assert not infeasible_first(2.0 + 30.0, yellow, WITH_YELLOW, 20.0)
    # the next yellow is blocked as well
    assert infeasible_first(2.0 + 58.0, yellow, WITH_YELLOW, 20.0)


def test_downstream_predicate_covers_every_non_green_instant():
    blocked = infeasible_downstream(TIMES, WITH_YELLOW, WITH_YELLOW.red_s)
    not_green = np.array([phase_at(WITH_YELLOW, t) is not Phase.GREEN for t in TIMES])
    assert not_green.any() and not not_green.all()
    np.testing.assert_array_equal(blocked, not_green)


def test_conservative_estimate_only_adds_blocked_time():
    exact = infeasible_downstream(TIMES, WITH_YELLOW, WITH_YELLOW.red_s)
    conservative = infeasible_downstream(TIMES, WITH_YELLOW, WITH_YELLOW.red_s + 5.0)
    assert np.all(conservative[exact])
    assert conservative.sum() > exact.sum()


def test_fresh_green_snapshot_agrees_with_downstream():
    spec = WITH_YELLOW
    t_snap = spec.cycle_s - spec.offset_s + spec.red_s  # clock hits red_s: light just turned green
    live = live_spat(spec, t_snap, 0)
    assert live.phase is Phase.GREEN
    assert live.remaining_s == pytest.approx(spec.green_s)
    arrivals = t_snap + TIMES
    first = infeasible_first(arrivals - t_snap, live, spec, spec.red_s)
    downstream = infeasible_downstream(arrivals, spec, spec.red_s)
    np.testing.assert_array_equal(first, downstream)


def test_predicates_invariant_under_whole_cycles():
    live = LiveSpat(intersection=0, phase=Phase.RED, remaining_s=4.0)
    base = TIMES + 4.0
    np.testing.assert_array_equal(
        infeasible_first(base, live, WITH_YELLOW, 22.0), infeasible_first(base + 120.0, live, WITH_YELLOW, 22.0)
    )
    np.testing.assert_array_equal(
        infeasible_downstream(TIMES, WITH_YELLOW, 22.0), infeasible_downstream(TIMES + 120.0, WITH_YELLOW, 22.0)
    )


def test_phase_at_boundaries():
    spec = SignalTimingSpec(cycle_s=60.0, red_s=20.0, yellow_s=4.0)
    assert phase_at(spec, 0.0) is Phase.RED
    assert phase_at(spec, 20.0) is Phase.GREEN
    assert phase_at(spec, 58.0) is Phase.YELLOW
    assert phases((spec, NO_YELLOW), 30.0) == (Phase.GREEN, Phase.GREEN)


def test_live_spat_remaining_time():
    live = live_spat(WITH_YELLOW, 3.0, 2)  # clock 10 s into a 20 s red
    assert (live.phase, live.intersection) == (Phase.RED, 2)
    assert live.remaining_s == pytest.approx(10.0)
    assert live.timestamp_s == 3.0


def test_timing_spec_validation():
    with pytest.raises(ValueError):
        SignalTimingSpec(cycle_s=30.0, red_s=28.0, yellow_s=3.0)
    with pytest.raises(ValueError):
        SignalTimingSpec(cycle_s=30.0, red_s=10.0, offset_s=30.0)


def history(*samples):
    return HistoricalSpat(red_samples=(tuple(samples),), cycle_s=(60.0,))


def test_estimate_red_percentiles():
    assert estimate_red(history(20, 20, 20), 0, 37.0) == 20.0
    assert estimate_red(history(10, 20, 30), 0, 50.0) == 20.0
    # order statistics 10..40, rank 0.9 * 3 = 2.7 -> 30 + 0.7 * 10
    assert estimate_red(history(10, 20, 30, 40), 0, 90.0) == pytest.approx(37.0)


def test_estimate_red_requires_samples():
    with pytest.raises(EmptyHistory):
        estimate_red(history(), 0)


def test_history_generation_is_seeded_and_bounded(config):
    first = generate_history(config.route, config.history)
    again = generate_history(config.route, config.history)
    other_hour = generate_history(config.route, config.history.model_copy(update={"hour": 8}))
    assert first == again
    assert first.red_samples != other_hour.red_samples
    intersection = config.route.intersections[0]
    assert all(intersection.red_min_s <= s <= intersection.red_max_s for s in first.red_samples[0])
    assert len(first.red_samples[0]) == config.history.samples
    assert red_estimates(first)[0] >= np.median(first.red_samples[0])


def test_scenario_sampling_is_deterministic(config):
    a = sample_scenario(config.route, config.traffic, 17)
    b = sample_scenario(config.route, config.traffic, 17)
    assert a == b
    assert a.scenario_id == 17


def test_zero_variance_scenario_equals_means(config):
    scenario = sample_scenario(config.route, config.traffic, 3, deterministic=True)
    assert scenario.signals == mean_signals(config.route)
    for lead in scenario.leads:
        assert lead.desired_speed == config.traffic.desired_speed.mean


def test_lead_schedule_enters_before_departure_front_first(config):
    traffic = TrafficConfig(mean_leads=5.0, max_leads=6, entry_window_s=60.0, min_entry_gap_s=4.0)
    route = config.route
    for seed in range(10):
        entries = [lead.entry_time_s for lead in sample_scenario(route, traffic, seed).leads]
        assert all(t < 0 for t in entries)
        assert all(b - a >= 4.0 - 1e-9 for a, b in zip(entries, entries[1:]))
        assert len(entries) <= 6


def test_red_duration_sample_mean():
    rng = np.random.default_rng(5)
    draws = truncated_normal(rng, 25.0, 3.0, 18.0, 32.0, size=1000)
    assert draws.min() >= 18.0 and draws.max() <= 32.0
    assert abs(draws.mean() - 25.0) < 3 * draws.std(ddof=1) / np.sqrt(draws.size)


def test_scenario_json_round_trip(tmp_path, config):
    scenario = sample_scenario(config.route, config.traffic, 9)
    path = tmp_path / "scenario.json"
    save_scenario(scenario, path)
    assert load_scenario(path) == scenario


def test_load_scenario_reports_bad_files(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"scenario_id\": 1}", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_history_config_defaults():
    assert HistoryConfig().percentile == 90.0
