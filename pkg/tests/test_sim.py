import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctaf_goalcast.geometry import DEFAULT_AIRPORT, OTHER, LocalPosition, cardinal_direction
from ctaf_goalcast.radio import extract_intent
from ctaf_goalcast.sim import (
    BENCH_BRANCHES,
    SCRIPT_KINDS,
    BenchmarkConfig,
    ScriptError,
    SimConfig,
    ambiguity_benchmark,
    build_script,
    generate_dataset,
    propagate,
    sample_path,
    simulate_flight,
)

CLEAN = SimConfig(position_noise=0.0)


def leg_start_states(script):
    s, out = script.start, []
    for leg in script.legs:
        out.append((leg.name, s))
        s = propagate(s, leg, leg.duration)
    return out


def test_downwind_heading_runway_08():
    script = build_script("pattern_landing", "N12AB", "skyhawk", 0.0, CLEAN, np.random.default_rng(0), runway="08")
    states = dict(leg_start_states(script))
    hdg = states["downwind"].heading
    assert abs((hdg - 260.0 + 180) % 360 - 180) <= 0.5


def test_north_departure_ends_north():
    script = build_script("departure", "N12AB", "skyhawk", 0.0, CLEAN, np.random.default_rng(1), runway="08", direction="N")
    track, _ = simulate_flight(script, CLEAN)
    end = LocalPosition.from_array(track.positions[-1])
    assert cardinal_direction(end, sectors=4) == "North"


@pytest.mark.parametrize("kind", SCRIPT_KINDS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_noise_free_kinematic_bounds(kind, seed):
    script = build_script(kind, "N12AB", "skyhawk", 0.0, CLEAN, np.random.default_rng(seed))
    times, pos, speeds = sample_path(script.start, script.legs, 1.0)
    step = np.diff(pos[:, :2], axis=0)
    dist = np.hypot(step[:, 0], step[:, 1])
    assert np.all(dist <= CLEAN.v * np.diff(times) + 1e-12)  # chord never exceeds arc
    moving = dist > 1e-6
    hdg = np.degrees(np.arctan2(step[:, 0], step[:, 1]))
    both = moving[1:] & moving[:-1]
    turn = np.abs((np.diff(hdg) + 180) % 360 - 180)[both]
    assert np.all(turn <= CLEAN.turn_rate + 1e-6)


@pytest.mark.parametrize("kind", SCRIPT_KINDS)
def test_clean_calls_parse_to_truth(kind):
    for seed in range(5):
        script = build_script(kind, "N12AB", "skyhawk", 0.0, CLEAN, np.random.default_rng(seed))
        _, calls = simulate_flight(script, CLEAN, np.random.default_rng(seed))
        assert calls
        for c in calls:
            assert extract_intent(c.transcript, DEFAULT_AIRPORT) == c.intent_truth, c.transcript


def test_script_errors():
    with pytest.raises(ScriptError):
        build_script("loop", "N12AB", "skyhawk", 0.0, CLEAN, np.random.default_rng(0))
    with pytest.raises(ScriptError):
        build_script("departure", "N12AB", "skyhawk", 0.0, CLEAN, np.random.default_rng(0), runway="17")
    with pytest.raises(ValueError):
        SimConfig(speed=0)


def test_generate_dataset_basics():
    one = generate_dataset(1, config=SimConfig(seed=3))
    assert {s.aircraft_id for s in one.split.all()} <= set(one.tracks) and len(one.tracks) == 1
    a = generate_dataset(6, config=SimConfig(seed=5))
    b = generate_dataset(6, config=SimConfig(seed=5))
    assert [s.scene_id for s in a.split.all()] == [s.scene_id for s in b.split.all()]
    assert all(np.array_equal(x.obs, y.obs) for x, y in zip(a.split.all(), b.split.all()))
    assert [c.transcript for c in a.calls] == [c.transcript for c in b.calls]
    taxi = generate_dataset(4, mix={"taxi": 1.0})
    assert taxi.labeled_calls() and all(lc.intent == OTHER for lc in taxi.labeled_calls())
    for c in a.calls:
        assert c.speaker_truth in a.directory
    with pytest.raises(ValueError):
        generate_dataset(0)


def test_benchmark_branch_separation():
    bc = BenchmarkConfig(n_flights=60, speed_jitter=0.0, branch_delay=0.0, sim=CLEAN)
    bench = ambiguity_benchmark(bc)
    goals = {}
    for s in bench.split.all():
        goals.setdefault(str(s.intent), s.goal)
    land, north = goals["landing:08"], goals["depart:N"]
    assert np.linalg.norm(land - north) > 3.0


def test_benchmark_prefix_agreement():
    # the shared window, measured noise-free, agrees far within three noise sigmas
    bench = ambiguity_benchmark(BenchmarkConfig(n_flights=36, sim=CLEAN))
    obs = [s.obs for s in bench.split.all()]
    spread = max(np.abs(a - b).max() for a, b in combinations(obs, 2))
    assert spread < 3 * SimConfig().position_noise


def test_benchmark_balance_and_calls():
    bench = ambiguity_benchmark(BenchmarkConfig(n_flights=120))
    scenes = bench.split.all()
    assert len(scenes) == 120
    counts = np.array([sum(sc.maneuver == f"bench_{b}" for sc in bench.scripts) for b in BENCH_BRANCHES])
    assert counts.max() - counts.min() <= 0.1 * counts.mean()
    for s in scenes:
        assert s.call_age is not None and 0 <= s.call_age <= 300


def test_benchmark_no_call_fraction():
    bench = ambiguity_benchmark(BenchmarkConfig(n_flights=60, no_call_fraction=0.3))
    unknown = sum(s.intent.kind == "unknown" for s in bench.split.all())
    assert unknown == 18


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_benchmark_is_seeded(seed):
    bc = BenchmarkConfig(n_flights=12, sim=SimConfig(seed=seed))
    a, b = ambiguity_benchmark(bc), ambiguity_benchmark(bc)
    assert all(np.array_equal(x.goal, y.goal) for x, y in zip(a.split.all(), b.split.all()))
