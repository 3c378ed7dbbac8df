import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbtsim.airspace import angular_difference, contains
from mbtsim.harness.formats import dumps_scenario, loads_scenario
from mbtsim.harness.generator import (
    CATCH_UP,
    CROSSING,
    MIXED,
    PATTERNS,
    RECIPROCAL,
    PatternSpec,
    conflict_suite,
    easy_suite,
    generate_scenario,
)
from mbtsim.safety import detect_los, ground_track
from mbtsim.simcore import ConfigurationError, run_scenario, spawn


def test_square_sector_shape():
    sc = generate_scenario(PatternSpec(CROSSING, 2, 1.0, 0))
    xs = [p[0] for p in sc.sector.boundary]
    ys = [p[1] for p in sc.sector.boundary]
    assert max(xs) - min(xs) == 80 and max(ys) - min(ys) == 80
    assert (sc.sector.floor, sc.sector.ceiling) == (150, 460)


@pytest.mark.parametrize("geom", [CATCH_UP, CROSSING, RECIPROCAL])
def test_null_run_loses_separation_with_requested_geometry(geom):
    sc = generate_scenario(PatternSpec(geom, 2, 1.0, 4))
    evs = detect_los(run_scenario(sc), wind=sc.wind)
    assert any(e.geometry == geom for e in evs)


def test_crossing_initial_tracks():
    for seed in range(5):
        sc = generate_scenario(PatternSpec(CROSSING, 2, 1.0, seed))
        a, b = (spawn(e, sc) for e in sc.entries)
        d = angular_difference(ground_track(a.heading, a.tas, sc.wind), ground_track(b.heading, b.tas, sc.wind))
        assert 45 < d < 135


def test_same_spec_same_file():
    spec = PatternSpec(MIXED, 6, 1.0, 11)
    assert dumps_scenario(generate_scenario(spec)) == dumps_scenario(generate_scenario(spec))


def test_spec_validation_and_infeasibility():
    with pytest.raises(ConfigurationError):
        PatternSpec(CROSSING, 1)
    with pytest.raises(ConfigurationError):
        PatternSpec(CROSSING, 21)
    with pytest.raises(ConfigurationError):
        PatternSpec("Spiral", 4)
    with pytest.raises(ConfigurationError):
        generate_scenario(PatternSpec(CROSSING, 20, 1.0, 0))


@settings(max_examples=15)
@given(st.sampled_from(PATTERNS), st.integers(2, 6), st.sampled_from([1.0, 1.5]), st.integers(0, 10_000))
def test_generated_scenarios_are_valid(pattern, n, difficulty, seed):
    sc = generate_scenario(PatternSpec(pattern, n, difficulty, seed), verify=False)
    sc.validate()
    assert len(sc.entries) == n
    assert loads_scenario(dumps_scenario(sc)) == sc
    for e in sc.entries:
        assert contains(sc.sector, e.entry_pos, e.entry_fl)
        assert sc.sector.floor <= e.exit.exit_fl <= sc.sector.ceiling


def test_suites_have_three_half_hour_scenarios():
    for suite in (easy_suite(0), conflict_suite(0)):
        assert len(suite) == 3
        assert all(sc.duration == 1800.0 for sc in suite)
    assert [len(sc.entries) for sc in easy_suite(0)] == [2, 2, 2]
