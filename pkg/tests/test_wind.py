import math

import numpy as np
import pytest

from windlab import wind
from windlab.wind import (
    SinusoidSpec, WindSeries, EmptySeries, ParseError,
    regularize, is_regular, sinusoid, steady_random, synthetic_gusty,
)


def test_steady_reproducible_and_constant():
    s1 = steady_random(np.random.default_rng(42), 150)
    s2 = steady_random(np.random.default_rng(42), 150)
    assert np.array_equal(s1.speed, s2.speed)
    assert np.array_equal(s1.direction, s2.direction)
    assert np.all(s1.speed == s1.speed[0])
    assert np.all(s1.direction == s1.direction[0])


def test_steady_respects_bounds():
    rng = np.random.default_rng(0)
    speeds = [steady_random(rng, 1).speed[0] for _ in range(10_000)]
    assert min(speeds) >= 4.0
    assert max(speeds) <= 13.0


def test_sinusoid_midpoint_at_phase_zero():
    spec = SinusoidSpec(7.0, 13.0, -10.0, 10.0, speed_phase=0.0, dir_phase=0.0)
    series = sinusoid(spec, 10)
    assert series.speed[0] == pytest.approx(10.0, abs=1e-12)
    assert series.direction[0] == pytest.approx(0.0, abs=1e-12)


def test_sinusoid_narrow_extremes_over_period():
    spec = SinusoidSpec(7.0, 13.0, -10.0, 10.0, speed_phase=0.0, dir_phase=0.0)
    series = sinusoid(spec, 600)
    assert series.speed.max() == pytest.approx(13.0, abs=1e-9)
    assert series.speed.min() == pytest.approx(7.0, abs=1e-9)
    assert series.direction.max() == pytest.approx(10.0, abs=1e-9)
    assert series.direction.min() == pytest.approx(-10.0, abs=1e-9)


def test_sinusoid_wide_direction_extremes():
    spec = SinusoidSpec(1.0, 13.0, -30.0, 30.0, speed_phase=0.0, dir_phase=0.0)
    series = sinusoid(spec, 600)
    assert series.direction.max() == pytest.approx(30.0, abs=1e-9)
    assert series.direction.min() == pytest.approx(-30.0, abs=1e-9)
    assert series.speed.min() == pytest.approx(1.0, abs=1e-9)


def test_sinusoid_presets_have_documented_ranges():
    n = wind.narrow_spec(np.random.default_rng(1))
    w = wind.wide_spec(np.random.default_rng(1))
    assert (n.speed_min, n.speed_max, n.dir_min, n.dir_max) == (7.0, 13.0, -10.0, 10.0)
    assert (w.speed_min, w.speed_max, w.dir_min, w.dir_max) == (1.0, 13.0, -30.0, 30.0)


def test_regularize_expands_speed_jump():
    raw = WindSeries(np.array([5.0, 8.0]), np.array([0.0, 0.0]))
    out = regularize(raw)
    assert list(out.speed) == [5.0, 6.0, 7.0, 8.0]
    assert list(out.direction) == [0.0, 0.0, 0.0, 0.0]


def test_regularize_serialises_joint_change():
    raw = WindSeries(np.array([5.0, 7.0]), np.array([0.0, 2.0]))
    out = regularize(raw)
    # alternating single-variable quantum moves, speed first
    assert list(out.speed) == [5.0, 6.0, 6.0, 7.0, 7.0]
    assert list(out.direction) == [0.0, 0.0, 1.0, 1.0, 2.0]
    assert is_regular(out)


def test_regularize_identity_on_regular_series():
    raw = WindSeries(np.array([5.0, 6.0, 6.0, 6.0]), np.array([0.0, 0.0, 1.0, 1.5]))
    out = regularize(raw)
    assert np.array_equal(out.speed, raw.speed)
    assert np.array_equal(out.direction, raw.direction)


def test_regularize_idempotent_on_random_series():
    rng = np.random.default_rng(9)
    raw = WindSeries(rng.uniform(4, 13, 200), rng.uniform(-30, 30, 200))
    once = regularize(raw)
    twice = regularize(once)
    assert np.array_equal(once.speed, twice.speed)
    assert np.array_equal(once.direction, twice.direction)
    assert is_regular(once)


def test_regular_series_single_variable_property():
    rng = np.random.default_rng(13)
    raw = WindSeries(rng.uniform(4, 13, 300), rng.uniform(-30, 30, 300))
    out = regularize(raw)
    ds = np.abs(np.diff(out.speed))
    dd = np.abs(np.diff(out.direction))
    assert np.all((ds <= 1.0 + 1e-12) & (dd <= 1.0 + 1e-12))
    assert np.all((ds == 0) | (dd == 0))


def test_synthetic_gusty_reproducible_bounded_regular():
    s1 = synthetic_gusty(np.random.default_rng(3), 500)
    s2 = synthetic_gusty(np.random.default_rng(3), 500)
    assert np.array_equal(s1.speed, s2.speed)
    assert np.array_equal(s1.direction, s2.direction)
    assert s1.speed.min() >= 4.0 and s1.speed.max() <= 13.0
    assert s1.direction.min() >= -30.0 and s1.direction.max() <= 30.0
    out = regularize(s1)
    assert np.array_equal(out.speed, s1.speed)  # already a fixpoint
    assert is_regular(s1)


def test_load_measured_roundtrip(tmp_path):
    p = tmp_path / "wind.csv"
    p.write_text("timestamp,speed_mps,direction_deg\n"
                 "2023-07-10T00:00,8.0,0.0\n"
                 "2023-07-10T00:01,8.5,0.0\n"
                 "2023-07-10T00:02,9.0,0.0\n")
    series = wind.load_measured(p)
    assert len(series) == 3
    assert series.speed[0] == 8.0
    assert is_regular(series)


def test_load_measured_malformed_row(tmp_path):
    p = tmp_path / "wind.csv"
    p.write_text("timestamp,speed_mps,direction_deg\n"
                 "t0,8.0,0.0\n"
                 "t1,oops,0.0\n")
    with pytest.raises(ParseError) as err:
        wind.load_measured(p)
    assert err.value.row == 3


def test_load_measured_gap_fill_then_fixpoint(tmp_path):
    p = tmp_path / "wind.csv"
    p.write_text("timestamp,speed_mps,direction_deg\n"
                 "t0,8.0,0.0\n"
                 "t1,,\n"
                 "t2,10.0,0.0\n"
                 "t3,10.0,4.0\n")
    series = wind.load_measured(p)
    again = regularize(series)
    assert np.array_equal(series.speed, again.speed)
    assert np.array_equal(series.direction, again.direction)
    assert is_regular(series)


def test_load_measured_empty(tmp_path):
    p = tmp_path / "wind.csv"
    p.write_text("timestamp,speed_mps,direction_deg\n")
    with pytest.raises(EmptySeries):
        wind.load_measured(p)


def test_series_csv_out(tmp_path):
    series = sinusoid(SinusoidSpec(7.0, 13.0, -10.0, 10.0), 5)
    p = tmp_path / "out.csv"
    series.to_csv(p)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "step,speed_mps,direction_deg"
    assert len(lines) == 6
    got = float(lines[1].split(",")[1])
    assert got == series.speed[0]


def test_series_validation():
    with pytest.raises(EmptySeries):
        WindSeries(np.array([]), np.array([]))
    with pytest.raises(ValueError):
        WindSeries(np.array([-1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        SinusoidSpec(5.0, 5.0, -10.0, 10.0)
    with pytest.raises(ValueError):
        SinusoidSpec(7.0, 13.0, -10.0, 10.0, speed_period=1)
