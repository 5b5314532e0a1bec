"""Timestamp counter, calibration, fallback selection."""

import time

import pytest

from octask import timebase


@pytest.fixture(autouse=True)
def fresh_source():
    timebase.reset_source()
    yield
    timebase.reset_source()


def test_timestamps_non_decreasing_on_one_thread():
    t1 = timebase.timestamp()
    t2 = timebase.timestamp()
    assert t2 >= t1


def test_elapsed_zero_and_wraparound():
    assert timebase.elapsed_ticks(5, 5) == 0
    near_top = (1 << 64) - 3
    assert timebase.elapsed_ticks(near_top, 2) == 5


def test_forced_fallback_ticks_are_nanoseconds(monkeypatch):
    monkeypatch.setenv("TIMEBASE_FORCE_FALLBACK", "1")
    timebase.reset_source()
    assert timebase.source() == timebase.OS_MONOTONIC
    cal = timebase.calibrate(0.05)
    assert cal.ticks_per_second == pytest.approx(1e9, rel=0.01)


def test_calibration_repeatable_within_five_percent():
    a = timebase.calibrate(0.05)
    time.sleep(0.1)
    b = timebase.calibrate(0.05)
    assert a.ticks_per_second == pytest.approx(b.ticks_per_second, rel=0.05)


def test_calibration_window_validation():
    with pytest.raises(ValueError):
        timebase.calibrate(0.0)
    with pytest.raises(ValueError):
        timebase.calibrate(0.005)


def test_busy_loop_duration_against_os_clock():
    cal = timebase.calibrate(0.05)
    t0 = timebase.timestamp()
    start = time.monotonic()
    while time.monotonic() - start < 0.1:
        pass
    t1 = timebase.timestamp()
    measured = cal.elapsed_seconds(t0, t1)
    assert 0.095 <= measured <= 0.2


def test_calibration_requires_positive_rate():
    with pytest.raises(timebase.CalibrationError):
        timebase.Calibration(0.0)


def test_perf_seconds_advances():
    a = timebase.perf_seconds()
    b = timebase.perf_seconds()
    assert b >= a
