"""Raw timestamp counter plus calibration to seconds.

Reads the hardware cycle/time counter through the compiled kernel core
when the build and host provide one, otherwise the OS monotonic clock in
nanosecond ticks.  TIMEBASE_FORCE_FALLBACK=1 pins the OS source, which
keeps CI runs reproducible across machines.  Tick rates are never
assumed: `calibrate` measures them against the OS clock.
"""

from __future__ import annotations

import os
import time

from . import kernels

_MASK = (1 << 64) - 1

HARDWARE = "hardware-cycle-counter"
OS_MONOTONIC = "os-monotonic"

_source: str | None = None


class CalibrationError(RuntimeError):
    """Counter not usable for timing (for example, not advancing)."""


def _select_source() -> str:
    if os.environ.get("TIMEBASE_FORCE_FALLBACK", "") == "1":
        return OS_MONOTONIC
    if kernels.hw_counter_available():
        return HARDWARE
    return OS_MONOTONIC


def source() -> str:
    """Active counter source (decided once, see `reset_source`)."""
    global _source
    if _source is None:
        _source = _select_source()
    return _source


def reset_source() -> None:
    """Re-read the environment; for tests toggling the fallback."""
    global _source, _calibration
    _source = None
    _calibration = None


def timestamp() -> int:
    """Current raw counter value in ticks (unsigned 64-bit)."""
    if source() == HARDWARE:
        return kernels.hw_timestamp()
    return time.monotonic_ns()


def elapsed_ticks(t1: int, t2: int) -> int:
    """t2 - t1 as an unsigned 64-bit difference (wraparound safe)."""
    return (t2 - t1) & _MASK


class Calibration:
    """Measured tick rate of the active source."""

    __slots__ = ("ticks_per_second",)

    def __init__(self, ticks_per_second: float):
        if not ticks_per_second > 0:
            raise CalibrationError("ticks_per_second must be positive")
        self.ticks_per_second = ticks_per_second

    def elapsed_seconds(self, t1: int, t2: int) -> float:
        return elapsed_ticks(t1, t2) / self.ticks_per_second

    def __repr__(self):
        return f"Calibration({self.ticks_per_second:.6g} ticks/s)"


def calibrate(window: float = 0.05) -> Calibration:
    """Estimate ticks per second against the OS monotonic clock."""
    if window < 0.01:
        raise ValueError("calibration window must be >= 0.01 s")
    t0 = timestamp()
    m0 = time.monotonic()
    time.sleep(window)
    t1 = timestamp()
    m1 = time.monotonic()
    dt = elapsed_ticks(t0, t1)
    dm = m1 - m0
    if dt == 0 or dm <= 0:
        raise CalibrationError("counter not advancing during calibration window")
    return Calibration(dt / dm)


_calibration: Calibration | None = None


def perf_seconds() -> float:
    """Seconds from an arbitrary origin, using the calibrated counter."""
    global _calibration
    if _calibration is None:
        _calibration = calibrate()
    return timestamp() / _calibration.ticks_per_second
