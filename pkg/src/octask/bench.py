"""Measurement harness: series benchmark, peak/normalized performance,
energy model and CSV plot data.

The workload is the alternating series for ln(1+x) computed three ways
(futures composition, parallel for_each, sender pipeline) over one
deterministic chunk plan, so all paradigms return bit-identical sums and
differ only in how the chunks are scheduled.  Timings use the calibrated
timestamp counter; each configuration runs `repeats` times and reports
min / lower median / max.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from . import kernels, senders, timebase
from .par import chunk_plan, for_each, par
from .runtime import TaskPool, when_all

# Calibrated floating-point operation count of the n = 1e9 series run,
# used as the FLOP/s basis for every n by linear rescale.
FLOPS_BASIS_N = 1_000_000_000
FLOPS_BASIS = 100_000_028_581

PARADIGMS = ("futures", "for_each", "sender")


@dataclass(frozen=True)
class MaclaurinParams:
    x: float
    n: int

    def __post_init__(self):
        if not abs(self.x) < 1.0:
            raise ValueError(f"series requires |x| < 1, got x={self.x}")
        if self.n < 1:
            raise ValueError("term count must be >= 1")


def flops_basis(n: int) -> float:
    return FLOPS_BASIS * (n / FLOPS_BASIS_N)


def _fold(partials: Iterable[float]) -> float:
    total = 0.0
    for p in partials:
        total = total + p
    return total


def maclaurin_ln1p(params: MaclaurinParams, paradigm: str, pool: TaskPool,
                   chunk_count: Optional[int] = None) -> float:
    """Series sum under one paradigm and a deterministic chunk plan."""
    if paradigm not in PARADIGMS:
        raise ValueError(f"unknown paradigm {paradigm!r}")
    chunks = chunk_count or 4 * pool.worker_count
    plan = [(lo, hi) for lo, hi in chunk_plan(1, params.n + 1, chunks) if lo < hi]
    x = params.x

    if paradigm == "futures":
        futs = [pool.spawn(kernels.maclaurin_partial, x, lo, hi) for lo, hi in plan]
        return _fold(when_all(futs).get())

    slots = [0.0] * len(plan)

    def body(i: int) -> None:
        lo, hi = plan[i]
        slots[i] = kernels.maclaurin_partial(x, lo, hi)

    if paradigm == "for_each":
        for_each(range(len(plan)), par(len(plan)), body, pool=pool)
        return _fold(slots)

    pipeline = senders.just(None) | senders.bulk(len(plan), body) \
        | senders.then(lambda _: _fold(slots))
    return senders.sync_wait(pipeline, pool=pool)


def reference_chunked_sum(params: MaclaurinParams, chunk_count: int) -> float:
    """Sequential reference over the same plan; paradigms must match it."""
    plan = chunk_plan(1, params.n + 1, chunk_count)
    return _fold(kernels.maclaurin_partial(params.x, lo, hi)
                 for lo, hi in plan if lo < hi)


# ---------------------------------------------------------------------------
# timed suite

@dataclass
class BenchResult:
    paradigm: str
    cores: int
    repeats: int
    time_min: float
    time_median: float
    time_max: float
    flops_basis: float

    def __post_init__(self):
        if not self.time_min <= self.time_median <= self.time_max:
            raise AssertionError("timing order statistics are inconsistent")

    @property
    def flops(self) -> float:
        return self.flops_basis / self.time_median


def run_suite(params: MaclaurinParams, paradigms: Sequence[str],
              cores_list: Sequence[int], repeats: int = 10,
              chunk_count: Optional[int] = None,
              timer: Optional[Callable[[], float]] = None) -> list[BenchResult]:
    """Timed runs per (paradigm, cores); lower median of `repeats` runs."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    timer = timer or timebase.perf_seconds
    basis = flops_basis(params.n)
    results = []
    for paradigm in paradigms:
        for cores in cores_list:
            if cores < 1:
                raise ValueError("core counts must be >= 1")
            pool = TaskPool(cores)
            try:
                times = []
                for _ in range(repeats):
                    t0 = timer()
                    maclaurin_ln1p(params, paradigm, pool, chunk_count)
                    times.append(timer() - t0)
            finally:
                pool.wait_quiescent()
                pool.shutdown()
            times.sort()
            results.append(BenchResult(
                paradigm=paradigm, cores=cores, repeats=repeats,
                time_min=times[0],
                time_median=times[(repeats - 1) // 2],  # lower median
                time_max=times[-1],
                flops_basis=basis,
            ))
    return results


# ---------------------------------------------------------------------------
# peak and normalized performance, energy

@dataclass(frozen=True)
class CpuSpec:
    """Datasheet numbers; vector_length 1 encodes 'no vector unit'."""
    clock_ghz: float
    vector_length: int
    fpu_units: int
    fma: bool
    cores: int

    def __post_init__(self):
        if self.clock_ghz <= 0 or self.vector_length < 1 \
                or self.fpu_units < 1 or self.cores < 1:
            raise ValueError("CpuSpec fields must be positive")


# reference rows used by the formula checks
CPU_SPECS = {
    "a64fx": CpuSpec(1.8, 8, 2, True, 48),
    "epyc7543": CpuSpec(2.8, 4, 2, True, 64),
    "xeon6140": CpuSpec(2.3, 8, 2, True, 18),
    "u74mc": CpuSpec(1.2, 1, 1, False, 4),
}


def peak_performance(spec: CpuSpec, cores_used: int) -> float:
    """Theoretical peak in GFLOP/s: 2 x clock x vector length x FPUs x cores.

    The FMA factor of two is applied unconditionally; that is how the
    reference peak table is defined, including the row without FMA.
    """
    if not 1 <= cores_used <= spec.cores:
        raise ValueError(f"cores_used must be in [1, {spec.cores}]")
    return 2.0 * spec.clock_ghz * spec.vector_length * spec.fpu_units * cores_used


def normalized_performance(flops: float, spec: CpuSpec, cores_used: int) -> float:
    """Measured FLOP/s over the peak for the cores actually used."""
    if flops < 0:
        raise ValueError("flops must be >= 0")
    peak = peak_performance(spec, cores_used) * 1e9
    if peak <= 0:
        raise ValueError("peak performance must be positive")
    return flops / peak


@dataclass(frozen=True)
class EnergyModel:
    """Configured average draw; boards here have no power counters."""
    average_power_w: float
    duration_s: float

    def __post_init__(self):
        if self.average_power_w <= 0:
            raise ValueError("average power must be positive")
        if self.duration_s < 0:
            raise ValueError("duration must be >= 0")


def energy_wh(model: EnergyModel) -> float:
    return model.average_power_w * model.duration_s / 3600.0


# ---------------------------------------------------------------------------
# CSV plot data

CSV_HEADER = "cores,time_min_s,time_median_s,time_max_s"


def emit_csv(results: Sequence[BenchResult], out_dir: str,
             suite: str = "maclaurin") -> list[str]:
    """One file per paradigm: rows ascending by cores, 6-decimal seconds."""
    if not results:
        raise ValueError("refusing to emit CSV for an empty result set")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    by_paradigm: dict[str, list[BenchResult]] = {}
    for r in results:
        by_paradigm.setdefault(r.paradigm, []).append(r)
    for paradigm, rows in by_paradigm.items():
        path = os.path.join(out_dir, f"{suite}_{paradigm}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in sorted(rows, key=lambda r: r.cores):
                fh.write(f"{r.cores},{r.time_min:.6f},{r.time_median:.6f},{r.time_max:.6f}\n")
        paths.append(path)
    return paths


def parse_csv(path: str) -> list[tuple[int, float, float, float]]:
    """Read back an emitted file (used by tests and plotting)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        for line in fh:
            cores, tmin, tmed, tmax = line.rstrip("\n").split(",")
            rows.append((int(cores), float(tmin), float(tmed), float(tmax)))
    return rows
