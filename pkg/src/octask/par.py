"""Parallel algorithms over index ranges: for_each and transform_reduce.

The parallel policy splits a range into contiguous chunks, runs each
chunk as a task and combines per-chunk results in ascending chunk order,
so floating-point output is reproducible for a fixed chunk plan no
matter how many workers run it.
"""

from __future__ import annotations

from typing import Any, Callable, Optional

from .runtime import TaskPool, current_pool, when_all


class ExecutionPolicy:
    """`seq` runs inline; `par(chunk_count)` fans out chunk tasks."""

    __slots__ = ("kind", "chunk_count")

    def __init__(self, kind: str, chunk_count: Optional[int] = None):
        if kind not in ("sequential", "parallel"):
            raise ValueError(f"unknown policy kind {kind!r}")
        if chunk_count is not None and chunk_count < 1:
            raise ValueError("chunk_count must be >= 1")
        self.kind = kind
        self.chunk_count = chunk_count

    def __repr__(self):
        if self.kind == "sequential":
            return "seq"
        return f"par(chunk_count={self.chunk_count})"


seq = ExecutionPolicy("sequential")


def par(chunk_count: Optional[int] = None) -> ExecutionPolicy:
    """Parallel policy; chunk_count defaults to 4x the pool's workers."""
    return ExecutionPolicy("parallel", chunk_count)


def chunk_plan(lo: int, hi: int, chunks: int) -> list[tuple[int, int]]:
    """Split [lo, hi) into `chunks` contiguous intervals (some may be empty)."""
    if chunks < 1:
        raise ValueError("chunks must be >= 1")
    n = hi - lo
    base, rem = divmod(n, chunks)
    plan = []
    start = lo
    for i in range(chunks):
        size = base + (1 if i < rem else 0)
        plan.append((start, start + size))
        start += size
    return plan


def _resolve(policy: ExecutionPolicy, pool: Optional[TaskPool]):
    pool = pool or current_pool()
    if pool is None:
        raise RuntimeError("parallel policy needs a task pool (run inside one or pass pool=)")
    chunks = policy.chunk_count or 4 * pool.worker_count
    return pool, chunks


def for_each(rng: range, policy: ExecutionPolicy,
             body: Callable[[int], None], *, pool: Optional[TaskPool] = None) -> None:
    """Invoke `body` exactly once per index of `rng`.

    With the parallel policy the range is partitioned into chunk tasks;
    a fault in any body is re-raised after all launched chunks settle.
    """
    if rng.step != 1:
        raise ValueError("only unit-stride ranges are supported")
    if policy.kind == "sequential" or len(rng) == 0:
        for i in rng:
            body(i)
        return
    pool, chunks = _resolve(policy, pool)

    def run_chunk(lo, hi):
        for i in range(lo, hi):
            body(i)

    futs = [pool.spawn(run_chunk, lo, hi)
            for lo, hi in chunk_plan(rng.start, rng.stop, chunks)]
    when_all(futs).get()


def chunked_reduce(plan, transform, combine, init):
    """Sequential reference: per-chunk left folds combined in plan order."""
    total = init
    for lo, hi in plan:
        if lo >= hi:
            continue
        partial = transform(lo)
        for i in range(lo + 1, hi):
            partial = combine(partial, transform(i))
        total = combine(total, partial)
    return total


def transform_reduce(rng: range, policy: ExecutionPolicy,
                     transform: Callable[[int], Any],
                     combine: Callable[[Any, Any], Any], init: Any,
                     *, pool: Optional[TaskPool] = None) -> Any:
    """Chunk-deterministic reduction of `transform` over `rng`.

    Per-chunk partials are sequential left folds; partials fold into
    `init` in ascending chunk order, bit-identical to `chunked_reduce`
    on the same plan.
    """
    if rng.step != 1:
        raise ValueError("only unit-stride ranges are supported")
    if policy.kind == "sequential" or len(rng) == 0:
        return chunked_reduce([(rng.start, rng.stop)], transform, combine, init)
    pool, chunks = _resolve(policy, pool)
    plan = chunk_plan(rng.start, rng.stop, chunks)

    def run_chunk(lo, hi):
        partial = transform(lo)
        for i in range(lo + 1, hi):
            partial = combine(partial, transform(i))
        return partial

    futs = {}
    for idx, (lo, hi) in enumerate(plan):
        if lo < hi:
            futs[idx] = pool.spawn(run_chunk, lo, hi)
    settled = when_all(list(futs.values())).get()
    partials = dict(zip(futs.keys(), settled))
    total = init
    for idx in range(len(plan)):
        if idx in partials:
            total = combine(total, partials[idx])
    return total
