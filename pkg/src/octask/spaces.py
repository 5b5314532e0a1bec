"""Execution-space abstraction: space-parameterized kernels over views.

A kernel written against `parallel_for_md` / `parallel_reduce` runs
unchanged on the serial space (inline, in the calling task) or on a task
pool space (split into a fixed number of tasks).  Reductions follow a
fixed chunk plan and combine ascending, so the two spaces produce
bit-identical results for the same plan.
"""

from __future__ import annotations

import math
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .par import chunk_plan
from .runtime import FutureHandle, TaskPool, current_pool, when_all


class ExecutionSpace:
    pass


class Serial(ExecutionSpace):
    """Runs kernels inline in the calling task."""

    task_count = 1

    def __repr__(self):
        return "Serial()"


class TaskPoolSpace(ExecutionSpace):
    """Splits a kernel into exactly `task_count` tasks on the pool."""

    def __init__(self, task_count: int, pool: Optional[TaskPool] = None):
        if task_count < 1:
            raise ValueError("task_count must be >= 1")
        self.task_count = task_count
        self._pool = pool

    def pool(self) -> TaskPool:
        pool = self._pool or current_pool()
        if pool is None:
            raise RuntimeError("TaskPoolSpace needs a pool (run inside one or pass pool=)")
        return pool

    def __repr__(self):
        return f"TaskPoolSpace({self.task_count})"


def _strides(extents):
    strides = [1] * len(extents)
    for i in range(len(extents) - 2, -1, -1):
        strides[i] = strides[i + 1] * extents[i + 1]
    return strides


def _unravel(flat, strides):
    idx = []
    for s in strides:
        q, flat = divmod(flat, s)
        idx.append(q)
    return tuple(idx)


def _check_extents(extents):
    extents = tuple(int(e) for e in extents)
    if len(extents) < 1 or len(extents) > 4:
        raise ValueError("rank must be between 1 and 4")
    if any(e < 0 for e in extents):
        raise ValueError("extents must be non-negative")
    return extents


def parallel_for_md(space: ExecutionSpace, extents: Sequence[int],
                    kernel: Callable[..., None]) -> FutureHandle:
    """Invoke `kernel(*multi_index)` once per index, row-major order per chunk.

    Serial space runs in the caller and returns a ready future; a pool
    space returns a future completed after all sub-tasks.
    """
    extents = _check_extents(extents)
    total = math.prod(extents)
    strides = _strides(extents)

    def run_range(lo, hi):
        for flat in range(lo, hi):
            kernel(*_unravel(flat, strides))

    if isinstance(space, Serial) or total == 0:
        run_range(0, total)
        return FutureHandle.ready(None)
    pool = space.pool()
    futs = [pool.spawn(run_range, lo, hi)
            for lo, hi in chunk_plan(0, total, space.task_count) if lo < hi]
    return when_all(futs).then(lambda _: None)


def parallel_reduce(space: ExecutionSpace, extents: Sequence[int],
                    mapper: Callable[..., float],
                    combine: Callable[[Any, Any], Any], init: Any,
                    chunks: Optional[int] = None) -> FutureHandle:
    """Fold `mapper` over the index space with a deterministic chunk plan.

    The plan defaults to the space's task count; pass `chunks` to pin it,
    which makes results bit-identical across spaces.
    """
    extents = _check_extents(extents)
    total = math.prod(extents)
    strides = _strides(extents)
    plan = chunk_plan(0, total, chunks or space.task_count)

    def run_chunk(lo, hi):
        partial = mapper(*_unravel(lo, strides))
        for flat in range(lo + 1, hi):
            partial = combine(partial, mapper(*_unravel(flat, strides)))
        return partial

    if isinstance(space, Serial) or total == 0:
        totalv = init
        for lo, hi in plan:
            if lo < hi:
                totalv = combine(totalv, run_chunk(lo, hi))
        return FutureHandle.ready(totalv)

    pool = space.pool()
    futs = [pool.spawn(run_chunk, lo, hi) for lo, hi in plan if lo < hi]

    def fold(partials):
        totalv = init
        for p in partials:
            totalv = combine(totalv, p)
        return totalv

    return when_all(futs).then(fold)


class GridView:
    """Row-major float64 view of rank <= 4 with optional bounds checking."""

    __slots__ = ("extents", "checked", "data")

    def __init__(self, extents: Sequence[int], checked: bool = True,
                 data: Optional[np.ndarray] = None):
        self.extents = _check_extents(extents)
        self.checked = checked
        if data is None:
            data = np.zeros(self.extents, dtype=np.float64)
        else:
            data = np.ascontiguousarray(data, dtype=np.float64)
            if data.shape != self.extents:
                raise ValueError("data shape does not match extents")
        self.data = data

    @property
    def rank(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return math.prod(self.extents)

    def _validate(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if len(idx) != len(self.extents):
            raise IndexError(f"expected {len(self.extents)} indices, got {len(idx)}")
        for i, e in zip(idx, self.extents):
            if not 0 <= i < e:
                raise IndexError(f"index {idx} outside extents {self.extents}")
        return idx

    def __getitem__(self, idx):
        if self.checked:
            idx = self._validate(idx)
        return self.data[idx]

    def __setitem__(self, idx, value):
        if self.checked:
            idx = self._validate(idx)
        self.data[idx] = value


class SimdPack:
    """Fixed-width lane pack; width 1 is the scalar fallback."""

    __slots__ = ("lanes",)

    def __init__(self, lanes):
        arr = np.atleast_1d(np.asarray(lanes, dtype=np.float64))
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("lanes must be a non-empty 1-d sequence")
        self.lanes = arr

    @classmethod
    def broadcast(cls, value: float, width: int) -> "SimdPack":
        if width < 1:
            raise ValueError("width must be >= 1")
        return cls(np.full(width, float(value)))

    @property
    def width(self) -> int:
        return self.lanes.shape[0]

    def _match(self, other):
        if not isinstance(other, SimdPack):
            raise TypeError("expected a SimdPack")
        if other.width != self.width:
            raise ValueError(f"width mismatch: {self.width} vs {other.width}")
        return other

    def __add__(self, other):
        return SimdPack(self.lanes + self._match(other).lanes)

    def __sub__(self, other):
        return SimdPack(self.lanes - self._match(other).lanes)

    def __mul__(self, other):
        return SimdPack(self.lanes * self._match(other).lanes)

    def __truediv__(self, other):
        return SimdPack(self.lanes / self._match(other).lanes)

    def __eq__(self, other):
        return isinstance(other, SimdPack) and np.array_equal(self.lanes, other.lanes)

    def __repr__(self):
        return f"SimdPack({self.lanes.tolist()})"


def simd_fma(a: SimdPack, b: SimdPack, c: SimdPack) -> SimdPack:
    """Lane-wise a*b + c (two roundings, identical to the scalar path)."""
    a._match(b)
    a._match(c)
    return SimdPack(a.lanes * b.lanes + c.lanes)
