"""Minimal sender/receiver pipelines: just | then | bulk, sync_wait.

A sender describes a value flowing through transforms, optionally fanned
out over an index space and joined back.  Composition with ``|`` builds
new senders; starting one is a single-shot operation.
"""

from __future__ import annotations

from typing import Any, Callable, Optional

from .runtime import TaskPool, current_pool, when_all


class SenderReusedError(RuntimeError):
    """Raised when a sender is started a second time."""


class _Stage:
    __slots__ = ("kind", "fn", "count")

    def __init__(self, kind, fn, count=None):
        self.kind = kind
        self.fn = fn
        self.count = count


def then(fn: Callable[[Any], Any]) -> _Stage:
    """Transform stage: replaces the value with fn(value)."""
    return _Stage("then", fn)


def bulk(count: int, fn: Callable[[int], None]) -> _Stage:
    """Fan-out stage: fn(i) for i in [0, count), value passes through."""
    if count < 0:
        raise ValueError("bulk count must be >= 0")
    return _Stage("bulk", fn, count)


class Sender:
    """A start-once pipeline of stages over an initial value."""

    def __init__(self, source: Any, stages: tuple[_Stage, ...] = ()):
        self._source = source
        self._stages = stages
        self._started = False

    def __or__(self, stage: _Stage) -> "Sender":
        if not isinstance(stage, _Stage):
            return NotImplemented
        return Sender(self._source, self._stages + (stage,))


def just(value: Any) -> Sender:
    """Sender that produces `value`."""
    return Sender(value)


def sync_wait(sender: Sender, *, pool: Optional[TaskPool] = None) -> Any:
    """Start the sender, drive it to completion, return its value.

    Bulk stages fan out as tasks on the pool (inline without one);
    pipeline faults re-raise here.
    """
    if sender._started:
        raise SenderReusedError("sender already started")
    sender._started = True
    pool = pool or current_pool()
    value = sender._source
    for stage in sender._stages:
        if stage.kind == "then":
            value = stage.fn(value)
        else:
            if pool is None:
                for i in range(stage.count):
                    stage.fn(i)
            else:
                futs = [pool.spawn(stage.fn, i) for i in range(stage.count)]
                when_all(futs).get()
    return value
