"""Parallel algorithms: chunk plans, for_each, deterministic reduction."""

import pytest

from octask.par import (ExecutionPolicy, chunk_plan, chunked_reduce, for_each,
                        par, seq, transform_reduce)
from octask.runtime import TaskPool


def test_chunk_plan_covers_range_contiguously():
    for lo, hi, c in [(0, 10, 3), (5, 5, 2), (1, 101, 7), (0, 3, 8)]:
        plan = chunk_plan(lo, hi, c)
        assert len(plan) == c
        assert plan[0][0] == lo and plan[-1][1] == hi
        for (a, b), (c2, _) in zip(plan, plan[1:]):
            assert a <= b == c2


def test_policy_validation():
    with pytest.raises(ValueError):
        ExecutionPolicy("parallel", 0)
    with pytest.raises(ValueError):
        ExecutionPolicy("weird")
    assert par(3).chunk_count == 3
    assert seq.kind == "sequential"


def test_for_each_empty_range(pool2):
    hits = []
    for_each(range(0, 0), par(), hits.append, pool=pool2)
    assert hits == []


def test_for_each_sequential_marks_all():
    marks = [False] * 4
    for_each(range(0, 4), seq, lambda i: marks.__setitem__(i, True))
    assert marks == [True] * 4


def test_for_each_parallel_matches_sequential(pool2):
    n = 257
    a = [0] * n
    b = [0] * n
    for_each(range(n), seq, lambda i: a.__setitem__(i, i * i))
    for_each(range(n), par(5), lambda i: b.__setitem__(i, i * i), pool=pool2)
    assert a == b


def test_for_each_body_fault_raises_after_settling(pool2):
    def body(i):
        if i == 3:
            raise ValueError("bad index")

    with pytest.raises(ValueError, match="bad index"):
        for_each(range(8), par(4), body, pool=pool2)


def test_transform_reduce_empty_returns_init(pool2):
    assert transform_reduce(range(3, 3), par(), lambda i: i, lambda a, b: a + b,
                            10, pool=pool2) == 10


def test_transform_reduce_small_sum(pool2):
    got = transform_reduce(range(1, 5), par(2), lambda i: i,
                           lambda a, b: a + b, 0, pool=pool2)
    assert got == 10


@pytest.mark.parametrize("chunks", [1, 2, 4])
def test_transform_reduce_bit_identical_to_chunked_reference(pool2, chunks):
    # floating-point series terms make any reassociation visible
    x = 0.73

    def term(i):
        return (-1.0) ** (i + 1) * x ** i / i

    add = lambda a, b: a + b
    plan = chunk_plan(1, 2001, chunks)
    expected = chunked_reduce(plan, term, add, 0.0)
    got = transform_reduce(range(1, 2001), par(chunks), term, add, 0.0, pool=pool2)
    assert got == expected


def test_results_independent_of_worker_count():
    x = 0.99

    def term(i):
        return x ** i / i

    add = lambda a, b: a + b
    outcomes = []
    for workers in (1, 2, 4):
        pool = TaskPool(workers)
        try:
            outcomes.append(transform_reduce(range(1, 5000), par(8), term, add,
                                             0.0, pool=pool))
        finally:
            pool.wait_quiescent()
            pool.shutdown()
    assert outcomes[0] == outcomes[1] == outcomes[2]


def test_non_unit_stride_rejected(pool2):
    with pytest.raises(ValueError):
        for_each(range(0, 10, 2), seq, lambda i: None)


def test_for_each_invokes_each_index_exactly_once(pool2):
    import collections
    import random as _random

    rng = _random.Random(314)
    for _ in range(20):
        lo = rng.randint(-50, 50)
        n = rng.randint(0, 200)
        chunks = rng.randint(1, 12)
        seen = collections.Counter()
        lock = __import__("threading").Lock()

        def body(i):
            with lock:
                seen[i] += 1

        for_each(range(lo, lo + n), par(chunks), body, pool=pool2)
        assert len(seen) == n
        assert all(c == 1 for c in seen.values())
        if n:
            assert min(seen) == lo and max(seen) == lo + n - 1
