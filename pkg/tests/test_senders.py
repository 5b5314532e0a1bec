"""Sender pipelines: just | then | bulk, single-start sync_wait."""

import pytest

from octask import senders
from octask.senders import SenderReusedError, bulk, just, sync_wait, then


def test_just_then_sync_wait():
    assert sync_wait(just(5) | then(lambda x: x + 1)) == 6
    assert sync_wait(just(1)) == 1


def test_then_chain():
    assert sync_wait(just(2) | then(lambda x: x * 3) | then(lambda x: x + 1)) == 7


def test_bulk_runs_each_index(pool2):
    acc = [None] * 4
    sync_wait(just(None) | bulk(4, lambda i: acc.__setitem__(i, i)), pool=pool2)
    assert acc == [0, 1, 2, 3]


def test_bulk_passes_value_through(pool2):
    assert sync_wait(just("v") | bulk(3, lambda i: None), pool=pool2) == "v"


def test_double_start_is_an_error():
    s = just(1) | then(lambda x: x)
    assert sync_wait(s) == 1
    with pytest.raises(SenderReusedError):
        sync_wait(s)


def test_piping_builds_fresh_senders():
    base = just(10)
    a = base | then(lambda x: x + 1)
    b = base | then(lambda x: x + 2)
    assert sync_wait(a) == 11
    assert sync_wait(b) == 12


def test_pipeline_fault_reraises(pool2):
    s = just(0) | then(lambda x: 1 // x)
    with pytest.raises(ZeroDivisionError):
        sync_wait(s, pool=pool2)


def test_bulk_negative_count_rejected():
    with pytest.raises(ValueError):
        senders.bulk(-1, lambda i: None)
