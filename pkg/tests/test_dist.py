"""Global address space and parcelports: loopback and real sockets."""

import socket
import threading

import pytest

from octask.dist import (BindError, LocalityConfig, RemoteActionError,
                         StartupError, TcpPort, bootstrap, loopback_group,
                         parse_endpoint, register_global_factory)
from octask.wire import Gid


def _echo_factory(payload, runtime):
    return object(), {7: lambda obj, data, rt: bytes(reversed(data))}


# import-time registration mirrors how applications publish component types
register_global_factory("echo", _echo_factory)


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def pair():
    group = loopback_group(2, threads=2)
    for rt in group:
        rt.register_factory("echo", _echo_factory)
    yield group
    for rt in group:
        rt.close()


def test_standalone_bootstrap_runs_locality_zero():
    rt = bootstrap(LocalityConfig(threads=1))
    try:
        assert rt.locality_id == 0
        assert rt.locality_count == 1
        gid = rt.register_component(object(), {1: lambda o, p, r: b"pong"})
        assert rt.invoke(gid, 1).get() == b"pong"
    finally:
        rt.close()


def test_register_and_resolve_locally(pair):
    sup, _ = pair
    gid = sup.register_component(object(), {})
    assert sup.resolve(gid) == 0
    assert gid.locality_id == 0


def test_register_on_remote_resolves_to_remote(pair):
    sup, _ = pair
    gid = sup.create_remote(1, "echo").get()
    assert sup.resolve(gid) == 1


def test_remote_echo_round_trip(pair):
    sup, _ = pair
    gid = sup.create_remote(1, "echo").get()
    assert sup.invoke(gid, 7, b"hello").get() == b"olleh"


def test_local_fast_path_echo(pair):
    sup, _ = pair
    gid = sup.create_remote(0, "echo").get()
    assert gid.locality_id == 0
    assert sup.invoke(gid, 7, b"abc").get() == b"cba"


def test_unknown_component_and_action_faults(pair):
    sup, _ = pair
    with pytest.raises(RemoteActionError, match="unknown component"):
        sup.invoke(Gid(1, 424242), 7, b"x").get()
    gid = sup.create_remote(1, "echo").get()
    with pytest.raises(RemoteActionError, match="unknown action"):
        sup.invoke(gid, 99, b"x").get()


def test_handler_exception_becomes_error_reply(pair):
    sup, wk = pair

    def boom_factory(payload, runtime):
        def handler(obj, data, rt):
            raise ValueError("handler exploded")

        return object(), {1: handler}

    wk.register_factory("boom", boom_factory)
    gid = sup.create_remote(1, "boom").get()
    with pytest.raises(RemoteActionError, match="handler exploded"):
        sup.invoke(gid, 1).get()


def test_actions_on_one_component_are_serialized(pair):
    sup, wk = pair
    state = {"active": 0, "peak": 0, "count": 0}
    lock = threading.Lock()

    def slow_factory(payload, runtime):
        def handler(obj, data, rt):
            with lock:
                state["active"] += 1
                state["peak"] = max(state["peak"], state["active"])
            for _ in range(1000):
                pass
            with lock:
                state["active"] -= 1
                state["count"] += 1
            return b""

        return object(), {1: handler}

    wk.register_factory("slow", slow_factory)
    gid = sup.create_remote(1, "slow").get()
    futs = [sup.invoke(gid, 1) for _ in range(64)]
    for f in futs:
        f.get()
    assert state["count"] == 64
    assert state["peak"] == 1


def _tcp_pair(port, threads=2, timeout=15.0):
    results = {}

    def worker():
        cfg = LocalityConfig(locality_count=2, is_worker=True, parcelport="tcp",
                             agas_endpoint=f"127.0.0.1:{port}",
                             own_endpoint="127.0.0.1:0", threads=threads,
                             timeout=timeout)
        rt = bootstrap(cfg)
        results["worker"] = rt
        rt.wait_shutdown(timeout=60)

    t = threading.Thread(target=worker, daemon=True)
    t.start()
    sup = bootstrap(LocalityConfig(locality_count=2, is_worker=False,
                                   parcelport="tcp",
                                   agas_endpoint=f"127.0.0.1:{port}",
                                   own_endpoint=f"127.0.0.1:{port}",
                                   threads=threads, timeout=timeout))
    return sup, t, results


def test_tcp_bootstrap_assigns_dense_ids_and_echoes():
    port = _free_port()
    sup, t, results = _tcp_pair(port)
    try:
        assert sup.locality_id == 0
        gid = sup.create_remote(1, "echo").get()
        assert gid.locality_id == 1
        assert sup.invoke(gid, 7, b"over tcp").get() == b"pct revo"
    finally:
        sup.shutdown_cluster()
        t.join(20)
    assert not t.is_alive()
    assert results["worker"].locality_id == 1


def test_tcp_thousand_concurrent_invokes_no_cross_wiring():
    port = _free_port()
    sup, t, _ = _tcp_pair(port)
    try:
        gid = sup.create_remote(1, "echo").get()
        futs = [(i, sup.invoke(gid, 7, f"msg-{i}".encode())) for i in range(1000)]
        for i, f in futs:
            assert f.get() == f"msg-{i}".encode()[::-1]
    finally:
        sup.shutdown_cluster()
        t.join(20)


def test_worker_with_unreachable_supervisor_times_out():
    dead = _free_port()  # nothing listening here
    cfg = LocalityConfig(locality_count=2, is_worker=True, parcelport="tcp",
                         agas_endpoint=f"127.0.0.1:{dead}",
                         own_endpoint="127.0.0.1:0", threads=1, timeout=1.0)
    with pytest.raises(StartupError, match="unreachable"):
        bootstrap(cfg)


def test_duplicate_endpoint_is_a_bind_error():
    port = _free_port()
    first = TcpPort(("127.0.0.1", port))
    try:
        with pytest.raises(BindError):
            TcpPort(("127.0.0.1", port))
    finally:
        first.close()


def test_debug_sequence_counters_accept_ordered_stream():
    # OCTASK_DEBUG_SEQ asserts strictly increasing invoke ids per
    # connection; a burst of ordered invokes over TCP must pass
    import os
    import subprocess
    import sys

    script = f"""
import threading
import tests.test_dist as td
from octask.dist import LocalityConfig, bootstrap
port = td._free_port()
sup, t, _ = td._tcp_pair(port)
gid = sup.create_remote(1, "echo").get()
for i in range(200):
    assert sup.invoke(gid, 7, str(i).encode()).get() == str(i).encode()[::-1]
sup.shutdown_cluster()
t.join(20)
print("seq-ok")
"""
    out = subprocess.run([sys.executable, "-c", script],
                         env={**os.environ, "OCTASK_DEBUG_SEQ": "1",
                              "PYTHONPATH": "."},
                         capture_output=True, text=True, cwd=_repo_root(),
                         timeout=120)
    assert out.returncode == 0, out.stdout + out.stderr
    assert "seq-ok" in out.stdout


def _repo_root():
    import pathlib
    return str(pathlib.Path(__file__).resolve().parent.parent)


def test_parse_endpoint():
    assert parse_endpoint("10.0.0.1:7910") == ("10.0.0.1", 7910)
    with pytest.raises(ValueError):
        parse_endpoint("nocolon")


def test_locality_config_validation():
    with pytest.raises(ValueError):
        LocalityConfig(locality_count=0)
    with pytest.raises(ValueError):
        LocalityConfig(parcelport="carrier-pigeon")


def test_oversize_payload_faults_the_invoke_future(pair):
    sup, _ = pair
    gid = sup.create_remote(1, "echo").get()
    blob = b"x" * (16 * 1024 * 1024 + 1)
    with pytest.raises(RemoteActionError, match="exceeds"):
        sup.invoke(gid, 7, blob).get()


def test_large_payload_under_the_cap_round_trips(pair):
    sup, _ = pair
    gid = sup.create_remote(1, "echo").get()
    blob = bytes(range(256)) * 4096  # 1 MiB
    assert sup.invoke(gid, 7, blob).get() == blob[::-1]
