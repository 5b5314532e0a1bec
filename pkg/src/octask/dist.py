"""Global address space, remote actions and parcelports.

Every locality runs a `Runtime`: a task pool, a component table and a
parcelport.  A Gid embeds its owning locality, so resolution is static
after bootstrap (components do not migrate).  Action execution is
serialized per component, giving each component single-writer semantics.

Two parcelports exist: `tcp` (real sockets, supervisor/delegate
bootstrap with handshake parcels) and `loopback` (several localities in
one process; parcels still round-trip through the wire codec).  Replies
travel back over the route the invoke arrived on and reuse the action_id
field as a status code: 0 ok, 1 error with a UTF-8 message payload.
"""

from __future__ import annotations

import os
import socket
import struct
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .runtime import FutureHandle, TaskPool
from . import wire
from .wire import Gid, Parcel

MANAGER_INDEX = 0
ACTION_CREATE = 1

_CTRL_REGISTER = b"R"
_CTRL_RELEASE = b"G"
_CTRL_PEER = b"P"
_CTRL_SHUTDOWN = b"S"

_DEBUG_SEQ = os.environ.get("OCTASK_DEBUG_SEQ", "") == "1"

# Factories registered at import time are visible to every runtime in the
# process; this closes the gap between a worker's release and its first
# chance to register app types.
GLOBAL_FACTORIES: dict[str, Callable] = {}


def register_global_factory(name: str, factory: Callable) -> None:
    GLOBAL_FACTORIES[name] = factory


class StartupError(RuntimeError):
    """Bootstrap failed (timeout, missing peers)."""


class BindError(RuntimeError):
    """Endpoint could not be bound."""


class RemoteActionError(RuntimeError):
    """An invocation failed (unknown target/action or handler fault)."""


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be HOST:PORT, got {text!r}")
    return host, int(port)


@dataclass
class LocalityConfig:
    locality_count: int = 1
    is_worker: bool = False
    parcelport: str = "loopback"
    agas_endpoint: Optional[str] = None
    own_endpoint: Optional[str] = None
    threads: int = 2
    timeout: float = 30.0

    def __post_init__(self):
        if self.locality_count < 1:
            raise ValueError("locality_count must be >= 1")
        if self.parcelport not in ("tcp", "loopback"):
            raise ValueError(f"unknown parcelport {self.parcelport!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


# ---------------------------------------------------------------------------
# payload helpers (length-prefixed strings, ids)

def pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def unpack_str(buf: bytes, off: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    return buf[off:off + n].decode("utf-8"), off + n


def pack_gid(gid: Gid) -> bytes:
    return struct.pack("<IQ", gid.locality_id, gid.local_index)


def unpack_gid(buf: bytes, off: int = 0) -> tuple[Gid, int]:
    loc, idx = struct.unpack_from("<IQ", buf, off)
    return Gid(loc, idx), off + 12


# ---------------------------------------------------------------------------
# component records with per-component serialized execution

class _ComponentRecord:
    __slots__ = ("obj", "actions", "lock", "queue", "running")

    def __init__(self, obj, actions):
        self.obj = obj
        self.actions = actions
        self.lock = threading.Lock()
        self.queue = deque()
        self.running = False


class Runtime:
    """One locality: component table, pending requests, parcelport."""

    def __init__(self, locality_id: int, locality_count: int, pool: TaskPool):
        self.locality_id = locality_id
        self.locality_count = locality_count
        self.pool = pool
        self._components: dict[int, _ComponentRecord] = {}
        self._comp_lock = threading.Lock()
        self._next_index = 0
        self._pending: dict[int, tuple[FutureHandle, int]] = {}
        self._send_lock = threading.Lock()
        self._next_req = 1
        self._factories: dict[str, Callable] = {}
        self._port = None
        self._shutdown_evt = threading.Event()
        self._supervisor_lost = False
        self._closed = False
        self.register_component(self, {ACTION_CREATE: _action_create})

    # -- registration -------------------------------------------------------

    def register_factory(self, name: str, factory: Callable) -> None:
        """factory(payload, runtime) -> (obj, actions) for remote creation."""
        self._factories[name] = factory

    def register_component(self, obj, actions: dict[int, Callable]) -> Gid:
        """Make `obj` invocable; returns its cluster-wide Gid.

        `actions` maps action ids to handler(obj, payload, runtime) -> bytes.
        """
        with self._comp_lock:
            index = self._next_index
            self._next_index += 1
            self._components[index] = _ComponentRecord(obj, actions)
        return Gid(self.locality_id, index)

    def component(self, gid: Gid):
        """Local object behind a Gid owned by this locality."""
        if gid.locality_id != self.locality_id:
            raise ValueError("gid is not local")
        return self._components[gid.local_index].obj

    @staticmethod
    def resolve(gid: Gid) -> int:
        """Owning locality of a component (static placement)."""
        return gid.locality_id

    # -- invocation -----------------------------------------------------------

    def invoke(self, gid: Gid, action_id: int, payload: bytes = b"") -> FutureHandle:
        """Run an action on the target component; future of the reply bytes.

        Local targets skip transport framing entirely; remote targets send
        an invoke parcel and settle on the reply.
        """
        fut = FutureHandle(self.pool)
        if gid.locality_id == self.locality_id:
            self._run_action(gid.local_index, action_id, payload,
                             lambda status, data: _settle(fut, status, data))
            return fut
        with self._send_lock:
            rid = self._next_req
            self._next_req += 1
            self._pending[rid] = (fut, gid.locality_id)
            try:
                self._port.send(gid.locality_id,
                                Parcel(wire.KIND_INVOKE, rid, gid, action_id, payload))
            except Exception as e:
                self._pending.pop(rid, None)
                fut._fault(RemoteActionError(f"send to locality {gid.locality_id} failed: {e}"))
        return fut

    def create_remote(self, locality_id: int, type_name: str,
                      payload: bytes = b"") -> FutureHandle:
        """Create a registered component type on a locality; future of Gid."""
        req = pack_str(type_name) + payload
        raw = self.invoke(Gid(locality_id, MANAGER_INDEX), ACTION_CREATE, req)
        out = FutureHandle(self.pool)

        def done():
            if raw._state == 2:  # faulted
                out._fault(raw._value)
            else:
                out._complete(unpack_gid(raw._value)[0])

        raw._on_settled(done)
        return out

    # -- parcels ----------------------------------------------------------------

    def _run_action(self, index: int, action_id: int, payload: bytes,
                    finish: Callable[[int, bytes], None]) -> None:
        rec = self._components.get(index)
        if rec is None:
            finish(1, f"unknown component {index} on locality {self.locality_id}".encode())
            return
        handler = rec.actions.get(action_id)
        if handler is None:
            finish(1, f"unknown action {action_id} for component {index}".encode())
            return

        def thunk():
            try:
                result = handler(rec.obj, payload, self)
                status, data = 0, result if result is not None else b""
            except Exception as e:
                status, data = 1, f"{type(e).__name__}: {e}".encode()
            try:
                finish(status, data)
            except Exception:
                # reply route is gone (teardown race); the requester's
                # pending future faults through the connection-loss path
                pass

        self._submit_serialized(rec, thunk)

    def _submit_serialized(self, rec: _ComponentRecord, thunk) -> None:
        with rec.lock:
            rec.queue.append(thunk)
            if rec.running:
                return
            rec.running = True

        def drain():
            while True:
                with rec.lock:
                    if not rec.queue:
                        rec.running = False
                        return
                    next_thunk = rec.queue.popleft()
                next_thunk()

        self.pool.spawn(drain)

    def _on_parcel(self, parcel: Parcel, reply_via: Callable[[Parcel], None]) -> None:
        if parcel.kind == wire.KIND_INVOKE:
            target = parcel.target
            rid = parcel.request_id
            if target.locality_id != self.locality_id:
                reply_via(Parcel(wire.KIND_REPLY, rid, target, 1,
                                 b"parcel routed to wrong locality"))
                return

            def finish(status, data):
                reply_via(Parcel(wire.KIND_REPLY, rid, target, status, data))

            self._run_action(target.local_index, parcel.action_id, parcel.payload, finish)
        elif parcel.kind == wire.KIND_REPLY:
            entry = self._pending.pop(parcel.request_id, None)
            if entry is None:
                return  # late reply after a fault; drop
            _settle(entry[0], parcel.action_id, parcel.payload)
        else:  # handshake/control
            if parcel.payload[:1] == _CTRL_SHUTDOWN:
                self._shutdown_evt.set()

    def _connection_lost(self, locality_id: Optional[int], reason: str) -> None:
        dropped = []
        with self._send_lock:
            for rid, (fut, dst) in list(self._pending.items()):
                if locality_id is None or dst == locality_id:
                    dropped.append(fut)
                    del self._pending[rid]
        for fut in dropped:
            fut._fault(RemoteActionError(f"connection lost: {reason}"))
        if locality_id == 0 and self.locality_id != 0 \
                and not self._shutdown_evt.is_set():
            # a delegate without its supervisor has nothing left to serve;
            # EOF after a clean shutdown parcel is the normal teardown order
            self._supervisor_lost = True
            self._shutdown_evt.set()

    # -- lifecycle ------------------------------------------------------------

    def wait_shutdown(self, timeout: Optional[float] = None) -> bool:
        """Serve until the supervisor sends the shutdown control parcel."""
        ok = self._shutdown_evt.wait(timeout)
        if ok:
            self.close()
        return ok

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._port is not None:
            self._port.close()
        self.pool.wait_quiescent()
        self.pool.shutdown()

    def shutdown_cluster(self) -> None:
        """Supervisor: release workers with shutdown parcels, then close."""
        if self._port is not None:
            for loc in range(1, self.locality_count):
                try:
                    self._port.send(loc, Parcel(wire.KIND_HANDSHAKE, 0,
                                                Gid(loc, 0), 0, _CTRL_SHUTDOWN))
                except Exception:
                    pass
        self.close()

    def run(self, fn, *args):
        """Run `fn` as the application root task and wait for it."""
        fut = self.pool.spawn(fn, *args)
        return fut._wait_settled()()


def _settle(fut: FutureHandle, status: int, data: bytes) -> None:
    if status == 0:
        fut._complete(data)
    else:
        fut._fault(RemoteActionError(data.decode("utf-8", "replace")))


def _action_create(runtime_obj, payload, runtime: Runtime) -> bytes:
    name, off = unpack_str(payload, 0)
    factory = runtime._factories.get(name) or GLOBAL_FACTORIES.get(name)
    if factory is None:
        raise RemoteActionError(f"no factory registered for {name!r}")
    obj, actions = factory(payload[off:], runtime)
    return pack_gid(runtime.register_component(obj, actions))


# ---------------------------------------------------------------------------
# loopback parcelport: several localities in one process

class _LoopbackPort:
    def __init__(self, hub: "LoopbackHub", locality_id: int):
        self._hub = hub
        self._id = locality_id

    def send(self, dst: int, parcel: Parcel) -> None:
        self._hub.deliver(self._id, dst, wire.encode(parcel))

    def close(self) -> None:
        pass


class LoopbackHub:
    """In-process parcel switch; frames still pass through the codec."""

    def __init__(self):
        self.runtimes: dict[int, Runtime] = {}

    def attach(self, runtime: Runtime) -> None:
        runtime._port = _LoopbackPort(self, runtime.locality_id)
        self.runtimes[runtime.locality_id] = runtime

    def deliver(self, src: int, dst: int, frame: bytes) -> None:
        rt = self.runtimes.get(dst)
        if rt is None:
            raise RemoteActionError(f"no locality {dst} on the loopback hub")
        parcel = wire.decode(frame)
        rt._on_parcel(parcel, lambda reply: self.deliver(dst, src, wire.encode(reply)))


def loopback_group(locality_count: int, threads: int = 2) -> list[Runtime]:
    """All localities of a job in one process, wired by loopback parcels."""
    hub = LoopbackHub()
    group = []
    for loc in range(locality_count):
        rt = Runtime(loc, locality_count, TaskPool(threads))
        hub.attach(rt)
        group.append(rt)
    return group


# ---------------------------------------------------------------------------
# TCP parcelport

def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return buf


def _read_frame(sock: socket.socket) -> Parcel:
    (n,) = struct.unpack("<I", _recv_exact(sock, 4))
    if n > wire.HEADER_SIZE + wire.MAX_PAYLOAD:
        raise wire.DecodeError("length_prefix", f"frame of {n} bytes exceeds limit")
    return wire.decode_body(_recv_exact(sock, n))


class _Conn:
    __slots__ = ("sock", "lock", "peer", "last_recv_invoke")

    def __init__(self, sock, peer=None):
        self.sock = sock
        self.lock = threading.Lock()
        self.peer = peer
        self.last_recv_invoke = 0

    def send(self, parcel: Parcel) -> None:
        data = wire.encode(parcel)
        with self.lock:
            self.sock.sendall(data)


class TcpPort:
    """Socket transport with a listener for inbound peers."""

    def __init__(self, own_endpoint: tuple[str, int]):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind(own_endpoint)
        except OSError as e:
            self._listener.close()
            raise BindError(f"cannot bind {own_endpoint[0]}:{own_endpoint[1]}: {e}") from e
        self._listener.listen(16)
        self.endpoint = self._listener.getsockname()
        self._conns: dict[int, _Conn] = {}
        self._conn_lock = threading.Lock()
        self._runtime: Optional[Runtime] = None
        self._endpoints: dict[int, tuple[str, int]] = {}
        self._closing = False
        self._registrations: list[tuple[_Conn, tuple[str, int]]] = []
        self._reg_cond = threading.Condition()
        self._threads: list[threading.Thread] = []

    # -- wiring -----------------------------------------------------------

    def start(self, runtime: Runtime, endpoints: dict[int, tuple[str, int]]) -> None:
        self._runtime = runtime
        self._endpoints = endpoints
        runtime._port = self
        t = threading.Thread(target=self._accept_loop, name="octask-accept", daemon=True)
        t.start()
        self._threads.append(t)

    def attach(self, locality_id: int, conn: _Conn) -> None:
        conn.peer = locality_id
        with self._conn_lock:
            self._conns.setdefault(locality_id, conn)
        t = threading.Thread(target=self._read_loop, args=(conn,),
                             name=f"octask-read-{locality_id}", daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self):
        while not self._closing:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._greet, args=(sock,), daemon=True).start()

    def _greet(self, sock):
        # first frame announces the peer: worker registration or peer link
        try:
            first = _read_frame(sock)
        except Exception:
            sock.close()
            return
        if first.kind != wire.KIND_HANDSHAKE:
            sock.close()
            return
        tag = first.payload[:1]
        if tag == _CTRL_REGISTER:
            endpoint_text, _ = unpack_str(first.payload, 1)
            with self._reg_cond:
                self._registrations.append((_Conn(sock), parse_endpoint(endpoint_text)))
                self._reg_cond.notify_all()
        elif tag == _CTRL_PEER:
            (loc,) = struct.unpack_from("<I", first.payload, 1)
            self.attach(loc, _Conn(sock, loc))
        else:
            sock.close()

    def wait_registrations(self, count: int, timeout: float) -> list[tuple[_Conn, tuple[str, int]]]:
        deadline = time.monotonic() + timeout
        with self._reg_cond:
            while len(self._registrations) < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise StartupError(
                        f"only {len(self._registrations)} of {count} workers "
                        f"registered within {timeout:.1f} s")
                self._reg_cond.wait(remaining)
            return list(self._registrations)

    def _read_loop(self, conn: _Conn):
        runtime = self._runtime
        while True:
            try:
                parcel = _read_frame(conn.sock)
            except Exception as e:
                if not self._closing:
                    runtime._connection_lost(conn.peer, str(e))
                return
            if _DEBUG_SEQ and parcel.kind == wire.KIND_INVOKE:
                assert parcel.request_id > conn.last_recv_invoke, \
                    "invoke parcels arrived out of order"
                conn.last_recv_invoke = parcel.request_id
            try:
                runtime._on_parcel(parcel, conn.send)
            except Exception:
                # dispatch must not kill the reader; surface the defect
                import traceback
                print("octask: parcel dispatch failed", file=sys.stderr)
                traceback.print_exc()

    # -- sending ------------------------------------------------------------

    def send(self, dst: int, parcel: Parcel) -> None:
        conn = self._conns.get(dst)
        if conn is None:
            conn = self._dial(dst)
        conn.send(parcel)

    def _dial(self, dst: int) -> _Conn:
        with self._conn_lock:
            conn = self._conns.get(dst)
            if conn is not None:
                return conn
            endpoint = self._endpoints.get(dst)
            if endpoint is None:
                raise ConnectionError(f"no endpoint known for locality {dst}")
            sock = socket.create_connection(endpoint, timeout=10.0)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.settimeout(None)
            conn = _Conn(sock, dst)
            hello = Parcel(wire.KIND_HANDSHAKE, 0, Gid(dst, 0), 0,
                           _CTRL_PEER + struct.pack("<I", self._runtime.locality_id))
            conn.send(hello)
            self._conns[dst] = conn
        t = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
        t.start()
        self._threads.append(t)
        return conn

    def close(self) -> None:
        self._closing = True
        try:
            self._listener.close()
        except OSError:
            pass
        for conn in list(self._conns.values()):
            try:
                conn.sock.close()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# bootstrap

def bootstrap(config: LocalityConfig) -> Runtime:
    """Start one locality per the config and return its runtime.

    The supervisor (is_worker=False) waits until all workers register,
    assigns dense ids in arrival order and releases them with the
    endpoint table.  Workers connect to the agas endpoint, register, and
    serve after release (`wait_shutdown`).  Loopback jobs with more than
    one locality live in one process; use `loopback_group` for those.
    """
    if config.parcelport == "loopback":
        if config.locality_count != 1 or config.is_worker:
            raise ValueError("multi-locality loopback jobs are built with loopback_group()")
        rt = Runtime(0, 1, TaskPool(config.threads))
        LoopbackHub().attach(rt)
        return rt

    if config.own_endpoint is None:
        raise ValueError("tcp parcelport needs own_endpoint")
    own = parse_endpoint(config.own_endpoint)

    if not config.is_worker:
        rt = Runtime(0, config.locality_count, TaskPool(config.threads))
        port = TcpPort(own)
        endpoints = {0: port.endpoint}
        port.start(rt, endpoints)
        if config.locality_count > 1:
            regs = port.wait_registrations(config.locality_count - 1, config.timeout)
            for i, (conn, endpoint) in enumerate(regs):
                endpoints[i + 1] = endpoint
            table = struct.pack("<I", len(endpoints))
            for loc in sorted(endpoints):
                host, p = endpoints[loc]
                table += struct.pack("<I", loc) + pack_str(f"{host}:{p}")
            for i, (conn, _) in enumerate(regs):
                loc = i + 1
                release = _CTRL_RELEASE + struct.pack("<II", loc, config.locality_count) + table
                conn.send(Parcel(wire.KIND_HANDSHAKE, 0, Gid(loc, 0), 0, release))
                port.attach(loc, conn)
        return rt

    # worker: connect to the supervisor, register, await release
    if config.agas_endpoint is None:
        raise ValueError("workers need agas_endpoint")
    agas = parse_endpoint(config.agas_endpoint)
    deadline = time.monotonic() + config.timeout
    sock = None
    while True:
        try:
            sock = socket.create_connection(agas, timeout=1.0)
            break
        except OSError as e:
            if time.monotonic() >= deadline:
                raise StartupError(
                    f"supervisor at {config.agas_endpoint} unreachable "
                    f"within {config.timeout:.1f} s: {e}") from e
            time.sleep(0.1)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    port = TcpPort(own)
    host, p = port.endpoint
    conn = _Conn(sock)
    conn.send(Parcel(wire.KIND_HANDSHAKE, 0, Gid(0, 0), 0,
                     _CTRL_REGISTER + pack_str(f"{host}:{p}")))
    sock.settimeout(config.timeout)
    try:
        release = _read_frame(sock)
    except Exception as e:
        raise StartupError(f"no release from supervisor: {e}") from e
    sock.settimeout(None)
    if release.kind != wire.KIND_HANDSHAKE or release.payload[:1] != _CTRL_RELEASE:
        raise StartupError("unexpected parcel during bootstrap")
    my_id, count = struct.unpack_from("<II", release.payload, 1)
    (n_eps,) = struct.unpack_from("<I", release.payload, 9)
    endpoints = {}
    off = 13
    for _ in range(n_eps):
        (loc,) = struct.unpack_from("<I", release.payload, off)
        text, off = unpack_str(release.payload, off + 4)
        endpoints[loc] = parse_endpoint(text)
    rt = Runtime(my_id, count, TaskPool(config.threads))
    port.start(rt, endpoints)
    port.attach(0, conn)
    return rt
