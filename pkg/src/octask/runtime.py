"""Lightweight task runtime: worker pool, one-shot futures, continuations.

Tasks run in greenlets on a fixed pool of worker threads.  A task that
waits on a pending future or a held mutex switches back to its worker's
scheduler greenlet instead of blocking the thread, and is re-queued when
woken; the worker keeps executing other tasks meanwhile.  Fresh tasks are
stealable (random victim, one from the tail); a started task is pinned to
the worker that first ran it, because its context lives on that thread.

Futures are single-consumer: `then` or `get` may claim a future once.
Readiness callbacks fire on the completing thread, user continuations are
scheduled as tasks.
"""

from __future__ import annotations

import random
import sys
import threading
import traceback
from collections import deque
from typing import Any, Callable, Iterable, Optional

import greenlet

_PENDING = 0
_READY = 1
_FAULTED = 2

_tls = threading.local()


class SchedulerShutdownError(RuntimeError):
    """Raised when spawning onto a pool that has been shut down."""


class FutureConsumedError(RuntimeError):
    """Raised when a future is claimed by then/get more than once."""


def _fire_callbacks(callbacks):
    # Iterative drain shared per OS thread: callbacks fired while another
    # drain is running are appended to it, so long completion chains never
    # recurse.  Callbacks here are internal and never block.
    q = getattr(_tls, "drain", None)
    if q is not None:
        q.extend(callbacks)
        return
    _tls.drain = q = deque(callbacks)
    try:
        while q:
            q.popleft()()
    finally:
        _tls.drain = None


class FutureHandle:
    """One-shot value slot with attachable continuations."""

    __slots__ = ("_lock", "_state", "_value", "_callbacks", "_consumed", "_pool")

    def __init__(self, pool: "TaskPool | None" = None):
        self._lock = threading.Lock()
        self._state = _PENDING
        self._value: Any = None
        self._callbacks: list | None = []
        self._consumed = False
        self._pool = pool

    @classmethod
    def ready(cls, value: Any) -> "FutureHandle":
        f = cls()
        f._state = _READY
        f._value = value
        f._callbacks = None
        return f

    @classmethod
    def faulted(cls, error: BaseException) -> "FutureHandle":
        f = cls()
        f._state = _FAULTED
        f._value = error
        f._callbacks = None
        return f

    # -- state ------------------------------------------------------------

    def done(self) -> bool:
        return self._state != _PENDING

    @property
    def state(self) -> str:
        return ("pending", "ready", "faulted")[self._state]

    # -- completion (runtime side) -----------------------------------------

    def _settle(self, state, value):
        with self._lock:
            if self._state != _PENDING:
                raise RuntimeError("future settled twice")
            self._state = state
            self._value = value
            callbacks, self._callbacks = self._callbacks, None
        if callbacks:
            _fire_callbacks(callbacks)

    def _complete(self, value):
        self._settle(_READY, value)

    def _fault(self, error):
        self._settle(_FAULTED, error)

    def _on_settled(self, cb):
        # cb() runs after the transition, on the completing thread; it must
        # not block.  Fires immediately when already settled.
        with self._lock:
            if self._callbacks is not None:
                self._callbacks.append(cb)
                return
        _fire_callbacks((cb,))

    def _result(self):
        if self._state == _READY:
            return self._value
        raise self._value

    def _consume(self, what):
        with self._lock:
            if self._consumed:
                raise FutureConsumedError(f"future already consumed ({what})")
            self._consumed = True

    def _wait_settled(self, timeout=None):
        # Non-consuming wait usable from any context.
        if self._state == _PENDING:
            ctx = getattr(_tls, "ctx", None)
            if ctx is not None:
                # One registered wake pairs with exactly one switch-out; the
                # wake may fire before the switch, the resume entry then waits
                # for the scheduler.
                pool = ctx.pool
                self._on_settled(pool._make_wake(ctx))
                pool._switch_out(ctx)
            else:
                ev = threading.Event()
                self._on_settled(ev.set)
                if not ev.wait(timeout):
                    raise TimeoutError("future still pending after timeout")
        return self._result

    # -- consumption (user side) -------------------------------------------

    def get(self, timeout: Optional[float] = None) -> Any:
        """Return the value, waiting for readiness; re-raises a fault.

        From inside a task the wait suspends the task, giving the worker
        to other work (the timeout applies only to waits from plain
        threads).  From outside the pool it blocks the calling thread.
        """
        self._consume("get")
        return self._wait_settled(timeout)()

    def then(self, fn: Callable[[Any], Any]) -> "FutureHandle":
        """Chain `fn` to run on this future's value; faults skip `fn`.

        On a pool-bound future `fn` runs as a task; on a bare future it
        runs inline on whichever thread completes this one, so it should
        not block there.
        """
        self._consume("then")
        out = FutureHandle(self._pool)

        def fire():
            if self._state == _FAULTED:
                out._fault(self._value)
                return
            value = self._value
            pool = self._pool

            def run():
                return fn(value)

            if pool is None:
                try:
                    out._complete(run())
                except Exception as e:
                    out._fault(e)
            else:
                try:
                    pool._spawn_into(run, out)
                except SchedulerShutdownError as e:
                    out._fault(e)

        self._on_settled(fire)
        return out


def when_all(futures: Iterable[FutureHandle]) -> FutureHandle:
    """Future of all input values in input order; faults if any input does.

    Settles only after every input settles; with several faults the first
    one in input order wins.
    """
    fs = list(futures)
    pool = next((f._pool for f in fs if f._pool is not None), None)
    out = FutureHandle(pool)
    if not fs:
        out._complete([])
        return out
    for f in fs:
        f._consume("when_all")
    remaining = [len(fs)]
    lock = threading.Lock()

    def one_settled():
        with lock:
            remaining[0] -= 1
            if remaining[0]:
                return
        for f in fs:
            if f._state == _FAULTED:
                out._fault(f._value)
                return
        out._complete([f._value for f in fs])

    for f in fs:
        f._on_settled(one_settled)
    return out


class _TaskCtx:
    __slots__ = ("fn", "future", "glet", "worker", "pool")

    def __init__(self, fn, future, pool):
        self.fn = fn
        self.future = future
        self.pool = pool
        self.glet = None
        self.worker = None


class _Worker:
    __slots__ = ("index", "thread", "tasks", "resumes", "sched_glet")

    def __init__(self, index):
        self.index = index
        self.thread = None
        self.tasks = deque()      # fresh tasks, newest at the right
        self.resumes = deque()    # woken suspended tasks (pinned here)
        self.sched_glet = None


class TaskPool:
    """Fixed-size worker pool executing suspendable tasks."""

    def __init__(self, workers: int):
        if workers < 1:
            raise ValueError("worker count must be >= 1")
        self.worker_count = workers
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._workers = [_Worker(i) for i in range(workers)]
        self._inject = deque()
        self._live = 0
        self._shutdown = False
        self._rng = random.Random(0x5EED)
        for w in self._workers:
            t = threading.Thread(
                target=self._worker_main, args=(w,),
                name=f"octask-worker-{w.index}", daemon=True,
            )
            w.thread = t
            t.start()

    # -- submission ---------------------------------------------------------

    def spawn(self, fn: Callable[..., Any], *args, **kwargs) -> FutureHandle:
        """Run `fn(*args)` as a task; the future carries its result or fault."""
        if args or kwargs:
            inner = fn

            def fn():
                return inner(*args, **kwargs)

        fut = FutureHandle(self)
        self._spawn_into(fn, fut)
        return fut

    def _spawn_into(self, fn, fut):
        ctx = _TaskCtx(fn, fut, self)
        with self._lock:
            if self._shutdown:
                raise SchedulerShutdownError("task pool is shut down")
            self._live += 1
            w = getattr(_tls, "worker", None)
            if w is not None and getattr(_tls, "pool", None) is self:
                w.tasks.append(ctx)
            else:
                self._inject.append(ctx)
            self._cond.notify_all()

    # -- worker loop ----------------------------------------------------------

    def _worker_main(self, w):
        _tls.pool = self
        _tls.worker = w
        w.sched_glet = greenlet.getcurrent()
        while True:
            with self._lock:
                ctx = self._pick(w)
                while ctx is None:
                    if self._shutdown:
                        return
                    self._cond.wait()
                    ctx = self._pick(w)
            _tls.ctx = ctx
            try:
                if ctx.glet is None:
                    ctx.worker = w
                    ctx.glet = greenlet.greenlet(self._task_entry)
                    ctx.glet.switch(ctx)
                else:
                    ctx.glet.switch()
            except Exception:
                # task bodies are caught in _task_entry; anything escaping a
                # task greenlet is a runtime defect. Keep the worker alive
                # and make the defect loud.
                print("octask: internal error escaped a task greenlet",
                      file=sys.stderr)
                traceback.print_exc()
            finally:
                _tls.ctx = None

    def _pick(self, w):
        if w.resumes:
            return w.resumes.popleft()
        if w.tasks:
            return w.tasks.pop()
        if self._inject:
            return self._inject.popleft()
        n = len(self._workers)
        if n > 1:
            start = self._rng.randrange(n)
            for k in range(n):
                v = self._workers[(start + k) % n]
                if v is not w and v.tasks:
                    return v.tasks.popleft()
        return None

    def _task_entry(self, ctx):
        try:
            try:
                value = ctx.fn()
            except Exception as e:
                ctx.future._fault(e)
            else:
                ctx.future._complete(value)
        finally:
            with self._lock:
                self._live -= 1
                if self._live == 0:
                    self._cond.notify_all()

    # -- suspension ---------------------------------------------------------

    def _make_wake(self, ctx):
        def wake():
            with self._lock:
                ctx.worker.resumes.append(ctx)
                self._cond.notify_all()

        return wake

    def _switch_out(self, ctx):
        ctx.worker.sched_glet.switch()

    # -- lifecycle ------------------------------------------------------------

    def wait_quiescent(self) -> None:
        """Block until every spawned task has finished."""
        with self._lock:
            while self._live:
                self._cond.wait()

    def shutdown(self) -> None:
        with self._lock:
            self._shutdown = True
            self._cond.notify_all()
        for w in self._workers:
            if w.thread is not threading.current_thread():
                w.thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.wait_quiescent()
        self.shutdown()


def current_pool() -> Optional[TaskPool]:
    """Pool of the currently executing task, if any."""
    ctx = getattr(_tls, "ctx", None)
    return ctx.pool if ctx is not None else None


def run_with_workers(workers: int, root: Callable[[], Any], *args) -> Any:
    """Run `root` on a fresh pool, drain all reachable tasks, shut down.

    Returns root's value; a fault in root is re-raised after the drain.
    """
    pool = TaskPool(workers)
    try:
        fut = pool.spawn(root, *args)
        result = fut._wait_settled()
        pool.wait_quiescent()
        return result()
    finally:
        pool.shutdown()


class YieldingMutex:
    """Mutex that suspends a blocked task instead of blocking its worker.

    Ownership hands off FIFO.  Non-task threads may also lock; they block
    on an event.  Not reentrant.
    """

    def __init__(self):
        self._lk = threading.Lock()
        self._owner = None
        self._queue = deque()

    def lock(self) -> None:
        ctx = getattr(_tls, "ctx", None)
        if ctx is None:
            me = threading.current_thread()
            with self._lk:
                if self._owner is None:
                    self._owner = me
                    return
                ev = threading.Event()
                self._queue.append((me, ev.set))
            ev.wait()
            return
        wake = ctx.pool._make_wake(ctx)
        with self._lk:
            if self._owner is None:
                self._owner = ctx
                return
            self._queue.append((ctx, wake))
        ctx.pool._switch_out(ctx)

    def unlock(self) -> None:
        with self._lk:
            if self._owner is None:
                raise RuntimeError("unlock of an unowned mutex")
            if self._queue:
                nxt, signal = self._queue.popleft()
                self._owner = nxt
            else:
                self._owner = None
                signal = None
        if signal is not None:
            signal()

    def __enter__(self):
        self.lock()
        return self

    def __exit__(self, *exc):
        self.unlock()
