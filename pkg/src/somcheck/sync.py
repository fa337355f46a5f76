"""Synchronization mechanisms that move ownership as they synchronize.

Each mechanism is represented in the ownership graph by a process of its own
(the *mechanism process*).  Adapters wrap a real blocking primitive and emit
their SOM statements while holding that primitive's internal lock, so the
order of statements in the session matches the real synchronization order.

Statements marked "issued by the mechanism" in the encoding are attributed to
the mechanism process even though the calling thread runs them.

The ``caller`` of an operation is the acting process's context (its thread
object, see :meth:`Session.on_thread_start`), unless ``context=`` is given.

==============  ==========================================================
operation       statements
==============  ==========================================================
Channel()       ``c := spawn``
send(o)         ``o.pass(owner, c)``
receive()       ``o.pass(c, caller)`` issued by ``c``
Lock(o)         ``l := spawn``; ``o.pass(owner, l)``
lock()          ``o.pass(l, caller)`` issued by ``l``
unlock()        ``o.pass(owner, l)``
RwLock(o)       ``l := spawn``; ``p := l.allocate``; ``o.pass(owner, p)``
lock_write()    ``o.pass(p, caller)`` issued by ``l``
unlock_write()  ``o.pass(owner, p)``
lock_read()     ``p.share(caller)`` issued by ``l``
unlock_read()   ``p.release(caller)``
==============  ==========================================================

``owner`` is the single direct owner of ``o`` at that moment.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from queue import Empty
from typing import Any, Callable

from .checker import OK, Actor, Session
from .graph import EntityId
from .semantics import Pass, Release, Share

__all__ = [
    "BinarySemaphore",
    "Channel",
    "Condition",
    "Empty",
    "Lock",
    "LockError",
    "Queue",
    "RwLock",
    "SomThread",
    "SyncEndpoint",
    "SyncKind",
    "som_id",
    "spawn_thread",
]


class LockError(RuntimeError):
    """Misuse refused by the primitive itself, before any SOM statement."""


class SyncKind(Enum):
    CHANNEL = "channel"
    QUEUE = "queue"
    LOCK = "lock"
    BINARY_SEMAPHORE = "binary_semaphore"
    RWLOCK = "rwlock"


@dataclass(frozen=True)
class SyncEndpoint:
    mechanism_pid: EntityId
    kind: SyncKind
    protected: EntityId | None = None
    proxy: EntityId | None = None


def som_id(x: Any) -> EntityId:
    """The resource id of a message: an EntityId or anything with ``som_id``."""
    if isinstance(x, EntityId):
        return x
    try:
        return x.som_id
    except AttributeError:
        raise TypeError(f"{x!r} is neither an EntityId nor carries a som_id") from None


def _first_failure(*results):
    for r in results:
        if not r:
            return r
    return OK


class _Mechanism:
    kind: SyncKind
    prefix = "sync"

    def __init__(self, session: Session, creator: Actor | EntityId, name: str | None = None):
        self.session = session
        self.pid = session.spawn(self._pid(creator), name=name or session.fresh_name(self.prefix), staging=False)

    @staticmethod
    def _pid(actor: Actor | EntityId) -> EntityId:
        return actor.pid if isinstance(actor, Actor) else actor

    def _caller(self, actor: Actor | EntityId, context: EntityId | None) -> tuple:
        pid = self._pid(actor)
        return pid, context if context is not None else self.session.context_of(pid)

    @property
    def endpoint(self) -> SyncEndpoint:
        return SyncEndpoint(self.pid, self.kind, getattr(self, "protected", None), getattr(self, "proxy", None))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.session.name_of(self.pid)})"


class Channel(_Mechanism):
    """Unbounded FIFO channel; ``receive`` blocks until a message arrives."""

    kind = SyncKind.CHANNEL
    prefix = "chan"

    def __init__(self, session: Session, creator: Actor | EntityId, name: str | None = None):
        super().__init__(session, creator, name)
        self._items: deque = deque()
        self._cond = threading.Condition()

    def send(self, actor: Actor | EntityId, msg):
        pid = self._pid(actor)
        with self._cond:
            r = self.session.transfer(pid, som_id(msg), self.pid)
            self._items.append(msg)
            self._cond.notify()
        return r

    def _deliver(self, actor, context):
        _, ctx = self._caller(actor, context)
        msg = self._items.popleft()
        self.session.check(self.pid, Pass(som_id(msg), self.pid, ctx))
        return msg

    def receive(self, actor: Actor | EntityId, *, context: EntityId | None = None):
        with self._cond:
            self._cond.wait_for(lambda: self._items)
            return self._deliver(actor, context)

    def __len__(self) -> int:
        return len(self._items)


class Queue(Channel):
    """Asynchronous variant: ``remove`` does not block unless asked to.

    Queued messages are owned by the queue process, so nobody may access them;
    :meth:`peek` hands out the reference without any ownership.
    """

    kind = SyncKind.QUEUE
    prefix = "queue"

    def add(self, actor: Actor | EntityId, msg):
        return self.send(actor, msg)

    def remove(self, actor: Actor | EntityId, *, block: bool = False, context: EntityId | None = None):
        with self._cond:
            if not self._items:
                if not block:
                    raise Empty
                self._cond.wait_for(lambda: self._items)
            return self._deliver(actor, context)

    def peek(self):
        with self._cond:
            if not self._items:
                raise Empty
            return self._items[0]


class Lock(_Mechanism):
    """Monitor: only the holder may unlock; supports condition variables."""

    kind = SyncKind.LOCK
    prefix = "lock"

    def __init__(self, session: Session, creator: Actor | EntityId, protected, name: str | None = None):
        super().__init__(session, creator, name)
        self.protected = som_id(protected)
        self._mutex = threading.Lock()
        self._holder: EntityId | None = None
        self.created = session.transfer(self._pid(creator), self.protected, self.pid)

    @property
    def holder(self) -> EntityId | None:
        return self._holder

    def lock(self, actor: Actor | EntityId, *, context: EntityId | None = None):
        pid, ctx = self._caller(actor, context)
        self._mutex.acquire()
        self._holder = pid
        return self.session.check(self.pid, Pass(self.protected, self.pid, ctx))

    def _check_holder(self, pid: EntityId, what: str) -> None:
        if self._holder != pid:
            holder = self.session.name_of(self._holder) if self._holder else "nobody"
            raise LockError(f"{self.session.name_of(pid)} cannot {what}: {self!r} is held by {holder}")

    def unlock(self, actor: Actor | EntityId):
        pid = self._pid(actor)
        self._check_holder(pid, "unlock")
        r = self.session.transfer(pid, self.protected, self.pid)
        self._holder = None
        self._mutex.release()
        return r

    def new_condition(self) -> Condition:
        return Condition(self)


class Condition:
    """Condition variable of a :class:`Lock`, signal-and-continue.

    Waiting gives the protected object back to the lock and receives it again
    on wakeup, exactly like an unlock followed by a lock.
    """

    def __init__(self, lock: Lock):
        self.lock = lock
        self._cond = threading.Condition(lock._mutex)

    def wait(self, actor: Actor | EntityId, *, context: EntityId | None = None):
        lk = self.lock
        pid, ctx = lk._caller(actor, context)
        lk._check_holder(pid, "wait")
        gave = lk.session.transfer(pid, lk.protected, lk.pid)
        lk._holder = None
        self._cond.wait()
        lk._holder = pid
        got = lk.session.check(lk.pid, Pass(lk.protected, lk.pid, ctx))
        return _first_failure(gave, got)

    def wait_for(self, actor: Actor | EntityId, predicate: Callable[[], bool], *, context: EntityId | None = None):
        result = OK
        while not predicate():
            result = _first_failure(result, self.wait(actor, context=context))
        return result

    def signal(self, actor: Actor | EntityId) -> None:
        self.lock._check_holder(self.lock._pid(actor), "signal")
        self._cond.notify()

    def signal_all(self, actor: Actor | EntityId) -> None:
        self.lock._check_holder(self.lock._pid(actor), "signal")
        self._cond.notify_all()


class BinarySemaphore(_Mechanism):
    """Like :class:`Lock` but any process may unlock; no condition variables."""

    kind = SyncKind.BINARY_SEMAPHORE
    prefix = "sem"

    def __init__(self, session: Session, creator: Actor | EntityId, protected, name: str | None = None):
        super().__init__(session, creator, name)
        self.protected = som_id(protected)
        self._sem = threading.Lock()
        self._mu = threading.Lock()
        self._locked = False
        self.created = session.transfer(self._pid(creator), self.protected, self.pid)

    @property
    def locked(self) -> bool:
        return self._locked

    def lock(self, actor: Actor | EntityId, *, context: EntityId | None = None):
        _, ctx = self._caller(actor, context)
        self._sem.acquire()
        with self._mu:
            self._locked = True
            return self.session.check(self.pid, Pass(self.protected, self.pid, ctx))

    def unlock(self, actor: Actor | EntityId):
        pid = self._pid(actor)
        with self._mu:
            if not self._locked:
                raise LockError(f"{self!r} is not locked")
            r = self.session.transfer(pid, self.protected, self.pid)
            self._locked = False
            self._sem.release()
        return r


class RwLock(_Mechanism):
    """Readers-writer lock granting shared read roots through a proxy."""

    kind = SyncKind.RWLOCK
    prefix = "rwlock"

    def __init__(self, session: Session, creator: Actor | EntityId, protected, name: str | None = None):
        super().__init__(session, creator, name)
        creator_pid = self._pid(creator)
        self.protected = som_id(protected)
        self.proxy = session.allocate(creator_pid, self.pid, session.fresh_name("proxy"))
        session.mark_proxy(self.proxy)
        self.created = session.transfer(creator_pid, self.protected, self.proxy)
        self._cond = threading.Condition()
        self._writer: EntityId | None = None
        self._readers: dict[EntityId, EntityId] = {}

    @property
    def readers(self) -> frozenset:
        return frozenset(self._readers)

    @property
    def writer(self) -> EntityId | None:
        return self._writer

    def lock_write(self, actor: Actor | EntityId, *, context: EntityId | None = None):
        pid, ctx = self._caller(actor, context)
        with self._cond:
            self._cond.wait_for(lambda: self._writer is None and not self._readers)
            self._writer = pid
            return self.session.check(self.pid, Pass(self.protected, self.proxy, ctx))

    def unlock_write(self, actor: Actor | EntityId):
        pid = self._pid(actor)
        with self._cond:
            if self._writer != pid:
                raise LockError(f"{self.session.name_of(pid)} does not hold the write lock of {self!r}")
            r = self.session.transfer(pid, self.protected, self.proxy)
            self._writer = None
            self._cond.notify_all()
        return r

    def lock_read(self, actor: Actor | EntityId, *, context: EntityId | None = None):
        pid, ctx = self._caller(actor, context)
        with self._cond:
            if pid in self._readers:
                raise LockError(f"{self.session.name_of(pid)} already holds a read lock of {self!r}")
            self._cond.wait_for(lambda: self._writer is None)
            self._readers[pid] = ctx
            return self.session.check(self.pid, Share(self.proxy, ctx))

    def unlock_read(self, actor: Actor | EntityId):
        pid = self._pid(actor)
        with self._cond:
            ctx = self._readers.pop(pid, None)
            if ctx is None:
                raise LockError(f"{self.session.name_of(pid)} holds no read lock of {self!r}")
            r = self.session.check(pid, Release(self.proxy, ctx))
            self._cond.notify_all()
        return r


class SomThread:
    """A thread whose body runs as its own SOM process.

    Construction allocates the thread object (staged for the parent, so fields
    assigned into it before start move along with it).  :meth:`start` spawns
    the process and passes it the thread object; ``target`` is then called as
    ``target(actor, *args)``.
    """

    def __init__(self, session: Session, parent: Actor | EntityId, target: Callable, args: tuple = (),
                 name: str | None = None):
        self.session = session
        self.parent = parent.pid if isinstance(parent, Actor) else parent
        self.name = name
        self.som_id = session.on_allocate(self.parent, name=session.fresh_name("thread"))
        self.pid: EntityId | None = None
        self.actor: Actor | None = None
        self.result = None
        self.error: BaseException | None = None
        self._target = target
        self._args = args
        self._thread: threading.Thread | None = None

    def start(self) -> SomThread:
        if self._thread is not None:
            # the second start still reaches the model, which flags it
            self.session.on_thread_start(self.parent, self.som_id)
            raise RuntimeError("thread already started")
        self.pid = self.session.on_thread_start(self.parent, self.som_id, name=self.name)
        self.actor = self.session.actor(self.pid)
        self._thread = threading.Thread(target=self._run, name=self.session.name_of(self.pid), daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        try:
            self.result = self._target(self.actor, *self._args)
        except BaseException as exc:  # surfaced by join()
            self.error = exc
        finally:
            self.session.terminate(self.pid)

    def join(self, timeout: float | None = None):
        if self._thread is None:
            raise RuntimeError("thread not started")
        self._thread.join(timeout)
        if self._thread.is_alive():
            raise TimeoutError(f"{self._thread.name} still running after {timeout}s")
        if self.error is not None:
            raise self.error
        return self.result


def spawn_thread(session: Session, parent: Actor | EntityId, target: Callable, *args,
                 name: str | None = None) -> SomThread:
    return SomThread(session, parent, target, args, name).start()
