"""Instrumented base-object memory.

Algorithms are written as generators that yield base-object operations
(:class:`Read`, :class:`Write`, :class:`Atomic`) and zero-cost markers
(:class:`TmMark` for tm-operation invocations/responses, :class:`OpMark` for
lock and plumbing operations, :class:`Spin` at the end of a failed busy-wait
iteration).  A driver in :mod:`stmlab.sched` feeds each operation to a
:class:`SharedMemory`, which applies it atomically and appends it to the
execution trace.

Every access goes through one re-entrant lock, so the memory is
sequentially consistent under native threads as well.
"""

from __future__ import annotations

import itertools
import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, NamedTuple, Optional, Union

from .core import (
    INVOCATIONS,
    History,
    Outcome,
    TmEvent,
)

MAX_ATOMIC_OPS = 64


class MemoryFault(Exception):
    """Misuse of the base-object memory (bad id, nesting, access outside an operation)."""


class BaseWord(NamedTuple):
    """Content of a base object: a value and the id of the transaction that wrote it."""

    value: int = 0
    writer: int = 0


ZERO = BaseWord(0, 0)


@dataclass(frozen=True)
class BaseObject:
    index: int
    name: str
    tag: Optional[int] = None  # owning t-object, for partitioning checks


READ = "read"
WRITE = "write"
ATOMIC_BEGIN = "atomic-begin"
ATOMIC_END = "atomic-end"


@dataclass(frozen=True)
class BaseEvent:
    seq: int
    process: int
    tx: int
    kind: str
    object: Optional[int] = None
    value: Optional[BaseWord] = None
    nontrivial: bool = False
    depth: int = 0  # 1 inside an atomic section

    def to_dict(self) -> dict:
        return {
            "event": "base",
            "seq": self.seq,
            "kind": self.kind,
            "tx": self.tx,
            "process": self.process,
            "object": self.object,
            "value": None if self.value is None else list(self.value),
            "nontrivial": self.nontrivial,
            "atomic-depth": self.depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaseEvent":
        v = d.get("value")
        return cls(
            seq=d["seq"],
            process=d["process"],
            tx=d["tx"],
            kind=d["kind"],
            object=d.get("object"),
            value=None if v is None else BaseWord(*v),
            nontrivial=d.get("nontrivial", False),
            depth=d.get("atomic-depth", 0),
        )


@dataclass(frozen=True)
class Mark:
    """Invocation/response of a non-tm operation (lock acquire/release, begin)."""

    seq: int
    process: int
    tx: int
    op: str
    phase: str  # "inv" | "resp"
    objects: tuple = ()
    result: Any = None

    def to_dict(self) -> dict:
        return {
            "event": "mark",
            "seq": self.seq,
            "kind": f"{self.phase}-{self.op}",
            "tx": self.tx,
            "process": self.process,
            "objects": list(self.objects),
            "result": self.result,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mark":
        phase, op = d["kind"].split("-", 1)
        return cls(d["seq"], d["process"], d["tx"], op, phase, tuple(d.get("objects", ())), d.get("result"))


TraceEvent = Union[BaseEvent, TmEvent, Mark]


# -- operations yielded by algorithm generators ---------------------------


class Read(NamedTuple):
    obj: int


class Write(NamedTuple):
    obj: int
    word: BaseWord


class Atomic(NamedTuple):
    """A bounded atomic section.  ``body`` receives an :class:`AtomicView`."""

    body: Callable[["AtomicView"], Any]
    may_write: bool = True
    label: str = ""


class TmMark(NamedTuple):
    kind: str
    tx: int
    obj: Optional[int] = None
    value: Optional[int] = None
    outcome: Optional[Outcome] = None

    @property
    def is_invocation(self) -> bool:
        return self.kind in INVOCATIONS


class OpMark(NamedTuple):
    op: str
    phase: str
    tx: int = 0
    objects: tuple = ()
    result: Any = None

    @property
    def is_invocation(self) -> bool:
        return self.phase == "inv"


class Spin(NamedTuple):
    """End of a busy-wait iteration that must be retried.

    ``observed`` holds the (object, word) pairs the iteration read; the
    retry can only behave differently once one of them changes."""

    observed: tuple


BASE_OPS = (Read, Write, Atomic)


# -- traces ------------------------------------------------------------------


@dataclass
class ExecutionTrace:
    """Globally ordered base events, tm-events and marks of one run."""

    events: list = field(default_factory=list)
    objects: list = field(default_factory=list)  # BaseObject catalogue
    complete: bool = True
    schedule: Optional[list] = None
    notes: list = field(default_factory=list)

    @property
    def history(self) -> History:
        return History(e for e in self.events if isinstance(e, TmEvent))

    @property
    def base_events(self) -> list[BaseEvent]:
        return [e for e in self.events if isinstance(e, BaseEvent)]

    @property
    def marks(self) -> list[Mark]:
        return [e for e in self.events if isinstance(e, Mark)]

    def key(self) -> tuple:
        """Identity of the run ignoring absolute sequence numbers."""
        out = []
        for e in self.events:
            d = e.to_dict()
            d.pop("seq")
            out.append(tuple(sorted((k, repr(v)) for k, v in d.items())))
        return tuple(out)

    def beta(self) -> dict[int, set[int]]:
        """Ownership map t-object -> base objects, from object tags."""
        out: dict[int, set[int]] = defaultdict(set)
        for o in self.objects:
            if o.tag is not None:
                out[o.tag].add(o.index)
        return dict(out)

    def to_jsonl(self) -> str:
        lines = []
        for e in self.events:
            d = e.to_dict()
            if isinstance(e, TmEvent):
                d["event"] = "tm"
            lines.append(json.dumps(d))
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_jsonl(cls, text: str) -> "ExecutionTrace":
        events: list = []
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            kind = d.get("event", "tm")
            if kind == "base":
                events.append(BaseEvent.from_dict(d))
            elif kind == "mark":
                events.append(Mark.from_dict(d))
            else:
                events.append(TmEvent.from_dict(d))
        return cls(events)


# -- the memory --------------------------------------------------------------


class AtomicView:
    """Access handle passed to an atomic-section body."""

    def __init__(self, mem: "SharedMemory", process: int, limit: int = MAX_ATOMIC_OPS):
        self._mem = mem
        self._p = process
        self._left = limit

    def _tick(self):
        self._left -= 1
        if self._left < 0:
            raise MemoryFault("atomic section exceeds its bound on base-object operations")

    def read(self, o: int) -> BaseWord:
        self._tick()
        return self._mem._do_read(self._p, o, depth=1)

    def write(self, o: int, w: BaseWord) -> None:
        self._tick()
        self._mem._do_write(self._p, o, w, depth=1)


class SharedMemory:
    """Base objects plus the trace of every access made to them.

    With ``strict=True`` a base access is a fault unless the process is
    inside some operation (tm-operation or marked plumbing operation).
    """

    def __init__(self, strict: bool = True):
        self.strict = strict
        self.objects: list[BaseObject] = []
        self.words: list[BaseWord] = []
        self.events: list[TraceEvent] = []
        self._seq = itertools.count()
        self._lock = threading.RLock()
        self._changed = threading.Condition(self._lock)
        self._open: dict[int, int] = defaultdict(int)
        self._tx: dict[int, int] = defaultdict(int)
        self._in_atomic: set[int] = set()

    def alloc(self, name: str, tag: Optional[int] = None, init: BaseWord = ZERO) -> int:
        idx = len(self.objects)
        self.objects.append(BaseObject(idx, name, tag))
        self.words.append(init)
        return idx

    def snapshot(self) -> tuple:
        return tuple(self.words)

    def peek(self, o: int) -> BaseWord:
        """Current word without recording an event (for checkers and tests)."""
        return self.words[o]

    # -- recorded accesses -------------------------------------------------

    def _check(self, p: int, o: int):
        if not 0 <= o < len(self.words):
            raise MemoryFault(f"base object {o} out of range")
        if self.strict and self._open[p] <= 0:
            raise MemoryFault(f"process {p} accesses base object {o} outside any operation")

    def _do_read(self, p, o, depth=0) -> BaseWord:
        self._check(p, o)
        w = self.words[o]
        self.events.append(BaseEvent(next(self._seq), p, self._tx[p], READ, o, w, False, depth))
        return w

    def _do_write(self, p, o, w, depth=0) -> None:
        self._check(p, o)
        if not isinstance(w, BaseWord):
            w = BaseWord(*w) if isinstance(w, tuple) else BaseWord(int(w), 0)
        self.words[o] = w
        self.events.append(BaseEvent(next(self._seq), p, self._tx[p], WRITE, o, w, True, depth))
        self._changed.notify_all()

    def read_base(self, p: int, o: int) -> BaseWord:
        with self._lock:
            if p in self._in_atomic:
                raise MemoryFault("plain access from inside an atomic section")
            return self._do_read(p, o)

    def write_base(self, p: int, o: int, w: BaseWord) -> None:
        with self._lock:
            if p in self._in_atomic:
                raise MemoryFault("plain access from inside an atomic section")
            self._do_write(p, o, w)

    def atomic_section(self, p: int, body: Callable[[AtomicView], Any], may_write: bool = True,
                       limit: int = MAX_ATOMIC_OPS):
        with self._lock:
            if p in self._in_atomic:
                raise MemoryFault("nested atomic section")
            if self.strict and self._open[p] <= 0:
                raise MemoryFault(f"process {p} opens an atomic section outside any operation")
            self._in_atomic.add(p)
            tx = self._tx[p]
            self.events.append(BaseEvent(next(self._seq), p, tx, ATOMIC_BEGIN, None, None, may_write, 1))
            try:
                result = body(AtomicView(self, p, limit))
            finally:
                self.events.append(BaseEvent(next(self._seq), p, tx, ATOMIC_END, None, None, may_write, 1))
                self._in_atomic.discard(p)
            return result

    def mcas(self, p: int, V: list, OV: list, NV: list) -> bool:
        """Multi-word compare-and-swap as one atomic section."""
        V, OV, NV = list(V), list(OV), list(NV)
        if not (len(V) == len(OV) == len(NV)):
            raise MemoryFault("mcas: V, OV and NV differ in length")
        if len(set(V)) != len(V):
            raise MemoryFault("mcas: duplicate base objects")
        body = mcas_body(V, OV, NV)
        return self.atomic_section(p, body, may_write=True, limit=2 * len(V))

    def wait_change(self, observed: tuple, timeout: Optional[float] = None) -> bool:
        """Block until some ``(object, word)`` pair in ``observed`` no longer
        matches memory.  False if ``timeout`` expired first."""
        with self._changed:
            return self._changed.wait_for(lambda: any(self.words[o] != w for o, w in observed), timeout)

    # -- markers --------------------------------------------------------------

    def emit_tm(self, p: int, m: TmMark) -> TmEvent:
        with self._lock:
            ev = TmEvent(next(self._seq), m.kind, m.tx, p, m.obj, m.value, m.outcome)
            self.events.append(ev)
            if m.is_invocation:
                self._open[p] += 1
                self._tx[p] = m.tx
            else:
                self._open[p] -= 1
            return ev

    def emit_mark(self, p: int, m: OpMark) -> Mark:
        with self._lock:
            ev = Mark(next(self._seq), p, m.tx, m.op, m.phase, tuple(m.objects), m.result)
            self.events.append(ev)
            if m.phase == "inv":
                self._open[p] += 1
                if m.tx:
                    self._tx[p] = m.tx
            else:
                self._open[p] -= 1
            return ev

    def open_op(self, p: int, tx: int = 0) -> None:
        """Unrecorded operation context, for driving the memory by hand."""
        with self._lock:
            self._open[p] += 1
            self._tx[p] = tx

    def close_op(self, p: int) -> None:
        with self._lock:
            self._open[p] -= 1

    def perform(self, p: int, op) -> Any:
        """Apply one yielded base operation."""
        if isinstance(op, Read):
            return self.read_base(p, op.obj)
        if isinstance(op, Write):
            return self.write_base(p, op.obj, op.word)
        if isinstance(op, Atomic):
            return self.atomic_section(p, op.body, op.may_write)
        raise TypeError(f"not a base operation: {op!r}")

    def trace(self, **kw) -> ExecutionTrace:
        return ExecutionTrace(list(self.events), list(self.objects), **kw)


def mcas_body(V, OV, NV):
    def body(view: AtomicView) -> bool:
        for o, old in zip(V, OV):
            if view.read(o) != old:
                return False
        for o, new in zip(V, NV):
            view.write(o, new)
        return True

    return body


def mcas_op(V, OV, NV) -> Atomic:
    """The yieldable form of :meth:`SharedMemory.mcas`."""
    V, OV, NV = list(V), list(OV), list(NV)
    if not (len(V) == len(OV) == len(NV)):
        raise MemoryFault("mcas: V, OV and NV differ in length")
    if len(set(V)) != len(V):
        raise MemoryFault("mcas: duplicate base objects")
    return Atomic(mcas_body(V, OV, NV), True, "mcas")


def is_base_op(x) -> bool:
    return isinstance(x, BASE_OPS)


def nontrivial(ev: BaseEvent) -> bool:
    return ev.nontrivial and ev.kind in (WRITE, ATOMIC_BEGIN)


def by_process(events: Iterable) -> dict[int, list]:
    out: dict[int, list] = defaultdict(list)
    for e in events:
        out[e.process].append(e)
    return dict(out)
