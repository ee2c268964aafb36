"""Four STM implementations over :class:`~stmlab.memory.SharedMemory`.

``single-lock``
    One global test-and-set lock taken when a transaction begins.
``prog-raw``
    Invisible reads with incremental validation; commit takes wait-free
    trylocks on the write set (one multi-RAW per updating transaction).
``prog-mcas``
    Invisible reads with validation; commit is a single multi-word CAS over
    the data set (one AWAR per updating transaction).
``strong-prog``
    Like ``prog-raw`` with the starvation-free bakery trylock, so a commit
    never fails to take its locks.

Every t-object ``X`` is stored in one base word ``v[X]`` holding
``(value, writer)``.  Writes are buffered until commit, reads of buffered
objects are served locally, and repeated reads return the first value read.

Each operation exists as a generator ``op_*`` (for the schedulers) and as
an imperative ``tx_*`` wrapper that runs it solo.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    INV_READ,
    INV_TRYA,
    INV_TRYC,
    INV_WRITE,
    RESP_READ,
    RESP_TRYA,
    RESP_TRYC,
    RESP_WRITE,
    Outcome,
    Status,
)
from .memory import (
    Atomic,
    BaseWord,
    MemoryFault,
    OpMark,
    Read,
    SharedMemory,
    Spin,
    TmMark,
    Write,
    mcas_op,
)
from .sched import drive
from .trylocks import BakeryTrylock, WaitFreeTrylock

VARIANTS = ("single-lock", "prog-raw", "prog-mcas", "strong-prog")

ABORT = Outcome.ABORT
COMMIT = Outcome.COMMIT


@dataclass
class TxDescriptor:
    tx: int
    process: int
    rset: dict = field(default_factory=dict)  # X -> BaseWord read
    wset: dict = field(default_factory=dict)  # X -> buffered value
    status: Status = Status.LIVE

    @property
    def dset(self) -> set[int]:
        return set(self.rset) | set(self.wset)


class Stm:
    """Common front end: descriptors, buffering, markers and wrappers."""

    variant = "abstract"

    def __init__(self, n: int, m: int, mem: Optional[SharedMemory] = None):
        self.n = n
        self.m = m
        self.mem = mem if mem is not None else SharedMemory()
        self.v = [self.mem.alloc(f"v[{j}]", tag=j) for j in range(m)]
        self.current: dict[int, TxDescriptor] = {}
        self.by_tx: dict[int, TxDescriptor] = {}
        self._ids = itertools.count(1)

    # -- bookkeeping ------------------------------------------------------------

    def beta(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {j: set() for j in range(self.m)}
        for o in self.mem.objects:
            if o.tag is not None:
                out[o.tag].add(o.index)
        return out

    def _live(self, p: int) -> TxDescriptor:
        d = self.current.get(p)
        if d is None or d.status is not Status.LIVE:
            raise MemoryFault(f"process {p} has no live transaction")
        return d

    def _check_obj(self, X: int):
        if not 0 <= X < self.m:
            raise MemoryFault(f"t-object {X} out of range")

    def _finish(self, d: TxDescriptor, status: Status):
        d.status = status

    # -- generators -------------------------------------------------------------

    def op_begin(self, p: int, tx: Optional[int] = None):
        cur = self.current.get(p)
        if cur is not None and cur.status is Status.LIVE:
            raise MemoryFault(f"process {p} begins while T{cur.tx} is live")
        tx = next(self._ids) if tx is None else tx
        if tx <= 0 or tx in self.by_tx:
            raise MemoryFault(f"transaction id {tx} is reserved or already used")
        d = TxDescriptor(tx, p)
        self.current[p] = d
        self.by_tx[tx] = d
        yield OpMark("begin", "inv", tx)
        yield from self._begin(p, d)
        yield OpMark("begin", "resp", tx, (), tx)
        return tx

    def _begin(self, p: int, d: TxDescriptor):
        return
        yield  # pragma: no cover

    def op_read(self, p: int, X: int):
        d = self._live(p)
        self._check_obj(X)
        yield TmMark(INV_READ, d.tx, X)
        if X in d.wset:
            val = d.wset[X]
        elif X in d.rset:
            val = d.rset[X].value
        else:
            w = yield Read(self.v[X])
            d.rset[X] = w
            if (yield from self._read_abortable(p, d)):
                return (yield from self._abort(d, RESP_READ, X))
            val = w.value
        yield TmMark(RESP_READ, d.tx, X, val, Outcome.VALUE)
        return val

    def op_write(self, p: int, X: int, value: int):
        d = self._live(p)
        self._check_obj(X)
        yield TmMark(INV_WRITE, d.tx, X, value)
        d.wset[X] = value
        yield TmMark(RESP_WRITE, d.tx, X, None, Outcome.OK)
        return Outcome.OK

    def op_tryc(self, p: int):
        d = self._live(p)
        yield TmMark(INV_TRYC, d.tx)
        ok = yield from self._commit(p, d)
        if not ok:
            return (yield from self._abort(d, RESP_TRYC))
        self._finish(d, Status.COMMITTED)
        yield TmMark(RESP_TRYC, d.tx, None, None, COMMIT)
        return COMMIT

    def op_trya(self, p: int):
        d = self._live(p)
        yield TmMark(INV_TRYA, d.tx)
        yield from self._self_abort(p, d)
        self._finish(d, Status.ABORTED)
        yield TmMark(RESP_TRYA, d.tx, None, None, ABORT)
        return ABORT

    def _abort(self, d: TxDescriptor, kind: str, X: Optional[int] = None):
        self._finish(d, Status.ABORTED)
        yield TmMark(kind, d.tx, X, None, ABORT)
        return ABORT

    def _self_abort(self, p: int, d: TxDescriptor):
        return
        yield  # pragma: no cover

    def _read_abortable(self, p: int, d: TxDescriptor):
        raise NotImplementedError

    def _commit(self, p: int, d: TxDescriptor):
        raise NotImplementedError

    # shared helpers

    def _invalid(self, d: TxDescriptor):
        """Re-read every read-set word; True if any changed."""
        for X in sorted(d.rset):
            if (yield Read(self.v[X])) != d.rset[X]:
                return True
        return False

    # -- imperative wrappers ------------------------------------------------

    def _proc(self, k: int) -> int:
        d = self.by_tx.get(k)
        if d is None:
            raise MemoryFault(f"unknown transaction T{k}")
        return d.process

    def tx_begin(self, p: int, tx: Optional[int] = None) -> int:
        return drive(self.mem, p, self.op_begin(p, tx))

    def tx_read(self, k: int, X: int):
        return drive(self.mem, self._proc(k), self._guarded(k, self.op_read, X))

    def tx_write(self, k: int, X: int, value: int):
        return drive(self.mem, self._proc(k), self._guarded(k, self.op_write, X, value))

    def tx_tryc(self, k: int):
        return drive(self.mem, self._proc(k), self._guarded(k, self.op_tryc))

    def tx_trya(self, k: int):
        return drive(self.mem, self._proc(k), self._guarded(k, self.op_trya))

    def _guarded(self, k, op, *args):
        d = self.by_tx[k]
        if d.status is not Status.LIVE or self.current.get(d.process) is not d:
            raise MemoryFault(f"T{k} is not live")
        return op(d.process, *args)


class SingleLockStm(Stm):
    """Global lock taken with test-and-set at begin, released at the end."""

    variant = "single-lock"

    def __init__(self, n: int, m: int, mem: Optional[SharedMemory] = None):
        super().__init__(n, m, mem)
        self.lock = self.mem.alloc("L")

    def _begin(self, p, d):
        lock = self.lock
        me = BaseWord(1, d.tx)

        def tas(view):
            w = view.read(lock)
            if w.value == 0:
                view.write(lock, me)
                return True, w
            return False, w

        while True:
            ok, seen = yield Atomic(tas, True, "tas")
            if ok:
                return
            yield Spin(((lock, seen),))

    def _read_abortable(self, p, d):
        return False
        yield  # pragma: no cover

    def _commit(self, p, d):
        for X in sorted(d.wset):
            yield Write(self.v[X], BaseWord(d.wset[X], d.tx))
        yield Write(self.lock, BaseWord(0, 0))
        return True

    def _self_abort(self, p, d):
        yield Write(self.lock, BaseWord(0, 0))


class TrylockStm(Stm):
    """Validation-based STM committing under a multi-trylock on the write set."""

    variant = "prog-raw"
    lock_class = WaitFreeTrylock

    def __init__(self, n: int, m: int, mem: Optional[SharedMemory] = None, **lock_kw):
        super().__init__(n, m, mem)
        self.L = self.lock_class(self.mem, n, m, **lock_kw)

    def _read_abortable(self, p, d):
        for X in sorted(d.rset):
            if (yield from self.L.is_contended(p, X)):
                return True
        return (yield from self._invalid(d))

    def _commit(self, p, d):
        if not d.wset:
            return True
        Q = sorted(d.wset)
        locked = yield from self.L.acquire(p, Q, d.tx)
        if not locked:
            return False
        if (yield from self._read_abortable(p, d)):
            yield from self.L.release(p, Q, d.tx)
            return False
        for X in Q:
            yield Write(self.v[X], BaseWord(d.wset[X], d.tx))
        yield from self.L.release(p, Q, d.tx)
        return True


class McasStm(Stm):
    """Validation-based STM committing with one multi-word CAS."""

    variant = "prog-mcas"

    def _read_abortable(self, p, d):
        return (yield from self._invalid(d))

    def _commit(self, p, d):
        if not d.wset:
            return True
        V, OV, NV = [], [], []
        for X in sorted(d.dset):
            if X in d.rset:
                ov = d.rset[X]
            else:
                ov = yield Read(self.v[X])
            V.append(self.v[X])
            OV.append(ov)
            NV.append(BaseWord(d.wset[X], d.tx) if X in d.wset else ov)
        return (yield mcas_op(V, OV, NV))


class StrongStm(TrylockStm):
    """Trylock STM over the starvation-free bakery lock; acquiring never fails."""

    variant = "strong-prog"
    lock_class = BakeryTrylock


_CLASSES = {
    "single-lock": SingleLockStm,
    "prog-raw": TrylockStm,
    "prog-mcas": McasStm,
    "strong-prog": StrongStm,
}


def make_stm(variant: str, n: int, m: int, mem: Optional[SharedMemory] = None, **kw) -> Stm:
    try:
        cls = _CLASSES[variant]
    except KeyError:
        raise ValueError(f"unknown STM variant {variant!r}; expected one of {', '.join(VARIANTS)}") from None
    return cls(n, m, mem, **kw)
