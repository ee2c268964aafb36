"""Multi-trylocks over base objects.

:class:`WaitFreeTrylock` announces interest with one flag per (process,
object) and backs off if anybody else announced interest in a requested
object.  :class:`BakeryTrylock` is a starvation-free variant with bounded
labels in the style of the Black-White Bakery algorithm.

Operations are generators (see :mod:`stmlab.memory`); drive them with
:func:`stmlab.sched.drive` or from inside an STM operation via ``yield from``.
Lock operations emit ``acquire``/``release`` marks so that hold intervals can
be recovered from a trace: a process holds Q from the response of a
successful acquire to the invocation of the matching release.
"""

from __future__ import annotations

from typing import Iterable

from .memory import BaseWord, MemoryFault, OpMark, Read, SharedMemory, Spin, Write

WHITE = 0
BLACK = 1

ONE = BaseWord(1, 0)
ZERO = BaseWord(0, 0)


def _word(v: int) -> BaseWord:
    return BaseWord(v, 0)


class WaitFreeTrylock:
    """Flag-based multi-trylock; every operation finishes in a bounded number of steps."""

    kind = "wf"

    def __init__(self, mem: SharedMemory, n: int, m: int, r=None):
        self.mem = mem
        self.n = n
        self.m = m
        # r[i][j]: process i is interested in object j (owned by object j)
        self.r = r if r is not None else [[mem.alloc(f"r[{i}][{j}]", tag=j) for j in range(m)] for i in range(n)]
        self.held: dict[int, set[int]] = {i: set() for i in range(n)}

    def lock_objects(self) -> set[int]:
        return {o for row in self.r for o in row}

    def _enter(self, i: int, Q: Iterable[int]) -> list[int]:
        Q = sorted(set(Q))
        if self.held[i] & set(Q):
            raise MemoryFault(f"process {i} re-acquires {sorted(self.held[i] & set(Q))}")
        for j in Q:
            if not 0 <= j < self.m:
                raise MemoryFault(f"t-object {j} out of range")
        return Q

    def is_contended(self, i: int, j: int):
        """True iff some other process has its flag for ``j`` set.  Reads only."""
        for t in range(self.n):
            if t != i:
                w = yield Read(self.r[t][j])
                if w.value != 0:
                    return True
        return False

    def acquire(self, i: int, Q: Iterable[int], tx: int = 0):
        Q = self._enter(i, Q)
        yield OpMark("acquire", "inv", tx, tuple(Q))
        for j in Q:
            yield Write(self.r[i][j], ONE)
        ok = True
        for j in Q:
            if (yield from self.is_contended(i, j)):
                ok = False
                break
        if not ok:
            for j in Q:
                yield Write(self.r[i][j], ZERO)
        else:
            self.held[i] |= set(Q)
        yield OpMark("acquire", "resp", tx, tuple(Q), ok)
        return ok

    def release(self, i: int, Q: Iterable[int], tx: int = 0):
        Q = sorted(set(Q))
        if not set(Q) <= self.held[i]:
            raise MemoryFault(f"process {i} releases unheld {sorted(set(Q) - self.held[i])}")
        yield OpMark("release", "inv", tx, tuple(Q))
        self.held[i] -= set(Q)
        for j in Q:
            yield Write(self.r[i][j], ZERO)
        yield OpMark("release", "resp", tx, tuple(Q))


class BakeryTrylock(WaitFreeTrylock):
    """Starvation-free multi-trylock with bounded labels and a two-colour ticket scheme.

    ``guard="literal"`` waits only on processes that already published a
    label.  That admits the classic bakery race in which a process still
    choosing its label is overlooked (see ``tests/test_trylocks.py``), so the
    default ``guard="repaired"`` additionally waits while a process has
    flagged a requested object but not yet published its label.
    """

    kind = "sf"

    def __init__(self, mem: SharedMemory, n: int, m: int, guard: str = "repaired", r=None):
        if guard not in ("literal", "repaired"):
            raise ValueError(f"unknown guard {guard!r}")
        super().__init__(mem, n, m, r)
        self.guard = guard
        self.LA = [mem.alloc(f"LA[{i}]") for i in range(n)]
        self.MC = [mem.alloc(f"MC[{i}]") for i in range(n)]
        self.color = mem.alloc("color")
        self.labels = {i: 0 for i in range(n)}  # local copies of own LA/MC
        self.mycolor = {i: WHITE for i in range(n)}

    def lock_objects(self) -> set[int]:
        return super().lock_objects() | set(self.LA) | set(self.MC) | {self.color}

    def _guard(self, i: int, Q: list[int], observed: list):
        """One evaluation of the wait condition, left to right."""
        mine = (self.labels[i], i)
        mc = self.mycolor[i]

        def rd(o):
            w = yield Read(o)
            observed.append((o, w))
            return w.value

        for j in Q:
            flagged = []
            for t in range(self.n):
                if t != i and (yield from rd(self.r[t][j])) != 0:
                    flagged.append(t)
            if not flagged:
                continue
            for k in range(self.n):
                if k == i:
                    continue
                la = yield from rd(self.LA[k])
                if la == 0:
                    if self.guard == "repaired" and k in flagged:
                        return True  # k is between its flag and its label
                    continue
                mk = yield from rd(self.MC[k])
                if mk == mc:
                    if (la, k) < mine:
                        return True
                elif (yield from rd(self.color)) == mc:
                    return True
        return False

    def acquire(self, i: int, Q: Iterable[int], tx: int = 0):
        Q = self._enter(i, Q)
        yield OpMark("acquire", "inv", tx, tuple(Q))
        for j in Q:
            yield Write(self.r[i][j], ONE)
        c = (yield Read(self.color)).value
        self.mycolor[i] = c
        yield Write(self.MC[i], _word(c))
        top = 0
        for k in range(self.n):
            if k != i and (yield Read(self.MC[k])).value == c:
                top = max(top, (yield Read(self.LA[k])).value)
        self.labels[i] = top + 1
        yield Write(self.LA[i], _word(top + 1))
        while True:
            observed: list = []
            if not (yield from self._guard(i, Q, observed)):
                break
            yield Spin(tuple(observed))
        self.held[i] |= set(Q)
        yield OpMark("acquire", "resp", tx, tuple(Q), True)
        return True

    def release(self, i: int, Q: Iterable[int], tx: int = 0):
        Q = sorted(set(Q))
        if not set(Q) <= self.held[i]:
            raise MemoryFault(f"process {i} releases unheld {sorted(set(Q) - self.held[i])}")
        yield OpMark("release", "inv", tx, tuple(Q))
        self.held[i] -= set(Q)
        for j in Q:
            yield Write(self.r[i][j], ZERO)
        mc = (yield Read(self.MC[i])).value
        yield Write(self.color, _word(WHITE if mc == BLACK else BLACK))
        self.labels[i] = 0
        yield Write(self.LA[i], ZERO)
        yield OpMark("release", "resp", tx, tuple(Q))


def make_trylock(kind: str, mem: SharedMemory, n: int, m: int, **kw) -> WaitFreeTrylock:
    if kind in ("wf", "wait-free"):
        return WaitFreeTrylock(mem, n, m)
    if kind in ("sf", "bakery", "starvation-free"):
        return BakeryTrylock(mem, n, m, **kw)
    raise ValueError(f"unknown trylock kind {kind!r}")
