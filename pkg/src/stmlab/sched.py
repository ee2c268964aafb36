"""Drivers for algorithm generators: solo, deterministic schedules, exploration, threads.

A *program* is a zero-argument callable returning a generator in the
vocabulary of :mod:`stmlab.memory`.  Process ``i`` of a program set runs
``programs[i]``.

Step semantics of the deterministic backend: a step first emits any pending
invocation markers, then runs the process up to and including its next base
operation (a read, a write or a whole atomic section), then eagerly emits the
response markers that immediately follow.  Invocations are therefore placed
as late as possible and responses as early as possible, so two operations
overlap in the history exactly when their base steps interleave.  The final
step of a process may contain markers only.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

from .memory import (
    Atomic,
    ExecutionTrace,
    MemoryFault,
    OpMark,
    Read,
    SharedMemory,
    Spin,
    TmMark,
    Write,
)

Program = Callable[[], Iterator]


class ScheduleError(Exception):
    """A schedule could not be applied (unknown process id and the like)."""


def _is_inv(item) -> bool:
    return isinstance(item, (TmMark, OpMark)) and item.is_invocation


def _emit(mem: SharedMemory, pid: int, item) -> None:
    if isinstance(item, TmMark):
        mem.emit_tm(pid, item)
    else:
        mem.emit_mark(pid, item)


def drive(mem: SharedMemory, pid: int, gen, max_spins: int = 10_000):
    """Run one generator solo to completion and return its return value.

    A solo busy-wait whose observed words never change would loop forever;
    it raises :class:`MemoryFault` after ``max_spins`` iterations instead."""
    result = None
    spins = 0
    try:
        while True:
            item = gen.send(result)
            result = None
            if isinstance(item, (Read, Write, Atomic)):
                result = mem.perform(pid, item)
            elif isinstance(item, (TmMark, OpMark)):
                _emit(mem, pid, item)
            elif isinstance(item, Spin):
                spins += 1
                if spins > max_spins:
                    raise MemoryFault(f"process {pid} spins forever when run solo")
            else:
                raise TypeError(f"unknown item {item!r}")
    except StopIteration as stop:
        return stop.value


# -- deterministic runner ------------------------------------------------


@dataclass
class _Proc:
    gen: Iterator
    pending: object = None
    started: bool = False
    done: bool = False
    value: object = None  # generator return value
    spin: Optional[tuple] = None
    chain: int = 0  # hash chain of the values fed to the generator
    steps: int = 0


class DeterministicRunner:
    """Single-threaded stepper for a set of processes over one memory."""

    def __init__(self, programs: Sequence[Program], memory: SharedMemory):
        self.mem = memory
        self.procs = [_Proc(p()) for p in programs]
        self.schedule: list[int] = []
        self.marker_chain = 0
        self.notes: list[str] = []

    # -- state -----------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.procs)

    def blocked(self, pid: int) -> bool:
        spin = self.procs[pid].spin
        if spin is None:
            return False
        words = self.mem.words
        return all(words[o] == w for o, w in spin)

    def enabled(self) -> list[int]:
        return [i for i, p in enumerate(self.procs) if not p.done and not self.blocked(i)]

    def finished(self) -> bool:
        return all(p.done for p in self.procs)

    def key(self) -> tuple:
        """Configuration identity used to prune exploration."""
        return (
            tuple(self.mem.words),
            tuple((p.chain, p.done, p.spin is not None) for p in self.procs),
            self.marker_chain,
        )

    # -- stepping --------------------------------------------------------

    def _advance(self, pr: _Proc, value) -> None:
        pr.chain = hash((pr.chain, value))
        try:
            if pr.started:
                pr.pending = pr.gen.send(value)
            else:
                pr.started = True
                pr.pending = next(pr.gen)
        except StopIteration as stop:
            pr.done = True
            pr.pending = None
            pr.value = stop.value

    def _marker(self, pid: int, item) -> None:
        _emit(self.mem, pid, item)
        self.marker_chain = hash((self.marker_chain, pid))

    def step(self, pid: int) -> bool:
        """Run one step of ``pid``; False (and no effect) if it already finished."""
        if not 0 <= pid < self.n:
            raise ScheduleError(f"no process {pid}")
        pr = self.procs[pid]
        if not pr.started:
            self._advance(pr, None)
        if pr.done:
            return False
        self.schedule.append(pid)
        pr.steps += 1
        pr.spin = None
        mem = self.mem
        while not pr.done:
            item = pr.pending
            if isinstance(item, (Read, Write, Atomic)):
                result = mem.perform(pid, item)
                self._advance(pr, result)
                # responses and spin ends are glued to the base step
                while not pr.done:
                    item = pr.pending
                    if isinstance(item, (TmMark, OpMark)) and not item.is_invocation:
                        self._marker(pid, item)
                    elif isinstance(item, Spin):
                        pr.spin = item.observed
                    else:
                        break
                    self._advance(pr, None)
                return True
            if isinstance(item, (TmMark, OpMark)):
                self._marker(pid, item)
            elif isinstance(item, Spin):
                pr.spin = item.observed
                self._advance(pr, None)
                return True
            else:
                raise TypeError(f"unknown item {item!r}")
            self._advance(pr, None)
        return True

    def replay(self, schedule: Sequence[int]) -> None:
        for pid in schedule:
            if not self.step(pid):
                self.notes.append(f"process {pid} scheduled after finishing")

    def run_to_end(self, order: Optional[Sequence[int]] = None, bound: int = 100_000) -> None:
        """Round-robin (or ``order``-prioritised) run until no process is enabled."""
        order = list(order) if order is not None else list(range(self.n))
        for _ in range(bound):
            en = self.enabled()
            if not en:
                return
            pid = next(p for p in order if p in en) if order else en[0]
            self.step(pid)
        raise MemoryFault("run_to_end exceeded its step bound")

    def trace(self) -> ExecutionTrace:
        return self.mem.trace(complete=self.finished(), schedule=list(self.schedule), notes=list(self.notes))


def run_deterministic(programs: Sequence[Program], schedule: Sequence[int],
                      memory: Optional[SharedMemory] = None,
                      setup: Optional[Callable[[], SharedMemory]] = None) -> ExecutionTrace:
    """Apply ``schedule`` step by step and return the trace.

    Entries naming a finished process are skipped and noted; a schedule that
    ends before every process finished yields ``trace.complete == False``."""
    mem = memory if memory is not None else (setup() if setup else SharedMemory())
    r = DeterministicRunner(programs, mem)
    r.replay(schedule)
    return r.trace()


# -- exploration -----------------------------------------------------------


@dataclass
class ExplorationStats:
    terminals: int = 0
    stranded: int = 0  # no process enabled, some unfinished
    cut: int = 0  # depth bound reached
    pruned: int = 0  # configuration already visited
    nodes: int = 0
    exhausted: bool = True  # False if the node budget stopped the search

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Explorer:
    """Depth-first enumeration of all schedules of a program set.

    ``factory`` builds a fresh :class:`DeterministicRunner`; nodes are
    re-created by replaying their schedule, since generators cannot be
    copied.  Configurations already expanded are pruned.  With
    ``preemptions`` set, only schedules that switch away from a still enabled
    process at most that many times are explored.  With ``yield_cut`` the
    prefixes stopped by the depth bound are yielded too, as incomplete traces.
    """

    factory: Callable[[], DeterministicRunner]
    depth: int = 60
    preemptions: Optional[int] = None
    dedup: bool = True
    max_nodes: Optional[int] = None
    yield_cut: bool = False
    stats: ExplorationStats = field(default_factory=ExplorationStats)

    def _children(self, r: DeterministicRunner, last: Optional[int], used: int) -> list[tuple[int, int]]:
        en = r.enabled()
        out = []
        for p in en:
            pre = used
            if last is not None and p != last and last in en:
                pre += 1
            if self.preemptions is not None and pre > self.preemptions:
                continue
            out.append((p, pre))
        # continuing the current process first keeps early paths short of preemptions
        out.sort(key=lambda c: (c[0] != last, c[0]))
        return out

    def run(self) -> Iterator[tuple[list[int], ExecutionTrace]]:
        seen: set = set()
        st = self.stats
        # stack entries: (schedule prefix, preemptions used)
        stack: list[tuple[tuple[int, ...], int]] = [((), 0)]
        while stack:
            prefix, used = stack.pop()
            r = self.factory()
            r.replay(prefix)
            while True:
                st.nodes += 1
                if self.max_nodes is not None and st.nodes > self.max_nodes:
                    st.exhausted = False
                    return
                if self.dedup:
                    k = r.key()
                    if self.preemptions is not None:
                        last = r.schedule[-1] if r.schedule else None
                        k = (k, last, used)
                    if k in seen:
                        st.pruned += 1
                        break
                    seen.add(k)
                if r.finished():
                    st.terminals += 1
                    yield list(r.schedule), r.trace()
                    break
                last = r.schedule[-1] if r.schedule else None
                kids = self._children(r, last, used)
                if not kids:
                    if r.enabled():
                        st.cut += 1  # only preemption-bound exclusions remain
                    else:
                        st.stranded += 1
                    break
                if len(r.schedule) >= self.depth:
                    st.cut += 1
                    if self.yield_cut:
                        yield list(r.schedule), r.trace()
                    break
                base = tuple(r.schedule)
                for p, pre in reversed(kids[1:]):
                    stack.append((base + (p,), pre))
                p, used = kids[0]
                r.step(p)


def explore(programs_factory: Callable[[], tuple[Sequence[Program], SharedMemory]], depth: int = 60,
            preemptions: Optional[int] = None, dedup: bool = True,
            max_nodes: Optional[int] = None) -> Explorer:
    """Convenience constructor: ``programs_factory`` returns fresh (programs, memory)."""

    def factory():
        progs, mem = programs_factory()
        return DeterministicRunner(progs, mem)

    return Explorer(factory, depth, preemptions, dedup, max_nodes)


# -- native threads -----------------------------------------------------------


def run_native(programs: Sequence[Program], memory: SharedMemory, timeout: Optional[float] = None) -> ExecutionTrace:
    """Run each program on its own thread; the memory lock linearizes accesses.

    A busy-wait iteration that ends in :class:`Spin` sleeps until one of the
    words it observed changes, the same rule that marks a spinning process
    blocked in the deterministic backend; retrying earlier could only
    repeat the same reads."""
    errors: list[BaseException] = []
    results: list = [None] * len(programs)
    deadline = None if timeout is None else time.monotonic() + timeout
    stalled: list[int] = []

    def body(pid: int, prog: Program):
        gen = prog()
        value = None
        try:
            while True:
                item = gen.send(value)
                value = None
                if isinstance(item, (Read, Write, Atomic)):
                    value = memory.perform(pid, item)
                elif isinstance(item, (TmMark, OpMark)):
                    _emit(memory, pid, item)
                elif isinstance(item, Spin):
                    left = None if deadline is None else deadline - time.monotonic()
                    if left is not None and left <= 0:
                        stalled.append(pid)
                        return
                    memory.wait_change(item.observed, left)
                else:
                    raise TypeError(f"unknown item {item!r}")
        except StopIteration as stop:
            results[pid] = stop.value
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)

    threads = [threading.Thread(target=body, args=(i, p), daemon=True) for i, p in enumerate(programs)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    if errors:
        raise errors[0]
    alive = any(t.is_alive() for t in threads) or bool(stalled)
    trace = memory.trace(complete=not alive)
    if alive:
        trace.notes.append("timeout: some threads did not finish")
    return trace
