"""Valence probing of an uncontended updating transaction.

A writer transaction T_0 runs solo on process 0 and takes |pi| scheduler
steps.  For a prefix of t steps and a t-object X_j, a reader transaction on
process 1 then runs solo: it reads X_j and tries to commit.  The prefix is

* ``one``    if the read returns the value T_0 writes to X_j,
* ``zero``   if the read returns some other value,
* ``bottom`` if the read aborts or does not return within the step bound.

T_0 *protects* X_j at t (0 < t < |pi|) if t is zero and t+1 is one for X_j,
or either of t, t+1 is bottom for X_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import Outcome, Verdict
from ..memory import MemoryFault, SharedMemory
from ..sched import DeterministicRunner
from ..stm import make_stm

ZERO, ONE, BOTTOM = "zero", "one", "bottom"
WRITER_TX = 1
READER_TX = 2
BOUND_FACTOR = 10


@dataclass(frozen=True)
class Valence:
    kind: str  # zero | one | bottom
    j: int

    def __str__(self) -> str:
        return {ZERO: "0", ONE: "1", BOTTOM: "⊥"}[self.kind]


def written_value(j: int) -> int:
    return 1000 + j


@dataclass
class ProbeSetup:
    """Writer T_0 with the given read and write sets, on ``m`` t-objects."""

    variant: str
    wset: tuple
    rset: tuple = ()
    m: Optional[int] = None
    stm_kw: dict = field(default_factory=dict)

    def __post_init__(self):
        self.wset = tuple(sorted(set(self.wset)))
        self.rset = tuple(sorted(set(self.rset)))
        if self.m is None:
            self.m = max(self.wset + self.rset, default=-1) + 1 or 1

    def build(self, reader_obj: Optional[int]):
        stm = make_stm(self.variant, 2, self.m, SharedMemory(), **self.stm_kw)

        def writer():
            yield from stm.op_begin(0, WRITER_TX)
            for X in self.rset:
                if (yield from stm.op_read(0, X)) is Outcome.ABORT:
                    return
            for X in self.wset:
                yield from stm.op_write(0, X, written_value(X))
            yield from stm.op_tryc(0)

        def reader():
            yield from stm.op_begin(1, READER_TX)
            v = yield from stm.op_read(1, reader_obj)
            if v is not Outcome.ABORT:
                yield from stm.op_tryc(1)
            return v

        progs = [writer] if reader_obj is None else [writer, reader]
        return stm, DeterministicRunner(progs, stm.mem)

    def solo_length(self) -> int:
        _, r = self.build(None)
        while not r.procs[0].done:
            r.step(0)
        return len(r.schedule)

    def reader_solo_length(self, j: int) -> int:
        _, r = self.build(j)
        while not r.procs[1].done:
            r.step(1)
        return len(r.schedule)


def classify_valence(setup: ProbeSetup, t: int, j: int, bound: Optional[int] = None) -> Valence:
    """Valence of the t-step prefix of the writer for a solo reader of X_j."""
    n = setup.solo_length()
    if not 0 <= t <= n:
        raise MemoryFault(f"prefix {t} is not within the writer's {n} steps")
    if bound is None:
        bound = BOUND_FACTOR * setup.reader_solo_length(j)
    _, r = setup.build(j)
    for _ in range(t):
        r.step(0)
    for _ in range(bound):
        if r.procs[1].done:
            break
        r.step(1)
    if not r.procs[1].done:
        return Valence(BOTTOM, j)
    v = r.procs[1].value
    if v is Outcome.ABORT:
        return Valence(BOTTOM, j)
    return Valence(ONE if v == written_value(j) else ZERO, j)


def protects(table: dict, t: int, j: int) -> bool:
    a, b = table[t][j].kind, table[t + 1][j].kind
    return (a == ZERO and b == ONE) or BOTTOM in (a, b)


@dataclass
class ProtectionReport:
    setup: ProbeSetup
    steps: int
    table: dict  # t -> {j: Valence}
    protecting: list  # every t protecting the whole write set
    mixed: list  # prefixes that are zero for some object and one for another
    monotone: list  # (j, t) where a one is followed by a zero
    rset_blocked: list  # (j, t) where a reader of a read-set object was not free

    @property
    def prefix(self) -> Optional[int]:
        return self.protecting[0] if self.protecting else None

    def verdict(self) -> Verdict:
        if not self.setup.wset:
            return Verdict(True, None, "empty write set: nothing to protect")
        if self.mixed:
            return Verdict(False, self.mixed, "prefix both 0-valent and 1-valent")
        if not self.protecting:
            return Verdict(False, None, "no proper prefix protects the whole write set")
        return Verdict(True, self.protecting[0], f"protecting prefixes: {self.protecting}")

    def to_dict(self) -> dict:
        return {
            "variant": self.setup.variant,
            "wset": list(self.setup.wset),
            "rset": list(self.setup.rset),
            "steps": self.steps,
            "prefix": self.prefix,
            "protecting": self.protecting,
            "mixed_prefixes": self.mixed,
            "monotonicity_violations": [list(x) for x in self.monotone],
            "rset_blocked": [list(x) for x in self.rset_blocked],
            "table": {str(t): {str(j): v.kind for j, v in row.items()} for t, row in self.table.items()},
            "pass": self.verdict().passed,
        }

    def render(self) -> str:
        objs = sorted({j for row in self.table.values() for j in row})
        lines = ["t    " + " ".join(f"X{j}" for j in objs)]
        for t, row in self.table.items():
            mark = " <" if t in self.protecting else ""
            lines.append(f"{t:<4} " + " ".join(f"{str(row[j]):>{len(str(j)) + 1}}" for j in objs) + mark)
        return "\n".join(lines)


def valence_table(setup: ProbeSetup, objects=None) -> tuple[int, dict]:
    n = setup.solo_length()
    objects = list(setup.wset + setup.rset) if objects is None else list(objects)
    bounds = {j: BOUND_FACTOR * setup.reader_solo_length(j) for j in objects}
    table = {t: {j: classify_valence(setup, t, j, bounds[j]) for j in objects} for t in range(n + 1)}
    return n, table


def find_protecting_prefix(setup: ProbeSetup) -> ProtectionReport:
    """Sweep every proper prefix and every object of the writer's data set."""
    n, table = valence_table(setup)
    W = setup.wset
    protecting = [t for t in range(1, n) if W and all(protects(table, t, j) for j in W)]
    mixed = []
    for t, row in table.items():
        kinds = {row[j].kind for j in W}
        if ZERO in kinds and ONE in kinds:
            mixed.append(t)
    monotone = []
    for j in W:
        seen_one = False
        for t in range(n + 1):
            k = table[t][j].kind
            if k == ONE:
                seen_one = True
            elif k == ZERO and seen_one:
                monotone.append((j, t))
    rset_blocked = [(j, t) for j in setup.rset if j not in W for t in range(n + 1)
                    if table[t][j].kind != ZERO]
    return ProtectionReport(setup, n, table, protecting, mixed, monotone, rset_blocked)
