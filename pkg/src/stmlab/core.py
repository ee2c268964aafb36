"""Transactions, histories and the orders defined over them.

A :class:`History` is the sequence of invocation/response events of the
four tm-operations (read, write, tryC, tryA).  Everything the checkers in
:mod:`stmlab.analysis` need (read/write sets, completion status, real-time
and deferred-update orders, conflicts) is derived here from the events
alone; implementations are treated as black boxes.

Transaction id 0 is reserved for the fictitious initializing transaction
that writes 0 to every t-object and commits before everything else.  It is
never stored as events, only materialized by the checkers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional

INIT_TX = 0
INITIAL_VALUE = 0

INV_READ = "inv-read"
RESP_READ = "resp-read"
INV_WRITE = "inv-write"
RESP_WRITE = "resp-write"
INV_TRYC = "inv-tryC"
RESP_TRYC = "resp-tryC"
INV_TRYA = "inv-tryA"
RESP_TRYA = "resp-tryA"

INVOCATIONS = (INV_READ, INV_WRITE, INV_TRYC, INV_TRYA)
RESPONSES = (RESP_READ, RESP_WRITE, RESP_TRYC, RESP_TRYA)
EVENT_KINDS = INVOCATIONS + RESPONSES
_MATCH = dict(zip(INVOCATIONS, RESPONSES))
_OP_NAME = {INV_READ: "read", INV_WRITE: "write", INV_TRYC: "tryC", INV_TRYA: "tryA"}


class Outcome(str, Enum):
    OK = "ok"
    VALUE = "value"
    COMMIT = "commit"
    ABORT = "abort"


COMMIT = Outcome.COMMIT
ABORT = Outcome.ABORT
OK = Outcome.OK


class Status(str, Enum):
    LIVE = "live"
    COMMITTED = "committed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class TmEvent:
    seq: int
    kind: str
    tx: int
    process: int
    object: Optional[int] = None
    value: Optional[int] = None
    outcome: Optional[Outcome] = None

    @property
    def is_invocation(self) -> bool:
        return self.kind in INVOCATIONS

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "tx": self.tx,
            "process": self.process,
            "object": self.object,
            "value": self.value,
            "outcome": None if self.outcome is None else self.outcome.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TmEvent":
        kind = d["kind"]
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown tm-event kind {kind!r}")
        outcome = d.get("outcome")
        return cls(
            seq=int(d["seq"]),
            kind=kind,
            tx=int(d["tx"]),
            process=int(d["process"]),
            object=None if d.get("object") is None else int(d["object"]),
            value=None if d.get("value") is None else int(d["value"]),
            outcome=None if outcome is None else Outcome(outcome),
        )


@dataclass(frozen=True)
class Verdict:
    """Result of a checker: pass/fail plus a witness or counterexample."""

    passed: bool
    witness: object = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"pass": self.passed, "witness": _jsonable(self.witness), "reason": self.reason}


def _jsonable(x):
    if isinstance(x, (set, frozenset)):
        return sorted(_jsonable(v) for v in x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, Enum):
        return x.value
    return x


@dataclass
class Operation:
    """One tm-operation of a transaction: its invocation and (maybe) response."""

    name: str  # read | write | tryC | tryA
    inv: int  # index of the invocation in the history
    object: Optional[int] = None
    arg: Optional[int] = None  # value argument of a write
    resp: Optional[int] = None  # index of the response, None while pending
    outcome: Optional[Outcome] = None
    result: Optional[int] = None  # value returned by a read

    @property
    def pending(self) -> bool:
        return self.resp is None


@dataclass
class Transaction:
    tx: int
    process: int
    ops: list[Operation] = field(default_factory=list)

    @property
    def first(self) -> int:
        return self.ops[0].inv

    @property
    def last(self) -> int:
        last = self.ops[-1]
        return last.inv if last.resp is None else last.resp

    @property
    def status(self) -> Status:
        last = self.ops[-1] if self.ops else None
        if last is None or last.resp is None:
            return Status.LIVE
        if last.outcome is Outcome.ABORT:
            return Status.ABORTED
        if last.name == "tryC" and last.outcome is Outcome.COMMIT:
            return Status.COMMITTED
        return Status.LIVE

    @property
    def complete(self) -> bool:
        return self.status is not Status.LIVE

    @property
    def committed(self) -> bool:
        return self.status is Status.COMMITTED

    @property
    def forcefully_aborted(self) -> bool:
        return any(op.outcome is Outcome.ABORT and op.name != "tryA" for op in self.ops)

    @property
    def pending_op(self) -> Optional[Operation]:
        if self.ops and self.ops[-1].pending:
            return self.ops[-1]
        return None

    @property
    def rset(self) -> set[int]:
        return {op.object for op in self.ops if op.name == "read"}

    @property
    def wset(self) -> set[int]:
        return {op.object for op in self.ops if op.name == "write"}

    @property
    def dset(self) -> set[int]:
        return self.rset | self.wset

    def reads(self) -> Iterator[Operation]:
        """Reads that returned a value (not aborted, not pending)."""
        for op in self.ops:
            if op.name == "read" and op.outcome is Outcome.VALUE:
                yield op

    def writes(self) -> Iterator[Operation]:
        for op in self.ops:
            if op.name == "write":
                yield op


class History:
    """An ordered list of :class:`TmEvent` with derived per-transaction views."""

    def __init__(self, events: Iterable[TmEvent] = ()):
        self.events: list[TmEvent] = list(events)
        self._txs: Optional[dict[int, Transaction]] = None

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __eq__(self, other) -> bool:
        return isinstance(other, History) and self.events == other.events

    def __repr__(self) -> str:
        return f"History({len(self.events)} events, {len(self.transactions())} txns)"

    def key(self) -> tuple:
        """Hashable identity ignoring absolute sequence numbers."""
        return tuple(
            (e.kind, e.tx, e.process, e.object, e.value, e.outcome) for e in self.events
        )

    def prefix(self, n: int) -> "History":
        return History(self.events[:n])

    def restrict(self, txs: Iterable[int]) -> "History":
        keep = set(txs)
        return History(e for e in self.events if e.tx in keep)

    def transactions(self) -> dict[int, Transaction]:
        """Transactions in order of first appearance.  Requires well-formedness."""
        if self._txs is None:
            txs: dict[int, Transaction] = {}
            for i, e in enumerate(self.events):
                t = txs.get(e.tx)
                if t is None:
                    t = txs[e.tx] = Transaction(e.tx, e.process)
                if e.is_invocation:
                    name = _OP_NAME[e.kind]
                    t.ops.append(
                        Operation(
                            name,
                            i,
                            object=e.object,
                            arg=e.value if name == "write" else None,
                        )
                    )
                else:
                    op = t.ops[-1]
                    op.resp = i
                    op.outcome = e.outcome
                    if op.name == "read" and e.outcome is Outcome.VALUE:
                        op.result = e.value
            self._txs = txs
        return self._txs

    def objects(self) -> set[int]:
        return {e.object for e in self.events if e.object is not None}

    # -- serialization -------------------------------------------------

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "History":
        events = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
            # trace files interleave base events; keep only tm-events
            if d.get("event", "tm") != "tm":
                continue
            events.append(TmEvent.from_dict(d))
        return cls(events)


class HistoryBuilder:
    """Small helper for writing histories by hand (tests, canned examples)."""

    def __init__(self):
        self.events: list[TmEvent] = []
        self._proc: dict[int, int] = {}

    def _add(self, kind, tx, obj=None, value=None, outcome=None, process=None):
        if process is None:
            process = self._proc.get(tx, tx)
        self._proc[tx] = process
        self.events.append(TmEvent(len(self.events), kind, tx, process, obj, value, outcome))
        return self

    def inv_read(self, tx, obj, process=None):
        return self._add(INV_READ, tx, obj, process=process)

    def resp_read(self, tx, obj, value):
        if value is ABORT:
            return self._add(RESP_READ, tx, obj, None, ABORT)
        return self._add(RESP_READ, tx, obj, value, Outcome.VALUE)

    def inv_write(self, tx, obj, value, process=None):
        return self._add(INV_WRITE, tx, obj, value, process=process)

    def resp_write(self, tx, obj, outcome=OK):
        return self._add(RESP_WRITE, tx, obj, None, outcome)

    def inv_tryc(self, tx, process=None):
        return self._add(INV_TRYC, tx, process=process)

    def resp_tryc(self, tx, outcome):
        return self._add(RESP_TRYC, tx, outcome=outcome)

    def inv_trya(self, tx, process=None):
        return self._add(INV_TRYA, tx, process=process)

    def resp_trya(self, tx):
        return self._add(RESP_TRYA, tx, outcome=ABORT)

    # complete operations
    def read(self, tx, obj, value, process=None):
        return self.inv_read(tx, obj, process).resp_read(tx, obj, value)

    def write(self, tx, obj, value, process=None):
        return self.inv_write(tx, obj, value, process).resp_write(tx, obj)

    def commit(self, tx, process=None):
        return self.inv_tryc(tx, process).resp_tryc(tx, COMMIT)

    def abort(self, tx, process=None):
        """A forceful abort returned by tryC."""
        return self.inv_tryc(tx, process).resp_tryc(tx, ABORT)

    def trya(self, tx, process=None):
        return self.inv_trya(tx, process).resp_trya(tx)

    def build(self) -> History:
        return History(self.events)


# -- operations ----------------------------------------------------------


def validate_history(h: History) -> Verdict:
    """Well-formedness: per-transaction sequential, nothing after C_k/A_k,
    and per-process t-sequential."""
    pending: dict[int, TmEvent] = {}  # tx -> pending invocation
    finished: set[int] = set()
    owner: dict[int, int] = {}  # tx -> process
    active: dict[int, int] = {}  # process -> live tx
    prev_seq = None
    for i, e in enumerate(h.events):
        if prev_seq is not None and e.seq <= prev_seq:
            return Verdict(False, {"event": i}, "sequence numbers not increasing")
        prev_seq = e.seq
        if e.kind not in EVENT_KINDS:
            return Verdict(False, {"event": i}, f"unknown kind {e.kind}")
        if e.tx == INIT_TX:
            return Verdict(False, {"event": i}, "transaction id 0 is reserved")
        if e.tx in finished:
            return Verdict(False, {"event": i}, f"event after completion of T{e.tx}")
        if owner.setdefault(e.tx, e.process) != e.process:
            return Verdict(False, {"event": i}, f"T{e.tx} spans several processes")
        cur = active.get(e.process)
        if cur is not None and cur != e.tx:
            return Verdict(
                False, {"event": i, "live": cur}, f"process {e.process} interleaves T{cur} and T{e.tx}"
            )
        if e.is_invocation:
            if e.tx in pending:
                j = h.events.index(pending[e.tx])
                return Verdict(False, {"events": [j, i]}, f"T{e.tx} invokes while an operation is pending")
            if e.kind in (INV_READ, INV_WRITE) and e.object is None:
                return Verdict(False, {"event": i}, "read/write without object")
            if e.kind == INV_WRITE and e.value is None:
                return Verdict(False, {"event": i}, "write without value")
            pending[e.tx] = e
            active[e.process] = e.tx
        else:
            inv = pending.pop(e.tx, None)
            if inv is None or _MATCH[inv.kind] != e.kind:
                return Verdict(False, {"event": i}, f"response without matching invocation in T{e.tx}")
            if e.outcome is None:
                return Verdict(False, {"event": i}, "response without outcome")
            if e.kind in (RESP_READ, RESP_WRITE) and e.object != inv.object:
                return Verdict(False, {"event": i}, "response object differs from invocation")
            if e.kind == RESP_READ and e.outcome is Outcome.VALUE and e.value is None:
                return Verdict(False, {"event": i}, "read response without value")
            ok = {
                RESP_READ: (Outcome.VALUE, ABORT),
                RESP_WRITE: (OK, ABORT),
                RESP_TRYC: (COMMIT, ABORT),
                RESP_TRYA: (ABORT,),
            }[e.kind]
            if e.outcome not in ok:
                return Verdict(False, {"event": i}, f"outcome {e.outcome.value} invalid for {e.kind}")
            if e.outcome in (COMMIT, ABORT):
                finished.add(e.tx)
                active.pop(e.process, None)
    return Verdict(True)


def real_time_order(h: History) -> set[tuple[int, int]]:
    """Pairs (k, m): T_k complete and its last event precedes T_m's first.
    T_0 precedes every transaction."""
    txs = list(h.transactions().values())
    edges = {(INIT_TX, t.tx) for t in txs}
    for a in txs:
        if not a.complete:
            continue
        for b in txs:
            if a is not b and a.last < b.first:
                edges.add((a.tx, b.tx))
    return edges


def deferred_update_order(h: History, committed: Optional[set[int]] = None) -> set[tuple[int, int]]:
    """Pairs (k, m): some X in Rset(T_k) & Wset(T_m), T_m committed, and the
    response of read_k(X) precedes the invocation of tryC_m.

    ``committed`` overrides which transactions count as committed (used when
    a completion commits a pending tryC)."""
    txs = h.transactions()
    if committed is None:
        committed = {t.tx for t in txs.values() if t.committed}
    tryc_inv = {}
    for t in txs.values():
        for op in t.ops:
            if op.name == "tryC":
                tryc_inv[t.tx] = op.inv
    edges = set()
    for m in committed:
        tm = txs.get(m)
        if tm is None or m not in tryc_inv:
            continue
        w = tm.wset
        for k, tk in txs.items():
            if k == m:
                continue
            for op in tk.ops:
                if (
                    op.name == "read"
                    and op.object in w
                    and op.resp is not None
                    and op.resp < tryc_inv[m]
                ):
                    edges.add((k, m))
                    break
    return edges


def concurrent(a: Transaction, b: Transaction) -> bool:
    if a.complete and a.last < b.first:
        return False
    if b.complete and b.last < a.first:
        return False
    return True


def conflicts(h: History, a: int, b: int) -> set[int]:
    """t-objects on which T_a and T_b conflict: concurrent, shared in their
    data sets, and written by at least one of them."""
    txs = h.transactions()
    ta, tb = txs.get(a), txs.get(b)
    if ta is None or tb is None or a == b or not concurrent(ta, tb):
        return set()
    return (ta.dset & tb.dset) & (ta.wset | tb.wset)
