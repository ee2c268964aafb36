"""Detection of read-after-write (RAW) and atomic write-after-read (AWAR) patterns.

A RAW is a write of base object x followed, in the same process, by a read
of some y != x with no write to y in between.  Two RAWs overlap when their
[write, read] intervals intersect; the reported ``raw_count`` is the size of
a largest set of pairwise non-overlapping RAWs, found greedily by earliest
read (optimal for intervals).  A multi-RAW is a maximal block of writes
followed by a maximal block of reads that together contain a RAW.  An AWAR is
an atomic section that reads some object before writing some object.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from ..core import TmEvent, Verdict
from ..memory import ATOMIC_BEGIN, ATOMIC_END, READ, WRITE, BaseEvent, ExecutionTrace, Mark


@dataclass
class Counts:
    raw_count: int = 0
    multi_raw_count: int = 0
    awar_count: int = 0
    raw_pairs: list = field(default_factory=list)  # (write seq, read seq) of the counted RAWs
    events: int = 0

    def to_dict(self) -> dict:
        return {
            "raw_count": self.raw_count,
            "multi_raw_count": self.multi_raw_count,
            "awar_count": self.awar_count,
            "raw_pairs": [list(p) for p in self.raw_pairs],
            "events": self.events,
        }


def count_patterns(events: list[BaseEvent]) -> Counts:
    """Patterns in one process's events, given in program order."""
    c = Counts(events=sum(1 for e in events if e.kind in (READ, WRITE)))
    # greedy non-overlapping RAWs
    last_end = -1  # position of the read closing the last counted RAW
    last_write_to: dict[int, int] = {}
    last_write_pos = -1
    for pos, e in enumerate(events):
        if e.kind == WRITE:
            last_write_to[e.object] = pos
            last_write_pos = pos
        elif e.kind == READ:
            lo = max(last_end, last_write_to.get(e.object, -1))
            if last_write_pos > lo:
                c.raw_count += 1
                c.raw_pairs.append((events[last_write_pos].seq, e.seq))
                last_end = pos
    # multi-RAWs: write block followed by read block containing a RAW
    plain = [e for e in events if e.kind in (READ, WRITE)]
    i = 0
    while i < len(plain):
        if plain[i].kind != WRITE:
            i += 1
            continue
        j = i
        while j < len(plain) and plain[j].kind == WRITE:
            j += 1
        block_w = plain[i:j]
        k = j
        while k < len(plain) and plain[k].kind == READ:
            k += 1
        block_r = plain[j:k]
        if block_r and _block_has_raw(block_w, block_r):
            c.multi_raw_count += 1
        i = k if k > j else j
    # AWARs
    in_section = False
    seen_read = False
    awar = False
    for e in events:
        if e.kind == ATOMIC_BEGIN:
            in_section, seen_read, awar = True, False, False
        elif e.kind == ATOMIC_END:
            if awar:
                c.awar_count += 1
            in_section = False
        elif in_section:
            if e.kind == READ:
                seen_read = True
            elif e.kind == WRITE and seen_read:
                awar = True
    return c


def _block_has_raw(ws: list[BaseEvent], rs: list[BaseEvent]) -> bool:
    last = {}
    for pos, w in enumerate(ws):
        last[w.object] = pos
    for r in rs:
        # some write after the last write to r's object, hence to another object
        if last.get(r.object, -1) < len(ws) - 1:
            return True
    return False


@dataclass
class PatternReport:
    per_tx: dict = field(default_factory=dict)  # tx -> Counts
    per_op: dict = field(default_factory=dict)  # (tx, op name, n-th op of tx) -> Counts

    def get(self, tx: int) -> Counts:
        return self.per_tx.get(tx, Counts())

    def to_dict(self) -> dict:
        return {
            "per_tx": {str(k): v.to_dict() for k, v in sorted(self.per_tx.items())},
            "per_op": [
                {"tx": k[0], "op": k[1], "index": k[2], **v.to_dict()}
                for k, v in sorted(self.per_op.items(), key=lambda kv: (kv[0][0], kv[0][2]))
            ],
        }


def detect_patterns(trace: ExecutionTrace) -> PatternReport:
    """Per-transaction and per-operation pattern counts.

    Base events are attributed to the transaction recorded on them and to the
    outermost operation open on their process (a tm-operation or a marked
    operation such as begin or a standalone lock call)."""
    by_tx: dict[int, list[BaseEvent]] = defaultdict(list)
    by_op: dict[tuple, list[BaseEvent]] = defaultdict(list)
    stack: dict[int, list] = defaultdict(list)  # process -> open ops
    op_no: dict[int, int] = defaultdict(int)  # tx -> ops seen
    for e in trace.events:
        if isinstance(e, TmEvent) or isinstance(e, Mark):
            p = e.process
            inv = e.is_invocation if isinstance(e, TmEvent) else e.phase == "inv"
            name = e.kind.split("-", 1)[1] if isinstance(e, TmEvent) else e.op
            if inv:
                if not stack[p]:
                    op_no[e.tx] += 1
                    stack[p].append((e.tx, name, op_no[e.tx]))
                else:
                    stack[p].append(stack[p][-1])
            elif stack[p]:
                stack[p].pop()
        elif isinstance(e, BaseEvent):
            by_tx[(e.process, e.tx)].append(e)
            if stack[e.process]:
                by_op[stack[e.process][0]].append(e)
    rep = PatternReport()
    for (p, tx), evs in by_tx.items():
        c = count_patterns(evs)
        if tx in rep.per_tx:  # same tx id on two processes: merge (should not happen)
            old = rep.per_tx[tx]
            c = Counts(old.raw_count + c.raw_count, old.multi_raw_count + c.multi_raw_count,
                       old.awar_count + c.awar_count, old.raw_pairs + c.raw_pairs, old.events + c.events)
        rep.per_tx[tx] = c
    for key, evs in by_op.items():
        rep.per_op[key] = count_patterns(evs)
    return rep


def tx_classes(trace: ExecutionTrace) -> dict[int, str]:
    """read-only / updating / aborted for each transaction of the history."""
    out = {}
    for k, t in trace.history.transactions().items():
        if t.status.value == "aborted":
            out[k] = "aborted"
        elif not t.wset:
            out[k] = "read-only"
        else:
            out[k] = "updating"
    return out


def check_pattern_budget(variant: str, trace: ExecutionTrace, report: PatternReport = None):
    """The synchronization cost each STM variant promises, per transaction.

    prog-raw     updating: at most one multi-RAW; read-only: no RAW
    prog-mcas    committed updating: exactly one AWAR; read-only, aborted: none
    strong-prog  updating: at most four RAWs; read-only: no RAW
    single-lock  a transaction that reads and writes shows a RAW or an AWAR
    """
    report = report or detect_patterns(trace)
    txs = trace.history.transactions()
    for k, t in txs.items():
        c = report.get(k)
        updating = bool(t.wset)
        if variant == "prog-raw":
            if updating and c.multi_raw_count > 1:
                return Verdict(False, [k], f"T{k}: {c.multi_raw_count} multi-RAWs")
            if not updating and c.raw_count:
                return Verdict(False, [k], f"read-only T{k}: {c.raw_count} RAWs")
        elif variant == "prog-mcas":
            want = 1 if updating and t.committed else 0
            if not updating or t.status.value != "live":
                if c.awar_count != want:
                    return Verdict(False, [k], f"T{k}: {c.awar_count} AWARs, expected {want}")
        elif variant == "strong-prog":
            if updating and c.raw_count > 4:
                return Verdict(False, [k], f"T{k}: {c.raw_count} RAWs")
            if not updating and c.raw_count:
                return Verdict(False, [k], f"read-only T{k}: {c.raw_count} RAWs")
        elif variant == "single-lock":
            has_read = any(op.name == "read" for op in t.ops)
            if has_read and updating and c.raw_count + c.awar_count == 0:
                return Verdict(False, [k], f"T{k} reads and writes without a RAW or AWAR")
    return Verdict(True)
