"""Structural checks on execution traces.

Invisible reads, strict data partitioning, the disjoint-access consequence
(no shared base object with a non-trivial access between disjoint-access
transactions), mutual exclusion of trylock holds, and the bakery lock's
label invariants.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Optional

from ..core import INV_READ, RESP_READ, TmEvent, Verdict
from ..memory import ATOMIC_BEGIN, WRITE, BaseEvent, BaseWord, ExecutionTrace, Mark


def _nontrivial(e: BaseEvent) -> bool:
    return e.nontrivial and e.kind in (WRITE, ATOMIC_BEGIN)


def check_invisible_reads(trace: ExecutionTrace) -> Verdict:
    """No non-trivial base event inside any tm-read's invocation/response window."""
    reading: dict[int, TmEvent] = {}
    for e in trace.events:
        if isinstance(e, TmEvent):
            if e.kind == INV_READ:
                reading[e.process] = e
            elif e.kind == RESP_READ:
                reading.pop(e.process, None)
        elif isinstance(e, BaseEvent) and e.process in reading and _nontrivial(e):
            inv = reading[e.process]
            return Verdict(False, [inv.seq, e.seq], f"T{inv.tx} writes base object {e.object} inside a read")
    return Verdict(True)


def _owner_map(beta: dict) -> dict[int, int]:
    owner: dict[int, int] = {}
    for X, objs in beta.items():
        for o in objs:
            if o in owner and owner[o] != X:
                raise ValueError(f"base object {o} owned by both X{owner[o]} and X{X}")
            owner[o] = X
    return owner


def check_strict_partitioning(trace: ExecutionTrace, beta: Optional[dict] = None) -> Verdict:
    """Every base access of a transaction lies in the base objects of some
    t-object in its data set.  ``beta`` defaults to the trace's object tags."""
    owner = _owner_map(trace.beta() if beta is None else beta)
    txs = trace.history.transactions()
    for e in trace.events:
        if not isinstance(e, BaseEvent) or e.object is None or e.tx == 0:
            continue
        t = txs.get(e.tx)
        dset = t.dset if t is not None else set()
        X = owner.get(e.object)
        if X is None or X not in dset:
            where = "an unowned base object" if X is None else f"a base object of X{X}"
            return Verdict(False, [e.seq], f"T{e.tx} accesses {where} ({e.object}) outside its data set")
    return Verdict(True)


def tx_intervals(trace: ExecutionTrace) -> dict[int, tuple[int, int]]:
    """First and last trace position of every event attributed to each transaction."""
    out: dict[int, list[int]] = {}
    for pos, e in enumerate(trace.events):
        tx = e.tx
        if not tx:
            continue
        if tx in out:
            out[tx][1] = pos
        else:
            out[tx] = [pos, pos]
    return {k: (a, b) for k, (a, b) in out.items()}


def disjoint_access(trace: ExecutionTrace, a: int, b: int,
                    intervals: Optional[dict] = None, dsets: Optional[dict] = None) -> bool:
    """No path between Dset(T_a) and Dset(T_b) in the conflict graph of the
    smallest interval containing both transactions."""
    intervals = intervals or tx_intervals(trace)
    if dsets is None:
        dsets = {k: t.dset for k, t in trace.history.transactions().items()}
    lo = min(intervals[a][0], intervals[b][0])
    hi = max(intervals[a][1], intervals[b][1])
    parent: dict[int, int] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, (s, f) in intervals.items():
        if f < lo or s > hi:
            continue
        ds = sorted(dsets.get(k, ()))
        for x in ds[1:]:
            parent[find(x)] = find(ds[0])
    roots_a = {find(x) for x in dsets.get(a, ())}
    roots_b = {find(x) for x in dsets.get(b, ())}
    return not (roots_a & roots_b)


def check_dap_conclusion(trace: ExecutionTrace) -> Verdict:
    """Disjoint-access transactions never access a common base object with
    at least one of the accesses non-trivial."""
    intervals = tx_intervals(trace)
    dsets = {k: t.dset for k, t in trace.history.transactions().items()}
    access: dict[int, dict[int, bool]] = defaultdict(dict)  # tx -> object -> nontrivial?
    section_nt: dict[int, bool] = {}
    for e in trace.events:
        if not isinstance(e, BaseEvent) or not e.tx:
            continue
        if e.kind == ATOMIC_BEGIN:
            section_nt[e.process] = e.nontrivial
            continue
        if e.object is None:
            continue
        nt = e.kind == WRITE or (e.depth > 0 and section_nt.get(e.process, False))
        access[e.tx][e.object] = access[e.tx].get(e.object, False) or nt
    txs = sorted(access)
    for i, a in enumerate(txs):
        for b in txs[i + 1:]:
            shared = [o for o in access[a] if o in access[b] and (access[a][o] or access[b][o])]
            if shared and disjoint_access(trace, a, b, intervals, dsets):
                return Verdict(False, [a, b], f"disjoint-access T{a} and T{b} share base object {shared[0]}")
    return Verdict(True)


def hold_intervals(trace: ExecutionTrace) -> list[tuple[int, int, int, int]]:
    """(object, process, start seq, end seq or -1) for every lock hold."""
    open_: dict[tuple[int, int], int] = {}
    out = []
    for e in trace.events:
        if not isinstance(e, Mark):
            continue
        if e.op == "acquire" and e.phase == "resp" and e.result:
            for j in e.objects:
                open_[(j, e.process)] = e.seq
        elif e.op == "release" and e.phase == "inv":
            for j in e.objects:
                start = open_.pop((j, e.process), None)
                if start is not None:
                    out.append((j, e.process, start, e.seq))
    out.extend((j, p, s, -1) for (j, p), s in open_.items())
    return sorted(out, key=lambda x: x[2])


def check_mutual_exclusion(trace: ExecutionTrace) -> Verdict:
    """At no point do two processes hold a lock on the same object."""
    holder: dict[int, tuple[int, int]] = {}
    for e in trace.events:
        if not isinstance(e, Mark):
            continue
        if e.op == "acquire" and e.phase == "resp" and e.result:
            for j in e.objects:
                if j in holder and holder[j][0] != e.process:
                    p, s = holder[j]
                    return Verdict(False, [s, e.seq], f"processes {p} and {e.process} both hold object {j}")
                holder[j] = (e.process, e.seq)
        elif e.op == "release" and e.phase == "inv":
            for j in e.objects:
                if j in holder and holder[j][0] == e.process:
                    del holder[j]
    return Verdict(True)


def check_label_bound(trace: ExecutionTrace, label_objects, n: int) -> Verdict:
    """Every value written to a label register lies in 0..n."""
    labels = set(label_objects)
    for e in trace.events:
        if isinstance(e, BaseEvent) and e.kind == WRITE and e.object in labels:
            if not 0 <= e.value.value <= n:
                return Verdict(False, [e.seq], f"label {e.value.value} written, bound is {n}")
    return Verdict(True)


def check_bakery_order(trace: ExecutionTrace, lock) -> Verdict:
    """At each point where process i obtains its locks on Q, every other
    process k with a published label that has flagged an object of Q is
    behind i: same colour means a larger (label, id) pair, a different colour
    means i's colour differs from the shared colour."""
    words: dict[int, BaseWord] = defaultdict(lambda: BaseWord(0, 0))
    for e in trace.events:
        if isinstance(e, BaseEvent) and e.kind == WRITE:
            words[e.object] = e.value
        elif isinstance(e, Mark) and e.op == "acquire" and e.phase == "resp" and e.result:
            i = e.process
            la_i = words[lock.LA[i]].value
            mc_i = words[lock.MC[i]].value
            for k in range(lock.n):
                if k == i:
                    continue
                la_k = words[lock.LA[k]].value
                if la_k == 0 or not any(words[lock.r[k][j]].value for j in e.objects):
                    continue
                if words[lock.MC[k]].value == mc_i:
                    if not (la_k, k) > (la_i, i):
                        return Verdict(False, [e.seq], f"p{i} enters ahead of p{k} with smaller label")
                elif mc_i == words[lock.color].value:
                    return Verdict(False, [e.seq], f"p{i} enters although p{k} has priority by colour")
    return Verdict(True)
