"""Progress conditions: progressiveness and strong progressiveness."""

from __future__ import annotations

from ..core import History, Verdict, conflicts


def _objects_before(t, cut: int, writes_only: bool = False) -> set[int]:
    return {op.object for op in t.ops if op.inv < cut and op.object is not None
            and (op.name == "write" or (not writes_only and op.name == "read"))}


def check_progressiveness(h: History) -> Verdict:
    """Every forcefully aborted transaction must have met a conflict with a
    transaction that was live at the time.

    Conflicts only grow as a prefix grows, so for each candidate T_k it
    suffices to look at the longest prefix in which T_k is live: the one
    ending just before T_k's last event (or all of H if T_k never completes)."""
    txs = h.transactions()
    by_start = sorted(txs.values(), key=lambda t: t.first)
    for i, ti in txs.items():
        if not ti.forcefully_aborted:
            continue
        found = False
        for tk in by_start:
            if tk.first > ti.last:
                break
            if tk.tx == i:
                continue
            cut = tk.last if tk.complete else len(h)
            if ti.first >= cut:
                continue
            # T_k is live in the prefix; T_i precedes it only if complete before T_k starts
            if ti.last < cut and ti.complete and ti.last < tk.first:
                continue
            di, dk = _objects_before(ti, cut), _objects_before(tk, cut)
            wi, wk = _objects_before(ti, cut, True), _objects_before(tk, cut, True)
            if (di & dk) & (wi | wk):
                found = True
                break
        if not found:
            return Verdict(False, [i], f"T{i} was forcefully aborted without a live conflicting transaction")
    return Verdict(True)


def conflict_graph(h: History) -> dict[tuple[int, int], set[int]]:
    txs = sorted(h.transactions())
    out = {}
    for a_i, a in enumerate(txs):
        for b in txs[a_i + 1:]:
            c = conflicts(h, a, b)
            if c:
                out[(a, b)] = c
    return out


def conflict_components(h: History) -> list[tuple[set[int], set[int]]]:
    """Connected components of the conflict graph with their conflict objects."""
    txs = list(h.transactions())
    graph = conflict_graph(h)
    adj: dict[int, set[int]] = {t: set() for t in txs}
    for a, b in graph:
        adj[a].add(b)
        adj[b].add(a)
    seen: set[int] = set()
    comps = []
    for t in txs:
        if t in seen:
            continue
        comp, todo = set(), [t]
        while todo:
            x = todo.pop()
            if x in comp:
                continue
            comp.add(x)
            todo.extend(adj[x] - comp)
        seen |= comp
        objs: set[int] = set()
        for (a, b), c in graph.items():
            if a in comp:
                objs |= c
        comps.append((comp, objs))
    return comps


def check_strong_progressiveness(h: History) -> Verdict:
    """No conflict-closed set of transactions whose conflicts span at most one
    t-object may have all of its members forcefully aborted.

    Conflict-closed sets are unions of connected components of the conflict
    graph, and such a union violates the condition only if one of its
    components does, so checking components is enough."""
    txs = h.transactions()
    for comp, objs in conflict_components(h):
        if len(objs) <= 1 and all(txs[t].forcefully_aborted for t in comp):
            return Verdict(False, sorted(comp), f"all of {sorted(comp)} aborted, conflicting on {sorted(objs)}")
    return Verdict(True)
