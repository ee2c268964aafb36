"""Opacity and strict serializability.

The search places transactions one at a time, always choosing among those
whose real-time and deferred-update predecessors are already placed (lowest
id first), and checks each transaction's reads against the values written
by the committed transactions placed before it.  A transaction whose tryC
is pending is tried both committed and aborted; every other incomplete
transaction is aborted.  States already shown to be dead ends are memoized,
so the search is exhaustive and a failing verdict is definitive.

:func:`validate_serialization` re-checks a witness from scratch by building
the sequential history explicitly, and :func:`brute_force_opacity` is the
naive all-permutations oracle used to cross-check the search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional

from ..core import (
    INIT_TX,
    INITIAL_VALUE,
    History,
    Outcome,
    Status,
    Transaction,
    Verdict,
    deferred_update_order,
    real_time_order,
    validate_history,
)

DEFAULT_MAX_TXS = 24


class SearchTooLarge(Exception):
    """The history has more transactions than the configured search bound."""


@dataclass(frozen=True)
class _Tx:
    tx: int
    steps: tuple  # ("r", X, value) | ("w", X, value), in program order
    choice: tuple  # allowed final statuses: subset of ("C", "A")
    rt_preds: frozenset
    du_preds: frozenset  # readers that must precede this tx if it commits
    final_writes: tuple  # (X, value) after the last write per object


def _steps(t: Transaction) -> tuple:
    out = []
    for op in t.ops:
        if op.name == "read" and op.outcome is Outcome.VALUE:
            out.append(("r", op.object, op.result))
        elif op.name == "write" and not op.pending:
            out.append(("w", op.object, op.arg))
    return tuple(out)


def _choices(t: Transaction) -> tuple:
    st = t.status
    if st is Status.COMMITTED:
        return ("C",)
    if st is Status.ABORTED:
        return ("A",)
    pend = t.pending_op
    if pend is not None and pend.name == "tryC":
        return ("C", "A")
    return ("A",)


def _prepare(h: History, strict: bool) -> dict[int, _Tx]:
    txs = h.transactions()
    rt = real_time_order(h)
    # deferred-update edges as if every possibly-committing tx commits;
    # they only bind when that tx is placed as committed
    maybe = {t.tx for t in txs.values() if "C" in _choices(t)}
    du = deferred_update_order(h, committed=maybe)
    out = {}
    for k, t in txs.items():
        steps = _steps(t)
        fw: dict[int, int] = {}
        for kind, X, v in steps:
            if kind == "w":
                fw[X] = v
        out[k] = _Tx(
            k,
            steps,
            _choices(t),
            frozenset(a for a, b in rt if b == k and a != INIT_TX),
            frozenset(a for a, b in du if b == k),
            tuple(sorted(fw.items())),
        )
    return out


def _legal(t: _Tx, vals: dict) -> bool:
    own: dict[int, int] = {}
    for kind, X, v in t.steps:
        if kind == "w":
            own[X] = v
        elif X in own:
            if own[X] != v:
                return False
        elif vals.get(X, INITIAL_VALUE) != v:
            return False
    return True


def search_serialization(h: History, strict: bool = False, max_txs: int = DEFAULT_MAX_TXS,
                         unchecked: Iterable[int] = ()) -> Optional[tuple[list[int], set[int]]]:
    """Find (order, committed set) of a legal serialization, or None.

    With ``strict=True`` only committed transactions' reads must be legal;
    reads of the transactions in ``unchecked`` are never constrained."""
    txs = _prepare(h, strict)
    for k in set(unchecked) & set(txs):
        t = txs[k]
        txs[k] = _Tx(k, tuple(s for s in t.steps if s[0] == "w"), t.choice, t.rt_preds, t.du_preds,
                     t.final_writes)
    if len(txs) > max_txs:
        raise SearchTooLarge(f"{len(txs)} transactions exceed the search bound of {max_txs}")
    ids = sorted(txs)
    dead: set = set()
    order: list[int] = []
    committed: set[int] = set()

    def dfs(placed: frozenset, vals: tuple) -> bool:
        if len(placed) == len(ids):
            return True
        key = (placed, vals, frozenset(committed))
        if key in dead:
            return False
        cur = dict(vals)
        for k in ids:
            if k in placed:
                continue
            t = txs[k]
            if not t.rt_preds <= placed:
                continue
            for choice in t.choice:
                if choice == "C" and not t.du_preds <= placed:
                    continue
                if (choice == "C" or not strict) and not _legal(t, cur):
                    continue
                nv = vals
                if choice == "C" and t.final_writes:
                    d = dict(cur)
                    d.update(t.final_writes)
                    nv = tuple(sorted(d.items()))
                order.append(k)
                if choice == "C":
                    committed.add(k)
                if dfs(placed | {k}, nv):
                    return True
                order.pop()
                committed.discard(k)
        dead.add(key)
        return False

    if dfs(frozenset(), ()):
        return list(order), set(committed)
    return None


def check_opacity(h: History, max_txs: int = DEFAULT_MAX_TXS, strict: bool = False) -> Verdict:
    """Pass iff some completion of ``h`` has a legal serialization respecting
    real-time and deferred-update order.  The witness is the serialization,
    starting with the initializing transaction 0."""
    wf = validate_history(h)
    if not wf:
        return Verdict(False, wf.witness, "history is not well-formed: " + wf.reason)
    found = search_serialization(h, strict=strict, max_txs=max_txs)
    if found is None:
        return Verdict(False, sorted(h.transactions()), "no legal serialization exists")
    order, committed = found
    return Verdict(True, [INIT_TX] + order, f"committed in completion: {sorted(committed)}")


def committed_projection(h: History) -> History:
    """Events of transactions that are committed or have a pending tryC."""
    keep = [t.tx for t in h.transactions().values() if "C" in _choices(t)]
    return h.restrict(keep)


def check_strict_serializability(h: History, max_txs: int = DEFAULT_MAX_TXS) -> Verdict:
    """Opacity restricted to transactions that commit (reads of aborted and live
    transactions are not constrained)."""
    return check_opacity(committed_projection(h), max_txs=max_txs, strict=True)


# -- independent re-validation -------------------------------------------------


def validate_serialization(h: History, order: Iterable[int], committed: Iterable[int],
                           strict: bool = False) -> Verdict:
    """Check a proposed serialization literally.

    Builds the sequential history of ``order`` (transaction 0 first, writing
    the initial value everywhere), then checks: the completion is admissible,
    every read returns the latest value written before it by a committed
    transaction or by its own transaction, and the real-time and
    deferred-update orders are respected."""
    txs = h.transactions()
    order = [k for k in order if k != INIT_TX]
    committed = set(committed)
    if sorted(order) != sorted(txs):
        return Verdict(False, order, "order is not a permutation of the transactions")
    for k, t in txs.items():
        want = "C" if k in committed else "A"
        if want not in _choices(t):
            return Verdict(False, [k], f"T{k} cannot be completed as {want}")
    pos = {k: i for i, k in enumerate(order)}
    pos[INIT_TX] = -1
    for a, b in real_time_order(h):
        if pos[a] > pos[b]:
            return Verdict(False, [a, b], "real-time order violated")
    for a, b in deferred_update_order(h, committed=committed):
        if pos[a] > pos[b]:
            return Verdict(False, [a, b], "deferred-update order violated")
    # explicit sequential history: (tx, kind, X, value)
    seq = [(INIT_TX, "w", X, INITIAL_VALUE) for X in sorted(h.objects())]
    status = {INIT_TX: "C"}
    for k in order:
        seq.extend((k, kind, X, v) for kind, X, v in _steps(txs[k]))
        status[k] = "C" if k in committed else "A"
    for i, (k, kind, X, v) in enumerate(seq):
        if kind != "r" or (strict and status[k] != "C"):
            continue
        latest = INITIAL_VALUE
        for j in range(i - 1, -1, -1):
            k2, kind2, X2, v2 = seq[j]
            if kind2 == "w" and X2 == X and (k2 == k or status[k2] == "C"):
                latest = v2
                break
        if latest != v:
            return Verdict(False, [k], f"T{k} read {v} from X{X}, latest written value is {latest}")
    return Verdict(True, [INIT_TX] + order)


def brute_force_opacity(h: History, strict: bool = False, max_txs: int = 8) -> Verdict:
    """Try every permutation and every admissible completion."""
    txs = h.transactions()
    if len(txs) > max_txs:
        raise SearchTooLarge(f"{len(txs)} transactions is too many for brute force")
    if not validate_history(h):
        return Verdict(False, None, "history is not well-formed")
    ids = sorted(txs)
    options = [[k] if _choices(txs[k]) == ("C",) else ([] if _choices(txs[k]) == ("A",) else [k, None])
               for k in ids]
    for combo in itertools.product(*[o if o else [None] for o in options]):
        committed = {k for k in combo if k is not None}
        for perm in itertools.permutations(ids):
            v = validate_serialization(h, perm, committed, strict=strict)
            if v:
                return Verdict(True, v.witness, f"committed in completion: {sorted(committed)}")
    return Verdict(False, ids, "no legal serialization exists")
