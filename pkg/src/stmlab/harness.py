"""Workloads, schedule enumeration and experiments.

A workload lists, per process, canonical transactions: distinct reads
followed by distinct writes, then tryC.  Transaction ids are fixed by the
workload (not by the schedule) so that runs of the same workload are
comparable, and written values are unique (``100 * tx + object + 1``) so a
read value identifies its writer.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .analysis.opacity import check_opacity, check_strict_serializability, search_serialization
from .analysis.patterns import check_pattern_budget, detect_patterns, tx_classes
from .analysis.progress import check_progressiveness, check_strong_progressiveness
from .analysis.structure import (
    check_dap_conclusion,
    check_invisible_reads,
    check_mutual_exclusion,
    check_strict_partitioning,
)
from .core import INIT_TX, History, HistoryBuilder, Outcome, Verdict
from .memory import ExecutionTrace, SharedMemory
from .sched import DeterministicRunner, Explorer, ExplorationStats, run_native
from .stm import VARIANTS, make_stm

MAX_N = 8
MAX_M = 8
MAX_TXNS = 4


class WorkloadError(ValueError):
    """A workload or template is malformed or exceeds its bounds."""


@dataclass
class TxSpec:
    tx: int
    reads: list = field(default_factory=list)
    writes: list = field(default_factory=list)  # [X, value] pairs
    abort: bool = False  # end with tryA instead of tryC

    def to_dict(self) -> dict:
        return {"tx": self.tx, "reads": list(self.reads), "writes": [list(w) for w in self.writes],
                "abort": self.abort}


@dataclass
class WorkloadSpec:
    n: int
    m: int
    txns: list  # per process: list of TxSpec
    variant: str = "prog-raw"
    seed: Optional[int] = None
    name: str = "custom"

    def validate(self) -> "WorkloadSpec":
        if self.variant not in VARIANTS:
            raise WorkloadError(f"unknown variant {self.variant!r}")
        if len(self.txns) != self.n:
            raise WorkloadError(f"{len(self.txns)} process programs for {self.n} processes")
        ids = set()
        for proc in self.txns:
            for t in proc:
                if t.tx <= INIT_TX or t.tx in ids:
                    raise WorkloadError(f"transaction id {t.tx} reserved or repeated")
                ids.add(t.tx)
                objs = list(t.reads) + [w[0] for w in t.writes]
                if any(not 0 <= X < self.m for X in objs):
                    raise WorkloadError(f"T{t.tx} names an object outside 0..{self.m - 1}")
                if len(set(t.reads)) != len(t.reads) or len({w[0] for w in t.writes}) != len(t.writes):
                    raise WorkloadError(f"T{t.tx} is not canonical: repeated object")
        return self

    def with_variant(self, variant: str) -> "WorkloadSpec":
        return WorkloadSpec(self.n, self.m, self.txns, variant, self.seed, self.name).validate()

    @property
    def all_txns(self) -> list[TxSpec]:
        return [t for proc in self.txns for t in proc]

    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n, "m": self.m, "variant": self.variant, "seed": self.seed,
                "txns": [[t.to_dict() for t in proc] for proc in self.txns]}

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadSpec":
        try:
            txns = [[TxSpec(t["tx"], list(t.get("reads", [])), [tuple(w) for w in t.get("writes", [])],
                            bool(t.get("abort", False))) for t in proc] for proc in d["txns"]]
            n = d.get("n", len(txns))
            return cls(n, d["m"], txns, d.get("variant", "prog-raw"), d.get("seed"),
                       d.get("name", "custom")).validate()
        except (KeyError, TypeError, IndexError) as exc:
            raise WorkloadError(f"malformed workload: {exc}") from exc


def value_for(tx: int, X: int) -> int:
    return 100 * tx + X + 1


@dataclass
class WorkloadTemplate:
    n: int = 3
    m: int = 4
    txns_per_process: int = 3
    max_reads: int = 2
    max_writes: int = 2
    write_prob: float = 0.7  # chance a transaction is updating
    variant: str = "prog-raw"
    limits: tuple = (MAX_N, MAX_M, MAX_TXNS)


def gen_workload(template: WorkloadTemplate, seed: int) -> WorkloadSpec:
    """Random canonical workload, deterministic in ``seed``."""
    ln, lm, lt = template.limits
    if not (1 <= template.n <= ln and 1 <= template.m <= lm and 0 <= template.txns_per_process <= lt):
        raise WorkloadError(f"template exceeds bounds N<={ln}, M<={lm}, txns<={lt}")
    rng = random.Random(seed)
    txns, tx = [], 0
    for _ in range(template.n):
        proc = []
        for _ in range(template.txns_per_process):
            tx += 1
            nr = rng.randint(0, min(template.max_reads, template.m))
            reads = rng.sample(range(template.m), nr)
            writes = []
            if template.max_writes and rng.random() < template.write_prob:
                nw = rng.randint(1, min(template.max_writes, template.m))
                writes = [(X, value_for(tx, X)) for X in rng.sample(range(template.m), nw)]
            proc.append(TxSpec(tx, reads, writes))
        txns.append(proc)
    return WorkloadSpec(template.n, template.m, txns, template.variant, seed, f"random-{seed}").validate()


def random_workload(seed: int, variant: str = "prog-raw", n: int = 3, m: int = 4, txns: int = 3) -> WorkloadSpec:
    """Random workload whose shape is also drawn from ``seed``: between 2 and
    ``n`` processes, 2 to ``m`` objects and 1 to ``txns`` transactions each."""
    rng = random.Random(seed)
    tpl = WorkloadTemplate(rng.randint(min(2, n), n), rng.randint(min(2, m), m), rng.randint(1, txns),
                           variant=variant)
    return gen_workload(tpl, seed)


# -- presets ---------------------------------------------------------------------

FIG1_VALUE = 7


def preset(name: str, variant: str = "prog-raw", m: int = 3, rset: Sequence[int] = ()) -> WorkloadSpec:
    """Named workloads.

    ``fig1``          T3 reads X1; T2 writes X1 and commits; T1 reads X1..Xm
                      (objects are numbered 1..m, object 0 is unused).
    ``thm2-minimal``  T1 reads X0 and writes X1; T2 reads X1 and writes X0.
    ``protect-sweep`` a single transaction writing X0..X(m-1) after reading ``rset``.
    """
    if name == "fig1":
        objs = list(range(1, m + 1))
        txns = [
            [TxSpec(1, objs, [])],
            [TxSpec(2, [], [(1, FIG1_VALUE)])],
            [TxSpec(3, [1], [])],
        ]
        return WorkloadSpec(3, m + 1, txns, variant, None, "fig1").validate()
    if name == "thm2-minimal":
        txns = [
            [TxSpec(1, [0], [(1, value_for(1, 1))])],
            [TxSpec(2, [1], [(0, value_for(2, 0))])],
        ]
        return WorkloadSpec(2, 2, txns, variant, None, "thm2-minimal").validate()
    if name == "protect-sweep":
        rset = [X for X in rset]
        total = max([m - 1] + rset, default=0) + 1
        txns = [[TxSpec(1, rset, [(X, value_for(1, X)) for X in range(m)])]]
        return WorkloadSpec(1, max(total, 1), txns, variant, None, "protect-sweep").validate()
    raise WorkloadError(f"unknown preset {name!r}")


PRESETS = ("fig1", "thm2-minimal", "protect-sweep")


def canned_history(name: str) -> History:
    """Hand-written histories matching the presets.

    ``fig1``  T3 reads X1=0 and stays live; T2 writes X1 and commits; T1 then
              reads the new X1 and the initial X2, X3 and commits.  Opaque,
              and T3, T2, T1 is its only serialization.
    ``thm2``  T1 reads X0=0, writes X1; T2 reads X1=0, writes X0; both
              commit.  Not opaque, not even strictly serializable.
    """
    b = HistoryBuilder()
    if name == "fig1":
        b.read(3, 1, 0, process=2)
        b.write(2, 1, FIG1_VALUE, process=1).commit(2)
        b.read(1, 1, FIG1_VALUE, process=0).read(1, 2, 0).read(1, 3, 0).commit(1)
    elif name in ("thm2", "thm2-minimal"):
        b.read(1, 0, 0, process=0).read(2, 1, 0, process=1)
        b.write(1, 1, value_for(1, 1)).write(2, 0, value_for(2, 0))
        b.commit(1).commit(2)
    else:
        raise WorkloadError(f"no canned history {name!r}")
    return b.build()


# -- programs ------------------------------------------------------------------------


def build(w: WorkloadSpec, mem: Optional[SharedMemory] = None, **stm_kw):
    """Fresh STM instance and one program per process."""
    stm = make_stm(w.variant, w.n, w.m, mem if mem is not None else SharedMemory(), **stm_kw)

    def program(p: int, txns: list):
        def gen():
            for t in txns:
                yield from stm.op_begin(p, t.tx)
                aborted = False
                for X in t.reads:
                    if (yield from stm.op_read(p, X)) is Outcome.ABORT:
                        aborted = True
                        break
                if aborted:
                    continue
                for X, v in t.writes:
                    yield from stm.op_write(p, X, v)
                if t.abort:
                    yield from stm.op_trya(p)
                else:
                    yield from stm.op_tryc(p)

        return gen

    return stm, [program(p, txns) for p, txns in enumerate(w.txns)]


def runner_factory(w: WorkloadSpec, **stm_kw):
    def factory():
        stm, progs = build(w, **stm_kw)
        return DeterministicRunner(progs, stm.mem)

    return factory


def run_schedule(w: WorkloadSpec, schedule: Sequence[int], **stm_kw) -> ExecutionTrace:
    r = runner_factory(w, **stm_kw)()
    r.replay(schedule)
    return r.trace()


def enumerate_runs(w: WorkloadSpec, depth: int = 60, preemptions: Optional[int] = None,
                   max_nodes: Optional[int] = None, stats: Optional[ExplorationStats] = None,
                   include_cut: bool = False, **stm_kw) -> Iterator[tuple[list[int], ExecutionTrace]]:
    ex = Explorer(runner_factory(w, **stm_kw), depth=depth, preemptions=preemptions, max_nodes=max_nodes,
                  yield_cut=include_cut)
    if stats is not None:
        ex.stats = stats
    return ex.run()


def enumerate_schedules(w: WorkloadSpec, depth: int = 60, preemptions: Optional[int] = None,
                        **kw) -> Iterator[list[int]]:
    """Every schedule driving the workload to completion within ``depth``
    steps, one per distinct reachable history and final configuration."""
    for s, _ in enumerate_runs(w, depth, preemptions, **kw):
        yield s


def contention_race(variant: str, X: int = 0) -> ExecutionTrace:
    """Two transactions that both write ``X`` and commit, scheduled so that
    each raises its lock flag on ``X`` before either looks at the other's,
    then alternate between them step by step.

    Under prog-raw both trylock acquisitions fail and both transactions
    abort; under strong-prog the bakery lock lets one of them through."""
    w = WorkloadSpec(2, X + 1, [[TxSpec(1, [], [(X, value_for(1, X))])], [TxSpec(2, [], [(X, value_for(2, X))])]],
                     variant, name="contention-race")
    stm, progs = build(w)
    r = DeterministicRunner(progs, stm.mem)
    flags = {stm.L.r[p][X] for p in range(2)} if hasattr(stm, "L") else set()
    for p in range(2):
        seen = len(stm.mem.events)
        while p in r.enabled():
            r.step(p)
            if any(getattr(e, "object", None) in flags and e.kind == "write" and e.process == p
                   for e in stm.mem.events[seen:]):
                break
    for _ in range(10_000):
        en = r.enabled()
        if not en:
            break
        for p in en:
            r.step(p)
    return r.trace()


# -- checks -------------------------------------------------------------------------

CHECKS = (
    "well-formed",
    "opacity",
    "strict-serializability",
    "progressiveness",
    "strong-progressiveness",
    "budget",
    "invisible-reads",
    "partitioning",
    "dap",
    "mutual-exclusion",
)

DEFAULT_CHECKS = {
    "single-lock": ("opacity", "budget", "mutual-exclusion"),
    "prog-raw": ("opacity", "progressiveness", "budget", "invisible-reads", "partitioning", "dap",
                 "mutual-exclusion"),
    "prog-mcas": ("opacity", "progressiveness", "budget", "invisible-reads", "partitioning", "dap"),
    "strong-prog": ("opacity", "progressiveness", "strong-progressiveness", "budget", "invisible-reads",
                    "mutual-exclusion"),
}


def run_checks(variant: str, trace: ExecutionTrace, checks: Iterable[str], report=None) -> dict[str, Verdict]:
    from .core import validate_history

    h = trace.history
    out: dict[str, Verdict] = {}
    for c in checks:
        if c == "well-formed":
            out[c] = validate_history(h)
        elif c == "opacity":
            out[c] = check_opacity(h)
        elif c == "strict-serializability":
            out[c] = check_strict_serializability(h)
        elif c == "progressiveness":
            out[c] = check_progressiveness(h)
        elif c == "strong-progressiveness":
            out[c] = check_strong_progressiveness(h)
        elif c == "budget":
            out[c] = check_pattern_budget(variant, trace, report)
        elif c == "invisible-reads":
            out[c] = check_invisible_reads(trace)
        elif c == "partitioning":
            out[c] = check_strict_partitioning(trace)
        elif c == "dap":
            out[c] = check_dap_conclusion(trace)
        elif c == "mutual-exclusion":
            out[c] = check_mutual_exclusion(trace)
        else:
            raise WorkloadError(f"unknown check {c!r}; expected one of {', '.join(CHECKS)}")
    return out


# -- experiments ---------------------------------------------------------------------------

CLASSES = ("read-only", "updating", "aborted")


@dataclass
class RunRecord:
    schedule: Optional[list]
    complete: bool
    verdicts: dict  # name -> Verdict
    patterns: dict  # tx -> {raw_count, multi_raw_count, awar_count}
    history: Optional[str] = None  # JSON lines, kept on failure or on request
    trace: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        d = {
            "schedule": self.schedule,
            "complete": self.complete,
            "pass": self.passed,
            "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
            "patterns": self.patterns,
        }
        if self.history is not None:
            d["history"] = self.history
        if self.trace is not None:
            d["trace"] = self.trace
        return d


@dataclass
class ExperimentReport:
    workload: WorkloadSpec
    backend: str
    checks: list
    runs: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # incomplete runs under unfair schedules
    aggregates: dict = field(default_factory=dict)  # class -> max counts
    exploration: Optional[dict] = None
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.runs)

    @property
    def failures(self) -> list[RunRecord]:
        return [r for r in self.runs if not r.passed]

    def add(self, rec: RunRecord, classes: dict) -> None:
        self.runs.append(rec)
        for tx, counts in rec.patterns.items():
            cls = classes.get(tx)
            if cls is None:
                continue
            agg = self.aggregates.setdefault(cls, {"raw_count": 0, "multi_raw_count": 0, "awar_count": 0,
                                                   "transactions": 0})
            agg["transactions"] += 1
            for k in ("raw_count", "multi_raw_count", "awar_count"):
                agg[k] = max(agg[k], counts[k])

    def to_dict(self, runs: bool = True) -> dict:
        d = {
            "workload": self.workload.to_dict(),
            "backend": self.backend,
            "checks": list(self.checks),
            "pass": self.passed,
            "run_count": len(self.runs),
            "failed_runs": len(self.failures),
            "skipped": self.skipped,
            "aggregates": self.aggregates,
            "exploration": self.exploration,
            "seconds": round(self.seconds, 3),
        }
        if runs:
            d["runs"] = [r.to_dict() for r in self.runs]
        else:
            d["failures"] = [r.to_dict() for r in self.failures]
        return d

    def to_json(self, runs: bool = True, **kw) -> str:
        return json.dumps(self.to_dict(runs), **kw)


def _record(w: WorkloadSpec, schedule, trace: ExecutionTrace, checks, keep: bool) -> tuple[RunRecord, dict]:
    report = detect_patterns(trace)
    verdicts = run_checks(w.variant, trace, checks, report)
    patterns = {
        k: {"raw_count": c.raw_count, "multi_raw_count": c.multi_raw_count, "awar_count": c.awar_count}
        for k, c in report.per_tx.items()
        if k != INIT_TX
    }
    rec = RunRecord(schedule, trace.complete, verdicts, patterns)
    if keep or not rec.passed:
        rec.history = trace.history.to_jsonl()
        rec.trace = trace.to_jsonl()
    return rec, tx_classes(trace)


def run_experiment(w: WorkloadSpec, schedules: Optional[Iterable[Sequence[int]]] = None, *,
                   exhaustive: bool = False, depth: int = 60, preemptions: Optional[int] = None,
                   checks: Optional[Iterable[str]] = None, keep_traces: bool = False,
                   max_nodes: Optional[int] = None, include_cut: bool = False,
                   **stm_kw) -> ExperimentReport:
    """Run ``w`` under the given schedules, or under every schedule to
    ``depth`` with ``exhaustive=True``, and check each run.  With
    ``include_cut`` the histories of prefixes stopped at ``depth`` are checked
    as well."""
    w.validate()
    checks = list(checks) if checks is not None else list(DEFAULT_CHECKS[w.variant])
    rep = ExperimentReport(w, "deterministic", checks)
    t0 = time.perf_counter()
    if exhaustive:
        stats = ExplorationStats()
        for s, trace in enumerate_runs(w, depth, preemptions, max_nodes=max_nodes, stats=stats,
                                           include_cut=include_cut, **stm_kw):
            rep.add(*_record(w, s, trace, checks, keep_traces))
        rep.exploration = {**stats.to_dict(), "depth": depth, "preemptions": preemptions}
        if stats.stranded:
            rep.skipped.append({"reason": "unfair-schedule skip", "count": stats.stranded})
    else:
        for s in schedules if schedules is not None else [None]:
            if s is None:  # default: round-robin to completion
                r = runner_factory(w, **stm_kw)()
                r.run_to_end()
                s, trace = r.schedule, r.trace()
            else:
                trace = run_schedule(w, s, **stm_kw)
            if not trace.complete:
                rep.skipped.append({"reason": "unfair-schedule skip" if w.variant in ("strong-prog", "single-lock")
                                    else "incomplete schedule", "schedule": list(s)})
                continue
            rep.add(*_record(w, list(s), trace, checks, keep_traces))
    rep.seconds = time.perf_counter() - t0
    return rep


# -- native stress ---------------------------------------------------------------------------


def native_template(variant: str, threads: int = 8, m: int = 16, total: int = 10_000) -> WorkloadTemplate:
    per = max(1, total // threads)
    return WorkloadTemplate(threads, m, per, 2, 2, 0.6, variant, limits=(64, 64, total))


def check_windows(h: History, size: int = 5, samples: int = 200, seed: int = 0) -> Verdict:
    """Opacity on sampled windows of ``size`` consecutive transactions.

    Values are unique, so every value read names its writer.  A window is
    checked together with the writers it reads from; those writers' own reads
    are left unconstrained.  Restricting an opaque history this way keeps it
    opaque, so any failure is a real violation.  Separately, every value read
    must come from a committed writer or from the reader itself."""
    txs = h.transactions()
    writer: dict[tuple[int, int], int] = {}
    for k, t in txs.items():
        for op in t.writes():
            writer[(op.object, op.arg)] = k
    for k, t in txs.items():
        own = set()
        for op in t.ops:
            if op.name == "write":
                own.add((op.object, op.arg))
            elif op.name == "read" and op.result is not None and op.result != 0:
                key = (op.object, op.result)
                if key in own:
                    continue
                src = writer.get(key)
                if src is None or not txs[src].committed:
                    return Verdict(False, [k], f"T{k} read {op.result} from X{op.object}, not written by a committed tx")
    order = sorted(txs, key=lambda k: txs[k].first)
    starts = list(range(max(1, len(order) - size + 1)))
    rng = random.Random(seed)
    if len(starts) > samples:
        starts = sorted(rng.sample(starts, samples))
    for s in starts:
        window = set(order[s:s + size])
        ext = set()
        for k in window:
            for op in txs[k].reads():
                src = writer.get((op.object, op.result))
                if src is not None and src not in window:
                    ext.add(src)
        sub = h.restrict(window | ext)
        if search_serialization(sub, unchecked=ext) is None:
            return Verdict(False, sorted(window), f"window {sorted(window)} has no legal serialization")
    return Verdict(True, None, f"{len(starts)} windows")


@dataclass
class StressResult:
    variant: str
    transactions: int
    committed: int
    aborted: int
    seconds: float
    verdicts: dict

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdicts"] = {k: v.to_dict() for k, v in self.verdicts.items()}
        d["pass"] = self.passed
        return d


def run_stress(variant: str, threads: int = 8, m: int = 16, total: int = 10_000, seed: int = 0,
               windows: int = 200, timeout: Optional[float] = 600) -> StressResult:
    """Native-thread run of a random workload, checked on sampled windows."""
    w = gen_workload(native_template(variant, threads, m, total), seed)
    stm, progs = build(w)
    t0 = time.perf_counter()
    trace = run_native(progs, stm.mem, timeout=timeout)
    secs = time.perf_counter() - t0
    h = trace.history
    txs = h.transactions()
    verdicts = {
        "complete": Verdict(trace.complete, None, "; ".join(trace.notes)),
        "opacity-windows": check_windows(h, 5, windows, seed),
        "progressiveness": check_progressiveness(h) if variant != "single-lock" else Verdict(True),
        "budget": check_pattern_budget(variant, trace),
        "mutual-exclusion": check_mutual_exclusion(trace),
    }
    committed = sum(1 for t in txs.values() if t.committed)
    return StressResult(variant, len(txs), committed, len(txs) - committed, secs, verdicts)
