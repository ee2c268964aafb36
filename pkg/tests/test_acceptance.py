"""Exit criteria.  Each test prints one ``[criterion N] PASS|FAIL`` line,
repeated in the terminal summary.

The schedule sweep behind criteria 1, 3-6, 8 and 10 runs once per session:
the two presets under every schedule to depth 60, and 200 seeded random
workloads under every schedule to depth 60 with at most one preemption,
checking the histories of complete runs and of prefixes cut at the depth
bound alike.
"""

import random
import time
from collections import defaultdict

import pytest

from histgen import mutate, random_history
from stmlab.analysis import (
    check_bakery_order,
    check_label_bound,
    check_mutual_exclusion,
    check_progressiveness,
    check_strong_progressiveness,
    detect_patterns,
)
from stmlab.analysis.opacity import brute_force_opacity, check_opacity
from stmlab.analysis.valence import ProbeSetup, find_protecting_prefix
from stmlab.harness import contention_race, preset, random_workload, run_experiment, run_stress
from stmlab.memory import SharedMemory
from stmlab.sched import explore
from stmlab.stm import VARIANTS
from stmlab.trylocks import BakeryTrylock, WaitFreeTrylock

pytestmark = pytest.mark.acceptance

DEPTH = 60
RANDOM_WORKLOADS = 200
RANDOM_PREEMPTIONS = 1
SWEEP_CHECKS = {
    "single-lock": ["well-formed", "opacity", "budget"],
    "prog-raw": ["well-formed", "opacity", "progressiveness", "budget", "invisible-reads", "partitioning", "dap"],
    "prog-mcas": ["well-formed", "opacity", "progressiveness", "budget", "invisible-reads", "partitioning", "dap"],
    "strong-prog": ["well-formed", "opacity", "progressiveness", "strong-progressiveness", "budget",
                    "invisible-reads", "mutual-exclusion"],
}


class Sweep:
    def __init__(self):
        self.runs = defaultdict(int)  # variant -> checked histories
        self.complete = defaultdict(int)
        self.failed = defaultdict(list)  # (variant, check) -> [(workload, schedule, reason)]
        self.aggregates = defaultdict(dict)  # variant -> class -> max counts
        self.workloads = defaultdict(int)
        self.seconds = 0.0

    def add(self, rep):
        v = rep.workload.variant
        self.workloads[v] += 1
        for rec in rep.runs:
            self.runs[v] += 1
            self.complete[v] += rec.complete
            for name, verdict in rec.verdicts.items():
                if not verdict.passed:
                    self.failed[(v, name)].append((rep.workload.name, rec.schedule, verdict.reason))
        for cls, agg in rep.aggregates.items():
            cur = self.aggregates[v].setdefault(cls, dict.fromkeys(agg, 0))
            for k, x in agg.items():
                cur[k] = cur[k] + x if k == "transactions" else max(cur[k], x)

    def failures(self, checks, variants=VARIANTS):
        return {(v, c): self.failed[(v, c)] for v in variants for c in checks if self.failed[(v, c)]}


@pytest.fixture(scope="session")
def sweep():
    s = Sweep()
    t0 = time.perf_counter()
    for variant in VARIANTS:
        for name in ("fig1", "thm2-minimal"):
            s.add(run_experiment(preset(name, variant), exhaustive=True, depth=DEPTH,
                                 checks=SWEEP_CHECKS[variant], include_cut=True))
        for seed in range(RANDOM_WORKLOADS):
            s.add(run_experiment(random_workload(seed, variant), exhaustive=True, depth=DEPTH,
                                 preemptions=RANDOM_PREEMPTIONS, checks=SWEEP_CHECKS[variant],
                                 include_cut=True))
    s.seconds = time.perf_counter() - t0
    return s


def verdict_line(n, ok, detail):
    return f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"


def test_criterion_1_opacity_exhaustive(sweep, report_line):
    bad = sweep.failures(["well-formed", "opacity"])
    total = sum(sweep.runs.values())
    ok = not bad and all(sweep.runs[v] > 0 for v in VARIANTS)
    report_line(verdict_line(1, ok, f"{total} histories ({sum(sweep.complete.values())} complete runs) "
                                    f"over {sum(sweep.workloads.values())} workload/variant pairs, "
                                    f"{sum(len(x) for x in bad.values())} opacity failures, {sweep.seconds:.0f}s"))
    assert ok, bad


def test_criterion_2_oracle_agreement(report_line):
    rng = random.Random(2024)
    agree = opaque = 0
    n = 500
    for i in range(n):
        h = random_history(rng, max_txs=5)
        if i % 2:
            h = mutate(rng, h)
        a = check_opacity(h).passed
        b = brute_force_opacity(h).passed
        agree += a == b
        opaque += a
    ok = agree == n
    report_line(verdict_line(2, ok, f"{agree}/{n} agree ({opaque} opaque, {n - opaque} not)"))
    assert ok


def _budget_line(n, sweep, variant, detail):
    bad = sweep.failures(["budget"], [variant])
    agg = sweep.aggregates[variant]
    ok = not bad and sweep.runs[variant] > 0
    return ok, verdict_line(n, ok, f"{variant}: {detail(agg)}; {sum(len(x) for x in bad.values())} violations")


def test_criterion_3_prog_raw_budget(sweep, report_line):
    ok, line = _budget_line(3, sweep, "prog-raw", lambda a: (
        f"max multi-RAW updating {a.get('updating', {}).get('multi_raw_count')}, "
        f"max RAW read-only {a.get('read-only', {}).get('raw_count')}"))
    report_line(line)
    assert ok


def test_criterion_4_prog_mcas_budget(sweep, report_line):
    ok, line = _budget_line(4, sweep, "prog-mcas", lambda a: (
        "committed updating exactly 1 AWAR, "
        f"max AWAR read-only {a.get('read-only', {}).get('awar_count')}, "
        f"aborted {a.get('aborted', {}).get('awar_count')}"))
    report_line(line)
    assert ok


def test_criterion_5_strong_prog_budget(sweep, report_line):
    ok, line = _budget_line(5, sweep, "strong-prog", lambda a: (
        f"max RAW updating {a.get('updating', {}).get('raw_count')}, "
        f"max RAW read-only {a.get('read-only', {}).get('raw_count')}"))
    report_line(line)
    assert ok


def test_criterion_6_single_lock_witness(sweep, report_line):
    ok, line = _budget_line(6, sweep, "single-lock", lambda a: (
        f"every reading and writing transaction shows a RAW or AWAR in {sweep.runs['single-lock']} histories"))
    report_line(line)
    assert ok


Q_PAIRS = [([0], [0]), ([0, 1], [0, 1]), ([0], [0, 1]), ([0], [1]), ([1, 0], [0])]


def _lock_factory(kind, Qs, store):
    def factory():
        mem = SharedMemory()
        lock = BakeryTrylock(mem, 2, 2) if kind == "sf" else WaitFreeTrylock(mem, 2, 2)
        store["lock"] = lock

        def prog(i):
            def gen():
                if (yield from lock.acquire(i, Qs[i], tx=i + 1)):
                    yield from lock.release(i, Qs[i], tx=i + 1)

            return gen

        return [prog(0), prog(1)], mem

    return factory


def test_criterion_7_trylocks(report_line):
    stats = {"wf": defaultdict(int), "sf": defaultdict(int)}
    for kind in ("wf", "sf"):
        for Qs in Q_PAIRS:
            store = {}
            ex = explore(_lock_factory(kind, Qs, store), depth=40)
            for _, tr in ex.run():
                st = stats[kind]
                st["traces"] += 1
                st["me"] += not check_mutual_exclusion(tr).passed
                rep = detect_patterns(tr)
                if kind == "wf":
                    for (tx, op, _), c in rep.per_op.items():
                        if op == "acquire":
                            st["acquires"] += 1
                            st["bad_multi"] += c.multi_raw_count != 1
                else:
                    st["max_raw"] = max([st["max_raw"]] + [c.raw_count for c in rep.per_tx.values()])
                    st["labels"] += not check_label_bound(tr, store["lock"].LA, 2).passed
                    st["order"] += not check_bakery_order(tr, store["lock"]).passed
            stats[kind]["stranded"] += ex.stats.stranded
    wf, sf = stats["wf"], stats["sf"]
    ok = (wf["traces"] and sf["traces"] and wf["me"] == 0 and sf["me"] == 0 and wf["bad_multi"] == 0
          and sf["max_raw"] <= 4 and sf["labels"] == 0 and sf["order"] == 0 and wf["stranded"] == sf["stranded"] == 0)
    report_line(verdict_line(7, ok, f"wait-free {wf['traces']} traces, {wf['me']} overlaps, "
                                    f"{wf['acquires'] - wf['bad_multi']}/{wf['acquires']} acquires with one multi-RAW; "
                                    f"bakery {sf['traces']} traces, {sf['me']} overlaps, max RAW {sf['max_raw']}, "
                                    f"{sf['labels']} label overflows"))
    assert ok


def test_criterion_8_progress(sweep, report_line):
    bad = sweep.failures(["progressiveness"], ["prog-raw", "prog-mcas", "strong-prog"])
    bad.update(sweep.failures(["strong-progressiveness"], ["strong-prog"]))
    raw = contention_race("prog-raw").history
    strong = contention_race("strong-prog").history
    raw_aborted = all(t.forcefully_aborted for t in raw.transactions().values())
    raw_ok = raw_aborted and check_progressiveness(raw).passed and not check_strong_progressiveness(raw).passed
    strong_commits = sum(t.committed for t in strong.transactions().values())
    strong_ok = strong_commits >= 1 and check_strong_progressiveness(strong).passed
    ok = not bad and raw_ok and strong_ok
    report_line(verdict_line(8, ok, f"{sum(len(x) for x in bad.values())} progress failures in the sweep; "
                                    f"race: prog-raw both aborted={raw_aborted} (progressive, not strongly), "
                                    f"strong-prog commits {strong_commits}"))
    assert ok


def test_criterion_9_protected_data(report_line):
    found = []
    ok = True
    for variant in ("prog-raw", "prog-mcas"):
        for m in (1, 2, 3):
            rep = find_protecting_prefix(ProbeSetup(variant, tuple(range(m))))
            ok &= rep.verdict().passed and rep.prefix is not None and 0 < rep.prefix < rep.steps
            found.append(f"{variant}|W|={m}:t={rep.prefix}/{rep.steps}")
            for r in range(m, m + 2):
                swept = find_protecting_prefix(ProbeSetup(variant, tuple(range(m)), rset=(r,)))
                ok &= swept.verdict().passed and not swept.rset_blocked
    report_line(verdict_line(9, ok, ", ".join(found) + "; read-set readers never blocked"))
    assert ok


def test_criterion_10_structure(sweep, report_line):
    bad = sweep.failures(["invisible-reads", "partitioning", "dap"], ["prog-raw", "prog-mcas"])
    bad.update(sweep.failures(["invisible-reads"], ["strong-prog"]))
    n = sweep.runs["prog-raw"] + sweep.runs["prog-mcas"]
    ok = not bad and n > 0
    report_line(verdict_line(10, ok, f"invisible reads, partitioning and disjoint-access checks on {n} "
                                     f"prog-raw/prog-mcas histories; {sum(len(x) for x in bad.values())} failures"))
    assert ok


def test_criterion_11_native_stress(report_line):
    parts = []
    ok = True
    for variant in VARIANTS:
        res = run_stress(variant, threads=8, m=16, total=10_000, seed=11, windows=200)
        ok &= res.passed and res.transactions == 10_000
        failed = [k for k, v in res.verdicts.items() if not v.passed]
        parts.append(f"{variant} {res.committed}/{res.transactions} committed {res.seconds:.0f}s"
                     + (f" FAILED {failed}" if failed else ""))
    report_line(verdict_line(11, ok, "; ".join(parts)))
    assert ok
