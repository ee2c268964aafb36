import random

import pytest

from stmlab.analysis import check_opacity, check_progressiveness, check_strong_progressiveness, detect_patterns
from stmlab.core import Outcome, validate_history
from stmlab.harness import contention_race, preset, run_experiment, runner_factory
from stmlab.memory import WRITE, BaseEvent, BaseWord, MemoryFault
from stmlab.sched import DeterministicRunner
from stmlab.stm import VARIANTS, make_stm

ABORT, COMMIT = Outcome.ABORT, Outcome.COMMIT


def base_events_since(stm, start):
    return [e for e in stm.mem.events[start:] if isinstance(e, BaseEvent)]


@pytest.mark.parametrize("variant", VARIANTS)
def test_fresh_read_is_zero(variant):
    stm = make_stm(variant, 1, 2)
    k = stm.tx_begin(0)
    assert k == 1
    assert stm.tx_read(k, 0) == 0


@pytest.mark.parametrize("variant", VARIANTS)
def test_buffered_write_read_has_no_base_access(variant):
    stm = make_stm(variant, 1, 2)
    k = stm.tx_begin(0)
    start = len(stm.mem.events)
    assert stm.tx_write(k, 0, 7) is Outcome.OK
    assert stm.tx_read(k, 0) == 7
    assert base_events_since(stm, start) == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_last_write_wins_and_commit_publishes(variant):
    stm = make_stm(variant, 1, 2)
    k = stm.tx_begin(0)
    stm.tx_write(k, 1, 3)
    stm.tx_write(k, 1, 4)
    assert stm.tx_tryc(k) is COMMIT
    assert stm.mem.peek(stm.v[1]) == BaseWord(4, k)
    k2 = stm.tx_begin(0)
    assert stm.tx_read(k2, 1) == 4


@pytest.mark.parametrize("variant", ["prog-raw", "prog-mcas", "strong-prog"])
def test_read_only_commit_writes_nothing(variant):
    stm = make_stm(variant, 1, 2)
    k = stm.tx_begin(0)
    stm.tx_read(k, 0)
    start = len(stm.mem.events)
    assert stm.tx_tryc(k) is COMMIT
    assert not [e for e in base_events_since(stm, start) if e.kind == WRITE]


@pytest.mark.parametrize("variant", ["prog-raw", "prog-mcas", "strong-prog"])
def test_stale_read_set_aborts(variant):
    stm = make_stm(variant, 2, 3)
    t1 = stm.tx_begin(0)
    assert stm.tx_read(t1, 1) == 0
    t2 = stm.tx_begin(1)
    stm.tx_write(t2, 1, 9)
    assert stm.tx_tryc(t2) is COMMIT
    assert stm.tx_read(t1, 2) is ABORT
    h = stm.mem.trace().history
    assert h.transactions()[t1].forcefully_aborted
    assert check_opacity(h).passed and check_progressiveness(h).passed


@pytest.mark.parametrize("variant", VARIANTS)
def test_trya_leaves_memory_unchanged(variant):
    stm = make_stm(variant, 1, 2)
    k = stm.tx_begin(0)
    stm.tx_write(k, 0, 5)
    before = [stm.mem.peek(o) for o in stm.v]
    assert stm.tx_trya(k) is ABORT
    assert [stm.mem.peek(o) for o in stm.v] == before
    t = stm.mem.trace().history.transactions()[k]
    assert t.status.value == "aborted" and not t.forcefully_aborted


def test_begin_errors():
    stm = make_stm("prog-raw", 1, 1)
    k = stm.tx_begin(0)
    with pytest.raises(MemoryFault):
        stm.tx_begin(0)
    stm.tx_tryc(k)
    with pytest.raises(MemoryFault):
        stm.tx_begin(0, tx=k)
    with pytest.raises(MemoryFault):
        stm.tx_read(k, 0)
    k2 = stm.tx_begin(0)
    with pytest.raises(MemoryFault):
        stm.tx_read(k2, 5)


def test_unknown_variant():
    with pytest.raises(ValueError):
        make_stm("tl2", 1, 1)


def test_single_lock_begin_waits_for_holder():
    stm = make_stm("single-lock", 2, 1)

    def prog(p, tx):
        def gen():
            yield from stm.op_begin(p, tx)
            yield from stm.op_write(p, 0, tx)
            yield from stm.op_tryc(p)

        return gen

    r = DeterministicRunner([prog(0, 1), prog(1, 2)], stm.mem)
    r.step(0)  # p0 takes the lock
    r.step(1)  # p1 finds it taken
    assert r.blocked(1)
    r.run_to_end()
    assert r.finished()
    assert all(t.committed for t in r.trace().history.transactions().values())


def test_prog_raw_race_aborts_both():
    h = contention_race("prog-raw").history
    assert [t.status.value for t in h.transactions().values()] == ["aborted", "aborted"]
    assert check_progressiveness(h).passed
    assert not check_strong_progressiveness(h).passed


def test_strong_prog_race_commits_one():
    h = contention_race("strong-prog").history
    assert any(t.committed for t in h.transactions().values())
    assert check_strong_progressiveness(h).passed


@pytest.mark.parametrize("variant", VARIANTS)
def test_thm2_exhaustive_opaque_and_well_formed(variant):
    rep = run_experiment(preset("thm2-minimal", variant), exhaustive=True, depth=60,
                         checks=["well-formed", "opacity", "budget"])
    assert rep.runs and rep.passed
    assert rep.exploration["cut"] == 0


def test_mcas_commit_is_one_awar():
    stm = make_stm("prog-mcas", 1, 3)
    k = stm.tx_begin(0)
    stm.tx_read(k, 0)
    stm.tx_write(k, 1, 5)
    stm.tx_write(k, 2, 6)
    stm.tx_tryc(k)
    c = detect_patterns(stm.mem.trace()).get(k)
    assert c.awar_count == 1 and c.raw_count == 0


def test_histories_are_well_formed_under_random_schedules():
    rng = random.Random(5)
    for variant in VARIANTS:
        w = preset("fig1", variant)
        for _ in range(20):
            r = runner_factory(w)()
            while r.enabled():
                r.step(rng.choice(r.enabled()))
            h = r.trace().history
            assert validate_history(h).passed and check_opacity(h).passed
