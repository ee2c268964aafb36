import random

from hypothesis import given, settings
from hypothesis import strategies as st

from histgen import random_history
from stmlab.analysis.progress import (
    check_progressiveness,
    check_strong_progressiveness,
    conflict_components,
)
from stmlab.core import History, HistoryBuilder, conflicts
from stmlab.harness import canned_history


def progressive_by_definition(h: History) -> bool:
    """Every forcefully aborted T_i has some prefix in which it conflicts
    with a transaction that is live in that prefix."""
    txs = h.transactions()
    for i, ti in txs.items():
        if not ti.forcefully_aborted:
            continue
        ok = False
        for cut in range(1, len(h) + 1):
            p = h.prefix(cut)
            ptx = p.transactions()
            for k, tk in ptx.items():
                if k != i and tk.status.value == "live" and conflicts(p, i, k):
                    ok = True
                    break
            if ok:
                break
        if not ok:
            return False
    return True


def test_solo_forceful_abort_fails():
    h = HistoryBuilder().read(1, 0, 0).abort(1).build()
    v = check_progressiveness(h)
    assert not v.passed and v.witness == [1]


def test_abort_with_live_conflict_passes():
    b = HistoryBuilder()
    b.read(3, 1, 0, process=2)
    b.write(2, 1, 7, process=1).commit(2)
    b.read(4, 1, 7, process=3).write(4, 1, 9)
    b.read(1, 1, 7, process=0).abort(1)  # conflicts with live T4 and T3
    assert check_progressiveness(b.build()).passed


def test_self_aborts_pass_vacuously():
    h = HistoryBuilder().read(1, 0, 0).trya(1).write(2, 0, 1).trya(2).build()
    assert check_progressiveness(h).passed
    assert check_strong_progressiveness(h).passed


def test_fig1_is_progressive():
    assert check_progressiveness(canned_history("fig1")).passed


def test_abort_against_committed_but_earlier_conflict():
    # T2 was live while T1 read X0; T2 commits before T1 aborts
    b = HistoryBuilder().read(1, 0, 0, process=0)
    b.write(2, 0, 5, process=1).commit(2)
    b.abort(1)
    assert check_progressiveness(b.build()).passed


def _both_abort(objs):
    b = HistoryBuilder()
    for X in objs:
        b.write(1, X, 1, process=0)
        b.write(2, X, 2, process=1)
    return b.abort(1).abort(2).build()


def test_strong_one_object_all_aborted_fails():
    v = check_strong_progressiveness(_both_abort([0]))
    assert not v.passed and v.witness == [1, 2]


def test_strong_one_commits_passes():
    b = HistoryBuilder().write(1, 0, 1, process=0).write(2, 0, 2, process=1)
    h = b.commit(1).abort(2).build()
    assert check_strong_progressiveness(h).passed


def test_strong_two_objects_exempt():
    assert check_strong_progressiveness(_both_abort([0, 1])).passed


def test_components():
    b = HistoryBuilder().write(1, 0, 1, process=0).write(2, 0, 2, process=1).read(3, 1, 0, process=2)
    comps = conflict_components(b.build())
    assert ({1, 2}, {0}) in comps and ({3}, set()) in comps


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_progressiveness_matches_prefix_definition(seed):
    h = random_history(random.Random(seed))
    assert check_progressiveness(h).passed == progressive_by_definition(h)
