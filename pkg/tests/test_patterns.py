import pytest

from stmlab.core import HistoryBuilder
from stmlab.analysis.patterns import check_pattern_budget, count_patterns, detect_patterns, tx_classes
from stmlab.harness import preset, runner_factory
from stmlab.memory import ATOMIC_BEGIN, ATOMIC_END, READ, WRITE, BaseEvent, BaseWord, ExecutionTrace
from stmlab.stm import make_stm

Z = BaseWord(0, 0)


def evs(text, process=0, tx=1):
    """'Wx', 'Ry', '[' and ']' -> base events over objects named by letters."""
    out = []
    depth = 0
    for i, s in enumerate(text.split()):
        if s == "[":
            out.append(BaseEvent(i, process, tx, ATOMIC_BEGIN, None, None, True, 1))
            depth = 1
        elif s == "]":
            out.append(BaseEvent(i, process, tx, ATOMIC_END, None, None, True, 1))
            depth = 0
        else:
            kind = WRITE if s[0] == "W" else READ
            out.append(BaseEvent(i, process, tx, kind, ord(s[1]) - ord("a"), Z, kind == WRITE, depth))
    return out


@pytest.mark.parametrize(
    "text, raw, multi, awar",
    [
        ("Wa Rb", 1, 1, 0),
        ("Wa Wb Rb", 0, 0, 0),
        ("Wb Wa Rb", 1, 1, 0),
        ("Wb Rb", 0, 0, 0),
        ("Wa Rb Wc Rd", 2, 2, 0),
        ("Wa Wb Rc Rd", 1, 1, 0),
        ("Ra Wa", 0, 0, 0),
        ("[ Ra Wa ]", 0, 0, 1),
        ("[ Wa ]", 0, 0, 0),
        ("[ ]", 0, 0, 0),
        ("Wa Ra", 0, 0, 0),
    ],
)
def test_count_patterns(text, raw, multi, awar):
    c = count_patterns(evs(text))
    assert (c.raw_count, c.multi_raw_count, c.awar_count) == (raw, multi, awar)


def test_overlapping_raws_count_once():
    # W(a) R(b) and W(a) R(c) share the write, so they overlap
    c = count_patterns(evs("Wa Rb Rc"))
    assert c.raw_count == 1 and c.raw_pairs == [(0, 1)]


def test_prog_raw_tryc_two_writes_one_multi_raw():
    stm = make_stm("prog-raw", 2, 3)
    k = stm.tx_begin(0)
    stm.tx_read(k, 2)
    stm.tx_write(k, 0, 1)
    stm.tx_write(k, 1, 1)
    stm.tx_tryc(k)
    c = detect_patterns(stm.mem.trace()).get(k)
    assert c.multi_raw_count == 1 and c.awar_count == 0


def test_per_op_attribution():
    stm = make_stm("prog-raw", 2, 2)
    k = stm.tx_begin(0)
    stm.tx_read(k, 0)
    stm.tx_write(k, 1, 1)
    stm.tx_tryc(k)
    rep = detect_patterns(stm.mem.trace())
    ops = {key[1]: c for key, c in rep.per_op.items()}
    assert ops["read"].raw_count == 0
    assert ops["tryC"].multi_raw_count == 1


@pytest.mark.parametrize("variant", ["single-lock", "prog-raw", "prog-mcas", "strong-prog"])
def test_budgets_hold_on_round_robin_fig1(variant):
    r = runner_factory(preset("fig1", variant))()
    r.run_to_end()
    assert check_pattern_budget(variant, r.trace()).passed


def test_single_lock_thm2_has_awar_per_tx():
    r = runner_factory(preset("thm2-minimal", "single-lock"))()
    r.run_to_end()
    rep = detect_patterns(r.trace())
    assert all(rep.get(k).awar_count >= 1 for k in (1, 2))


def test_budget_violation_detected():
    # an updating transaction with two multi-RAWs
    events = evs("Wa Rb Wc Rd", tx=1)
    h = HistoryBuilder().write(1, 0, 1).build()
    trace = ExecutionTrace(list(h.events) + events)
    assert not check_pattern_budget("prog-raw", trace).passed


def test_classes():
    stm = make_stm("prog-raw", 1, 2)
    a = stm.tx_begin(0)
    stm.tx_read(a, 0)
    stm.tx_tryc(a)
    b = stm.tx_begin(0)
    stm.tx_write(b, 0, 1)
    stm.tx_tryc(b)
    c = stm.tx_begin(0)
    stm.tx_trya(c)
    assert tx_classes(stm.mem.trace()) == {a: "read-only", b: "updating", c: "aborted"}
