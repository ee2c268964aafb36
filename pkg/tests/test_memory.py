import pytest

from stmlab.memory import (
    ATOMIC_BEGIN,
    ATOMIC_END,
    READ,
    WRITE,
    BaseWord,
    ExecutionTrace,
    MemoryFault,
    SharedMemory,
    mcas_op,
)


@pytest.fixture
def mem():
    m = SharedMemory()
    for i in range(4):
        m.alloc(f"o{i}")
    m.open_op(1, tx=1)
    m.open_op(2, tx=2)
    return m


def test_fresh_read_is_initial_word(mem):
    assert mem.read_base(1, 0) == BaseWord(0, 0)
    e = mem.events[-1]
    assert (e.kind, e.object, e.nontrivial) == (READ, 0, False)


def test_last_writer_is_visible(mem):
    mem.write_base(1, 0, BaseWord(5, 1))
    assert mem.read_base(2, 0) == BaseWord(5, 1)
    assert mem.events[0].kind == WRITE and mem.events[0].nontrivial


def test_write_outside_operation_faults():
    m = SharedMemory()
    m.alloc("x")
    with pytest.raises(MemoryFault):
        m.write_base(0, 0, BaseWord(1, 1))


def test_non_strict_memory_allows_bare_access():
    m = SharedMemory(strict=False)
    m.alloc("x")
    m.write_base(0, 0, BaseWord(1, 1))
    assert m.peek(0).value == 1


def test_out_of_range_faults(mem):
    with pytest.raises(MemoryFault):
        mem.read_base(1, 99)
    with pytest.raises(MemoryFault):
        mem.write_base(1, -1, BaseWord(1, 1))


def test_atomic_section_brackets_its_accesses(mem):
    def body(view):
        w = view.read(0)
        view.write(0, BaseWord(w.value + 1, 1))
        return w.value

    assert mem.atomic_section(1, body) == 0
    kinds = [e.kind for e in mem.events]
    assert kinds == [ATOMIC_BEGIN, READ, WRITE, ATOMIC_END]
    assert all(e.process == 1 for e in mem.events)


def test_empty_atomic_section_has_only_brackets(mem):
    mem.atomic_section(1, lambda view: None, may_write=False)
    assert [e.kind for e in mem.events] == [ATOMIC_BEGIN, ATOMIC_END]


def test_nested_atomic_section_faults(mem):
    def outer(view):
        mem.atomic_section(1, lambda v: None)

    with pytest.raises(MemoryFault):
        mem.atomic_section(1, outer)


def test_plain_access_inside_atomic_section_faults(mem):
    with pytest.raises(MemoryFault):
        mem.atomic_section(1, lambda view: mem.read_base(1, 0))


def test_atomic_section_is_bounded(mem):
    def forever(view):
        while True:
            view.read(0)

    with pytest.raises(MemoryFault):
        mem.atomic_section(1, forever)


def test_mcas_all_match_swaps(mem):
    z = BaseWord(0, 0)
    assert mem.mcas(1, [0, 1], [z, z], [BaseWord(1, 1), BaseWord(2, 1)])
    assert mem.peek(0) == BaseWord(1, 1) and mem.peek(1) == BaseWord(2, 1)


def test_mcas_mismatch_leaves_memory_unchanged(mem):
    mem.write_base(1, 1, BaseWord(9, 1))
    before = mem.snapshot()
    z = BaseWord(0, 0)
    assert not mem.mcas(2, [0, 1], [z, z], [BaseWord(1, 2), BaseWord(2, 2)])
    assert mem.snapshot() == before
    assert mem.read_base(2, 0) == z


def test_mcas_overlapping_second_fails(mem):
    z = BaseWord(0, 0)
    assert mem.mcas(1, [0, 1], [z, z], [BaseWord(1, 1), BaseWord(1, 1)])
    assert not mem.mcas(2, [1, 2], [z, z], [BaseWord(2, 2), BaseWord(2, 2)])
    assert mem.peek(2) == z


def test_mcas_argument_faults(mem):
    z = BaseWord(0, 0)
    with pytest.raises(MemoryFault):
        mem.mcas(1, [0, 1], [z], [z, z])
    with pytest.raises(MemoryFault):
        mem.mcas(1, [0, 0], [z, z], [z, z])
    with pytest.raises(MemoryFault):
        mcas_op([0, 0], [z, z], [z, z])


def test_trace_round_trip(mem):
    mem.write_base(1, 0, BaseWord(3, 1))
    mem.atomic_section(2, lambda v: v.read(0))
    tr = mem.trace()
    back = ExecutionTrace.from_jsonl(tr.to_jsonl())
    assert back.key() == tr.key()


def test_beta_from_tags():
    m = SharedMemory()
    m.alloc("a", tag=0)
    m.alloc("b", tag=1)
    m.alloc("c", tag=0)
    m.alloc("free")
    assert m.trace().beta() == {0: {0, 2}, 1: {1}}
