import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcram import builders as B
from pcram.circuit import CircuitBuilder
from pcram.errors import (AlignmentError, BudgetError, CircuitIndexError, ConcurrentWriteError,
                          MemoryAccessError, OverlapError, ParameterError, PhaseError,
                          ValidationError)
from pcram.machine import Machine, MachineConfig


def comparator_machine(w=8, **kw):
    m = Machine(MachineConfig(w=w, I=64, **kw))
    m.load_program([B.comparator(w)])
    return m


def test_config_defaults_and_validation():
    cfg = MachineConfig()
    assert (cfg.w, cfg.I, cfg.G) == (32, 2048, 2048 ** 2)
    with pytest.raises(ParameterError):
        MachineConfig(w=4)
    with pytest.raises(ParameterError):
        MachineConfig(I=10, G=5)


def test_budgets_visible_in_memory():
    m = Machine(MachineConfig(w=16, I=100, G=5000))
    assert m.peek_words(0, 2).tolist() == [5000 & 0xFFFF, 100]


def test_gate_budget_enforced_exactly():
    c = B.comparator(8)
    ok = Machine(MachineConfig(w=8, I=64, G=c.size))
    ok.load_program([c])
    over = Machine(MachineConfig(w=8, I=64, G=c.size - 1))
    with pytest.raises(BudgetError) as err:
        over.load_program([c])
    assert err.value.resource == "G"


def test_io_budget_enforced():
    m = Machine(MachineConfig(w=8, I=31, G=10_000))
    with pytest.raises(BudgetError) as err:
        m.load_program([B.comparator(8)])
    assert err.value.resource == "I"


def test_no_registration_after_freeze():
    m = comparator_machine()
    with pytest.raises(PhaseError):
        m.register(B.comparator(8))
    with pytest.raises(PhaseError):
        m.load_program([])


def test_run_before_load_fails():
    m = Machine(MachineConfig(w=8))
    m.register(B.comparator(8))
    with pytest.raises(PhaseError):
        m.run_circuit(0, 0, 0)


def test_unsynchronous_circuit_rejected():
    bd = CircuitBuilder("lopsided")
    a, b = bd.inputs(2)
    c = bd.build([bd.AND(a, bd.NOT(b))], sync=False)
    m = Machine(MachineConfig(w=8))
    with pytest.raises(ValidationError):
        m.load_program([c])


def test_generator_receives_budgets():
    seen = []

    def gen(G, I):
        seen.append((G, I))
        return B.copy_family(B.ResourceBudget(G, I))
    m = Machine(MachineConfig(w=8, I=64))
    m.load_program(gen)
    assert seen == [(64 * 64, 64)]
    assert len(m.table) == 4


def test_ram_instructions_cost_one_tick():
    m = Machine(MachineConfig(w=8))
    a = m.alloc(4)
    m.write(a, 300)
    assert m.read(a) == 300 % 256
    m.alu(3)
    m.rand_word(a + 1)
    assert m.time == 6 and m.clock == 6 and m.delay == 0
    m.write_many([a, a + 1], [1, 2])
    assert m.read_many([a + 1, a]).tolist() == [2, 1]
    assert m.time == 10


def test_out_of_range_access():
    m = Machine(MachineConfig(w=8))
    with pytest.raises(MemoryAccessError):
        m.read(10_000)
    with pytest.raises(MemoryAccessError):
        m.write(-1, 0)


def test_circuit_output_lands_after_depth():
    m = comparator_machine()
    d = B.comparator(8).depth
    a = m.alloc(4)
    m.load_words(a, [9, 4])
    t = m.run_circuit(0, a * 8, (a + 2) * 8)
    assert t.ready_tick == d and t.issue_tick == 0
    m.alu(d - 2)  # clock d - 1: not there yet
    assert m.read(a + 2) == 0
    assert m.report().stale_reads == 1
    assert m.clock == d
    assert m.read(a + 2) == 4 and m.read(a + 3) == 9


def test_inputs_snapshot_at_issue():
    m = comparator_machine()
    a = m.alloc(4)
    m.load_words(a, [9, 4])
    t = m.run_circuit(0, a * 8, (a + 2) * 8)
    m.write(a, 1)
    m.wait(t)
    assert m.read_many([a + 2, a + 3]).tolist() == [4, 9]


def test_wait_accounts_delay_and_episodes():
    m = comparator_machine()
    d = B.comparator(8).depth
    a = m.alloc(4)
    t = m.run_circuit(0, a * 8, (a + 2) * 8)
    m.wait(t)
    m.wait(t)  # already ready: free
    r = m.report()
    assert (r.time, r.delay, r.wait_episodes) == (1, d - 1, 1)
    assert r.total_ticks == d


def test_unaligned_run_circuit_fails():
    m = comparator_machine()
    a = m.alloc(4)
    with pytest.raises(AlignmentError):
        m.run_circuit(0, a * 8 + 3, (a + 2) * 8)
    with pytest.raises(AlignmentError):
        m.run_circuit_many(0, [a * 8, a * 8 + 1], [(a + 2) * 8, (a + 2) * 8])


def test_unknown_circuit_index():
    m = comparator_machine()
    with pytest.raises(CircuitIndexError):
        m.run_circuit(5, 0, 0)


def make_pair_machine(strict, seed=0):
    """Two circuits whose depths differ by one, writing overlapping outputs."""
    w = 8
    c0 = B.comparator(w)
    bd = CircuitBuilder("deeper")
    xs = bd.inputs(2 * w)
    ys = [bd.ID(x) for x in bd.instantiate(c0, xs)]
    c1 = bd.build(ys)
    assert c1.depth == c0.depth + 1
    m = Machine(MachineConfig(w=w, I=128, strict_writes=strict, rng_seed=seed))
    m.load_program([c1, c0])
    src = m.alloc(4)
    m.load_words(src, [200, 100, 7, 3])
    dst = m.alloc(3)
    return m, src, dst, c1.depth


def test_strict_concurrent_write_error():
    m, src, dst, d = make_pair_machine(strict=True)
    m.run_circuit(0, src * 8, dst * 8)
    with pytest.raises(ConcurrentWriteError):
        m.run_circuit(1, (src + 2) * 8, (dst + 1) * 8)


def test_permissive_concurrent_write_is_counted_and_seeded():
    outs = []
    for _ in range(2):
        m, src, dst, d = make_pair_machine(strict=False, seed=7)
        m.run_circuit(0, src * 8, dst * 8)
        m.run_circuit(1, (src + 2) * 8, (dst + 1) * 8)
        m.wait_all()
        assert m.clock == d
        assert m.report().concurrent_writes == 1
        outs.append(m.read_many([dst, dst + 1, dst + 2]).tolist())
    assert outs[0] == outs[1]
    assert outs[0][0] == 100 and outs[0][2] == 7  # only the overlapping word is undefined


def test_different_ticks_overlap_is_not_concurrent():
    m = comparator_machine(strict_writes=True)
    a = m.alloc(4)
    m.load_words(a, [5, 1])
    m.run_circuit(0, a * 8, (a + 2) * 8)
    m.run_circuit(0, a * 8, (a + 2) * 8)
    m.wait_all()
    assert m.read_many([a + 2, a + 3]).tolist() == [1, 5]


def test_copy_cost_and_content():
    m = Machine(MachineConfig(w=8, I=16))
    a = m.alloc(10)
    m.load_words(a, list(range(1, 6)))
    m.copy(a * 8, (a + 5) * 8, 40)
    assert m.time == 3  # ceil(40 / 16)
    assert m.peek_words(a + 5, 5).tolist() == [1, 2, 3, 4, 5]
    assert m.report().copies == 1


def test_copy_partial_word_keeps_rest():
    m = Machine(MachineConfig(w=8, I=64))
    a = m.alloc(2)
    m.load_words(a, [0xFF, 0xAA])
    m.copy(a * 8, (a + 1) * 8, 4)
    assert m.peek_words(a + 1, 1)[0] == 0xAF


def test_copy_errors():
    m = Machine(MachineConfig(w=8))
    a = m.alloc(4)
    with pytest.raises(AlignmentError):
        m.copy(a * 8 + 1, (a + 2) * 8, 8)
    with pytest.raises(OverlapError):
        m.copy(a * 8, a * 8 + 8, 16)


def test_trace_lines():
    buf = io.StringIO()
    m = Machine(MachineConfig(w=8, I=64), trace=buf)
    m.load_program([B.comparator(8)])
    a = m.alloc(4)
    m.write(a, 3)
    m.run_circuit(0, a * 8, (a + 2) * 8)
    m.wait_all()
    lines = buf.getvalue().splitlines()
    assert lines[0] == f"tick=0 op=write addr={a} value=3"
    assert lines[1].startswith("tick=1 op=run circuit=0")
    assert lines[2].startswith("tick=2 op=wait")


def test_report_json():
    m = comparator_machine()
    a = m.alloc(4)
    m.run_circuit(0, a * 8, (a + 2) * 8)
    d = json.loads(m.report().to_json())
    assert d["invocations"] == {"0:comparator_w8": 1}
    assert set(d) >= {"time", "delay", "copies", "peak_inflight", "wait_episodes", "stale_reads",
                      "concurrent_writes", "total_ticks"}


def test_pipelined_throughput():
    w = 8
    m = comparator_machine(w)
    d = B.comparator(w).depth
    n = 10 * d
    src = m.alloc(2 * n)
    dst = m.alloc(2 * n)
    rng = np.random.default_rng(3)
    vals = rng.integers(0, 256, 2 * n)
    m.load_words(src, vals)
    m.run_circuit_many(0, (src + 2 * np.arange(n)) * w, (dst + 2 * np.arange(n)) * w)
    assert m.clock == n
    ready = [i for i in range(n) if i + d <= m.clock]
    assert len(ready) >= 9 * d
    got = m.read_many(dst + 2 * np.array(ready))
    assert got.tolist() == [min(vals[2 * i], vals[2 * i + 1]) for i in ready]
    assert m.peak_inflight() == d


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 255)), min_size=1, max_size=40),
       st.booleans())
def test_batched_and_single_issue_agree(pairs, batched):
    w = 8
    m = comparator_machine(w)
    n = len(pairs)
    src = m.alloc(2 * n)
    dst = m.alloc(2 * n)
    m.load_words(src, [v for p in pairs for v in p])
    srcs = (src + 2 * np.arange(n)) * w
    dsts = (dst + 2 * np.arange(n)) * w
    if batched:
        m.run_circuit_many(0, srcs, dsts)
    else:
        for s, t in zip(srcs, dsts):
            m.run_circuit(0, s, t)
    m.wait_all()
    assert m.time == n
    got = m.read_many(np.arange(dst, dst + 2 * n)).tolist()
    assert got == [v for a, b in pairs for v in (min(a, b), max(a, b))]


def test_chained_circuits_see_earlier_outputs():
    w = 8
    m = comparator_machine(w)
    a = m.alloc(6)
    m.load_words(a, [9, 4])
    t1 = m.run_circuit(0, a * w, (a + 2) * w)
    m.wait(t1)
    m.write(a + 3, 2)  # overwrite max with 2: words (4, 2)
    t2 = m.run_circuit(0, (a + 2) * w, (a + 4) * w)
    m.wait(t2)
    assert m.read_many([a + 4, a + 5]).tolist() == [2, 4]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30)), min_size=1, max_size=24),
       st.integers(1, 4))
def test_copy_many_equals_sequential_copies(pairs, nw):
    w = 8
    pairs = [(a, b) for a, b in pairs if abs(a - b) >= nw]
    if not pairs:
        return
    machines = [Machine(MachineConfig(w=w, I=16)) for _ in range(2)]
    init = np.random.default_rng(len(pairs)).integers(0, 256, 40)
    for m in machines:
        m.load_words(m.alloc(40), init)
    base = 2
    srcs = [(base + a) * w for a, _ in pairs]
    dsts = [(base + b) * w for _, b in pairs]
    machines[0].copy_many(srcs, dsts, nw * w)
    for s, d in zip(srcs, dsts):
        machines[1].copy(s, d, nw * w)
    a, b = (m.peek_words(base, 40) for m in machines)
    assert a.tolist() == b.tolist()
    assert machines[0].time == machines[1].time
    assert machines[0].copies == machines[1].copies
