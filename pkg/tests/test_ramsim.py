import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from pcram import ramsim
from pcram.circuit import evaluate_batch, validate
from pcram.errors import ParameterError, ParseError, TrapError

from oracles import all_inputs, read_words


def test_mem_read_exhaustive():
    m, w = 4, 3
    c = ramsim.mem_read_circuit(m, w)
    x = all_inputs(m * w + w)
    words = read_words(x, w, m + 1)
    got = read_words(evaluate_batch(c, x), w, 1)[0]
    idx = words[m] % m
    assert np.array_equal(got, words[idx, np.arange(x.shape[0])])


def test_mem_write_exhaustive():
    m, w = 4, 3
    c = ramsim.mem_write_circuit(m, w)
    x = all_inputs(m * w + 2 * w)
    words = read_words(x, w, m + 2)
    got = read_words(evaluate_batch(c, x), w, m)
    want = words[:m].copy()
    cols = np.arange(x.shape[0])
    want[words[m] % m, cols] = words[m + 1]
    assert np.array_equal(got, want)


def test_memory_circuits_need_power_of_two():
    with pytest.raises(ParameterError):
        ramsim.mem_read_circuit(3, 4)
    with pytest.raises(ParameterError):
        ramsim.mem_read_circuit(16, 3)


def test_parse_and_interpret():
    p = ramsim.parse_program("SET 0 7 ; seven\nHALT\n", m=4)
    assert ramsim.interpret(p, [0] * 4, 5) == [7, 0, 0, 0]
    assert ramsim.parse_program(p.text()) == p


def test_directives_and_overrides():
    p = ramsim.parse_program(".mem 8\n.word 8\nSET 1, 200\n")
    assert (p.m, p.w) == (8, 8)
    assert ramsim.parse_program(".mem 8\nHALT\n", m=16, w=4).m == 16


@pytest.mark.parametrize("text, line", [
    ("SET 0 1\nFROB 1\n", 2),
    ("SET 0\n", 1),
    ("SET 0 x\n", 1),
    (".mem 1 2\n", 1),
])
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as err:
        ramsim.parse_program(text, m=4)
    assert err.value.line == line


def test_parse_semantic_errors():
    with pytest.raises(ParseError):
        ramsim.parse_program("SET 9 1\n", m=4)
    with pytest.raises(ParseError):
        ramsim.parse_program("JMP 5\n", m=4)
    with pytest.raises(ParseError):
        ramsim.parse_program("HALT\n")


def test_interpreter_semantics():
    prog = """
    SET 0 5
    SET 1 3
    SUB 2 1 0     ; 3 - 5 wraps
    SHL 3 0 1     ; 5 << 3
    SHR 4 3 1
    CMPLE 5 0 1
    XOR 6 0 1
    JZ 5 9
    HALT
    SET 7 1
    """
    p = ramsim.parse_program(prog, m=8, w=8)
    mem, ip = ramsim.interpret(p, [0] * 8, 20, return_ip=True)
    assert mem == [5, 3, 254, 40, 5, 0, 6, 1]
    assert ip == 10  # ran off the end: halts there


def test_indirect_trap():
    p = ramsim.parse_program("LOADI 0 1\n", m=4, w=8)
    with pytest.raises(TrapError):
        ramsim.interpret(p, [0, 9, 0, 0], 1)


def test_interpret_checks_memory():
    p = ramsim.parse_program("HALT\n", m=2, w=4)
    with pytest.raises(ParameterError):
        ramsim.interpret(p, [0], 1)
    with pytest.raises(ParameterError):
        ramsim.interpret(p, [0, 16], 1)


@pytest.mark.parametrize("t", [0, 1, 2, 5])
def test_compile_depth_is_layers_times_layer_depth(t):
    p, _ = ramsim.sample_program("mix")
    lc = ramsim.compile(p, t)
    assert validate(lc.circuit).is_synchronous
    assert lc.circuit.depth == t * lc.layer_depth
    assert lc.circuit.size == t * lc.layer.size


@pytest.mark.parametrize("name", sorted(ramsim.SAMPLE_PROGRAMS))
def test_sample_programs_compile_correctly(name):
    p, steps = ramsim.sample_program(name)
    lc = ramsim.compile(p, steps)
    rng = np.random.default_rng(len(name))
    mems = [rng.integers(0, 1 << p.w, p.m).tolist() for _ in range(20)]
    for mem, got in zip(mems, lc.run_batch(mems)):
        want = ramsim.interpret(p, mem, steps, return_ip=True)
        assert tuple(got) == tuple(want)
        # halted within the step budget
        assert ramsim.interpret(p, mem, steps + 5, return_ip=True) == want


def test_sample_program_results():
    p, steps = ramsim.sample_program("sum")
    mem = [0, 0, 0, 0, 1, 2, 3, 4]
    assert ramsim.interpret(p, mem, steps)[0] == 10
    p, steps = ramsim.sample_program("max")
    mem = [0] * 8 + [3, 9, 4, 1, 0, 7, 2, 8]
    assert ramsim.interpret(p, mem, steps)[0] == 9


def test_non_power_of_two_memory_is_padded():
    p = ramsim.parse_program("ADD 0 1 2\nHALT\n", m=3, w=8)
    lc = ramsim.compile(p, 2)
    assert lc.m == 4
    assert lc.run([1, 2, 3]) == ([5, 2, 3], 1)


def test_word_size_must_be_power_of_two():
    p = ramsim.parse_program("HALT\n", m=4, w=6)
    with pytest.raises(ParameterError):
        ramsim.compile(p, 1)


DIRECT = ["SET", "MOV", "ADD", "SUB", "AND", "OR", "XOR", "SHL", "SHR", "CMPLE", "JMP", "JZ", "HALT"]


@st.composite
def programs(draw, indirect):
    m, w = 4, 4
    P = draw(st.integers(1, 8))
    ops = DIRECT + (["LOADI", "STOREI"] if indirect else [])
    ins = []
    for _ in range(P):
        op = draw(st.sampled_from(ops))
        addr = st.integers(0, m - 1)
        if op == "SET":
            args = (draw(addr), draw(st.integers(0, (1 << w) - 1)))
        elif op == "JMP":
            args = (draw(st.integers(0, P - 1)),)
        elif op == "JZ":
            args = (draw(addr), draw(st.integers(0, P - 1)))
        else:
            args = tuple(draw(addr) for _ in range(ramsim.ARGS[op]))
        ins.append(ramsim.Instruction(op, args))
    return ramsim.RamProgram(ins, m, w)


def check_equivalent(p, mems, t):
    lc = ramsim.compile(p, t)
    checked = 0
    for mem, got in zip(mems, lc.run_batch(mems)):
        try:
            want = ramsim.interpret(p, mem, t, return_ip=True)
        except TrapError:
            continue  # computed address left the memory; the circuit wraps instead
        assert tuple(got) == tuple(want)
        checked += 1
    return checked


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(programs(indirect=False), st.integers(0, 6), st.data())
def test_compiled_program_matches_interpreter(p, t, data):
    mems = data.draw(st.lists(st.lists(st.integers(0, 15), min_size=4, max_size=4), min_size=1, max_size=8))
    assert check_equivalent(p, mems, t) == len(mems)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(programs(indirect=True), st.integers(0, 4), st.data())
def test_compiled_indirect_access(p, t, data):
    # initial values are valid addresses; arithmetic may still push one out of range
    mems = data.draw(st.lists(st.lists(st.integers(0, 3), min_size=4, max_size=4), min_size=1, max_size=8))
    check_equivalent(p, mems, t)


def test_exhaustive_small_program():
    p = ramsim.parse_program("ADD 0 0 1\nCMPLE 2 0 3\nJZ 2 0\n", m=4, w=2)
    t = 7
    mems = [list(v) for v in itertools.product(range(4), repeat=4)]
    assert check_equivalent(p, mems, t) == 256
