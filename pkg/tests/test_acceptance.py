"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` or directly with
``python3 tests/test_acceptance.py``.  Every check uses fixed seeds.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pcram import builders as B
from pcram import ramsim
from pcram.algorithms import (aggregate, aggregate_bulk, aggregate_oracle, aggregation_kit,
                              dp_kit, dp_solve, edit_spec, karatsuba, karatsuba_spec, lcs_spec,
                              partition_kit, partition_oracle, pivot_partition, recursive_kit,
                              sort, sort_kit)
from pcram.algorithms.xsum import xsum, xsum_kit, xsum_oracle
from pcram.circuit import CircuitBuilder, evaluate_batch, validate
from pcram.errors import AlignmentError, BudgetError, ConcurrentWriteError, PhaseError
from pcram.machine import Machine, MachineConfig

from oracles import all_inputs, edit, lcs, read_words

CONFIG = MachineConfig(w=32, I=2048)
W = CONFIG.w


class Criterion:
    """Collects named sub-checks and prints a single verdict line."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failed = []
        self.notes = []

    def check(self, name, ok, detail=""):
        if not ok:
            self.failed.append(f"{name} {detail}".strip())
        return ok

    def note(self, text):
        self.notes.append(text)

    def finish(self, emit):
        verdict = "FAIL" if self.failed else "PASS"
        extra = "; ".join(self.failed or self.notes)
        emit(f"{verdict} criterion {self.number} ({self.title}){': ' + extra if extra else ''}")
        assert not self.failed, self.failed


@pytest.fixture
def emit(capsys):
    def out(line):
        with capsys.disabled():
            print("\n" + line)
    return out


def words(rng, n, hi=1 << W):
    return rng.integers(0, hi, n, dtype=np.uint64)


# -- 1: exhaustive circuit checks ----------------------------------------------------------------

def test_criterion_1_exhaustive_circuits(emit):
    cr = Criterion(1, "exhaustive circuit correctness")

    x = all_inputs(8)
    cr.check("bitonic(8,1)", np.array_equal(evaluate_batch(B.bitonic_sorter(8, 1), x), np.sort(x, axis=1)))

    w = 3
    x = all_inputs(2 * w)
    a, b = read_words(x, w, 2)
    lo, hi = read_words(evaluate_batch(B.comparator(w), x), w, 2)
    cr.check("comparator(3)", np.array_equal(lo, np.minimum(a, b)) and np.array_equal(hi, np.maximum(a, b)))

    k = 4
    x = all_inputs(w + k * w)
    ws = read_words(x, w, k + 1)
    out = evaluate_batch(B.mask_le(k, w), x)
    cr.check("mask_le(4,3)", np.array_equal(out.T, (ws[1:] <= ws[0]).astype(np.uint8)))

    m = 4
    x = all_inputs(m * w + w)
    ws = read_words(x, w, m + 1)
    got = read_words(evaluate_batch(ramsim.mem_read_circuit(m, w), x), w, 1)[0]
    cr.check("mem_read(4,3)", np.array_equal(got, ws[ws[m] % m, np.arange(x.shape[0])]))

    x = all_inputs(m * w + 2 * w)
    ws = read_words(x, w, m + 2)
    got = read_words(evaluate_batch(ramsim.mem_write_circuit(m, w), x), w, m)
    want = ws[:m].copy()
    want[ws[m] % m, np.arange(x.shape[0])] = ws[m + 1]
    cr.check("mem_write(4,3)", np.array_equal(got, want))

    x = all_inputs(5 * w)
    diag, up, left, ca, cb = read_words(x, w, 5)
    mod = 1 << w
    got = read_words(evaluate_batch(B.lcs_cell(w), x), w, 1)[0]
    cr.check("lcs_cell(3)", np.array_equal(got, np.where(ca == cb, (diag + 1) % mod, np.maximum(up, left))))
    got = read_words(evaluate_batch(B.edit_cell(w), x), w, 1)[0]
    want = np.minimum((diag + (ca != cb)) % mod, np.minimum((up + 1) % mod, (left + 1) % mod))
    cr.check("edit_cell(3)", np.array_equal(got, want))

    x = all_inputs(12)
    p, q = read_words(x, 6, 2)
    cr.check("multiplier(6)", np.array_equal(read_words(evaluate_batch(B.multiplier(6), x), 12, 1)[0], p * q))
    cr.note("8 circuits equal their oracles on every input")
    cr.finish(emit)


# -- 2: structural laws ----------------------------------------------------------------------------

def test_criterion_2_structural_laws(emit):
    cr = Criterion(2, "structural laws")
    for k in (2, 4, 8, 16):
        p = k.bit_length() - 1
        got = B.bitonic_sorter(k, 4).meta["stages"]
        cr.check(f"bitonic stages k={k}", got == p * (p + 1) // 2 == len(B.bitonic_stages(k)), f"got {got}")
    for op in ("max", "add"):
        c1 = B.OPERATIONS[op][0](8)
        for j in range(5):
            size = B.assoc_tree(c1, j).size
            cr.check(f"assoc_tree {op} j={j}", size == ((1 << j) - 1) * c1.size, f"got {size}")
    for name in sorted(ramsim.SAMPLE_PROGRAMS):
        prog, _ = ramsim.sample_program(name)
        for t in (0, 1, 3, 8):
            lc = ramsim.compile(prog, t)
            cr.check(f"compile {name} t={t}", lc.circuit.depth == t * lc.layer_depth and validate(lc.circuit).is_synchronous)
    for I in (8, 64, 100, 2048, 5000):
        fam = B.copy_family(B.ResourceBudget(I * I, I))
        K = 1 << (len(fam) - 1)
        gates, io = B.table_totals(fam)
        cr.check(f"copy_family I={I}", (gates, io) == (2 * K - 1, 4 * K - 2), f"got {(gates, io)} K={K}")
    cr.note("stages, tree sizes, compiled depths and copy totals exact")
    cr.finish(emit)


# -- 3: oracle suites ----------------------------------------------------------------------------

def test_criterion_3_oracle_suites(emit):
    cr = Criterion(3, "randomized oracle suites")
    rng = np.random.default_rng(2024)

    kit = aggregation_kit(CONFIG)
    bad = 0
    for _ in range(500):
        n = int(rng.integers(1, 4097))
        A = words(rng, n, int(rng.choice([16, 1 << W])))
        M = rng.integers(0, 2, n)
        t, out = aggregate(kit.machine(CONFIG), kit, (A, M))
        t0, ref = aggregate_oracle(A.tolist(), M.tolist())
        bad += not (t == t0 and sorted(out[:t].tolist()) == sorted(ref[:t0])
                    and sorted(out[t:].tolist()) == sorted(ref[t0:]))
    cr.check("aggregate", bad == 0, f"{bad}/500 mismatches")

    kit = partition_kit(CONFIG)
    bad = 0
    for _ in range(500):
        n = int(rng.integers(1, 4097))
        hi = int(rng.choice([16, 1 << W]))
        A = words(rng, n, hi)
        p = int(rng.integers(0, hi))
        A1, A2, c = pivot_partition(kit.machine(CONFIG), kit, A, p)
        R1, R2, c0 = partition_oracle(A.tolist(), p)
        bad += not (c == c0 and sorted(A1.tolist()) == sorted(R1) and sorted(A2.tolist()) == sorted(R2))
    cr.check("pivot_partition", bad == 0, f"{bad}/500 mismatches")

    kit = sort_kit(CONFIG)
    bad = 0
    for i in range(200):
        n = int(rng.integers(0, 4097))
        A = words(rng, n, int(rng.choice([2, 16, max(2, n // 4), 1 << W])))
        cfg = MachineConfig(w=W, I=CONFIG.I, rng_seed=i)
        bad += not np.array_equal(sort(kit.machine(cfg), kit, A), np.sort(A))
    cr.check("sort", bad == 0, f"{bad}/200 mismatches")

    for op in ("max", "add"):
        kit = xsum_kit(op, config=CONFIG)
        _, fn, e = B.OPERATIONS[op]
        bad = 0
        for _ in range(200):
            A = words(rng, int(rng.integers(0, 4097)))
            bad += xsum(kit.machine(CONFIG), kit, A) != xsum_oracle(A.tolist(), fn, e, W)
        cr.check(f"xsum {op}", bad == 0, f"{bad}/200 mismatches")

    lcs_kit = dp_kit(lcs_spec("a", "a", W), CONFIG)
    edit_kit = dp_kit(edit_spec("a", "a", W), CONFIG)
    bad = 0
    for _ in range(100):
        alpha = list(rng.choice(["AB", "ACGT", "abcdefghijklmnopqrstuvwxyz"]))
        a = "".join(rng.choice(alpha, int(rng.integers(0, 513))))
        b = "".join(rng.choice(alpha, int(rng.integers(0, 513))))
        got_l = dp_solve(lcs_kit.machine(CONFIG), lcs_kit, lcs_spec(a, b, W))[1]
        got_e = dp_solve(edit_kit.machine(CONFIG), edit_kit, edit_spec(a, b, W))[1]
        bad += (got_l != lcs(a, b)) + (got_e != edit(a, b))
    cr.check("dp lcs/edit", bad == 0, f"{bad}/200 mismatches")

    kit = recursive_kit(karatsuba_spec(), CONFIG)
    bad = 0
    for i in range(100):
        a = int.from_bytes(rng.bytes(256), "little") >> int(rng.integers(0, 2048))
        b = int.from_bytes(rng.bytes(256), "little") >> int(rng.integers(0, 2048))
        mode = "streaming" if i % 2 else "two_phase"
        bad += karatsuba(kit.machine(CONFIG), kit, a, b, mode=mode) != a * b
    cr.check("karatsuba", bad == 0, f"{bad}/100 mismatches")

    bad = 0
    names = sorted(ramsim.SAMPLE_PROGRAMS)
    for name in names:
        prog, steps = ramsim.sample_program(name)
        mems = [rng.integers(0, 1 << prog.w, prog.m).tolist() for _ in range(100)]
        lc = ramsim.compile(prog, steps)
        for mem, got in zip(mems, lc.run_batch(mems)):
            bad += tuple(got) != tuple(ramsim.interpret(prog, mem, steps, return_ip=True))
    cr.check("ramsim", len(names) == 3 and bad == 0, f"{bad}/{100 * len(names)} mismatches")
    cr.note("aggregate 500, partition 500, sort 200, xsum 2x200, dp 2x100, karatsuba 100, ramsim 3x100 exact")
    cr.finish(emit)


# -- 4: cost-model scaling -------------------------------------------------------------------------

def sweep_time(run, sizes):
    return [run(n) for n in sizes]


def ratios(values):
    return [b / a for a, b in zip(values, values[1:])]


def test_criterion_4_scaling(emit):
    cr = Criterion(4, "doubling ratios of time")
    sizes = [1 << e for e in range(12, 18)]
    rng = np.random.default_rng(4)

    akit = aggregation_kit(CONFIG)
    pkit = partition_kit(CONFIG)
    xkit = xsum_kit("add", config=CONFIG)

    def run_aggregate(n):
        m = akit.machine(CONFIG)
        aggregate(m, akit, (words(rng, n), rng.integers(0, 2, n)))
        return m.time

    def run_partition(n):
        m = pkit.machine(CONFIG)
        pivot_partition(m, pkit, words(rng, n), 1 << (W - 1))
        return m.time

    def run_xsum(n):
        m = xkit.machine(CONFIG)
        xsum(m, xkit, words(rng, n))
        return m.time

    for name, run in (("aggregate", run_aggregate), ("pivot", run_partition), ("xsum", run_xsum)):
        r = ratios(sweep_time(run, sizes))
        cr.check(name, all(1.8 <= x <= 2.2 for x in r), f"ratios {[round(x, 3) for x in r]}")
        cr.note(f"{name} {min(r):.2f}..{max(r):.2f}")

    lkit = dp_kit(lcs_spec("a", "a", W), CONFIG)

    def run_dp(n):
        alpha = np.array(list("ACGT"))
        spec = lcs_spec("".join(rng.choice(alpha, n)), "".join(rng.choice(alpha, n)), W)
        m = lkit.machine(CONFIG)
        dp_solve(m, lkit, spec)
        return m.time

    r = ratios(sweep_time(run_dp, [64, 128, 256, 512]))
    cr.check("dp square grid", all(3.5 <= x <= 4.5 for x in r), f"ratios {[round(x, 3) for x in r]}")
    cr.note(f"dp {min(r):.2f}..{max(r):.2f}")
    cr.finish(emit)


# -- 5: pipelining and delay -----------------------------------------------------------------------

def test_criterion_5_pipelining_and_delay(emit):
    cr = Criterion(5, "pipelining and delay")
    rng = np.random.default_rng(5)

    kit = aggregation_kit(CONFIG)
    worst = 0
    for m_count in (1, 2, 7, 40, 200):
        machine = kit.machine(CONFIG)
        insts = []
        for _ in range(m_count):
            n = int(rng.integers(1, 2000))
            insts.append((words(rng, n), rng.integers(0, 2, n)))
        aggregate_bulk(machine, kit, insts)
        worst = max(worst, machine.wait_episodes)
    cr.check("aggregate_bulk waits", worst <= 2, f"worst {worst}")
    cr.note(f"bulk waits <= {worst}")

    for op in ("max", "add"):
        kit = xsum_kit(op, config=CONFIG)
        d1 = kit.params["c1"].depth
        scale = d1 * math.log2(kit.k * d1)
        cs = []
        for e in range(12, 18):
            machine = kit.machine(CONFIG)
            xsum(machine, kit, words(rng, 1 << e))
            cs.append(machine.delay / scale)
        mean = sum(cs) / len(cs)
        cr.check(f"xsum {op} delay constant", all(0.5 * mean <= c <= 1.5 * mean for c in cs),
                 f"c over n: {[round(c, 3) for c in cs]}")
        cr.note(f"xsum {op} c in {min(cs):.3f}..{max(cs):.3f}")

    w = W
    c = B.comparator(w)
    d = c.depth
    machine = Machine(CONFIG)
    machine.load_program([c])
    n = 10 * d
    src = machine.alloc(2 * n)
    dst = machine.alloc(2 * n)
    vals = words(rng, 2 * n)
    machine.load_words(src, vals)
    start = machine.clock
    for i in range(n):
        machine.run_circuit(0, (src + 2 * i) * w, (dst + 2 * i) * w)
    ready = [i for i in range(n) if start + i + d <= machine.clock]
    got = machine.read_many(dst + 2 * np.array(ready)).tolist()
    want = [min(int(vals[2 * i]), int(vals[2 * i + 1])) for i in ready]
    cr.check("pipelined outputs", len(ready) >= 9 * d and got == want and machine.delay == 0,
             f"{len(ready)} of {n} ready, need {9 * d}")
    cr.note(f"{len(ready)} outputs after {n} issues (del={d})")
    cr.finish(emit)


# -- 6: model enforcement --------------------------------------------------------------------------

def test_criterion_6_enforcement(emit):
    cr = Criterion(6, "model enforcement")
    table = [B.comparator(8), B.max_circuit(8)]
    G = sum(x.size for x in table)
    Machine(MachineConfig(w=8, I=64, G=G)).load_program(table)
    try:
        Machine(MachineConfig(w=8, I=64, G=G - 1)).load_program(table)
        cr.check("G+1 gates", False, "accepted")
    except BudgetError:
        pass

    m = Machine(MachineConfig(w=8, I=64))
    m.load_program([B.comparator(8)])
    try:
        m.register(B.max_circuit(8))
        cr.check("post-freeze registration", False, "accepted")
    except PhaseError:
        pass

    a = m.alloc(4)
    try:
        m.run_circuit(0, a * 8 + 1, (a + 2) * 8)
        cr.check("unaligned RunCircuit", False, "accepted")
    except AlignmentError:
        pass

    # two circuits of depths d+1 and d: issued one tick apart they land together
    bd = CircuitBuilder("deeper")
    xs = bd.inputs(16)
    deeper = bd.build([bd.ID(x) for x in bd.instantiate(B.comparator(8), xs)])
    m = Machine(MachineConfig(w=8, I=128, strict_writes=True))
    m.load_program([deeper, B.comparator(8)])
    src, dst = m.alloc(4), m.alloc(3)
    m.run_circuit(0, src * 8, dst * 8)
    try:
        m.run_circuit(1, (src + 2) * 8, (dst + 1) * 8)
        m.wait_all()
        cr.check("strict concurrent write", False, "no error")
    except ConcurrentWriteError:
        pass
    cr.note("budget, freeze, alignment and concurrent-write errors raised")
    cr.finish(emit)


# -- 7: quicksort time band ----------------------------------------------------------------------

RUNS = {1 << 13: 50, 1 << 15: 50, 1 << 17: 5}


def test_criterion_7_quicksort_band(emit):
    cr = Criterion(7, "quicksort time band")
    kit = sort_kit(CONFIG)
    means = {}
    for n, runs in RUNS.items():
        vals = []
        for seed in range(runs):
            cfg = MachineConfig(w=W, I=CONFIG.I, rng_seed=seed)
            m = kit.machine(cfg)
            A = words(np.random.default_rng([n, seed]), n)
            out = sort(m, kit, A)
            cr.check(f"sorted n={n} seed={seed}", np.array_equal(out, np.sort(A)))
            vals.append(m.time / ((n / kit.k) * math.log2(n)))
        means[n] = sum(vals) / len(vals)
    spread = max(means.values()) / min(means.values())
    cr.check("band", spread <= 4, f"max/min {spread:.3f}")
    cr.note("means " + ", ".join(f"2^{n.bit_length() - 1}: {v:.2f} ({RUNS[n]} runs)" for n, v in means.items())
            + f"; max/min {spread:.3f}")
    cr.finish(emit)


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn(print)
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
