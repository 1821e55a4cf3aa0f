"""Command line entry point: ``pcram {build,run,verify,scale,simulate-ram}``.

Exit codes: 0 success, 1 verification failure, 2 usage or parse error,
3 model violation (budget, alignment, concurrent write, ...).
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

import numpy as np

from . import builders as B
from . import ramsim
from .algorithms import aggregation, dynprog, recursive, sorting
from .algorithms.xsum import xsum, xsum_kit, xsum_oracle
from .circuit import serialize
from .errors import ModelViolation, ParameterError, ParseError, PcramError
from .machine import MachineConfig

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- build --------------------------------------------------------------------------------

def _params(items, w):
    out = {"w": w}
    for item in items:
        if "=" not in item:
            raise UsageError(f"builder parameters look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key] = int(value)
        except ValueError:
            out[key] = value
    return out


def _need(p, *keys):
    missing = [k for k in keys if k not in p]
    if missing:
        raise UsageError(f"missing builder parameter(s): {', '.join(missing)}")
    return [p[k] for k in keys]


def _cell(name, w):
    cells = {"lcs": B.lcs_cell, "edit": B.edit_cell}
    if name not in cells:
        raise UsageError(f"cell must be one of {sorted(cells)}")
    return cells[name](w)


def _op(name, w):
    if name not in B.OPERATIONS:
        raise UsageError(f"op must be one of {sorted(B.OPERATIONS)}")
    return B.OPERATIONS[name][0](w)


BUILDERS = {
    "bitonic": lambda p: [B.bitonic_sorter(*_need(p, "k", "w"))],
    "comparator": lambda p: [B.comparator(p["w"])],
    "aggregator": lambda p: [B.aggregator(*_need(p, "k", "w"), count_bits=p.get("count_bits"))],
    "mask_le": lambda p: [B.mask_le(*_need(p, "k", "w"))],
    "copy": lambda p: B.copy_family(B.ResourceBudget(p.get("G", _need(p, "I")[0] ** 2), p["I"])),
    "assoc_tree": lambda p: [B.assoc_tree(_op(p.get("op", "add"), p["w"]), _need(p, "j")[0])],
    "const_block": lambda p: [B.const_block(*_need(p, "e", "j", "w"))],
    "max": lambda p: [B.max_circuit(p["w"])],
    "add": lambda p: [B.add_circuit(p["w"])],
    "lcs_cell": lambda p: [B.lcs_cell(p["w"])],
    "edit_cell": lambda p: [B.edit_cell(p["w"])],
    "dp_block": lambda p: [B.dp_cell_block(_cell(p.get("cell", "lcs"), p["w"]), _need(p, "k")[0], 3, 2 * p["w"])],
    "multiplier": lambda p: [B.multiplier(_need(p, "b")[0])],
    "mem_read": lambda p: [ramsim.mem_read_circuit(*_need(p, "m", "w"))],
    "mem_write": lambda p: [ramsim.mem_write_circuit(*_need(p, "m", "w"))],
    "ram": lambda p: [ramsim.compile(ramsim.parse_program(Path(_need(p, "program")[0]).read_text()),
                                     _need(p, "t")[0]).circuit],
}


def cmd_build(args, config):
    if args.builder not in BUILDERS:
        raise UsageError(f"unknown builder {args.builder!r}; choose from {', '.join(sorted(BUILDERS))}")
    circuits = BUILDERS[args.builder](_params(args.params, config.w))
    text = "".join(serialize(c) for c in circuits)
    lines = []
    for c in circuits:
        extra = "".join(f" {k}={c.meta[k]}" for k in ("stages", "comparators") if k in c.meta)
        lines.append(f"{c.name} size={c.size} depth={c.depth} inputs={c.n_inputs} "
                     f"outputs={c.n_outputs} io={c.io_nodes}{extra}")
    gates, io = B.table_totals(circuits)
    lines.append(f"total circuits={len(circuits)} gates={gates} io={io}")
    summary = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
        sys.stdout.write(summary)
    else:
        sys.stdout.write(text)
        sys.stderr.write(summary)
    return EXIT_OK


# -- input / output ------------------------------------------------------------------------

def _read_text(path):
    return sys.stdin.read() if path in (None, "-") else Path(path).read_text()


def _ints(text, what="input"):
    try:
        return [int(t) for t in text.split()]
    except ValueError as e:
        raise ParseError(f"{what}: expected whitespace-separated decimal integers ({e})") from None


def _read_words(path, fmt, w):
    if fmt == "binary":
        if w % 8:
            raise UsageError("binary input needs a word size that is a multiple of 8")
        raw = sys.stdin.buffer.read() if path in (None, "-") else Path(path).read_bytes()
        nb = w // 8
        if len(raw) % nb:
            raise ParseError(f"binary input length {len(raw)} is not a multiple of {nb} bytes")
        return [int.from_bytes(raw[i:i + nb], "little") for i in range(0, len(raw), nb)]
    return _ints(_read_text(path))


def _emit(args, blocks, w):
    """Write result blocks (lists of ints) in the input's format."""
    if args.format == "binary":
        nb = w // 8
        data = b"".join(int(v).to_bytes(nb, "little") for blk in blocks for v in blk)
        if args.output:
            Path(args.output).write_bytes(data)
        else:
            sys.stdout.buffer.write(data)
        return
    text = "".join(" ".join(str(int(v)) for v in blk) + "\n" for blk in blocks)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _two_lines(text, what):
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    if len(lines) != 2:
        raise ParseError(f"{what}: expected exactly two lines, got {len(lines)}")
    return lines


# -- algorithm registry ---------------------------------------------------------------------

def _kit_and_machine(kit, config, trace=None):
    return kit, kit.machine(config, trace=trace)


def _run_algorithm(name, data, config, k=None, op="max", pivot=None):
    """Run ``name`` on parsed input; returns (result blocks, machine)."""
    w = config.w
    if name == "sort":
        kit, m = _kit_and_machine(sorting.sort_kit(config, k), config)
        return [sorting.sort(m, kit, data).tolist()], m
    if name == "xsum":
        kit, m = _kit_and_machine(xsum_kit(op, config=config, k=k), config)
        return [[xsum(m, kit, data)]], m
    if name == "aggregate":
        A, M = data
        kit, m = _kit_and_machine(aggregation.aggregation_kit(config, k), config)
        t, Bv = aggregation.aggregate(m, kit, aggregation.AggregationInstance(A, M))
        return [[t], Bv.tolist()], m
    if name == "partition":
        kit, m = _kit_and_machine(aggregation.partition_kit(config, k), config)
        A1, A2, c = aggregation.pivot_partition(m, kit, data, pivot)
        return [[c], A1.tolist(), A2.tolist()], m
    if name in ("lcs", "edit"):
        a, b = data
        spec = (dynprog.lcs_spec if name == "lcs" else dynprog.edit_spec)(a, b, w)
        kit, m = _kit_and_machine(dynprog.dp_kit(spec, config, k), config)
        return [[dynprog.dp_solve(m, kit, spec)[1]]], m
    if name == "karatsuba":
        a, b = data
        kit, m = _kit_and_machine(recursive.recursive_kit(recursive.karatsuba_spec(), config, k), config)
        return [[recursive.karatsuba(m, kit, a, b)]], m
    raise UsageError(f"unknown algorithm {name!r}")


RUNNABLE = ("sort", "xsum", "aggregate", "partition", "lcs", "edit", "karatsuba")


def _parse_run_input(name, args, w):
    if name in ("sort", "xsum", "partition"):
        return _read_words(args.input, args.format, w)
    text = _read_text(args.input)
    if name == "aggregate":
        l1, l2 = _two_lines(text, "aggregate input (words, then mask bits)")
        return _ints(l1, "words"), _ints(l2, "mask")
    if name in ("lcs", "edit"):
        return _two_lines(text, f"{name} input (two strings)")
    if name == "karatsuba":
        vals = _ints(text)
        if len(vals) != 2:
            raise ParseError("karatsuba input: expected two integers")
        return vals
    raise UsageError(f"unknown algorithm {name!r}")


def cmd_run(args, config):
    if args.algorithm not in RUNNABLE:
        raise UsageError(f"unknown algorithm {args.algorithm!r}; choose from {', '.join(RUNNABLE)}")
    if args.format == "binary" and args.algorithm not in ("sort", "xsum", "partition"):
        raise UsageError("binary format is only available for word-list inputs")
    if args.algorithm == "partition" and args.pivot is None:
        raise UsageError("partition needs --pivot")
    data = _parse_run_input(args.algorithm, args, config.w)
    blocks, m = _run_algorithm(args.algorithm, data, config, args.k, args.op, args.pivot)
    _emit(args, blocks, config.w)
    _write_report(args, m.report().to_dict())
    return EXIT_OK


def _write_report(args, obj):
    if args.report:
        text = json.dumps(obj, indent=2) + "\n"
        if args.report == "-":
            sys.stderr.write(text)
        else:
            Path(args.report).write_text(text)


# -- verify ------------------------------------------------------------------------------------

def _random_instance(name, rng: random.Random, w, max_n, op):
    mask = (1 << w) - 1
    if name == "ramsim":
        return None
    if name in ("lcs", "edit"):
        alpha = rng.choice(["AB", "ACGT", "abcdefghij"])
        return ("".join(rng.choice(alpha) for _ in range(rng.randint(0, max_n // 8))),
                "".join(rng.choice(alpha) for _ in range(rng.randint(0, max_n // 8))))
    if name == "karatsuba":
        return rng.getrandbits(rng.randint(1, 4 * max_n)), rng.getrandbits(rng.randint(1, 4 * max_n))
    lo = 0 if name in ("sort", "xsum") else 1
    n = rng.randint(lo, max_n)
    hi = rng.choice([mask, 15])  # small ranges force duplicates
    A = [rng.randint(0, hi) for _ in range(n)]
    if name == "aggregate":
        return A, [rng.randint(0, 1) for _ in range(n)]
    if name == "partition":
        return A, rng.randint(0, hi)
    return A


def _oracle(name, inst, w, op):
    if name == "sort":
        return [sorted(inst)]
    if name == "xsum":
        return [[xsum_oracle(inst, B.OPERATIONS[op][1], B.OPERATIONS[op][2], w)]]
    if name == "aggregate":
        t, Bv = aggregation.aggregate_oracle(*inst)
        return [[t], sorted(Bv[:t]), sorted(Bv[t:])]
    if name == "partition":
        A1, A2, c = aggregation.partition_oracle(*inst)
        return [[c], sorted(A1), sorted(A2)]
    if name == "lcs":
        return [[dynprog.lcs_oracle(*inst) % (1 << w)]]
    if name == "edit":
        return [[dynprog.edit_oracle(*inst) % (1 << w)]]
    if name == "karatsuba":
        return [[inst[0] * inst[1]]]
    raise UsageError(name)


def _canonical(name, blocks):
    """Order-free view of the outputs whose element order is unspecified."""
    if name == "aggregate":
        t = blocks[0][0]
        return [[t], sorted(blocks[1][:t]), sorted(blocks[1][t:])]
    if name == "partition":
        return [blocks[0], sorted(blocks[1]), sorted(blocks[2])]
    return [list(b) for b in blocks]


def _corrupt(blocks):
    blocks = [list(b) for b in blocks]
    for b in reversed(blocks):
        if b:
            b[0] ^= 1
            return blocks
    blocks[-1].append(0)
    return blocks


VERIFIABLE = RUNNABLE + ("ramsim",)


def cmd_verify(args, config):
    name = args.algorithm
    if name not in VERIFIABLE:
        raise UsageError(f"unknown algorithm {name!r}; choose from {', '.join(VERIFIABLE)}")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    rng = random.Random(args.seed)
    if name == "ramsim":
        return _verify_ramsim(args, rng)
    w = config.w
    for trial in range(args.trials):
        inst = _random_instance(name, rng, w, args.max_n, args.op)
        cfg = MachineConfig(w=w, I=config.I, G=config.G, strict_writes=config.strict_writes,
                            rng_seed=args.seed * 1000003 + trial)
        if name == "partition":
            blocks, _ = _run_algorithm(name, inst[0], cfg, args.k, args.op, inst[1])
        else:
            blocks, _ = _run_algorithm(name, inst, cfg, args.k, args.op)
        got = _canonical(name, blocks)
        if args.inject_fault:
            got = _corrupt(got)
        want = _oracle(name, inst, w, args.op)
        if got != want:
            print(f"FAIL {name} trial {trial}: input={inst!r}")
            print(f"  expected={want!r}")
            print(f"  got={got!r}")
            return EXIT_FAIL
    print(f"PASS {name}: {args.trials} trials (seed {args.seed})")
    return EXIT_OK


def _verify_ramsim(args, rng):
    for pname in ramsim.SAMPLE_PROGRAMS:
        prog, steps = ramsim.sample_program(pname)
        lc = ramsim.compile(prog, steps)
        mems = [[rng.randrange(1 << prog.w) for _ in range(prog.m)] for _ in range(args.trials)]
        got = lc.run_batch(mems)
        for i, (mem, g) in enumerate(zip(mems, got)):
            if args.inject_fault:
                g = ([g[0][0] ^ 1] + g[0][1:], g[1])
            want = ramsim.interpret(prog, mem, steps, return_ip=True)
            if tuple(g) != tuple(want):
                print(f"FAIL ramsim program {pname} trial {i}: memory={mem!r}")
                print(f"  interpreter={want!r}")
                print(f"  circuit={g!r}")
                return EXIT_FAIL
    print(f"PASS ramsim: {len(ramsim.SAMPLE_PROGRAMS)} programs x {args.trials} memories (seed {args.seed})")
    return EXIT_OK


# -- scale --------------------------------------------------------------------------------------

def _scale_instance(name, n, rng: np.random.Generator, w):
    if name in ("sort", "xsum"):
        return rng.integers(0, 1 << w, n, dtype=np.uint64).tolist()
    if name == "aggregate":
        return rng.integers(0, 1 << w, n, dtype=np.uint64).tolist(), rng.integers(0, 2, n).tolist()
    if name == "partition":
        return rng.integers(0, 1 << w, n, dtype=np.uint64).tolist()
    if name in ("lcs", "edit"):
        alpha = np.array(list("ACGT"))
        return "".join(rng.choice(alpha, n)), "".join(rng.choice(alpha, n))
    if name == "karatsuba":
        return int.from_bytes(rng.bytes(n // 8 + 1), "little") >> 7, int.from_bytes(rng.bytes(n // 8 + 1), "little") >> 7
    raise UsageError(name)


def cmd_scale(args, config):
    name = args.algorithm
    if name not in RUNNABLE:
        raise UsageError(f"unknown algorithm {name!r}; choose from {', '.join(RUNNABLE)}")
    ns = list(args.n or [])
    if args.pow2:
        try:
            lo, hi = (int(x) for x in args.pow2.split(":"))
        except ValueError:
            raise UsageError("--pow2 takes LO:HI") from None
        ns += [1 << e for e in range(lo, hi + 1)]
    if not ns:
        raise UsageError("no problem sizes given (use --n or --pow2)")
    if any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
        raise UsageError("problem sizes must be positive and increasing")
    rows = ["n,time,delay,invocations,copies"]
    reports = []
    for n in ns:
        rng = np.random.default_rng([args.seed, n])
        data = _scale_instance(name, n, rng, config.w)
        pivot = 1 << (config.w - 1)
        _, m = _run_algorithm(name, data, config, args.k, args.op, pivot)
        r = m.report()
        rows.append(f"{n},{r.time},{r.delay},{sum(r.invocations.values())},{r.copies}")
        reports.append({"n": n, **r.to_dict()})
    text = "\n".join(rows) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    _write_report(args, reports)
    return EXIT_OK


# -- simulate-ram --------------------------------------------------------------------------------

def cmd_simulate_ram(args, config):
    prog = ramsim.parse_program(_read_text(args.program), m=args.m, w=args.word)
    mem = _ints(Path(args.memory).read_text(), "memory") if args.memory else [0] * prog.m
    if len(mem) < prog.m:
        mem = mem + [0] * (prog.m - len(mem))
    if len(mem) != prog.m:
        raise ParseError(f"memory file has {len(mem)} words, program uses {prog.m}")
    want = ramsim.interpret(prog, mem, args.steps, return_ip=True)
    lc = ramsim.compile(prog, args.steps)
    got = lc.run(mem)
    same = tuple(got) == tuple(want)
    print(f"circuit size={lc.circuit.size} depth={lc.circuit.depth} layers={lc.layers} "
          f"layer_depth={lc.layer_depth} layer_size={lc.layer.size}")
    print("memory " + " ".join(str(v) for v in got[0]) + f" ip={got[1]}")
    print("equal" if same else "MISMATCH: interpreter gave " + " ".join(str(v) for v in want[0]) + f" ip={want[1]}")
    return EXIT_OK if same else EXIT_FAIL


# -- argument parsing ----------------------------------------------------------------------------

def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--w", type=int, default=d(32), help="word size in bits (default 32)")
    p.add_argument("--io", type=int, default=d(2048), help="I/O-node budget I (default 2048)")
    p.add_argument("--gates", type=int, default=d(None), help="gate budget G (default I^2)")
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--strict-writes", action="store_true", default=d(False),
                   help="abort on overlapping circuit outputs landing on the same tick")
    p.add_argument("--report", default=d(None), metavar="PATH",
                   help="write the cost report as JSON ('-' for stderr)")
    p.add_argument("--k", type=int, default=d(None), help="override the automatically chosen block size")


def make_parser():
    parser = argparse.ArgumentParser(prog="pcram", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", parents=[common], help="write a circuit netlist")
    b.add_argument("builder", help=", ".join(sorted(BUILDERS)))
    b.add_argument("params", nargs="*", help="key=value builder parameters")
    b.add_argument("-o", "--output", help="netlist path (default stdout)")

    r = sub.add_parser("run", parents=[common], help="run an algorithm on an input file")
    r.add_argument("algorithm", help=", ".join(RUNNABLE))
    r.add_argument("input", nargs="?", default="-")
    r.add_argument("--op", default="max", choices=sorted(B.OPERATIONS))
    r.add_argument("--pivot", type=int)
    r.add_argument("--format", default="text", choices=["text", "binary"])
    r.add_argument("-o", "--output")

    v = sub.add_parser("verify", parents=[common], help="compare an algorithm with its oracle")
    v.add_argument("algorithm", help=", ".join(VERIFIABLE))
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--max-n", type=int, default=256)
    v.add_argument("--op", default="max", choices=sorted(B.OPERATIONS))
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    s = sub.add_parser("scale", parents=[common], help="CSV of costs over problem sizes")
    s.add_argument("algorithm", help=", ".join(RUNNABLE) + " (for lcs/edit n is the string length)")
    s.add_argument("--n", type=int, nargs="*")
    s.add_argument("--pow2", help="LO:HI, sizes 2^LO .. 2^HI")
    s.add_argument("--op", default="add", choices=sorted(B.OPERATIONS))
    s.add_argument("-o", "--output")

    m = sub.add_parser("simulate-ram", parents=[common], help="compile a RAM program and compare with the interpreter")
    m.add_argument("program")
    m.add_argument("memory", nargs="?")
    m.add_argument("--steps", type=int, required=True)
    m.add_argument("--m", type=int, help="memory words (overrides .mem)")
    m.add_argument("--word", type=int, help="RAM word size (overrides .word)")
    return parser


COMMANDS = {"build": cmd_build, "run": cmd_run, "verify": cmd_verify, "scale": cmd_scale,
            "simulate-ram": cmd_simulate_ram}


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        config = MachineConfig(w=args.w, I=args.io, G=args.gates, strict_writes=args.strict_writes,
                               rng_seed=args.seed)
        return COMMANDS[args.command](args, config)
    except ModelViolation as e:
        print(f"pcram: model violation: {e}", file=sys.stderr)
        return EXIT_MODEL
    except (UsageError, ParseError, ParameterError, OSError) as e:
        print(f"pcram: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PcramError as e:
        print(f"pcram: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
