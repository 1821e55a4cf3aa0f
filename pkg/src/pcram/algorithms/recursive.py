"""Circuit-accelerated recursion with independent branches.

A recursive algorithm ``A(x) = f(A(g_1(x)), ..., A(g_b(x)))`` is run twice.
The first pass walks the recursion tree and hands every subproblem of at
most ``threshold`` bits to the base circuit, whose outputs collect in a
buffer.  The second pass walks the tree again, combining and taking leaf
results from the buffer in the same order.  In streaming mode the passes are
interleaved with the second trailing the first by the circuit delay, so the
buffer never holds more than ``del`` results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .. import builders as B
from ..circuit import Circuit
from ..errors import ParameterError, SpecError
from ..machine import Machine, MachineConfig
from .common import Kit, fit_kit


@dataclass
class RecursiveSpec:
    """An (f, G)-recursive algorithm; sizes are measured in bits."""
    name: str
    size: Callable[[Any], int]
    branches: Callable[[Any], list]
    combine: Callable[[Any, list], Any]
    circuit_family: Callable[[int], Circuit]
    encode: Callable[[Any, int], int]
    decode: Callable[[int, int], Any]
    base: Callable[[Any], Any]
    branch_cost: Callable[[Any, int], int] = lambda x, w: 1
    combine_cost: Callable[[Any, int], int] = lambda x, w: 1


def _words(bits, w):
    return -(-bits // w)


def karatsuba_spec() -> RecursiveSpec:
    """Multiplication of non-negative integers (a, b) by Karatsuba's rule."""

    def size(x):
        return max(x[0].bit_length(), x[1].bit_length(), 1)

    def branches(x):
        a, b = x
        h = size(x) // 2
        m = (1 << h) - 1
        a0, a1, b0, b1 = a & m, a >> h, b & m, b >> h
        return [(a0, b0), (a1, b1), (a0 + a1, b0 + b1)]

    def combine(x, r):
        h = size(x) // 2
        z0, z2, z1 = r
        return (z2 << (2 * h)) + ((z1 - z0 - z2) << h) + z0

    def encode(x, bits):
        return x[0] | (x[1] << bits)

    return RecursiveSpec(
        name="karatsuba", size=size, branches=branches, combine=combine,
        circuit_family=B.multiplier, encode=encode, decode=lambda out, bits: out,
        base=lambda x: x[0] * x[1],
        branch_cost=lambda x, w: 4 * _words(size(x), w),
        combine_cost=lambda x, w: 6 * _words(2 * size(x), w))


def recursive_kit(spec: RecursiveSpec, config: MachineConfig | None = None, k=None,
                  max_bits=128) -> Kit:
    """Kit whose base circuit handles subproblems of k * w bits.

    ``max_bits`` bounds the automatic search, since large base circuits are
    slow to construct.
    """
    config = config or MachineConfig()
    w = config.w
    k_max = max(1, max_bits // w) if k is None else None

    def family(kk):
        return {"base": spec.circuit_family(kk * w)}
    return fit_kit(f"recursive.{spec.name}", family, config, k=k, k_min=1, k_max=k_max, spec=spec)


class _Runner:
    def __init__(self, machine: Machine, kit: Kit, spec: RecursiveSpec):
        if "base" not in kit.circuits:
            raise SpecError("no base solver circuit registered")
        self.m, self.spec = machine, spec
        self.w = machine.w
        self.T = kit.k * self.w
        self.cid = kit.id("base")
        c = kit.circuit("base")
        self.in_words = _words(c.n_inputs, self.w)
        self.out_words = _words(c.n_outputs, self.w)
        self.depth = c.depth
        self.stage = machine.alloc(self.in_words)
        self.leaves = 0
        self.peak = 0

    def leaf_inputs(self, x):
        """Pass one: yield leaves in depth-first order, charging branching."""
        spec, m = self.spec, self.m
        sx = spec.size(x)
        if sx <= self.T:
            yield x
            return
        m.alu(spec.branch_cost(x, self.w))
        for y in spec.branches(x):
            if spec.size(y) >= sx:
                raise SpecError(f"branch of size {spec.size(y)} does not shrink a problem of size {sx}")
            yield from self.leaf_inputs(y)

    def issue(self, x, slot):
        m, w = self.m, self.w
        v = self.spec.encode(x, self.T)
        words = [(v >> (w * i)) & ((1 << w) - 1) for i in range(self.in_words)]
        m.write_many(np.arange(self.stage, self.stage + self.in_words), np.array(words, dtype=np.uint64))
        return m.run_circuit(self.cid, self.stage * w, slot * w)

    def collect(self, ticket, slot):
        m, w = self.m, self.w
        m.wait(ticket)
        vals = m.read_many(np.arange(slot, slot + self.out_words))
        out = 0
        for i, v in enumerate(vals.tolist()):
            out |= int(v) << (w * i)
        return self.spec.decode(out, self.T)

    def evaluate(self, x, take):
        """Pass two: recurse, taking leaf results in pass-one order."""
        spec, m = self.spec, self.m
        if spec.size(x) <= self.T:
            return take()
        m.alu(spec.branch_cost(x, self.w))
        results = [self.evaluate(y, take) for y in spec.branches(x)]
        m.alu(spec.combine_cost(x, self.w))
        return spec.combine(x, results)


def recursive_accelerate(machine: Machine, kit: Kit, spec: RecursiveSpec, x, mode="two_phase",
                         stats: dict | None = None):
    """A(x) with every subproblem of at most k * w bits solved by the base circuit."""
    if mode not in ("two_phase", "streaming"):
        raise ParameterError(f"unknown mode {mode!r}")
    run = _Runner(machine, kit, spec)
    ow = run.out_words
    if mode == "two_phase":
        leaves = list(run.leaf_inputs(x))
        buf = machine.alloc(max(1, len(leaves)) * ow)
        tickets = [run.issue(y, buf + i * ow) for i, y in enumerate(leaves)]
        run.peak = len(leaves)
        pos = iter(range(len(leaves)))

        def take():
            i = next(pos)
            return run.collect(tickets[i], buf + i * ow)
    else:
        D = max(1, run.depth)
        buf = machine.alloc(D * ow)
        gen = run.leaf_inputs(x)
        tickets = {}
        state = {"issued": 0, "taken": 0, "done": False}

        def take():
            j = state["taken"]
            while not state["done"] and state["issued"] < j + D:
                y = next(gen, None)
                if y is None:
                    state["done"] = True
                    break
                q = state["issued"]
                tickets[q] = run.issue(y, buf + (q % D) * ow)
                state["issued"] += 1
                run.peak = max(run.peak, state["issued"] - state["taken"])
            state["taken"] += 1
            return run.collect(tickets.pop(j), buf + (j % D) * ow)

    result = run.evaluate(x, take)
    if stats is not None:
        stats.update(leaves=len(tickets) if mode == "two_phase" else state["issued"],
                     peak_buffer=run.peak, circuit_delay=run.depth, threshold_bits=run.T)
    return result


def recursive_reference(spec: RecursiveSpec, x, threshold):
    """Plain recursion with ``spec.base`` at the leaves."""
    if spec.size(x) <= threshold:
        return spec.base(x)
    return spec.combine(x, [recursive_reference(spec, y, threshold) for y in spec.branches(x)])


def karatsuba(machine: Machine, kit: Kit, a, b, mode="two_phase", stats=None) -> int:
    a, b = int(a), int(b)
    if a < 0 or b < 0:
        raise ParameterError("operands must be non-negative")
    return recursive_accelerate(machine, kit, kit.params["spec"], (a, b), mode, stats)
