"""Reduction of an array under an associative word operation.

Every round splits the current array into blocks of k words and feeds each
block to a tree of k - 1 copies of the two-word operation circuit.  A short
last block is filled up with the neutral element by constant circuits, one
per set bit of the missing length.  Rounds are pipelined: a block of the next
round is issued as soon as the outputs it consumes have landed.
"""

from __future__ import annotations

import numpy as np

from .. import builders as B
from ..circuit import Circuit
from ..errors import ParameterError
from ..machine import Machine, MachineConfig
from .common import Kit, as_words, fit_kit, place


def xsum_family(c1: Circuit, e, w):
    def family(k):
        j = B.log2_exact(k)
        circuits = {"tree": B.assoc_tree(c1, j)}
        for i in range(j):
            circuits[f"const{i}"] = B.const_block(e, i, w)
        return circuits
    return family


def xsum_kit(c1: Circuit | str, e=None, config: MachineConfig | None = None, k=None) -> Kit:
    """Kit for reducing with ``c1`` (or a name from ``builders.OPERATIONS``)."""
    config = config or MachineConfig()
    w = config.w
    op = None
    if isinstance(c1, str):
        build, op, neutral = B.OPERATIONS[c1]
        c1 = build(w)
        e = neutral if e is None else e
    if e is None:
        raise ParameterError("a neutral element is required")
    if c1.n_inputs != 2 * w or c1.n_outputs != w:
        raise ParameterError(f"operation circuit must map {2 * w} bits to {w}")
    return fit_kit("xsum", xsum_family(c1, e, w), config, k=k, c1=c1, e=e, op=op)


def _issue_schedule(ready, start):
    """Issue ticks for consecutive blocks whose inputs land at ``ready``.

    Block b is issued at max(previous + 1, ready[b]); returns the ticks.
    """
    b = np.arange(ready.size, dtype=np.int64)
    return b + np.maximum(start, np.maximum.accumulate(ready - b))


def _sum_blocks(machine: Machine, kit: Kit, src, n, ready, pad_slot):
    """One round: returns (dst address, ready ticks of the n/k outputs)."""
    w, k = machine.w, kit.k
    nb = -(-n // k)
    dst = machine.alloc(nb)
    full = n // k
    rest = n - full * k
    tree = kit.id("tree")
    pad_ready = []
    if rest:
        # neutral padding first so it is in place when the block is issued
        missing, off = k - rest, rest
        for i in range(B.log2_exact(k)):
            if missing >> i & 1:
                pad_ready.append(machine.run_circuit(kit.id(f"const{i}"), 0, (pad_slot + off) * w).ready_tick)
                off += 1 << i
    blk_ready = np.full(nb, 0, dtype=np.int64)
    if ready is not None and n:
        idx = np.minimum(np.arange(nb) * k + k - 1, n - 1)
        blk_ready = np.maximum.accumulate(ready)[idx]
    issue = _issue_schedule(blk_ready[:full], machine.clock)
    # split into runs that need no waiting between consecutive issues
    out_ready = np.zeros(nb, dtype=np.int64)
    b = 0
    while b < full:
        machine.wait_until(int(issue[b]))
        e = b + 1
        while e < full and issue[e] == issue[e - 1] + 1:
            e += 1
        blocks = np.arange(b, e)
        out_ready[b:e] = machine.run_circuit_many(tree, (src + blocks * k) * w, (dst + blocks) * w)
        b = e
    if rest:
        machine.wait_until(int(blk_ready[-1]))
        machine.copy((src + full * k) * w, pad_slot * w, rest * w)
        machine.wait_until(max(pad_ready))
        out_ready[-1] = machine.run_circuit(tree, pad_slot * w, (dst + full) * w).ready_tick
    return dst, out_ready


def xsum_words(machine: Machine, kit: Kit, addr, n) -> int:
    """Fold of the n words at ``addr``."""
    e = int(kit.params["e"])
    if n == 0:
        machine.alu(1)
        return e
    pad_slot = machine.alloc(kit.k)
    ready = None
    src = addr
    while n > 1:
        src, ready = _sum_blocks(machine, kit, src, n, ready, pad_slot)
        n = ready.size
    if ready is not None:
        machine.wait_until(int(ready[0]))
    return machine.read(src)


def xsum(machine: Machine, kit: Kit, A) -> int:
    """Fold of A under the kit's operation."""
    A = as_words(A, machine.w)
    addr = place(machine, A)
    return xsum_words(machine, kit, addr, A.size)


def xsum_oracle(A, op, e, w):
    """Sequential fold; ``op`` takes (x, y, w) like ``builders.OPERATIONS``."""
    acc = e
    for a in A:
        acc = op(acc, int(a), w)
    return acc
