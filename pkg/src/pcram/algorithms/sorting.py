"""Randomized quicksort traversed layer by layer.

Each layer partitions every open segment longer than k around a random
pivot with one bulk partition call.  A segment never moves: partitioning
``[s, s + L)`` leaves the small side at ``[s, s + c)`` and the large side
right after it, so every element's final position is fixed by its segment.
Segments of at most k elements are padded with the all-ones word, sorted by
the bitonic circuit and copied to the final buffer once everything lands.
"""

from __future__ import annotations

import math

import numpy as np

from .. import builders as B
from ..machine import Machine, MachineConfig
from .aggregation import partition_jobs
from .common import Kit, as_words, fit_kit, place


def sort_family(w):
    def family(k):
        return {"aggregator": B.aggregator(k, w, count_bits=w),
                "mask_le": B.mask_le(k, w),
                "bitonic": B.bitonic_sorter(k, w)}
    return family


def sort_kit(config: MachineConfig | None = None, k=None) -> Kit:
    config = config or MachineConfig()
    return fit_kit("sort", sort_family(config.w), config, k=k)


def _pad_area(machine: Machine, k):
    """k all-ones words built with one write and doubling copies."""
    w = machine.w
    pad = machine.alloc(k)
    machine.write(pad, (1 << w) - 1)
    have = 1
    while have < k:
        step = min(have, k - have)
        machine.copy(pad * w, (pad + have) * w, step * w)
        have += step
    return pad


def _pick_pivots(machine: Machine, buf, starts, lens, samples):
    """Random element of each segment (median of ``samples`` random ones)."""
    m = starts.size
    if m == 0:
        return np.zeros(0, dtype=np.uint64)
    r = machine.rand_many(m * samples)
    idx = (r % np.repeat(lens, samples).astype(np.uint64)).astype(np.int64)
    machine.alu(m * samples)
    vals = machine.read_many(buf + np.repeat(starts, samples) + idx).reshape(m, samples)
    if samples > 1:
        machine.alu(3 * m)
        vals = np.sort(vals, axis=1)
    return vals[:, samples // 2]


def sort_words(machine: Machine, kit: Kit, addr, n) -> int:
    """Sort n words at ``addr``; returns the address of the sorted copy."""
    w, k = machine.w, kit.k
    final = machine.alloc(max(n, 1))
    if n == 0:
        return final
    other = machine.alloc(n)
    pad = _pad_area(machine, k)
    bit_id = kit.id("bitonic")
    cap = 4 * max(1, math.ceil(math.log2(max(n, 2))))

    # open segments; ``below`` marks those to split at bp - 1
    starts = np.array([0], dtype=np.int64)
    lens = np.array([n], dtype=np.int64)
    below = np.array([False])
    bp = np.zeros(1, dtype=np.uint64)
    cur, nxt = addr, other
    finishing = []  # (sorter outputs, final positions, lengths)
    layer = 0
    while starts.size:
        small = lens <= k
        # segments of one element go straight to the final buffer
        one = small & (lens == 1)
        machine.copy_many((cur + starts[one]) * w, (final + starts[one]) * w, w)
        sm = small & ~one
        if sm.any():
            ss, sl = starts[sm], lens[sm]
            stage = machine.alloc(ss.size * k)
            outs = machine.alloc(ss.size * k)
            slots = stage + np.arange(ss.size) * k
            machine.copy_many((cur + ss) * w, slots * w, sl * w)
            fill = sl < k
            machine.copy_many(np.full(int(fill.sum()), pad * w), (slots[fill] + sl[fill]) * w, (k - sl[fill]) * w)
            oslots = outs + np.arange(ss.size) * k
            machine.run_circuit_many(bit_id, slots * w, oslots * w)
            finishing.append((oslots, final + ss, sl))
        big = ~small
        starts, lens, below, bp = starts[big], lens[big], below[big], bp[big]
        if not starts.size:
            break
        piv = np.zeros(starts.size, dtype=np.uint64)
        rnd = ~below
        samples = 1 if layer < cap else 3
        piv[rnd] = _pick_pivots(machine, cur, starts[rnd], lens[rnd], samples)
        # a segment that had every element <= p now splits at p - 1;
        # p = 0 means the segment is constant
        const = below & (bp == 0)
        machine.alu(int((~rnd).sum()))
        if const.any():
            machine.copy_many((cur + starts[const]) * w, (final + starts[const]) * w, lens[const] * w)
        dec = ~rnd & ~const
        piv[dec] = bp[dec] - np.uint64(1)
        live = ~const
        starts, lens, piv, rnd = starts[live], lens[live], piv[live], rnd[live]
        if not starts.size:
            break
        counts = partition_jobs(machine, kit, cur + starts, lens, piv, nxt + starts).astype(np.int64)
        machine.alu(2 * starts.size)
        stuck = rnd & (counts == lens)
        split = rnd & ~stuck
        dn = ~rnd
        ns = [starts[stuck], starts[split], starts[split] + counts[split], starts[dn]]
        nl = [lens[stuck], counts[split], lens[split] - counts[split], counts[dn]]
        nb = [np.ones(int(stuck.sum()), bool)] + [np.zeros(int(x.sum()), bool) for x in (split, split, dn)]
        np_ = [piv[stuck]] + [np.zeros(int(x.sum()), np.uint64) for x in (split, split, dn)]
        # the part equal to the old pivot is done
        eq = dn & (counts < lens)
        machine.copy_many((nxt + starts[eq] + counts[eq]) * w, (final + starts[eq] + counts[eq]) * w,
                          (lens[eq] - counts[eq]) * w)
        starts, lens = np.concatenate(ns), np.concatenate(nl)
        below, bp = np.concatenate(nb), np.concatenate(np_)
        keep = lens > 0
        starts, lens, below, bp = starts[keep], lens[keep], below[keep], bp[keep]
        cur, nxt = nxt, cur
        layer += 1
    machine.wait_all()
    for oslots, dsts, sl in finishing:
        machine.copy_many(oslots * w, dsts * w, sl * w)
    return final


def sort(machine: Machine, kit: Kit, A) -> np.ndarray:
    """Sorted copy of A (unsigned w-bit words)."""
    A = as_words(A, machine.w)
    addr = place(machine, A)
    out = sort_words(machine, kit, addr, A.size)
    return machine.peek_words(out, A.size)
