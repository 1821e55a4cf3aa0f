"""Aggregation and pivot partition on the PCRAM.

Both run in phases over chunks of k elements.  Every chunk gets a work slot
laid out as ``[lead words][k payload words][mask words]`` where the lead is
the pivot word for partitioning and empty for aggregation.  The aggregator
circuit reads payload and mask from the slot and writes ``[count][k words]``
to an output slot; the collect phase then concatenates the selected prefixes
followed by the unselected suffixes.

A trailing partial chunk holds r < k real elements.  Its padding always has
mask 0, so the padding sinks into the unselected part of the aggregator
output.  To keep padding out of the result we run the aggregator a second
time on that chunk with the mask ``(not M) and valid``: its selected prefix
is exactly the real unselected elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import builders as B
from ..errors import ParameterError
from ..machine import Machine, MachineConfig
from .common import Kit, as_words, fit_kit, pack_mask, place, ram_extract_bits


def aggregation_family(w):
    def family(k):
        return {"aggregator": B.aggregator(k, w, count_bits=w)}
    return family


def partition_family(w):
    def family(k):
        return {"aggregator": B.aggregator(k, w, count_bits=w), "mask_le": B.mask_le(k, w)}
    return family


def aggregation_kit(config: MachineConfig | None = None, k=None) -> Kit:
    config = config or MachineConfig()
    return fit_kit("aggregation", aggregation_family(config.w), config, k=k)


def partition_kit(config: MachineConfig | None = None, k=None) -> Kit:
    config = config or MachineConfig()
    return fit_kit("partition", partition_family(config.w), config, k=k)


@dataclass
class AggregationInstance:
    A: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.uint64).reshape(-1)
        self.M = np.asarray(self.M, dtype=np.uint8).reshape(-1)
        if self.A.size == 0:
            raise ParameterError("aggregation needs at least one element")
        if self.A.size != self.M.size:
            raise ParameterError(f"|A| = {self.A.size} but |M| = {self.M.size}")
        if np.any(self.M > 1):
            raise ParameterError("mask entries must be 0 or 1")

    @property
    def n(self):
        return self.A.size


class _Chunks:
    """Chunk bookkeeping for a batch of jobs over arrays of lengths ``n``."""

    def __init__(self, machine: Machine, kit: Kit, n, lead, tag):
        k, w = kit.k, machine.w
        self.k, self.w, self.lead = k, w, lead
        self.n = np.asarray(n, dtype=np.int64)
        self.nc = -(-self.n // k)
        J, C = self.n.size, int(self.nc.sum())
        self.job = np.repeat(np.arange(J), self.nc)
        first = np.cumsum(self.nc) - self.nc
        self.first = first
        self.idx = np.arange(C) - first[self.job]
        self.clen = np.minimum(k, self.n[self.job] - self.idx * k)
        self.mw = -(-k // w)
        self.S = lead + k + self.mw
        self.work = machine.scratch(f"{tag}.work", C * self.S)
        self.out = machine.scratch(f"{tag}.out", C * (k + 1))
        self.slot = self.work + np.arange(C) * self.S
        self.oslot = self.out + np.arange(C) * (k + 1)
        # the trailing partial chunk of each job, if any
        self.partial = np.flatnonzero(self.clen < k)
        P = self.partial.size
        self.cwork = machine.scratch(f"{tag}.cwork", max(1, P * (k + self.mw)))
        self.cout = machine.scratch(f"{tag}.cout", max(1, P * (k + 1)))
        self.cslot = self.cwork + np.arange(P) * (k + self.mw)
        self.coslot = self.cout + np.arange(P) * (k + 1)


def _stage_payload(machine, ch: _Chunks, src):
    w, k = ch.w, ch.k
    s = (np.asarray(src, dtype=np.int64)[ch.job] + ch.idx * k) * w
    d = (ch.slot + ch.lead) * w
    full = ch.clen == k
    machine.copy_many(s[full], d[full], k * w)
    part = ch.partial
    machine.copy_many(s[part], d[part], ch.clen[part] * w)


def _valid_mask_words(ch: _Chunks, lens):
    """Per mask word of each partial chunk, the bit pattern of valid slots."""
    w = ch.w
    q = np.arange(ch.mw)
    bits = np.clip(lens[:, None] - q[None, :] * w, 0, w)
    full = np.uint64((1 << w) - 1)
    return np.where(bits >= w, full, (np.uint64(1) << bits.astype(np.uint64)) - np.uint64(1))


def _stage_masks_from_bits(machine, ch: _Chunks, mask_bit):
    """Aggregation: bring each chunk's mask bits into its slot."""
    w, k, mw = ch.w, ch.k, ch.mw
    mbit = np.asarray(mask_bit, dtype=np.int64)[ch.job] + ch.idx * k
    dst = ch.slot + ch.lead + k
    full = ch.clen == k
    if k % w == 0 and not np.any(mbit % w):
        machine.copy_many(mbit[full], dst[full] * w, k)
        rows = ch.partial
    else:
        rows = np.arange(ch.job.size)
    if rows.size == 0:
        return
    # word-by-word extraction; lengths beyond the chunk are zero filled
    q = np.arange(mw)
    starts = (mbit[rows][:, None] + q[None, :] * w).ravel()
    lens = np.clip(ch.clen[rows][:, None] - q[None, :] * w, 0, w).ravel()
    dsts = (dst[rows][:, None] + q[None, :]).ravel()
    keep = lens > 0
    ram_extract_bits(machine, starts[keep], lens[keep], dsts[keep])
    zero = ~keep
    if zero.any():
        machine.write_many(dsts[zero], np.zeros(int(zero.sum()), dtype=np.uint64))


def _fix_partial_masks(machine, ch: _Chunks, src, clean):
    """Complement slots for trailing partial chunks (and masking of the
    original slot when ``clean`` is false)."""
    P = ch.partial
    if P.size == 0:
        return
    w, k, mw = ch.w, ch.k, ch.mw
    mdst = (ch.slot[P] + ch.lead + k)[:, None] + np.arange(mw)[None, :]
    vals = machine.read_many(mdst.ravel()).reshape(P.size, mw)
    valid = _valid_mask_words(ch, ch.clen[P])
    if not clean:
        vals = vals & valid
        machine.alu(vals.size)
        machine.write_many(mdst.ravel(), vals.ravel())
    comp = ~vals & valid & machine.memory.mask
    machine.alu(2 * comp.size)
    cm = (ch.cslot + k)[:, None] + np.arange(mw)[None, :]
    machine.write_many(cm.ravel(), comp.ravel())
    s = (np.asarray(src, dtype=np.int64)[ch.job[P]] + ch.idx[P] * k) * w
    machine.copy_many(s, ch.cslot * w, ch.clen[P] * w)


def _run_aggregators(machine, kit, ch: _Chunks):
    w = ch.w
    cid = kit.id("aggregator")
    r1 = machine.run_circuit_many(cid, (ch.slot + ch.lead) * w, ch.oslot * w)
    r2 = machine.run_circuit_many(cid, ch.cslot * w, ch.coslot * w) if ch.partial.size else np.zeros(0, np.int64)
    return max(int(r1.max(initial=0)), int(r2.max(initial=0)))


def _collect(machine, ch: _Chunks, dst):
    """Phase two: concatenate selected prefixes, then unselected parts."""
    w, k = ch.w, ch.k
    J = ch.n.size
    cnt = machine.read_many(ch.oslot).astype(np.int64)
    ccnt = machine.read_many(ch.coslot).astype(np.int64) if ch.partial.size else np.zeros(0, np.int64)
    machine.alu(2 * cnt.size)
    totals = np.add.reduceat(cnt, ch.first) if cnt.size else np.zeros(J, np.int64)
    excl1 = np.cumsum(cnt) - cnt
    excl1 -= excl1[ch.first][ch.job]
    zlen = k - cnt
    zsrc = ch.oslot + 1 + cnt
    zlen[ch.partial] = ccnt
    zsrc[ch.partial] = ch.coslot + 1
    excl0 = np.cumsum(zlen) - zlen
    excl0 -= excl0[ch.first][ch.job]
    dst = np.asarray(dst, dtype=np.int64)[ch.job]
    srcs = np.concatenate((ch.oslot + 1, zsrc))
    dsts = np.concatenate((dst + excl1, dst + totals[ch.job] + excl0))
    lens = np.concatenate((cnt, zlen))
    keep = lens > 0
    machine.alu(int((~keep).sum()))
    machine.copy_many(srcs[keep] * w, dsts[keep] * w, lens[keep] * w)
    return totals


def aggregate_jobs(machine: Machine, kit: Kit, src, n, mask_bit, dst):
    """Aggregate several arrays already in machine memory.

    ``src``/``dst`` are word addresses, ``mask_bit`` bit addresses of the
    packed masks.  All first phases run, then a single wait, then all second
    phases.  Returns the selected counts.
    """
    ch = _Chunks(machine, kit, n, 0, "agg")
    _stage_payload(machine, ch, src)
    _stage_masks_from_bits(machine, ch, mask_bit)
    _fix_partial_masks(machine, ch, src, clean=True)
    ready = _run_aggregators(machine, kit, ch)
    machine.wait_until(ready)
    return _collect(machine, ch, dst)


def partition_jobs(machine: Machine, kit: Kit, src, n, pivots, dst):
    """Pivot partition of several in-memory arrays; returns |A1| per job."""
    w, k = machine.w, kit.k
    ch = _Chunks(machine, kit, n, 1, "part")
    machine.write_many(ch.slot, np.asarray(pivots, dtype=np.uint64)[ch.job])
    _stage_payload(machine, ch, src)
    ready = machine.run_circuit_many(kit.id("mask_le"), ch.slot * w, (ch.slot + 1 + k) * w)
    machine.wait_until(int(ready.max(initial=0)))
    _fix_partial_masks(machine, ch, src, clean=False)
    ready = _run_aggregators(machine, kit, ch)
    machine.wait_until(ready)
    return _collect(machine, ch, dst)


def _check_kit(kit, *keys):
    for key in keys:
        if key not in kit.circuits:
            raise ParameterError(f"kit {kit.name!r} has no {key} circuit")


def aggregate_bulk(machine: Machine, kit: Kit, instances) -> list:
    """Aggregate many instances with one waiting episode between the phases."""
    _check_kit(kit, "aggregator")
    insts = [i if isinstance(i, AggregationInstance) else AggregationInstance(*i) for i in instances]
    if not insts:
        return []
    w = machine.w
    src = [place(machine, as_words(i.A, w)) for i in insts]
    mask = [place(machine, pack_mask(i.M, w)) * w for i in insts]
    n = [i.n for i in insts]
    dst = [machine.alloc(x) for x in n]
    totals = aggregate_jobs(machine, kit, src, n, mask, dst)
    return [(int(t), machine.peek_words(d, x)) for t, d, x in zip(totals, dst, n)]


def aggregate(machine: Machine, kit: Kit, inst) -> tuple:
    """(t, B): t = popcount(M), B holds the masked-in words first."""
    return aggregate_bulk(machine, kit, [inst])[0]


def pivot_partition_bulk(machine: Machine, kit: Kit, problems) -> list:
    """[(A1, A2, |A1|)] for each (A, p), sharing two waiting episodes."""
    _check_kit(kit, "aggregator", "mask_le")
    problems = list(problems)
    if not problems:
        return []
    w = machine.w
    arrays, pivots = [], []
    for A, p in problems:
        A = as_words(A, w)
        if A.size == 0:
            raise ParameterError("pivot partition needs at least one element")
        arrays.append(A)
        pivots.append(int(as_words([p], w)[0]))
    src = [place(machine, A) for A in arrays]
    n = [A.size for A in arrays]
    dst = [machine.alloc(x) for x in n]
    counts = partition_jobs(machine, kit, src, n, pivots, dst)
    out = []
    for c, d, x in zip(counts, dst, n):
        B_ = machine.peek_words(d, x)
        out.append((B_[:c], B_[c:], int(c)))
    return out


def pivot_partition(machine: Machine, kit: Kit, A, p) -> tuple:
    """(A1, A2, |A1|) with A1 the elements <= p."""
    return pivot_partition_bulk(machine, kit, [(A, p)])[0]


def aggregate_oracle(A, M):
    """Stable filter on a plain word-RAM."""
    A = list(A)
    M = list(M)
    sel = [a for a, m in zip(A, M) if m]
    return len(sel), sel + [a for a, m in zip(A, M) if not m]


def partition_oracle(A, p):
    A1 = [a for a in A if a <= p]
    return A1, [a for a in A if a > p], len(A1)
