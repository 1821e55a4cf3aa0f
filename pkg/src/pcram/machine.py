"""Clocked simulator of the Pipelining Circuit RAM.

Timing conventions
------------------
Every charged instruction executes at tick ``u = machine.clock`` and then
advances the clock by its cost (1 for RAM instructions and RunCircuit,
``ceil(len / I)`` for Copy).  A RunCircuit issued at tick ``u`` on a circuit
of depth ``d`` snapshots its input bits at ``u``; its output becomes visible
to every access at tick ``u + d`` or later.  ``wait_until`` jumps the clock
forward and books the skipped ticks as *delay*; nothing else does, so
``clock == time + delay`` at all times.

Circuit outputs are computed lazily and in batches: pending writes are only
evaluated and applied when some later access touches their region, or when
the program waits.  Results are identical to eager evaluation because the
inputs are snapshotted at issue time.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Iterable, TextIO

import numpy as np

from .circuit import Circuit, evaluate_batch, validate
from .errors import (AlignmentError, BudgetError, CircuitIndexError, ConcurrentWriteError,
                     MemoryAccessError, OverlapError, ParameterError, PhaseError,
                     ValidationError)


@dataclass(frozen=True)
class MachineConfig:
    w: int = 32
    I: int = 2048
    G: int | None = None  # defaults to I**2
    strict_writes: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.G is None:
            object.__setattr__(self, "G", self.I * self.I)
        if not 8 <= self.w <= 64:
            raise ParameterError(f"word size must be in [8, 64], got {self.w}")
        if self.I < 1 or self.G < self.I:
            raise ParameterError(f"need G >= I >= 1, got G={self.G}, I={self.I}")


class CircuitTable:
    """The fixed sequence of circuits C_1..C_m realised on the accelerator."""

    def __init__(self):
        self.circuits: list[Circuit] = []
        self.frozen = False

    def add(self, c: Circuit) -> int:
        if self.frozen:
            raise PhaseError("circuit table is frozen; no registration after program load")
        self.circuits.append(c)
        return len(self.circuits) - 1

    @property
    def gates(self):
        return sum(c.size for c in self.circuits)

    @property
    def io_nodes(self):
        return sum(c.io_nodes for c in self.circuits)

    def check(self, G, I):
        for c in self.circuits:
            rep = validate(c)
            if not rep.ok or not rep.is_synchronous:
                raise ValidationError(f"circuit {c.name!r} is not a valid synchronous circuit")
        if self.gates > G:
            raise BudgetError("G", self.gates, G)
        if self.io_nodes > I:
            raise BudgetError("I", self.io_nodes, I)

    def freeze(self, G, I):
        self.check(G, I)
        self.frozen = True

    def __len__(self):
        return len(self.circuits)

    def __getitem__(self, i):
        return self.circuits[i]


@dataclass
class InFlight:
    circuit_id: int
    issue_tick: int
    target_bit_address: int
    output_width_bits: int
    ready_tick: int


@dataclass
class CostReport:
    time: int = 0
    delay: int = 0
    invocations: dict = field(default_factory=dict)
    copies: int = 0
    peak_inflight: int = 0
    wait_episodes: int = 0
    stale_reads: int = 0
    concurrent_writes: int = 0

    @property
    def total_ticks(self):
        return self.time + self.delay

    def to_dict(self):
        d = asdict(self)
        d["total_ticks"] = self.total_ticks
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


class Memory:
    """Growable array of w-bit words."""

    def __init__(self, w, capacity=1024):
        self.w = w
        self.mask = np.uint64((1 << w) - 1)
        self.words = np.zeros(capacity, dtype=np.uint64)
        self.size = 0

    def grow(self, n):
        need = self.size + n
        if need > self.words.size:
            cap = max(need, 2 * self.words.size)
            new = np.zeros(cap, dtype=np.uint64)
            new[: self.size] = self.words[: self.size]
            self.words = new
        addr = self.size
        self.size = need
        return addr

    def check(self, first, last):
        """Word range [first, last) must be allocated."""
        if first < 0 or last > self.size:
            raise MemoryAccessError(f"word range [{first}, {last}) outside memory of {self.size} words")


class _Entry:
    __slots__ = ("seq", "cid", "issue", "ready", "start", "nbits", "snap", "result")

    def __init__(self, seq, cid, issue, ready, start, nbits, snap):
        self.seq, self.cid, self.issue, self.ready = seq, cid, issue, ready
        self.start, self.nbits, self.snap = start, nbits, snap
        self.result = None


def _intervals_hit(starts, ends, qs, qe):
    """For each query [qs, qe) whether it intersects any interval [starts, ends)."""
    order = np.argsort(starts, kind="stable")
    s = starts[order]
    pmax = np.maximum.accumulate(ends[order])
    idx = np.searchsorted(s, qe, side="left")
    hit = np.zeros(qs.shape, dtype=bool)
    ok = idx > 0
    hit[ok] = pmax[idx[ok] - 1] > qs[ok]
    return hit


def _self_overlap(starts, ends):
    """Whether any two of the intervals intersect (empty ones ignored)."""
    keep = ends > starts
    s, e = starts[keep], ends[keep]
    if s.size < 2:
        return False
    order = np.argsort(s, kind="stable")
    s, e = s[order], e[order]
    return bool(np.any(s[1:] < np.maximum.accumulate(e)[:-1]))


class _PendingWrites:
    def __init__(self):
        self.entries: dict[int, _Entry] = {}
        self.heap = []
        self.by_ready: dict[int, list] = {}
        self.unevaluated: list[_Entry] = []
        self._arrays = None

    def __len__(self):
        return len(self.entries)

    def add(self, e: _Entry):
        self.entries[e.seq] = e
        heapq.heappush(self.heap, (e.ready, e.seq))
        self.by_ready.setdefault(e.ready, []).append(e)
        self.unevaluated.append(e)
        self._arrays = None

    def remove(self, e: _Entry):
        del self.entries[e.seq]
        lst = self.by_ready[e.ready]
        lst.remove(e)
        if not lst:
            del self.by_ready[e.ready]
        self._arrays = None

    def arrays(self):
        if self._arrays is None:
            es = list(self.entries.values())
            starts = np.fromiter((e.start for e in es), dtype=np.int64, count=len(es))
            ends = starts + np.fromiter((e.nbits for e in es), dtype=np.int64, count=len(es))
            self._arrays = (starts, ends)
        return self._arrays

    def overlaps(self, s, e):
        if not self.entries or e <= s:
            return False
        if len(self.entries) <= 16:
            return any(x.start < e and s < x.start + x.nbits for x in self.entries.values())
        starts, ends = self.arrays()
        return bool(np.any((starts < e) & (ends > s)))

    def overlaps_many(self, qs, qe):
        if not self.entries:
            return np.zeros(qs.shape, dtype=bool)
        starts, ends = self.arrays()
        return _intervals_hit(starts, ends, qs, qe)

    def min_ready(self):
        while self.heap and self.heap[0][1] not in self.entries:
            heapq.heappop(self.heap)
        return self.heap[0][0] if self.heap else None

    def pop_due(self, clock):
        out = []
        while self.heap and self.heap[0][0] <= clock:
            _, seq = heapq.heappop(self.heap)
            e = self.entries.get(seq)
            if e is not None:
                out.append(e)
                self.remove(e)
        return out


class Machine:
    """A PCRAM instance: word memory, frozen circuit table, clock and cost ledger.

    Word addresses are used by ``read``/``write``; ``copy`` and
    ``run_circuit`` take bit addresses, which must be multiples of w.
    """

    def __init__(self, config: MachineConfig | None = None, trace: TextIO | None = None):
        self.config = config or MachineConfig()
        self.w = self.config.w
        self.G, self.I = self.config.G, self.config.I
        self.table = CircuitTable()
        self.memory = Memory(self.w)
        self.trace = trace
        self.clock = 0
        self.time = 0
        self.delay = 0
        self.copies = 0
        self.wait_episodes = 0
        self.stale_reads = 0
        self.concurrent_writes = 0
        self._invocations: list[int] = []
        self._issue_ticks: list = []
        self._ready_ticks: list = []
        self._pending = _PendingWrites()
        self._conflicts: dict[int, list] = {}  # ready tick -> overlapping bit ranges
        self._seq = 0
        self._scratch = {}
        seeds = np.random.SeedSequence(self.config.rng_seed).spawn(2)
        self._rng = np.random.Generator(np.random.PCG64(seeds[0]))
        self._fill_rng = np.random.Generator(np.random.PCG64(seeds[1]))
        # G and I are present in memory when the main program starts
        base = self.memory.grow(2)
        self.memory.words[base] = np.uint64(self.G) & self.memory.mask
        self.memory.words[base + 1] = np.uint64(self.I) & self.memory.mask

    # -- program phase ---------------------------------------------------------
    def register(self, c: Circuit) -> int:
        cid = self.table.add(c)
        self._invocations.append(0)
        return cid

    def load_program(self, generator: Callable[[int, int], Iterable[Circuit]] | Iterable[Circuit]):
        """Run the circuit generator on (G, I), check budgets and freeze the table.

        Generation is not charged to the cost ledger.
        """
        if self.table.frozen:
            raise PhaseError("program already loaded")
        circuits = generator(self.G, self.I) if callable(generator) else generator
        for c in circuits:
            self.register(c)
        self.table.freeze(self.G, self.I)
        return self.table

    # -- host side (uncharged) -------------------------------------------------------
    def alloc(self, n_words) -> int:
        """Reserve n fresh zeroed words; returns the word address."""
        return self.memory.grow(int(n_words))

    def scratch(self, key, n_words) -> int:
        """A reusable work region of at least n words, keyed by name.

        Callers must not reuse a region while circuit outputs aimed at it
        are still in flight.
        """
        addr, size = self._scratch.get(key, (0, -1))
        if size < n_words:
            size = max(int(n_words), 2 * size)
            addr = self.alloc(size)
            self._scratch[key] = (addr, size)
        return addr

    def load_words(self, addr, values):
        vals = np.asarray(values, dtype=np.uint64).reshape(-1)
        self.memory.check(addr, addr + vals.size)
        self._touch(reads=(), writes=((addr * self.w, (addr + vals.size) * self.w),))
        self.memory.words[addr:addr + vals.size] = vals & self.memory.mask

    def peek_words(self, addr, n) -> np.ndarray:
        self.memory.check(addr, addr + n)
        self._touch(reads=(), writes=((addr * self.w, (addr + n) * self.w),))
        return self.memory.words[addr:addr + n].copy()

    # -- accounting helpers -------------------------------------------------------------
    def _charge(self, n=1):
        self.clock += n
        self.time += n

    def _log(self, op, **kw):
        if self.trace is not None:
            args = " ".join(f"{k}={v}" for k, v in kw.items())
            self.trace.write(f"tick={self.clock} op={op} {args}".rstrip() + "\n")

    def _touch(self, reads=(), writes=()):
        """Make memory consistent for an access at the current tick."""
        if not self._pending:
            return
        regions = list(reads) + list(writes)
        if not any(self._pending.overlaps(s, e) for s, e in regions):
            return
        self._apply_due(self.clock)
        for s, e in reads:
            if self._pending.overlaps(s, e):
                self.stale_reads += 1

    def _check_aligned(self, *bit_addrs):
        for a in bit_addrs:
            if a % self.w:
                raise AlignmentError(f"bit address {a} is not aligned to {self.w}-bit words")

    def _check_bits(self, start, nbits):
        first = start // self.w
        last = -(-(start + nbits) // self.w)
        self.memory.check(first, last)

    # -- RAM instructions ------------------------------------------------------------------
    def read(self, addr) -> int:
        self.memory.check(addr, addr + 1)
        self._touch(reads=((addr * self.w, (addr + 1) * self.w),))
        self._log("read", addr=addr)
        self._charge()
        return int(self.memory.words[addr])

    def write(self, addr, value):
        self.memory.check(addr, addr + 1)
        self._touch(writes=((addr * self.w, (addr + 1) * self.w),))
        self._log("write", addr=addr, value=value)
        self._charge()
        self.memory.words[addr] = np.uint64(int(value) & ((1 << self.w) - 1))

    def alu(self, n=1):
        """Charge n register/arithmetic/branch instructions."""
        if n > 0:
            self._log("alu", n=n)
            self._charge(n)

    def rand_word(self, addr=None) -> int:
        value = int(self._rng.integers(0, (1 << self.w) - 1, endpoint=True, dtype=np.uint64))
        if addr is not None:
            self.memory.check(addr, addr + 1)
            self._touch(writes=((addr * self.w, (addr + 1) * self.w),))
            self.memory.words[addr] = np.uint64(value)
        self._log("rand", addr=addr)
        self._charge()
        return value

    def rand_many(self, n) -> np.ndarray:
        """n consecutive rand instructions; returns their values."""
        n = int(n)
        vals = self._rng.integers(0, (1 << self.w) - 1, endpoint=True, size=n, dtype=np.uint64)
        if self.trace is not None:
            for i in range(n):
                self.trace.write(f"tick={self.clock + i} op=rand addr=None\n")
        self._charge(n)
        return vals

    def read_many(self, addrs) -> np.ndarray:
        addrs = np.asarray(addrs, dtype=np.int64).reshape(-1)
        if addrs.size == 0:
            return np.zeros(0, dtype=np.uint64)
        self.memory.check(int(addrs.min()), int(addrs.max()) + 1)
        qs, qe = addrs * self.w, (addrs + 1) * self.w
        if not self._fast_ok(qs, qe):
            return np.array([self.read(int(a)) for a in addrs], dtype=np.uint64)
        if self.trace is not None:
            for i, a in enumerate(addrs.tolist()):
                self.trace.write(f"tick={self.clock + i} op=read addr={a}\n")
        self._charge(addrs.size)
        return self.memory.words[addrs].copy()

    def write_many(self, addrs, values):
        addrs = np.asarray(addrs, dtype=np.int64).reshape(-1)
        vals = np.asarray(values, dtype=np.uint64).reshape(-1)
        if addrs.size == 0:
            return
        self.memory.check(int(addrs.min()), int(addrs.max()) + 1)
        qs, qe = addrs * self.w, (addrs + 1) * self.w
        if not self._fast_ok(qs, qe) or np.unique(addrs).size != addrs.size:
            for a, v in zip(addrs.tolist(), vals.tolist()):
                self.write(a, v)
            return
        if self.trace is not None:
            for i, (a, v) in enumerate(zip(addrs.tolist(), vals.tolist())):
                self.trace.write(f"tick={self.clock + i} op=write addr={a} value={v}\n")
        self._charge(addrs.size)
        self.memory.words[addrs] = vals & self.memory.mask

    def _fast_ok(self, qs, qe):
        """True when no pending write touches any of the query ranges."""
        if not self._pending:
            return True
        if not self._pending.overlaps_many(qs, qe).any():
            return True
        self._apply_due(self.clock)
        return not (self._pending and self._pending.overlaps_many(qs, qe).any())

    # -- Copy ---------------------------------------------------------------------------------
    def copy_cost(self, nbits):
        return -(-int(nbits) // self.I)

    def copy(self, src, dst, nbits):
        """Copy ``nbits`` bits from bit address src to dst; costs ceil(nbits / I)."""
        src, dst, nbits = int(src), int(dst), int(nbits)
        self._check_aligned(src, dst)
        if nbits < 0:
            raise ParameterError("negative copy length")
        if src < dst + nbits and dst < src + nbits:
            raise OverlapError(f"copy ranges [{src}, {src + nbits}) and [{dst}, {dst + nbits}) overlap")
        self._check_bits(src, nbits)
        self._check_bits(dst, nbits)
        self._touch(reads=((src, src + nbits),), writes=((dst, dst + nbits),))
        self._log("copy", src=src, dst=dst, bits=nbits)
        self._copy_bits(src, dst, nbits)
        self.copies += 1
        self._charge(self.copy_cost(nbits))

    def _copy_bits(self, src, dst, nbits):
        w = self.w
        words = self.memory.words
        s, d = src // w, dst // w
        full, rest = divmod(nbits, w)
        if full:
            words[d:d + full] = words[s:s + full]
        if rest:
            m = np.uint64((1 << rest) - 1)
            words[d + full] = (words[d + full] & ~m) | (words[s + full] & m)

    def copy_many(self, srcs, dsts, nbits):
        """Sequence of copies, each charged like :meth:`copy`."""
        if len(srcs) <= 16 and np.ndim(nbits) == 0 and self.trace is None:
            return self._copy_few([int(x) for x in srcs], [int(x) for x in dsts], int(nbits))
        srcs = np.asarray(srcs, dtype=np.int64).reshape(-1)
        dsts = np.asarray(dsts, dtype=np.int64).reshape(-1)
        lens = np.broadcast_to(np.asarray(nbits, dtype=np.int64), srcs.shape).copy()
        n = srcs.size
        if n == 0:
            return
        w = self.w
        if np.any(srcs % w) or np.any(dsts % w):
            bad = int(srcs[srcs % w != 0][0]) if np.any(srcs % w) else int(dsts[dsts % w != 0][0])
            raise AlignmentError(f"bit address {bad} is not aligned to {w}-bit words")
        if np.any((srcs < dsts + lens) & (dsts < srcs + lens)):
            raise OverlapError("a copy in the batch has overlapping source and destination")
        # a batch equals the sequential copies when no destination is read or
        # written by another copy; sources may overlap freely
        fast = (not np.any(lens % w) and self.trace is None
                and not _self_overlap(dsts, dsts + lens)
                and (n == 1 or not _intervals_hit(srcs, srcs + lens, dsts, dsts + lens).any())
                and self._fast_ok(np.concatenate((srcs, dsts)), np.concatenate((srcs + lens, dsts + lens))))
        if not fast:
            for s, d, l in zip(srcs.tolist(), dsts.tolist(), lens.tolist()):
                self.copy(s, d, l)
            return
        nw = lens // w
        lo_s, lo_d = srcs // w, dsts // w
        self.memory.check(int(min(lo_s.min(), lo_d.min())), int(max((lo_s + nw).max(), (lo_d + nw).max())))
        total = int(nw.sum())
        if total:
            rep = np.repeat(np.arange(n), nw)
            within = np.arange(total) - np.repeat(np.cumsum(nw) - nw, nw)
            self.memory.words[lo_d[rep] + within] = self.memory.words[lo_s[rep] + within]
        self.copies += n
        self._charge(int((-(-lens // self.I)).sum()))

    def _copy_few(self, srcs, dsts, nbits):
        """copy_many for a handful of equal-length copies, without numpy overhead."""
        w = self.w
        n = len(srcs)
        if n == 0:
            return
        if nbits % w or n != len(dsts) or nbits < 0:
            for a, b in zip(srcs, dsts):
                self.copy(a, b, nbits)
            return
        for a in srcs + dsts:
            if a % w:
                raise AlignmentError(f"bit address {a} is not aligned to {w}-bit words")
        for a, b in zip(srcs, dsts):
            if a < b + nbits and b < a + nbits:
                raise OverlapError(f"copy ranges [{a}, {a + nbits}) and [{b}, {b + nbits}) overlap")
        for i, b in enumerate(dsts):
            for j in range(n):
                if j != i and (abs(dsts[j] - b) < nbits or abs(srcs[j] - b) < nbits):
                    for a, d in zip(srcs, dsts):  # batch is order dependent
                        self.copy(a, d, nbits)
                    return
        lo = min(min(srcs), min(dsts)) // w
        hi = (max(max(srcs), max(dsts)) + nbits) // w
        self.memory.check(lo, hi)
        if self._pending:
            qs = np.array(srcs + dsts, dtype=np.int64)
            if not self._fast_ok(qs, qs + nbits):
                for a, d in zip(srcs, dsts):
                    self.copy(a, d, nbits)
                return
        words = self.memory.words
        nw = nbits // w
        for a, d in zip(srcs, dsts):
            words[d // w:d // w + nw] = words[a // w:a // w + nw]
        self.copies += n
        self._charge(n * self.copy_cost(nbits))

    # -- RunCircuit ------------------------------------------------------------------------------
    def _circuit(self, i):
        if not self.table.frozen:
            raise PhaseError("RunCircuit before the circuit table was loaded")
        if not 0 <= i < len(self.table):
            raise CircuitIndexError(f"no circuit with index {i} (table has {len(self.table)})")
        return self.table[i]

    def run_circuit(self, i, s, t) -> InFlight:
        """Start circuit i on the bits at s; output lands at t after del(C_i) ticks."""
        c = self._circuit(i)
        s, t = int(s), int(t)
        self._check_aligned(s, t)
        self._check_bits(s, c.n_inputs)
        self._check_bits(t, c.n_outputs)
        self._touch(reads=((s, s + c.n_inputs),))
        self._log("run", circuit=i, src=s, dst=t)
        w = self.w
        first = s // w
        snap = self.memory.words[first:first + -(-c.n_inputs // w)].copy()
        ready = self.clock + c.depth
        entry = self._issue(i, self.clock, ready, t, c.n_outputs, snap)
        self._charge()
        return InFlight(i, entry.issue, t, c.n_outputs, ready)

    def run_circuit_many(self, i, srcs, dsts) -> np.ndarray:
        """Issue circuit i once per tick on each (src, dst); returns ready ticks."""
        c = self._circuit(i)
        srcs = np.asarray(srcs, dtype=np.int64).reshape(-1)
        dsts = np.asarray(dsts, dtype=np.int64).reshape(-1)
        n = srcs.size
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        w = self.w
        if np.any(srcs % w) or np.any(dsts % w):
            raise AlignmentError("RunCircuit addresses must be word aligned")
        niw = -(-c.n_inputs // w)
        inside = n > 1 and c.n_outputs and _intervals_hit(dsts, dsts + c.n_outputs, srcs, srcs + c.n_inputs).any()
        if self.trace is not None or inside or not self._fast_ok(srcs, srcs + c.n_inputs):
            return np.array([self.run_circuit(i, s, t).ready_tick
                             for s, t in zip(srcs.tolist(), dsts.tolist())], dtype=np.int64)
        self.memory.check(int(srcs.min()) // w, int(srcs.max()) // w + niw)
        self._check_bits(int(dsts.min()), 0)
        self._check_bits(int(dsts.max()), c.n_outputs)
        idx = (srcs // w)[:, None] + np.arange(niw)[None, :]
        snaps = self.memory.words[idx]
        depth = c.depth
        issue0 = self.clock
        readies = issue0 + np.arange(n, dtype=np.int64) + depth
        for j in range(n):
            self._issue(i, issue0 + j, int(readies[j]), int(dsts[j]), c.n_outputs, snaps[j])
        self._charge(n)
        return readies

    def _issue(self, cid, issue, ready, start, nbits, snap):
        end = start + nbits
        for other in self._pending.by_ready.get(ready, ()):
            if other.start < end and start < other.start + other.nbits:
                if self.config.strict_writes:
                    raise ConcurrentWriteError(
                        f"circuit {cid} output [{start}, {end}) and circuit {other.cid} output "
                        f"[{other.start}, {other.start + other.nbits}) both land at tick {ready}")
                self.concurrent_writes += 1
                lo, hi = max(start, other.start), min(end, other.start + other.nbits)
                self._conflicts.setdefault(ready, []).append((lo, hi))
        e = _Entry(self._seq, cid, issue, ready, start, nbits, snap)
        self._seq += 1
        self._pending.add(e)
        self._invocations[cid] += 1
        self._issue_ticks.append(issue)
        self._ready_ticks.append(ready)
        return e

    # -- materialisation ----------------------------------------------------------------------
    def _evaluate_pending(self):
        todo = [e for e in self._pending.unevaluated if e.result is None]
        self._pending.unevaluated = []
        by_cid = {}
        for e in todo:
            by_cid.setdefault(e.cid, []).append(e)
        w = self.w
        shifts = np.arange(w, dtype=np.uint64)
        weights = np.uint64(1) << shifts
        for cid, entries in by_cid.items():
            c = self.table[cid]
            snaps = np.stack([e.snap for e in entries])
            bits = ((snaps[:, :, None] >> shifts) & np.uint64(1)).astype(np.uint8)
            bits = bits.reshape(len(entries), -1)[:, : c.n_inputs]
            out = evaluate_batch(c, bits)
            nwo = -(-c.n_outputs // w)
            padded = np.zeros((len(entries), nwo * w), dtype=np.uint64)
            padded[:, : c.n_outputs] = out
            words = (padded.reshape(len(entries), nwo, w) * weights).sum(axis=2, dtype=np.uint64)
            for e, row in zip(entries, words):
                e.result = row

    def _apply_due(self, clock):
        due = self._pending.pop_due(clock)
        if not due:
            return
        if any(e.result is None for e in due):
            self._evaluate_pending()
        due.sort(key=lambda e: (e.ready, e.seq))
        w = self.w
        words = self.memory.words
        starts = np.fromiter((e.start for e in due), dtype=np.int64, count=len(due))
        nbits = np.fromiter((e.nbits for e in due), dtype=np.int64, count=len(due))
        wlo = starts // w
        whi = (starts + nbits + w - 1) // w
        conflict_ticks = [r for r in {e.ready for e in due} if r in self._conflicts]
        if not conflict_ticks and not _self_overlap(wlo, whi) and np.all(nbits % w == 0) and len(due) > 8:
            total = int((whi - wlo).sum())
            rep = np.repeat(np.arange(len(due)), whi - wlo)
            within = np.arange(total) - np.repeat(np.cumsum(whi - wlo) - (whi - wlo), whi - wlo)
            vals = np.concatenate([e.result for e in due])
            words[wlo[rep] + within] = vals
            return
        for k, e in enumerate(due):
            self._write_bits(e.start, e.nbits, e.result)
            last_of_tick = k + 1 == len(due) or due[k + 1].ready != e.ready
            if last_of_tick:
                # same-tick overlapping writes leave arbitrary bits behind
                for lo, hi in self._conflicts.pop(e.ready, ()):
                    noise = self._fill_rng.integers(0, 2, size=hi - lo, dtype=np.uint8)
                    self._write_raw_bits(lo, noise)

    def _write_bits(self, start, nbits, row):
        w = self.w
        d = start // w
        full, rest = divmod(nbits, w)
        words = self.memory.words
        if full:
            words[d:d + full] = row[:full]
        if rest:
            m = np.uint64((1 << rest) - 1)
            words[d + full] = (words[d + full] & ~m) | (row[full] & m)

    def _write_raw_bits(self, start, bits):
        w = self.w
        words = self.memory.words
        for off, b in enumerate(bits.tolist()):
            pos = start + off
            wi, bi = divmod(pos, w)
            m = np.uint64(1 << bi)
            words[wi] = (words[wi] | m) if b else (words[wi] & ~m)

    # -- waiting ----------------------------------------------------------------------------------------
    def wait_until(self, tick):
        tick = int(tick)
        if tick > self.clock:
            self._log("wait", until=tick)
            self.delay += tick - self.clock
            self.clock = tick
            self.wait_episodes += 1

    def wait(self, ticket: InFlight):
        self.wait_until(ticket.ready_tick)

    def wait_all(self):
        if self._pending:
            self.wait_until(max(e.ready for e in self._pending.entries.values()))

    def flush(self):
        """Apply every write that is due at the current tick (host-side, uncharged)."""
        self._apply_due(self.clock)

    @property
    def inflight(self):
        return sum(1 for e in self._pending.entries.values() if e.ready > self.clock)

    # -- reporting --------------------------------------------------------------------------------------
    def peak_inflight(self):
        if not self._issue_ticks:
            return 0
        issue = np.asarray(self._issue_ticks, dtype=np.int64)
        ready = np.asarray(self._ready_ticks, dtype=np.int64)
        # an entry is in flight on ticks issue .. ready-1
        events = np.concatenate((issue, ready))
        delta = np.concatenate((np.ones_like(issue), -np.ones_like(ready)))
        order = np.lexsort((delta, events))
        return int(np.cumsum(delta[order]).max())

    def report(self) -> CostReport:
        inv = {f"{i}:{c.name}": n for i, (c, n) in enumerate(zip(self.table.circuits, self._invocations))}
        return CostReport(time=self.time, delay=self.delay, invocations=inv, copies=self.copies,
                          peak_inflight=self.peak_inflight(), wait_episodes=self.wait_episodes,
                          stale_reads=self.stale_reads, concurrent_writes=self.concurrent_writes)

    def invocation_count(self, i=None):
        return sum(self._invocations) if i is None else self._invocations[i]
