"""Grid dynamic programs with constant upper-left dependencies.

Cells are stored antidiagonal by antidiagonal, each antidiagonal ordered by
row.  For a run of consecutive cells on one antidiagonal, every dependency
offset maps to a contiguous run on an earlier antidiagonal, so a chunk of k
cells is gathered with one Copy per dependency (plus one per static
per-row/per-column field) and evaluated by one call of the k-cell block
circuit.  Waits happen only when a gather needs outputs still in flight,
which in practice means the short antidiagonals near the grid corners.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .. import builders as B
from ..circuit import Circuit, evaluate
from ..circuit import bits_to_int, int_to_bits
from ..errors import ParameterError, SpecError
from ..machine import Machine, MachineConfig
from .common import Kit, fit_kit, place


@dataclass(frozen=True)
class AuxField:
    """Static per-row or per-column input: cell (i, j) sees values[i - offset]
    (axis "row") or values[j - offset] (axis "col")."""
    axis: str
    values: tuple
    offset: int = 0

    def __post_init__(self):
        if self.axis not in ("row", "col"):
            raise SpecError(f"aux axis must be 'row' or 'col', got {self.axis!r}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))


@dataclass
class DpSpec:
    offsets: tuple
    cell: Circuit
    base: Callable[[int, int], int]
    dims: tuple
    aux: Sequence[AuxField] = field(default_factory=tuple)
    name: str = "dp"

    def __post_init__(self):
        self.offsets = tuple((int(a), int(b)) for a, b in self.offsets)
        self.aux = tuple(self.aux)
        self.dims = (int(self.dims[0]), int(self.dims[1]))
        if not self.offsets:
            raise SpecError("at least one dependency offset is required")
        for a, b in self.offsets:
            if a < 0 or b < 0 or (a, b) == (0, 0):
                raise SpecError(f"offset {(a, b)} does not point strictly up-left")
        if len(set(self.offsets)) != len(self.offsets):
            raise SpecError("duplicate dependency offsets")
        if self.dims[0] < 1 or self.dims[1] < 1:
            raise SpecError(f"grid dimensions must be positive, got {self.dims}")
        w = self.cell.n_outputs
        want = (self.d + len(self.aux)) * w
        if self.cell.n_inputs != want:
            raise SpecError(f"cell circuit has {self.cell.n_inputs} inputs, expected {want}")

    @property
    def d(self):
        return len(self.offsets)

    @property
    def w(self):
        return self.cell.n_outputs

    @property
    def reach(self):
        return max(a for a, _ in self.offsets), max(b for _, b in self.offsets)

    def is_base(self, i, j):
        ra, rb = self.reach
        return i < ra or j < rb

    def aux_value(self, f: AuxField, i, j):
        idx = (i if f.axis == "row" else j) - f.offset
        if not 0 <= idx < len(f.values):
            raise SpecError(f"aux field has no value for cell {(i, j)}")
        return f.values[idx]


def _char_fields(a, b, w):
    codes_a = [ord(c) if isinstance(c, str) else int(c) for c in a]
    codes_b = [ord(c) if isinstance(c, str) else int(c) for c in b]
    if any(x >= 1 << w for x in codes_a + codes_b):
        raise ParameterError(f"symbols do not fit in {w}-bit words")
    return AuxField("row", codes_a, 1), AuxField("col", codes_b, 1)


LCS_OFFSETS = ((1, 1), (1, 0), (0, 1))


def lcs_spec(a, b, w=32) -> DpSpec:
    return DpSpec(LCS_OFFSETS, B.lcs_cell(w), lambda i, j: 0, (len(a) + 1, len(b) + 1),
                  _char_fields(a, b, w), name="lcs")


def edit_spec(a, b, w=32) -> DpSpec:
    return DpSpec(LCS_OFFSETS, B.edit_cell(w), lambda i, j: (i + j) % (1 << w),
                  (len(a) + 1, len(b) + 1), _char_fields(a, b, w), name="edit")


def dp_family(cell: Circuit, d, naux):
    w = cell.n_outputs

    def family(k):
        return {"cells": B.dp_cell_block(cell, k, d, naux * w)}
    return family


def dp_kit(spec: DpSpec, config: MachineConfig | None = None, k=None) -> Kit:
    config = config or MachineConfig(w=spec.w)
    if config.w != spec.w:
        raise ParameterError(f"cell circuit is for w={spec.w}, machine has w={config.w}")
    return fit_kit("dp", dp_family(spec.cell, spec.d, len(spec.aux)), config, k=k,
                   cell=spec.cell, d=spec.d, naux=len(spec.aux))


class _Layout:
    def __init__(self, R, C):
        self.R, self.C = R, C
        s = np.arange(R + C - 1)
        self.imin = np.maximum(0, s - (C - 1))
        self.imax = np.minimum(s, R - 1)
        self.length = self.imax - self.imin + 1
        self.start = np.concatenate(([0], np.cumsum(self.length)[:-1]))
        self.total = int(self.length.sum())

    def index(self, i, j):
        s = i + j
        return self.start[s] + i - self.imin[s]


def dp_solve(machine: Machine, kit: Kit, spec: DpSpec):
    """Fill the whole grid; returns (grid as an R x C array, last cell)."""
    w, k = machine.w, kit.k
    if kit.params.get("d") != spec.d or kit.params.get("naux") != len(spec.aux):
        raise SpecError("kit was built for a different dependency pattern")
    if kit.params.get("cell") != spec.cell:
        raise SpecError("kit was built for a different cell circuit")
    R, C = spec.dims
    lay = _Layout(R, C)
    ra, rb = spec.reach
    D = machine.alloc(lay.total)

    # static fields; column fields reversed so they run with the row index
    aux_addr = []
    for f in spec.aux:
        vals = np.array(f.values, dtype=np.uint64)
        aux_addr.append(place(machine, vals if f.axis == "row" else vals[::-1]))

    # base cells
    bi, bj = [], []
    for i in range(R):
        for j in range(C):
            if i >= ra and j >= rb:
                break
            bi.append(i)
            bj.append(j)
    bi, bj = np.array(bi, dtype=np.int64), np.array(bj, dtype=np.int64)
    if bi.size:
        vals = np.array([spec.base(int(i), int(j)) % (1 << w) for i, j in zip(bi, bj)], dtype=np.uint64)
        machine.alu(bi.size)
        machine.write_many(D + lay.index(bi, bj), vals)

    F = spec.d + len(spec.aux)
    nslots = -(-int(lay.length.max()) // k) + 1
    staging = [machine.alloc(nslots * F * k), machine.alloc(nslots * F * k)]
    overflow = machine.alloc(k)
    cid = kit.id("cells")
    ready = [np.zeros(int(L), dtype=np.int64) for L in lay.length]
    pending_overflow = None  # (ready tick, dst word, len, diagonal, first index)

    for s in range(ra + rb, R + C - 1):
        if pending_overflow is not None:
            t, dst, ln, ps, px = pending_overflow
            machine.wait_until(t)
            machine.copy(overflow * w, dst * w, ln * w)
            ready[ps][px:px + ln] = 0
            pending_overflow = None
        lo = max(ra, s - (C - 1))
        hi = min(R - 1, s - rb)
        if hi < lo:
            continue
        L = hi - lo + 1
        firsts = list(range(lo, hi + 1, k))
        if L >= k and firsts[-1] + k - 1 > hi:
            firsts[-1] = hi - k + 1  # recompute a few cells instead of padding
        stage = staging[s & 1]
        for c, f0 in enumerate(firsts):
            n = min(k, hi - f0 + 1)
            slot = stage + c * F * k
            need = 0
            srcs = []
            for a, b in spec.offsets:
                sp = s - a - b
                x = f0 - a - lay.imin[sp]
                need = max(need, int(ready[sp][x:x + n].max()))
                srcs.append(D + lay.start[sp] + x)
            for fld, addr in zip(spec.aux, aux_addr):
                if fld.axis == "row":
                    srcs.append(addr + f0 - fld.offset)
                else:
                    # reversed column field: j = s - i runs downwards
                    srcs.append(addr + len(fld.values) - 1 - (s - f0 - fld.offset))
            machine.wait_until(need)
            machine.alu(1)
            machine.copy_many(np.array(srcs, dtype=np.int64) * w, (slot + np.arange(F) * k) * w, n * w)
            x0 = f0 - lay.imin[s]
            target = D + lay.start[s] + x0
            if n == k:
                r = machine.run_circuit(cid, slot * w, int(target) * w).ready_tick
                ready[s][x0:x0 + k] = r
            else:
                r = machine.run_circuit(cid, slot * w, overflow * w).ready_tick
                ready[s][x0:x0 + n] = r
                pending_overflow = (r, int(target), n, s, x0)
    if pending_overflow is not None:
        t, dst, ln, ps, px = pending_overflow
        machine.wait_until(t)
        machine.copy(overflow * w, dst * w, ln * w)
    machine.wait_all()
    flat = machine.peek_words(D, lay.total)
    ii, jj = np.meshgrid(np.arange(R), np.arange(C), indexing="ij")
    grid = flat[lay.index(ii, jj)]
    return grid, int(grid[R - 1, C - 1])


def dp_reference(spec: DpSpec) -> np.ndarray:
    """Cell-by-cell evaluation of the recurrence with the scalar cell circuit."""
    R, C = spec.dims
    w = spec.w
    g = np.zeros((R, C), dtype=np.uint64)
    for i in range(R):
        for j in range(C):
            if spec.is_base(i, j):
                g[i, j] = spec.base(i, j) % (1 << w)
                continue
            words = [int(g[i - a, j - b]) for a, b in spec.offsets]
            words += [spec.aux_value(f, i, j) for f in spec.aux]
            bits = np.concatenate([int_to_bits(v, w) for v in words])
            g[i, j] = bits_to_int(evaluate(spec.cell, bits))
    return g


def lcs_oracle(a, b) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def edit_oracle(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (x != y), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]
