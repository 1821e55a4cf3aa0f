"""Circuit kits: the fixed circuit table an algorithm needs, sized for a machine."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .. import builders as B
from ..circuit import Circuit
from ..errors import BudgetError, ParameterError
from ..machine import Machine, MachineConfig


class Kit:
    """Named circuits for one block size k, installable on a fresh machine."""

    def __init__(self, name, w, k, circuits: dict[str, Circuit], **params):
        self.name = name
        self.w = w
        self.k = k
        self.circuits = dict(circuits)
        self.params = params
        self.ids = {key: i for i, key in enumerate(self.circuits)}

    def __repr__(self):
        return f"Kit({self.name!r}, w={self.w}, k={self.k}, circuits={list(self.circuits)})"

    @property
    def gates(self):
        return sum(c.size for c in self.circuits.values())

    @property
    def io_nodes(self):
        return sum(c.io_nodes for c in self.circuits.values())

    def install(self, machine: Machine) -> Machine:
        if machine.w != self.w:
            raise ParameterError(f"kit built for w={self.w} but machine has w={machine.w}")
        machine.load_program(lambda G, I: list(self.circuits.values()))
        return machine

    def machine(self, config: MachineConfig | None = None, trace=None) -> Machine:
        config = config or MachineConfig(w=self.w)
        return self.install(Machine(config, trace=trace))

    def id(self, key):
        return self.ids[key]

    def circuit(self, key) -> Circuit:
        return self.circuits[key]


def fit_kit(name, family: Callable[[int], dict], config: MachineConfig, k=None, k_min=2, k_max=None, **params):
    """Kit for the largest power-of-two k whose family fits the budgets (or the given k)."""
    if k is None:
        k = B.choose_k(lambda kk: list(family(kk).values()), config.G, config.I, k_min=k_min, k_max=k_max)
    circuits = family(k)
    kit = Kit(name, config.w, k, circuits, **params)
    gates, io = B.table_totals(list(circuits.values()))
    if io > config.I:
        raise BudgetError("I", io, config.I)
    if gates > config.G:
        raise BudgetError("G", gates, config.G)
    return kit


def pack_mask(bits, w) -> np.ndarray:
    """Pack a 0/1 sequence into little-endian w-bit words."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    nw = -(-bits.size // w)
    padded = np.zeros(nw * w, dtype=np.uint64)
    padded[: bits.size] = bits
    weights = np.uint64(1) << np.arange(w, dtype=np.uint64)
    return (padded.reshape(nw, w) * weights).sum(axis=1, dtype=np.uint64)


def as_words(values, w) -> np.ndarray:
    arr = np.asarray(values, dtype=object).reshape(-1) if not isinstance(values, np.ndarray) else values.reshape(-1)
    out = np.zeros(arr.size, dtype=np.uint64)
    for i, v in enumerate(arr.tolist()):
        v = int(v)
        if v < 0 or v >= 1 << w:
            raise ParameterError(f"value {v} does not fit in a {w}-bit word")
        out[i] = v
    return out


def place(machine: Machine, values) -> int:
    """Host-side input placement (uncharged); returns the word address."""
    values = np.asarray(values, dtype=np.uint64)
    addr = machine.alloc(max(1, values.size))
    if values.size:
        machine.load_words(addr, values)
    return addr


def ram_extract_bits(machine: Machine, starts, lens, dst_words):
    """RAM-level bit field extraction: for each i, the lens[i] <= w bits at bit
    address starts[i] are written, right aligned and zero extended, to word
    dst_words[i].  Costs one or two reads, three ALU steps and one write each.
    """
    w = machine.w
    starts = np.asarray(starts, dtype=np.int64)
    lens = np.asarray(lens, dtype=np.int64)
    dst_words = np.asarray(dst_words, dtype=np.int64)
    if starts.size == 0:
        return
    lo = starts // w
    off = starts % w
    straddle = off + lens > w
    addrs = np.concatenate((lo, lo[straddle] + 1))
    vals = machine.read_many(addrs)
    low = vals[: lo.size]
    high = np.zeros(lo.size, dtype=np.uint64)
    high[straddle] = vals[lo.size:]
    out = low >> off.astype(np.uint64)
    sh = (w - off).astype(np.uint64)
    hi_part = np.where(straddle, high << np.minimum(sh, np.uint64(63)), np.uint64(0))
    out = out | hi_part
    mask = np.where(lens >= 64, np.uint64(2 ** 64 - 1), (np.uint64(1) << lens.astype(np.uint64)) - np.uint64(1))
    out = out & mask & machine.memory.mask
    machine.alu(3 * starts.size)
    machine.write_many(dst_words, out)
