"""Generators for the circuit families used by the PCRAM algorithms.

Every public builder returns a synchronous :class:`~pcram.circuit.Circuit`.
Words are little-endian bit vectors and multi-word inputs are concatenated in
index order.  All comparisons are unsigned.

The ``word_*`` helpers operate on lists of builder references and are shared
with :mod:`pcram.ramsim`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

from .circuit import Circuit, CircuitBuilder, validate
from .errors import BudgetError, ParameterError


@dataclass(frozen=True)
class ResourceBudget:
    G: int
    I: int

    def __post_init__(self):
        if not (self.G >= self.I >= 1):
            raise ParameterError(f"budget needs G >= I >= 1, got G={self.G}, I={self.I}")


@dataclass(frozen=True)
class BuilderParams:
    w: int = 1
    k: int = 2
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.w < 1:
            raise ParameterError("word size must be >= 1")


def is_pow2(k):
    return k >= 1 and (k & (k - 1)) == 0


def log2_exact(k):
    if not is_pow2(k):
        raise ParameterError(f"{k} is not a power of two")
    return k.bit_length() - 1


def _require_pow2(k, what="k", minimum=2):
    if not is_pow2(k) or k < minimum:
        raise ParameterError(f"{what} must be a power of two >= {minimum}, got {k}")


def _require_w(w):
    if w < 1:
        raise ParameterError(f"word size must be >= 1, got {w}")


# -- bit- and word-level logic on a builder -------------------------------------

def bit_xor(bd, a, b):
    return bd.AND(bd.OR(a, b), bd.NOT(bd.AND(a, b)))


def bit_xnor(bd, a, b):
    return bd.OR(bd.AND(a, b), bd.AND(bd.NOT(a), bd.NOT(b)))


def bit_mux(bd, sel, nsel, a, b):
    """``b`` when sel else ``a``; ``nsel`` must be the complement of ``sel``."""
    return bd.OR(bd.AND(nsel, a), bd.AND(sel, b))


def tree(bd, op, refs, empty):
    refs = list(refs)
    if not refs:
        return bd.const(empty)
    while len(refs) > 1:
        nxt = [op(refs[i], refs[i + 1]) for i in range(0, len(refs) - 1, 2)]
        if len(refs) % 2:
            nxt.append(refs[-1])
        refs = nxt
    return refs[0]


def and_tree(bd, refs):
    return tree(bd, bd.AND, refs, 1)


def or_tree(bd, refs):
    return tree(bd, bd.OR, refs, 0)


def word_eq(bd, a, b):
    return and_tree(bd, [bit_xnor(bd, x, y) for x, y in zip(a, b)])


def word_gt(bd, a, b):
    """1 iff unsigned a > b.  Depth O(log w)."""
    nodes = [(bd.AND(x, bd.NOT(y)), bit_xnor(bd, x, y)) for x, y in zip(a, b)]

    def combine(lo, hi):
        if hi - lo == 1:
            return nodes[lo]
        mid = (lo + hi) // 2
        gt_l, eq_l = combine(lo, mid)
        gt_h, eq_h = combine(mid, hi)
        return bd.OR(gt_h, bd.AND(eq_h, gt_l)), bd.AND(eq_h, eq_l)

    return combine(0, len(nodes))[0]


def word_le(bd, a, b):
    return bd.NOT(word_gt(bd, a, b))


def word_mux(bd, sel, a, b):
    """``b`` when sel else ``a``."""
    nsel = bd.NOT(sel)
    return [bit_mux(bd, sel, nsel, x, y) for x, y in zip(a, b)]


def word_max(bd, a, b):
    return word_mux(bd, word_gt(bd, b, a), a, b)


def word_min(bd, a, b):
    return word_mux(bd, word_gt(bd, a, b), a, b)


def word_not(bd, a):
    return [bd.NOT(x) for x in a]


def word_bitwise(bd, op, a, b):
    return [op(x, y) for x, y in zip(a, b)]


def word_xor(bd, a, b):
    return [bit_xor(bd, x, y) for x, y in zip(a, b)]


def word_add(bd, a, b, cin=None):
    """a + b (+ cin) mod 2**w with a Kogge-Stone carry network."""
    w = len(a)
    p = [bit_xor(bd, x, y) for x, y in zip(a, b)]
    g = [bd.AND(x, y) for x, y in zip(a, b)]
    if cin is not None:
        g[0] = bd.OR(g[0], bd.AND(p[0], cin))
    G, P = list(g), list(p)
    d = 1
    while d < w:
        nG, nP = list(G), list(P)
        for i in range(d, w):
            nG[i] = bd.OR(G[i], bd.AND(P[i], G[i - d]))
            nP[i] = bd.AND(P[i], P[i - d])
        G, P = nG, nP
        d *= 2
    out = [p[0] if cin is None else bit_xor(bd, p[0], cin)]
    for i in range(1, w):
        out.append(bit_xor(bd, p[i], G[i - 1]))
    return out


def word_inc(bd, a, cin=None):
    """a + 1 (or a + cin) mod 2**w; prefix-AND carry chain of depth O(log w)."""
    w = len(a)
    carry_in = bd.const(1) if cin is None else cin
    c = [carry_in] + list(a[:-1])
    # prefix AND: carry into bit i = cin & a_0 & ... & a_{i-1}
    pref = list(c)
    d = 1
    while d < w:
        nxt = list(pref)
        for i in range(d, w):
            nxt[i] = bd.AND(pref[i], pref[i - d])
        pref = nxt
        d *= 2
    return [bit_xor(bd, x, cy) for x, cy in zip(a, pref)]


def word_sub(bd, a, b):
    return word_add(bd, a, word_not(bd, b), cin=bd.const(1))


def word_shift(bd, a, amount, left):
    """Barrel shift of ``a`` by ``amount`` (a word) taken mod w; w a power of two."""
    w = len(a)
    cur = list(a)
    zero = bd.const(0)
    s = 0
    while (1 << s) < w:
        dist = 1 << s
        s += 1
        if left:
            shifted = [zero] * dist + cur[: w - dist]
        else:
            shifted = cur[dist:] + [zero] * dist
        cur = word_mux(bd, amount[s - 1], cur, shifted)
    return cur


def const_word(bd, value, w):
    return [bd.const((value >> i) & 1) for i in range(w)]


def split_words(refs, w):
    return [list(refs[i:i + w]) for i in range(0, len(refs), w)]


# -- copy circuits ----------------------------------------------------------------

@lru_cache(maxsize=None)
def copy_circuit(s):
    bd = CircuitBuilder(f"copy{s}")
    outs = [bd.ID(x) for x in bd.inputs(s)]
    return bd.build(outs, meta={"family": "copy", "s": s})


def copy_family(budget: ResourceBudget) -> list:
    """``[CP_1, CP_2, ..., CP_K]`` with K the largest power of two, 8K <= I."""
    if budget.I < 8:
        return []
    K = 1
    while 8 * (K * 2) <= budget.I:
        K *= 2
    return [copy_circuit(1 << i) for i in range(K.bit_length())]


# -- comparison and sorting ------------------------------------------------------------

@lru_cache(maxsize=None)
def comparator(w) -> Circuit:
    """Inputs (a, b), outputs (min(a, b), max(a, b))."""
    _require_w(w)
    bd = CircuitBuilder(f"comparator_w{w}")
    a, b = bd.inputs(w), bd.inputs(w)
    swap = word_gt(bd, a, b)
    lo = word_mux(bd, swap, a, b)
    hi = word_mux(bd, swap, b, a)
    return bd.build(lo + hi, meta={"family": "comparator", "w": w})


def bitonic_stages(k):
    """Comparator layers of the bitonic sorter: lists of (i, j, ascending)."""
    _require_pow2(k)
    stages = []
    size = 2
    while size <= k:
        stride = size // 2
        while stride >= 1:
            stage = []
            for i in range(k):
                j = i ^ stride
                if j > i:
                    stage.append((i, j, (i & size) == 0))
            stages.append(stage)
            stride //= 2
        size *= 2
    return stages


def bitonic_stage_count(k):
    p = log2_exact(k)
    return p * (p + 1) // 2


@lru_cache(maxsize=None)
def bitonic_sorter(k, w) -> Circuit:
    """Sorts k unsigned w-bit words ascending."""
    _require_pow2(k)
    _require_w(w)
    comp = comparator(w)
    bd = CircuitBuilder(f"bitonic_k{k}_w{w}")
    words = split_words(bd.inputs(k * w), w)
    stages = bitonic_stages(k)
    for stage in stages:
        nxt = list(words)
        for i, j, asc in stage:
            out = bd.instantiate(comp, words[i] + words[j])
            lo, hi = out[:w], out[w:]
            nxt[i], nxt[j] = (lo, hi) if asc else (hi, lo)
        words = nxt
    outs = [r for word in words for r in word]
    return bd.build(outs, meta={"family": "bitonic", "k": k, "w": w, "stages": len(stages),
                                "comparators": sum(len(s) for s in stages)})


@lru_cache(maxsize=None)
def _mask_comparator(w, descending):
    """Compare-exchange on (mask bit, payload word) pairs keyed by the mask bit."""
    bd = CircuitBuilder("mask_cmp")
    mi, mj = bd.inputs(1)[0], bd.inputs(1)[0]
    pi, pj = bd.inputs(w), bd.inputs(w)
    if descending:
        swap = bd.AND(bd.NOT(mi), mj)
        nswap = bd.OR(mi, bd.NOT(mj))
        mi2, mj2 = bd.OR(mi, mj), bd.AND(mi, mj)
    else:
        swap = bd.AND(mi, bd.NOT(mj))
        nswap = bd.OR(bd.NOT(mi), mj)
        mi2, mj2 = bd.AND(mi, mj), bd.OR(mi, mj)
    qi = [bit_mux(bd, swap, nswap, x, y) for x, y in zip(pi, pj)]
    qj = [bit_mux(bd, swap, nswap, y, x) for x, y in zip(pi, pj)]
    return bd.build([mi2, mj2] + qi + qj)


def count_width(k):
    """Bits needed to hold a count in 0..k."""
    return k.bit_length()


@lru_cache(maxsize=None)
def aggregator(k, w, count_bits=None) -> Circuit:
    """Block aggregation of k (payload, mask) pairs.

    Inputs: k payload words followed by k mask bits.
    Outputs: a ``count_bits``-wide count t of ones in the mask, then the k
    payload words permuted so every masked-in word precedes every masked-out
    word.  ``count_bits`` defaults to the minimum width that can hold k.
    """
    _require_pow2(k)
    _require_w(w)
    cb = count_width(k) if count_bits is None else count_bits
    if cb < count_width(k):
        raise ParameterError(f"count field of {cb} bits cannot hold values up to {k}")
    bd = CircuitBuilder(f"aggregator_k{k}_w{w}")
    payload = split_words(bd.inputs(k * w), w)
    mask = bd.inputs(k)
    cmps = {True: _mask_comparator(w, True), False: _mask_comparator(w, False)}
    for stage in bitonic_stages(k):
        nm, npay = list(mask), list(payload)
        for i, j, asc in stage:
            # ascending in the sorter's sense means descending mask here
            out = bd.instantiate(cmps[asc], [mask[i], mask[j]] + payload[i] + payload[j])
            nm[i], nm[j] = out[0], out[1]
            npay[i], npay[j] = out[2:2 + w], out[2 + w:]
        mask, payload = nm, npay
    last = [bd.AND(mask[j], bd.NOT(mask[j + 1])) for j in range(k - 1)] + [bd.ID(mask[k - 1])]
    count = []
    for bit in range(cb):
        terms = [last[j] for j in range(k) if ((j + 1) >> bit) & 1]
        count.append(or_tree(bd, terms) if terms else bd.fresh_const(0))
    outs = count + [r for word in payload for r in word]
    return bd.build(outs, meta={"family": "aggregator", "k": k, "w": w, "count_bits": cb})


@lru_cache(maxsize=None)
def mask_le(k, w) -> Circuit:
    """Inputs: pivot p then k words A.  Output bit i is [A[i] <= p]."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    _require_w(w)
    bd = CircuitBuilder(f"mask_le_k{k}_w{w}")
    p = bd.inputs(w)
    words = split_words(bd.inputs(k * w), w)
    outs = [word_le(bd, a, p) for a in words]
    return bd.build(outs, meta={"family": "mask_le", "k": k, "w": w})


# -- associative operations ---------------------------------------------------------

@lru_cache(maxsize=None)
def max_circuit(w) -> Circuit:
    _require_w(w)
    bd = CircuitBuilder(f"max_w{w}")
    a, b = bd.inputs(w), bd.inputs(w)
    return bd.build(word_max(bd, a, b), meta={"family": "op", "op": "max", "w": w})


@lru_cache(maxsize=None)
def add_circuit(w) -> Circuit:
    _require_w(w)
    bd = CircuitBuilder(f"add_w{w}")
    a, b = bd.inputs(w), bd.inputs(w)
    return bd.build(word_add(bd, a, b), meta={"family": "op", "op": "add", "w": w})


OPERATIONS = {
    "max": (max_circuit, lambda x, y, w: max(x, y), 0),
    "add": (add_circuit, lambda x, y, w: (x + y) % (1 << w), 0),
}


@lru_cache(maxsize=None)
def assoc_tree(c1: Circuit, j) -> Circuit:
    """Full binary tree of 2**j - 1 copies of the 2w -> w circuit ``c1``."""
    w = c1.n_outputs
    if w < 1 or c1.n_inputs != 2 * w:
        raise ParameterError(f"{c1.name}: expected 2w inputs and w outputs")
    if not validate(c1).is_synchronous:
        raise ParameterError(f"{c1.name} is not synchronous")
    if j < 0:
        raise ParameterError("j must be >= 0")
    if j == 1:
        return c1
    bd = CircuitBuilder(f"tree{j}_{c1.name}")
    words = split_words(bd.inputs((1 << j) * w), w)
    while len(words) > 1:
        words = [bd.instantiate(c1, words[i] + words[i + 1]) for i in range(0, len(words), 2)]
    return bd.build(words[0], meta={"family": "assoc_tree", "j": j, "op": c1.name})


@lru_cache(maxsize=None)
def const_block(e, j, w) -> Circuit:
    """No inputs; 2**j copies of the w-bit word e, one CONST gate per bit."""
    _require_w(w)
    bd = CircuitBuilder(f"const_e{e}_j{j}_w{w}")
    outs = [bd.fresh_const((e >> b) & 1) for _ in range(1 << j) for b in range(w)]
    return bd.build(outs, meta={"family": "const", "e": e, "j": j, "w": w})


# -- dynamic programming cells ---------------------------------------------------------

@lru_cache(maxsize=None)
def lcs_cell(w) -> Circuit:
    """Inputs diag, up, left, a_char, b_char; diag+1 on a match else max(up, left)."""
    _require_w(w)
    bd = CircuitBuilder(f"lcs_cell_w{w}")
    diag, up, left, ca, cb = (bd.inputs(w) for _ in range(5))
    match = word_eq(bd, ca, cb)
    out = word_mux(bd, match, word_max(bd, up, left), word_inc(bd, diag))
    return bd.build(out, meta={"family": "dp_cell", "cell": "lcs", "w": w, "d": 3, "aux_words": 2})


@lru_cache(maxsize=None)
def edit_cell(w) -> Circuit:
    """Inputs diag, up, left, a_char, b_char; min(diag + [a != b], up + 1, left + 1)."""
    _require_w(w)
    bd = CircuitBuilder(f"edit_cell_w{w}")
    diag, up, left, ca, cb = (bd.inputs(w) for _ in range(5))
    differ = bd.NOT(word_eq(bd, ca, cb))
    sub = word_inc(bd, diag, cin=differ)
    out = word_min(bd, sub, word_min(bd, word_inc(bd, up), word_inc(bd, left)))
    return bd.build(out, meta={"family": "dp_cell", "cell": "edit", "w": w, "d": 3, "aux_words": 2})


@lru_cache(maxsize=None)
def dp_cell_block(cell: Circuit, k, d, aux_bits) -> Circuit:
    """k copies of ``cell`` side by side, with field-major inputs.

    The block input is d dependency fields followed by ``aux_bits // w`` static
    fields, each field holding k words (word i belongs to cell i).  This is the
    layout a gather of contiguous antidiagonal runs produces.
    """
    w = cell.n_outputs
    if k < 1 or d < 0 or w < 1:
        raise ParameterError("dp_cell_block needs k >= 1, d >= 0 and a cell with outputs")
    if aux_bits % w:
        raise ParameterError(f"aux_bits={aux_bits} is not a multiple of the word size {w}")
    nfields = d + aux_bits // w
    if cell.n_inputs != nfields * w:
        raise ParameterError(
            f"{cell.name} has {cell.n_inputs} inputs, expected d*w + aux_bits = {nfields * w}")
    if not validate(cell).is_synchronous:
        raise ParameterError(f"{cell.name} is not synchronous")
    bd = CircuitBuilder(f"dpblock_k{k}_{cell.name}")
    fields = [split_words(bd.inputs(k * w), w) for _ in range(nfields)]
    outs = []
    for i in range(k):
        outs += bd.instantiate(cell, [r for f in fields for r in f[i]])
    return bd.build(outs, meta={"family": "dp_block", "k": k, "d": d, "w": w,
                                "cell": cell.name, "aux_bits": aux_bits})


# -- recursion support ----------------------------------------------------------------

def selector_bits(n):
    return (n - 1).bit_length() if n > 1 else 0


def decode_selector(value, n):
    """Length n' selected by a selector value; 0 wraps to 2**bits."""
    bits = selector_bits(n)
    return value if value >= 1 else (1 << bits)


def totally_computing(subcircuits: Sequence[Circuit], n=None) -> Circuit:
    """Circuit computing f_{n'} on the first n' data bits for every n' <= n.

    Inputs: ``ceil(log2 n)`` selector bits (little-endian), then n data bits.
    A selector value of 0 stands for 2**bits, so n' = n is reachable when n
    is a power of two.  Subcircuit i (1-based) must take i inputs and produce
    at most n outputs; unused outputs, and every output for an out-of-range
    selector, are 0.
    """
    n = len(subcircuits) if n is None else n
    if n < 1 or len(subcircuits) != n:
        raise ParameterError("need exactly n >= 1 subcircuits")
    for i, sub in enumerate(subcircuits, start=1):
        if sub.n_inputs != i or sub.n_outputs > n:
            raise ParameterError(f"subcircuit {i} must have {i} inputs and <= {n} outputs")
    sb = selector_bits(n)
    bd = CircuitBuilder(f"total_n{n}")
    sel = bd.inputs(sb)
    data = bd.inputs(n)
    nsel = [bd.NOT(s) for s in sel]
    outs_by_len = {}
    for v in range(1 << sb):
        length = decode_selector(v, n)
        if length > n:
            continue
        lits = [sel[b] if (v >> b) & 1 else nsel[b] for b in range(sb)]
        line = and_tree(bd, lits) if lits else bd.const(1)
        outs_by_len[length] = (line, bd.instantiate(subcircuits[length - 1], data[:length]))
    outs = []
    for o in range(n):
        terms = [bd.AND(line, res[o]) for line, res in outs_by_len.values() if o < len(res)]
        outs.append(or_tree(bd, terms) if terms else bd.fresh_const(0))
    return bd.build(outs, meta={"family": "totally_computing", "n": n})


@lru_cache(maxsize=None)
def multiplier(b) -> Circuit:
    """Unsigned b x b -> 2b bit product: AND array, Wallace reduction, prefix adder."""
    if b < 1:
        raise ParameterError("operand width must be >= 1")
    bd = CircuitBuilder(f"mul_b{b}")
    x, y = bd.inputs(b), bd.inputs(b)
    width = 2 * b
    cols = [[] for _ in range(width + 1)]
    for i in range(b):
        for j in range(b):
            cols[i + j].append(bd.AND(x[i], y[j]))
    while any(len(c) > 2 for c in cols):
        nxt = [[] for _ in range(width + 1)]
        for ci, col in enumerate(cols):
            i = 0
            while len(col) - i >= 3:
                a, bb, c = col[i:i + 3]
                t = bit_xor(bd, a, bb)
                nxt[ci].append(bit_xor(bd, t, c))
                if ci + 1 <= width:
                    nxt[ci + 1].append(bd.OR(bd.AND(a, bb), bd.AND(c, t)))
                i += 3
            if len(col) - i == 2 and len(col) > 2:
                a, bb = col[i:i + 2]
                nxt[ci].append(bit_xor(bd, a, bb))
                if ci + 1 <= width:
                    nxt[ci + 1].append(bd.AND(a, bb))
                i += 2
            nxt[ci].extend(col[i:])
        cols = nxt
    zero = bd.const(0)
    row0 = [c[0] if len(c) > 0 else zero for c in cols[:width]]
    row1 = [c[1] if len(c) > 1 else zero for c in cols[:width]]
    out = word_add(bd, row0, row1)
    return bd.build(out, meta={"family": "multiplier", "b": b})


# -- budget fitting ------------------------------------------------------------------

def table_totals(circuits):
    return sum(c.size for c in circuits), sum(c.io_nodes for c in circuits)


def fits(circuits, G, I):
    gates, io = table_totals(circuits)
    return gates <= G and io <= I


def choose_k(family: Callable[[int], list], G, I, k_min=2, k_max=None):
    """Largest power of two k >= k_min whose circuit family fits in (G, I).

    The family is constructed and measured for k = k_min, 2 k_min, ... until
    it no longer fits.
    """
    k = k_min
    circuits = family(k)
    if not fits(circuits, G, I):
        gates, io = table_totals(circuits)
        resource, used, limit = ("I", io, I) if io > I else ("G", gates, G)
        raise BudgetError(resource, used, limit)
    while k_max is None or 2 * k <= k_max:
        nxt = family(2 * k)
        if not fits(nxt, G, I):
            break
        k *= 2
    return k


def ceil_log2(n):
    return max(0, math.ceil(math.log2(n))) if n > 1 else 0
