"""Boolean circuits over the basis {AND, OR, NOT, ID} plus constant gates.

A :class:`Circuit` is an immutable DAG stored in flat numpy arrays.  Node ids
are dense integers: input ``x_i`` is node ``i`` and gate ``g_j`` is node
``n_inputs + j``.  Depth is measured in gate layers: inputs sit at depth 0,
a gate sits one layer above its deepest fan-in, and constant gates (no
fan-in) sit at depth 1.

Evaluation is bit-sliced: a batch of input vectors is packed into 64-bit
words so every gate is evaluated for 64 vectors per machine operation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputArityError, ParseError, ValidationError

AND, OR, NOT, ID, CONST0, CONST1 = range(6)
KIND_NAMES = ("AND", "OR", "NOT", "ID", "CONST0", "CONST1")
ARITY = np.array([2, 2, 1, 1, 0, 0], dtype=np.int8)
_KIND_BY_NAME = {name: i for i, name in enumerate(KIND_NAMES)}

# bytes of packed node values allowed per evaluation chunk
_EVAL_MEMORY = 1 << 26


@dataclass(frozen=True)
class Gate:
    id: int  # gate index j (node id is n_inputs + j)
    kind: str
    fanin: tuple  # node ids


@dataclass
class ValidationReport:
    is_acyclic: bool
    arity_errors: list
    is_synchronous: bool
    depth_by_node: np.ndarray | None  # node id -> depth; None when cyclic

    @property
    def ok(self):
        return self.is_acyclic and not self.arity_errors


class Circuit:
    """Immutable boolean circuit.

    Parameters
    ----------
    n_inputs : int
    kinds : array of gate kind codes, one per gate
    fanin : (size, 2) int array of node ids, ``-1`` in unused slots
    outputs : node ids of y_1..y_m, in order
    """

    __slots__ = ("n_inputs", "kinds", "fanin", "outputs", "name", "meta",
                 "_levels", "_plan", "_report")

    def __init__(self, n_inputs, kinds, fanin, outputs, name="circuit", meta=None):
        kinds = np.asarray(kinds, dtype=np.int8).reshape(-1)
        fanin = np.asarray(fanin, dtype=np.int64).reshape(-1, 2)
        outputs = np.asarray(outputs, dtype=np.int64).reshape(-1)
        if fanin.shape[0] != kinds.shape[0]:
            raise ValidationError("fanin table and kind table differ in length")
        if kinds.size and (kinds.min() < 0 or kinds.max() >= len(KIND_NAMES)):
            raise ValidationError("unknown gate kind")
        n_nodes = n_inputs + kinds.size
        if fanin.size and (fanin.min() < -1 or fanin.max() >= n_nodes):
            raise ValidationError("fan-in refers to a node that does not exist")
        if outputs.size and (outputs.min() < 0 or outputs.max() >= n_nodes):
            raise ValidationError("output refers to a node that does not exist")
        for arr in (kinds, fanin, outputs):
            arr.flags.writeable = False
        self.n_inputs = int(n_inputs)
        self.kinds = kinds
        self.fanin = fanin
        self.outputs = outputs
        self.name = name
        self.meta = dict(meta or {})
        self._levels = None
        self._plan = None
        self._report = None

    # -- basic measures -------------------------------------------------
    @property
    def size(self):
        return int(self.kinds.size)

    @property
    def n_outputs(self):
        return int(self.outputs.size)

    @property
    def n_nodes(self):
        return self.n_inputs + self.size

    @property
    def io_nodes(self):
        return self.n_inputs + self.n_outputs

    @property
    def levels(self):
        if self._levels is None:
            self._levels = _compute_levels(self)
            if self._levels is None:
                raise ValidationError(f"circuit {self.name!r} contains a cycle")
            self._levels.flags.writeable = False
        return self._levels

    @property
    def depth(self):
        if self.n_outputs == 0:
            return 0
        return int(self.levels[self.outputs].max())

    def gate(self, j) -> Gate:
        arity = ARITY[self.kinds[j]]
        return Gate(j, KIND_NAMES[self.kinds[j]], tuple(int(x) for x in self.fanin[j, :arity]))

    @property
    def gates(self):
        return [self.gate(j) for j in range(self.size)]

    def __repr__(self):
        return (f"Circuit({self.name!r}, inputs={self.n_inputs}, outputs={self.n_outputs}, "
                f"size={self.size})")

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return (self.n_inputs == other.n_inputs
                and np.array_equal(self.kinds, other.kinds)
                and np.array_equal(self.fanin, other.fanin)
                and np.array_equal(self.outputs, other.outputs))

    __hash__ = object.__hash__

    def renamed(self, name, **meta):
        c = Circuit(self.n_inputs, self.kinds, self.fanin, self.outputs, name, {**self.meta, **meta})
        c._levels, c._plan, c._report = self._levels, self._plan, self._report
        return c


def _arity_errors(c):
    used = (c.fanin >= 0).sum(axis=1)
    bad = np.nonzero(used != ARITY[c.kinds])[0]
    errs = []
    for j in bad.tolist():
        errs.append((j, f"g{j}: {KIND_NAMES[c.kinds[j]]} expects {ARITY[c.kinds[j]]} "
                        f"inputs, got {used[j]}"))
    # slot 0 empty with slot 1 filled is also malformed
    holes = np.nonzero((c.fanin[:, 0] < 0) & (c.fanin[:, 1] >= 0))[0]
    for j in holes.tolist():
        if j not in bad:
            errs.append((j, f"g{j}: fan-in slots out of order"))
    return errs


def _compute_levels(c):
    n = c.n_inputs
    levels = np.zeros(c.n_nodes, dtype=np.int64)
    if c.size == 0:
        return levels
    nodes = np.arange(n, c.n_nodes)
    in_order = bool(np.all(c.fanin < nodes[:, None]))
    fan = c.fanin.tolist()
    lv = levels.tolist()
    if in_order:
        for j, (a, b) in enumerate(fan):
            la = lv[a] if a >= 0 else 0
            lb = lv[b] if b >= 0 else 0
            lv[n + j] = (la if la > lb else lb) + 1
        return np.array(lv, dtype=np.int64)
    order = topological_order(c)
    if order is None:
        return None
    for node in order:
        a, b = fan[node - n]
        la = lv[a] if a >= 0 else 0
        lb = lv[b] if b >= 0 else 0
        lv[node] = (la if la > lb else lb) + 1
    return np.array(lv, dtype=np.int64)


def topological_order(c):
    """Gate node ids in a dependency-respecting order, or None if cyclic."""
    n = c.n_inputs
    fan = c.fanin.tolist()
    indeg = [0] * c.size
    users = [[] for _ in range(c.size)]
    for j, (a, b) in enumerate(fan):
        for src in (a, b):
            if src >= n:
                indeg[j] += 1
                users[src - n].append(j)
    stack = [j for j in range(c.size) if indeg[j] == 0]
    order = []
    while stack:
        j = stack.pop()
        order.append(n + j)
        for u in users[j]:
            indeg[u] -= 1
            if indeg[u] == 0:
                stack.append(u)
    if len(order) != c.size:
        return None
    return order


def validate(c: Circuit) -> ValidationReport:
    """Diagnose acyclicity, arity and synchronicity of ``c``."""
    if c._report is not None:
        return c._report
    errs = _arity_errors(c)
    levels = _compute_levels(c)
    if levels is None:
        rep = ValidationReport(False, errs, False, None)
    else:
        sync = True
        if c.size:
            gl = levels[c.n_inputs:]
            for slot in (0, 1):
                src = c.fanin[:, slot]
                has = src >= 0
                if np.any(levels[src[has]] != gl[has] - 1):
                    sync = False
        if sync and c.n_outputs:
            out_lv = levels[c.outputs]
            sync = bool(np.all(out_lv == out_lv[0]))
        rep = ValidationReport(True, errs, sync and not errs, levels)
    c._report = rep
    return rep


def require_synchronous(c: Circuit):
    rep = validate(c)
    if not rep.is_acyclic:
        raise ValidationError(f"circuit {c.name!r} is cyclic")
    if rep.arity_errors:
        raise ValidationError(f"circuit {c.name!r}: {rep.arity_errors[0][1]}")
    if not rep.is_synchronous:
        raise ValidationError(f"circuit {c.name!r} is not synchronous")


# -- evaluation ----------------------------------------------------------

def _plan(c):
    """Per-layer gather/scatter index arrays grouped by gate kind."""
    if c._plan is not None:
        return c._plan
    rep = validate(c)
    if not rep.ok:
        raise ValidationError(f"cannot evaluate malformed circuit {c.name!r}")
    levels = rep.depth_by_node
    n = c.n_inputs
    if c.size == 0:
        c._plan = []
        return c._plan
    gl = levels[n:]
    order = np.lexsort((c.kinds, gl))
    sorted_lv = gl[order]
    sorted_kind = c.kinds[order]
    plan = []
    # split into (level, kind) runs
    key = sorted_lv * 8 + sorted_kind
    cuts = np.nonzero(np.diff(key))[0] + 1
    starts = np.concatenate(([0], cuts))
    ends = np.concatenate((cuts, [order.size]))
    current_level, ops = None, []
    for s, e in zip(starts.tolist(), ends.tolist()):
        lv = int(sorted_lv[s])
        if lv != current_level:
            if ops:
                plan.append(ops)
            ops, current_level = [], lv
        idx = order[s:e]
        dst = idx + n
        ops.append((int(sorted_kind[s]), dst, c.fanin[idx, 0], c.fanin[idx, 1]))
    if ops:
        plan.append(ops)
    c._plan = plan
    return plan


def _pack_rows(bits):
    """(rows, batch) 0/1 array -> (rows, words) uint64, little-endian bit order."""
    rows, batch = bits.shape
    packed = np.packbits(bits.astype(np.uint8, copy=False), axis=1, bitorder="little")
    nbytes = -(-batch // 64) * 8
    if packed.shape[1] != nbytes:
        packed = np.pad(packed, ((0, 0), (0, nbytes - packed.shape[1])))
    return np.ascontiguousarray(packed).view(np.uint64)


def _unpack_rows(words, batch):
    bits = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")
    return bits[:, :batch]


def _eval_packed(c, packed_inputs):
    plan = _plan(c)
    nw = packed_inputs.shape[1]
    vals = np.empty((c.n_nodes, nw), dtype=np.uint64)
    vals[: c.n_inputs] = packed_inputs
    ones = np.uint64(0xFFFFFFFFFFFFFFFF)
    for ops in plan:
        for kind, dst, a, b in ops:
            if kind == AND:
                vals[dst] = vals[a] & vals[b]
            elif kind == OR:
                vals[dst] = vals[a] | vals[b]
            elif kind == NOT:
                vals[dst] = ~vals[a]
            elif kind == ID:
                vals[dst] = vals[a]
            elif kind == CONST0:
                vals[dst] = 0
            else:
                vals[dst] = ones
    return vals[c.outputs]


def evaluate_batch(c: Circuit, inputs) -> np.ndarray:
    """Evaluate ``c`` on each row of ``inputs`` (shape ``(batch, n_inputs)``).

    Returns a ``(batch, n_outputs)`` uint8 array.
    """
    x = np.asarray(inputs)
    if x.ndim != 2 or x.shape[1] != c.n_inputs:
        raise InputArityError(
            f"circuit {c.name!r} has {c.n_inputs} inputs, got shape {x.shape}")
    batch = x.shape[0]
    out = np.empty((batch, c.n_outputs), dtype=np.uint8)
    if batch == 0:
        return out
    per_word = max(1, _EVAL_MEMORY // (8 * max(c.n_nodes, 1)))
    step = 64 * per_word
    for lo in range(0, batch, step):
        hi = min(batch, lo + step)
        packed = _pack_rows(x[lo:hi].T)
        res = _eval_packed(c, packed)
        out[lo:hi] = _unpack_rows(res, hi - lo).T
    return out


def evaluate(c: Circuit, input_bits) -> np.ndarray:
    bits = np.asarray(input_bits, dtype=np.uint8).reshape(-1)
    if bits.size != c.n_inputs:
        raise InputArityError(f"circuit {c.name!r} has {c.n_inputs} inputs, got {bits.size}")
    return evaluate_batch(c, bits[None, :])[0]


# -- synchronization ---------------------------------------------------------

def synchronize(c: Circuit) -> Circuit:
    """Insert identity gates so every edge spans exactly one layer.

    Delay chains are shared per source node, so each node gets at most
    ``depth - level(node)`` extra ID gates.
    """
    rep = validate(c)
    if not rep.ok:
        raise ValidationError(f"cannot synchronize malformed circuit {c.name!r}")
    if rep.is_synchronous:
        return c
    levels = rep.depth_by_node.tolist()
    n = c.n_inputs
    depth = c.depth
    order = sorted(range(n, c.n_nodes), key=levels.__getitem__)
    fan = c.fanin.tolist()
    kinds = c.kinds.tolist()

    new_kind, new_a, new_b = [], [], []
    remap = list(range(n)) + [-1] * c.size  # old node -> new node
    chains = {}  # new node -> list of delayed copies, chains[v][i] sits at level(v)+i+1

    def emit(kind, a, b):
        new_kind.append(kind)
        new_a.append(a)
        new_b.append(b)
        return n + len(new_kind) - 1

    def delayed(old, target):
        base = remap[old]
        lv = levels[old]
        if target == lv:
            return base
        chain = chains.setdefault(base, [])
        while len(chain) < target - lv:
            prev = chain[-1] if chain else base
            chain.append(emit(ID, prev, -1))
        return chain[target - lv - 1]

    for node in order:
        j = node - n
        a, b = fan[j]
        want = levels[node] - 1
        na = delayed(a, want) if a >= 0 else -1
        nb = delayed(b, want) if b >= 0 else -1
        remap[node] = emit(kinds[j], na, nb)
    outs = [delayed(o, depth) for o in c.outputs.tolist()]
    fanin = np.stack([np.array(new_a, dtype=np.int64), np.array(new_b, dtype=np.int64)], axis=1) \
        if new_kind else np.zeros((0, 2), dtype=np.int64)
    return Circuit(n, new_kind, fanin, outs, c.name, c.meta)


# -- construction helper ------------------------------------------------------

class CircuitBuilder:
    """Mutable netlist under construction.

    References returned by the builder are plain ints: gates are ``>= 0``
    (gate index), inputs are ``~i`` (negative).  :meth:`build` renumbers
    them into the dense node-id space of :class:`Circuit`.
    """

    def __init__(self, name="circuit"):
        self.name = name
        self.n_inputs = 0
        self._kind = []
        self._a = []
        self._b = []
        self._consts = {}

    def inputs(self, count):
        first = self.n_inputs
        self.n_inputs += count
        return [~i for i in range(first, first + count)]

    def _gate(self, kind, a=0, b=0):
        self._kind.append(kind)
        self._a.append(a)
        self._b.append(b)
        return len(self._kind) - 1

    def AND(self, a, b):
        return self._gate(AND, a, b)

    def OR(self, a, b):
        return self._gate(OR, a, b)

    def NOT(self, a):
        return self._gate(NOT, a)

    def ID(self, a):
        return self._gate(ID, a)

    def const(self, value):
        """A shared constant gate."""
        kind = CONST1 if value else CONST0
        if kind not in self._consts:
            self._consts[kind] = self._gate(kind)
        return self._consts[kind]

    def fresh_const(self, value):
        return self._gate(CONST1 if value else CONST0)

    def instantiate(self, sub: Circuit, inputs: Sequence[int]) -> list:
        """Copy ``sub`` into this builder, wiring its inputs to ``inputs``."""
        if len(inputs) != sub.n_inputs:
            raise InputArityError(f"{sub.name}: expected {sub.n_inputs} inputs, got {len(inputs)}")
        offset = len(self._kind)
        n = sub.n_inputs
        in_arr = np.asarray(list(inputs), dtype=np.int64)
        if n == 0:
            in_arr = np.zeros(0, dtype=np.int64)

        def ref(nodes):
            nodes = np.asarray(nodes, dtype=np.int64)
            out = np.zeros_like(nodes)
            is_in = (nodes >= 0) & (nodes < n)
            out[is_in] = in_arr[nodes[is_in]]
            is_g = nodes >= n
            out[is_g] = nodes[is_g] - n + offset
            return out

        fa = sub.fanin
        self._kind.extend(sub.kinds.tolist())
        self._a.extend(ref(fa[:, 0]).tolist())
        self._b.extend(ref(fa[:, 1]).tolist())
        return ref(sub.outputs).tolist()

    @property
    def size(self):
        return len(self._kind)

    def build(self, outputs: Iterable[int], name=None, meta=None, sync=True) -> Circuit:
        n = self.n_inputs
        kinds = np.array(self._kind, dtype=np.int8)

        def node(refs):
            r = np.asarray(refs, dtype=np.int64)
            return np.where(r >= 0, r + n, ~r)

        if kinds.size:
            fanin = np.stack([node(self._a), node(self._b)], axis=1)
            ar = ARITY[kinds]
            fanin[ar < 2, 1] = -1
            fanin[ar < 1, 0] = -1
        else:
            fanin = np.zeros((0, 2), dtype=np.int64)
        outs = node(list(outputs)) if outputs else np.zeros(0, dtype=np.int64)
        c = Circuit(n, kinds, fanin, outs, name or self.name, meta)
        return synchronize(c) if sync else c


# -- netlist text format -----------------------------------------------------------

_HEADER = re.compile(r"^circuit\s+(\S+)\s+inputs=(\d+)\s+outputs=(\d+)$")
_GATE = re.compile(r"^g(\d+)\s*=\s*([A-Z0-9]+)\((.*)\)$")


def _ref_name(node, n):
    return f"x{node}" if node < n else f"g{node - n}"


def serialize(c: Circuit) -> str:
    rep = validate(c)
    if not rep.ok:
        raise ValidationError(f"cannot serialize malformed circuit {c.name!r}")
    n = c.n_inputs
    name = re.sub(r"\s+", "_", c.name) or "circuit"
    lines = [f"circuit {name} inputs={n} outputs={c.n_outputs}"]
    for key, value in c.meta.items():
        lines.append(f"# {key}: {value}")
    kinds = c.kinds.tolist()
    for j, (a, b) in enumerate(c.fanin.tolist()):
        args = ",".join(_ref_name(x, n) for x in (a, b) if x >= 0)
        lines.append(f"g{j} = {KIND_NAMES[kinds[j]]}({args})")
    lines.append("outputs: " + ",".join(_ref_name(o, n) for o in c.outputs.tolist()))
    return "\n".join(lines) + "\n"


def deserialize(text: str) -> Circuit:
    circuits = deserialize_many(text)
    if len(circuits) != 1:
        raise ParseError(f"expected one circuit, found {len(circuits)}")
    return circuits[0]


def deserialize_many(text: str) -> list:
    circuits = []
    state = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("circuit"):
            if state is not None:
                raise ParseError("missing 'outputs:' footer before next circuit", lineno)
            m = _HEADER.match(line)
            if not m:
                raise ParseError(f"bad header {line!r}", lineno)
            state = {"name": m.group(1), "n": int(m.group(2)), "m": int(m.group(3)),
                     "gates": {}, "header": lineno}
            continue
        if state is None:
            raise ParseError("content before 'circuit' header", lineno)
        if line.startswith("outputs:"):
            args = [s.strip() for s in line[len("outputs:"):].split(",") if s.strip()]
            circuits.append(_finish(state, args, lineno))
            state = None
            continue
        m = _GATE.match(line)
        if not m:
            raise ParseError(f"cannot parse gate line {line!r}", lineno)
        gid, kind_name, argtext = int(m.group(1)), m.group(2), m.group(3)
        if kind_name not in _KIND_BY_NAME:
            raise ParseError(f"unknown gate kind {kind_name}", lineno)
        if gid in state["gates"]:
            raise ParseError(f"g{gid} defined twice", lineno)
        args = [s.strip() for s in argtext.split(",") if s.strip()]
        kind = _KIND_BY_NAME[kind_name]
        if len(args) != ARITY[kind]:
            raise ParseError(f"{kind_name} takes {ARITY[kind]} arguments, got {len(args)}", lineno)
        state["gates"][gid] = (kind, args, lineno)
    if state is not None:
        raise ParseError("missing 'outputs:' footer", state["header"])
    return circuits


def _finish(state, out_args, lineno):
    n = state["n"]
    ids = sorted(state["gates"])
    dense = {gid: j for j, gid in enumerate(ids)}

    def resolve(arg, at):
        if re.fullmatch(r"x\d+", arg):
            i = int(arg[1:])
            if i >= n:
                raise ParseError(f"input {arg} out of range (circuit has {n} inputs)", at)
            return i
        if re.fullmatch(r"g\d+", arg):
            gid = int(arg[1:])
            if gid not in dense:
                raise ParseError(f"reference to undefined gate {arg}", at)
            return n + dense[gid]
        raise ParseError(f"bad node reference {arg!r}", at)

    kinds = np.zeros(len(ids), dtype=np.int8)
    fanin = -np.ones((len(ids), 2), dtype=np.int64)
    for gid in ids:
        kind, args, at = state["gates"][gid]
        j = dense[gid]
        kinds[j] = kind
        for slot, arg in enumerate(args):
            fanin[j, slot] = resolve(arg, at)
    outs = [resolve(a, lineno) for a in out_args]
    if len(outs) != state["m"]:
        raise ParseError(f"header declares {state['m']} outputs, footer lists {len(outs)}", lineno)
    c = Circuit(n, kinds, fanin, outs, state["name"])
    if not validate(c).is_acyclic:
        raise ParseError(f"circuit {state['name']} contains a cycle", state["header"])
    return c


# -- word encoding helpers ------------------------------------------------------------

def int_to_bits(value, width):
    """Little-endian bit vector of ``value`` (taken mod 2**width)."""
    return np.array([(int(value) >> i) & 1 for i in range(width)], dtype=np.uint8)


def words_to_bits(values, width):
    vals = np.asarray(values, dtype=np.uint64).reshape(-1)
    shifts = np.arange(width, dtype=np.uint64)
    return ((vals[:, None] >> shifts) & np.uint64(1)).astype(np.uint8).reshape(-1)


def bits_to_int(bits):
    out = 0
    for i, b in enumerate(np.asarray(bits).reshape(-1).tolist()):
        if b:
            out |= 1 << i
    return out


def bits_to_words(bits, width):
    b = np.asarray(bits, dtype=np.uint64).reshape(-1, width)
    weights = np.uint64(1) << np.arange(width, dtype=np.uint64)
    return (b * weights).sum(axis=1, dtype=np.uint64)
