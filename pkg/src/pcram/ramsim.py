"""A tiny memory-to-memory word-RAM, its interpreter, and a compiler that
unrolls t steps of a program into a layered synchronous circuit.

Program text: one instruction per line, ``OP arg1 arg2 [arg3]`` with decimal
operands (commas allowed), ``;`` starts a comment.  Optional directives
``.mem <m>`` and ``.word <w>`` fix the memory size and word width.

=========  ==========================================
SET a i    mem[a] = i
MOV a b    mem[a] = mem[b]
LOADI a b  mem[a] = mem[mem[b]]
STOREI a b mem[mem[a]] = mem[b]
ADD a b c  mem[a] = mem[b] + mem[c]  (also SUB AND OR XOR SHL SHR)
CMPLE a b c mem[a] = 1 if mem[b] <= mem[c] else 0
JMP l      ip = l
JZ a l     ip = l if mem[a] == 0
HALT       ip stays (a self jump)
=========  ==========================================

Arithmetic is mod 2**w and shift amounts are taken mod w.  An instruction
pointer past the end of the program behaves like HALT.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import builders as B
from .builders import (and_tree, const_word, or_tree, word_add, word_bitwise, word_eq,
                       word_inc, word_le, word_mux, word_shift, word_sub, word_xor)
from .circuit import Circuit, CircuitBuilder, bits_to_int, evaluate_batch, int_to_bits, validate
from .errors import ParameterError, ParseError, TrapError, ValidationError

ALU_OPS = ("ADD", "SUB", "AND", "OR", "XOR", "SHL", "SHR", "CMPLE")
ARGS = {"SET": 2, "MOV": 2, "LOADI": 2, "STOREI": 2, "JMP": 1, "JZ": 2, "HALT": 0,
        **{op: 3 for op in ALU_OPS}}
WRITES = ("SET", "MOV", "LOADI", "STOREI") + ALU_OPS


@dataclass(frozen=True)
class Instruction:
    op: str
    args: tuple = ()

    def __str__(self):
        return " ".join([self.op] + [str(a) for a in self.args])


@dataclass(frozen=True)
class RamProgram:
    instructions: tuple
    m: int
    w: int = 16

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        if not self.instructions:
            raise ValidationError("empty program")
        if self.m < 1:
            raise ValidationError("memory must have at least one word")
        if self.w < 2:
            raise ValidationError("word size must be >= 2")
        if len(self.instructions) >= 1 << self.w:
            raise ValidationError("program too long for the instruction pointer word")
        for pc, ins in enumerate(self.instructions):
            _check(ins, pc, self.m, self.w, len(self.instructions))

    def __len__(self):
        return len(self.instructions)

    def text(self):
        lines = [f".mem {self.m}", f".word {self.w}"]
        return "\n".join(lines + [str(i) for i in self.instructions]) + "\n"


def _check(ins: Instruction, pc, m, w, P):
    op, args = ins.op, ins.args
    if op not in ARGS:
        raise ValidationError(f"instruction {pc}: unknown opcode {op}")
    if len(args) != ARGS[op]:
        raise ValidationError(f"instruction {pc}: {op} takes {ARGS[op]} operands, got {len(args)}")
    if any(a < 0 for a in args):
        raise ValidationError(f"instruction {pc}: negative operand")
    if op == "SET":
        addrs, imm = args[:1], args[1]
        if imm >= 1 << w:
            raise ValidationError(f"instruction {pc}: immediate {imm} does not fit in {w} bits")
    elif op == "JMP":
        addrs = ()
    elif op == "JZ":
        addrs = args[:1]
    else:
        addrs = args
    for a in addrs:
        if a >= m:
            raise ValidationError(f"instruction {pc}: address {a} outside memory of {m} words")
    if op in ("JMP", "JZ") and args[-1] >= P:
        raise ValidationError(f"instruction {pc}: jump target {args[-1]} past the program end")


def parse_program(text, m=None, w=None) -> RamProgram:
    """Parse program text; ``m``/``w`` override the directives."""
    ins = []
    dm = dw = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        parts = [p for p in re.split(r"[,\s]+", line) if p]
        head = parts[0].upper()
        try:
            nums = [int(p) for p in parts[1:]]
        except ValueError:
            raise ParseError(f"operands must be decimal integers: {raw.strip()!r}", lineno) from None
        if head in (".MEM", ".WORD"):
            if len(nums) != 1:
                raise ParseError(f"{parts[0]} takes one value", lineno)
            if head == ".MEM":
                dm = nums[0]
            else:
                dw = nums[0]
            continue
        if head not in ARGS:
            raise ParseError(f"unknown opcode {parts[0]!r}", lineno)
        if len(nums) != ARGS[head]:
            raise ParseError(f"{head} takes {ARGS[head]} operands, got {len(nums)}", lineno)
        ins.append(Instruction(head, tuple(nums)))
    m = m if m is not None else dm
    w = w if w is not None else (dw if dw is not None else 16)
    if m is None:
        raise ParseError("memory size unknown: pass m or add a '.mem' directive")
    try:
        return RamProgram(tuple(ins), m, w)
    except ValidationError as e:
        raise ParseError(str(e)) from None


# -- reference interpreter ---------------------------------------------------------------

def step(p: RamProgram, mem: list, ip: int) -> int:
    """Execute one instruction in place; returns the next instruction pointer."""
    if ip >= len(p):
        return ip
    mask = (1 << p.w) - 1
    ins = p.instructions[ip]
    op, a = ins.op, ins.args
    m = p.m

    def at(addr):
        if addr >= m:
            raise TrapError(f"step at ip={ip}: indirect address {addr} outside memory of {m} words")
        return addr

    if op == "SET":
        mem[a[0]] = a[1]
    elif op == "MOV":
        mem[a[0]] = mem[a[1]]
    elif op == "LOADI":
        mem[a[0]] = mem[at(mem[a[1]])]
    elif op == "STOREI":
        mem[at(mem[a[0]])] = mem[a[1]]
    elif op in ALU_OPS:
        x, y = mem[a[1]], mem[a[2]]
        mem[a[0]] = {
            "ADD": lambda: (x + y) & mask,
            "SUB": lambda: (x - y) & mask,
            "AND": lambda: x & y,
            "OR": lambda: x | y,
            "XOR": lambda: x ^ y,
            "SHL": lambda: (x << (y % p.w)) & mask,
            "SHR": lambda: x >> (y % p.w),
            "CMPLE": lambda: int(x <= y),
        }[op]()
    elif op == "JMP":
        return a[0]
    elif op == "JZ":
        return a[1] if mem[a[0]] == 0 else ip + 1
    elif op == "HALT":
        return ip
    return ip + 1


def interpret(p: RamProgram, initial_memory, t, ip=0, return_ip=False):
    """Run exactly t steps (halted machines keep stepping in place)."""
    mem = [int(v) for v in initial_memory]
    if len(mem) != p.m:
        raise ParameterError(f"initial memory has {len(mem)} words, program expects {p.m}")
    mask = (1 << p.w) - 1
    if any(v < 0 or v > mask for v in mem):
        raise ParameterError(f"memory values must fit in {p.w} bits")
    for _ in range(t):
        ip = step(p, mem, ip)
    return (mem, ip) if return_ip else mem


# -- circuits ---------------------------------------------------------------------------------

class _AnchoredBuilder(CircuitBuilder):
    """Builder whose constants are derived from an input bit.

    Keeping constants at a fixed distance from the inputs makes stacked
    copies of a synchronous layer synchronous again without re-padding.
    """

    anchor = None

    def const(self, value):
        if self.anchor is None:
            return super().const(value)
        if not self._consts:
            zero = self.AND(self.anchor, self.NOT(self.anchor))
            self._consts[0] = zero
            self._consts[1] = self.NOT(zero)
        return self._consts[1 if value else 0]

    def fresh_const(self, value):
        return self.const(value)


def _read(bd, words, idx):
    """Multiplexer tree selecting ``words[idx mod len(words)]``."""
    cur = list(words)
    level = 0
    while len(cur) > 1:
        sel = idx[level]
        cur = [word_mux(bd, sel, cur[i], cur[i + 1]) for i in range(0, len(cur), 2)]
        level += 1
    return cur[0]


def _decode(bd, idx, m):
    bits = B.log2_exact(m)
    lits = [(idx[b], bd.NOT(idx[b])) for b in range(bits)]
    return [and_tree(bd, [lits[b][0] if (q >> b) & 1 else lits[b][1] for b in range(bits)])
            for q in range(m)]


def _write(bd, words, idx, value, enable=None):
    lines = _decode(bd, idx, len(words))
    out = []
    for q, word in enumerate(words):
        sel = lines[q] if enable is None else bd.AND(lines[q], enable)
        out.append(word_mux(bd, sel, word, value))
    return out


def _require_mem(m, w):
    if not B.is_pow2(m):
        raise ParameterError(f"memory size must be a power of two (pad it), got {m}")
    if w < max(1, B.log2_exact(m)):
        raise ParameterError(f"index word of {w} bits cannot address {m} words")


def mem_read_circuit(m, w) -> Circuit:
    """Inputs: m*w memory bits, then a w-bit index.  Output: word index mod m."""
    _require_mem(m, w)
    bd = CircuitBuilder(f"memread_m{m}_w{w}")
    words = B.split_words(bd.inputs(m * w), w)
    idx = bd.inputs(w)
    return bd.build(_read(bd, words, idx), meta={"m": m, "w": w})


def mem_write_circuit(m, w) -> Circuit:
    """Inputs: m*w memory bits, w-bit index, w-bit value.  Outputs: new memory."""
    _require_mem(m, w)
    bd = CircuitBuilder(f"memwrite_m{m}_w{w}")
    words = B.split_words(bd.inputs(m * w), w)
    idx = bd.inputs(w)
    value = bd.inputs(w)
    out = _write(bd, words, idx, value)
    return bd.build([b for word in out for b in word], meta={"m": m, "w": w})


def padded_size(m):
    return 1 << max(0, (m - 1).bit_length())


def compile_layer(p: RamProgram) -> Circuit:
    """One step of ``p`` over (memory padded to a power of two, ip)."""
    w = p.w
    if not B.is_pow2(w):
        raise ParameterError(f"the compiler needs a power-of-two word size, got {w}")
    mp = padded_size(p.m)
    _require_mem(mp, w)
    bd = _AnchoredBuilder(f"ramstep_m{mp}_w{w}")
    mem = B.split_words(bd.inputs(mp * w), w)
    ip = bd.inputs(w)
    bd.anchor = ip[0]
    P = len(p)
    sel = [word_eq(bd, ip, const_word(bd, pc, w)) for pc in range(P)]

    def field(values):
        """Constant-per-instruction word selected by the instruction pointer."""
        return [or_tree(bd, [sel[pc] for pc in range(P) if (values[pc] >> b) & 1]) for b in range(w)]

    ops = [ins.op for ins in p.instructions]
    opsel = {op: or_tree(bd, [sel[pc] for pc in range(P) if ops[pc] == op]) for op in ARGS}

    def arg(ins, i):
        return ins.args[i] if i < len(ins.args) else 0

    fa = field([arg(i, 0) for i in p.instructions])
    fb = field([arg(i, 1) for i in p.instructions])
    fc = field([arg(i, 2) for i in p.instructions])
    imm = fb  # SET keeps its immediate in the second operand
    target = field([i.args[-1] if i.op in ("JMP", "JZ") else 0 for i in p.instructions])

    va = _read(bd, mem, fa)
    vb = _read(bd, mem, fb)
    vc = _read(bd, mem, fc)
    vib = _read(bd, mem, vb)
    zero = const_word(bd, 0, w)
    values = {
        "SET": imm, "MOV": vb, "LOADI": vib, "STOREI": vb,
        "ADD": word_add(bd, vb, vc), "SUB": word_sub(bd, vb, vc),
        "AND": word_bitwise(bd, bd.AND, vb, vc), "OR": word_bitwise(bd, bd.OR, vb, vc),
        "XOR": word_xor(bd, vb, vc),
        "SHL": word_shift(bd, vb, vc, True), "SHR": word_shift(bd, vb, vc, False),
        "CMPLE": [word_le(bd, vb, vc)] + zero[1:],
    }
    value = [or_tree(bd, [bd.AND(opsel[op], values[op][b]) for op in WRITES]) for b in range(w)]
    waddr = word_mux(bd, opsel["STOREI"], fa, va)
    enable = or_tree(bd, [opsel[op] for op in WRITES])
    new_mem = _write(bd, mem, waddr, value, enable)

    jz_taken = bd.AND(opsel["JZ"], word_eq(bd, va, zero))
    jump = bd.OR(opsel["JMP"], jz_taken)
    hold = bd.OR(opsel["HALT"], bd.NOT(or_tree(bd, sel)))
    nxt = word_mux(bd, hold, word_mux(bd, jump, word_inc(bd, ip), target), ip)
    outs = [b for word in new_mem for b in word] + nxt
    return bd.build(outs, meta={"program_length": P, "m": mp, "w": w})


@dataclass(frozen=True)
class LayeredCircuit:
    circuit: Circuit
    layers: int
    layer_depth: int
    layer: Circuit
    m: int
    w: int

    def encode(self, memory, ip=0) -> np.ndarray:
        return encode_state(memory, ip, self.m, self.w)

    def decode(self, bits):
        return decode_state(bits, self.m, self.w)

    def run(self, memory, ip=0):
        """Evaluate on one initial memory; returns (memory, ip), padding dropped."""
        return self.run_batch([memory], [ip])[0]

    def run_batch(self, memories, ips=None):
        ips = [0] * len(memories) if ips is None else ips
        x = np.stack([self.encode(mem, ip) for mem, ip in zip(memories, ips)])
        out = evaluate_batch(self.circuit, x)
        res = []
        for mem, row in zip(memories, out):
            words, ip = self.decode(row)
            res.append((words[:len(mem)], ip))
        return res


def encode_state(memory, ip, m, w) -> np.ndarray:
    mem = list(memory) + [0] * (m - len(memory))
    return np.concatenate([int_to_bits(int(v), w) for v in mem] + [int_to_bits(int(ip), w)])


def decode_state(bits, m, w):
    bits = np.asarray(bits)
    mem = [bits_to_int(bits[i * w:(i + 1) * w]) for i in range(m)]
    return mem, bits_to_int(bits[m * w:(m + 1) * w])


def compile(p: RamProgram, t) -> LayeredCircuit:
    """t stacked copies of the one-step layer."""
    if t < 0:
        raise ParameterError("t must be >= 0")
    layer = compile_layer(p)
    mp, w = padded_size(p.m), p.w
    bd = CircuitBuilder(f"ram_t{t}_m{mp}_w{w}")
    state = bd.inputs(mp * w + w)
    for _ in range(t):
        state = bd.instantiate(layer, state)
    c = bd.build(state, meta={"layers": t, "layer_depth": layer.depth}, sync=False)
    if not validate(c).is_synchronous:
        raise ValidationError("stacked layers are not synchronous")
    return LayeredCircuit(c, t, layer.depth, layer, mp, w)


# sample programs used by the command line tool, the tests and the demos;
# each maps to (text, steps that reach HALT for every memory)
SAMPLE_PROGRAMS = {
    "sum": ("""\
.mem 8
.word 16
; mem[0] = mem[4] + ... + mem[7]
SET 0 0        ; acc
SET 1 4        ; ptr
SET 2 7        ; last
LOADI 3 1
ADD 0 0 3
CMPLE 3 2 1    ; done when last <= ptr
JZ 3 8
HALT
SET 3 1
ADD 1 1 3
JMP 3
""", 40),
    "max": ("""\
.mem 16
.word 16
; mem[0] = max(mem[8..15])
SET 0 0
SET 1 8
SET 2 15
LOADI 3 1
CMPLE 4 3 0
JZ 4 9         ; larger value found
CMPLE 4 2 1
JZ 4 11
HALT
MOV 0 3
JMP 6
SET 5 1
ADD 1 1 5
JMP 3
""", 90),
    "mix": ("""\
.mem 8
.word 8
SET 7 6
STOREI 7 0     ; mem[6] = mem[0]
SHL 1 1 2
SHR 2 3 4
XOR 3 3 0
SUB 4 4 5
AND 5 5 1
OR 0 0 4
JZ 0 10
SET 2 255
HALT
""", 12),
}


def sample_program(name) -> tuple:
    """(RamProgram, steps) for one of :data:`SAMPLE_PROGRAMS`."""
    text, steps = SAMPLE_PROGRAMS[name]
    return parse_program(text), steps
