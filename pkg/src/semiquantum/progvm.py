"""Deterministic, serializable programs evaluated by the classical oracle.

Bytecode programs run on a tiny stack VM over byte values; every program
is total (a hard instruction budget turns runaway code into an error) and
has one canonical binary encoding.  A closed set of native program kinds
covers the stateful applications that need PRF calls the bytecode does not
expose: a two-secret reveal-once memory and a PRF-token-gated circuit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

from .crypt import prf
from .errors import MalformedProgram, StepBudgetExceeded

PROGRAM_VERSION = 1
KIND_BYTECODE = 1
KIND_OTM = 2
KIND_COPYPROT = 3
KIND_NULL = 4

DEFAULT_STEP_BUDGET = 1_000_000

# opcode -> (mnemonic, operand width in bytes)
OPCODES = {
    0x00: ("halt", 0),
    0x01: ("push", 1),
    0x02: ("pop", 0),
    0x03: ("dup", 0),
    0x04: ("swap", 0),
    0x10: ("load_input", 2),
    0x11: ("load_ram", 2),
    0x12: ("store_ram", 2),
    0x20: ("and", 0),
    0x21: ("or", 0),
    0x22: ("xor", 0),
    0x23: ("not", 0),
    0x24: ("add8", 0),
    0x25: ("cmp", 0),
    0x30: ("jump_if", 2),
    0x31: ("jump", 2),
    0x40: ("emit_bit", 0),
}
MNEMONICS = {name: (op, width) for op, (name, width) in OPCODES.items()}

Bits = tuple[int, ...]


def bits_from_str(s: str) -> Bits:
    return tuple(1 if c == "1" else 0 for c in s)


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


def bytes_to_bits(data: bytes) -> Bits:
    """MSB-first bit expansion of a byte string."""
    out = []
    for byte in data:
        out.extend((byte >> (7 - j)) & 1 for j in range(8))
    return tuple(out)


def bits_to_bytes(bits) -> bytes:
    if len(bits) % 8:
        raise ValueError("bit count not a multiple of 8")
    out = bytearray()
    for i in range(0, len(bits), 8):
        byte = 0
        for b in bits[i:i + 8]:
            byte = (byte << 1) | (b & 1)
        out.append(byte)
    return bytes(out)


def asm(instructions) -> bytes:
    """Assemble [(mnemonic, operand?), ...] with string labels for jumps."""
    labels: dict[str, int] = {}
    pc = 0
    for ins in instructions:
        name = ins[0]
        if name == "label":
            labels[ins[1]] = pc
            continue
        _, width = MNEMONICS[name]
        pc += 1 + width
    code = bytearray()
    for ins in instructions:
        name = ins[0]
        if name == "label":
            continue
        op, width = MNEMONICS[name]
        code.append(op)
        if width == 1:
            code.append(ins[1] & 0xFF)
        elif width == 2:
            arg = ins[1]
            if isinstance(arg, str):
                arg = labels[arg]
            code += struct.pack("<H", arg)
    return bytes(code)


def _instruction_starts(code: bytes) -> set[int]:
    starts = set()
    pc = 0
    while pc < len(code):
        starts.add(pc)
        op = code[pc]
        if op not in OPCODES:
            raise MalformedProgram(f"unknown opcode 0x{op:02x} at {pc}")
        pc += 1 + OPCODES[op][1]
    if pc != len(code):
        raise MalformedProgram("truncated operand at end of code")
    starts.add(len(code))
    return starts


def validate_bytecode(code: bytes, n_input_bits: int, ram_schema: int) -> None:
    """Static checks: opcode set, operand ranges, jump targets on boundaries.

    Cached: the oracle re-decodes the same program on every chain round.
    """
    _validate_bytecode_cached(code, n_input_bits, ram_schema)


@lru_cache(maxsize=4096)
def _validate_bytecode_cached(code: bytes, n_input_bits: int, ram_schema: int) -> None:
    starts = _instruction_starts(code)
    pc = 0
    while pc < len(code):
        op = code[pc]
        name, width = OPCODES[op]
        arg = struct.unpack_from("<H", code, pc + 1)[0] if width == 2 else None
        if name == "load_input" and arg >= n_input_bits:
            raise MalformedProgram("input index out of range")
        if name in ("load_ram", "store_ram") and arg >= ram_schema:
            raise MalformedProgram("ram address out of range")
        if name in ("jump_if", "jump") and arg not in starts:
            raise MalformedProgram("jump target not on an instruction boundary")
        pc += 1 + width


@dataclass(frozen=True)
class Program:
    """Common surface of every oracle-evaluable program."""

    n_input_bits: int
    m_output_bits: int
    ram_schema: int

    kind = 0
    aux_len = 0  # extra unsigned byte input consumed by native kinds

    def run(self, ram: bytes, input_bits, aux: bytes, budget: int):
        raise NotImplementedError


@dataclass(frozen=True)
class BytecodeProgram(Program):
    code: bytes = b""

    kind = KIND_BYTECODE

    def __post_init__(self):
        validate_bytecode(self.code, self.n_input_bits, self.ram_schema)

    def run(self, ram: bytes, input_bits, aux: bytes, budget: int):
        mem = bytearray(ram)
        stack: list[int] = []
        out: list[int] = []
        code = self.code
        pc = 0
        steps = 0
        try:
            while pc < len(code):
                steps += 1
                if steps > budget:
                    raise StepBudgetExceeded(f"exceeded {budget} steps")
                op = code[pc]
                if op == 0x00:  # halt
                    break
                elif op == 0x01:  # push
                    stack.append(code[pc + 1])
                    pc += 2
                    continue
                elif op == 0x02:  # pop
                    stack.pop()
                elif op == 0x03:  # dup
                    stack.append(stack[-1])
                elif op == 0x04:  # swap
                    stack[-1], stack[-2] = stack[-2], stack[-1]
                elif op == 0x10:  # load_input
                    stack.append(input_bits[struct.unpack_from("<H", code, pc + 1)[0]])
                    pc += 3
                    continue
                elif op == 0x11:  # load_ram
                    stack.append(mem[struct.unpack_from("<H", code, pc + 1)[0]])
                    pc += 3
                    continue
                elif op == 0x12:  # store_ram
                    mem[struct.unpack_from("<H", code, pc + 1)[0]] = stack.pop()
                    pc += 3
                    continue
                elif op == 0x20:
                    b, a = stack.pop(), stack.pop()
                    stack.append(a & b)
                elif op == 0x21:
                    b, a = stack.pop(), stack.pop()
                    stack.append(a | b)
                elif op == 0x22:
                    b, a = stack.pop(), stack.pop()
                    stack.append(a ^ b)
                elif op == 0x23:
                    stack.append(stack.pop() ^ 0xFF)
                elif op == 0x24:
                    b, a = stack.pop(), stack.pop()
                    stack.append((a + b) & 0xFF)
                elif op == 0x25:
                    b, a = stack.pop(), stack.pop()
                    stack.append(1 if a == b else 0)
                elif op == 0x30:  # jump_if
                    target = struct.unpack_from("<H", code, pc + 1)[0]
                    if stack.pop():
                        pc = target
                    else:
                        pc += 3
                    continue
                elif op == 0x31:  # jump
                    pc = struct.unpack_from("<H", code, pc + 1)[0]
                    continue
                elif op == 0x40:  # emit_bit
                    if len(out) >= self.m_output_bits:
                        raise MalformedProgram("emitted more bits than declared")
                    out.append(stack.pop() & 1)
                pc += 1
        except IndexError as exc:
            raise MalformedProgram("stack underflow") from exc
        out.extend(0 for _ in range(self.m_output_bits - len(out)))
        return bytes(mem), tuple(out)


@dataclass(frozen=True)
class OtmProgram(Program):
    """Reveal-once memory over two equal-length secrets.

    Input bits are (real, b); a real read on fresh state burns it and
    reveals secret b, anything else returns the not-present flag and
    leaves state untouched.  Output is (ok, secret bits).
    """

    s0: bytes = b""
    s1: bytes = b""

    kind = KIND_OTM

    def __post_init__(self):
        if len(self.s0) != len(self.s1):
            raise ValueError("secrets must have equal length")
        if (self.n_input_bits, self.m_output_bits, self.ram_schema) != self.shape(len(self.s0)):
            raise MalformedProgram("declared header does not match secrets")

    @staticmethod
    def shape(secret_len: int) -> tuple[int, int, int]:
        return 2, 1 + 8 * secret_len, 1

    @classmethod
    def create(cls, s0: bytes, s1: bytes) -> "OtmProgram":
        n, m, r = cls.shape(len(s0))
        return cls(n, m, r, s0=s0, s1=s1)

    def run(self, ram: bytes, input_bits, aux: bytes, budget: int):
        real, b = input_bits
        if ram[0] == 0 and real == 1:
            secret = self.s1 if b else self.s0
            return b"\x01", (1,) + bytes_to_bits(secret)
        return ram, (0,) * self.m_output_bits


@dataclass(frozen=True)
class CopyProtProgram(Program):
    """Circuit gated by a PRF token chain.

    RAM holds the round counter (signed 8-byte little-endian, -1 is the
    absorbing reject state).  The 32-byte unlock token arrives as aux
    input; a correct token advances the counter and releases the next one,
    a wrong token bricks the program forever.
    """

    circuit: "BytecodeProgram" = None  # type: ignore[assignment]
    prf_key: bytes = b""

    kind = KIND_COPYPROT
    aux_len = 32

    def __post_init__(self):
        if self.circuit.ram_schema != 0:
            raise MalformedProgram("gated circuit must be stateless")
        if len(self.prf_key) != 32:
            raise MalformedProgram("prf key must be 32 bytes")
        expect = self.shape(self.circuit)
        if (self.n_input_bits, self.m_output_bits, self.ram_schema) != expect:
            raise MalformedProgram("declared header does not match circuit")

    @staticmethod
    def shape(circuit: "BytecodeProgram") -> tuple[int, int, int]:
        return circuit.n_input_bits, 1 + circuit.m_output_bits + 256, 8

    @classmethod
    def create(cls, circuit: "BytecodeProgram", prf_key: bytes) -> "CopyProtProgram":
        n, m, r = cls.shape(circuit)
        return cls(n, m, r, circuit=circuit, prf_key=prf_key)

    def run(self, ram: bytes, input_bits, aux: bytes, budget: int):
        i = int.from_bytes(ram, "little", signed=True)
        reject = (0,) * self.m_output_bits
        if i == -1:
            return ram, reject
        if aux != prf(self.prf_key, i):
            return (-1).to_bytes(8, "little", signed=True), reject
        _, y = self.circuit.run(b"", input_bits, b"", budget)
        nxt = prf(self.prf_key, i + 1)
        new_ram = (i + 1).to_bytes(8, "little", signed=True)
        return new_ram, (1,) + y + bytes_to_bits(nxt)


@dataclass(frozen=True)
class NullProgram(Program):
    """Outputs zeros and never touches its RAM."""

    kind = KIND_NULL

    def run(self, ram: bytes, input_bits, aux: bytes, budget: int):
        return ram, (0,) * self.m_output_bits


def eval_program(p: Program, ram: bytes, input_bits, aux: bytes = b"",
                 step_budget: int = DEFAULT_STEP_BUDGET):
    """Evaluate ``p`` on (ram, input): total, deterministic, pure.

    Returns (new ram, output bits).  Raises MalformedProgram on contract
    violations and StepBudgetExceeded past the instruction budget.
    """
    if len(ram) != p.ram_schema:
        raise MalformedProgram("ram length does not match schema")
    if len(input_bits) != p.n_input_bits:
        raise MalformedProgram("input width does not match program")
    if any(b not in (0, 1) for b in input_bits):
        raise MalformedProgram("input must be bits")
    if len(aux) != p.aux_len:
        raise MalformedProgram("aux input length does not match program")
    return p.run(bytes(ram), tuple(input_bits), aux, step_budget)


# ---------------------------------------------------------------------------
# canonical binary encoding

# decoders for kind bytes contributed by higher layers (chain wrappers)
EXTRA_KIND_DECODERS: dict[int, "object"] = {}


def encode_program(p) -> bytes:
    if hasattr(p, "encode_extra_kind"):
        return p.encode_extra_kind()
    head = struct.pack("<BBHHH", PROGRAM_VERSION, p.kind, p.n_input_bits,
                       p.m_output_bits, p.ram_schema)
    if p.kind == KIND_BYTECODE:
        return head + struct.pack("<I", len(p.code)) + p.code
    if p.kind == KIND_OTM:
        return head + struct.pack("<H", len(p.s0)) + p.s0 + p.s1
    if p.kind == KIND_COPYPROT:
        circ = encode_program(p.circuit)
        return head + struct.pack("<I", len(circ)) + circ + p.prf_key
    if p.kind == KIND_NULL:
        return head
    raise MalformedProgram(f"unknown program kind {p.kind}")


def decode_program(b: bytes):
    """Inverse of encode_program; rejects unknown versions, truncation and
    any trailing bytes, so the encoding is canonical."""
    try:
        version, kind, n, m, r = struct.unpack_from("<BBHHH", b, 0)
    except struct.error as exc:
        raise MalformedProgram("program header truncated") from exc
    if kind in EXTRA_KIND_DECODERS:
        return EXTRA_KIND_DECODERS[kind](b)
    if version != PROGRAM_VERSION:
        raise MalformedProgram(f"unknown program version {version}")
    body = b[8:]
    if kind == KIND_BYTECODE:
        if len(body) < 4:
            raise MalformedProgram("code length missing")
        (clen,) = struct.unpack_from("<I", body, 0)
        code = body[4:]
        if len(code) != clen:
            raise MalformedProgram("code section length mismatch")
        return BytecodeProgram(n, m, r, code=bytes(code))
    if kind == KIND_OTM:
        if len(body) < 2:
            raise MalformedProgram("secret length missing")
        (slen,) = struct.unpack_from("<H", body, 0)
        rest = body[2:]
        if len(rest) != 2 * slen:
            raise MalformedProgram("secret section length mismatch")
        return OtmProgram(n, m, r, s0=bytes(rest[:slen]), s1=bytes(rest[slen:]))
    if kind == KIND_COPYPROT:
        if len(body) < 4:
            raise MalformedProgram("circuit length missing")
        (clen,) = struct.unpack_from("<I", body, 0)
        circ = body[4:4 + clen]
        key = body[4 + clen:]
        if len(circ) != clen or len(key) != 32:
            raise MalformedProgram("gated circuit section length mismatch")
        inner = decode_program(bytes(circ))
        if not isinstance(inner, BytecodeProgram):
            raise MalformedProgram("gated circuit must be bytecode")
        return CopyProtProgram(n, m, r, circuit=inner, prf_key=bytes(key))
    if kind == KIND_NULL:
        if body:
            raise MalformedProgram("trailing bytes after null program")
        return NullProgram(n, m, r)
    raise MalformedProgram(f"unknown program kind {kind}")


# ---------------------------------------------------------------------------
# stock programs and the random test corpus

def identity_program(n: int) -> BytecodeProgram:
    ins = []
    for i in range(n):
        ins += [("load_input", i), ("emit_bit",)]
    return BytecodeProgram(n, n, 0, code=asm(ins))


def _emit_ram_byte(addr: int):
    """Emit ram[addr] MSB-first using shift-by-doubling and a mask compare."""
    ins = []
    for j in range(8):
        ins.append(("load_ram", addr))
        for _ in range(j):
            ins += [("dup",), ("add8",)]
        ins += [("push", 0x80), ("and",), ("push", 0x80), ("cmp",), ("emit_bit",)]
    return ins


def accumulator_program(n: int = 4) -> BytecodeProgram:
    """RAM[0] += int(input bits, MSB first); outputs the new byte."""
    ins = [("push", 0)]
    for i in range(n):
        ins += [("dup",), ("add8",), ("load_input", i), ("add8",)]
    ins += [("load_ram", 0), ("add8",), ("store_ram", 0)]
    ins += _emit_ram_byte(0)
    return BytecodeProgram(n, 8, 1, code=asm(ins))


def point_function_program(n: int, target_bits) -> BytecodeProgram:
    """Outputs 1 iff the input equals ``target_bits``."""
    ins = [("push", 1)]
    for i, t in enumerate(target_bits):
        ins += [("load_input", i), ("push", t), ("cmp",), ("and",)]
    ins.append(("emit_bit",))
    return BytecodeProgram(n, 1, 0, code=asm(ins))


def random_program(rng, max_input_bits: int = 4, max_ram: int = 3) -> BytecodeProgram:
    """Random straight-line program for corpus tests; always total."""
    n = 1 + rng.integer(max_input_bits)
    ram = 1 + rng.integer(max_ram)
    m = 1 + rng.integer(8)
    ins = []
    depth = 0
    for _ in range(5 + rng.integer(25)):
        ops = [("push", rng.integer(256)), ("load_input", rng.integer(n)),
               ("load_ram", rng.integer(ram))]
        if depth >= 1:
            ops += [("dup",), ("not",), ("store_ram", rng.integer(ram))]
        if depth >= 2:
            ops += [("and",), ("or",), ("xor",), ("add8",), ("cmp",), ("swap",), ("pop",)]
        op = ops[rng.integer(len(ops))]
        ins.append(op)
        name = op[0]
        if name in ("push", "load_input", "load_ram", "dup"):
            depth += 1
        elif name in ("store_ram", "pop", "and", "or", "xor", "add8", "cmp"):
            depth -= 1
    for i in range(m):
        ins += [("load_input", i % n), ("load_ram", i % ram), ("xor",), ("emit_bit",)]
    return BytecodeProgram(n, m, ram, code=asm(ins))
