"""Instruction encoding, decoding and disassembly.

Canonical 32-bit layout (don't-care bits are zero on encode, ignored on
decode)::

    opcode   [31:27]
    cond     [26:24]   branches only
    rd       [25:21]
    rs       [20:16]
    rt/imm5  [4:0]
    imm8     [7:0]     signed
    imm16    [15:0]    raw 16-bit pattern
    offset12 [11:0]    signed
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional


class Opcode(enum.IntEnum):
    ADD = 0b00000
    ADDZ = 0b00001
    SUB = 0b00010
    AND = 0b00011
    NOR = 0b00100
    SLL = 0b00101
    SRL = 0b00110
    SRA = 0b00111
    LW = 0b01000
    SW = 0b01001
    LHB = 0b01010
    LLB = 0b01011
    B = 0b01100
    JAL = 0b01101
    JR = 0b01110
    PUSH = 0b10010
    POP = 0b10011
    ADDI = 0b10100
    SUBI = 0b10101
    MUL = 0b11000
    UMUL = 0b11001
    ADDF = 0b11010
    SUBF = 0b11011
    MULF = 0b11100
    ITF = 0b11101
    FTI = 0b11110
    HLT = 0b11111


class Cond(enum.IntEnum):
    NEQ = 0b000
    EQ = 0b001
    GT = 0b010
    LT = 0b011
    GTE = 0b100
    LTE = 0b101
    OVFL = 0b110
    UNCOND = 0b111


UNASSIGNED = frozenset({0b01111, 0b10000, 0b10001, 0b10110, 0b10111})


class Fmt(enum.Enum):
    RRR = "rd, rs, rt"
    SHIFT = "rd, rs, imm5"
    RRI8 = "rd, rs, imm8"
    HALF = "rd, imm16"
    BRANCH = "cond, offset12"
    JUMP = "offset12"
    JR = "rt"
    PUSH = "rs"
    POP = "rd"
    RR = "rd, rs"
    NONE = ""


FORMATS: dict[Opcode, Fmt] = {
    Opcode.ADD: Fmt.RRR,
    Opcode.ADDZ: Fmt.RRR,
    Opcode.SUB: Fmt.RRR,
    Opcode.AND: Fmt.RRR,
    Opcode.NOR: Fmt.RRR,
    Opcode.SLL: Fmt.SHIFT,
    Opcode.SRL: Fmt.SHIFT,
    Opcode.SRA: Fmt.SHIFT,
    Opcode.LW: Fmt.RRI8,
    Opcode.SW: Fmt.RRI8,
    Opcode.LHB: Fmt.HALF,
    Opcode.LLB: Fmt.HALF,
    Opcode.B: Fmt.BRANCH,
    Opcode.JAL: Fmt.JUMP,
    Opcode.JR: Fmt.JR,
    Opcode.PUSH: Fmt.PUSH,
    Opcode.POP: Fmt.POP,
    Opcode.ADDI: Fmt.RRI8,
    Opcode.SUBI: Fmt.RRI8,
    Opcode.MUL: Fmt.RRR,
    Opcode.UMUL: Fmt.RRR,
    Opcode.ADDF: Fmt.RRR,
    Opcode.SUBF: Fmt.RRR,
    Opcode.MULF: Fmt.RRR,
    Opcode.ITF: Fmt.RR,
    Opcode.FTI: Fmt.RR,
    Opcode.HLT: Fmt.NONE,
}

# fields each format carries, in operand order
FIELDS: dict[Fmt, tuple[str, ...]] = {
    Fmt.RRR: ("rd", "rs", "rt"),
    Fmt.SHIFT: ("rd", "rs", "imm5"),
    Fmt.RRI8: ("rd", "rs", "imm8"),
    Fmt.HALF: ("rd", "imm16"),
    Fmt.BRANCH: ("cond", "offset12"),
    Fmt.JUMP: ("offset12",),
    Fmt.JR: ("rt",),
    Fmt.PUSH: ("rs",),
    Fmt.POP: ("rd",),
    Fmt.RR: ("rd", "rs"),
    Fmt.NONE: (),
}

# (lo, hi) inclusive
RANGES = {
    "rd": (0, 31),
    "rs": (0, 31),
    "rt": (0, 31),
    "imm5": (0, 31),
    "imm8": (-128, 127),
    "imm16": (0, 0xFFFF),
    "offset12": (-2048, 2047),
}


class EncodingError(ValueError):
    """An instruction field does not fit its encoding width."""


class IllegalOpcodeError(ValueError):
    def __init__(self, word: int):
        self.word = word
        super().__init__(f"illegal opcode {word >> 27:05b} in word {word:#010x}")


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    cond: Optional[Cond] = None
    rd: Optional[int] = None
    rs: Optional[int] = None
    rt: Optional[int] = None
    imm5: Optional[int] = None
    imm8: Optional[int] = None
    imm16: Optional[int] = None
    offset12: Optional[int] = None

    @property
    def fmt(self) -> Fmt:
        return FORMATS[self.opcode]

    def __str__(self) -> str:
        return format_instruction(self)


def _sext(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def encode(instr: Instruction) -> int:
    fmt = FORMATS[Opcode(instr.opcode)]
    word = int(instr.opcode) << 27
    for name in FIELDS[fmt]:
        value = getattr(instr, name)
        if value is None:
            raise EncodingError(f"{instr.opcode.name}: missing field {name}")
        if name == "cond":
            word |= int(Cond(value)) << 24
            continue
        lo, hi = RANGES[name]
        if not lo <= value <= hi:
            raise EncodingError(f"{instr.opcode.name}: {name}={value} outside [{lo}, {hi}]")
        if name == "rd":
            word |= value << 21
        elif name == "rs":
            word |= value << 16
        elif name in ("rt", "imm5"):
            word |= value
        elif name == "imm8":
            word |= value & 0xFF
        elif name == "imm16":
            word |= value
        elif name == "offset12":
            word |= value & 0xFFF
    return word


def decode(word: int) -> Instruction:
    word &= 0xFFFFFFFF
    code = word >> 27
    if code in UNASSIGNED:
        raise IllegalOpcodeError(word)
    op = Opcode(code)
    fields = {}
    for name in FIELDS[FORMATS[op]]:
        if name == "cond":
            fields[name] = Cond((word >> 24) & 0x7)
        elif name == "rd":
            fields[name] = (word >> 21) & 0x1F
        elif name == "rs":
            fields[name] = (word >> 16) & 0x1F
        elif name in ("rt", "imm5"):
            fields[name] = word & 0x1F
        elif name == "imm8":
            fields[name] = _sext(word, 8)
        elif name == "imm16":
            fields[name] = word & 0xFFFF
        elif name == "offset12":
            fields[name] = _sext(word, 12)
    return Instruction(op, **fields)


def format_instruction(instr: Instruction) -> str:
    fmt = FORMATS[instr.opcode]
    ops = []
    for name in FIELDS[fmt]:
        value = getattr(instr, name)
        if name in ("rd", "rs", "rt"):
            ops.append(f"R{value}")
        elif name == "cond":
            ops.append(Cond(value).name)
        elif name == "imm16":
            ops.append(f"0x{value:04X}")
        else:
            ops.append(str(value))
    return instr.opcode.name + (" " + ", ".join(ops) if ops else "")


def disassemble(word: int) -> str:
    try:
        return format_instruction(decode(word))
    except IllegalOpcodeError:
        return "<illegal>"
