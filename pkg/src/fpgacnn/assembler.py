"""Two-pass assembler and the ``@ADDR DATA`` hex format.

Dialect: one statement per line, ``LABEL:`` prefixes, comma-separated
operands, registers ``R0``-``R31`` (case-insensitive), decimal or ``0x``
immediates, ``#`` comments. Branch and JAL targets are labels or literal
instruction offsets. ``.org ADDR`` zero-fills forward to ADDR.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Optional

from .isa import FIELDS, FORMATS, Cond, EncodingError, Instruction, Opcode, encode

IMEM_WORDS = 1024

_LABEL = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*:")
_INT = re.compile(r"^[+-]?(0[xX][0-9a-fA-F]+|[0-9]+)$")
_REG = re.compile(r"^[Rr]([0-9]{1,2})$")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class AsmErrorKind(str, enum.Enum):
    UNKNOWN_MNEMONIC = "unknown mnemonic"
    BAD_OPERAND = "bad operand"
    DUPLICATE_LABEL = "duplicate label"
    UNDEFINED_LABEL = "undefined label"
    OFFSET_RANGE = "offset out of range"
    IMMEDIATE_RANGE = "immediate out of range"
    TOO_LARGE = "program too large"


@dataclass(frozen=True)
class AsmError:
    line: int
    kind: AsmErrorKind
    message: str

    def __str__(self):
        return f"line {self.line}: {self.kind.value}: {self.message}"


class AssemblyError(Exception):
    def __init__(self, errors: list[AsmError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


@dataclass
class ProgramImage:
    words: list[int]
    symbols: dict[str, int] = field(default_factory=dict)
    listing: list[Optional[int]] = field(default_factory=list)

    def __len__(self):
        return len(self.words)


class _LineError(Exception):
    def __init__(self, kind: AsmErrorKind, message: str):
        self.kind = kind
        self.message = message


def _strip(line: str) -> tuple[list[str], str]:
    """Split a source line into its labels and the remaining statement."""
    line = line.split("#", 1)[0]
    labels = []
    while True:
        m = _LABEL.match(line)
        if not m:
            break
        labels.append(m.group(1))
        line = line[m.end():]
    return labels, line.strip()


def parse_int(text: str) -> int:
    text = text.strip()
    if not _INT.match(text):
        raise _LineError(AsmErrorKind.BAD_OPERAND, f"expected an integer, got {text!r}")
    digits = text.lstrip("+-")
    value = int(digits, 16) if digits[:2].lower() == "0x" else int(digits, 10)
    return -value if text.startswith("-") else value


def _reg(text: str) -> int:
    m = _REG.match(text.strip())
    if not m or int(m.group(1)) > 31:
        raise _LineError(AsmErrorKind.BAD_OPERAND, f"expected a register R0-R31, got {text.strip()!r}")
    return int(m.group(1))


def _ranged(value: int, lo: int, hi: int, what: str) -> int:
    if not lo <= value <= hi:
        raise _LineError(AsmErrorKind.IMMEDIATE_RANGE, f"{what} {value} outside [{lo}, {hi}]")
    return value


def _split_statement(stmt: str) -> tuple[str, list[str]]:
    parts = stmt.split(None, 1)
    mnemonic = parts[0]
    operands = [o.strip() for o in parts[1].split(",")] if len(parts) > 1 else []
    return mnemonic, operands


def _encode_statement(stmt: str, address: int, symbols: dict[str, int]) -> int:
    mnemonic, operands = _split_statement(stmt)
    try:
        op = Opcode[mnemonic.upper()]
    except KeyError:
        raise _LineError(AsmErrorKind.UNKNOWN_MNEMONIC, f"unknown mnemonic {mnemonic!r}") from None
    names = FIELDS[FORMATS[op]]
    if len(operands) != len(names) or any(o == "" for o in operands):
        raise _LineError(
            AsmErrorKind.BAD_OPERAND,
            f"{op.name} takes {len(names)} operand(s) ({', '.join(names) or 'none'}), got {len(operands)}",
        )
    fields = {}
    for name, text in zip(names, operands):
        if name in ("rd", "rs", "rt"):
            fields[name] = _reg(text)
        elif name == "cond":
            try:
                fields[name] = Cond[text.upper()]
            except KeyError:
                raise _LineError(AsmErrorKind.BAD_OPERAND, f"unknown branch condition {text!r}") from None
        elif name == "imm5":
            fields[name] = _ranged(parse_int(text), 0, 31, "shift amount")
        elif name == "imm8":
            fields[name] = _ranged(parse_int(text), -128, 127, "8-bit immediate")
        elif name == "imm16":
            fields[name] = _ranged(parse_int(text), -0x8000, 0xFFFF, "16-bit immediate") & 0xFFFF
        elif name == "offset12":
            if _NAME.match(text):
                if text not in symbols:
                    raise _LineError(AsmErrorKind.UNDEFINED_LABEL, f"undefined label {text!r}")
                offset = symbols[text] - (address + 1)
            else:
                offset = parse_int(text)
            if not -2048 <= offset <= 2047:
                raise _LineError(AsmErrorKind.OFFSET_RANGE, f"offset {offset} to {text!r} does not fit 12 bits")
            fields[name] = offset
    try:
        return encode(Instruction(op, **fields))
    except EncodingError as e:  # pragma: no cover - ranges are checked above
        raise _LineError(AsmErrorKind.IMMEDIATE_RANGE, str(e)) from None


def _org_target(stmt: str) -> Optional[int]:
    parts = stmt.split(None, 1)
    if parts and parts[0].lower() == ".org":
        if len(parts) != 2:
            raise _LineError(AsmErrorKind.BAD_OPERAND, ".org needs an address")
        return parse_int(parts[1])
    return None


def assemble(source: str) -> ProgramImage:
    """Assemble ``source``; raises AssemblyError listing every bad line."""
    lines = source.splitlines()
    errors: list[AsmError] = []
    symbols: dict[str, int] = {}
    statements: list[tuple[int, int, str]] = []  # (lineno, address, stmt)

    # pass 1: addresses and labels
    address = 0
    too_large_reported = False
    for lineno, raw in enumerate(lines, 1):
        labels, stmt = _strip(raw)
        for label in labels:
            if label in symbols:
                errors.append(AsmError(lineno, AsmErrorKind.DUPLICATE_LABEL, f"label {label!r} already defined"))
            else:
                symbols[label] = address
        if not stmt:
            continue
        try:
            target = _org_target(stmt)
        except _LineError as e:
            errors.append(AsmError(lineno, e.kind, e.message))
            continue
        if target is not None:
            if target < address:
                errors.append(AsmError(lineno, AsmErrorKind.BAD_OPERAND, f".org {target:#x} is behind address {address:#x}"))
                continue
            address = target
            if address > IMEM_WORDS and not too_large_reported:
                errors.append(AsmError(lineno, AsmErrorKind.TOO_LARGE, f".org {target:#x} beyond {IMEM_WORDS}-word memory"))
                too_large_reported = True
            continue
        if address >= IMEM_WORDS and not too_large_reported:
            errors.append(AsmError(lineno, AsmErrorKind.TOO_LARGE, f"instruction memory holds {IMEM_WORDS} words"))
            too_large_reported = True
        statements.append((lineno, address, stmt))
        address += 1

    # pass 2: encode
    size = address
    words = [0] * size
    listing: list[Optional[int]] = [None] * size
    for lineno, addr, stmt in statements:
        try:
            words[addr] = _encode_statement(stmt, addr, symbols)
            listing[addr] = lineno
        except _LineError as e:
            errors.append(AsmError(lineno, e.kind, e.message))

    if errors:
        errors.sort(key=lambda e: e.line)
        raise AssemblyError(errors)
    return ProgramImage(words, symbols, listing)


# ---------------------------------------------------------------------------
# hex files
# ---------------------------------------------------------------------------


class HexFormatError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def emit_hex(words, data_digits: int = 8) -> str:
    """One ``@aaaa dddddddd`` line per word, addresses ascending from 0."""
    if isinstance(words, ProgramImage):
        words = words.words
    return "".join(f"@{addr:04x} {int(w):0{data_digits}x}\n" for addr, w in enumerate(words))


def parse_hex(text: str, data_digits: int = 8) -> list[tuple[int, int]]:
    pattern = re.compile(r"^@([0-9a-fA-F]{4,8}) ([0-9a-fA-F]{%d})$" % data_digits)
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        m = pattern.match(line)
        if not m:
            raise HexFormatError(lineno, f"expected '@ADDR {'h' * data_digits}', got {line!r}")
        out.append((int(m.group(1), 16), int(m.group(2), 16)))
    return out


def hex_to_words(text: str, size: int, data_digits: int = 8, exact: bool = False) -> list[int]:
    """Place parsed hex pairs into a dense ``size``-word list."""
    pairs = parse_hex(text, data_digits)
    if exact and len(pairs) != size:
        raise HexFormatError(len(pairs), f"expected exactly {size} entries, found {len(pairs)}")
    words = [0] * size
    for index, (addr, value) in enumerate(pairs, 1):
        if addr >= size:
            raise HexFormatError(index, f"address {addr:#x} outside {size}-entry memory")
        words[addr] = value
    return words
