"""Instruction-level emulator of the CPU and its memory-mapped peripherals.

One instruction executes per cycle. The bus decodes::

    0x00000000-0x00001FFF  data memory (8K words)
    0x0000C000             LEDs (10 bits, read back allowed)
    0x0000C001             switches (10 bits, read-only)
    0x0000C004             UART: store enqueues tx byte, load dequeues rx (0 when empty)
    0x0000C008             compressor: store 1 to request, load returns busy status
    0x00010000-0x000103FF  image memory (read-only to the CPU)
    0x00020000-0x0002F8A5  weight ROM (read-only)

Anything else is a bus fault.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from . import softfp
from .assembler import IMEM_WORDS, ProgramImage
from .imgproc import IMAGE_WORDS, compress_to_image_mem
from .isa import FIELDS, FORMATS, Fmt, IllegalOpcodeError, Opcode, decode

MASK32 = 0xFFFFFFFF
SIGN = 0x80000000

DM_WORDS = 8192
STACK_WORDS = 1024
WEIGHT_WORDS = 63654

DM_BASE = 0x00000000
LED_ADDR = 0x0000C000
SWITCH_ADDR = 0x0000C001
UART_ADDR = 0x0000C004
COMPRESS_ADDR = 0x0000C008
IMAGE_BASE = 0x00010000
WEIGHT_BASE = 0x00020000

DEFAULT_LATENCY = 224 * 224
PASS_PC = 0x00AD
FAIL_PC = 0x00DD

_ADD, _ADDZ, _SUB, _AND, _NOR, _SLL, _SRL, _SRA = range(8)
_LW, _SW, _LHB, _LLB, _B, _JAL, _JR = range(8, 15)
_PUSH, _POP, _ADDI, _SUBI = 0b10010, 0b10011, 0b10100, 0b10101
_MUL, _UMUL, _ADDF, _SUBF, _MULF, _ITF, _FTI, _HLT = range(0b11000, 0b100000)


class Trap(Exception):
    """Emulator-level fault; the machine halts with ``trap`` set."""

    kind = "trap"

    def __init__(self, message: str, pc: int):
        self.pc = pc
        super().__init__(f"{self.kind} at pc={pc:#06x}: {message}")


class IllegalInstruction(Trap):
    kind = "illegal opcode"


class BusFault(Trap):
    kind = "bus fault"


class StackFault(Trap):
    kind = "stack fault"


class LoadError(ValueError):
    pass


@dataclass(frozen=True)
class MachineState:
    pc: int
    rf: tuple[int, ...]
    flags: tuple[bool, bool, bool]  # Z, V, N
    sp: int
    stack: tuple[int, ...]
    cycle: int
    halted: bool


@dataclass
class RunReport:
    reason: str
    cycles: int
    pc: int
    tx: bytes
    machine: "Machine" = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.reason == f"pc={PASS_PC:#06x}"

    @property
    def failed(self) -> bool:
        return self.reason == f"pc={FAIL_PC:#06x}"


def _signed(v: int) -> int:
    return v - 0x100000000 if v & SIGN else v


def _predecode(word: int) -> tuple:
    """Flatten a word into ``(opcode, a, b, c)`` for the dispatcher."""
    ins = decode(word)
    fmt = FORMATS[ins.opcode]
    op = int(ins.opcode)
    if fmt is Fmt.BRANCH:
        return (op, int(ins.cond), ins.offset12, 0)
    if fmt is Fmt.JUMP:
        return (op, 0, ins.offset12, 0)
    vals = [getattr(ins, name) for name in FIELDS[fmt]]
    vals += [0] * (3 - len(vals))
    return (op, *vals)


class Machine:
    def __init__(
        self,
        program: ProgramImage | Sequence[int] = (),
        weights: Optional[Sequence[int]] = None,
        frame=None,
        image: Optional[Sequence[int]] = None,
        *,
        switches: int = 0,
        rx: Iterable[int] = (),
        latency: int = DEFAULT_LATENCY,
        on_tx: Optional[Callable[[int], None]] = None,
    ):
        words = list(program.words if isinstance(program, ProgramImage) else program)
        if len(words) > IMEM_WORDS:
            raise LoadError(f"program has {len(words)} words; instruction memory holds {IMEM_WORDS}")
        weights = list(weights) if weights is not None else []
        if len(weights) > WEIGHT_WORDS:
            raise LoadError(f"{len(weights)} weight words; weight ROM holds {WEIGHT_WORDS}")
        if image is not None and len(image) > IMAGE_WORDS:
            raise LoadError(f"{len(image)} image words; image memory holds {IMAGE_WORDS}")
        if latency < 1:
            raise LoadError("compression latency must be >= 1 cycle")

        self.imem = words + [0] * (IMEM_WORDS - len(words))
        self.weight_rom = [w & MASK32 for w in weights] + [0] * (WEIGHT_WORDS - len(weights))
        self._initial_image = [int(v) & 0xFF for v in image] if image is not None else []
        self.frame = frame
        self.switches = switches & 0x3FF
        self._initial_rx = bytes(rx)
        self.latency = latency
        self.on_tx = on_tx
        self.reset()

    def reset(self) -> None:
        self.pc = 0
        self.rf = [0] * 32
        self.z = self.v = self.n = False
        self.sp = STACK_WORDS - 1
        self.stack = [0] * STACK_WORDS
        self.cycle = 0
        self.halted = False
        self.trap: Optional[Trap] = None
        self.dm = [0] * DM_WORDS
        self.dm_high = -1
        self.image_mem = self._initial_image + [0] * (IMAGE_WORDS - len(self._initial_image))
        self.led = 0
        self.tx = bytearray()
        self.rx = deque(self._initial_rx)
        self.compress_pending = False
        self.compress_countdown = 0
        self._decoded: list[Optional[tuple]] = [None] * IMEM_WORDS

    def state(self) -> MachineState:
        return MachineState(
            self.pc, tuple(self.rf), (self.z, self.v, self.n), self.sp, tuple(self.stack), self.cycle, self.halted
        )

    # ------------------------------------------------------------------
    # bus
    # ------------------------------------------------------------------

    def bus_read(self, addr: int) -> int:
        addr &= MASK32
        if addr < DM_WORDS:
            if addr > self.dm_high:
                self.dm_high = addr
            return self.dm[addr]
        off = addr - WEIGHT_BASE
        if 0 <= off < WEIGHT_WORDS:
            return self.weight_rom[off]
        off = addr - IMAGE_BASE
        if 0 <= off < IMAGE_WORDS:
            return self.image_mem[off]
        if addr == LED_ADDR:
            return self.led
        if addr == SWITCH_ADDR:
            return self.switches
        if addr == UART_ADDR:
            return self.rx.popleft() if self.rx else 0
        if addr == COMPRESS_ADDR:
            return 1 if self.compress_pending else 0
        raise BusFault(f"read from unmapped address {addr:#010x}", self.pc)

    def bus_write(self, addr: int, value: int) -> None:
        addr &= MASK32
        value &= MASK32
        if addr < DM_WORDS:
            if addr > self.dm_high:
                self.dm_high = addr
            self.dm[addr] = value
        elif addr == UART_ADDR:
            byte = value & 0xFF
            self.tx.append(byte)
            if self.on_tx is not None:
                self.on_tx(byte)
        elif addr == COMPRESS_ADDR:
            if value & 1 and not self.compress_pending:
                self.compress_pending = True
                self.compress_countdown = self.latency
        elif addr == LED_ADDR:
            self.led = value & 0x3FF
        elif WEIGHT_BASE <= addr < WEIGHT_BASE + WEIGHT_WORDS:
            raise BusFault(f"write to weight ROM at {addr:#010x}", self.pc)
        elif IMAGE_BASE <= addr < IMAGE_BASE + IMAGE_WORDS:
            raise BusFault(f"write to image memory at {addr:#010x}", self.pc)
        elif addr == SWITCH_ADDR:
            raise BusFault("write to read-only switch register", self.pc)
        else:
            raise BusFault(f"write to unmapped address {addr:#010x}", self.pc)

    def _finish_compression(self) -> None:
        self.compress_pending = False
        if self.frame is not None:
            self.image_mem = compress_to_image_mem(self.frame)

    # ------------------------------------------------------------------
    # execution
    # ------------------------------------------------------------------

    def _fetch(self, pc: int) -> tuple:
        if not 0 <= pc < IMEM_WORDS:
            raise BusFault("instruction fetch outside instruction memory", pc)
        try:
            ins = _predecode(self.imem[pc])
        except IllegalOpcodeError:
            raise IllegalInstruction(f"word {self.imem[pc]:#010x}", pc) from None
        self._decoded[pc] = ins
        return ins

    def _trap(self, exc: Trap) -> None:
        self.halted = True
        self.trap = exc
        raise exc

    def step(self) -> None:
        if self.halted:
            raise RuntimeError("machine is halted")
        try:
            self._execute()
        except Trap as exc:
            self._trap(exc)
        self.cycle += 1
        if self.compress_pending:
            self.compress_countdown -= 1
            if self.compress_countdown <= 0:
                self._finish_compression()

    def _execute(self) -> None:
        pc = self.pc
        ins = self._decoded[pc] if 0 <= pc < IMEM_WORDS else None
        if ins is None:
            ins = self._fetch(pc)
        op, a, b, c = ins
        rf = self.rf
        nxt = pc + 1

        if op == _LW:
            v = self.bus_read(rf[b] + c)
            if a:
                rf[a] = v
        elif op == _ADDF or op == _SUBF or op == _MULF:
            if op == _ADDF:
                r = softfp.add_bits(rf[b], rf[c])
            elif op == _MULF:
                r = softfp.mul_bits(rf[b], rf[c])
            else:
                r = softfp.add_bits(rf[b], rf[c] ^ SIGN)
            zr = not (r & 0x7FFFFFFF)
            self.z = zr
            self.n = bool(r & SIGN) and not zr
            self.v = False
            if a:
                rf[a] = r
        elif op == _ADDI or op == _SUBI or op == _ADD or op == _SUB or op == _ADDZ:
            if op == _ADDZ and not self.z:
                self.pc = nxt
                return
            x = rf[b]
            x = x - 0x100000000 if x & SIGN else x
            if op == _ADDI:
                y = c
            elif op == _SUBI:
                y = -c
            else:
                y = rf[c]
                y = y - 0x100000000 if y & SIGN else y
                if op == _SUB:
                    y = -y
            s = x + y
            if s > 0x7FFFFFFF:
                s, ov = 0x7FFFFFFF, True
            elif s < -0x80000000:
                s, ov = -0x80000000, True
            else:
                ov = False
            self.z = s == 0
            self.n = s < 0
            self.v = ov
            if a:
                rf[a] = s & MASK32
        elif op == _B:
            z = self.z
            if a == 7:
                taken = True
            elif a == 0:
                taken = not z
            elif a == 1:
                taken = z
            elif a == 2:
                taken = not z and not self.n
            elif a == 3:
                taken = self.n
            elif a == 4:
                taken = not self.n
            elif a == 5:
                taken = self.n or z
            else:
                taken = self.v
            if taken:
                nxt = pc + 1 + b
        elif op == _SW:
            self.bus_write(rf[b] + c, rf[a])
        elif op == _LLB:
            if a:
                rf[a] = b | 0xFFFF0000 if b & 0x8000 else b
        elif op == _LHB:
            if a:
                rf[a] = (b << 16) | (rf[a] & 0xFFFF)
        elif op == _JAL:
            rf[31] = nxt
            nxt = pc + 1 + b
        elif op == _JR:
            nxt = rf[a]
        elif op == _MUL or op == _UMUL:
            x = rf[b] & 0xFFFF
            y = rf[c] & 0xFFFF
            if op == _MUL:
                x = x - 0x10000 if x & 0x8000 else x
                y = y - 0x10000 if y & 0x8000 else y
            if a:
                rf[a] = (x * y) & MASK32
        elif op == _AND or op == _NOR or op == _SLL or op == _SRL or op == _SRA:
            x = rf[b]
            if op == _AND:
                r = x & rf[c]
            elif op == _NOR:
                r = ~(x | rf[c]) & MASK32
            elif op == _SLL:
                r = (x << c) & MASK32
            elif op == _SRL:
                r = x >> c
            else:
                r = (_signed(x) >> c) & MASK32
            self.z = r == 0
            if a:
                rf[a] = r
        elif op == _ITF:
            if a:
                rf[a] = softfp.itf(rf[b])
        elif op == _FTI:
            if a:
                rf[a] = softfp.fti(rf[b]) & MASK32
        elif op == _PUSH:
            if self.sp <= 0:
                raise StackFault("push onto a full stack", pc)
            self.stack[self.sp] = rf[a]
            self.sp -= 1
        elif op == _POP:
            if self.sp >= STACK_WORDS - 1:
                raise StackFault("pop from an empty stack", pc)
            self.sp += 1
            if a:
                rf[a] = self.stack[self.sp]
        elif op == _HLT:
            self.halted = True
            return
        else:  # pragma: no cover - decode rejects everything else
            raise IllegalInstruction(f"opcode {op:05b}", pc)
        self.pc = nxt

    def run(
        self,
        max_cycles: Optional[int] = None,
        watch: Iterable[int] = (PASS_PC, FAIL_PC),
        break_at: Iterable[int] = (),
        stop_after_tx: Optional[int] = None,
    ) -> RunReport:
        """Step until halt, a watched self-loop, a breakpoint, a tx count, or ``max_cycles``.

        ``max_cycles`` bounds the machine's total cycle count. Breakpoints
        stop before the instruction at that address executes (never on the
        first instruction of this call, so a run can resume from one).
        Traps propagate as exceptions.
        """
        watch = frozenset(watch)
        break_at = frozenset(break_at)
        first = True
        step = self.step
        while True:
            if self.halted:
                reason = "halt"
                break
            if max_cycles is not None and self.cycle >= max_cycles:
                reason = "max_cycles"
                break
            pc = self.pc
            if not first and pc in break_at:
                reason = f"break={pc:#06x}"
                break
            first = False
            step()
            if self.pc == pc and pc in watch and not self.halted:
                reason = f"pc={pc:#06x}"
                break
            if stop_after_tx is not None and len(self.tx) >= stop_after_tx:
                reason = "tx"
                break
        return RunReport(reason, self.cycle, self.pc, bytes(self.tx), self)


def reset(program, weights=None, frame=None, **kwargs) -> Machine:
    return Machine(program, weights, frame, **kwargs)
