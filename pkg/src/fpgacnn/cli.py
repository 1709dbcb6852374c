"""``fpgacnn`` command line: assemble, run, classify, self-test and golden dumps.

Exit codes: 0 pass or halt, 1 explicit failure (pc=0x00DD, assembly errors,
failing self-tests), 2 anything abnormal (trap, max cycles, load or I/O error).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import firmware, goldmodel, imgproc
from .assembler import IMEM_WORDS, AssemblyError, HexFormatError, ProgramImage, assemble, emit_hex, hex_to_words
from .isa import disassemble
from .machine import DEFAULT_LATENCY, FAIL_PC, PASS_PC, LoadError, Machine, Trap

EXIT_OK, EXIT_FAIL, EXIT_ABNORMAL = 0, 1, 2
DEFAULT_MAX_CYCLES = 10_000_000


class CliError(Exception):
    """Load or I/O problem reported as a one-line message with exit status 2."""


def _int(text: str) -> int:
    return int(text, 0)


def _dm_range(text: str) -> tuple[int, int]:
    try:
        start, end = (int(part, 0) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:END, got {text!r}") from None
    if not 0 <= start <= end <= 8192:
        raise argparse.ArgumentTypeError(f"DM range {text!r} outside 0:8192")
    return start, end


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e.strerror}") from None


def _load_program(path) -> ProgramImage:
    """Assemble a ``.asm`` file or load an instruction hex file."""
    text = _read_text(path)
    if str(path).endswith(".asm"):
        return assemble(text)  # AssemblyError handled by the caller
    try:
        words = hex_to_words(text, IMEM_WORDS)
    except HexFormatError as e:
        raise CliError(f"{path}: {e}") from None
    while words and words[-1] == 0:
        words.pop()
    return ProgramImage(words, {}, [])


def _load_weights(args) -> Optional[goldmodel.WeightBank]:
    if getattr(args, "weights", None):
        try:
            return goldmodel.read_weight_hex(_read_text(args.weights))
        except (HexFormatError, ValueError) as e:
            raise CliError(f"{args.weights}: {e}") from None
    if getattr(args, "seed", None) is not None:
        return goldmodel.gen_weights(args.seed)
    return None


def _load_frame(path):
    """Return ``(frame, image)``; exactly one is set."""
    try:
        data = imgproc.load_pixels(path)
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None
    except ValueError as e:
        raise CliError(str(e)) from None
    if data.ndim == 1:
        return None, data.tolist()
    return data, None


def _latency(args) -> int:
    return 1 if args.fast else args.latency


def _format_tx(tx: bytes) -> str:
    if not tx:
        return "tx: (none)"
    text = "".join(chr(b) if 32 <= b < 127 else "." for b in tx)
    return f"tx: {tx.hex(' ')} |{text}|"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_asm(args) -> int:
    source = _read_text(args.src)
    try:
        image = assemble(source)
    except AssemblyError as e:
        for err in e.errors:
            print(f"{args.src}:{err}", file=sys.stderr)
        return EXIT_FAIL
    out = args.output or str(Path(args.src).with_suffix(".hex"))
    _write_text(out, emit_hex(image))
    print(f"{out}: {len(image.words)} words")
    return EXIT_OK


def cmd_disasm(args) -> int:
    try:
        pairs = hex_to_words(_read_text(args.hex), IMEM_WORDS)
    except HexFormatError as e:
        raise CliError(f"{args.hex}: {e}") from None
    while pairs and pairs[-1] == 0:
        pairs.pop()
    for addr, word in enumerate(pairs):
        print(f"{addr:04x}  {word:08x}  {disassemble(word)}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        program = _load_program(args.program)
    except AssemblyError as e:
        for err in e.errors:
            print(f"{args.program}:{err}", file=sys.stderr)
        return EXIT_ABNORMAL
    weights = _load_weights(args)
    frame = image = None
    if args.frame:
        frame, image = _load_frame(args.frame)
    try:
        m = Machine(
            program,
            weights.flat().tolist() if weights is not None else None,
            frame=frame,
            image=image,
            switches=args.switches,
            latency=_latency(args),
        )
    except LoadError as e:
        raise CliError(str(e)) from None
    status = EXIT_ABNORMAL
    try:
        rep = m.run(max_cycles=args.max_cycles, watch=args.watch, stop_after_tx=args.stop_after_tx)
    except Trap as e:
        print(f"TRAP: {e}")
    else:
        if rep.passed:
            print(f"PASS (pc={rep.pc:#06x})")
            status = EXIT_OK
        elif rep.failed:
            print(f"FAIL (pc={rep.pc:#06x})")
            status = EXIT_FAIL
        elif rep.reason == "halt":
            print(f"HALT (pc={rep.pc:#06x})")
            status = EXIT_OK
        elif rep.reason == "tx":
            print(f"TX (pc={rep.pc:#06x})")
            status = EXIT_OK
        elif rep.reason.startswith("pc="):
            print(f"STOP ({rep.reason})")
            status = EXIT_OK
        else:
            print(f"TIMEOUT after {rep.cycles} cycles (pc={rep.pc:#06x})")
    print(f"cycles: {m.cycle}")
    print(_format_tx(bytes(m.tx)))
    if args.stop_after_tx and m.tx:
        print(f"char: {chr(m.tx[-1])}")
    for start, end in args.dump_dm or ():
        for addr in range(start, end):
            print(f"@{addr:04x} {m.dm[addr]:08x}")
    return status


def cmd_classify(args) -> int:
    weights = _load_weights(args)
    if weights is None:
        raise CliError("classify needs --weights or --seed")
    frame, image = _load_frame(args.frame)
    try:
        result = firmware.classify(weights, frame=frame, image=image, latency=_latency(args), max_cycles=args.max_cycles)
    except Trap as e:
        print(f"TRAP: {e}")
        return EXIT_ABNORMAL
    except RuntimeError as e:
        print(str(e))
        return EXIT_ABNORMAL
    _write_text(args.trace_out, result.trace.dump())
    print(result.char)
    print(f"cycles: {result.cycles}", file=sys.stderr)
    return EXIT_OK


def cmd_selftest(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise CliError(f"{directory} is not a directory")
    results = firmware.run_selftests(directory, args.max_cycles)
    for r in results:
        print(r)
    bad = [r for r in results if r.verdict != "PASS"]
    if not results:
        print("0 tests")
        return EXIT_OK
    print(f"{len(results) - len(bad)}/{len(results)} passed")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_golden(args) -> int:
    weights = goldmodel.gen_weights(args.seed)
    if args.frame:
        frame, image = _load_frame(args.frame)
        if image is None:
            image = imgproc.compress_to_image_mem(frame)
    else:
        image = imgproc.compress_to_image_mem(imgproc.fixture_frame(0))
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create {out}: {e.strerror}") from None
    soft = goldmodel.forward_soft(image, weights)
    native = goldmodel.forward_native(image, weights)
    files = {
        "weights.hex": goldmodel.write_weight_hex(weights),
        "image.hex": goldmodel.write_image_hex(image),
        "trace_soft.txt": soft.dump(),
        "trace_native.txt": native.dump(),
    }
    for name, text in files.items():
        _write_text(out / name, text)
        print(out / name)
    print(f"soft: {soft.char}  native: {native.char}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_machine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--latency", type=_int, default=DEFAULT_LATENCY, help="compression latency in cycles")
    p.add_argument("--fast", action="store_true", help="compression latency of 1 cycle")
    p.add_argument("--max-cycles", type=_int, default=DEFAULT_MAX_CYCLES)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpgacnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asm", help="assemble a source file to instruction hex")
    p.add_argument("src")
    p.add_argument("-o", "--output", help="output hex path (default: SRC with .hex)")
    p.set_defaults(func=cmd_asm)

    p = sub.add_parser("disasm", help="disassemble an instruction hex file")
    p.add_argument("hex")
    p.set_defaults(func=cmd_disasm)

    p = sub.add_parser("run", help="run a program (.asm or instruction hex) on the emulator")
    p.add_argument("program")
    p.add_argument("--weights", help="weight hex file")
    p.add_argument("--seed", type=int, help="generate pseudo-weights from this seed")
    p.add_argument("--frame", help="224x224 raw frame or image hex")
    p.add_argument("--switches", type=_int, default=0)
    p.add_argument("--watch", type=_int, nargs="*", default=[PASS_PC, FAIL_PC], help="park addresses")
    p.add_argument("--dump-dm", type=_dm_range, action="append", metavar="START:END")
    p.add_argument("--stop-after-tx", type=int, metavar="N")
    _add_machine_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("classify", help="classify one frame with the CNN firmware")
    p.add_argument("--frame", required=True, help="224x224 raw frame or image hex")
    p.add_argument("--weights", help="weight hex file")
    p.add_argument("--seed", type=int, help="generate pseudo-weights from this seed")
    p.add_argument("--trace-out", default="emu_trace.txt", help="emulator trace dump path")
    _add_machine_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("selftest", help="run the self-checking ISA tests")
    p.add_argument("directory", nargs="?", default=str(firmware.TESTS_DIR))
    p.add_argument("--max-cycles", type=_int, default=firmware.SELFTEST_MAX_CYCLES)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("golden", help="write weight hex, image hex and reference trace dumps")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--frame", help="frame or image hex (default: fixture frame 0)")
    p.add_argument("--out-dir", default="golden")
    p.set_defaults(func=cmd_golden)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ABNORMAL


if __name__ == "__main__":
    sys.exit(main())
