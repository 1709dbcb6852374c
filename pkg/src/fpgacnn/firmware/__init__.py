"""Bundled assembly firmware and helpers that drive it through the emulator."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..assembler import AssemblyError, ProgramImage, assemble
from ..goldmodel import STAGES, PredictionTrace, WeightBank, ascii_for
from ..machine import DEFAULT_LATENCY, Machine, Trap

HERE = Path(__file__).resolve().parent
ASM_DIR = HERE / "asm"
TESTS_DIR = HERE / "tests"
CANARY_DIR = HERE / "canary"
CNN_ASM = ASM_DIR / "cnn.asm"

SELFTEST_MAX_CYCLES = 10_000

# DM regions (start, length)
DM_REGIONS = {
    "input": (0, 1024),
    "conv1": (1024, 4704),
    "pool1": (5728, 1176),
    "conv2": (0, 1600),
    "pool2": (1600, 400),
    "fc1": (2000, 120),
    "fc2": (2120, 84),
    "work": (7000, 400),
    "scores": (8000, 36),
}

# label reached right after the routine that produces each stage
_STAGE_LABELS = {
    "input": "AFTER_PRE",
    "conv1": "AFTER_CONV1",
    "pool1": "AFTER_POOL1",
    "conv2": "AFTER_CONV2",
    "pool2": "AFTER_POOL2",
    "fc1": "AFTER_FC1",
    "fc2": "AFTER_FC2",
    "scores": "AFTER_FC3",
}


def cnn_source() -> str:
    return CNN_ASM.read_text()


def build_cnn() -> ProgramImage:
    return assemble(cnn_source())


def with_driver(driver: str) -> ProgramImage:
    """Assemble ``driver`` followed by the CNN routines; the driver runs from address 0."""
    return assemble(driver.rstrip() + "\n" + cnn_source())


# ---------------------------------------------------------------------------
# self-checking ISA tests
# ---------------------------------------------------------------------------


@dataclass
class AsmTestResult:
    name: str
    verdict: str  # PASS, FAIL or ERROR
    detail: str
    cycles: int = 0

    def __str__(self):
        return f"{self.verdict:5} {self.name}: {self.detail}"


def run_asm_test(path: Path, max_cycles: int = SELFTEST_MAX_CYCLES) -> AsmTestResult:
    name = Path(path).name
    try:
        image = assemble(Path(path).read_text())
    except AssemblyError as e:
        return AsmTestResult(name, "ERROR", "assembly failed: " + str(e).replace("\n", "; "))
    m = Machine(image)
    try:
        rep = m.run(max_cycles=max_cycles)
    except Trap as e:
        return AsmTestResult(name, "ERROR", str(e), m.cycle)
    if rep.passed:
        return AsmTestResult(name, "PASS", f"pc={rep.pc:#06x}", rep.cycles)
    if rep.failed:
        return AsmTestResult(name, "FAIL", f"pc={rep.pc:#06x}", rep.cycles)
    return AsmTestResult(name, "ERROR", f"stopped on {rep.reason} at pc={rep.pc:#06x}", rep.cycles)


def list_tests(directory: Path = TESTS_DIR) -> list[Path]:
    return sorted(Path(directory).glob("*.asm"))


def run_selftests(directory: Path = TESTS_DIR, max_cycles: int = SELFTEST_MAX_CYCLES) -> list[AsmTestResult]:
    return [run_asm_test(p, max_cycles) for p in list_tests(directory)]


# ---------------------------------------------------------------------------
# CNN on the emulator
# ---------------------------------------------------------------------------


@dataclass
class Classification:
    char: str
    trace: PredictionTrace
    cycles: int
    machine: Machine


def make_machine(
    weights: WeightBank,
    frame=None,
    image: Optional[Sequence[int]] = None,
    latency: int = DEFAULT_LATENCY,
    program: Optional[ProgramImage] = None,
) -> Machine:
    program = program or build_cnn()
    return Machine(program, weights.flat().tolist(), frame=frame, image=image, latency=latency)


def classify(
    weights: WeightBank,
    frame=None,
    image: Optional[Sequence[int]] = None,
    latency: int = DEFAULT_LATENCY,
    max_cycles: int = 20_000_000,
) -> Classification:
    """Run MAIN for one iteration, capturing every stage's DM region as it is produced.

    Either ``frame`` (224x224, compressed when MAIN requests a snapshot) or a
    pre-compressed ``image`` (1024 padded entries) must be given.
    """
    if frame is None and image is None:
        raise ValueError("classify needs a frame or a pre-compressed image")
    program = build_cnn()
    m = make_machine(weights, frame, image, latency, program)
    stops = {program.symbols[label]: stage for stage, label in _STAGE_LABELS.items()}
    captured: dict[str, np.ndarray] = {}
    while True:
        rep = m.run(max_cycles=max_cycles, watch=(), break_at=stops, stop_after_tx=1)
        if rep.reason.startswith("break="):
            stage = stops[rep.pc]
            start, length = DM_REGIONS[stage]
            captured[stage] = np.array(m.dm[start:start + length], dtype=np.uint32)
            continue
        break
    if rep.reason != "tx" or len(captured) != len(STAGES):
        raise RuntimeError(f"classification did not complete: stopped on {rep.reason} at pc={rep.pc:#06x}")
    char = chr(rep.tx[0])
    index = _ASCII_TO_INDEX.get(rep.tx[0], -1)
    return Classification(char, PredictionTrace(captured, index, rep.tx[0]), rep.cycles, m)


_ASCII_TO_INDEX = {ascii_for(i): i for i in range(36)}
