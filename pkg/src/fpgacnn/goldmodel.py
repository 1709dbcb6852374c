"""Reference LeNet-style CNN (bias-free) with two arithmetic backends.

``forward_soft`` runs every operation through :mod:`fpgacnn.softfp` in the
firmware's accumulation order and is the bit-exact oracle for the emulator.
``forward_native`` runs the same pipeline in host float32 with whatever
order numpy picks, as an independent sanity check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import softfp
from .assembler import emit_hex, hex_to_words
from .imgproc import IMAGE_WORDS, PADDED_SIDE, padding_indices

SHAPES = {
    "conv1": (6, 1, 5, 5),
    "conv2": (16, 6, 5, 5),
    "fc1": (120, 400),
    "fc2": (84, 120),
    "fc3": (36, 84),
}
LAYERS = tuple(SHAPES)
SIZES = {name: int(np.prod(shape)) for name, shape in SHAPES.items()}
OFFSETS = {}
_off = 0
for _name in LAYERS:
    OFFSETS[_name] = _off
    _off += SIZES[_name]
TOTAL_WEIGHTS = _off  # 63654
del _off, _name

STAGES = {
    "input": (PADDED_SIDE, PADDED_SIDE),
    "conv1": (6, 28, 28),
    "pool1": (6, 14, 14),
    "conv2": (16, 10, 10),
    "pool2": (16, 5, 5),
    "fc1": (120,),
    "fc2": (84,),
    "scores": (36,),
}

QUARTER = 0x3E800000


def ascii_for(index: int) -> int:
    """Class index to ASCII: 0-9 are digits, 10-35 are 'A'-'Z'."""
    if not 0 <= index < 36:
        raise ValueError(f"class index {index} outside 0..35")
    return 0x30 + index if index < 10 else 0x37 + index


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class WeightBank:
    """The five parameter tensors as raw float32 bit patterns (uint32)."""

    conv1: np.ndarray
    conv2: np.ndarray
    fc1: np.ndarray
    fc2: np.ndarray
    fc3: np.ndarray

    def __post_init__(self):
        for name in LAYERS:
            arr = np.asarray(getattr(self, name), dtype=np.uint32)
            if arr.size != SIZES[name]:
                raise ValueError(f"{name}: expected {SIZES[name]} weights, got {arr.size}")
            setattr(self, name, arr.reshape(SHAPES[name]))

    @classmethod
    def from_flat(cls, words: Sequence[int]) -> "WeightBank":
        flat = np.asarray(words, dtype=np.uint32).reshape(-1)
        if flat.size != TOTAL_WEIGHTS:
            raise ValueError(f"expected {TOTAL_WEIGHTS} weights, got {flat.size}")
        return cls(**{n: flat[OFFSETS[n]:OFFSETS[n] + SIZES[n]] for n in LAYERS})

    @classmethod
    def from_floats(cls, **tensors) -> "WeightBank":
        return cls(**{n: np.asarray(tensors[n], dtype=np.float32).view(np.uint32) for n in LAYERS})

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).reshape(-1) for n in LAYERS])

    def floats(self, name: str) -> np.ndarray:
        return getattr(self, name).view(np.float32)

    def __eq__(self, other):
        if not isinstance(other, WeightBank):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in LAYERS)


def gen_weights(seed: int) -> WeightBank:
    """Seeded pseudo-weights, uniform in [-0.5, 0.5].

    Generator: numpy PCG64 seeded with ``seed`` (via SeedSequence); one
    ``random()`` double per word in flat layout order (conv1, conv2, fc1,
    fc2, fc3, each row-major), shifted by -0.5 and rounded to float32.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    values = (rng.random(TOTAL_WEIGHTS) - 0.5).astype(np.float32)
    return WeightBank.from_flat(values.view(np.uint32))


def write_weight_hex(w: WeightBank) -> str:
    return emit_hex(w.flat().tolist())


def read_weight_hex(text: str) -> WeightBank:
    return WeightBank.from_flat(hex_to_words(text, TOTAL_WEIGHTS, exact=True))


def write_image_hex(image: Sequence[int]) -> str:
    image = _check_image(image, require_border=False)
    return emit_hex(image, data_digits=2)


def read_image_hex(text: str) -> list[int]:
    return hex_to_words(text, IMAGE_WORDS, data_digits=2, exact=True)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass
class PredictionTrace:
    stages: dict[str, np.ndarray]
    index: int
    ascii: int

    def __post_init__(self):
        for name, dims in STAGES.items():
            arr = np.asarray(self.stages[name], dtype=np.uint32)
            if arr.size != int(np.prod(dims)):
                raise ValueError(f"stage {name}: expected dims {dims}, got {arr.size} values")
            self.stages[name] = arr.reshape(dims)

    @property
    def char(self) -> str:
        return chr(self.ascii)

    def scores_float(self) -> np.ndarray:
        return self.stages["scores"].view(np.float32)

    def dump(self) -> str:
        """One ``stage flat-index value-hex`` line per element."""
        lines = []
        for name in STAGES:
            for i, v in enumerate(self.stages[name].reshape(-1).tolist()):
                lines.append(f"{name} {i} {v:08x}\n")
        return "".join(lines)

    @classmethod
    def from_dump(cls, text: str) -> "PredictionTrace":
        values: dict[str, list[int]] = {name: [] for name in STAGES}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                name, index, value = line.split()
                if int(index) != len(values[name]):
                    raise ValueError("indices out of order")
                values[name].append(int(value, 16))
            except (ValueError, KeyError) as e:
                raise ValueError(f"trace dump line {lineno}: {e}") from None
        scores = values["scores"]
        index = _argmax_soft(scores) if len(scores) == 36 else 0
        return cls({n: np.array(v, dtype=np.uint32) for n, v in values.items()}, index, ascii_for(index))


@dataclass
class StageResult:
    stage: str
    ok: bool
    mismatches: int = 0
    index: Optional[int] = None
    a_value: Optional[int] = None
    b_value: Optional[int] = None

    def __str__(self):
        if self.ok:
            return f"{self.stage}: ok"
        return (
            f"{self.stage}: {self.mismatches} mismatch(es), first at {self.index}: "
            f"{self.a_value:08x} ({softfp.bits_to_float(self.a_value):.9g}) vs "
            f"{self.b_value:08x} ({softfp.bits_to_float(self.b_value):.9g})"
        )


@dataclass
class CompareReport:
    results: list[StageResult] = field(default_factory=list)
    prediction_match: bool = True

    @property
    def ok(self) -> bool:
        return self.prediction_match and all(r.ok for r in self.results)

    def __str__(self):
        lines = [str(r) for r in self.results]
        lines.append("prediction: " + ("match" if self.prediction_match else "MISMATCH"))
        lines.append("PASS" if self.ok else "FAIL")
        return "\n".join(lines)


def compare_traces(
    a: PredictionTrace,
    b: PredictionTrace,
    mode: str = "bitexact",
    rel: float = 1e-3,
    abs_tol: float = 1e-6,
    stages: Optional[Sequence[str]] = None,
) -> CompareReport:
    """Per-stage comparison. ``mode`` is ``"bitexact"`` or ``"tolerance"``."""
    if mode not in ("bitexact", "tolerance"):
        raise ValueError(f"unknown compare mode {mode!r}")
    report = CompareReport(prediction_match=a.ascii == b.ascii)
    for name in stages or STAGES:
        x = a.stages[name]
        y = b.stages[name]
        if x.shape != y.shape:
            raise ValueError(f"stage {name}: dims {x.shape} vs {y.shape}")
        x = x.reshape(-1)
        y = y.reshape(-1)
        if mode == "bitexact":
            bad = x != y
        else:
            xf = x.view(np.float32).astype(np.float64)
            yf = y.view(np.float32).astype(np.float64)
            diff = np.abs(xf - yf)
            scale = np.maximum(np.abs(xf), np.abs(yf))
            with np.errstate(invalid="ignore"):
                close = (diff <= abs_tol) | (diff <= rel * scale) | (x == y)
            bad = ~close
        idx = np.flatnonzero(bad)
        if idx.size:
            i = int(idx[0])
            report.results.append(StageResult(name, False, int(idx.size), i, int(x[i]), int(y[i])))
        else:
            report.results.append(StageResult(name, True))
    return report


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


_BORDER = np.array(padding_indices())


def _check_image(image, require_border: bool = True) -> list[int]:
    arr = np.asarray(image).reshape(-1)
    if arr.size != IMAGE_WORDS:
        raise ValueError(f"image must have {IMAGE_WORDS} entries (padded 32x32), got {arr.size}")
    if require_border and np.any(arr[_BORDER] != 0):
        raise ValueError("padding border of the image must be zero")
    return [int(v) for v in arr.tolist()]


def _relu_soft(s: int) -> int:
    # mirrors the firmware: ADDF s, s, +0 then keep unless N is set
    s = softfp.add_bits(s, 0)
    return 0 if s & 0x80000000 and s & 0x7FFFFFFF else s


def _conv_soft(inp: list[int], side: int, in_ch: int, kernel: list[int], out_ch: int) -> list[int]:
    add = softfp.add_bits
    mul = softfp.mul_bits
    so = side - 4
    plane = side * side
    out = []
    for oc in range(out_ch):
        kbase = oc * in_ch * 25
        for y in range(so):
            for x in range(so):
                s = 0
                k = kbase
                for ic in range(in_ch):
                    row = ic * plane + y * side + x
                    for _ky in range(5):
                        for kx in range(5):
                            s = add(s, mul(inp[row + kx], kernel[k]))
                            k += 1
                        row += side
                out.append(_relu_soft(s))
    return out


def _pool_soft(inp: list[int], width: int, channels: int) -> list[int]:
    add = softfp.add_bits
    mul = softfp.mul_bits
    half = width // 2
    out = []
    for c in range(channels):
        base = c * width * width
        for y in range(half):
            for x in range(half):
                a = base + 2 * y * width + 2 * x
                s = add(add(add(inp[a], inp[a + 1]), inp[a + width]), inp[a + width + 1])
                out.append(mul(QUARTER, s))
    return out


def _fc_soft(inp: list[int], weights: list[int], n_out: int, relu: bool) -> list[int]:
    add = softfp.add_bits
    mul = softfp.mul_bits
    n_in = len(inp)
    out = []
    for j in range(n_out):
        row = weights[j * n_in:(j + 1) * n_in]
        s = 0
        for wv, xv in zip(row, inp):
            s = add(s, mul(wv, xv))
        out.append(_relu_soft(s) if relu else s)
    return out


def _argmax_soft(scores: Sequence[int]) -> int:
    # replace only when score - best is strictly positive (the firmware's SUBF test)
    best = scores[0]
    index = 0
    for i in range(1, len(scores)):
        d = softfp.sub_bits(scores[i], best)
        if d & 0x7FFFFFFF and not d & 0x80000000:
            best = scores[i]
            index = i
    return index


def forward_soft(image: Sequence[int], w: WeightBank) -> PredictionTrace:
    img = _check_image(image)
    x0 = [softfp.itf(v) for v in img]
    c1 = _conv_soft(x0, 32, 1, w.conv1.reshape(-1).tolist(), 6)
    p1 = _pool_soft(c1, 28, 6)
    c2 = _conv_soft(p1, 14, 6, w.conv2.reshape(-1).tolist(), 16)
    p2 = _pool_soft(c2, 10, 16)
    f1 = _fc_soft(p2, w.fc1.reshape(-1).tolist(), 120, relu=True)
    f2 = _fc_soft(f1, w.fc2.reshape(-1).tolist(), 84, relu=True)
    sc = _fc_soft(f2, w.fc3.reshape(-1).tolist(), 36, relu=False)
    index = _argmax_soft(sc)
    stages = dict(input=x0, conv1=c1, pool1=p1, conv2=c2, pool2=p2, fc1=f1, fc2=f2, scores=sc)
    return PredictionTrace({k: np.array(v, dtype=np.uint32) for k, v in stages.items()}, index, ascii_for(index))


def _conv_native(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(x, (5, 5), axis=(1, 2))
    return np.einsum("iyxab,oiab->oyx", win, k, dtype=np.float32)


def _pool_native(x: np.ndarray) -> np.ndarray:
    c, h, wdt = x.shape
    blocks = x.reshape(c, h // 2, 2, wdt // 2, 2)
    return (blocks.sum(axis=(2, 4), dtype=np.float32) * np.float32(0.25)).astype(np.float32)


def forward_native(image: Sequence[int], w: WeightBank) -> PredictionTrace:
    img = np.asarray(_check_image(image), dtype=np.float32).reshape(1, PADDED_SIDE, PADDED_SIDE)
    c1 = np.maximum(_conv_native(img, w.floats("conv1")), np.float32(0))
    p1 = _pool_native(c1)
    c2 = np.maximum(_conv_native(p1, w.floats("conv2")), np.float32(0))
    p2 = _pool_native(c2)
    f1 = np.maximum(w.floats("fc1") @ p2.reshape(-1), np.float32(0))
    f2 = np.maximum(w.floats("fc2") @ f1, np.float32(0))
    sc = (w.floats("fc3") @ f2).astype(np.float32)
    index = int(np.argmax(sc))
    stages = dict(input=img[0], conv1=c1, pool1=p1, conv2=c2, pool2=p2, fc1=f1, fc2=f2, scores=sc)
    # +0.0 for every clamped/zero element keeps zero traces identical to forward_soft
    bits = {k: (np.asarray(v, dtype=np.float32) + np.float32(0)).view(np.uint32) for k, v in stages.items()}
    return PredictionTrace(bits, index, ascii_for(index))


def predict(image: Sequence[int], w: WeightBank) -> str:
    return forward_soft(image, w).char
