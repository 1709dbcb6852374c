"""Image compressor: 224x224 grayscale -> 28x28 block averages -> padded 32x32."""

from __future__ import annotations

from pathlib import Path
from typing import Iterator, Union

import numpy as np

from .assembler import HexFormatError, parse_hex

FRAME_SIDE = 224
FRAME_PIXELS = FRAME_SIDE * FRAME_SIDE
BLOCK = 8
OUT_SIDE = FRAME_SIDE // BLOCK  # 28
PAD = 2
PADDED_SIDE = OUT_SIDE + 2 * PAD  # 32
IMAGE_WORDS = PADDED_SIDE * PADDED_SIDE  # 1024


def as_frame(frame) -> np.ndarray:
    """Validate and return a (224, 224) uint8 view of ``frame``."""
    arr = np.asarray(frame)
    if arr.size != FRAME_PIXELS:
        raise ValueError(f"frame must have {FRAME_PIXELS} pixels, got {arr.size}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("frame pixels must be in 0..255")
        arr = arr.astype(np.uint8)
    return arr.reshape(FRAME_SIDE, FRAME_SIDE)


class BlockAccumulator:
    """Running 14-bit sums for one row of 28 blocks, fed one pixel at a time."""

    def __init__(self):
        self.sums = [0] * OUT_SIDE

    def feed(self, x: int, value: int) -> None:
        self.sums[x >> 3] += value

    def drain(self) -> list[int]:
        # the average is the top 8 bits of the 14-bit sum
        out = [s >> 6 for s in self.sums]
        self.sums = [0] * OUT_SIDE
        return out


def stream_compress(frame) -> Iterator[tuple[int, int]]:
    """Yield ``(compress_addr, pixel)`` writes in raster order, as the unit emits them."""
    px = as_frame(frame)
    acc = BlockAccumulator()
    addr = 0
    for y in range(FRAME_SIDE):
        row = px[y].tolist()
        for x in range(FRAME_SIDE):
            acc.feed(x, row[x])
        if y % BLOCK == BLOCK - 1:
            for value in acc.drain():
                yield addr, value
                addr += 1


def compress(frame) -> np.ndarray:
    px = as_frame(frame).astype(np.uint32)
    sums = px.reshape(OUT_SIDE, BLOCK, OUT_SIDE, BLOCK).sum(axis=(1, 3))
    return (sums >> 6).astype(np.uint8)


def pad_map(idx28: int) -> int:
    if not 0 <= idx28 < OUT_SIDE * OUT_SIDE:
        raise ValueError(f"compressed index {idx28} outside 0..{OUT_SIDE * OUT_SIDE - 1}")
    r, c = divmod(idx28, OUT_SIDE)
    return (r + PAD) * PADDED_SIDE + (c + PAD)


def compress_to_image_mem(frame) -> list[int]:
    image = [0] * IMAGE_WORDS
    for i, value in enumerate(compress(frame).reshape(-1).tolist()):
        image[pad_map(i)] = value
    return image


def padding_indices() -> list[int]:
    interior = {pad_map(i) for i in range(OUT_SIDE * OUT_SIDE)}
    return [i for i in range(IMAGE_WORDS) if i not in interior]


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def load_pixels(path: Union[str, Path]) -> np.ndarray:
    """Read a raw 50,176-byte frame, or a 2-digit hex file of 50,176 or 1,024 entries.

    Returns a (224, 224) frame or, for a 1,024-entry hex file, the padded
    image-memory contents as a flat array of 1,024 values.
    """
    data = Path(path).read_bytes()
    if len(data) == FRAME_PIXELS:
        return np.frombuffer(data, dtype=np.uint8).reshape(FRAME_SIDE, FRAME_SIDE)
    if data[:1] == b"@":
        pairs = parse_hex(data.decode("ascii"), data_digits=2)
        if len(pairs) not in (FRAME_PIXELS, IMAGE_WORDS):
            raise HexFormatError(len(pairs), f"{path}: expected {FRAME_PIXELS} or {IMAGE_WORDS} entries, found {len(pairs)}")
        values = np.zeros(len(pairs), dtype=np.uint8)
        for addr, value in pairs:
            if addr >= len(pairs):
                raise HexFormatError(addr, f"{path}: address {addr:#x} out of range")
            values[addr] = value
        if len(pairs) == FRAME_PIXELS:
            return values.reshape(FRAME_SIDE, FRAME_SIDE)
        return values
    raise ValueError(f"{path}: {len(data)} bytes is neither a {FRAME_PIXELS}-byte raw frame nor a hex image")


def save_frame(path: Union[str, Path], frame) -> None:
    Path(path).write_bytes(as_frame(frame).tobytes())


# ---------------------------------------------------------------------------
# fixture frames
# ---------------------------------------------------------------------------

# stroke polylines in unit coordinates (x, y), one glyph per fixture
_GLYPHS = [
    [[(0.5, 0.15), (0.72, 0.3), (0.78, 0.5), (0.72, 0.7), (0.5, 0.85), (0.28, 0.7), (0.22, 0.5), (0.28, 0.3), (0.5, 0.15)]],
    [[(0.4, 0.25), (0.52, 0.15), (0.52, 0.85)], [(0.38, 0.85), (0.66, 0.85)]],
    [[(0.25, 0.18), (0.75, 0.18), (0.42, 0.85)]],
    [[(0.2, 0.85), (0.5, 0.15), (0.8, 0.85)], [(0.32, 0.58), (0.68, 0.58)]],
    [[(0.25, 0.2), (0.75, 0.8)], [(0.75, 0.2), (0.25, 0.8)]],
]
FIXTURE_COUNT = len(_GLYPHS)


def _draw(strokes, width: float) -> np.ndarray:
    yy, xx = np.mgrid[0:FRAME_SIDE, 0:FRAME_SIDE].astype(np.float64) + 0.5
    px = np.stack([xx, yy], axis=-1) / FRAME_SIDE
    dist = np.full((FRAME_SIDE, FRAME_SIDE), np.inf)
    for stroke in strokes:
        for p, q in zip(stroke, stroke[1:]):
            p = np.asarray(p)
            q = np.asarray(q)
            d = q - p
            t = np.clip(((px - p) @ d) / (d @ d), 0.0, 1.0)
            nearest = p + t[..., None] * d
            dist = np.minimum(dist, np.linalg.norm(px - nearest, axis=-1))
    # soft-edged strokes: full intensity inside, linear fall-off over one width
    level = np.clip(2.0 - dist / width, 0.0, 1.0)
    return np.round(level * 255).astype(np.uint8)


def fixture_frame(index: int) -> np.ndarray:
    """Deterministic synthetic handwriting frame (bright strokes on black)."""
    return _draw(_GLYPHS[index % FIXTURE_COUNT], width=0.045)


def random_frame(seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.integers(0, 256, size=(FRAME_SIDE, FRAME_SIDE), dtype=np.uint8)
