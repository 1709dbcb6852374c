"""Bit-level single-precision arithmetic for the EXT_ALU datapaths.

All operations take and return raw 32-bit words (Python ints). Results are
truncated, never rounded. The ``*_bits`` functions are the fast paths used by
the emulator and the golden model; ``fp_add``/``fp_sub``/``fp_mul`` also
return the flag outputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

MASK32 = 0xFFFFFFFF
SIGN = 0x80000000
EXP_MASK = 0x7F800000
FRAC_MASK = 0x007FFFFF
HIDDEN = 0x00800000

POS_ZERO = 0x00000000
NEG_ZERO = 0x80000000
POS_INF = 0x7F800000
NEG_INF = 0xFF800000
QNAN = 0x7FC00000

INT32_MAX = 0x7FFFFFFF
INT32_MIN = -0x80000000

# Extra low-order bit kept on the aligned operand. Without it, a one-place
# alignment followed by cancellation amplifies the dropped bit into many ulps.
GUARD_BITS = 1
_TOP = 24 + GUARD_BITS
_MAX_ALIGN = 24 + GUARD_BITS


class FpFlags(NamedTuple):
    zr: bool
    neg: bool
    ov: bool = False


@dataclass(frozen=True)
class Float32Bits:
    """View of a raw word as sign / exponent / mantissa fields."""

    raw: int

    def __post_init__(self):
        if not 0 <= self.raw <= MASK32:
            raise ValueError(f"not a 32-bit word: {self.raw:#x}")

    @classmethod
    def pack(cls, sign: int, exponent: int, mantissa: int) -> "Float32Bits":
        return cls(((sign & 1) << 31) | ((exponent & 0xFF) << 23) | (mantissa & FRAC_MASK))

    @classmethod
    def from_float(cls, value: float) -> "Float32Bits":
        return cls(float_to_bits(value))

    @property
    def sign(self) -> int:
        return self.raw >> 31

    @property
    def exponent(self) -> int:
        return (self.raw >> 23) & 0xFF

    @property
    def mantissa(self) -> int:
        return self.raw & FRAC_MASK

    def classify(self) -> str:
        return classify(self.raw)

    def to_float(self) -> float:
        return bits_to_float(self.raw)


def classify(bits: int) -> str:
    """Return one of 'zero', 'subnormal', 'normal', 'infinity', 'nan'."""
    e = (bits >> 23) & 0xFF
    f = bits & FRAC_MASK
    if e == 0:
        return "subnormal" if f else "zero"
    if e == 0xFF:
        return "nan" if f else "infinity"
    return "normal"


def is_nan(bits: int) -> bool:
    return (bits & 0x7FFFFFFF) > POS_INF


def bits_to_float(bits: int) -> float:
    return struct.unpack("<f", struct.pack("<I", bits & MASK32))[0]


def float_to_bits(value: float) -> int:
    return struct.unpack("<I", struct.pack("<f", value))[0]


def flags_of(bits: int) -> FpFlags:
    zr = (bits & 0x7FFFFFFF) == 0
    return FpFlags(zr, bool(bits & SIGN) and not zr, False)


def add_bits(a: int, b: int) -> int:
    ea = (a >> 23) & 0xFF
    eb = (b >> 23) & 0xFF

    if ea == 0xFF or eb == 0xFF:
        if (ea == 0xFF and a & FRAC_MASK) or (eb == 0xFF and b & FRAC_MASK):
            return QNAN
        if ea == 0xFF and eb == 0xFF:
            return a if a == b else QNAN
        return a if ea == 0xFF else b

    ma = a & FRAC_MASK
    if ea:
        ma |= HIDDEN
    else:
        ea = 1
    mb = b & FRAC_MASK
    if eb:
        mb |= HIDDEN
    else:
        eb = 1

    # larger exponent becomes the common exponent; the other is aligned
    if ea < eb:
        a, b, ea, eb, ma, mb = b, a, eb, ea, mb, ma
    shift = ea - eb
    ma <<= GUARD_BITS
    mb = (mb << GUARD_BITS) >> (shift if shift < _MAX_ALIGN else _MAX_ALIGN)

    s = (-ma if a & SIGN else ma) + (-mb if b & SIGN else mb)
    if s == 0:
        return POS_ZERO
    if s < 0:
        sign = SIGN
        s = -s
    else:
        sign = 0

    e = ea
    n = s.bit_length()
    if n > _TOP:
        s >>= n - _TOP
        e += n - _TOP
    elif n < _TOP:
        lz = _TOP - n
        if lz > e - 1:
            lz = e - 1
        s <<= lz
        e -= lz
    s >>= GUARD_BITS

    if s < HIDDEN:
        e = 0
    elif e >= 0xFF:
        return sign | POS_INF
    return sign | (e << 23) | (s & FRAC_MASK)


def sub_bits(a: int, b: int) -> int:
    return add_bits(a, b ^ SIGN)


def mul_bits(a: int, b: int) -> int:
    sign = (a ^ b) & SIGN
    ea = (a >> 23) & 0xFF
    eb = (b >> 23) & 0xFF
    fa = a & FRAC_MASK
    fb = b & FRAC_MASK

    if ea == 0xFF or eb == 0xFF:
        if (ea == 0xFF and fa) or (eb == 0xFF and fb):
            return QNAN
        if (ea == 0 and fa == 0) or (eb == 0 and fb == 0):
            return QNAN
        return sign | POS_INF
    if (ea == 0 and fa == 0) or (eb == 0 and fb == 0):
        return sign

    if ea:
        fa |= HIDDEN
    else:
        ea = 1
    if eb:
        fb |= HIDDEN
    else:
        eb = 1

    p = fa * fb
    n = p.bit_length()
    e = ea + eb - 174 + n
    if e >= 0xFF:
        return sign | POS_INF
    if e <= 0:
        return sign
    if n > 24:
        p >>= n - 24
    else:
        p <<= 24 - n
    return sign | (e << 23) | (p & FRAC_MASK)


def fp_add(a: int, b: int) -> tuple[int, FpFlags]:
    r = add_bits(a, b)
    return r, flags_of(r)


def fp_sub(a: int, b: int) -> tuple[int, FpFlags]:
    r = add_bits(a, b ^ SIGN)
    return r, flags_of(r)


def fp_mul(a: int, b: int) -> tuple[int, FpFlags]:
    r = mul_bits(a, b)
    return r, flags_of(r)


def itf(i: int) -> int:
    """Signed 32-bit integer to float; magnitudes beyond 2**24 truncate."""
    i &= MASK32
    if i == 0:
        return POS_ZERO
    if i & SIGN:
        sign = SIGN
        m = (1 << 32) - i
    else:
        sign = 0
        m = i
    n = m.bit_length()
    if n > 24:
        m >>= n - 24
    else:
        m <<= 24 - n
    return sign | ((126 + n) << 23) | (m & FRAC_MASK)


def fti(a: int) -> int:
    """Float to signed 32-bit integer, truncating toward zero and saturating."""
    e = (a >> 23) & 0xFF
    f = a & FRAC_MASK
    neg = bool(a & SIGN)
    if e == 0xFF:
        if f:
            return 0
        return INT32_MIN if neg else INT32_MAX
    if e < 127:
        return 0
    shift = e - 150
    m = f | HIDDEN
    mag = m << shift if shift >= 0 else m >> -shift
    if neg:
        return -mag if mag <= 1 << 31 else INT32_MIN
    return mag if mag <= INT32_MAX else INT32_MAX
