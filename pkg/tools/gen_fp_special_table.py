#!/usr/bin/env python3
"""Generate tests/data/fp_special_table.json.

Independent of fpgacnn.softfp: every entry starts from the host
single-precision result (numpy float32, round-to-nearest) and is then amended
by the datapath decisions, which are modelled here with exact rationals:

* any NaN result becomes 0x7FC00000
* multiply results below the smallest normal flush to signed zero
* results are truncated toward zero instead of rounded; for add/sub the
  aligned (smaller-exponent) operand is first truncated to one bit below the
  larger operand's last place
* an exact-zero sum is +0

Run from the repository root:  python3 tools/gen_fp_special_table.py
"""

import json
import struct
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

SPECIAL_VALUES = [
    0x00000001,  # POS_SUB_MIN
    0x007FFFFF,  # POS_SUB_MAX
    0x00800000,  # POS_MIN
    0x7F7FFFFF,  # POS_MAX
    0x807FFFFF,  # NEG_SUB_MIN
    0x80000001,  # NEG_SUB_MAX
    0xFF7FFFFF,  # NEG_MIN
    0x80800000,  # NEG_MAX
    0x3F800001,  # SLT_ONE
    0x3F7FFFFF,  # LST_ONE
    0xBF7FFFFF,  # SLT_NEG_ONE
    0xBF800001,  # LST_NEG_ONE
    0x00000000,  # POS_ZERO
    0x80000000,  # NEG_ZERO
    0x7F800000,  # POS_INF
    0xFF800000,  # NEG_INF
]
NAMES = [
    "POS_SUB_MIN", "POS_SUB_MAX", "POS_MIN", "POS_MAX",
    "NEG_SUB_MIN", "NEG_SUB_MAX", "NEG_MIN", "NEG_MAX",
    "SLT_ONE", "LST_ONE", "SLT_NEG_ONE", "LST_NEG_ONE",
    "POS_ZERO", "NEG_ZERO", "POS_INF", "NEG_INF",
]
QNAN = 0x7FC00000
GUARD_BITS = 1


def host(op, a, b):
    x = np.array([a], dtype=np.uint32).view(np.float32)
    y = np.array([b], dtype=np.uint32).view(np.float32)
    with np.errstate(all="ignore"):
        r = x + y if op == "add" else x * y
    return int(r.view(np.uint32)[0])


def is_nan(w):
    return (w & 0x7FFFFFFF) > 0x7F800000


def finite(w):
    return (w & 0x7F800000) != 0x7F800000


def exact(w):
    """(value, effective exponent) of a finite word."""
    e = (w >> 23) & 0xFF
    f = w & 0x7FFFFF
    eff = e if e else 1
    m = (f | 0x800000) if e else f
    v = Fraction(m) * Fraction(2) ** (eff - 150)
    return (-v if w >> 31 else v), eff


def truncate_to_f32(x, gradual):
    sign = 0x80000000 if x < 0 else 0
    mag = abs(x)
    if mag == 0:
        return sign
    e = mag.numerator.bit_length() - mag.denominator.bit_length()
    if Fraction(2) ** e > mag:
        e -= 1
    if e >= 128:
        return sign | 0x7F800000
    if e < -126:
        if not gradual:
            return sign
        m = int(mag * Fraction(2) ** 149)
        return sign | m
    m = int(mag * Fraction(2) ** (23 - e))
    return sign | ((e + 127) << 23) | (m - 0x800000)


def model_add(a, b):
    if not (finite(a) and finite(b)):
        h = host("add", a, b)
        return QNAN if is_nan(h) else h
    va, ea = exact(a)
    vb, eb = exact(b)
    if ea < eb:
        va, vb, ea, eb = vb, va, eb, ea
    grid = Fraction(2) ** (ea - 150 - GUARD_BITS)
    aligned = int(abs(vb) / grid) * grid
    if vb < 0:
        aligned = -aligned
    s = va + aligned
    if s == 0:
        return 0
    return truncate_to_f32(s, gradual=True)


def model_mul(a, b):
    if not (finite(a) and finite(b)):
        h = host("mul", a, b)
        return QNAN if is_nan(h) else h
    va, _ = exact(a)
    vb, _ = exact(b)
    p = va * vb
    if p == 0:
        return (a ^ b) & 0x80000000
    return truncate_to_f32(p, gradual=False)


def ulp_key(w):
    return -(w & 0x7FFFFFFF) if w >> 31 else w


def main():
    table = {"values": [f"{v:08x}" for v in SPECIAL_VALUES], "names": NAMES, "add": [], "mul": []}
    changed = {"add": 0, "mul": 0}
    for op, model in (("add", model_add), ("mul", model_mul)):
        for a in SPECIAL_VALUES:
            row = []
            for b in SPECIAL_VALUES:
                m = model(a, b)
                h = host(op, a, b)
                if m != h:
                    changed[op] += 1
                    explained = (is_nan(h) and m == QNAN) or abs(ulp_key(m) - ulp_key(h)) <= 1 or (
                        op == "mul" and (m & 0x7FFFFFFF) == 0
                    ) or (op == "add" and (h & 0x7FFFFFFF) == 0 and m == 0)
                    if not explained:
                        sys.exit(f"unexplained {op} {a:08x} {b:08x}: model {m:08x} host {h:08x}")
                row.append(f"{m:08x}")
            table[op].append(row)
    out = Path(__file__).resolve().parent.parent / "tests" / "data" / "fp_special_table.json"
    out.write_text(json.dumps(table, indent=1) + "\n")
    print(f"wrote {out}; entries amended from host: add={changed['add']} mul={changed['mul']}")


if __name__ == "__main__":
    main()
