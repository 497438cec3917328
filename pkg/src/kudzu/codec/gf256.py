"""Arithmetic in GF(2^8) with vectorised helpers for Reed-Solomon coding."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# x^8 + x^4 + x^3 + x^2 + 1, generator 2
PRIMITIVE_POLY = 0x11D

EXP = np.zeros(512, dtype=np.uint8)
LOG = np.zeros(256, dtype=np.int32)

_x = 1
for _i in range(255):
    EXP[_i] = _x
    LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= PRIMITIVE_POLY
EXP[255:510] = EXP[0:255]
del _x, _i

# MUL[a, b] = a*b; row lookups MUL[c][array] multiply a whole stripe by c.
_a = np.arange(256)
MUL = EXP[(LOG[:, None] + LOG[None, :]) % 255].astype(np.uint8)
MUL[0, :] = 0
MUL[:, 0] = 0
del _a


def mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(EXP[255 - LOG[a]])


def div(a: int, b: int) -> int:
    return mul(a, inv(b))


@lru_cache(maxsize=4096)
def interpolation_matrix(src: tuple[int, ...], dst: tuple[int, ...]) -> np.ndarray:
    """Lagrange coefficients mapping evaluations at ``src`` to evaluations at ``dst``.

    Row ``a`` holds ``L_b(dst[a])`` for each source point ``b``, so a polynomial
    of degree < len(src) known at ``src`` is recovered at ``dst`` by a
    GF(256) matrix-vector product.
    """
    if len(set(src)) != len(src):
        raise ValueError("interpolation points must be distinct")
    out = np.zeros((len(dst), len(src)), dtype=np.uint8)
    for a, x in enumerate(dst):
        for b, xb in enumerate(src):
            num, den = 1, 1
            for c, xc in enumerate(src):
                if c != b:
                    num = mul(num, x ^ xc)
                    den = mul(den, xb ^ xc)
            out[a, b] = div(num, den)
    out.setflags(write=False)
    return out


def apply_matrix(matrix: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """GF(256) product ``matrix @ rows`` where ``rows`` is (len(src), width)."""
    out = np.zeros((matrix.shape[0], rows.shape[1]), dtype=np.uint8)
    for a in range(matrix.shape[0]):
        acc = out[a]
        for b in range(matrix.shape[1]):
            c = matrix[a, b]
            if c == 1:
                acc ^= rows[b]
            elif c:
                acc ^= MUL[c][rows[b]]
    return out
