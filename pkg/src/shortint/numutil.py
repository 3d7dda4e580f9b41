"""Deterministic accumulation and quadrature helpers.

All reductions here are fixed-order (chunked pairwise sums combined with
math.fsum), so results are bit-identical regardless of thread count.
"""
from __future__ import annotations

import math

import numpy as np

_CHUNK = 1 << 16
_BLOCK = 1 << 20
INT64_SAFE = 1 << 62


def fsum_array(a: np.ndarray) -> float:
    """High-precision sum of a real array: fsum over chunked pairwise sums."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    if a.size <= _CHUNK:
        return float(np.sum(a))
    parts = [float(np.sum(a[i : i + _CHUNK])) for i in range(0, a.size, _CHUNK)]
    return math.fsum(parts)


def csum_array(a: np.ndarray) -> complex:
    """Complex counterpart of fsum_array (real and imaginary parts separately)."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return complex(fsum_array(a.real), fsum_array(a.imag))
    return complex(fsum_array(a), 0.0)


def fsum_parts(parts: list[float]) -> float:
    return math.fsum(parts)


def csum_parts(parts: list[complex]) -> complex:
    return complex(math.fsum(p.real for p in parts), math.fsum(p.imag for p in parts))


def compensated_cumsum(a: np.ndarray) -> np.ndarray:
    """Prefix sums with block-level error compensation.

    Within a block plain cumsum is used; block offsets are carried with
    math.fsum so rounding does not accumulate across 1e8-length arrays.
    Output[i] = sum of a[:i+1], same length as input.
    """
    a = np.asarray(a)
    if a.dtype.kind in "iu":
        total = float(np.sum(a.astype(np.float64)))
        if abs(total) >= INT64_SAFE:
            raise OverflowError("integer prefix sums would overflow int64")
        return np.cumsum(a, dtype=np.int64)
    out = np.empty(a.shape, dtype=np.complex128 if np.iscomplexobj(a) else np.float64)
    re_parts: list[float] = []
    im_parts: list[float] = []
    complex_in = np.iscomplexobj(a)
    for i in range(0, a.size, _BLOCK):
        block = a[i : i + _BLOCK]
        carry_re = math.fsum(re_parts)
        if complex_in:
            carry = complex(carry_re, math.fsum(im_parts))
            s = np.cumsum(block)
            out[i : i + block.size] = s + carry
            re_parts.append(float(s[-1].real))
            im_parts.append(float(s[-1].imag))
        else:
            s = np.cumsum(block)
            out[i : i + block.size] = s + carry_re
            re_parts.append(float(s[-1]))
    return out


def quad_grid(t_max: float, step: float) -> tuple[np.ndarray, float]:
    """Uniform grid on [-t_max, t_max] with a power-of-two panel count.

    The actual step is <= `step`. A power-of-two count makes dt * count
    reproduce 2*t_max exactly in binary floating point, which keeps
    closed-form trapezoid identities exact.
    """
    if step <= 0 or t_max <= 0:
        raise ValueError("t_max and step must be positive")
    panels = 1
    while 2.0 * t_max / panels > step:
        panels *= 2
    dt = 2.0 * t_max / panels
    ts = -t_max + dt * np.arange(panels + 1)
    ts[-1] = t_max
    return ts, dt


def trapezoid(values: np.ndarray, dt: float) -> float:
    """Composite trapezoid rule for real samples on a uniform grid."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    interior = fsum_array(v[1:-1])
    return dt * (0.5 * float(v[0]) + interior + 0.5 * float(v[-1]))
