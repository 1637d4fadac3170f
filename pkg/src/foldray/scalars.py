"""Scalar backends.

Two backends only: exact rationals (`fractions.Fraction`) for all structural
arithmetic, and mpmath big floats for the eigensolver and diagnostics. The
big-float precision is given in bits (>= 64, default 256) and can be set
globally through OSL_PRECISION_BITS or per call.
"""

from __future__ import annotations

import os
from fractions import Fraction

import mpmath

from .errors import UsageError

DEFAULT_PRECISION_BITS = 256
_MIN_PRECISION_BITS = 64


def precision_bits(override: int | None = None) -> int:
    """Resolve the working big-float precision in bits."""
    if override is not None:
        bits = int(override)
    else:
        raw = os.environ.get("OSL_PRECISION_BITS", "")
        bits = int(raw) if raw.strip() else DEFAULT_PRECISION_BITS
    if bits < _MIN_PRECISION_BITS:
        raise UsageError(f"precision must be at least {_MIN_PRECISION_BITS} bits, got {bits}")
    return bits


def mp_context(bits: int | None = None) -> mpmath.MPContext:
    """Fresh mpmath context at the requested bit precision."""
    ctx = mpmath.mp.clone()
    ctx.prec = precision_bits(bits)
    return ctx


def to_fraction(value) -> Fraction:
    """Parse ints, Fractions, and 'p/q' / decimal strings into Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"cannot parse rational {value!r}") from exc
    if isinstance(value, float):
        # Floats are accepted at the boundary only; exact binary value is kept.
        return Fraction(value)
    raise UsageError(f"cannot parse rational from {type(value).__name__}")


def format_fraction(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def fraction_to_mpf(value: Fraction, ctx) -> mpmath.mpf:
    return ctx.mpf(value.numerator) / ctx.mpf(value.denominator)


def mpf_to_fraction(value) -> Fraction:
    """Exact rational value of an mpf (mpfs are dyadic rationals)."""
    sign, man, exp, _ = mpmath.mpf(value)._mpf_
    if man == 0 and exp != 0:
        raise UsageError("cannot convert a non-finite float to a rational")
    mag = Fraction(man) * (Fraction(2) ** exp)
    return -mag if sign else mag
