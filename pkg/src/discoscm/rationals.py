"""Exact rational helpers shared across the package.

All probabilities and model values are `int` or `fractions.Fraction`;
floats appear only in the sampling layer. Fractions are always in lowest
terms by construction, which the serialization helpers here rely on.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

from .errors import InternalInvariantError, ParseError

Value = Union[int, Fraction]

ZERO = Fraction(0)
ONE = Fraction(1)


def as_value(x: Value) -> Value:
    """Normalize: integral fractions become plain ints."""
    if isinstance(x, bool):
        raise InternalInvariantError(f"boolean leaked into a numeric value: {x!r}")
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else x
    if isinstance(x, int):
        return x
    raise InternalInvariantError(f"not an exact value: {x!r}")


def parse_rational(text: str, *, line: int | None = None, col: int | None = None) -> Value:
    """Parse `p` or `p/q` into an exact value."""
    s = text.strip()
    try:
        if "/" in s:
            num, den = s.split("/", 1)
            return as_value(Fraction(int(num), int(den)))
        return int(s)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"malformed rational {text!r}", line=line, col=col) from None


def format_value(v: Value) -> str:
    v = as_value(v)
    if isinstance(v, int):
        return str(v)
    return f"{v.numerator}/{v.denominator}"


def format_fraction(v: Value) -> str:
    """Always render with an explicit denominator, e.g. `1/1`, `13/60`."""
    f = Fraction(v)
    return f"{f.numerator}/{f.denominator}"


def decimal5(v: Value) -> str:
    """Five-significant-digit decimal companion for a rational."""
    return f"{float(Fraction(v)):.5g}"


def check_probability(p: Fraction, context: str) -> Fraction:
    """Assert p is a valid probability; a failure is an engine bug."""
    if not isinstance(p, Fraction):
        p = Fraction(p)
    if p < 0 or p > 1:
        raise InternalInvariantError(f"{context}: probability {p} outside [0, 1]")
    return p


def fraction_to_json(v: Value) -> dict[str, str]:
    f = Fraction(v)
    return {"num": str(f.numerator), "den": str(f.denominator)}
