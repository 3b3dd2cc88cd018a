"""Integer intervals with constant-clamped bounds.

Bounds are Python ints or the float infinities.  Non-singleton intervals are
clamped: a finite bound whose magnitude exceeds the bound constant is pushed
outward (to an infinity, or to the constant itself when pushing to an
infinity would flip the bound's side).  Singletons are concrete values and
are never clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

INF = float("inf")
NEG_INF = float("-inf")

BOUND_CONST = 32
INT64_MAX = 2**63 - 1

Bound = Union[int, float]


def _clamp_lo(lo: Bound, bound: int) -> Bound:
    if lo == NEG_INF or lo == INF:
        return lo
    if lo < -bound:
        return NEG_INF
    if lo > bound:
        return bound
    return lo


def _clamp_hi(hi: Bound, bound: int) -> Bound:
    if hi == NEG_INF or hi == INF:
        return hi
    if hi > bound:
        return INF
    if hi < -bound:
        return -bound
    return hi


@dataclass(frozen=True)
class Interval:
    lo: Bound
    hi: Bound

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")
        if self.lo == INF or self.hi == NEG_INF:
            raise ValueError("interval bounds may not be the wrong infinity")

    @classmethod
    def const(cls, value: int) -> Interval:
        return cls(value, value)

    @classmethod
    def top(cls) -> Interval:
        return TOP

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi

    @property
    def is_finite(self) -> bool:
        return self.lo != NEG_INF and self.hi != INF

    @property
    def value(self) -> int:
        if not self.is_singleton:
            raise ValueError(f"{self} is not a singleton")
        return int(self.lo)

    def count(self) -> Bound:
        """Number of integers in the interval (INF when unbounded)."""
        if not self.is_finite:
            return INF
        return int(self.hi) - int(self.lo) + 1

    def values(self) -> Iterator[int]:
        if not self.is_finite:
            raise ValueError(f"cannot enumerate {self}")
        return iter(range(int(self.lo), int(self.hi) + 1))

    def __contains__(self, x: int) -> bool:
        return self.lo <= x <= self.hi

    def issubset(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def meet(self, other: Interval) -> Interval | None:
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            return None
        return Interval(lo, hi)

    def hull(self, other: Interval, bound: int = BOUND_CONST) -> Interval:
        return clamp(min(self.lo, other.lo), max(self.hi, other.hi), bound)

    def disjoint(self, other: Interval) -> bool:
        return self.hi < other.lo or other.hi < self.lo

    def __str__(self) -> str:
        lo = "-inf" if self.lo == NEG_INF else str(int(self.lo))
        hi = "+inf" if self.hi == INF else str(int(self.hi))
        return f"[{lo},{hi}]"

    def key(self) -> tuple:
        return (self.lo, self.hi)


TOP = Interval(NEG_INF, INF)
ZERO = Interval(0, 0)


def clamp(lo: Bound, hi: Bound, bound: int = BOUND_CONST) -> Interval:
    """Build an interval, widening bounds that leave [-bound, bound].

    >>> clamp(0, 100)
    Interval(lo=0, hi=inf)
    >>> clamp(-40, 5)
    Interval(lo=-inf, hi=5)
    """
    if lo > hi:
        raise ValueError(f"clamp requires lo <= hi, got ({lo}, {hi})")
    if lo == hi and lo not in (INF, NEG_INF) and abs(lo) <= INT64_MAX:
        return Interval(int(lo), int(hi))
    return Interval(_clamp_lo(lo, bound), _clamp_hi(hi, bound))


# -- arithmetic -------------------------------------------------------------
#
# Infinite bounds never meet each other with opposite signs in add/sub because
# lo <= hi keeps -inf on the left and +inf on the right.

def _mul_bound(a: Bound, b: Bound) -> Bound:
    if a == 0 or b == 0:
        return 0
    return a * b


def add(a: Interval, b: Interval, bound: int = BOUND_CONST) -> Interval:
    return clamp(a.lo + b.lo, a.hi + b.hi, bound)


def neg(a: Interval, bound: int = BOUND_CONST) -> Interval:
    return clamp(-a.hi, -a.lo, bound)


def sub(a: Interval, b: Interval, bound: int = BOUND_CONST) -> Interval:
    return add(a, neg(b, bound), bound)


def mul(a: Interval, b: Interval, bound: int = BOUND_CONST) -> Interval:
    corners = [_mul_bound(x, y) for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    return clamp(min(corners), max(corners), bound)


def _cdiv(x: Bound, c: int) -> Bound:
    if x in (INF, NEG_INF):
        return x if c > 0 else -x
    q = abs(int(x)) // abs(c)
    return q if (x >= 0) == (c > 0) else -q


def div_const(a: Interval, c: int, bound: int = BOUND_CONST) -> Interval:
    """Truncating (C-style) division by a nonzero constant."""
    if c == 0:
        raise ZeroDivisionError("division by constant zero")
    x, y = _cdiv(a.lo, c), _cdiv(a.hi, c)
    return clamp(min(x, y), max(x, y), bound)
