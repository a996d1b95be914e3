"""Outward-rounded interval arithmetic on IEEE doubles.

Every operation returns an interval guaranteed to contain the exact real
result for any members of the operands. Results that are computed exactly
(detected with error-free transformations) are not widened, so exact zeros
and integer cancellations survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_INF = math.inf
_SPLIT = 134217729.0  # 2**27 + 1


def _down(v: float) -> float:
    return math.nextafter(v, -_INF)


def _up(v: float) -> float:
    return math.nextafter(v, _INF)


def _sum_exact(a: float, b: float, s: float) -> bool:
    if not math.isfinite(s):
        return False
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return err == 0.0


def _split(a: float) -> tuple[float, float]:
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _prod_exact(a: float, b: float, p: float) -> bool:
    if a == 0.0 or b == 0.0:
        return True
    if not math.isfinite(p) or abs(p) > 1e300 or abs(p) < 1e-290:
        return False
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return err == 0.0


def _add_lo(a: float, b: float) -> float:
    s = a + b
    return s if _sum_exact(a, b, s) else _down(s)


def _add_hi(a: float, b: float) -> float:
    s = a + b
    return s if _sum_exact(a, b, s) else _up(s)


def _mul(a: float, b: float) -> tuple[float, float]:
    # 0 * inf is taken as 0: the zero endpoint is an actual member
    if a == 0.0 or b == 0.0:
        return 0.0, 0.0
    p = a * b
    if _prod_exact(a, b, p):
        return p, p
    return _down(p), _up(p)


def _div(a: float, b: float) -> tuple[float, float]:
    if a == 0.0:
        return 0.0, 0.0
    if math.isinf(b):
        return (0.0, 0.0) if math.isfinite(a) else (-_INF, _INF)
    q = a / b
    if math.isfinite(q) and _prod_exact(q, b, q * b) and q * b == a:
        return q, q
    return _down(q), _up(q)


def _pow(a: float, k: int) -> tuple[float, float]:
    r = a**k
    if a.is_integer() and abs(r) < 2.0**53:
        return r, r
    lo, hi = r, r
    for _ in range(k):
        lo, hi = _down(lo), _up(hi)
    return lo, hi


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval endpoint is NaN")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v: float) -> "Interval":
        v = float(v)
        return cls(v, v)

    @classmethod
    def coerce(cls, v: "Interval | float") -> "Interval":
        return v if isinstance(v, Interval) else cls.point(v)

    # -- queries ---------------------------------------------------------
    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    def contains_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def is_zero(self) -> bool:
        return self.lo == 0.0 and self.hi == 0.0

    def subset_of(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    # -- arithmetic ------------------------------------------------------
    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other: "Interval | float") -> "Interval":
        o = Interval.coerce(other)
        if o.is_zero():
            return self
        if self.is_zero():
            return o
        return Interval(_add_lo(self.lo, o.lo), _add_hi(self.hi, o.hi))

    __radd__ = __add__

    def __sub__(self, other: "Interval | float") -> "Interval":
        return self + (-Interval.coerce(other))

    def __rsub__(self, other: float) -> "Interval":
        return Interval.coerce(other) - self

    def __mul__(self, other: "Interval | float") -> "Interval":
        o = Interval.coerce(other)
        if self.is_zero() or o.is_zero():
            return Interval(0.0, 0.0)
        los, his = [], []
        for a in (self.lo, self.hi):
            for b in (o.lo, o.hi):
                lo, hi = _mul(a, b)
                los.append(lo)
                his.append(hi)
        return Interval(min(los), max(his))

    __rmul__ = __mul__

    def __truediv__(self, other: "Interval | float") -> "Interval":
        o = Interval.coerce(other)
        if o.contains_zero():
            if o.is_zero():
                raise ZeroDivisionError("interval division by [0, 0]")
            return Interval(-_INF, _INF)
        if self.is_zero():
            return Interval(0.0, 0.0)
        los, his = [], []
        for a in (self.lo, self.hi):
            for b in (o.lo, o.hi):
                lo, hi = _div(a, b)
                los.append(lo)
                his.append(hi)
        return Interval(min(los), max(his))

    def __rtruediv__(self, other: float) -> "Interval":
        return Interval.coerce(other) / self

    def __pow__(self, k: int) -> "Interval":
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        if k == 0:
            return Interval(1.0, 1.0)
        if k == 1:
            return self
        if k % 2 == 1 or self.lo >= 0.0:
            lo, _ = _pow(self.lo, k)
            _, hi = _pow(self.hi, k)
            return Interval(lo, hi)
        if self.hi <= 0.0:
            lo, _ = _pow(self.hi, k)
            _, hi = _pow(self.lo, k)
            return Interval(lo, hi)
        _, hi = _pow(self.mag, k)
        return Interval(0.0, hi)

    def __abs__(self) -> "Interval":
        if self.lo >= 0.0:
            return self
        if self.hi <= 0.0:
            return -self
        return Interval(0.0, self.mag)

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


UNIT = Interval(-1.0, 1.0)


def det(matrix: list[list[Interval]]) -> Interval:
    """Interval determinant by cofactor expansion along the first row."""
    n = len(matrix)
    if n == 0:
        return Interval(1.0, 1.0)
    if n == 1:
        return matrix[0][0]
    if n == 2:
        return matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0]
    total = Interval(0.0, 0.0)
    for j in range(n):
        a = matrix[0][j]
        if a.is_zero():
            continue
        minor = [row[:j] + row[j + 1 :] for row in matrix[1:]]
        term = a * det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total
