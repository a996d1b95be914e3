import math
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from lipglobal.interval import UNIT, Interval, det

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def intervals(draw):
    a, b = draw(finite), draw(finite)
    return Interval(min(a, b), max(a, b))


@st.composite
def interval_and_member(draw):
    iv = draw(intervals())
    t = draw(st.floats(min_value=0.0, max_value=1.0))
    x = iv.lo + t * (iv.hi - iv.lo)
    x = min(max(x, iv.lo), iv.hi)
    return iv, x


def inside(iv: Interval, exact: Fraction) -> bool:
    # overflowed bounds round outward to infinity, which Fraction cannot hold
    lo_ok = iv.lo == -math.inf or Fraction(iv.lo) <= exact
    hi_ok = iv.hi == math.inf or exact <= Fraction(iv.hi)
    return lo_ok and hi_ok


@given(interval_and_member(), interval_and_member())
def test_add_sub_mul_contain_exact(p, q):
    (a, x), (b, y) = p, q
    fx, fy = Fraction(x), Fraction(y)
    assert inside(a + b, fx + fy)
    assert inside(a - b, fx - fy)
    assert inside(a * b, fx * fy)


@given(interval_and_member(), interval_and_member())
def test_div_contains_exact(p, q):
    (a, x), (b, y) = p, q
    assume(not b.contains_zero())
    assert inside(a / b, Fraction(x) / Fraction(y))


@given(interval_and_member(), st.integers(min_value=0, max_value=7))
def test_pow_and_abs_contain_exact(p, k):
    a, x = p
    assert inside(a**k, Fraction(x) ** k)
    assert inside(abs(a), abs(Fraction(x)))


def test_exact_results_are_not_widened():
    assert Interval.point(3.0) * 4.0 == Interval(12.0, 12.0)
    assert Interval.point(1.0) + 2.0 == Interval(3.0, 3.0)
    assert Interval(-2.0, 3.0) ** 2 == Interval(0.0, 9.0)
    z = Interval.point(0.1) - Interval.point(0.1)
    assert z.is_zero()


def test_inexact_sum_is_widened():
    s = Interval.point(0.1) + Interval.point(0.2)
    assert s.lo < 0.1 + 0.2 < s.hi or s.lo == s.hi
    assert inside(s, Fraction(0.1) + Fraction(0.2))


def test_division_by_interval_with_zero():
    assert Interval(1.0, 2.0) / Interval(-1.0, 1.0) == Interval(-math.inf, math.inf)
    with pytest.raises(ZeroDivisionError):
        Interval(1.0, 2.0) / Interval(0.0, 0.0)


def test_rejects_empty_and_nan():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(math.nan, 1.0)
    with pytest.raises(ValueError):
        Interval(0.0, 1.0) ** -1


def test_det_of_parametric_family():
    # [[1 + a t, 0], [12, 1]] with t in [-1, 1], a = 0.5
    m = [[1.0 + 0.5 * UNIT, Interval.point(0.0)], [Interval.point(12.0), Interval.point(1.0)]]
    assert det(m) == Interval(0.5, 1.5)


@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=3, max_size=3))
def test_det_point_matrix_contains_exact(rows):
    m = [[Interval.point(v) for v in r] for r in rows]
    F = [[Fraction(v) for v in r] for r in rows]
    exact = (
        F[0][0] * (F[1][1] * F[2][2] - F[1][2] * F[2][1])
        - F[0][1] * (F[1][0] * F[2][2] - F[1][2] * F[2][0])
        + F[0][2] * (F[1][0] * F[2][1] - F[1][1] * F[2][0])
    )
    assert inside(det(m), exact)


@given(intervals(), intervals())
def test_hull_and_subset(a, b):
    h = a.hull(b)
    assert a.subset_of(h) and b.subset_of(h)
