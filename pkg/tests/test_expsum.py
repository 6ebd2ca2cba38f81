from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from pmellin.errors import NotIntegrable
from pmellin.exactnum import MotivicValue, mv_eval
from pmellin.expsum import (ExpPolySum, ExpPolyTerm, closed_form_bounded, closed_form_ray,
                            sum_over_set)
from pmellin.presburger import LinearTerm, parse_set

q = MotivicValue.q_power
T = MotivicValue.T
ONE = MotivicValue.const(1)


def ray(a, b, c=None):
    return closed_form_ray(ExpPolyTerm.make(1, {"x": a} if a else {}, {"x": b},
                                            {j: {"x": e} for j, e in (c or {}).items()}), "x")


def test_ray_examples():
    assert ray(0, -1) == MotivicValue.geometric(-1, {})
    assert ray(0, -1, {1: 1}) == MotivicValue.geometric(-1, {1: 1})
    v = ray(1, -1)
    assert v == q(-1) * MotivicValue.geometric(-1, {}, 2)
    assert mv_eval(v, 3) == Fraction(3, 4)


@pytest.mark.parametrize("b,c", [(0, 0), (1, 0), (-1, -1), (2, 1)])
def test_ray_not_integrable(b, c):
    with pytest.raises(NotIntegrable):
        ray(0, b, {1: c})


def test_bounded_examples():
    B = LinearTerm.var("B")
    S = closed_form_bounded(ExpPolyTerm.make(1, None, {"x": -1}), "x", B)
    assert S.subs("B", LinearTerm.constant(3)).to_value() == ONE + q(-1) + q(-2) + q(-3)
    closed = (ONE - q(-4)) * MotivicValue.geometric(-1, {})
    assert S.subs("B", LinearTerm.constant(3)).to_value() == closed
    single = closed_form_bounded(ExpPolyTerm.make(5, {"x": 2}, {"x": -1}), "x", 0)
    assert single.to_value() == MotivicValue.const(0)
    xs = closed_form_bounded(ExpPolyTerm.make(1, {"x": 1}, {"x": -1}), "x", B)
    v = xs.subs("B", LinearTerm.constant(3)).to_value()
    assert mv_eval(v, 3) == Fraction(1, 3) + Fraction(2, 9) + Fraction(3, 27) == Fraction(2, 3)


def test_set_examples():
    even = parse_set("x >= 0 & x == 0 mod 2", ["x"])
    assert sum_over_set([ExpPolyTerm.make(1, None, {"x": -1})], even) == MotivicValue.geometric(-2, {})
    tri = parse_set("y >= 0 & 0 <= x & x <= y", ["y", "x"])
    v = sum_over_set([ExpPolyTerm.make(1, None, {"y": -1})], tri)
    assert v == MotivicValue.geometric(-1, {}, 2)
    assert mv_eval(v, 3) == Fraction(9, 4)


def test_order_independence():
    S1 = parse_set("x >= 0 & y >= 0 & x + y <= 2*x + 5", ["x", "y"])
    S2 = parse_set("x >= 0 & y >= 0 & x + y <= 2*x + 5", ["y", "x"])
    t = [ExpPolyTerm.make(1, {"x": 1}, {"x": -1, "y": -2}, {1: {"y": 1}})]
    assert sum_over_set(t, S1) == sum_over_set(t, S2)


def test_normal_form_cancels_equal_keys():
    a = ExpPolyTerm.make(2, {"x": 1}, {"x": -1})
    b = ExpPolyTerm.make(-2, {"x": 1}, {"x": -1})
    assert not ExpPolySum.of([a, b]).terms


def _partial(a, b, c, qv, tv, S_pts):
    tot = Fraction(0)
    for pt in S_pts:
        x = dict(zip(("y", "x"), pt))
        term = Fraction(1)
        for v, e in a.items():
            term *= Fraction(x[v]) ** e
        term *= Fraction(qv) ** sum(r * x[v] for v, r in b.items())
        for j, row in c.items():
            term *= tv[j] ** sum(r * x[v] for v, r in row.items())
        tot += term
    return tot


@given(a=st.dictionaries(st.sampled_from(["x", "y"]), st.integers(0, 2), max_size=2),
       bx=st.integers(-3, -1), by=st.integers(-3, -1), cx=st.integers(0, 2), cy=st.integers(0, 2),
       shape=st.sampled_from(["y >= 0 & 0 <= x & x <= y", "x >= 0 & y >= 0", "x >= 0 & y >= x & y <= 2*x + 1",
                              "y >= 0 & x >= 1 & x == y mod 2"]),
       qv=st.sampled_from([2, 3, 5]), tv=st.sampled_from([Fraction(1), Fraction(1, 2)]))
@settings(max_examples=40, deadline=None)
def test_sum_matches_partial_sums(a, bx, by, cx, cy, shape, qv, tv):
    b = {"x": bx, "y": by}
    c = {1: {"x": cx, "y": cy}}
    S = parse_set(shape, ["y", "x"])
    v = sum_over_set([ExpPolyTerm.make(1, a, b, c)], S)
    exact = mv_eval(v, qv, {1: tv}).to_fraction()
    W = 40
    pts = [(y, x) for y in range(W + 1) for x in range(W + 1) if S.formula.holds({"x": x, "y": y})]
    part = _partial(a, b, c, qv, {1: tv}, pts)
    # each summand is at most (x+1)^2 (y+1)^2 q^(-x-y); bound the part outside the box
    u = Fraction(1, qv)
    full = (1 + u) / (1 - u) ** 3
    tail = Fraction(W + 2) ** 2 * u ** (W + 1) / (1 - Fraction(W + 3, W + 2) ** 2 * u)
    bound = 2 * tail * full
    assert part <= exact and exact - part <= bound
