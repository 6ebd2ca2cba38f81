import random

import pytest
from hypothesis import given, settings, strategies as st

from pmellin.errors import BoxTooLarge, FormulaSyntaxError
from pmellin.presburger import (BOUNDED, FULL_RAY, LinearTerm, PresburgerSet, conj, cong,
                                decompose_last, disj, enumerate_bounded, ge, member, neg,
                                parse_formula, parse_set, rectilinearize_one)


def S(text, vs):
    return parse_set(text, vs)


def test_member_examples():
    s = S("x >= 0 & x == 2 mod 3", ["x"])
    assert member(s, [5]) and not member(s, [6])
    assert not member(S("0 <= -1", ["x"]), [3])


def test_enumerate_examples():
    assert enumerate_bounded(S("x == 2 mod 3", ["x"]), [(0, 8)]) == [[2], [5], [8]]
    assert len(enumerate_bounded(S("x == x", ["x", "y"]), [(0, 2), (0, 1)])) == 6
    assert enumerate_bounded(S("1 <= 0", ["x"]), [(0, 5)]) == []
    with pytest.raises(BoxTooLarge):
        enumerate_bounded(S("x >= 0", ["x", "y"]), [(0, 10 ** 4), (0, 10 ** 4)])


def _fiber(S, x, env, window):
    out = []
    for g, pr in decompose_last(S, x):
        if g.holds(env):
            out.extend(pr.points(env, window))
    return sorted(out)


def _brute(S, x, env, window):
    return [v for v in range(window[0], window[1] + 1) if S.formula.holds({**env, x: v})]


def test_decompose_examples():
    s = S("0 <= x & x <= y & x == 0 mod 2", ["y", "x"])
    for y in range(-3, 12):
        assert _fiber(s, "x", {"y": y}, (-50, 50)) == _brute(s, "x", {"y": y}, (-50, 50))
    ((g, pr),) = decompose_last(S("x >= 3", ["x"]), "x")
    assert pr.start == LinearTerm.constant(3) and pr.step == 1 and pr.end is None
    assert decompose_last(S("x == 1 mod 2 & x == 0 mod 2", ["x"]), "x") == []


def test_rectilinear_examples():
    ((_, p),) = rectilinearize_one(S("x >= 3", ["x"]))
    assert p.kind == FULL_RAY and p.s == 1 and p.t == LinearTerm.constant(3)
    ((_, p),) = rectilinearize_one(S("x >= 0 & x == 1 mod 2", ["x"]))
    assert p.kind == FULL_RAY and p.s == 2 and p.t == LinearTerm.constant(1)
    ((_, p),) = rectilinearize_one(S("0 <= x & x <= 7 & x == 0 mod 3", ["x"]))
    assert p.kind == BOUNDED and p.s == 3 and p.bound == LinearTerm.constant(2)
    assert p.image({}) == [0, 3, 6]


def test_max_case_split():
    s = S("x >= max(y, 2 - y) & x <= 6", ["y", "x"])
    for y in range(-8, 9):
        assert _fiber(s, "x", {"y": y}, (-60, 60)) == _brute(s, "x", {"y": y}, (-60, 60))


def test_parse_errors_have_position():
    with pytest.raises(FormulaSyntaxError, match="line 1, column"):
        parse_formula("x <= & 3")
    with pytest.raises(FormulaSyntaxError):
        parse_formula("x * y <= 3")


VARS = ["u", "v", "x"]


@st.composite
def atoms(draw, vs):
    coeffs = {v: draw(st.integers(-9, 9)) for v in vs}
    t = LinearTerm(coeffs, draw(st.integers(-9, 9)))
    if draw(st.booleans()):
        return ge(t)
    return cong(t, draw(st.integers(2, 6)))


@st.composite
def formulas(draw, vs, depth=2):
    if depth == 0 or draw(st.integers(0, 2)) == 0:
        return draw(atoms(vs))
    a, b = draw(formulas(vs, depth - 1)), draw(formulas(vs, depth - 1))
    kind = draw(st.sampled_from(["and", "or", "not"]))
    if kind == "and":
        return conj(a, b)
    if kind == "or":
        return disj(a, b)
    return neg(a)


@given(st.integers(1, 3).flatmap(lambda m: st.tuples(st.just(m), formulas(VARS[3 - m:]))),
       st.lists(st.integers(-20, 20), min_size=2, max_size=2))
@settings(max_examples=40, deadline=None)
def test_fibers_match_enumeration(mf, outer):
    m, f = mf
    vs = VARS[3 - m:]
    s = PresburgerSet(tuple(vs), f)
    env = dict(zip(vs[:-1], outer))
    # every coefficient is at most 9, so bounds sit within 9 * (20 + 20) + 9 of the origin
    window = (-500, 500)
    got = _fiber(s, "x", env, window)
    want = _brute(s, "x", env, window)
    assert got == want


@given(formulas(["u", "x"]), st.integers(-20, 20))
@settings(max_examples=40, deadline=None)
def test_rectilinear_pieces_disjoint_cover(f, u):
    s = PresburgerSet(("u", "x"), f)
    want = set(_brute(s, "x", {"u": u}, (-400, 400)))
    seen = []
    for g, piece in rectilinearize_one(s):
        if g.holds({"u": u}):
            img = piece.image({"u": u}, count=900)
            assert abs(piece.s) >= 1
            seen.extend(v for v in img if -400 <= v <= 400)
    assert len(seen) == len(set(seen))
    assert set(seen) == want
