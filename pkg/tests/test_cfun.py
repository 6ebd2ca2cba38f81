from fractions import Fraction

import pytest

from pmellin.cfun import (AffineVF, Affine, CFunction, FULL, GExpr, RVar, Restriction, UNITS, add,
                          evaluate, g_linear, indicator_ball, indicator_restrict, indicator_sphere,
                          make_term, mul, norm_power, phi_alpha, pullback, residue_indicator,
                          rx_var, schwartz_from_table, with_psi)
from pmellin.characters import CharacterFamily, all_characters
from pmellin.errors import DomainMismatch
from pmellin.exactnum import Cyclotomic, MotivicValue, parse_mv
from pmellin.localfield import LAURENT, PADIC, LocalFieldElement, StructureConfig
from pmellin.presburger import parse_formula

import relations as R

P3 = StructureConfig(3)
STD = CharacterFamily(P3)


def mv(x):
    return MotivicValue.const(x)


def ev(F, pt, chars=STD, cfg=P3):
    return evaluate(F, pt, chars, cfg).pin(cfg.p)


def test_trivial_character_sum_over_residue_field():
    t = make_term(h=(("0", rx_var("xi")),), rvars=(RVar("xi", 0, FULL, True),))
    assert ev(CFunction((t,)), {}) == mv(2)


def test_nontrivial_character_sum_vanishes():
    legendre = all_characters(P3, 0)[1]
    t = make_term(h=(("0", rx_var("xi")),), rvars=(RVar("xi", 0, FULL, True),))
    chars = CharacterFamily(P3, chis={"0": legendre})
    assert ev(CFunction((t,)), {}, chars) == mv(0)


def test_phi_zero_values():
    F = phi_alpha(0, cfg=P3)
    assert ev(F, {"x": 1}) == mv(1)
    assert ev(F, {"x": 0}) == mv(1)
    assert ev(F, {"x": Fraction(1, 3)}) == mv(0)


def test_psi_residue_sum_vanishes():
    # sum over R_0 of psi(xi) with psi nontrivial on O
    e = P3.elem(1)
    t = make_term(g=GExpr((), None, ((e, rx_var("xi"), 0),), ()), rvars=(RVar("xi", 0, FULL, True),))
    assert ev(CFunction((t,)), {}) == mv(0)


def test_norm_power_value():
    F = norm_power(1, cfg=P3)
    assert ev(F, {"x": 9}) == parse_mv("T1^2").pin(3)


def test_sphere_and_ball():
    S = indicator_sphere(0, 1, P3)
    B = indicator_ball(1, 2, P3)
    assert ev(S, {"x": 6}) == mv(1)
    assert ev(S, {"x": 9}) == mv(0)
    assert ev(B, {"x": 10}) == mv(1)
    assert ev(B, {"x": 4}) == mv(0)


def test_schwartz_table_is_locally_constant():
    F = schwartz_from_table(1, {0: 2, 1: 5}, P3)
    assert ev(F, {"x": 3}) == mv(2)
    assert ev(F, {"x": 4}) == mv(5)
    assert ev(F, {"x": 2}) == mv(0)


def test_mul_of_psi_factors():
    a = with_psi(phi_alpha(0, cfg=P3), g_linear(P3, {"x": Fraction(1, 3)}))
    b = with_psi(phi_alpha(0, cfg=P3), g_linear(P3, {"x": Fraction(2, 3)}))
    prod = mul(a, b, P3)
    for x in range(9):
        assert ev(prod, {"x": x}) == ev(a, {"x": x}) * ev(b, {"x": x})
    # psi(x/3) psi(2x/3) = psi(x) = psi at an integer
    assert ev(prod, {"x": 1}) == MotivicValue.const(Cyclotomic.root(3))


def test_mul_rejects_different_centers():
    with pytest.raises(DomainMismatch):
        mul(indicator_ball(0, 1, P3), indicator_ball(1, 0, P3), P3)


def test_add_is_pointwise():
    F = add(phi_alpha(0, cfg=P3), phi_alpha(1, cfg=P3))
    assert ev(F, {"x": 3}) == mv(2)
    assert ev(F, {"x": 1}) == mv(1)


@pytest.mark.parametrize("backend", [PADIC, LAURENT])
def test_pullback_identity_and_shift(backend):
    cfg = StructureConfig(3, backend)
    chars = CharacterFamily(cfg)
    F = with_psi(phi_alpha(-1, cfg=cfg), g_linear(cfg, {"x": 1}))
    one = cfg.elem(1)
    ident = pullback(F, {"x": AffineVF(one, Affine(), "y")}, cfg)
    two = cfg.elem(2)
    shift = pullback(F, {"x": AffineVF(one, Affine(two), "y")}, cfg)
    for k in range(-3, 9):
        y = LocalFieldElement.pi_power(cfg, -1, 1) * cfg.elem(k)
        assert ev(ident, {"y": y}, chars, cfg) == ev(F, {"x": y}, chars, cfg)
        assert ev(shift, {"y": y}, chars, cfg) == ev(F, {"x": y + two}, chars, cfg)


def test_pullback_scaling_moves_the_ball():
    # phi_1(pi * y) = phi_0(y)
    F = phi_alpha(1, cfg=P3)
    G = pullback(F, {"x": AffineVF(P3.elem(3), Affine(), "y")}, P3)
    ref = phi_alpha(0, cfg=P3)
    for y in (0, 1, 2, 5, Fraction(1, 3), Fraction(4, 9), 27):
        assert ev(G, {"y": y}) == ev(ref, {"x": y})


def test_pullback_composition():
    F = with_psi(indicator_ball(1, 1, P3), g_linear(P3, {"x": Fraction(1, 9)}))
    a, b = P3.elem(2), P3.elem(Fraction(1, 3))
    c, d = P3.elem(5), P3.elem(4)
    once = pullback(pullback(F, {"x": AffineVF(a, Affine(b), "y")}, P3), {"y": AffineVF(c, Affine(d), "w")}, P3)
    both = pullback(F, {"x": AffineVF(a * c, Affine(a * d + b), "w")}, P3)
    for w in range(-4, 14):
        pt = {"w": P3.elem(Fraction(w, 3))}
        assert ev(once, pt) == ev(both, pt)


def test_residue_pullback_relabels():
    F = residue_indicator("r", 0, frozenset({1}))
    G = pullback(F, {"r": ("add", rx_var("s"), ("const", 1))}, P3)
    assert ev(G, {"s": 0}) == mv(1)
    assert ev(G, {"s": 1}) == mv(0)


def test_indicator_restrict():
    F = residue_indicator("r", 1)
    G = indicator_restrict(F, Restriction(res=(("r", UNITS),)), P3)
    assert ev(G, {"r": 4}) == mv(1)
    assert ev(G, {"r": 3}) == mv(0)
    with pytest.raises(DomainMismatch):
        indicator_restrict(F, Restriction(vg=parse_formula("z >= 0")), P3)


def test_class_tags():
    assert phi_alpha(0, cfg=P3).class_tag == "C"
    assert with_psi(phi_alpha(0, cfg=P3), g_linear(P3, {"x": 1})).class_tag == "C^exp"


# relations among residue generators, 100 seeds each

SEEDS = range(100)


@pytest.mark.parametrize("seed", SEEDS)
def test_relation_relabel(seed):
    a, b = R.r1_case(*R.random_case(seed))
    assert a == b


@pytest.mark.parametrize("seed", SEEDS)
def test_relation_disjoint_union(seed):
    a, b = R.r2_case(*R.random_case(seed))
    assert a == b


@pytest.mark.parametrize("seed", SEEDS)
def test_relation_depth_lift(seed):
    rng, cfg, depth = R.random_case(seed)
    base, lifted = R.r3_case(rng, cfg, depth)
    assert lifted == base * cfg.p


@pytest.mark.parametrize("seed", SEEDS)
def test_relation_twisted_sum_vanishes(seed):
    assert R.r4_case(*R.random_case(seed)).is_zero()


@pytest.mark.parametrize("seed", SEEDS)
def test_relation_permuted_characters(seed):
    a, b = R.r5_case(*R.random_case(seed))
    assert a == b
