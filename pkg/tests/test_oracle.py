from fractions import Fraction

import pytest

from pmellin.cfun import CFunction, g_linear, indicator_ball, make_term, norm_power, phi_alpha, with_psi
from pmellin.errors import DepthTooLarge, Mismatch, UnsupportedClass, WindowInsufficient
from pmellin.exactnum import Cyclotomic, mv_eval, parse_mv
from pmellin.integrate import integral_value
from pmellin.localfield import StructureConfig
from pmellin.oracle import (TruncationSpec, ball_integral, compare, partial_sum_with_tail,
                            recurrence_sum, transfer_check, truncated_integral)

import corpus as C

P3 = StructureConfig(3)


def test_unit_ball_volume():
    assert truncated_integral(phi_alpha(0, cfg=P3), TruncationSpec(), P3) == 1


def test_wave_integrates_to_zero():
    F = with_psi(phi_alpha(0, cfg=P3), g_linear(P3, {"x": Fraction(1, 3)}))
    assert truncated_integral(F, TruncationSpec(), P3) == 0


def test_tate_against_window():
    F = norm_power(1, P3, zmin=0)
    rep = compare(integral_value(F, P3), F, TruncationSpec.make(T={"T1": Fraction(1, 2)}), P3)
    assert rep.equal and rep.oracle == Fraction(4, 5)


def test_negative_control():
    F = norm_power(1, P3, zmin=0)
    wrong = parse_mv("(1 - q^-1) / (1 - q^-2 * T1)")
    with pytest.raises(Mismatch) as e:
        compare(wrong, F, TruncationSpec.make(T={"T1": Fraction(1, 2)}), P3)
    assert e.value.oracle == Fraction(4, 5)


def test_missing_window():
    F = C.single(make_term(beta="-z", vg="z >= 0"), vg=("z",))
    with pytest.raises(WindowInsufficient):
        truncated_integral(F, TruncationSpec(), P3)
    assert truncated_integral(F, TruncationSpec.make(window={"z": (0, 3)}), P3) == Fraction(3, 2)


def test_unbounded_support_is_reported():
    F = CFunction((make_term(),), ("x",))
    with pytest.raises(WindowInsufficient):
        truncated_integral(F, TruncationSpec(), P3)


@pytest.mark.parametrize("level", [0, 1, 3])
def test_refinement_level_does_not_change_value(level):
    F = with_psi(norm_power(1, P3, zmin=-1), g_linear(P3, {"x": 1}))
    spec = TruncationSpec.make(level=level, T={"T1": Fraction(1, 3)})
    assert truncated_integral(F, spec, P3) == mv_eval(integral_value(F, P3), 3, {1: Fraction(1, 3)})


def test_ball_integral():
    F = with_psi(indicator_ball(1, 1, P3), g_linear(P3, {"x": Fraction(1, 9)}))
    # psi is nontrivial on O, so psi(x/9) is constant only on balls of radius 3^-3
    assert ball_integral(F, 1, 3, P3) == Cyclotomic(Fraction(1, 27)) * Cyclotomic.root(27)
    assert ball_integral(F, 1, 2, P3) == 0
    assert ball_integral(F, 2, 1, P3) == 0
    with pytest.raises(UnsupportedClass):
        ball_integral(phi_alpha(0, 2, P3), 0, 0, P3)


def test_recurrence_sum():
    geo = [Fraction(1, 2 ** k) for k in range(10)]
    assert recurrence_sum(geo) == 2
    assert recurrence_sum([Fraction(k + 1, 3 ** k) for k in range(12)]) == Fraction(9, 4)
    assert recurrence_sum([0] * 12) == 0


def test_partial_sum_tail_bound():
    partial, bound = partial_sum_with_tail(1, -1, (1,), 30, 3, (Fraction(1, 2),))
    exact = Fraction(1, 6) / (1 - Fraction(1, 6)) ** 2
    assert 0 <= exact - partial <= bound
    assert partial_sum_with_tail(0, 0, (), 5, 3, ())[1] is None


def test_transfer_agrees_on_tate():
    rep = transfer_check(lambda cfg: norm_power(1, cfg, zmin=0), 3)
    assert rep.equal and rep.values == [parse_mv("(1 - q^-1) / (1 - q^-1 * T1)")]


def test_transfer_refuses_depth_one():
    with pytest.raises(DepthTooLarge):
        transfer_check(lambda cfg: norm_power(1, cfg, depth=1, zmin=0), 3)


@pytest.mark.parametrize("case", C.oracle_corpus()[:12], ids=lambda c: c[0])
def test_corpus_sample(case):
    _, F, cfg, window = case
    sym = integral_value(F, cfg)
    spec = TruncationSpec.make(window=window, T=C.T_HALF)
    assert compare(sym, F, spec, cfg).equal
    with pytest.raises(Mismatch):
        compare(C.perturb(sym), F, spec, cfg)
