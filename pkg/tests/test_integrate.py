import random
from fractions import Fraction

import pytest

from pmellin.cfun import (CFunction, GExpr, RVar, drop_points, evaluate, g_linear, indicator_ball,
                          make_term, norm_power, phi_alpha, rx_var, with_psi)
from pmellin.characters import CharacterFamily, all_characters, standard_family
from pmellin.errors import (FubiniMismatch, NotIntegrable, UnsupportedClass, UnsupportedOrder,
                            VariableCollision)
from pmellin.exactnum import MotivicValue, parse_mv
from pmellin.integrate import (SchwartzFunction, change_of_variables_check, fourier, fourier_at,
                               integral_value, integrate_iterated, mellin, mellin_invert_at,
                               schwartz_from_cfunction)
from pmellin.localfield import LAURENT, PADIC, LocalFieldElement, StructureConfig

import corpus as C

P3 = StructureConfig(3)
TATE = parse_mv("(1 - q^-1) / (1 - q^-1 * T1)")


@pytest.mark.parametrize("backend", [PADIC, LAURENT])
def test_tate_integral(backend):
    cfg = StructureConfig(3, backend)
    assert integral_value(norm_power(1, cfg, zmin=0), cfg) == TATE


@pytest.mark.parametrize("alpha,n", [(-2, 1), (0, 1), (1, 1), (-1, 2), (2, 2)])
def test_phi_volume(alpha, n):
    assert integral_value(phi_alpha(alpha, n, P3), P3) == MotivicValue.q_power(-alpha * n)


def test_unrestricted_variable_is_not_integrable():
    F = CFunction((make_term(),), ("x",))
    res = integrate_iterated(F, ["x"], P3)
    assert not res.integrable
    with pytest.raises(NotIntegrable):
        res.value()


def test_divergent_value_group_sum():
    F = C.single(make_term(vg="z >= 0"), vg=("z",))
    with pytest.raises(NotIntegrable):
        integral_value(F, P3)


@pytest.mark.parametrize("case", C.fubini_corpus(P3), ids=lambda c: c[0])
def test_fubini(case):
    _, F, order = case
    integrate_iterated(F, order, P3, verify_order=order[::-1])


def test_fubini_mismatch_is_reported(monkeypatch):
    import pmellin.integrate as I
    _, F, order = C.fubini_corpus(P3)[0]
    real = I.integrate_all
    calls = []

    def skewed(G, cfg, order=None):
        calls.append(order)
        out = real(G, cfg, order)
        return out.scale(2) if len(calls) == 2 else out
    monkeypatch.setattr(I, "integrate_all", skewed)
    with pytest.raises(FubiniMismatch):
        I.integrate_iterated(F, order, P3, verify_order=order[::-1])


def test_center_on_earlier_variable_needs_order():
    one = P3.elem(1)
    from pmellin.cfun import Affine, Cell
    t = make_term(cells=(C.cell("x"), Cell("y", Affine(None, (("x", one),)), 0, 1, "ac_y", "ord_y")),
                  vg="ord_x >= 0 & ord_y >= 1")
    F = CFunction((t,), ("x", "y"))
    assert integral_value(F, P3, order=["y", "x"]) == MotivicValue.q_power(-1)
    with pytest.raises(UnsupportedOrder):
        integral_value(F, P3, order=["x", "y"])


# Mellin

@pytest.mark.parametrize("p", [3, 5])
@pytest.mark.parametrize("lam", ["0", "1"])
def test_mellin_of_unit_ball(p, lam):
    cfg = StructureConfig(p)
    M = mellin(drop_points(phi_alpha(0, cfg=cfg), "x"), [(1, lam, "x")], cfg)
    assert M.trivial() == TATE
    assert all(v.is_zero() for v in M.nontrivial().values())
    assert len(M.values) == len(all_characters(cfg, int(lam)))


def test_mellin_slot_collision():
    with pytest.raises(VariableCollision):
        mellin(norm_power(1, P3, zmin=0), [(1, "0", "x")], P3)


@pytest.mark.parametrize("seed", range(5))
def test_mellin_inversion(seed):
    rng = random.Random(seed)
    cfg = StructureConfig(rng.choice([2, 3]))
    F, depth = C.random_mellin_function(rng, cfg)
    M = mellin(F, [(1, str(depth), "x")], cfg)
    for _ in range(10):
        d = rng.randint(-3, 5)
        xi = rng.choice(list(cfg.ring(depth).units))
        x = LocalFieldElement.pi_power(cfg, d) * cfg.elem(xi + cfg.p ** (depth + 1) * rng.randrange(9))
        assert mellin_invert_at(M, d, xi) == evaluate(F, {"x": x}, standard_family(cfg), cfg).pin(cfg.p)


# Fourier

@pytest.mark.parametrize("alpha", [-2, 0, 1])
def test_fourier_of_phi(alpha):
    S = SchwartzFunction.phi_alpha(P3, alpha)
    G = fourier(S)
    want = SchwartzFunction.phi_alpha(P3, 1 - alpha).scale(MotivicValue.q_power(-alpha))
    for y in C.sample_points(random.Random(alpha), P3, 12):
        assert G.evaluate(y).pin(3) == want.evaluate(y).pin(3)


def test_fourier_closed_form_matches_direct_integral():
    F = with_psi(indicator_ball(Fraction(1, 3), 0, P3), g_linear(P3, {"x": Fraction(2, 9)}))
    G = fourier(F)
    for y in (0, 1, Fraction(1, 3), Fraction(5, 9), Fraction(7, 27), 2):
        assert G.evaluate(y).pin(3) == fourier_at(F, y, P3).pin(3)


@pytest.mark.parametrize("seed", range(5))
def test_double_fourier_reflects(seed):
    rng = random.Random(seed)
    cfg = StructureConfig(rng.choice([2, 3]))
    S = C.random_step_function(rng, cfg)
    FF = fourier(fourier(S))
    for x in C.sample_points(rng, cfg, 10):
        assert FF.evaluate(x).pin(cfg.p) == (S.evaluate(-x) * MotivicValue.q_power(-1)).pin(cfg.p)


def test_schwartz_conversion_refuses_characters():
    F = C.single(make_term(cells=(C.cell("x"),), vg="ord_x >= 0", h=(("0", rx_var("ac_x")),)), vf=("x",))
    with pytest.raises(UnsupportedClass):
        schwartz_from_cfunction(F)


# change of variables

@pytest.mark.parametrize("a,b", [(1, 0), (2, 1), (3, 0), (Fraction(1, 3), 2)])
def test_affine_change_of_variables(a, b):
    F = with_psi(C.single(make_term(cells=(C.cell("x"),), vg="ord_x >= -1", gamma={1: "ord_x"}), vf=("x",)),
                 g_linear(P3, {"x": 1}))
    assert change_of_variables_check(F, ("affine", a, b), P3)


def test_square_map_on_unit_coset():
    F = with_psi(indicator_ball(1, 1, P3), g_linear(P3, {"x": Fraction(1, 9)}))
    assert change_of_variables_check(F, ("power", 2, 1, 1), P3)


def test_power_map_needs_tame_exponent():
    with pytest.raises(UnsupportedClass):
        change_of_variables_check(indicator_ball(1, 1, P3), ("power", 3, 1, 1), P3)
