"""Integrand families shared by the module tests & the acceptance suite."""
import random
from fractions import Fraction

from pmellin.cfun import (FULL, UNITS, Affine, CFunction, Cell, GExpr, RVar, add, aff_const, g_linear,
                          indicator_ball, indicator_sphere, make_term, mul, norm_power, phi_alpha,
                          rx_var, with_psi)
from pmellin.integrate import SchwartzFunction
from pmellin.localfield import LocalFieldElement, StructureConfig


def cell(var, depth=0, center=None, cfg=None):
    c = Affine() if center is None else aff_const(cfg, center)
    return Cell(var, c, depth, 1, "ac_" + var, "ord_" + var)


def single(term, vf=(), vg=(), res=()):
    return CFunction((term,), tuple(vf), tuple(vg), tuple(res))


# ---------------------------------------------------------------------------
# two-coordinate integrands, each with the two orders to compare

def fubini_corpus(cfg):
    one = cfg.elem(1)
    p = cfg.p
    out = []
    # residue x value group
    out.append(("res-vg chi", single(
        make_term(h=(("0", rx_var("r")),), beta="-2*z", gamma={1: "z"}, vg="z >= 1",
                  rvars=(RVar("r", 0),)), vg=("z",), res=(("r", 0),)), ["r", "z"]))
    out.append(("res-vg coupled", single(
        make_term(beta="-z", vg="z >= 0", rvars=(RVar("r", 1, UNITS),),
                  g=GExpr(lifts=((one, rx_var("r"), 1),))), vg=("z",), res=(("r", 1),)), ["r", "z"]))
    out.append(("res-vg bounded", single(
        make_term(poly=None, beta="z", vg="z >= -3 & 0 >= z", rvars=(RVar("r", 0, frozenset({0, 1})),)),
        vg=("z",), res=(("r", 0),)), ["r", "z"]))
    # residue x valued field
    out.append(("res-vf ac", single(
        make_term(cells=(cell("x", 0),), vg="ord_x >= 0", rvars=(RVar("r", 0),),
                  rcond=((((rx_var("ac_x"), 0), (rx_var("r"), 0)), frozenset({(1, 1), (2, 1), (1, 2)})),)),
        vf=("x",), res=(("r", 0),)), ["r", "x"]))
    out.append(("res-vf psi", single(
        make_term(cells=(cell("x", 0),), vg="ord_x >= -1", rvars=(RVar("r", 0),), h=(("0", rx_var("r")),),
                  g=GExpr(lin=(("x", one),), lifts=((one, rx_var("r"), 0),))),
        vf=("x",), res=(("r", 0),)), ["r", "x"]))
    # value group x valued field
    out.append(("vg-vf nested ord", single(
        make_term(cells=(cell("x", 0),), vg="ord_x >= z & z >= 0", beta="-z"),
        vf=("x",), vg=("z",)), ["z", "x"]))
    out.append(("vg-vf twisted", single(
        make_term(cells=(cell("x", 1),), vg="ord_x >= 2*z & z >= -1 & 3 >= z", gamma={1: "ord_x"},
                  h=(("1", rx_var("ac_x")),)),
        vf=("x",), vg=("z",)), ["z", "x"]))
    # valued field x valued field
    out.append(("vf-vf ord order", single(
        make_term(cells=(cell("x", 0), cell("y", 0)), vg="ord_y >= ord_x & ord_x >= 0"),
        vf=("x", "y")), ["x", "y"]))
    out.append(("vf-vf psi", single(
        make_term(cells=(cell("x", 0), cell("y", 0)), vg="ord_x >= -1 & ord_y >= ord_x + 1",
                  g=GExpr(lin=(("x", one), ("y", cfg.elem(Fraction(1, p)))))),
        vf=("x", "y")), ["x", "y"]))
    out.append(("vf-vf ac link", single(
        make_term(cells=(cell("x", 0), cell("y", 0)), vg="ord_x >= 0 & ord_y >= 0", gamma={1: "ord_x + ord_y"},
                  rcond=((((rx_var("ac_x"), 0), (rx_var("ac_y"), 0)), frozenset({(1, 1)})),)),
        vf=("x", "y")), ["x", "y"]))
    out.append(("vf-vf product", mul(
        with_psi(indicator_ball(1, 0, cfg, "x"), g_linear(cfg, {"x": Fraction(1, p)})),
        norm_power(2, cfg, "y", zmin=1), cfg), ["x", "y"]))
    return out


# ---------------------------------------------------------------------------
# step functions for the Fourier tests

def random_step_function(rng, cfg, level=2):
    """Sum of modulated ball indicators with radii up to ``level`` on pi^-1 O."""
    p = cfg.p
    F = None
    for _ in range(rng.randint(1, 3)):
        m = rng.randint(-1, level)
        a = Fraction(rng.randrange(0, p ** 2), p)
        b = Fraction(rng.randrange(0, p ** 2), p ** rng.randint(0, 2))
        part = SchwartzFunction.ball(cfg, a, m, b, coeff=rng.randint(-3, 3) or 1)
        F = part if F is None else F + part
    return F


def random_step_cfunction(rng, cfg, level=2):
    """Cell-presented step function (balls and spheres, optionally modulated) and its cell centers."""
    p = cfg.p
    F, centers = None, []
    for _ in range(rng.randint(1, 4)):
        a = Fraction(rng.randrange(0, p ** 2), p ** rng.randint(0, 1))
        r = rng.randint(-1, level)
        part = indicator_sphere(a, r, cfg) if rng.random() < 0.5 else indicator_ball(a, r, cfg)
        if rng.random() < 0.5:
            part = with_psi(part, g_linear(cfg, {"x": Fraction(rng.randrange(1, p ** 2), p ** rng.randint(0, 2))}))
        part = part.scale(rng.randint(-3, 3) or 2)
        centers.append(cfg.elem(a))
        F = part if F is None else F + part
    return F, centers


def sample_points(rng, cfg, k, lo=-3, hi=3):
    out = []
    for _ in range(k):
        e = rng.randint(lo, hi)
        u = rng.randrange(1, cfg.p ** 3)
        out.append(LocalFieldElement.pi_power(cfg, e) * cfg.elem(u))
    return out


# ---------------------------------------------------------------------------
# one-variable functions for Mellin inversion

def random_mellin_function(rng, cfg):
    """Depth <= 1 function of x: ord windows over the ac_1 classes, optional decay."""
    terms = []
    depth = rng.randint(0, 1)
    units = list(cfg.ring(depth).units)
    for _ in range(rng.randint(1, 3)):
        lo = rng.randint(-2, 1)
        hi = lo + rng.randint(0, 3)
        ray = rng.random() < 0.3
        vg = f"ord_x >= {lo}" + ("" if ray else f" & {hi} >= ord_x")
        allowed = frozenset((u,) for u in rng.sample(units, rng.randint(1, len(units))))
        terms.append(make_term(rng.randint(-4, 4) or 1, cells=(cell("x", depth),), vg=vg,
                               beta="-ord_x" if ray else None,
                               rcond=((((rx_var("ac_x"), depth),), allowed),)))
    return CFunction(tuple(terms), ("x",)), depth


# ---------------------------------------------------------------------------
# depth-0 integrands for the backend transfer check

def transfer_corpus():
    """Builders cfg -> CFunction, all of depth 0."""
    def tate(cfg):
        return norm_power(1, cfg, zmin=0)

    def ball_wave(cfg):
        return with_psi(indicator_ball(0, -1, cfg), g_linear(cfg, {"x": 1}))

    def phi_pair(cfg):
        return phi_alpha(-1, 2, cfg)

    def chi_annulus(cfg):
        return single(make_term(cells=(cell("x", 0),), vg="ord_x >= -1", gamma={1: "ord_x"},
                                h=(("0", rx_var("ac_x")),)), vf=("x",))

    def sphere_sum(cfg):
        return add(indicator_sphere(1, 1, cfg), indicator_sphere(0, 2, cfg).scale(3))

    def residue_psi(cfg):
        return single(make_term(rvars=(RVar("r", 0),), g=GExpr(lifts=((cfg.elem(2), rx_var("r"), 0),)),
                                h=(("0", rx_var("r")),)), res=(("r", 0),))

    def vg_weight(cfg):
        return single(make_term(cells=(cell("x", 0),), vg="ord_x >= z & z >= 0", beta="-z", gamma={1: "z"}),
                      vf=("x",), vg=("z",))

    def two_var(cfg):
        return single(make_term(cells=(cell("x", 0), cell("y", 0)), vg="ord_y >= ord_x & ord_x >= 0",
                                gamma={1: "ord_y"}, h=(("0", rx_var("ac_y")),)), vf=("x", "y"))

    def modulated_tate(cfg):
        return with_psi(norm_power(1, cfg, zmin=-2), g_linear(cfg, {"x": 1}))

    def shifted_ball(cfg):
        return with_psi(indicator_ball(2, 1, cfg), g_linear(cfg, {"x": Fraction(1, 1)}, const=1))

    return [tate, ball_wave, phi_pair, chi_annulus, sphere_sum, residue_psi, vg_weight, two_var,
            modulated_tate, shifted_ball]


# ---------------------------------------------------------------------------
# integrands with a symbolic value the oracle must reproduce

T_HALF = {"T1": Fraction(1, 2), "T2": Fraction(1, 3)}


def oracle_corpus():
    """Fifty (label, F, cfg, window) cases mixing every coordinate kind."""
    out = []
    cfg3 = StructureConfig(3)
    for name, F, _ in fubini_corpus(cfg3):
        out.append((name, F, cfg3, {v: (-4, 4) for v in F.vg}))
    for p in (3, 5):
        cfg = StructureConfig(p)
        for b in transfer_corpus():
            F = b(cfg)
            out.append((f"{b.__name__} p={p}", F, cfg, {v: (-4, 4) for v in F.vg}))
    rng = random.Random(2024)
    while len(out) < 41:
        cfg = StructureConfig(rng.choice([2, 3]))
        S = random_step_function(rng, cfg)
        out.append((f"step {len(out)}", S.to_cfunction(), cfg, {}))
    while len(out) < 50:
        cfg = StructureConfig(rng.choice([2, 3]))
        F, _ = random_mellin_function(rng, cfg)
        out.append((f"mellin-type {len(out)}", F, cfg, {}))
    return out


def perturb(value):
    """Add one to a single numerator coefficient of a symbolic value."""
    from pmellin.exactnum import MotivicValue
    if value.is_zero():
        return MotivicValue.const(1, value.q)
    num = dict(value.num)
    mono = sorted(num)[0]
    num[mono] = num[mono] + 1
    return MotivicValue(num, value.den, value.q)
