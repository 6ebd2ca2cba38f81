"""Integration of cell-presented functions, Mellin and Fourier transforms.

Haar measure is normalized by vol(O) = 1; the twisted box
{ord(x - c) = z, ac_t(x - c) = xi} has volume q^(-z-t-1).  Residue rings carry
counting measure, the value group counting measure on Z.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from typing import Optional

from .characters import (AdditiveCharacter, CharacterFamily, all_characters, eval_psi,
                         standard_family)
from .cfun import (FULL, UNITS, Affine, AffineVF, CFunction, Cell, GExpr, RVar, Term,
                   _cell_pair, _el, _norm_gamma, aff_const, evaluate, fresh, g_linear,
                   indicator_ball, mul, pullback, rx_lit, rx_res, rx_var, subst_res,
                   subst_zvar, with_psi)
from .errors import (FubiniMismatch, NotIntegrable, NotPrepared, UnsupportedClass,
                     UnsupportedOrder, VariableCollision)
from .exactnum import ONE, ZERO, Cyclotomic, MotivicValue, mv_series_coeff
from .expsum import ExpPolySum, sum_relative
from .localfield import LocalFieldElement, StructureConfig, as_basic
from .presburger import FALSE, TRUE, LinearTerm, _decompose, conj, eq, ge, substitute


# ---------------------------------------------------------------------------
# results

@dataclass
class IntegralResult:
    function: Optional[CFunction]
    cfg: StructureConfig
    integrable: bool = True
    witness: Optional[dict] = None

    def value(self, chars: CharacterFamily = None) -> MotivicValue:
        if not self.integrable:
            raise NotIntegrable("no value: the integrand is not integrable", self.witness)
        chars = chars or standard_family(self.cfg)
        return evaluate(self.function, {}, chars, self.cfg)

    def __str__(self):
        if not self.integrable:
            return f"not integrable ({self.witness})"
        return str(self.value())


# ---------------------------------------------------------------------------
# residue coordinates

def integrate_residue(F: CFunction, name: str) -> CFunction:
    if name not in dict(F.res):
        raise KeyError(f"{name} is not a residue coordinate")
    terms = []
    for t in F.terms:
        rv = tuple(replace(r, bound=True) if r.name == name else r for r in t.rvars)
        if not any(r.name == name for r in t.rvars):
            raise NotPrepared(f"term does not declare residue coordinate {name}")
        terms.append(replace(t, rvars=rv))
    return replace(F, terms=tuple(terms), res=tuple((n, d) for n, d in F.res if n != name))


# ---------------------------------------------------------------------------
# value-group coordinates

def _vg_sum_term(t: Term, name: str):
    """Sum one term over an integer variable; returns the list of new terms."""
    S = ExpPolySum(t.coeff.q)
    S.add(t.coeff, t.poly, t.beta, dict(t.gamma))
    try:
        parts = sum_relative(S, t.vg, name)
    except NotIntegrable as e:
        e.witness = dict(e.witness or {}, term=str(t))
        raise
    out = []
    for guard, H in parts:
        for (mono, b, g), c in H.terms.items():
            out.append(replace(t, coeff=c, poly={mono: Fraction(1)}, beta=b,
                               gamma=_norm_gamma(dict(g)), vg=guard))
    return out


def integrate_vg(F: CFunction, name: str) -> CFunction:
    terms = []
    for t in F.terms:
        terms.extend(_vg_sum_term(t, name))
    return replace(F, terms=tuple(terms), vg=tuple(v for v in F.vg if v != name))


def integrate_vg_result(F: CFunction, name: str, cfg) -> IntegralResult:
    try:
        return IntegralResult(integrate_vg(F, name), cfg)
    except NotIntegrable as e:
        return IntegralResult(None, cfg, False, e.witness)


# ---------------------------------------------------------------------------
# valued-field coordinates

def _vf_term(t: Term, x: str, cfg) -> list:
    c = t.cell(x)
    if c is None:
        raise NotIntegrable(f"{x} is unrestricted in a term; the integral over K diverges",
                            witness={"var": x, "term": str(t)})
    if c.kind == 0:
        return []
    for other in t.cells:
        if other.var != x and x in other.center.vars:
            raise UnsupportedOrder(f"cell of {other.var} is centered on a function of {x}; "
                                   f"integrate {other.var} first")
    depth, z, xi = c.depth, c.ordv, c.ac
    zt = LinearTerm.var(z)
    base = replace(t, cells=tuple(k for k in t.cells if k.var != x),
                   rvars=t.rvars + (RVar(xi, depth, UNITS, bound=True),),
                   beta=t.beta - zt - depth - 1)
    b = t.g.coeff(x)
    if b is None:
        return [(base, z)]
    g0 = t.g.drop_vf(x).add_affine(c.center, b)
    theta = 1 - b.ord()
    out = [(replace(base, g=g0, vg=conj(base.vg, ge(zt - theta))), z)]
    for z0 in range(theta - depth - 1, theta):
        piece = subst_zvar(replace(base, vg=conj(base.vg, eq(zt, z0))), z, LinearTerm.constant(z0))
        if piece.vg == FALSE:
            continue
        e = b * LocalFieldElement.pi_power(cfg, z0)
        lift = GExpr(lifts=((e, rx_var(xi), depth),))
        out.append((replace(piece, g=g0 + lift), None))
    return out


def integrate_vf(F: CFunction, x: str, cfg: StructureConfig) -> CFunction:
    if x not in F.vf:
        raise KeyError(f"{x} is not a valued-field coordinate")
    terms = []
    for t in F.terms:
        for piece, z in _vf_term(t, x, cfg):
            if piece.vg == FALSE:
                continue
            if z is None:
                terms.append(piece)
            else:
                terms.extend(_vg_sum_term(piece, z))
    return replace(F, terms=tuple(terms), vf=tuple(v for v in F.vf if v != x))


def integrate_coordinate(F: CFunction, name: str, cfg) -> CFunction:
    if name in F.vf:
        return integrate_vf(F, name, cfg)
    if name in F.vg:
        return integrate_vg(F, name)
    if name in dict(F.res):
        return integrate_residue(F, name)
    raise KeyError(f"unknown coordinate {name}")


def integrate_all(F: CFunction, cfg, order=None) -> CFunction:
    order = list(order) if order is not None else list(F.vf) + list(F.vg) + [n for n, _ in F.res]
    for name in order:
        F = integrate_coordinate(F, name, cfg)
    return F


def integrate_iterated(F: CFunction, order, cfg, verify_order=None, chars=None) -> IntegralResult:
    """Iterated one-coordinate integrals; optional cross-check in a second order."""
    try:
        G = integrate_all(F, cfg, order)
    except NotIntegrable as e:
        return IntegralResult(None, cfg, False, e.witness)
    res = IntegralResult(G, cfg)
    if verify_order is not None:
        H = integrate_all(F, cfg, verify_order)
        chars = chars or standard_family(cfg)
        a, b = evaluate(G, {}, chars, cfg), evaluate(H, {}, chars, cfg)
        if a != b:
            raise FubiniMismatch(f"orders {list(order)} and {list(verify_order)} disagree: {a} vs {b}")
    return res


def integral_value(F: CFunction, cfg, chars=None, order=None) -> MotivicValue:
    G = integrate_all(F, cfg, order)
    return evaluate(G, {}, chars or standard_family(cfg), cfg)


# ---------------------------------------------------------------------------
# Mellin transform

@dataclass
class MellinResult:
    slots: tuple                 # ((T-index, lambda key, depth), ...)
    values: dict                 # tuple of characters -> MotivicValue
    cfg: StructureConfig
    function: CFunction = None

    def component(self, chis) -> MotivicValue:
        chis = tuple(chis) if isinstance(chis, (list, tuple)) else (chis,)
        return self.values[chis]

    def trivial(self) -> MotivicValue:
        for k, v in self.values.items():
            if all(c.is_trivial for c in k):
                return v
        raise KeyError("no trivial component")

    def nontrivial(self):
        return {k: v for k, v in self.values.items() if not all(c.is_trivial for c in k)}

    def items(self):
        return self.values.items()

    def __add__(self, other):
        vals = {k: v + other.values[k] for k, v in self.values.items()}
        return MellinResult(self.slots, vals, self.cfg)


def _check_fresh(F: CFunction, js, keys):
    for t in F.terms:
        used = set(dict(t.gamma)) | t.coeff.tvars()
        bad = used & set(js)
        if bad:
            raise VariableCollision(f"T indices {sorted(bad)} already occur in the function")
        hk = {k for k, _ in t.h}
        badk = hk & set(keys)
        if badk:
            raise VariableCollision(f"depth terms {sorted(badk)} already index characters of the function")


def mellin_kernel(F: CFunction, slots, cfg) -> CFunction:
    """Multiply by prod T_j^{ord x} chi_lambda(ac_lambda(x)) on cells centered at 0."""
    terms = []
    for t in F.terms:
        keep = True
        for j, key, var in slots:
            lam = cfg.depth(key)
            c = t.cell(var)
            if c is None:
                raise NotIntegrable(f"{var} is unrestricted; the Mellin integral diverges",
                                    witness={"var": var})
            if c.kind == 0:
                keep = False
                break
            if not c.center.is_zero():
                t = _kernel_off_center(t, c, j, key, lam, cfg)
                continue
            if c.depth < lam:
                newac = fresh("ac_" + var)
                t = subst_res(t, {c.ac: rx_res(rx_var(newac), c.depth)})
                c2 = replace(c, depth=lam, ac=newac)
                t = replace(t, cells=tuple(c2 if k.var == var else k for k in t.cells))
                c = c2
            gam = dict(t.gamma)
            gam[j] = gam.get(j, LinearTerm()) + LinearTerm.var(c.ordv)
            e = rx_var(c.ac) if c.depth == lam else rx_res(rx_var(c.ac), lam)
            t = replace(t, gamma=_norm_gamma(gam), h=t.h + ((key, e),))
        if keep:
            terms.append(t)
    return replace(F, terms=tuple(terms))


def _kernel_off_center(t, c, j, key, lam, cfg):
    """On a ball around a != 0 the kernel is constant when the ball is small enough."""
    if c.center.vars:
        raise UnsupportedClass("Mellin kernel on a cell with a variable center")
    a = c.center.const
    va = a.ord()
    # need ord(x - a) >= va + lam + 1 throughout the cell
    zmin = _lower_bound(t.vg, c.ordv)
    if zmin is None or zmin < va + lam + 1:
        raise UnsupportedClass("ord/ac of x are not constant on this cell; re-cell around 0 first")
    gam = dict(t.gamma)
    gam[j] = gam.get(j, LinearTerm()) + va
    return replace(t, gamma=_norm_gamma(gam), h=t.h + ((key, rx_lit(a.ac(lam), lam)),))


def _lower_bound(formula, v):
    lo = None
    for g, pr in _decompose(formula, v):
        if pr.start is None or not pr.start.is_const():
            return None
        s = int(pr.start.const)
        lo = s if lo is None else min(lo, s)
    return lo


def mellin(F: CFunction, fresh_slots, cfg: StructureConfig, chars: CharacterFamily = None) -> MellinResult:
    """Mellin transform; ``fresh_slots`` is a list of (T index, lambda key, variable)."""
    slots = [(int(j), str(as_basic(k)), v) for j, k, v in fresh_slots]
    _check_fresh(F, [j for j, _, _ in slots], [k for _, k, _ in slots])
    G = mellin_kernel(F, slots, cfg)
    G = integrate_all(G, cfg, [v for _, _, v in slots] + [x for x in G.vf if x not in {v for _, _, v in slots}]
                      + list(G.vg) + [n for n, _ in G.res])
    base = chars or standard_family(cfg)
    depths = [cfg.depth(k) for _, k, _ in slots]
    groups = [all_characters(cfg, d) for d in depths]
    values = {}
    for combo in product(*groups):
        ch = base
        for (_, k, _), chi in zip(slots, combo):
            ch = ch.with_chi(k, chi)
        values[tuple(combo)] = evaluate(G, {}, ch, cfg)
    return MellinResult(tuple((j, k, d) for (j, k, _), d in zip(slots, depths)), values, cfg, G)


def mellin_invert_at(M: MellinResult, delta, xi) -> MotivicValue:
    """Recover F at a point with ord data delta and ac_lambda data xi from its Mellin transform."""
    delta = tuple(delta) if isinstance(delta, (list, tuple)) else (delta,)
    xi = tuple(xi) if isinstance(xi, (list, tuple)) else (xi,)
    cfg = M.cfg
    total = None
    count = 0
    for chis, val in M.values.items():
        w = ONE
        for chi, x in zip(chis, xi):
            w = w * chi.conj()(x)
        term = val * MotivicValue.const(w, val.q)
        total = term if total is None else total + term
        count += 1
    total = total * MotivicValue.const(Fraction(1, count), total.q)
    for (j, _, lam), d in zip(M.slots, delta):
        total = mv_series_coeff(total, j, d)
        total = total.scale_monomial(d + lam + 1)
    return total.pin(cfg.p)


# ---------------------------------------------------------------------------
# Fourier transform on Schwartz-type step functions

@dataclass(frozen=True)
class BallWave:
    """1_{a + pi^m O}(x) * psi(b x)."""
    a: LocalFieldElement
    m: int
    b: LocalFieldElement


@dataclass
class SchwartzFunction:
    """Finite sum of coeff * prod_i 1_{a_i + pi^{m_i} O}(x_i) psi(b_i x_i)."""
    cfg: StructureConfig
    n: int
    terms: list = field(default_factory=list)       # (MotivicValue, tuple of BallWave)

    # constructors
    @classmethod
    def ball(cls, cfg, a, m, b=0, coeff=1, n=1):
        zero = cfg.elem(0)
        waves = tuple(BallWave(_el(cfg, a) if i == 0 else zero, m, _el(cfg, b) if i == 0 else zero)
                      for i in range(n))
        return cls(cfg, n, [(_mv(coeff), waves)])

    @classmethod
    def phi_alpha(cls, cfg, alpha, n=1):
        zero = cfg.elem(0)
        return cls(cfg, n, [(_mv(1), tuple(BallWave(zero, alpha, zero) for _ in range(n)))])

    @classmethod
    def from_table(cls, cfg, level, table, scale_exp=0, modulation=0):
        """Step function on pi^scale_exp O, constant modulo pi^level, times psi(modulation x)."""
        terms = []
        b = _el(cfg, modulation)
        for r, val in sorted(table.items()):
            if val:
                a = LocalFieldElement.lift_residue(cfg, r, level - scale_exp - 1, scale_exp)
                terms.append((_mv(val), (BallWave(a, level, b),)))
        return cls(cfg, 1, terms)

    def tensor(self, other):
        terms = [(c1 * c2, w1 + w2) for c1, w1 in self.terms for c2, w2 in other.terms]
        return SchwartzFunction(self.cfg, self.n + other.n, terms)

    def __add__(self, other):
        return SchwartzFunction(self.cfg, self.n, self.terms + other.terms)

    def scale(self, c):
        c = _mv(c)
        return SchwartzFunction(self.cfg, self.n, [(k * c, w) for k, w in self.terms])

    def __sub__(self, other):
        return self + other.scale(-1)

    # evaluation
    def evaluate(self, point, psi: AdditiveCharacter = None) -> MotivicValue:
        psi = psi or AdditiveCharacter.standard(self.cfg)
        pt = [_el(self.cfg, x) for x in (point if isinstance(point, (list, tuple)) else [point])]
        total = MotivicValue.const(0)
        for c, waves in self.terms:
            val = ONE
            for w, x in zip(waves, pt):
                d = x - w.a
                if not (d.is_zero() or d.ord() >= w.m):
                    val = ZERO
                    break
                val = val * eval_psi(psi, w.b * x)
            if val:
                total = total + c * MotivicValue.const(val, c.q)
        return total

    # transforms
    def fourier(self) -> "SchwartzFunction":
        """F(y) = integral of f(x) psi(x.y) dx, term by term in closed form."""
        psi = AdditiveCharacter.standard(self.cfg)
        out = []
        for c, waves in self.terms:
            k = c
            new = []
            for w in waves:
                # int_{a + pi^m O} psi(x (y + b)) dx = q^-m psi(a (y + b)) 1[ord(y + b) >= 1 - m]
                k = k * MotivicValue.q_power(-w.m, k.q) * MotivicValue.const(eval_psi(psi, w.a * w.b), k.q)
                new.append(BallWave(-w.b, 1 - w.m, w.a))
            out.append((k, tuple(new)))
        return SchwartzFunction(self.cfg, self.n, out)

    def reflect(self) -> "SchwartzFunction":
        return SchwartzFunction(self.cfg, self.n,
                                [(c, tuple(BallWave(-w.a, w.m, -w.b) for w in ws)) for c, ws in self.terms])

    def convolve(self, other: "SchwartzFunction") -> "SchwartzFunction":
        """(f * g)(x) = integral f(y) g(x - y) dy."""
        psi = AdditiveCharacter.standard(self.cfg)
        out = []
        for c1, w1 in self.terms:
            for c2, w2 in other.terms:
                k = c1 * c2
                new = []
                for u, v in zip(w1, w2):
                    d = u.b - v.b
                    m = max(u.m, v.m)
                    if not (d.is_zero() or d.ord() >= 1 - m):
                        k = None
                        break
                    k = k * MotivicValue.q_power(-m, k.q)
                    if u.m >= v.m:
                        # integrate over u's ball; x ranges over a_u + a_v + pi^{m_v} O
                        k = k * MotivicValue.const(eval_psi(psi, d * u.a), k.q)
                        new.append(BallWave(u.a + v.a, v.m, v.b))
                    else:
                        k = k * MotivicValue.const(eval_psi(psi, -(d * v.a)), k.q)
                        new.append(BallWave(u.a + v.a, u.m, u.b))
                if k is not None:
                    out.append((k, tuple(new)))
        return SchwartzFunction(self.cfg, self.n, out)

    def to_cfunction(self, names=None) -> CFunction:
        names = list(names or ([f"x{i + 1}" for i in range(self.n)] if self.n > 1 else ["x"]))
        F = None
        for c, waves in self.terms:
            G = None
            for w, v in zip(waves, names):
                part = indicator_ball(w.a, w.m, self.cfg, var=v)
                if not w.b.is_zero():
                    part = with_psi(part, g_linear(self.cfg, {v: w.b}))
                G = part if G is None else mul(G, part, self.cfg)
            G = G.scale(c)
            F = G if F is None else F + G
        return F if F is not None else CFunction((), tuple(names))


def _mv(c):
    return c if isinstance(c, MotivicValue) else MotivicValue.const(c)


def fourier(F, cfg=None):
    """Fourier transform of a Schwartz-type function (closed form)."""
    if isinstance(F, SchwartzFunction):
        return F.fourier()
    if isinstance(F, CFunction):
        return schwartz_from_cfunction(F, cfg).fourier()
    raise UnsupportedClass(f"cannot Fourier-transform {type(F).__name__}")


def convolve(F, G):
    if isinstance(F, CFunction):
        F = schwartz_from_cfunction(F)
    if isinstance(G, CFunction):
        G = schwartz_from_cfunction(G)
    return F.convolve(G)


def schwartz_from_cfunction(F: CFunction, cfg=None) -> SchwartzFunction:
    """Rewrite a depth-0 ball/annulus presentation (one variable) as balls, up to measure zero."""
    if len(F.vf) != 1:
        raise UnsupportedClass("conversion handles one valued-field variable")
    x = F.vf[0]
    terms = []
    for t in F.terms:
        c = t.cell(x)
        if c is None or t.h or t.rvars or t.rcond or t.g.lifts or t.g.tables or t.gamma or t.poly != {(): 1} \
                or t.beta.coeffs or set(t.g.vf_vars) - {x} or c.center.vars:
            raise UnsupportedClass("term is outside the step-function class")
        if c.kind == 0:
            continue
        cfg = cfg or StructureConfig(c.center.const.p if c.center.const is not None else _guess_p(t),
                                     c.center.const.backend if c.center.const is not None else "padic")
        if c.depth != 0:
            raise UnsupportedClass("ac conditions beyond depth 0 are not handled")
        a = c.center.const if c.center.const is not None else cfg.elem(0)
        b = t.g.coeff(x) or cfg.elem(0)
        coeff = t.coeff * MotivicValue.const(eval_psi(AdditiveCharacter.standard(cfg), t.g.const)
                                             if t.g.const is not None else ONE)
        for guard, pr in _decompose(t.vg, c.ordv):
            if guard != TRUE or pr.step != 1 or pr.start is None or not pr.start.is_const():
                raise UnsupportedClass("ord condition is not an interval")
            lo = int(pr.start.const)
            terms.append((coeff, (BallWave(a, lo, b),)))
            if pr.end is not None:
                terms.append((-coeff, (BallWave(a, int(pr.end.const) + 1, b),)))
    if cfg is None:
        raise UnsupportedClass("empty function: no field data")
    return SchwartzFunction(cfg, 1, terms)


def _guess_p(t):
    for k in t.g.lin:
        return k[1].p
    raise UnsupportedClass("cannot infer the prime; pass cfg")


def fourier_at(F: CFunction, y, cfg, chars=None) -> MotivicValue:
    """Fourier transform at a point by direct integration of F(x) psi(x.y)."""
    ys = y if isinstance(y, (list, tuple)) else [y]
    g = g_linear(cfg, {v: _el(cfg, yy) for v, yy in zip(F.vf, ys)})
    return integral_value(with_psi(F, g), cfg, chars)


# ---------------------------------------------------------------------------
# change of variables

def change_of_variables_check(F: CFunction, f, cfg, chars=None, level=None) -> bool:
    """Check int_{X1} f^*(F) q^{-ord Jac f} = int_{X2} F for a map from the catalogue.

    ``f`` is ("affine", a, b) for x -> a x + b, or ("power", k, c, r) for
    x -> x^k on c + pi^r O with c a unit, r >= 1 and gcd(k, p) = 1.
    """
    chars = chars or standard_family(cfg)
    x = F.vf[0]
    if f[0] == "affine":
        a, b = _el(cfg, f[1]), _el(cfg, f[2])
        if a.is_zero():
            raise UnsupportedClass("x -> a x + b needs a != 0")
        G = pullback(F, {x: AffineVF(a, aff_const(cfg, b), x + "'")}, cfg)
        lhs = integral_value(G, cfg, chars) * MotivicValue.q_power(-int(a.ord()))
        rhs = integral_value(F, cfg, chars)
        return lhs == rhs
    if f[0] == "power":
        from .oracle import ball_integral
        k, c, r = int(f[1]), _el(cfg, f[2]), int(f[3])
        if k % cfg.p == 0 or c.ord() != 0 or r < 1:
            raise UnsupportedClass("power maps need gcd(k, p) = 1 on a unit coset c + pi^r O")
        image_center = c
        for _ in range(k - 1):
            image_center = image_center * c
        Fimg = F if all(t.cell(x) is not None for t in F.terms) else \
            mul(F, indicator_ball(image_center, r, cfg, var=x), cfg)
        rhs = integral_value(Fimg, cfg, chars).pin(cfg.p)
        N = level or r + 1
        # x -> x^k maps each coset x + pi^N O onto x^k + pi^N O with unit Jacobian
        seen = set()
        total = ZERO
        for s in range(cfg.p ** (N - r)):
            xx = c + LocalFieldElement.lift_residue(cfg, s, N - r - 1, r)
            yy = xx
            for _ in range(k - 1):
                yy = yy * xx
            key = yy.residue(N - 1)
            if key in seen:
                raise UnsupportedClass(f"map is not injective modulo pi^{N}")
            seen.add(key)
            total = total + ball_integral(Fimg, yy, N, cfg, chars)
        return MotivicValue.const(total, cfg.p) == rhs
    raise UnsupportedClass(f"map {f[0]!r} is not in the catalogue")
