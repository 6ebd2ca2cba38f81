"""Cell-presented constructible exponential functions.

A :class:`CFunction` is a finite sum of :class:`Term` objects.  One term is

    coeff * poly(z) * q^beta(z) * T^gamma(z) * sum_{bound residues} psi(g) * prod chi_k(h_k)

restricted to a domain given by one :class:`Cell` per valued-field variable,
a Presburger formula over the integer coordinates (free value-group variables
and the cells' ``ord`` parameters) and residue coordinates with subsets.

Residue-valued data are small expression trees (tuples), see ``rx_*``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .characters import CharacterFamily, eval_psi
from .errors import DepthMismatch, DomainMismatch, EnumerationCap, UnsupportedMap
from .exactnum import ONE, ZERO, Cyclotomic, MotivicValue
from .expsum import P_ONE, p_eval, p_from_lt, p_mul, p_subs, p_vars
from .localfield import LocalFieldElement, StructureConfig, as_basic
from .presburger import (TRUE, FALSE, Formula, LinearTerm, as_lt, conj, parse_formula,
                         rename as f_rename, substitute as f_subs)

_counter = itertools.count()


def fresh(prefix):
    return f"{prefix}#{next(_counter)}"


# ---------------------------------------------------------------------------
# residue expressions

def rx_var(name):
    return ("var", name)


def rx_const(n):
    return ("const", int(n))


def rx_lit(value, depth):
    """An encoded element of R_depth."""
    return ("lit", int(value), int(depth))


def rx_add(a, b):
    return ("add", a, b)


def rx_mul(a, b):
    return ("mul", a, b)


def rx_neg(a):
    return ("neg", a)


def rx_res(a, d):
    return ("res", a, int(d))


def rx_table(names, mapping, depth):
    """Lookup mapping[(values of names)] -> residue of the given depth (0 if absent)."""
    return ("table", tuple(names), dict(mapping), int(depth))


def rx_vars(e) -> set:
    k = e[0]
    if k == "var":
        return {e[1]}
    if k in ("const", "lit"):
        return set()
    if k in ("add", "mul"):
        return rx_vars(e[1]) | rx_vars(e[2])
    if k in ("neg", "res"):
        return rx_vars(e[1])
    if k == "table":
        return set(e[1])
    raise ValueError(f"bad residue expression {e!r}")


def rx_natural_depth(e, depths):
    k = e[0]
    if k == "var":
        return depths[e[1]]
    if k == "const":
        return None
    if k == "lit":
        return e[2]
    if k in ("add", "mul"):
        a, b = rx_natural_depth(e[1], depths), rx_natural_depth(e[2], depths)
        return b if a is None else a if b is None else min(a, b)
    if k == "neg":
        return rx_natural_depth(e[1], depths)
    if k == "res":
        return e[2]
    return e[3]


def rx_eval(e, env, depths, target, cfg) -> int:
    """Evaluate in R_target."""
    ring = cfg.ring(target)
    k = e[0]
    if k == "var":
        d = depths[e[1]]
        if d < target:
            raise DepthMismatch(f"{e[1]} has depth {d}, read at depth {target}")
        return cfg.ring(d).res(env[e[1]], target)
    if k == "const":
        return ring.from_int(e[1])
    if k == "lit":
        if e[2] < target:
            raise DepthMismatch(f"literal of depth {e[2]} read at depth {target}")
        return cfg.ring(e[2]).res(e[1], target)
    if k == "add":
        return ring.add(rx_eval(e[1], env, depths, target, cfg), rx_eval(e[2], env, depths, target, cfg))
    if k == "mul":
        return ring.mul(rx_eval(e[1], env, depths, target, cfg), rx_eval(e[2], env, depths, target, cfg))
    if k == "neg":
        return ring.neg(rx_eval(e[1], env, depths, target, cfg))
    if k == "res":
        d = e[2]
        if d < target:
            raise DepthMismatch(f"res to depth {d} read at depth {target}")
        return cfg.ring(d).res(rx_eval(e[1], env, depths, d, cfg), target)
    if k == "table":
        key = tuple(env[n] for n in e[1])
        v = e[2].get(key if len(key) != 1 else key[0], e[2].get(key, 0))
        return cfg.ring(e[3]).res(v, target) if e[3] >= target else _raise_depth(e, target)
    raise ValueError(f"bad residue expression {e!r}")


def _raise_depth(e, target):
    raise DepthMismatch(f"table of depth {e[3]} read at depth {target}")


def rx_subst(e, mapping):
    k = e[0]
    if k == "var":
        return mapping.get(e[1], e)
    if k in ("const", "lit"):
        return e
    if k in ("add", "mul"):
        return (k, rx_subst(e[1], mapping), rx_subst(e[2], mapping))
    if k == "neg":
        return (k, rx_subst(e[1], mapping))
    if k == "res":
        return (k, rx_subst(e[1], mapping), e[2])
    if k == "table":
        names = e[1]
        if not any(n in mapping for n in names):
            return e
        # tables are keyed by plain variables; only renaming is supported
        new = []
        for n in names:
            m = mapping.get(n, ("var", n))
            if m[0] != "var":
                raise UnsupportedMap("table keys can only be renamed")
            new.append(m[1])
        return ("table", tuple(new), e[2], e[3])
    raise ValueError(f"bad residue expression {e!r}")


def rx_str(e):
    k = e[0]
    if k == "var":
        return e[1]
    if k == "const":
        return str(e[1])
    if k == "lit":
        return f"[{e[1]}]_{e[2]}"
    if k == "add":
        return f"({rx_str(e[1])} + {rx_str(e[2])})"
    if k == "mul":
        return f"{rx_str(e[1])}*{rx_str(e[2])}"
    if k == "neg":
        return f"-{rx_str(e[1])}"
    if k == "res":
        return f"res({rx_str(e[1])}, {e[2]})"
    return f"table[{','.join(e[1])}]"


# ---------------------------------------------------------------------------
# domain pieces

def _el(cfg, x):
    return x if isinstance(x, LocalFieldElement) else cfg.elem(x)


@dataclass(frozen=True)
class Affine:
    """const + sum coeff_w * w over valued-field variables."""
    const: Optional[LocalFieldElement] = None
    lin: tuple = ()

    def value(self, point, cfg) -> LocalFieldElement:
        v = self.const if self.const is not None else LocalFieldElement.zero(cfg)
        for w, c in self.lin:
            v = v + c * _el(cfg, point[w])
        return v

    @property
    def vars(self):
        return {w for w, _ in self.lin}

    def is_zero(self):
        return not self.lin and (self.const is None or self.const.is_zero())

    def coeff(self, w):
        for v, c in self.lin:
            if v == w:
                return c
        return None

    def __add__(self, other):
        if self.const is None:
            const = other.const
        elif other.const is None:
            const = self.const
        else:
            const = self.const + other.const
        d = dict(self.lin)
        for w, c in other.lin:
            d[w] = d[w] + c if w in d else c
        return Affine(const, _clean_lin(d))

    def scale(self, k):
        return Affine(None if self.const is None else self.const * k,
                      _clean_lin({w: c * k for w, c in self.lin}))

    def drop(self, w):
        return Affine(self.const, tuple((v, c) for v, c in self.lin if v != w))

    def subs(self, w, aff):
        c = self.coeff(w)
        if c is None:
            return self
        return self.drop(w) + aff.scale(c)

    def __str__(self):
        parts = [f"{c}*{w}" for w, c in self.lin]
        if self.const is not None and not self.const.is_zero():
            parts.append(str(self.const))
        return " + ".join(parts) or "0"


def _clean_lin(d):
    return tuple(sorted((w, c) for w, c in d.items() if not c.is_zero()))


def aff_const(cfg, c):
    c = _el(cfg, c)
    return Affine(None if c.is_zero() else c)


@dataclass(frozen=True)
class Cell:
    """ord(x - center) = ordv and ac_depth(x - center) = ac for type 1; x = center for type 0."""
    var: str
    center: Affine
    depth: int
    kind: int
    ac: str = ""
    ordv: str = ""

    def __str__(self):
        if self.kind == 0:
            return f"{self.var} = {self.center}"
        return f"ord({self.var} - {self.center}) = {self.ordv}, ac_{self.depth} = {self.ac}"


FULL = "full"
UNITS = "units"


@dataclass(frozen=True)
class RVar:
    name: str
    depth: int
    subset: object = FULL     # FULL, UNITS or a frozenset of encoded residues
    bound: bool = False

    def values(self, cfg):
        ring = cfg.ring(self.depth)
        if self.subset == FULL:
            return list(ring.elements())
        if self.subset == UNITS:
            return list(ring.units)
        return sorted(self.subset)

    def contains(self, x, cfg):
        if self.subset == FULL:
            return 0 <= x < cfg.ring(self.depth).size
        if self.subset == UNITS:
            return cfg.ring(self.depth).is_unit(x)
        return x in self.subset

    def count_mv(self, q=None):
        d = self.depth
        if self.subset == FULL:
            return MotivicValue.q_power(max(d + 1, 0), q)
        if self.subset == UNITS:
            if d < 0:
                return MotivicValue.const(1, q)
            return MotivicValue.q_power(d + 1, q) - MotivicValue.q_power(d, q)
        return MotivicValue.const(len(self.subset), q)


def intersect_subsets(a, b, depth, cfg):
    if a == FULL:
        return b
    if b == FULL:
        return a
    va = frozenset(cfg.ring(depth).units) if a == UNITS else a
    vb = frozenset(cfg.ring(depth).units) if b == UNITS else b
    if a == UNITS and b == UNITS:
        return UNITS
    return va & vb


@dataclass(frozen=True)
class GExpr:
    """Argument of psi: linear in the VF variables plus residue-driven pieces.

    lifts: (e, rexpr, d) contributes e * lift(rexpr in R_d); requires ord(e) + d >= 0.
    tables: (names, mapping) contributes mapping[values of names] (elements of K).
    """
    lin: tuple = ()
    const: Optional[LocalFieldElement] = None
    lifts: tuple = ()
    tables: tuple = ()

    def is_zero(self):
        return not self.lin and not self.lifts and not self.tables and (
            self.const is None or self.const.is_zero())

    def coeff(self, w):
        for v, c in self.lin:
            if v == w:
                return c
        return None

    def __add__(self, other):
        if self.const is None:
            const = other.const
        elif other.const is None:
            const = self.const
        else:
            const = self.const + other.const
        d = dict(self.lin)
        for w, c in other.lin:
            d[w] = d[w] + c if w in d else c
        return GExpr(_clean_lin(d), const, self.lifts + other.lifts, self.tables + other.tables)

    @property
    def vf_vars(self):
        return {w for w, _ in self.lin}

    @property
    def res_vars(self):
        out = set()
        for _, e, _ in self.lifts:
            out |= rx_vars(e)
        for names, _ in self.tables:
            out |= set(names)
        return out

    def drop_vf(self, w):
        return GExpr(tuple((v, c) for v, c in self.lin if v != w), self.const, self.lifts, self.tables)

    def add_affine(self, aff: Affine, k):
        extra = GExpr(aff.scale(k).lin, aff.scale(k).const)
        return self + extra

    def value(self, point, env, depths, cfg) -> LocalFieldElement:
        v = self.const if self.const is not None else LocalFieldElement.zero(cfg)
        for w, c in self.lin:
            v = v + c * _el(cfg, point[w])
        for e, rx, d in self.lifts:
            r = rx_eval(rx, env, depths, d, cfg)
            v = v + e * LocalFieldElement.lift_residue(cfg, r, d)
        for names, mapping in self.tables:
            key = tuple(env[n] for n in names)
            val = mapping.get(key)
            if val is None and len(key) == 1:
                val = mapping.get(key[0])
            if val is not None:
                v = v + _el(cfg, val)
        return v

    def rename_res(self, mapping):
        lifts = tuple((e, rx_subst(rx, mapping), d) for e, rx, d in self.lifts)
        tables = []
        for names, m in self.tables:
            new = []
            for n in names:
                r = mapping.get(n, ("var", n))
                if r[0] != "var":
                    raise UnsupportedMap("table keys can only be renamed")
                new.append(r[1])
            tables.append((tuple(new), m))
        return GExpr(self.lin, self.const, lifts, tuple(tables))


def g_linear(cfg, coeffs=None, const=None):
    lin = _clean_lin({w: _el(cfg, c) for w, c in (coeffs or {}).items()})
    c = None if const is None else _el(cfg, const)
    return GExpr(lin, c)


# ---------------------------------------------------------------------------
# terms and functions

@dataclass(frozen=True)
class Term:
    coeff: MotivicValue = field(default_factory=lambda: MotivicValue.const(1))
    poly: dict = field(default_factory=lambda: dict(P_ONE))
    beta: LinearTerm = field(default_factory=LinearTerm)
    gamma: tuple = ()
    vg: Formula = TRUE
    cells: tuple = ()
    rvars: tuple = ()
    rcond: tuple = ()      # ((rexpr, depth), ...), frozenset of allowed tuples
    g: GExpr = field(default_factory=GExpr)
    h: tuple = ()          # (key text, rexpr)

    def cell(self, var):
        for c in self.cells:
            if c.var == var:
                return c
        return None

    @property
    def gamma_map(self):
        return dict(self.gamma)

    def rvar(self, name):
        for r in self.rvars:
            if r.name == name:
                return r
        return None

    def depths(self):
        d = {r.name: r.depth for r in self.rvars}
        for c in self.cells:
            if c.kind == 1:
                d[c.ac] = c.depth
        return d

    def zvars(self):
        out = p_vars(self.poly) | self.beta.vars | self.vg.free_vars
        for _, t in self.gamma:
            out |= t.vars
        return out

    def __str__(self):
        bits = [f"({self.coeff})"]
        if self.poly != P_ONE:
            bits.append(f"[{self.poly}]")
        if self.beta.coeffs:
            bits.append(f"q^({self.beta})")
        for j, t in self.gamma:
            bits.append(f"T{j}^({t})")
        if not self.g.is_zero():
            bits.append("E(g)")
        for k, e in self.h:
            bits.append(f"chi[{k}]({rx_str(e)})")
        dom = [str(c) for c in self.cells]
        if self.vg != TRUE:
            dom.append(str(self.vg))
        return " * ".join(bits) + (" on {" + "; ".join(dom) + "}" if dom else "")


def _norm_gamma(g):
    items = g.items() if isinstance(g, dict) else g
    return tuple(sorted(((int(j), as_lt(t)) for j, t in items if as_lt(t).coeffs or as_lt(t).const),
                        key=lambda x: x[0]))


def make_term(coeff=1, poly=None, beta=None, gamma=None, vg=TRUE, cells=(), rvars=(),
              rcond=(), g=None, h=(), q=None):
    c = coeff if isinstance(coeff, MotivicValue) else MotivicValue.const(coeff, q)
    if isinstance(vg, str):
        vg = parse_formula(vg)
    return Term(c, dict(poly) if poly is not None else dict(P_ONE), as_lt(beta or 0),
                _norm_gamma(gamma or {}), vg, tuple(cells), tuple(rvars), tuple(rcond),
                g if g is not None else GExpr(), tuple((str(as_basic(k)), e) for k, e in h))


@dataclass(frozen=True)
class CFunction:
    terms: tuple = ()
    vf: tuple = ()
    vg: tuple = ()
    res: tuple = ()    # ((name, depth), ...)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def scale(self, c):
        c = c if isinstance(c, MotivicValue) else MotivicValue.const(c)
        return replace(self, terms=tuple(replace(t, coeff=t.coeff * c) for t in self.terms))

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return add(self, -other)

    @property
    def class_tag(self):
        has_g = any(not t.g.is_zero() for t in self.terms)
        has_h = any(t.h for t in self.terms)
        has_den = any(t.coeff.den for t in self.terms)
        base = "C_M" if has_den else "C"
        return base + ("^exp" if has_g else "^e" if has_h else "")

    def __str__(self):
        return "\n".join(str(t) for t in self.terms) or "0"


def zero_function(vf=(), vg=(), res=()):
    return CFunction((), tuple(vf), tuple(vg), tuple(res))


def constant_function(value, vf=(), vg=(), res=()):
    v = value if isinstance(value, MotivicValue) else MotivicValue.const(value)
    return CFunction((Term(coeff=v),), tuple(vf), tuple(vg), tuple(res))


def _sig_union(a, b):
    return tuple(dict.fromkeys(tuple(a) + tuple(b)))


def add(F: CFunction, G: CFunction) -> CFunction:
    return CFunction(F.terms + G.terms, _sig_union(F.vf, G.vf), _sig_union(F.vg, G.vg),
                     _sig_union(F.res, G.res))


# ---------------------------------------------------------------------------
# evaluation

def _point_env(F, point, cfg):
    pt = dict(point)
    for v in F.vf:
        if v not in pt:
            raise KeyError(f"missing valued-field coordinate {v}")
        pt[v] = _el(cfg, pt[v])
    return pt


def evaluate(F: CFunction, point: dict, chars: CharacterFamily, cfg: StructureConfig) -> MotivicValue:
    pt = _point_env(F, point, cfg)
    total = MotivicValue.const(0)
    for t in F.terms:
        v = eval_term(t, pt, chars, cfg)
        if v is not None:
            total = total + v
    return total


def eval_term(t: Term, pt, chars, cfg, q=None):
    """Value of one term at a point, or None when the point is outside its domain."""
    env_z = {k: v for k, v in pt.items() if isinstance(v, int)}
    env_r = dict(env_z)
    depths = {r.name: r.depth for r in t.rvars}
    for c in t.cells:
        x = _el(cfg, pt[c.var])
        d = x - c.center.value(pt, cfg)
        if c.kind == 0:
            if not d.is_zero():
                return None
            continue
        if d.is_zero():
            return None
        env_z[c.ordv] = d.ord()
        env_r[c.ac] = d.ac(c.depth)
        depths[c.ac] = c.depth
    if not t.vg.holds(env_z):
        return None
    for r in t.rvars:
        if not r.bound:
            if r.name not in pt:
                raise KeyError(f"missing residue coordinate {r.name}")
            if not r.contains(pt[r.name], cfg):
                return None
    base = _monomial_part(t, env_z, q if q is not None else t.coeff.q)
    if base.is_zero():
        return None
    s, factor = residue_sum(t, env_r, depths, pt, chars, cfg, base.q)
    if s is None:
        return None
    return base * factor * MotivicValue.const(s, base.q)


def _monomial_part(t, env_z, q):
    pv = p_eval(t.poly, env_z)
    be = t.beta.eval(env_z)
    gs = [(j, e.eval(env_z)) for j, e in t.gamma]
    if be.denominator != 1 or any(e.denominator != 1 for _, e in gs):
        raise ValueError("non-integral exponent at an admissible point")
    c = t.coeff if q is None or t.coeff.q is not None else t.coeff.pin(q)
    return c * MotivicValue.monomial(pv, int(be), [(j, int(e)) for j, e in gs], c.q)


def residue_sum(t: Term, env_r, depths, pt, chars, cfg, q=None):
    """(cyclotomic sum over active bound residues, motivic count of the passive ones)."""
    h = list(t.h)
    rv = {r.name: r for r in t.rvars}
    bound = [r for r in t.rvars if r.bound]
    # a trivial character on a plain bound variable only restricts it to units
    keep = []
    for key, e in h:
        target = cfg.depth(key)
        name = None
        if e[0] == "var":
            name = e[1]
        elif e[0] == "res" and e[1][0] == "var" and e[2] >= target:
            name = e[1][1]
        if name in rv and rv[name].bound and chars.is_trivial_at(key) and rv[name].depth >= target >= 0:
            r = rv[name]
            if r.subset == FULL:
                rv[name] = replace(r, subset=UNITS)
            elif r.subset != UNITS:
                rv[name] = replace(r, subset=frozenset(x for x in r.subset if cfg.ring(r.depth).is_unit(x)))
            continue
        keep.append((key, e))
    bound = [rv[r.name] for r in bound]
    active = set(t.g.res_vars)
    for _, e in keep:
        active |= rx_vars(e)
    for cond, _ in t.rcond:
        for e, _ in cond:
            active |= rx_vars(e)
    factor = MotivicValue.const(1, q)
    enum = []
    for r in bound:
        if r.name in active:
            enum.append(r)
        else:
            factor = factor * r.count_mv(q)
    size = 1
    for r in enum:
        size *= len(r.values(cfg))
    if size > cfg.enum_cap:
        raise EnumerationCap(f"residue enumeration of size {size} exceeds cap {cfg.enum_cap}")
    chi_cache = {}
    total = ZERO
    hit = False
    env = dict(env_r)
    for combo in itertools.product(*(r.values(cfg) for r in enum)):
        for r, x in zip(enum, combo):
            env[r.name] = x
        if not _rcond_ok(t.rcond, env, depths, cfg):
            continue
        hit = True
        val = ONE
        for key, e in keep:
            d = cfg.depth(key)
            ch = chi_cache.get(key)
            if ch is None:
                ch = chi_cache[key] = chars.chi(key, d)
            val = val * ch(rx_eval(e, env, depths, d, cfg))
            if not val:
                break
        if not val:
            continue
        if not t.g.is_zero():
            val = val * eval_psi(chars.psi, t.g.value(pt, env, depths, cfg))
        total = total + val
    if not hit:
        return None, factor
    return total, factor


def _rcond_ok(rcond, env, depths, cfg):
    for cond, allowed in rcond:
        key = tuple(rx_eval(e, env, depths, d, cfg) for e, d in cond)
        if key not in allowed:
            return False
    return True


# ---------------------------------------------------------------------------
# renaming and substitution inside terms

def rename_zvars(t: Term, mapping) -> Term:
    if not mapping:
        return t
    lts = {k: LinearTerm.var(v) for k, v in mapping.items()}
    poly = t.poly
    tmp = {}
    for k, v in mapping.items():
        tmp[k] = f"__tmp_{k}"
        poly = p_subs(poly, k, p_from_lt(LinearTerm.var(tmp[k])))
    for k, v in mapping.items():
        poly = p_subs(poly, tmp[k], p_from_lt(LinearTerm.var(v)))
    cells = tuple(replace(c, ordv=mapping.get(c.ordv, c.ordv)) for c in t.cells)
    return replace(t, poly=poly, beta=t.beta.subs_many(lts),
                   gamma=tuple((j, e.subs_many(lts)) for j, e in t.gamma),
                   vg=f_rename(t.vg, mapping), cells=cells)


def subst_zvar(t: Term, name, lt) -> Term:
    lt = as_lt(lt)
    return replace(t, poly=p_subs(t.poly, name, p_from_lt(lt)), beta=t.beta.subs(name, lt),
                   gamma=tuple((j, e.subs(name, lt)) for j, e in t.gamma if (e.subs(name, lt).coeffs or e.subs(name, lt).const)),
                   vg=f_subs(t.vg, name, lt))


def subst_res(t: Term, mapping) -> Term:
    """Substitute residue expressions for residue names (the names themselves stay declared)."""
    if not mapping:
        return t
    h = tuple((k, rx_subst(e, mapping)) for k, e in t.h)
    rcond = tuple((tuple((rx_subst(e, mapping), d) for e, d in cond), allowed) for cond, allowed in t.rcond)
    return replace(t, h=h, rcond=rcond, g=t.g.rename_res(mapping))


def rename_res(t: Term, mapping) -> Term:
    """Rename residue variables (bound, free or cell ac names)."""
    if not mapping:
        return t
    t2 = subst_res(t, {k: rx_var(v) for k, v in mapping.items()})
    rvars = tuple(replace(r, name=mapping.get(r.name, r.name)) for r in t.rvars)
    cells = tuple(replace(c, ac=mapping.get(c.ac, c.ac)) for c in t.cells)
    return replace(t2, rvars=rvars, cells=cells)


def freshen(t: Term) -> Term:
    """Give bound residue variables and cell parameters fresh names."""
    rmap = {r.name: fresh(r.name.split("#")[0]) for r in t.rvars if r.bound}
    zmap = {}
    for c in t.cells:
        if c.kind == 1:
            rmap[c.ac] = fresh(c.ac.split("#")[0])
            zmap[c.ordv] = fresh(c.ordv.split("#")[0])
    return rename_zvars(rename_res(t, rmap), zmap)


# ---------------------------------------------------------------------------
# products and restrictions

def _merge_terms(a: Term, b: Term, cfg) -> Optional[Term]:
    b = freshen(b)
    cells = {c.var: c for c in a.cells}
    zmap, rsub = {}, {}
    extra_rvars = []
    for cb in b.cells:
        ca = cells.get(cb.var)
        if ca is None:
            cells[cb.var] = cb
            continue
        if ca.center != cb.center:
            raise DomainMismatch(f"cells for {cb.var} have different centers; re-cell first")
        if ca.kind != cb.kind:
            return None
        if ca.kind == 0:
            continue
        zmap[cb.ordv] = ca.ordv
        if cb.depth == ca.depth:
            rsub[cb.ac] = rx_var(ca.ac)
        elif cb.depth < ca.depth:
            rsub[cb.ac] = rx_res(rx_var(ca.ac), cb.depth)
        else:
            # deepen a's cell; a's ac becomes a projection of b's
            cells[cb.var] = replace(ca, depth=cb.depth, ac=cb.ac)
            a = subst_res(a, {ca.ac: rx_res(rx_var(cb.ac), ca.depth)})
    b = rename_zvars(b, zmap)
    b = subst_res(b, rsub)
    rv = {r.name: r for r in a.rvars}
    for r in b.rvars:
        if r.name in rv:
            ra = rv[r.name]
            if ra.depth != r.depth or ra.bound != r.bound:
                raise DomainMismatch(f"residue coordinate {r.name} declared twice differently")
            rv[r.name] = replace(ra, subset=intersect_subsets(ra.subset, r.subset, r.depth, cfg))
        else:
            rv[r.name] = r
    gam = dict(a.gamma)
    for j, e in b.gamma:
        gam[j] = gam[j] + e if j in gam else e
    return Term(a.coeff * b.coeff, p_mul(a.poly, b.poly), a.beta + b.beta, _norm_gamma(gam),
                conj(a.vg, b.vg), tuple(cells[v] for v in sorted(cells)), tuple(rv.values()),
                a.rcond + b.rcond, a.g + b.g, a.h + b.h)


def mul(F: CFunction, G: CFunction, cfg=None) -> CFunction:
    cfg = cfg or _any_cfg(F, G)
    terms = []
    for a in F.terms:
        for b in G.terms:
            t = _merge_terms(a, b, cfg)
            if t is not None and t.vg != FALSE:
                terms.append(t)
    return CFunction(tuple(terms), _sig_union(F.vf, G.vf), _sig_union(F.vg, G.vg),
                     _sig_union(F.res, G.res))


def _any_cfg(*fs):
    for F in fs:
        for t in F.terms:
            for c in t.cells:
                for el in ([c.center.const] if c.center.const is not None else []) + [x for _, x in c.center.lin]:
                    return StructureConfig(el.p, el.backend)
    return StructureConfig(2)


@dataclass(frozen=True)
class Restriction:
    """A sub-domain: a value-group condition and residue subsets on free coordinates."""
    vg: Formula = TRUE
    res: tuple = ()      # ((name, subset), ...)
    empty: bool = False


def indicator_restrict(F: CFunction, A: Restriction, cfg=None) -> CFunction:
    if A.empty:
        return replace(F, terms=())
    unknown = (A.vg.free_vars - set(F.vg)) | {n for n, _ in A.res if n not in {r for r, _ in F.res}}
    if unknown:
        raise DomainMismatch(f"restriction mentions unknown coordinates {sorted(unknown)}")
    cfg = cfg or _any_cfg(F)
    terms = []
    for t in F.terms:
        vg = conj(t.vg, A.vg)
        if vg == FALSE:
            continue
        rv = list(t.rvars)
        for name, subset in A.res:
            for i, r in enumerate(rv):
                if r.name == name:
                    rv[i] = replace(r, subset=intersect_subsets(r.subset, subset, r.depth, cfg))
        terms.append(replace(t, vg=vg, rvars=tuple(rv)))
    return replace(F, terms=tuple(terms))


# ---------------------------------------------------------------------------
# pullback

@dataclass(frozen=True)
class AffineVF:
    """x = u * y + v with y a new valued-field variable (v may be affine in other new variables)."""
    u: LocalFieldElement
    v: Affine
    new: str


def pullback(F: CFunction, maps: dict, cfg: StructureConfig) -> CFunction:
    """Compose F with a coordinatewise map.

    ``maps`` sends an old coordinate name to: an :class:`AffineVF` (valued field),
    a LinearTerm or string (value group), or a residue expression (residue).
    Coordinates not listed are kept.
    """
    vf_maps = {k: m for k, m in maps.items() if isinstance(m, AffineVF)}
    vg_maps = {k: as_lt(m) for k, m in maps.items() if isinstance(m, (LinearTerm, str, int)) and k in F.vg}
    res_maps = {k: m for k, m in maps.items() if isinstance(m, tuple)}
    for k, m in maps.items():
        if k not in vf_maps and k not in vg_maps and k not in res_maps:
            raise UnsupportedMap(f"unsupported map for coordinate {k}: {m!r}")
    terms = []
    res_depth = dict(F.res)
    for t in F.terms:
        t = freshen(t)
        # value-group coordinates
        for k, lt in vg_maps.items():
            t = subst_zvar(t, k, lt)
        # residue coordinates: subsets become conditions on the expressions
        if res_maps:
            extra = []
            rvars = []
            for r in t.rvars:
                if r.name in res_maps and not r.bound:
                    if r.subset != FULL:
                        allowed = frozenset((x,) for x in r.values(cfg))
                        extra.append((((res_maps[r.name], r.depth),), allowed))
                else:
                    rvars.append(r)
            known = {r.name for r in rvars}
            for k, m in res_maps.items():
                for n in sorted(rx_vars(m) - known):
                    rvars.append(RVar(n, res_depth.get(k, 0)))
                    known.add(n)
            t = subst_res(t, res_maps)
            t = replace(t, rvars=tuple(rvars), rcond=t.rcond + tuple(extra))
        # valued-field coordinates
        if vf_maps:
            t = _pull_vf(t, vf_maps, cfg)
        terms.append(t)
    new_res = tuple((n, d) for n, d in F.res if n not in res_maps)
    for k, m in res_maps.items():
        for n in rx_vars(m):
            if n not in dict(new_res):
                new_res += ((n, res_depth.get(k, 0)),)
    vf = tuple(vf_maps[v].new if v in vf_maps else v for v in F.vf)
    vg = list(v for v in F.vg if v not in vg_maps)
    for lt in vg_maps.values():
        for v in sorted(lt.vars):
            if v not in vg:
                vg.append(v)
    return CFunction(tuple(terms), vf, tuple(vg), new_res)


def _pull_vf(t: Term, vf_maps, cfg):
    # affine substitution data for centers and g
    sub = {x: Affine(m.v.const, m.v.lin) + Affine(None, ((m.new, m.u),)) for x, m in vf_maps.items()}
    g = t.g
    for x in vf_maps:
        c = g.coeff(x)
        if c is not None:
            g = g.drop_vf(x).add_affine(sub[x], c)
    cells = []
    rsub = {}
    for c in t.cells:
        center = c.center
        for x in vf_maps:
            center = center.subs(x, sub[x])
        if c.var in vf_maps:
            m = vf_maps[c.var]
            if m.u.is_zero():
                raise UnsupportedMap("the linear coefficient of an affine map must be nonzero")
            # x - c = u * (y - c') with c' = (c - v) / u
            uinv = m.u.inverse(cfg.precision)
            shifted = center + Affine(m.v.const, m.v.lin).scale(-1)
            shifted = shifted.drop(m.new)
            coeff_y = center.coeff(m.new)
            if coeff_y is not None:
                raise UnsupportedMap("cell center depends on its own variable after the map")
            newc = shifted.scale(uinv)
            if c.kind == 1:
                newz = fresh("ord_" + m.new)
                newac = fresh("ac_" + m.new)
                t = subst_zvar(t, c.ordv, LinearTerm.var(newz) + int(m.u.ord()))
                ac_u = m.u.ac(c.depth)
                rsub[c.ac] = rx_mul(rx_lit(ac_u, c.depth), rx_var(newac)) if ac_u != 1 else rx_var(newac)
                cells.append(Cell(m.new, newc, c.depth, 1, newac, newz))
            else:
                cells.append(Cell(m.new, newc, c.depth, 0))
        else:
            cells.append(replace(c, center=center))
    t = replace(t, cells=tuple(cells), g=g)
    if rsub:
        # ac_t(u) * ac_y is exact: the residue ring is an honest ring and ac is multiplicative
        t = _subst_cell_ac(t, rsub)
    return t


def _subst_cell_ac(t, rsub):
    """Replace old cell ac names by expressions in the new ones (Laurent and p-adic alike)."""
    return subst_res(t, dict(rsub))


# ---------------------------------------------------------------------------
# builders

def _cell_pair(var, center, depth, zmin, cfg, zmax=None):
    """Type-1 cell with zmin <= ord <= zmax, plus the type-0 point (only if zmax is None)."""
    ordv, acv = fresh("ord_" + var), fresh("ac_" + var)
    vg = LinearTerm.var(ordv)
    from .presburger import ge
    cond = ge(vg - zmin)
    if zmax is not None:
        cond = conj(cond, ge(-vg + zmax))
    one = Term(vg=cond, cells=(Cell(var, center, depth, 1, acv, ordv),))
    if zmax is not None:
        return [one]
    return [one, Term(cells=(Cell(var, center, depth, 0),))]


def phi_alpha(alpha: int, n: int = 1, cfg=None, names=None) -> CFunction:
    """Indicator of {x in K^n : ord(x_i) >= alpha for all i}."""
    names = list(names or ([f"x{i + 1}" for i in range(n)] if n > 1 else ["x"]))
    cfg = cfg or StructureConfig(2)
    F = None
    for v in names:
        G = CFunction(tuple(_cell_pair(v, Affine(), 0, alpha, cfg)), (v,))
        F = G if F is None else mul(F, G, cfg)
    return F


def indicator_ball(center, radius: int, cfg, var="x") -> CFunction:
    """Indicator of {x : ord(x - center) >= radius}."""
    return CFunction(tuple(_cell_pair(var, aff_const(cfg, center), 0, radius, cfg)), (var,))


def indicator_sphere(center, z: int, cfg, var="x") -> CFunction:
    return CFunction(tuple(_cell_pair(var, aff_const(cfg, center), 0, z, cfg, zmax=z)), (var,))


def norm_power(j: int, cfg=None, var="x", depth=0, zmin=None) -> CFunction:
    """T_j^{ord x} on K^x (optionally restricted to ord x >= zmin)."""
    ordv, acv = fresh("ord_" + var), fresh("ac_" + var)
    from .presburger import ge
    vg = TRUE if zmin is None else ge(LinearTerm.var(ordv) - zmin)
    t = Term(gamma=((int(j), LinearTerm.var(ordv)),), vg=vg,
             cells=(Cell(var, Affine(), depth, 1, acv, ordv),))
    return CFunction((t,), (var,))


def schwartz_from_table(level: int, table: dict, cfg, var="x", scale_exp: int = 0) -> CFunction:
    """Locally constant function supported on pi^scale_exp O, constant on cosets mod pi^level.

    ``table`` maps encoded residues of O/pi^(level - scale_exp) (digit encoding,
    shifted by pi^scale_exp) to values.
    """
    terms = []
    n = level - scale_exp
    for r, val in sorted(table.items()):
        if not val:
            continue
        a = LocalFieldElement.lift_residue(cfg, r, n - 1, scale_exp)
        for t in _cell_pair(var, aff_const(cfg, a), 0, level, cfg):
            c = val if isinstance(val, MotivicValue) else MotivicValue.const(val)
            terms.append(replace(t, coeff=c))
    return CFunction(tuple(terms), (var,))


def residue_indicator(name, depth, subset=FULL) -> CFunction:
    return CFunction((Term(rvars=(RVar(name, depth, subset),)),), (), (), ((name, depth),))


def with_psi(F: CFunction, g: GExpr) -> CFunction:
    """Multiply every term by psi(g)."""
    return replace(F, terms=tuple(replace(t, g=t.g + g) for t in F.terms))


def with_chi(F: CFunction, key, expr) -> CFunction:
    key = str(as_basic(key))
    return replace(F, terms=tuple(replace(t, h=t.h + ((key, expr),)) for t in F.terms))


def with_monomial(F: CFunction, beta=None, gamma=None, poly=None) -> CFunction:
    """Multiply every term by poly * q^beta * T^gamma (exponents over F's integer coordinates)."""
    out = []
    for t in F.terms:
        gam = dict(t.gamma)
        for j, e in (gamma or {}).items():
            gam[int(j)] = gam.get(int(j), LinearTerm()) + as_lt(e)
        out.append(replace(t, beta=t.beta + as_lt(beta or 0), gamma=_norm_gamma(gam),
                           poly=p_mul(t.poly, poly) if poly else t.poly))
    return replace(F, terms=tuple(out))


def cell_params(t: Term, var):
    c = t.cell(var)
    return (c.ordv, c.ac) if c is not None and c.kind == 1 else (None, None)


def restrict_cells(F: CFunction, var, formula_of_ord) -> CFunction:
    """Conjoin a condition on ord(var - center) to every type-1 cell of var.

    ``formula_of_ord`` maps the ord parameter name to a Formula; type-0 points
    are dropped when ``drop_points`` semantics is wanted by the caller.
    """
    out = []
    for t in F.terms:
        c = t.cell(var)
        if c is not None and c.kind == 1:
            t = replace(t, vg=conj(t.vg, formula_of_ord(c.ordv)))
        out.append(t)
    return replace(F, terms=tuple(out))


def drop_points(F: CFunction, var) -> CFunction:
    return replace(F, terms=tuple(t for t in F.terms if not (t.cell(var) and t.cell(var).kind == 0)))
