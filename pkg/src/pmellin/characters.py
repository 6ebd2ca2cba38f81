"""Additive and multiplicative characters with exact cyclotomic values."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import lcm

from .errors import DepthMismatch, HypothesisViolated, MissingCharacter
from .exactnum import ONE, ZERO, Cyclotomic
from .localfield import (LAURENT, PADIC, LocalFieldElement, StructureConfig,
                         as_basic, residue_ring)


# ---------------------------------------------------------------------------
# additive characters

@dataclass(frozen=True)
class AdditiveCharacter:
    """psi_u(x) = psi_std(u*x); trivial on M, nontrivial on O when u is a unit."""
    p: int
    backend: str
    twist: LocalFieldElement | None = None

    @classmethod
    def standard(cls, cfg):
        return cls(cfg.p, cfg.backend)

    def __call__(self, x: LocalFieldElement) -> Cyclotomic:
        return eval_psi(self, x)

    def describe(self):
        return "psi_std" if self.twist is None else f"psi_std({self.twist} * x)"


@lru_cache(maxsize=65536)
def _root(n, e):
    return Cyclotomic.root(n, e)


def eval_psi(psi: AdditiveCharacter, x: LocalFieldElement) -> Cyclotomic:
    if psi.twist is not None:
        x = psi.twist * x
    if x.backend == PADIC:
        k, m = x.fractional_digits()
        if k == 0 or m % (x.p ** k) == 0:
            return ONE
        return _root(x.p ** k, m)
    v = x._ord0()
    if v != float("inf") and v >= 1:
        return ONE
    c = x.laurent_coeff(0)
    return ONE if c == 0 else _root(x.p, c)


# ---------------------------------------------------------------------------
# unit groups of residue rings

@dataclass(frozen=True)
class UnitGroup:
    p: int
    backend: str
    depth: int
    generators: tuple      # encoded residues
    orders: tuple
    exponent: int
    dlog: dict = field(compare=False, hash=False)       # unit -> exponent vector
    relations: tuple = ()

    @property
    def size(self):
        return len(self.dlog)


def _primitive_root(p, k):
    m = p ** k
    phi = m - m // p
    fac = [q for q in range(2, phi + 1) if phi % q == 0 and all(q % r for r in range(2, int(q ** 0.5) + 1))]
    for g in range(2, m):
        if g % p and all(pow(g, phi // q, m) != 1 for q in fac):
            return g
    return 1


@lru_cache(maxsize=None)
def unit_group(p: int, backend: str, t: int) -> UnitGroup:
    ring = residue_ring(p, backend, t)
    if t < 0:
        return UnitGroup(p, backend, t, (), (), 1, {0: ()})
    if backend == PADIC:
        if p == 2:
            if t == 0:
                gens = []
            elif t == 1:
                gens = [3]
            else:
                gens = [ring.neg(1), 5]
        else:
            gens = [_primitive_root(p, t + 1)]
    else:
        gens = []
        if p > 2:
            gens.append(_primitive_root(p, 1))
        gens += [1 + p ** i for i in range(1, t + 1)]

    def order(g):
        x, n = g, 1
        while x != 1:
            x = ring.mul(x, g)
            n += 1
        return n

    orders = [order(g) for g in gens]
    # breadth-first enumeration of exponent vectors, recording relations
    dlog = {1 % ring.size if ring.size > 1 else 0: tuple(0 for _ in gens)}
    relations = []
    frontier = list(dlog.items())
    while frontier:
        nxt = []
        for elem, vec in frontier:
            for i, g in enumerate(gens):
                y = ring.mul(elem, g)
                v = list(vec)
                v[i] = (v[i] + 1) % orders[i]
                v = tuple(v)
                if y in dlog:
                    if dlog[y] != v:
                        relations.append(tuple(a - b for a, b in zip(v, dlog[y])))
                else:
                    dlog[y] = v
                    nxt.append((y, v))
        frontier = nxt
    if len(dlog) != len(ring.units):
        raise AssertionError("generators do not generate the unit group")
    exp = 1
    for o in orders:
        exp = lcm(exp, o)
    rel = tuple(sorted(set(r for r in relations if any(r))))
    return UnitGroup(p, backend, t, tuple(gens), tuple(orders), exp, dlog, rel)


# ---------------------------------------------------------------------------
# multiplicative characters

@dataclass(frozen=True)
class MultiplicativeCharacter:
    """chi(g_i) = zeta_{o_i}^{images[i]} on the fixed generators, zero off the units."""
    p: int
    backend: str
    depth: int
    images: tuple

    def __post_init__(self):
        grp = unit_group(self.p, self.backend, self.depth)
        if len(self.images) != len(grp.generators):
            raise ValueError(f"expected {len(grp.generators)} generator images, got {len(self.images)}")
        imgs = tuple(int(k) % o for k, o in zip(self.images, grp.orders))
        object.__setattr__(self, "images", imgs)
        for r in grp.relations:
            if sum(Fraction(a * k, o) for a, k, o in zip(r, imgs, grp.orders)).denominator != 1:
                raise ValueError(f"images {imgs} violate a relation among the generators")

    @classmethod
    def trivial(cls, cfg, depth):
        grp = unit_group(cfg.p, cfg.backend, depth)
        return cls(cfg.p, cfg.backend, depth, tuple(0 for _ in grp.generators))

    @property
    def is_trivial(self):
        return not any(self.images)

    @property
    def group(self):
        return unit_group(self.p, self.backend, self.depth)

    def value_exponent(self, x: int):
        """chi(x) = zeta_N^e with N the group exponent; None off the units."""
        grp = self.group
        vec = grp.dlog.get(x)
        if vec is None:
            return None
        N = grp.exponent
        return sum(k * e * (N // o) for k, e, o in zip(self.images, vec, grp.orders)) % N

    def __call__(self, x: int) -> Cyclotomic:
        e = self.value_exponent(x)
        if e is None:
            return ZERO
        return _root(self.group.exponent, e) if e else ONE

    def conj(self):
        return MultiplicativeCharacter(self.p, self.backend, self.depth,
                                       tuple(-k for k in self.images))

    def describe(self):
        return "trivial" if self.is_trivial else f"generator-images={list(self.images)}"


def eval_chi(chi: MultiplicativeCharacter, x) -> Cyclotomic:
    depth = getattr(x, "depth", None)
    if depth is not None:
        if depth != chi.depth:
            raise DepthMismatch(f"character of depth {chi.depth} applied at depth {depth}")
        x = x.value
    return chi(x)


def all_characters(cfg, depth: int) -> list:
    grp = unit_group(cfg.p, cfg.backend, depth)
    out = []
    for imgs in product(*(range(o) for o in grp.orders)):
        ok = all(sum(Fraction(a * k, o) for a, k, o in zip(r, imgs, grp.orders)).denominator == 1
                 for r in grp.relations)
        if ok:
            out.append(MultiplicativeCharacter(cfg.p, cfg.backend, depth, imgs))
    return out


# ---------------------------------------------------------------------------
# families

class CharacterFamily:
    """psi together with characters chi_t keyed by basic terms (by their text)."""

    def __init__(self, cfg, psi=None, chis=None, default_trivial=True):
        self.cfg = cfg
        self.psi = psi or AdditiveCharacter.standard(cfg)
        self.chis = {str(as_basic(k)): v for k, v in (chis or {}).items()}
        self.default_trivial = default_trivial

    def chi(self, key, depth=None) -> MultiplicativeCharacter:
        k = str(as_basic(key))
        if depth is None:
            depth = self.cfg.depth(key)
        ch = self.chis.get(k)
        if ch is None:
            if not self.default_trivial:
                raise MissingCharacter(f"no character chosen for depth term {k}")
            return MultiplicativeCharacter.trivial(self.cfg, depth)
        if ch.depth != depth:
            raise DepthMismatch(f"character for {k} has depth {ch.depth}, term evaluates to {depth}")
        return ch

    def with_chi(self, key, chi):
        d = dict(self.chis)
        d[str(as_basic(key))] = chi
        return CharacterFamily(self.cfg, self.psi, d, self.default_trivial)

    def is_trivial_at(self, key) -> bool:
        ch = self.chis.get(str(as_basic(key)))
        return ch is None and self.default_trivial or (ch is not None and ch.is_trivial)

    def describe(self):
        parts = [self.psi.describe()] + [f"chi[{k}]={v.describe()}" for k, v in sorted(self.chis.items())]
        return ", ".join(parts)


def standard_family(cfg) -> CharacterFamily:
    return CharacterFamily(cfg)


# ---------------------------------------------------------------------------
# separation of points by the restricted family

def separate_characters(points, coeffs, s: int, cfg):
    """Decide whether sum c_i psi(x_i) vanishes for every psi agreeing with psi_std on B_s(0).

    Returns ``(all_zero, witness)``; the witness is a twisted additive character
    with nonzero sum when ``all_zero`` is False.  Points must lie in a common
    ball B_r(0) with r < s and be pairwise at valuation distance < s.
    """
    pts = [as_point(x, cfg) for x in points]
    cs = [c if isinstance(c, Cyclotomic) else Cyclotomic(c) for c in coeffs]
    if len(pts) != len(cs):
        raise ValueError("points and coefficients differ in length")
    if s >= 0:
        raise HypothesisViolated("the separation level s must be negative")
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = pts[i] - pts[j]
            if d.is_zero() or d.ord() >= s:
                raise HypothesisViolated(f"points {i} and {j} are not separated below level {s}")
    nonzero = [x for x in pts if not x.is_zero()]
    r = min([x.ord() for x in nonzero] + [s]) - 1
    # characters of B_r(0)/B_s(0) are x -> psi_std(w x), w in pi^(-s) O / pi^(-r) O
    lo, hi = -s, -r
    width = hi - lo
    if cfg.p ** width > cfg.enum_cap:
        raise HypothesisViolated("too many characters to enumerate")
    one = LocalFieldElement.from_rational(cfg, 1)
    for n in range(cfg.p ** width):
        w = LocalFieldElement.lift_residue(cfg, n, width - 1, scale_exp=lo)
        psi = AdditiveCharacter(cfg.p, cfg.backend, None if n == 0 else one + w)
        total = ZERO
        for x, c in zip(pts, cs):
            total = total + c * eval_psi(psi, x)
        if total:
            return False, psi
    return True, None


def as_point(x, cfg):
    if isinstance(x, LocalFieldElement):
        return x
    return cfg.elem(x)
