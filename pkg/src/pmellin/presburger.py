"""Quantifier-free Presburger sets and one-variable normal forms.

Formulas are boolean combinations of two atom kinds with integer coefficients:
``Ge(t)`` for ``t >= 0`` and ``Cong(t, n)`` for ``t == 0 mod n``.  ``max`` is
removed while parsing by splitting into guarded branches.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import gcd, lcm
from typing import Optional

from .errors import BoxTooLarge, FormulaSyntaxError


# ---------------------------------------------------------------------------
# linear terms

class LinearTerm:
    __slots__ = ("coeffs", "const", "_h")

    def __init__(self, coeffs=None, const=0):
        items = coeffs.items() if isinstance(coeffs, dict) else (coeffs or ())
        d = {}
        for v, c in items:
            c = Fraction(c)
            if c:
                d[v] = d.get(v, 0) + c
        self.coeffs = tuple(sorted((v, c) for v, c in d.items() if c))
        self.const = Fraction(const)
        self._h = None

    @classmethod
    def var(cls, name, coeff=1):
        return cls({name: coeff})

    @classmethod
    def constant(cls, c):
        return cls((), c)

    @property
    def cmap(self):
        return dict(self.coeffs)

    def coeff(self, v):
        for w, c in self.coeffs:
            if w == v:
                return c
        return Fraction(0)

    @property
    def vars(self):
        return {v for v, _ in self.coeffs}

    def is_const(self):
        return not self.coeffs

    def __add__(self, other):
        other = as_lt(other)
        d = self.cmap
        for v, c in other.coeffs:
            d[v] = d.get(v, 0) + c
        return LinearTerm(d, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return LinearTerm({v: -c for v, c in self.coeffs}, -self.const)

    def __sub__(self, other):
        return self + (-as_lt(other))

    def __rsub__(self, other):
        return as_lt(other) - self

    def __mul__(self, k):
        k = Fraction(k)
        return LinearTerm({v: c * k for v, c in self.coeffs}, self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1 / Fraction(k))

    def subs(self, var, term) -> "LinearTerm":
        c = self.coeff(var)
        if not c:
            return self
        rest = LinearTerm({v: x for v, x in self.coeffs if v != var}, self.const)
        return rest + as_lt(term) * c

    def subs_many(self, mapping) -> "LinearTerm":
        out = LinearTerm((), self.const)
        for v, c in self.coeffs:
            out = out + (as_lt(mapping[v]) * c if v in mapping else LinearTerm({v: c}))
        return out

    def rename(self, mapping):
        return LinearTerm({mapping.get(v, v): c for v, c in self.coeffs}, self.const)

    def drop(self, var):
        return LinearTerm({v: c for v, c in self.coeffs if v != var}, self.const)

    def eval(self, env) -> Fraction:
        s = self.const
        for v, c in self.coeffs:
            s += c * env[v]
        return s

    def eval_int(self, env) -> int:
        s = self.eval(env)
        if s.denominator != 1:
            raise ValueError(f"{self} is not integral at {env}")
        return s.numerator

    def denominator(self) -> int:
        d = self.const.denominator
        for _, c in self.coeffs:
            d = lcm(d, c.denominator)
        return d

    def is_integral(self):
        return self.denominator() == 1

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.is_const() and self.const == other
        if not isinstance(other, LinearTerm):
            return NotImplemented
        return self.coeffs == other.coeffs and self.const == other.const

    def __hash__(self):
        if self._h is None:
            self._h = hash((self.coeffs, self.const))
        return self._h

    def __str__(self):
        parts = []
        for v, c in self.coeffs:
            if c == 1:
                parts.append(("+", v))
            elif c == -1:
                parts.append(("-", v))
            else:
                parts.append(("-" if c < 0 else "+", f"{_ff(abs(c))}*{v}"))
        if self.const or not parts:
            parts.append(("-" if self.const < 0 else "+", _ff(abs(self.const))))
        s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sg, body in parts[1:]:
            s += f" {sg} {body}"
        return s

    def __repr__(self):
        return f"LinearTerm({self})"


def _ff(f):
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def as_lt(x) -> LinearTerm:
    if isinstance(x, LinearTerm):
        return x
    if isinstance(x, (int, Fraction)):
        return LinearTerm((), x)
    if isinstance(x, str):
        return parse_linear_term(x)
    raise TypeError(f"not a linear term: {x!r}")


# ---------------------------------------------------------------------------
# formulas

class Formula:
    def holds(self, env) -> bool:
        raise NotImplementedError

    def atoms(self):
        return set()

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)

    def __invert__(self):
        return neg(self)

    def __repr__(self):
        return f"Formula({self})"

    @property
    def free_vars(self):
        out = set()
        for a in self.atoms():
            out |= a.term.vars
        return out


class _Const(Formula):
    def __init__(self, value):
        self.value = value

    def holds(self, env):
        return self.value

    def map_atoms(self, f):
        return self

    def __str__(self):
        return "true" if self.value else "false"

    def __eq__(self, other):
        return isinstance(other, _Const) and other.value == self.value

    def __hash__(self):
        return hash(self.value)


TRUE = _Const(True)
FALSE = _Const(False)


class Atom(Formula):
    pass


class Ge(Atom):
    """term >= 0, stored with coprime integer coefficients."""
    __slots__ = ("term",)

    def __init__(self, term):
        self.term = term

    def holds(self, env):
        return self.term.eval(env) >= 0

    def atoms(self):
        return {self}

    def map_atoms(self, f):
        return f(self)

    def __eq__(self, other):
        return isinstance(other, Ge) and other.term == self.term

    def __hash__(self):
        return hash(("ge", self.term))

    def __str__(self):
        pos = LinearTerm({v: c for v, c in self.term.coeffs if c > 0})
        negp = LinearTerm({v: -c for v, c in self.term.coeffs if c < 0}, -self.term.const)
        return f"{negp} <= {pos}"


class Cong(Atom):
    """term == 0 mod n with integer coefficients reduced into [0, n)."""
    __slots__ = ("term", "n")

    def __init__(self, term, n):
        self.term = term
        self.n = n

    def holds(self, env):
        return self.term.eval_int(env) % self.n == 0

    def atoms(self):
        return {self}

    def map_atoms(self, f):
        return f(self)

    def __eq__(self, other):
        return isinstance(other, Cong) and other.term == self.term and other.n == self.n

    def __hash__(self):
        return hash(("cong", self.term, self.n))

    def __str__(self):
        lhs = LinearTerm(self.term.coeffs)
        return f"{lhs} == {_ff((-self.term.const) % self.n)} mod {self.n}"


class And(Formula):
    def __init__(self, items):
        self.items = tuple(items)

    def holds(self, env):
        return all(i.holds(env) for i in self.items)

    def atoms(self):
        out = set()
        for i in self.items:
            out |= i.atoms()
        return out

    def map_atoms(self, f):
        return conj(*(i.map_atoms(f) for i in self.items))

    def __str__(self):
        return " & ".join(_paren(i) for i in self.items)

    def __eq__(self, other):
        return isinstance(other, And) and other.items == self.items

    def __hash__(self):
        return hash(("and", self.items))


class Or(Formula):
    def __init__(self, items):
        self.items = tuple(items)

    def holds(self, env):
        return any(i.holds(env) for i in self.items)

    def atoms(self):
        out = set()
        for i in self.items:
            out |= i.atoms()
        return out

    def map_atoms(self, f):
        return disj(*(i.map_atoms(f) for i in self.items))

    def __str__(self):
        return " | ".join(_paren(i) for i in self.items)

    def __eq__(self, other):
        return isinstance(other, Or) and other.items == self.items

    def __hash__(self):
        return hash(("or", self.items))


class Not(Formula):
    def __init__(self, item):
        self.item = item

    def holds(self, env):
        return not self.item.holds(env)

    def atoms(self):
        return self.item.atoms()

    def map_atoms(self, f):
        return neg(self.item.map_atoms(f))

    def __str__(self):
        return f"!{_paren(self.item, True)}"

    def __eq__(self, other):
        return isinstance(other, Not) and other.item == self.item

    def __hash__(self):
        return hash(("not", self.item))


def _paren(f, strict=False):
    if isinstance(f, (And, Or)) or (strict and isinstance(f, Atom)):
        return f"({f})"
    return str(f)


def conj(*items) -> Formula:
    out = []
    for i in items:
        if i is FALSE or i == FALSE:
            return FALSE
        if i is TRUE or i == TRUE:
            continue
        if isinstance(i, And):
            out.extend(i.items)
        else:
            out.append(i)
    seen = []
    for i in out:
        if i not in seen:
            seen.append(i)
    if not seen:
        return TRUE
    if len(seen) == 1:
        return seen[0]
    return And(seen)


def disj(*items) -> Formula:
    out = []
    for i in items:
        if i == TRUE:
            return TRUE
        if i == FALSE:
            continue
        if isinstance(i, Or):
            out.extend(i.items)
        else:
            out.append(i)
    seen = []
    for i in out:
        if i not in seen:
            seen.append(i)
    if not seen:
        return FALSE
    if len(seen) == 1:
        return seen[0]
    return Or(seen)


def neg(f) -> Formula:
    if f == TRUE:
        return FALSE
    if f == FALSE:
        return TRUE
    if isinstance(f, Not):
        return f.item
    if isinstance(f, Ge):
        return ge(-f.term - 1)
    return Not(f)


def _integerize(term: LinearTerm):
    d = term.denominator()
    return term * d if d != 1 else term, d


def ge(term) -> Formula:
    """Atom term >= 0 (term may have rational coefficients)."""
    term, _ = _integerize(as_lt(term))
    if term.is_const():
        return TRUE if term.const >= 0 else FALSE
    g = 0
    for _, c in term.coeffs:
        g = gcd(g, int(c))
    if g > 1:
        # integer points: sum c_i x_i >= -k  <=>  sum (c_i/g) x_i >= ceil(-k/g) = -(k // g)
        k = int(term.const)
        term = LinearTerm({v: c / g for v, c in term.coeffs}, k // g)
    return Ge(term)


def le(a, b) -> Formula:
    return ge(as_lt(b) - as_lt(a))


def cong(term, n: int) -> Formula:
    """Atom term == 0 mod n (term may have rational coefficients)."""
    term, d = _integerize(as_lt(term))
    n = int(n) * d
    if n <= 0:
        raise ValueError("modulus must be positive")
    if n == 1:
        return TRUE
    coeffs = {v: int(c) % n for v, c in term.coeffs}
    term = LinearTerm(coeffs, int(term.const) % n)
    if term.is_const():
        return TRUE if int(term.const) % n == 0 else FALSE
    g = n
    for _, c in term.coeffs:
        g = gcd(g, int(c))
    g = gcd(g, int(term.const))
    if g > 1:
        term = term / g
        n //= g
        if n == 1:
            return TRUE
    return Cong(term, n)


def eq(a, b) -> Formula:
    return conj(le(a, b), le(b, a))


def substitute(f: Formula, var, term) -> Formula:
    term = as_lt(term)

    def fa(a):
        if isinstance(a, Ge):
            return ge(a.term.subs(var, term))
        return cong(a.term.subs(var, term), a.n)
    return f.map_atoms(fa)


def substitute_many(f: Formula, mapping) -> Formula:
    def fa(a):
        t = a.term.subs_many(mapping)
        return ge(t) if isinstance(a, Ge) else cong(t, a.n)
    return f.map_atoms(fa)


def rename(f: Formula, mapping) -> Formula:
    def fa(a):
        t = a.term.rename(mapping)
        return ge(t) if isinstance(a, Ge) else cong(t, a.n)
    return f.map_atoms(fa)


def assign(f: Formula, values: dict) -> Formula:
    """Replace atoms by truth values (keys are atoms)."""
    return f.map_atoms(lambda a: (TRUE if values[a] else FALSE) if a in values else a)


@dataclass(frozen=True)
class PresburgerSet:
    vars: tuple
    formula: Formula

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        extra = self.formula.free_vars - set(self.vars)
        if extra:
            raise ValueError(f"formula mentions undeclared variables {sorted(extra)}")

    @property
    def dim(self):
        return len(self.vars)

    def contains(self, point) -> bool:
        env = dict(zip(self.vars, point)) if not isinstance(point, dict) else point
        return self.formula.holds(env)


def member(S: PresburgerSet, point) -> bool:
    return S.contains(point)


def enumerate_bounded(S: PresburgerSet, box, cap: int = 10 ** 7) -> list:
    size = 1
    for lo, hi in box:
        size *= max(0, hi - lo + 1)
    if size > cap:
        raise BoxTooLarge(f"box has {size} points, cap is {cap}")
    out = []
    for pt in product(*(range(lo, hi + 1) for lo, hi in box)):
        if S.formula.holds(dict(zip(S.vars, pt))):
            out.append(list(pt))
    return out


# ---------------------------------------------------------------------------
# one-variable elimination

@dataclass(frozen=True)
class Progression:
    """start, start+step, ... up to end.  start=None: end, end-step, ... downwards."""
    start: Optional[LinearTerm]
    step: int
    end: Optional[LinearTerm]

    def points(self, env, window=None):
        lo_w, hi_w = window if window else (-10 ** 6, 10 ** 6)
        if self.start is not None:
            a = self.start.eval(env)
            b = self.end.eval(env) if self.end is not None else hi_w
            x, out = a, []
            while x <= b and x <= hi_w:
                if x >= lo_w:
                    out.append(int(x))
                x += self.step
            return out
        b = self.end.eval(env)
        x, out = b, []
        while x >= lo_w:
            if x <= hi_w:
                out.append(int(x))
            x -= self.step
        return out

    def __str__(self):
        s = "-inf" if self.start is None else str(self.start)
        e = "+inf" if self.end is None else str(self.end)
        return f"[{s} .. {e} step {self.step}]"


def _split_literals(f: Formula, x: str):
    """Shannon expansion over the atoms that involve x.

    Yields (residual x-free formula, list of literal atoms on x)."""
    def rec(g, lits):
        g = _simp(g)
        if g == FALSE:
            return
        # simplifying under a negation can create new atoms, so pick the next one afresh
        xatoms = sorted((a for a in g.atoms() if a.term.coeff(x)), key=str)
        if not xatoms:
            yield g, lits
            return
        a = xatoms[0]
        yield from rec(assign(g, {a: True}), lits + [(a, True)])
        yield from rec(assign(g, {a: False}), lits + [(a, False)])

    yield from rec(f, [])


def _simp(f):
    return f.map_atoms(lambda a: a)


def _solve_congruences(congs):
    """Combine x == c_i mod m_i; returns (c, M) or None."""
    c, M = 0, 1
    for ci, mi in congs:
        g = gcd(M, mi)
        if (ci - c) % g:
            return None
        # solve c + M*k == ci mod mi
        m2 = mi // g
        k = ((ci - c) // g) * pow(M // g, -1, m2) % m2 if m2 > 1 else 0
        c = c + M * k
        M = M * m2
        c %= M
    return c, M


def decompose_last(S: PresburgerSet, var=None, outer=None):
    """Fiberwise normal form in one variable.

    Returns a list of (guard, Progression).  For every assignment of the outer
    variables, the fiber of S is the disjoint union of the progressions whose
    guard holds.
    """
    x = var if var is not None else S.vars[-1]
    return _decompose(S.formula, x)


def _decompose(f: Formula, x: str):
    out = []
    for residual, lits in _split_literals(f, x):
        bounds, congs = [], []
        for a, val in lits:
            if isinstance(a, Ge):
                bounds.append(a.term if val else -a.term - 1)
            elif val:
                congs.append([(a.term, a.n)])
            else:
                congs.append([(a.term - r, a.n) for r in range(1, a.n)])
        for cong_choice in product(*congs) if congs else [()]:
            out.extend(_solve_path(residual, bounds, list(cong_choice), x))
    return out


def _solve_path(guard, bounds, congs, x):
    """Expand the congruences on x, then the bound choices."""
    # congruence a*x + L == 0 mod n: branch on L mod n when L is not constant
    branches = [(guard, [])]
    for term, n in congs:
        a = int(term.coeff(x)) % n
        L = term.drop(x)
        nb = []
        for g, sol in branches:
            if L.is_const():
                options = [(TRUE, int(L.const) % n)]
            else:
                options = [(cong(L - s, n), s) for s in range(n)]
            for lit, s in options:
                g2 = conj(g, lit)
                if g2 == FALSE:
                    continue
                # a*x == -s mod n
                d = gcd(a, n)
                if (-s) % d:
                    continue
                n2 = n // d
                c = ((-s) // d) * pow(a // d, -1, n2) % n2 if n2 > 1 else 0
                nb.append((g2, sol + [(c, n2)]))
        branches = nb
    out = []
    for g, sol in branches:
        res = _solve_congruences(sol)
        if res is None:
            continue
        c, M = res
        out.extend(_solve_bounds(g, bounds, x, c, M))
    return out


def _bound_residue_branches(guard, v: LinearTerm, m: int, floor: bool):
    """Branches expressing ceil(v/m) (floor(v/m) if floor) as an affine term."""
    if m == 1:
        return [(guard, v)]
    if v.is_const():
        q = v.const
        val = (q.numerator // q.denominator) if floor else -((-q.numerator) // q.denominator)
        # v integral here; m divides via integer division
        iv = int(q)
        val = iv // m if floor else -((-iv) // m)
        return [(guard, LinearTerm((), val))]
    out = []
    for r in range(m):
        g2 = conj(guard, cong(v - r, m))
        if g2 == FALSE:
            continue
        if floor:
            out.append((g2, (v - r) / m))
        else:
            out.append((g2, (v - r + (m if r else 0)) / m))
    return out


def _solve_bounds(guard, bounds, x, c, M):
    lowers, uppers = [], []
    for t in bounds:
        a = int(t.coeff(x))
        L = t.drop(x)
        if a > 0:
            lowers.append((a, L))
        else:
            uppers.append((-a, L))
    if not lowers and not uppers:
        # split the line at 0 so both halves have one bound
        return (_solve_bounds(guard, [LinearTerm.var(x)], x, c, M) +
                _solve_bounds(guard, [-LinearTerm.var(x) - 1], x, c, M))
    # x = c + M*y ; a*x + L >= 0  ->  y >= ceil((-L - a c)/(a M))
    lo_opts = [[(guard, None)]]
    lo_opts = []
    for a, L in lowers:
        lo_opts.append(_bound_residue_branches(TRUE, -L - a * c, a * M, floor=False))
    up_opts = []
    for a, L in uppers:
        up_opts.append(_bound_residue_branches(TRUE, L - a * c, a * M, floor=True))
    out = []
    for lo_choice in product(*lo_opts):
        g1 = conj(guard, *(g for g, _ in lo_choice))
        if g1 == FALSE:
            continue
        for up_choice in product(*up_opts):
            g2 = conj(g1, *(g for g, _ in up_choice))
            if g2 == FALSE:
                continue
            for glo, ylo in _pick_extreme([t for _, t in lo_choice], True):
                g3 = conj(g2, glo)
                if g3 == FALSE:
                    continue
                for gup, yup in _pick_extreme([t for _, t in up_choice], False):
                    g4 = conj(g3, gup)
                    if ylo is not None and yup is not None:
                        g4 = conj(g4, ge(yup - ylo))
                    if g4 == FALSE:
                        continue
                    start = None if ylo is None else ylo * M + c
                    end = None if yup is None else yup * M + c
                    out.append((g4, Progression(start, M, end)))
    return out


def _pick_extreme(terms, want_max):
    """Branches (guard, chosen term) selecting the max (or min) of the terms."""
    if not terms:
        return [(TRUE, None)]
    out = []
    for i, ti in enumerate(terms):
        lits = []
        for j, tj in enumerate(terms):
            if j == i:
                continue
            d = ti - tj if want_max else tj - ti
            # strictly better than earlier ones, at least as good as later ones
            lits.append(ge(d - 1) if j < i else ge(d))
        g = conj(*lits)
        if g != FALSE:
            out.append((g, ti))
    return out


# ---------------------------------------------------------------------------
# rectilinearization

FULL_RAY = "FullRay"
BOUNDED = "BoundedInterval"
SINGLETON = "Singleton"


@dataclass(frozen=True)
class RectilinearPiece:
    """x = s*k + t for k in N (FullRay) or 0 <= k <= bound.

    A ray unbounded below is represented with s < 0.
    """
    kind: str
    s: int
    t: LinearTerm
    bound: Optional[LinearTerm] = None

    def image(self, env, count=50):
        t = self.t.eval(env)
        if self.kind == FULL_RAY:
            return [int(t + self.s * k) for k in range(count)]
        b = 0 if self.kind == SINGLETON else int(self.bound.eval(env))
        return [int(t + self.s * k) for k in range(b + 1)]

    def __str__(self):
        m = f"k -> {self.s}*k + ({self.t})"
        if self.kind == FULL_RAY:
            return f"FullRay({m})"
        if self.kind == SINGLETON:
            return f"Singleton({self.t})"
        return f"BoundedInterval({m}, k <= {self.bound})"


def rectilinearize_one(S: PresburgerSet, var=None):
    x = var if var is not None else S.vars[-1]
    return [(g, to_piece(pr)) for g, pr in decompose_last(S, x)]


def to_piece(pr: Progression) -> RectilinearPiece:
    if pr.start is None:
        return RectilinearPiece(FULL_RAY, -pr.step, pr.end)
    if pr.end is None:
        return RectilinearPiece(FULL_RAY, pr.step, pr.start)
    bound = (pr.end - pr.start) / pr.step
    if bound.is_const() and bound.const == 0:
        return RectilinearPiece(SINGLETON, pr.step, pr.start, bound)
    return RectilinearPiece(BOUNDED, pr.step, pr.start, bound)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(<=|>=|==|!=|<|>|&&|\|\||[-+*(),&|!]))")


def _tokenize(text):
    toks = []
    pos = 0
    text_len = len(text)
    while pos < text_len:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        tok = m.group(1) or m.group(2) or m.group(3)
        if tok is None:
            break
        toks.append((tok, m.start(m.lastindex)))
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k=0):
        j = self.i + k
        return self.toks[j][0] if j < len(self.toks) else None

    def pos(self):
        return self.toks[self.i][1] if self.i < len(self.toks) else len(self.text)

    def take(self, expected=None):
        if self.i >= len(self.toks):
            raise FormulaSyntaxError("unexpected end of input", self.text, len(self.text))
        tok = self.toks[self.i][0]
        if expected is not None and tok != expected:
            raise FormulaSyntaxError(f"expected {expected!r}, found {tok!r}", self.text, self.pos())
        self.i += 1
        return tok

    def done(self):
        if self.i != len(self.toks):
            raise FormulaSyntaxError(f"unexpected {self.peek()!r}", self.text, self.pos())

    # terms: list of (guard, LinearTerm) alternatives
    def term(self):
        alts = self.product()
        while self.peek() in ("+", "-"):
            op = self.take()
            rhs = self.product()
            alts = [(conj(g1, g2), t1 + t2 if op == "+" else t1 - t2)
                    for g1, t1 in alts for g2, t2 in rhs if conj(g1, g2) != FALSE]
        return alts

    def product(self):
        alts = self.unary()
        while self.peek() == "*":
            self.take()
            rhs = self.unary()
            new = []
            for g1, t1 in alts:
                for g2, t2 in rhs:
                    if t1.is_const():
                        new.append((conj(g1, g2), t2 * t1.const))
                    elif t2.is_const():
                        new.append((conj(g1, g2), t1 * t2.const))
                    else:
                        raise FormulaSyntaxError("non-linear product", self.text, self.pos())
            alts = new
        return alts

    def unary(self):
        if self.peek() == "-":
            self.take()
            return [(g, -t) for g, t in self.unary()]
        if self.peek() == "+":
            self.take()
            return self.unary()
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok is None:
            raise FormulaSyntaxError("unexpected end of input", self.text, len(self.text))
        if tok == "(":
            self.take()
            alts = self.term()
            self.take(")")
            return alts
        if tok.isdigit():
            self.take()
            # allow juxtaposition like 3x
            if self.peek() is not None and re.match(r"[A-Za-z_]", self.peek()) and self.peek() not in ("mod", "max", "true", "false"):
                v = self.take()
                return [(TRUE, LinearTerm.var(v, int(tok)))]
            return [(TRUE, LinearTerm.constant(int(tok)))]
        if tok == "max" or tok == "min":
            self.take()
            self.take("(")
            a = self.term()
            self.take(",")
            b = self.term()
            self.take(")")
            out = []
            for g1, t1 in a:
                for g2, t2 in b:
                    g = conj(g1, g2)
                    first, second = (ge(t1 - t2), ge(t2 - t1 - 1)) if tok == "max" else (ge(t2 - t1), ge(t1 - t2 - 1))
                    out.append((conj(g, first), t1))
                    out.append((conj(g, second), t2))
            return [(g, t) for g, t in out if g != FALSE]
        if re.match(r"[A-Za-z_]", tok):
            self.take()
            return [(TRUE, LinearTerm.var(tok))]
        raise FormulaSyntaxError(f"unexpected {tok!r}", self.text, self.pos())

    # formulas
    def formula(self):
        f = self.conjunction()
        while self.peek() in ("|", "||"):
            self.take()
            f = disj(f, self.conjunction())
        return f

    def conjunction(self):
        f = self.negation()
        while self.peek() in ("&", "&&"):
            self.take()
            f = conj(f, self.negation())
        return f

    def negation(self):
        if self.peek() == "!":
            self.take()
            return neg(self.negation())
        return self.atom()

    def atom(self):
        tok = self.peek()
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        if tok == "(":
            # either a parenthesized formula or a term in parentheses
            save = self.i
            self.take()
            try:
                f = self.formula()
                self.take(")")
                if self.peek() not in ("<=", ">=", "==", "!=", "<", ">", "+", "-", "*"):
                    return f
            except FormulaSyntaxError:
                pass
            self.i = save
        lhs = self.term()
        op = self.peek()
        if op not in ("<=", ">=", "==", "!=", "<", ">"):
            raise FormulaSyntaxError("expected a comparison", self.text, self.pos())
        self.take()
        rhs = self.term()
        modulus = None
        if self.peek() == "mod":
            self.take()
            n = self.take()
            if not n.isdigit() or int(n) < 2:
                raise FormulaSyntaxError("modulus must be an integer > 1", self.text, self.pos())
            modulus = int(n)
            if op not in ("==", "!="):
                raise FormulaSyntaxError("mod applies to == only", self.text, self.pos())
        out = FALSE
        for g1, t1 in lhs:
            for g2, t2 in rhs:
                d = t2 - t1
                if modulus is not None:
                    a = cong(d, modulus)
                    a = a if op == "==" else neg(a)
                elif op == "<=":
                    a = ge(d)
                elif op == ">=":
                    a = ge(-d)
                elif op == "<":
                    a = ge(d - 1)
                elif op == ">":
                    a = ge(-d - 1)
                elif op == "==":
                    a = conj(ge(d), ge(-d))
                else:
                    a = disj(ge(d - 1), ge(-d - 1))
                out = disj(out, conj(g1, g2, a))
        return out


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    f = p.formula()
    p.done()
    return f


def parse_linear_term(text: str) -> LinearTerm:
    p = _Parser(text)
    alts = p.term()
    p.done()
    if len(alts) != 1:
        raise FormulaSyntaxError("max is not allowed in a plain linear term", text, 0)
    return alts[0][1]


def parse_set(text: str, variables=None) -> PresburgerSet:
    f = parse_formula(text)
    vs = tuple(variables) if variables is not None else tuple(sorted(f.free_vars))
    return PresburgerSet(vs, f)
