"""Closed-form summation of exponential-polynomial terms over Presburger sets.

A term is ``coeff * x^a * q^(beta(x)) * prod_j T_j^(gamma_j(x))`` with
``beta`` and ``gamma_j`` affine in the integer variables.  Sums are kept in a
normal form keyed by ``(monomial, beta, gamma)``; coefficients are
:class:`MotivicValue` and merge on equal keys.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import permutations
from math import comb, floor, lcm

from .errors import NotIntegrable, NotRepresentable
from .exactnum import ONE, MotivicValue, as_cyc
from .presburger import (FALSE, TRUE, Formula, LinearTerm, PresburgerSet,
                         Progression, _decompose, as_lt, conj)

# ---------------------------------------------------------------------------
# polynomials over integer variables, Fraction coefficients
# a polynomial is a dict: monomial (sorted tuple of (var, exp)) -> Fraction

P_ONE = {(): Fraction(1)}


def p_const(c):
    c = Fraction(c)
    return {(): c} if c else {}


def p_var(v):
    return {((v, 1),): Fraction(1)}


def p_from_lt(t: LinearTerm):
    out = p_const(t.const)
    for v, c in t.coeffs:
        out[((v, 1),)] = c
    return out


def _m_mul(m1, m2):
    d = dict(m1)
    for v, e in m2:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


def p_add(a, b):
    out = dict(a)
    for m, c in b.items():
        s = out.get(m, 0) + c
        if s:
            out[m] = s
        else:
            out.pop(m, None)
    return out


def p_scale(a, k):
    k = Fraction(k)
    return {m: c * k for m, c in a.items()} if k else {}


def p_mul(a, b):
    out = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = _m_mul(m1, m2)
            out[m] = out.get(m, 0) + c1 * c2
    return {m: c for m, c in out.items() if c}


def p_pow(a, e):
    r = dict(P_ONE)
    for _ in range(e):
        r = p_mul(r, a)
    return r


def p_subs(a, var, poly):
    """Substitute a polynomial for a variable."""
    out = {}
    cache = {}
    for m, c in a.items():
        e = dict(m).get(var, 0)
        if not e:
            out = p_add(out, {m: c})
            continue
        if e not in cache:
            cache[e] = p_pow(poly, e)
        rest = tuple((v, x) for v, x in m if v != var)
        out = p_add(out, p_mul({rest: c}, cache[e]))
    return out


def p_eval(a, env) -> Fraction:
    s = Fraction(0)
    for m, c in a.items():
        t = c
        for v, e in m:
            t *= Fraction(env[v]) ** e
        s += t
    return s


def p_vars(a):
    return {v for m in a for v, _ in m}


def p_degree_in(a, var):
    return max((dict(m).get(var, 0) for m in a), default=0)


def p_split_var(a, var):
    """Return {k: coefficient polynomial of var^k}."""
    out = {}
    for m, c in a.items():
        e = dict(m).get(var, 0)
        rest = tuple((v, x) for v, x in m if v != var)
        out.setdefault(e, {})[rest] = c
    return out


def p_format(a):
    if not a:
        return "0"
    parts = []
    for m, c in sorted(a.items()):
        body = "*".join(v if e == 1 else f"{v}^{e}" for v, e in m)
        cs = str(c)
        parts.append(cs if not body else (body if c == 1 else f"{cs}*{body}"))
    return " + ".join(parts)


# ---------------------------------------------------------------------------
# exponential-polynomial sums

def _norm_gamma(gamma):
    items = gamma.items() if isinstance(gamma, dict) else gamma
    out = []
    for j, t in items:
        t = as_lt(t)
        if t.coeffs or t.const:
            out.append((int(j), t))
    return tuple(sorted(out, key=lambda x: x[0]))


class ExpPolyTerm:
    """coeff * mono * q^beta * prod T_j^gamma_j with affine beta, gamma."""

    __slots__ = ("coeff", "mono", "beta", "gamma")

    def __init__(self, coeff, mono=(), beta=None, gamma=()):
        self.coeff = coeff if isinstance(coeff, MotivicValue) else MotivicValue.const(as_cyc(coeff))
        self.mono = tuple(sorted((v, e) for v, e in (mono.items() if isinstance(mono, dict) else mono) if e))
        self.beta = as_lt(beta if beta is not None else 0)
        self.gamma = _norm_gamma(gamma)

    @classmethod
    def make(cls, coeff=1, a=None, b=None, c=None):
        """Build from exponent data: a = {x: k}, b = {x: rate}, c = {j: {x: rate}}."""
        beta = LinearTerm(b or {})
        gamma = {j: LinearTerm(row) for j, row in (c or {}).items()}
        return cls(coeff, a or {}, beta, gamma)

    def __repr__(self):
        return f"ExpPolyTerm({self.coeff}, {self.mono}, q^({self.beta}), {[(j, str(t)) for j, t in self.gamma]})"


class ExpPolySum:
    """Finite sum of ExpPolyTerms in normal form."""

    def __init__(self, q=None):
        self.q = q
        self.terms = {}

    @classmethod
    def of(cls, terms, q=None):
        s = cls(q)
        for t in terms:
            s.add(t.coeff, {t.mono: Fraction(1)}, t.beta, dict(t.gamma))
        return s

    @classmethod
    def constant(cls, value: MotivicValue):
        s = cls(value.q)
        s.add(value, P_ONE, LinearTerm(), {})
        return s

    def copy(self):
        s = ExpPolySum(self.q)
        s.terms = dict(self.terms)
        return s

    def add(self, coeff: MotivicValue, poly, beta: LinearTerm, gamma: dict):
        """Add coeff * poly * q^beta * T^gamma, folding integer constants into coeff."""
        if not poly:
            return
        if self.q is not None and coeff.q is None:
            coeff = coeff.pin(self.q)
        qc = floor(beta.const)
        beta = beta - qc
        tc = []
        g2 = []
        for j, t in (gamma.items() if isinstance(gamma, dict) else gamma):
            t = as_lt(t)
            k = floor(t.const)
            if k:
                tc.append((j, k))
            t = t - k
            if t.coeffs or t.const:
                g2.append((int(j), t))
        g2 = tuple(sorted(g2, key=lambda x: x[0]))
        if qc or tc:
            coeff = coeff * MotivicValue.monomial(1, qc, tc, coeff.q)
        for m, c in poly.items():
            key = (m, beta, g2)
            cur = self.terms.get(key)
            val = coeff * MotivicValue.const(c, coeff.q) if c != 1 else coeff
            new = val if cur is None else cur + val
            if new.is_zero():
                self.terms.pop(key, None)
            else:
                self.terms[key] = new

    def __add__(self, other):
        out = self.copy()
        for (m, b, g), c in other.terms.items():
            out.add(c, {m: Fraction(1)}, b, dict(g))
        return out

    def scale(self, value: MotivicValue):
        out = ExpPolySum(self.q)
        for (m, b, g), c in self.terms.items():
            out.add(c * value, {m: Fraction(1)}, b, dict(g))
        return out

    def __mul__(self, other):
        out = ExpPolySum(self.q or other.q)
        for (m1, b1, g1), c1 in self.terms.items():
            for (m2, b2, g2), c2 in other.terms.items():
                g = dict(g1)
                for j, t in g2:
                    g[j] = g[j] + t if j in g else t
                out.add(c1 * c2, {_m_mul(m1, m2): Fraction(1)}, b1 + b2, g)
        return out

    def is_zero(self):
        return not self.terms

    @property
    def vars(self):
        vs = set()
        for (m, b, g) in self.terms:
            vs |= {v for v, _ in m}
            vs |= b.vars
            for _, t in g:
                vs |= t.vars
        return vs

    def subs(self, var, term) -> "ExpPolySum":
        term = as_lt(term)
        poly = p_from_lt(term)
        out = ExpPolySum(self.q)
        for (m, b, g), c in self.terms.items():
            out.add(c, p_subs({m: Fraction(1)}, var, poly), b.subs(var, term),
                    {j: t.subs(var, term) for j, t in g})
        return out

    def rename(self, mapping) -> "ExpPolySum":
        out = self
        tmp = {v: f"__r{i}" for i, v in enumerate(mapping)}
        for v, t in tmp.items():
            out = out.subs(v, LinearTerm.var(t))
        for v, t in tmp.items():
            out = out.subs(t, LinearTerm.var(mapping[v]))
        return out

    def evaluate_at(self, env) -> MotivicValue:
        """Value at an integer assignment of all variables."""
        total = MotivicValue.const(0, self.q)
        for (m, b, g), c in self.terms.items():
            pv = p_eval({m: Fraction(1)}, env)
            be = b.eval(env)
            ge = [(j, t.eval(env)) for j, t in g]
            if be.denominator != 1 or any(e.denominator != 1 for _, e in ge):
                raise ValueError("exponent is not integral at this point")
            total = total + c * MotivicValue.monomial(pv, int(be), [(j, int(e)) for j, e in ge], c.q)
        return total

    def to_value(self) -> MotivicValue:
        if self.vars:
            raise ValueError(f"sum still depends on {sorted(self.vars)}")
        return self.evaluate_at({})

    def __repr__(self):
        parts = []
        for (m, b, g), c in self.terms.items():
            parts.append(f"({c})*[{p_format({m: 1})}]*q^({b})" +
                         "".join(f"*T{j}^({t})" for j, t in g))
        return " + ".join(parts) or "0"


# ---------------------------------------------------------------------------
# one-variable closed forms

def _eulerian(a):
    """N_a with sum_{k>=0} k^a u^k = N_a(u)/(1-u)^(a+1); list of integer coefficients."""
    n = [1]
    for i in range(1, a + 1):
        # N_i = u * (N'(1-u) + i N)
        d = [k * n[k] for k in range(1, len(n))]  # N'
        t = [0] * (len(n) + 1)
        for k, c in enumerate(d):
            t[k] += c
            t[k + 1] -= c
        for k, c in enumerate(n):
            t[k] += i * c
        n = [0] + t
        while len(n) > 1 and n[-1] == 0:
            n.pop()
    return n


def _u_power(b, c, n, q):
    return MotivicValue.monomial(1, b * n, [(j, e * n) for j, e in c], q)


def _inv_one_minus(b, c, q):
    """1/(1 - q^b T^c) inside the restricted ring, or NotRepresentable."""
    if b < 0 and all(e >= 0 for _, e in c):
        return MotivicValue.geometric(b, c, 1, q)
    if b > 0 and all(e <= 0 for _, e in c):
        nb, nc = -b, [(j, -e) for j, e in c]
        return -_u_power(nb, nc, 1, q) * MotivicValue.geometric(nb, nc, 1, q)
    if b == 0 and not c and q is not None:
        raise NotRepresentable("1/(1 - 1) has a pole")
    if q is not None and not c:
        return MotivicValue.const(Fraction(1) / (1 - Fraction(q) ** b), q)
    raise NotRepresentable(f"1/(1 - q^{b} T^{dict(c)}) is not an admissible denominator")


def ray_moment(a, b, c, q=None) -> MotivicValue:
    """sum_{k>=0} k^a q^(b k) T^(c k), requiring b < 0 and c >= 0."""
    if not (b < 0 and all(e >= 0 for _, e in c)):
        raise NotIntegrable(f"ray with rate q^{b} T^{dict(c)} diverges",
                            witness={"b": b, "c": dict(c)})
    return _moment_rational(a, b, c, q)


def _moment_rational(a, b, c, q):
    inv = _inv_one_minus(b, c, q)
    num = MotivicValue.const(0, q)
    for n, coef in enumerate(_eulerian(a)):
        if coef:
            num = num + _u_power(b, c, n, q) * MotivicValue.const(coef, q)
    return num * inv ** (a + 1)


def _faulhaber(a):
    """Polynomial F(B) with sum_{k=0}^{B} k^a = F(B); returned in variable '__B'."""
    # Newton series: sum_{k=0}^{B} f(k) = sum_i Delta^i f(0) * C(B+1, i+1)
    vals = [Fraction(k ** a) if (k or a) else Fraction(1) for k in range(a + 2)]
    diffs = []
    row = vals
    while row:
        diffs.append(row[0])
        row = [row[i + 1] - row[i] for i in range(len(row) - 1)]
    out = {}
    B1 = p_add(p_var("__B"), P_ONE)
    for i, d in enumerate(diffs):
        if not d:
            continue
        # C(B+1, i+1) = prod_{r=0}^{i} (B+1-r) / (i+1)!
        poly = dict(P_ONE)
        for r in range(i + 1):
            poly = p_mul(poly, p_add(B1, p_const(-r)))
        fact = 1
        for r in range(2, i + 2):
            fact *= r
        out = p_add(out, p_scale(poly, d / fact))
    return out


def _k_coeffs(beta, gamma, k):
    b = beta.coeff(k)
    c = [(j, t.coeff(k)) for j, t in gamma]
    return b, [(j, e) for j, e in c if e]


def sum_fiber(F: ExpPolySum, x: str, prog: Progression) -> ExpPolySum:
    """Sum F over x running through one progression; result is in the outer variables."""
    s = prog.step
    if prog.start is None:
        base, s = prog.end, -s
        bound = None
    else:
        base = prog.start
        bound = None if prog.end is None else (prog.end - prog.start) / prog.step
    k = "__k"
    G = F.subs(x, base + LinearTerm.var(k, s))
    d = 1
    for (m, b, g) in G.terms:
        bb, cc = _k_coeffs(b, g, k)
        d = lcm(d, bb.denominator, *(e.denominator for _, e in cc))
    if d != 1:
        if bound is None:
            out = ExpPolySum(F.q)
            for i in range(d):
                out = out + _sum_k(G.subs(k, LinearTerm({k: d}, i)), k, None)
            return out
        if bound.is_const():
            return _sum_k(G, k, bound)
        raise NotRepresentable("fractional rate on a bounded piece with symbolic length")
    return _sum_k(G, k, bound)


SMALL_BOUND = 64


def _sum_k(G: ExpPolySum, k: str, bound):
    """Sum over k in N (bound None) or 0..bound."""
    out = ExpPolySum(G.q)
    if bound is not None and bound.is_const():
        B = int(bound.const)
        if B <= SMALL_BOUND:
            for i in range(B + 1):
                out = out + G.subs(k, LinearTerm.constant(i))
            return out
    for (m, beta, gamma), coeff in G.terms.items():
        b, c = _k_coeffs(beta, gamma, k)
        b = int(b)
        c = [(j, int(e)) for j, e in c]
        beta0 = beta.drop(k)
        gamma0 = {j: t.drop(k) for j, t in gamma}
        for a, pa in p_split_var({m: Fraction(1)}, k).items():
            if bound is None:
                mom = ray_moment(a, b, c, G.q)
                out.add(coeff * mom, pa, beta0, gamma0)
            elif b == 0 and not c:
                fa = p_subs(_faulhaber(a), "__B", p_from_lt(bound))
                out.add(coeff, p_mul(pa, fa), beta0, gamma0)
            else:
                # S_a(u) - u^(B+1) sum_i C(a,i) (B+1)^(a-i) S_i(u)
                out.add(coeff * _moment_rational(a, b, c, G.q), pa, beta0, gamma0)
                B1 = bound + 1
                shift_b = beta0 + B1 * b
                shift_g = dict(gamma0)
                for j, e in c:
                    shift_g[j] = shift_g.get(j, LinearTerm()) + B1 * e
                for i in range(a + 1):
                    mom = _moment_rational(i, b, c, G.q)
                    poly = p_scale(p_mul(pa, p_pow(p_from_lt(B1), a - i)), -comb(a, i))
                    out.add(coeff * mom, poly, shift_b, shift_g)
    return out


def closed_form_ray(term: ExpPolyTerm, var: str) -> MotivicValue | ExpPolySum:
    """Sum a single term over var in N."""
    res = sum_fiber(ExpPolySum.of([term], term.coeff.q), var,
                    Progression(LinearTerm(), 1, None))
    return res.to_value() if not res.vars else res


def closed_form_bounded(term: ExpPolyTerm, var: str, bound) -> ExpPolySum:
    """Sum a single term over var in {0, ..., bound}; bound is a LinearTerm."""
    bound = as_lt(bound)
    return sum_fiber(ExpPolySum.of([term], term.coeff.q), var,
                     Progression(LinearTerm(), 1, bound))


# ---------------------------------------------------------------------------
# iterated elimination

def _satisfiable(f: Formula, vars_left) -> bool:
    if f == TRUE:
        return True
    if f == FALSE:
        return False
    fv = sorted(f.free_vars)
    if not fv:
        return f.holds({})
    x = fv[-1]
    return any(_satisfiable(g, fv[:-1]) for g, _ in _decompose(f, x))


def sum_relative(F: ExpPolySum, formula: Formula, var: str):
    """Sum over one variable; returns [(guard, ExpPolySum)] in the rest."""
    out = {}
    for guard, prog in _decompose(formula, var):
        try:
            part = sum_fiber(F, var, prog)
        except NotIntegrable as e:
            if not _satisfiable(guard, None):
                continue
            e.witness = dict(e.witness or {}, guard=str(guard), piece=str(prog), var=var)
            raise
        if part.is_zero():
            continue
        key = guard
        out[key] = out[key] + part if key in out else part
    return list(out.items())


def _sum_in_order(F, formula, order):
    states = [(formula, F)]
    for x in order:
        nxt = {}
        for f, G in states:
            for g, H in sum_relative(G, f, x):
                nxt[g] = nxt[g] + H if g in nxt else H
        states = list(nxt.items())
    return states


def sum_over_set_relative(terms, S: PresburgerSet, outer=()):
    """Sum over all variables of S; others stay symbolic.  Returns [(guard, ExpPolySum)]."""
    F = terms if isinstance(terms, ExpPolySum) else ExpPolySum.of(terms)
    order = list(reversed(S.vars))
    last_exc = None
    for perm in [order] + [list(p) for p in permutations(order) if list(p) != order]:
        try:
            return _sum_in_order(F, S.formula, perm)
        except NotRepresentable as e:
            last_exc = e
    raise last_exc


def sum_over_set(terms, S: PresburgerSet, q=None) -> MotivicValue:
    F = terms if isinstance(terms, ExpPolySum) else ExpPolySum.of(terms, q)
    if F.q is None and q is not None:
        F = F.scale(MotivicValue.const(1, q))
    states = sum_over_set_relative(F, S)
    total = MotivicValue.const(0, F.q)
    for g, H in states:
        if g.free_vars:
            raise ValueError(f"guard {g} still depends on outer variables")
        if g.holds({}):
            total = total + H.to_value()
    return total
