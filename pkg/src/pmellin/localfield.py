"""Truncated local fields Q_p and F_p((t)) with their valuation data.

An element is an exact value plus an absolute precision ``A``: it stands for
``x0 + pi^A * O``.  ``A is None`` marks an exactly known element.  Exact Q_p
values are Fractions; exact F_p((t)) values are finite Laurent polynomials,
stored as sorted tuples of (exponent, coefficient).

Residue rings ``R_t = O / pi^(t+1)`` use one integer encoding for both
backends: a residue is ``sum d_i p^i`` over its first t+1 digits.  For Q_p this
is the usual integer mod p^(t+1); for F_p((t)) the digits are coefficients and
ring operations work digitwise.  At depth 0 both encodings are F_p.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

from .errors import (FormulaSyntaxError, OrdOfMultipleOfChar, PrecisionLoss,
                     UnboundLambda)

PADIC = "padic"
LAURENT = "laurent"
INF = float("inf")


def vp(n: int, p: int) -> int:
    if n == 0:
        raise ValueError("valuation of zero")
    n = abs(n)
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return k


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


# ---------------------------------------------------------------------------
# basic terms

class BasicTerm:
    def evaluate(self, cfg) -> int:
        raise NotImplementedError

    def symbols(self) -> set:
        return set()

    def __add__(self, other):
        return BTAdd(self, as_basic(other), 1)

    def __sub__(self, other):
        return BTAdd(self, as_basic(other), -1)

    def __eq__(self, other):
        return isinstance(other, BasicTerm) and str(self) == str(other)

    def __hash__(self):
        return hash(str(self))

    def __repr__(self):
        return f"BasicTerm({self})"


@dataclass(frozen=True, eq=False)
class BTLit(BasicTerm):
    value: int

    def evaluate(self, cfg):
        return self.value

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True, eq=False)
class BTLambda(BasicTerm):
    name: str

    def evaluate(self, cfg):
        lam = cfg.lam_map
        if self.name not in lam:
            raise UnboundLambda(f"lambda symbol {self.name!r} is not bound")
        return lam[self.name]

    def symbols(self):
        return {self.name}

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=False)
class BTOrd(BasicTerm):
    n: int

    def evaluate(self, cfg):
        if cfg.backend == LAURENT:
            if self.n % cfg.p == 0:
                raise OrdOfMultipleOfChar(f"ord({self.n}) is infinite in characteristic {cfg.p}")
            return 0
        return vp(self.n, cfg.p)

    def __str__(self):
        return f"ord({self.n})"


@dataclass(frozen=True, eq=False)
class BTAdd(BasicTerm):
    left: BasicTerm
    right: BasicTerm
    sign: int

    def evaluate(self, cfg):
        return self.left.evaluate(cfg) + self.sign * self.right.evaluate(cfg)

    def symbols(self):
        return self.left.symbols() | self.right.symbols()

    def __str__(self):
        r = str(self.right)
        if self.sign < 0 and isinstance(self.right, BTAdd):
            r = f"({r})"
        return f"{self.left}{'+' if self.sign > 0 else '-'}{r}"


@dataclass(frozen=True, eq=False)
class BTMax(BasicTerm):
    left: BasicTerm
    right: BasicTerm

    def evaluate(self, cfg):
        return max(self.left.evaluate(cfg), self.right.evaluate(cfg))

    def symbols(self):
        return self.left.symbols() | self.right.symbols()

    def __str__(self):
        return f"max({self.left}, {self.right})"


def as_basic(t) -> BasicTerm:
    if isinstance(t, BasicTerm):
        return t
    if isinstance(t, int):
        return BTLit(t)
    if isinstance(t, str):
        return parse_basic_term(t)
    raise TypeError(f"not a basic term: {t!r}")


_BT_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


def parse_basic_term(text: str) -> BasicTerm:
    toks = []
    for m in _BT_TOKEN.finditer(text):
        if m.group(0).strip() == "":
            continue
        toks.append((m.group(1) or m.group(2) or m.group(3), m.start(0)))
    pos = 0

    def peek():
        return toks[pos][0] if pos < len(toks) else None

    def take(expected=None):
        nonlocal pos
        if pos >= len(toks):
            raise FormulaSyntaxError("unexpected end of basic term", text, len(text))
        tok, at = toks[pos]
        if expected is not None and tok != expected:
            raise FormulaSyntaxError(f"expected {expected!r}, found {tok!r}", text, at)
        pos += 1
        return tok

    def atom():
        tok = peek()
        if tok is None:
            raise FormulaSyntaxError("unexpected end of basic term", text, len(text))
        if tok == "(":
            take()
            e = expr()
            take(")")
            return e
        if tok == "-":
            take()
            return BTAdd(BTLit(0), atom(), -1)
        if tok.isdigit():
            take()
            return BTLit(int(tok))
        if tok == "ord":
            take()
            take("(")
            n = take()
            if not n.isdigit() or int(n) <= 0:
                raise FormulaSyntaxError("ord() takes a positive integer literal", text, toks[pos - 1][1])
            take(")")
            return BTOrd(int(n))
        if tok == "max":
            take()
            take("(")
            a = expr()
            take(",")
            b = expr()
            take(")")
            return BTMax(a, b)
        if re.match(r"[A-Za-z_]", tok):
            take()
            return BTLambda(tok)
        raise FormulaSyntaxError(f"unexpected token {tok!r}", text, toks[pos][1])

    def expr():
        e = atom()
        while peek() in ("+", "-"):
            s = take()
            e = BTAdd(e, atom(), 1 if s == "+" else -1)
        return e

    out = expr()
    if pos != len(toks):
        raise FormulaSyntaxError(f"trailing input {toks[pos][0]!r}", text, toks[pos][1])
    return out


def eval_basic_term(t, cfg) -> int:
    return as_basic(t).evaluate(cfg)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class StructureConfig:
    p: int
    backend: str = PADIC
    precision: int = 24
    lam: tuple = ()
    enum_cap: int = 10 ** 7
    table_cap: int = 3125

    def __post_init__(self):
        if not is_prime(self.p):
            raise ValueError(f"{self.p} is not prime")
        if self.backend not in (PADIC, LAURENT):
            raise ValueError(f"unknown backend {self.backend!r}")
        if isinstance(self.lam, dict):
            object.__setattr__(self, "lam", tuple(sorted(self.lam.items())))

    @property
    def lam_map(self) -> dict:
        return dict(self.lam)

    def with_lambda(self, **kw):
        d = self.lam_map
        d.update(kw)
        return StructureConfig(self.p, self.backend, self.precision, tuple(sorted(d.items())),
                               self.enum_cap, self.table_cap)

    def with_backend(self, backend):
        return StructureConfig(self.p, backend, self.precision, self.lam, self.enum_cap, self.table_cap)

    def depth(self, t) -> int:
        return eval_basic_term(t, self)

    def elem(self, x) -> "LocalFieldElement":
        return as_element(x, self)

    def ring(self, t: int) -> "ResidueRing":
        return residue_ring(self.p, self.backend, int(t))

    @property
    def uniformizer(self):
        return LocalFieldElement.pi_power(self, 1)


# ---------------------------------------------------------------------------
# Laurent polynomial helpers over F_p

def _l_norm(d: dict, p: int) -> tuple:
    return tuple(sorted((e, c % p) for e, c in d.items() if c % p))


def _l_add(a, b, p):
    d = dict(a)
    for e, c in b:
        d[e] = d.get(e, 0) + c
    return _l_norm(d, p)


def _l_neg(a, p):
    return tuple((e, (-c) % p) for e, c in a)


def _l_mul(a, b, p):
    d = {}
    for e1, c1 in a:
        for e2, c2 in b:
            d[e1 + e2] = d.get(e1 + e2, 0) + c1 * c2
    return _l_norm(d, p)


def _l_trunc(a, A):
    return tuple((e, c) for e, c in a if e < A)


def _l_inverse(a, p, rel_prec):
    """Inverse series of a nonzero Laurent polynomial to relative precision rel_prec."""
    v, c0 = a[0]
    unit = {e - v: c for e, c in a}
    inv0 = pow(c0, -1, p)
    out = [0] * rel_prec
    for n in range(rel_prec):
        s = 1 if n == 0 else 0
        for k in range(1, n + 1):
            s -= unit.get(k, 0) * out[n - k]
        out[n] = (s * inv0) % p
    return tuple((i - v, c) for i, c in enumerate(out) if c)


def _frac_mod(x: Fraction, p: int, k: int) -> int:
    """x mod p^k for a p-integral rational x."""
    m = p ** k
    return (x.numerator * pow(x.denominator, -1, m)) % m


# ---------------------------------------------------------------------------
# elements

class LocalFieldElement:
    __slots__ = ("p", "backend", "x", "A")

    def __init__(self, p, backend, x, A=None):
        self.p = p
        self.backend = backend
        if backend == PADIC:
            x = Fraction(x)
        elif not isinstance(x, tuple):
            raise TypeError("Laurent values are tuples of (exponent, coefficient)")
        if A is not None and backend == LAURENT:
            x = _l_trunc(x, A)
        self.x = x
        self.A = A

    # constructors
    @classmethod
    def from_rational(cls, cfg, r):
        r = Fraction(r)
        if cfg.backend == PADIC:
            return cls(cfg.p, PADIC, r)
        if r.denominator % cfg.p == 0:
            raise ValueError(f"{r} is not defined in characteristic {cfg.p}")
        c = (r.numerator * pow(r.denominator, -1, cfg.p)) % cfg.p
        return cls(cfg.p, LAURENT, ((0, c),) if c else ())

    @classmethod
    def pi_power(cls, cfg, e, coeff=1):
        if cfg.backend == PADIC:
            return cls(cfg.p, PADIC, Fraction(coeff) * Fraction(cfg.p) ** e)
        c = int(coeff) % cfg.p
        return cls(cfg.p, LAURENT, ((e, c),) if c else ())

    @classmethod
    def lift_residue(cls, cfg, value: int, depth: int, scale_exp: int = 0):
        """Canonical lift of a residue (digits d_i) to sum d_i pi^(i + scale_exp)."""
        if depth < 0:
            return cls.zero(cfg)
        if cfg.backend == PADIC:
            return cls(cfg.p, PADIC, Fraction(value) * Fraction(cfg.p) ** scale_exp)
        digs = []
        for i in range(depth + 1):
            value, d = divmod(value, cfg.p)
            if d:
                digs.append((i + scale_exp, d))
        return cls(cfg.p, LAURENT, tuple(digs))

    @classmethod
    def zero(cls, cfg):
        return cls(cfg.p, cfg.backend, Fraction(0) if cfg.backend == PADIC else ())

    # structure
    def _like(self, x, A=None):
        return LocalFieldElement(self.p, self.backend, x, A)

    def _coerce(self, other):
        if isinstance(other, LocalFieldElement):
            if other.p != self.p or other.backend != self.backend:
                raise ValueError("elements from different fields")
            return other
        if isinstance(other, (int, Fraction)):
            cfg = StructureConfig(self.p, self.backend)
            return LocalFieldElement.from_rational(cfg, other)
        raise TypeError(f"cannot combine with {type(other).__name__}")

    @property
    def exact(self) -> bool:
        return self.A is None

    def _ord0(self):
        if self.backend == PADIC:
            if self.x == 0:
                return INF
            return vp(self.x.numerator, self.p) - vp(self.x.denominator, self.p)
        return self.x[0][0] if self.x else INF

    def is_zero(self) -> bool:
        if self._ord0() == INF:
            if self.A is None:
                return True
            raise PrecisionLoss("cannot decide whether an inexact element is zero")
        return False

    def ord(self):
        v = self._ord0()
        if self.A is not None and v >= self.A:
            raise PrecisionLoss(f"valuation not determined (known modulo pi^{self.A})")
        return v

    def obar_ord(self) -> int:
        v = self.ord()
        return 0 if v == INF else v

    def abs_prec(self):
        return INF if self.A is None else self.A

    def __add__(self, other):
        other = self._coerce(other)
        A = _minA(self.A, other.A)
        if self.backend == PADIC:
            return self._like(self.x + other.x, A)
        return self._like(_l_add(self.x, other.x, self.p), A)

    __radd__ = __add__

    def __neg__(self):
        if self.backend == PADIC:
            return self._like(-self.x, self.A)
        return self._like(_l_neg(self.x, self.p), self.A)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        v1, v2 = self._ord0(), other._ord0()
        A = _minA(_addA(self.A, v2), _addA(other.A, v1))
        if self.A is not None and other.A is not None:
            A = _minA(A, self.A + other.A)
        if self.backend == PADIC:
            return self._like(self.x * other.x, A)
        return self._like(_l_mul(self.x, other.x, self.p), A)

    __rmul__ = __mul__

    def inverse(self, rel_prec=24):
        v = self.ord()
        if v == INF:
            raise ZeroDivisionError("inverse of zero")
        if self.backend == PADIC:
            if self.A is None:
                return self._like(1 / self.x)
            rel = self.A - v
            return self._like(1 / self.x, -v + rel)
        if self.A is None and len(self.x) == 1:
            e, c = self.x[0]
            return self._like(((-e, pow(c, -1, self.p)),))
        rel = rel_prec if self.A is None else min(rel_prec, self.A - v)
        return self._like(_l_inverse(self.x, self.p, rel), -v + rel)

    def __truediv__(self, other):
        other = self._coerce(other)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __eq__(self, other):
        if not isinstance(other, (LocalFieldElement, int, Fraction)):
            return NotImplemented
        d = self - other
        return d.is_zero()

    def __hash__(self):
        if self.A is not None:
            raise TypeError("inexact elements are not hashable")
        return hash((self.p, self.backend, self.x))

    def unit_digits(self, k: int) -> int:
        """First k digits of the unit part, encoded as an integer."""
        v = self.ord()
        if v == INF:
            return 0
        if self.A is not None and v + k > self.A:
            raise PrecisionLoss(f"need {k} unit digits, only {self.A - v} known")
        if k <= 0:
            return 0
        if self.backend == PADIC:
            u = self.x / Fraction(self.p) ** v
            return _frac_mod(u, self.p, k)
        out = 0
        for e, c in self.x:
            i = e - v
            if i >= k:
                break
            out += c * self.p ** i
        return out

    def ac(self, t: int) -> int:
        """Angular component at depth t, as an encoded residue of R_t."""
        if t < 0:
            return 0
        if self._ord0() == INF and self.A is None:
            return 0
        return self.unit_digits(t + 1)

    def residue(self, t: int) -> int:
        """Reduction of an integral element modulo pi^(t+1)."""
        if t < 0:
            return 0
        v = self._ord0()
        if v != INF and v < 0:
            raise ValueError("residue of a non-integral element")
        if self.A is not None and self.A < t + 1:
            raise PrecisionLoss("not enough digits for the residue")
        if v == INF:
            return 0
        if self.backend == PADIC:
            return _frac_mod(self.x, self.p, t + 1)
        out = 0
        for e, c in self.x:
            if e > t:
                break
            out += c * self.p ** e
        return out

    def fractional_digits(self):
        """(k, m): the class of x mod M equals m / p^k with 0 <= m < p^k (k >= 0).

        For the Laurent backend only the digits of t^-k..t^0 are returned, as an
        encoded integer; callers use backend-specific meaning.
        """
        v = self._ord0()
        if self.A is not None and self.A < 1:
            raise PrecisionLoss("element not known modulo the maximal ideal")
        if v == INF or v >= 1:
            return 0, 0
        k = 1 - v
        if self.backend == PADIC:
            y = self.x * Fraction(self.p) ** (k - 1)
            return k, _frac_mod(y, self.p, k)
        return k, None

    def laurent_coeff(self, e: int) -> int:
        if self.backend != LAURENT:
            raise ValueError("Laurent coefficient of a p-adic element")
        if self.A is not None and e >= self.A:
            raise PrecisionLoss("coefficient beyond known precision")
        for ee, c in self.x:
            if ee == e:
                return c
        return 0

    def __str__(self):
        if self.backend == PADIC:
            s = str(self.x)
            if self.A is not None:
                s += f" + O({self.p}^{self.A})"
            return s
        if not self.x:
            s = "0"
        else:
            s = " + ".join(f"{c}*t^{e}" if c != 1 else f"t^{e}" for e, c in self.x)
        if self.A is not None:
            s += f" + O(t^{self.A})"
        return s

    def __repr__(self):
        return f"LocalFieldElement({self})"


def _minA(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _addA(a, v):
    if a is None or v == INF:
        return None
    return a + v


def as_element(x, cfg) -> LocalFieldElement:
    if isinstance(x, LocalFieldElement):
        if x.p != cfg.p or x.backend != cfg.backend:
            raise ValueError("element belongs to another field")
        return x
    if isinstance(x, str):
        return parse_element(x, cfg)
    return LocalFieldElement.from_rational(cfg, x)


def ord_(x):
    return x.ord()


def obar_ord(x):
    return x.obar_ord()


def ac(x: LocalFieldElement, t: int) -> "ResidueRingElement":
    cfg = StructureConfig(x.p, x.backend)
    return ResidueRingElement(t, x.ac(t), cfg.ring(t))


_POW_TERM = re.compile(r"\s*([+-])?\s*(?:(\d+(?:/\d+)?)\s*\*\s*)?(?:(t)(?:\s*\^\s*(\(\s*[+-]?\d+\s*\)|[+-]?\d+))?|(\d+)\s*\^\s*(\(\s*[+-]?\d+\s*\)|[+-]?\d+))")
_NUM_TERM = re.compile(r"\s*([+-])?\s*(\d+(?:/\d+)?)")
_BIG_O = re.compile(r"\s*\+\s*O\(\s*(t|\d+)\s*\^\s*([+-]?\d+)\s*\)\s*$|^\s*O\(\s*(t|\d+)\s*\^\s*([+-]?\d+)\s*\)\s*$")


def parse_element(text: str, cfg) -> LocalFieldElement:
    """Parse literals such as ``1/3``, ``2*3^-1 + 1 + O(3^8)`` or ``t^-1 + 2*t^0 + O(t^8)``."""
    s = text
    A = None
    m = _BIG_O.search(s)
    if m:
        base = m.group(1) or m.group(3)
        _check_base(base, cfg, text)
        A = int(m.group(2) or m.group(4))
        s = s[:m.start()]
    total = LocalFieldElement.zero(cfg)
    pos = 0
    first = True
    while pos < len(s.rstrip()) or first:
        if not s.strip():
            break
        mm = _POW_TERM.match(s, pos)
        if mm:
            sign, c, tb, te, nb, ne = mm.groups()
            base, e = (tb, te or "1") if tb else (nb, ne)
            _check_base(base, cfg, text)
            coef = Fraction(c) if c else Fraction(1)
            val = LocalFieldElement.from_rational(cfg, coef) * LocalFieldElement.pi_power(cfg, int(e.strip("() ")))
        else:
            mm = _NUM_TERM.match(s, pos)
            if not mm:
                raise FormulaSyntaxError("bad element literal", text, pos)
            sign, c = mm.groups()
            val = LocalFieldElement.from_rational(cfg, Fraction(c))
        if sign is None and not first:
            raise FormulaSyntaxError("expected + or - between terms", text, pos)
        total = total - val if sign == "-" else total + val
        pos = mm.end()
        first = False
    if A is not None:
        total = LocalFieldElement(cfg.p, cfg.backend, total.x, A)
    return total


def _check_base(base, cfg, text):
    if cfg.backend == LAURENT and base != "t":
        raise FormulaSyntaxError(f"Laurent literals use powers of t, got {base}", text, 0)
    if cfg.backend == PADIC and base != str(cfg.p):
        raise FormulaSyntaxError(f"p-adic literals use powers of {cfg.p}, got {base}", text, 0)


# ---------------------------------------------------------------------------
# residue rings

class ResidueRing:
    """R_t with the shared integer encoding (see module docstring)."""

    def __init__(self, p, backend, t):
        self.p = p
        self.backend = backend
        self.t = t
        self.size = p ** (t + 1) if t >= 0 else 1

    def elements(self):
        return range(self.size)

    @property
    def units(self):
        return _units(self.p, self.backend, self.t)

    def is_unit(self, x: int) -> bool:
        if self.t < 0:
            return x == 0
        return x % self.p != 0

    def add(self, a, b):
        if self.t < 0:
            return 0
        if self.backend == PADIC:
            return (a + b) % self.size
        return _digitwise(a, b, self.p, self.t, 1)

    def neg(self, a):
        if self.t < 0:
            return 0
        if self.backend == PADIC:
            return (-a) % self.size
        return _digitwise(0, a, self.p, self.t, -1)

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def mul(self, a, b):
        if self.t < 0:
            return 0
        if self.backend == PADIC:
            return (a * b) % self.size
        da, db = _digits(a, self.p, self.t), _digits(b, self.p, self.t)
        out = [0] * (self.t + 1)
        for i, x in enumerate(da):
            if x:
                for j in range(self.t + 1 - i):
                    out[i + j] += x * db[j]
        return sum((c % self.p) * self.p ** i for i, c in enumerate(out))

    def pow(self, a, e):
        r = 1 % self.size if self.size > 1 else 0
        for _ in range(e):
            r = self.mul(r, a)
        return r

    def from_int(self, n: int) -> int:
        """Image of the integer n (through the prime field for Laurent)."""
        if self.t < 0:
            return 0
        if self.backend == PADIC:
            return n % self.size
        return n % self.p

    def res(self, x: int, t_to: int) -> int:
        """res_{t, t_to}: projection when t >= t_to, zero map otherwise."""
        if t_to < 0 or self.t < t_to:
            return 0
        return x % (self.p ** (t_to + 1))

    def cross(self, i: int) -> int:
        if 0 <= i <= self.t:
            return self.p ** i
        return 0

    def inverse(self, a):
        if self.backend == PADIC:
            return pow(a, -1, self.size)
        for b in self.units:
            if self.mul(a, b) == 1:
                return b
        raise ZeroDivisionError("not a unit")

    def format(self, x: int) -> str:
        if self.backend == PADIC:
            return f"{x} mod {self.p}^{self.t + 1}"
        return " + ".join(f"{d}*t^{i}" for i, d in enumerate(_digits(x, self.p, self.t)) if d) or "0"


def _digits(a, p, t):
    out = []
    for _ in range(t + 1):
        a, d = divmod(a, p)
        out.append(d)
    return out


def _digitwise(a, b, p, t, sign):
    da, db = _digits(a, p, t), _digits(b, p, t)
    return sum(((x + sign * y) % p) * p ** i for i, (x, y) in enumerate(zip(da, db)))


@lru_cache(maxsize=None)
def residue_ring(p, backend, t) -> ResidueRing:
    return ResidueRing(p, backend, t)


@lru_cache(maxsize=None)
def _units(p, backend, t):
    if t < 0:
        return (0,)
    return tuple(x for x in range(p ** (t + 1)) if x % p)


@dataclass(frozen=True)
class ResidueRingElement:
    depth: int
    value: int
    ring: Optional[ResidueRing] = field(default=None, compare=False, hash=False)

    def res(self, t_to: int) -> "ResidueRingElement":
        r = self.ring.res(self.value, t_to)
        return ResidueRingElement(t_to, r, residue_ring(self.ring.p, self.ring.backend, t_to))


def res(x: ResidueRingElement, t_to: int) -> ResidueRingElement:
    return x.res(t_to)


def cross(i: int, t: int, cfg) -> ResidueRingElement:
    ring = cfg.ring(t)
    return ResidueRingElement(t, ring.cross(i) if t >= 0 else 0, ring)
