"""Exact arithmetic in the value ring.

Two types live here:

* :class:`Cyclotomic` -- elements of Q(zeta_n).  Internally Q(zeta_n) is
  written as the tensor product of the prime-power fields Q(zeta_{p^k}); each
  of those uses the power basis ``zeta^e, 0 <= e < phi(p^k)``.  Every value is
  stored at its minimal conductor, so equality and hashing are plain dict
  comparisons.

* :class:`MotivicValue` -- rational functions in ``q`` and ``T1, T2, ...``
  whose denominators are products of binomials ``1 - q^a T^b`` with ``a < 0``
  and ``b >= 0``.  ``q`` is formal unless the value has been pinned to a
  prime, in which case powers of ``q`` are folded into the coefficients.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb, gcd
import cmath

from .errors import ConductorCap, NotExpandable, PoleError

CONDUCTOR_CAP = 1 << 20


@lru_cache(maxsize=None)
def factorize(n: int) -> tuple:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            k = 0
            while n % d == 0:
                n //= d
                k += 1
            out.append((d, k))
        d += 1
    if n > 1:
        out.append((n, 1))
    return tuple(out)


def _cond_value(cond) -> int:
    n = 1
    for p, k in cond:
        n *= p ** k
    return n


@lru_cache(maxsize=None)
def _reduce_component(p: int, k: int, e: int) -> tuple:
    """Write zeta_{p^k}^e in the power basis; returns ((exponent, sign), ...)."""
    pk = p ** k
    e %= pk
    step = p ** (k - 1)
    phi = pk - step
    if e < phi:
        return ((e, 1),)
    r = e - phi
    return tuple((i * step + r, -1) for i in range(p - 1))


def _reduce_key(cond, key):
    # cartesian product of the per-component reductions
    out = [((), 1)]
    for (p, k), e in zip(cond, key):
        red = _reduce_component(p, k, e)
        if len(red) == 1 and red[0][1] == 1:
            out = [(ks + (red[0][0],), s) for ks, s in out]
        else:
            out = [(ks + (e2,), s * s2) for ks, s in out for e2, s2 in red]
    return out


def _merge_cond(c1, c2):
    d = dict(c1)
    for p, k in c2:
        d[p] = max(d.get(p, 0), k)
    return tuple(sorted(d.items()))


@lru_cache(maxsize=4096)
def _lift_map(src, dst):
    """Per-component multipliers and positions to move keys from src to dst."""
    pos = {p: i for i, (p, _) in enumerate(src)}
    plan = []
    for p, k in dst:
        if p in pos:
            ks = src[pos[p]][1]
            plan.append((pos[p], p ** (k - ks)))
        else:
            plan.append((None, 0))
    return tuple(plan)


class Cyclotomic:
    __slots__ = ("cond", "c", "_h")

    def __init__(self, value=0):
        if isinstance(value, Cyclotomic):
            self.cond, self.c = value.cond, value.c
        else:
            v = Fraction(value)
            self.cond = ()
            self.c = {(): v} if v else {}
        self._h = None

    @classmethod
    def _raw(cls, cond, c):
        obj = object.__new__(cls)
        obj.cond = cond
        obj.c = c
        obj._h = None
        return obj._normalize()

    @classmethod
    def root(cls, n: int, e: int = 1) -> "Cyclotomic":
        """zeta_n^e with zeta_n = exp(2 pi i / n)."""
        if n <= 0:
            raise ValueError("conductor must be positive")
        if n > CONDUCTOR_CAP:
            raise ConductorCap(f"conductor {n} exceeds cap {CONDUCTOR_CAP}")
        cond = factorize(n)
        key = []
        for p, k in cond:
            m = p ** k
            a = pow(n // m, -1, m)
            key.append((e * a) % m)
        c = {}
        for ks, s in _reduce_key(cond, tuple(key)):
            c[ks] = c.get(ks, 0) + s
        return cls._raw(cond, {k2: Fraction(v) for k2, v in c.items() if v})

    # -- structure ---------------------------------------------------------
    def _normalize(self):
        cond = list(self.cond)
        c = self.c
        i = 0
        changed = False
        while i < len(cond):
            p, k = cond[i]
            if all(key[i] == 0 for key in c):
                if k == 1 or not c:
                    cond.pop(i)
                    c = {key[:i] + key[i + 1:]: v for key, v in c.items()}
                    changed = True
                    continue
            if k >= 2 and all(key[i] % p == 0 for key in c):
                cond[i] = (p, k - 1)
                c = {key[:i] + (key[i] // p,) + key[i + 1:]: v for key, v in c.items()}
                changed = True
                continue
            i += 1
        if changed:
            self.cond = tuple(cond)
            self.c = c
        if not self.c:
            self.cond = ()
        return self

    @property
    def conductor(self) -> int:
        return _cond_value(self.cond)

    def _lifted(self, cond):
        if self.cond == cond:
            return self.c
        plan = _lift_map(self.cond, cond)
        out = {}
        for key, v in self.c.items():
            nk = tuple(0 if i is None else key[i] * m for i, m in plan)
            for rk, s in _reduce_key(cond, nk):
                out[rk] = out.get(rk, 0) + s * v
        return out

    def is_zero(self) -> bool:
        return not self.c

    def is_rational(self) -> bool:
        return not self.cond

    def to_fraction(self) -> Fraction:
        if self.cond:
            raise ValueError("not a rational number")
        return self.c.get((), Fraction(0))

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Cyclotomic):
            try:
                other = Cyclotomic(other)
            except TypeError:
                return NotImplemented
        if not other.c:
            return self
        if not self.c:
            return other
        cond = _merge_cond(self.cond, other.cond)
        a = dict(self._lifted(cond))
        for k, v in other._lifted(cond).items():
            s = a.get(k, 0) + v
            if s:
                a[k] = s
            else:
                a.pop(k, None)
        return Cyclotomic._raw(cond, a)

    __radd__ = __add__

    def __neg__(self):
        return Cyclotomic._raw(self.cond, {k: -v for k, v in self.c.items()})

    def __sub__(self, other):
        if not isinstance(other, Cyclotomic):
            try:
                other = Cyclotomic(other)
            except TypeError:
                return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return Cyclotomic(other) - self

    def __mul__(self, other):
        if not isinstance(other, Cyclotomic):
            try:
                f = Fraction(other)
            except TypeError:
                return NotImplemented
            if not f:
                return Cyclotomic(0)
            return Cyclotomic._raw(self.cond, {k: v * f for k, v in self.c.items()})
        if not self.c or not other.c:
            return Cyclotomic(0)
        if not other.cond:
            f = other.c[()]
            return Cyclotomic._raw(self.cond, {k: v * f for k, v in self.c.items()})
        if not self.cond:
            f = self.c[()]
            return Cyclotomic._raw(other.cond, {k: v * f for k, v in other.c.items()})
        cond = _merge_cond(self.cond, other.cond)
        a = self._lifted(cond)
        b = other._lifted(cond)
        mods = [p ** k for p, k in cond]
        out = {}
        for k1, v1 in a.items():
            for k2, v2 in b.items():
                v = v1 * v2
                nk = tuple((x + y) % m for x, y, m in zip(k1, k2, mods))
                for rk, s in _reduce_key(cond, nk):
                    out[rk] = out.get(rk, 0) + s * v
        return Cyclotomic._raw(cond, {k: v for k, v in out.items() if v})

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            return self.inverse() ** (-e)
        result = Cyclotomic(1)
        base = self
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    def galois(self, a: int) -> "Cyclotomic":
        """Apply zeta_n -> zeta_n^a (a coprime to the conductor)."""
        out = {}
        mods = [p ** k for p, k in self.cond]
        for key, v in self.c.items():
            nk = tuple((x * a) % m for x, m in zip(key, mods))
            for rk, s in _reduce_key(self.cond, nk):
                out[rk] = out.get(rk, 0) + s * v
        return Cyclotomic._raw(self.cond, {k: v for k, v in out.items() if v})

    def conj(self):
        return self.galois(-1)

    def inverse(self):
        if not self.c:
            raise ZeroDivisionError("inverse of zero")
        if not self.cond:
            return Cyclotomic(1 / self.c[()])
        n = self.conductor
        prod = Cyclotomic(1)
        for a in range(2, n):
            if gcd(a, n) == 1:
                prod = prod * self.galois(a)
        norm = (self * prod).to_fraction()
        return prod * (1 / norm)

    def __truediv__(self, other):
        if not isinstance(other, Cyclotomic):
            other = Cyclotomic(other)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return Cyclotomic(other) * self.inverse()

    # -- comparison ----------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, Cyclotomic):
            return self.cond == other.cond and self.c == other.c
        try:
            f = Fraction(other)
        except (TypeError, ValueError):
            return NotImplemented
        if self.cond:
            return False
        return self.c.get((), 0) == f

    def __hash__(self):
        if self._h is None:
            if not self.cond:
                self._h = hash(self.c.get((), Fraction(0)))
            else:
                self._h = hash((self.cond, frozenset(self.c.items())))
        return self._h

    def __bool__(self):
        return bool(self.c)

    # -- display -------------------------------------------------------------
    def _terms(self):
        """(coefficient, exponent e of zeta_n) pairs at the minimal conductor n."""
        n = self.conductor
        out = []
        for key, v in self.c.items():
            e = 0
            for (p, k), x in zip(self.cond, key):
                m = p ** k
                e += x * (n // m)
            out.append((v, e % n))
        out.sort(key=lambda t: t[1])
        return n, out

    def __complex__(self):
        z = 0j
        for key, v in self.c.items():
            ang = sum(x / p ** k for (p, k), x in zip(self.cond, key))
            z += float(v) * cmath.exp(2j * cmath.pi * ang)
        return z

    def __str__(self):
        if not self.c:
            return "0"
        if not self.cond:
            return _fmt_frac(self.c[()])
        n, terms = self._terms()
        parts = []
        for v, e in terms:
            mono = "1" if e == 0 else f"z{n}^{e}"
            if mono == "1":
                body = _fmt_frac(abs(v))
            elif abs(v) == 1:
                body = mono
            else:
                body = f"{_fmt_frac(abs(v))}*{mono}"
            parts.append(("-" if v < 0 else "+", body))
        s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            s += f" {sign} {body}"
        return s

    def __repr__(self):
        return f"Cyclotomic({self})"


def _fmt_frac(f: Fraction) -> str:
    f = Fraction(f)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def as_cyc(x) -> Cyclotomic:
    return x if isinstance(x, Cyclotomic) else Cyclotomic(x)


ZERO = Cyclotomic(0)
ONE = Cyclotomic(1)


# ---------------------------------------------------------------------------
# Laurent polynomials in q and T_j.  A monomial is (q_exp, ((j, e), ...)) with
# the T part sorted by index and zero exponents dropped.

def _tmul(a, b):
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for j, e in b:
        s = d.get(j, 0) + e
        if s:
            d[j] = s
        else:
            d.pop(j)
    return tuple(sorted(d.items()))


def _tscale(a, k):
    if k == 0:
        return ()
    return tuple((j, e * k) for j, e in a)


def _mono_mul(m1, m2):
    return (m1[0] + m2[0], _tmul(m1[1], m2[1]))


def _poly_add_into(acc, poly, scale=None):
    for m, c in poly.items():
        if scale is not None:
            c = c * scale
        s = acc.get(m)
        s = c if s is None else s + c
        if s:
            acc[m] = s
        else:
            acc.pop(m, None)
    return acc


def _poly_mul(a, b):
    out = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m = _mono_mul(m1, m2)
            c = c1 * c2
            s = out.get(m)
            s = c if s is None else s + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
    return out


def norm_tvec(b) -> tuple:
    """Normalize a T-exponent vector given as dict or pairs."""
    items = b.items() if isinstance(b, dict) else b
    return tuple(sorted((int(j), int(e)) for j, e in items if e))


class MotivicValue:
    """Element of the localized value ring.

    ``num`` maps monomials to Cyclotomic coefficients, ``den`` is a sorted tuple
    of ((a, b), multiplicity) meaning prod (1 - q^a T^b)^mult, ``q`` is ``None``
    for a formal q or the pinned integer.
    """

    __slots__ = ("num", "den", "q")

    def __init__(self, num=None, den=(), q=None, _canon=False):
        self.num = num if num is not None else {}
        self.den = tuple(den)
        self.q = q
        if not _canon:
            self._canonicalize()

    # -- constructors --------------------------------------------------------
    @classmethod
    def const(cls, c, q=None):
        c = as_cyc(c)
        return cls({(0, ()): c} if c else {}, (), q, _canon=True)

    @classmethod
    def monomial(cls, coeff=1, qexp=0, t=(), q=None):
        c = as_cyc(coeff)
        t = norm_tvec(t)
        if q is not None:
            c = c * Fraction(q) ** qexp
            qexp = 0
        return cls({(qexp, t): c} if c else {}, (), q, _canon=True)

    @classmethod
    def q_power(cls, e, q=None):
        return cls.monomial(1, e, (), q)

    @classmethod
    def T(cls, j, e=1, q=None):
        return cls.monomial(1, 0, ((j, e),), q)

    @classmethod
    def geometric(cls, a, b, mult=1, q=None):
        """1 / (1 - q^a T^b)^mult."""
        return cls({(0, ()): ONE}, (((a, norm_tvec(b)), mult),), q)

    # -- invariants ----------------------------------------------------------
    def _canonicalize(self):
        den = {}
        for (a, b), m in self.den:
            b = norm_tvec(b)
            if a >= 0 or any(e < 0 for _, e in b):
                raise ValueError(f"inadmissible denominator factor (1 - q^{a} T^{b})")
            if m:
                den[(a, b)] = den.get((a, b), 0) + m
        num = {}
        for m, c in self.num.items():
            c = as_cyc(c)
            if c:
                if self.q is not None and m[0]:
                    c = c * Fraction(self.q) ** m[0]
                    m = (0, m[1])
                num[m] = num.get(m, ZERO) + c
        num = {m: c for m, c in num.items() if c}
        if self.q is not None:
            # constant factors become coefficients
            for (a, b), mult in list(den.items()):
                if not b:
                    f = Fraction(1) / (1 - Fraction(self.q) ** a) ** mult
                    num = {m: c * f for m, c in num.items()}
                    del den[(a, b)]
        self.num = num
        if not num:
            self.den = ()
            return
        # cancel exact binomial divisors
        for fac in sorted(den):
            while den.get(fac):
                qt = self._divide_binomial(num, fac)
                if qt is None:
                    break
                num = qt
                den[fac] -= 1
        self.num = num
        self.den = tuple(sorted((f, m) for f, m in den.items() if m))

    def _factor_poly(self, fac):
        a, b = fac
        if self.q is None:
            return {(0, ()): ONE, (a, b): -ONE}
        return {(0, ()): ONE, (0, b): Cyclotomic(-Fraction(self.q) ** a)}

    def _divide_binomial(self, num, fac):
        """Exact quotient num / (1 - c*m) or None."""
        a, b = fac
        if self.q is None:
            step, c = (a, b), ONE
            pivot_q = True
        else:
            step, c = (0, b), Cyclotomic(Fraction(self.q) ** a)
            pivot_q = False
        if pivot_q:
            d = a
        else:
            jp, d = b[0]
        # monomial -> (class base, k) with mono = base + k*step
        classes = {}
        for mono, coef in num.items():
            y = mono[0] if pivot_q else dict(mono[1]).get(jp, 0)
            r = y % abs(d)
            k = (y - r) // d
            base = (mono[0] - k * step[0], _tmul(mono[1], _tscale(step[1], -k)))
            classes.setdefault(base, {})[k] = coef
        out = {}
        for base, chain in classes.items():
            lo, hi = min(chain), max(chain)
            acc = ZERO
            for k in range(lo, hi + 1):
                acc = acc * c + chain.get(k, ZERO)
                if k < hi and acc:
                    out[(base[0] + k * step[0], _tmul(base[1], _tscale(step[1], k)))] = acc
            if acc:
                return None
        return out

    # -- helpers ------------------------------------------------------------
    def _align(self, other):
        if not isinstance(other, MotivicValue):
            other = MotivicValue.const(as_cyc(other), self.q)
        a, b = self, other
        if a.q != b.q:
            if a.q is None:
                a = a.pin(b.q)
            elif b.q is None:
                b = b.pin(a.q)
            else:
                raise ValueError("values pinned to different primes")
        return a, b

    def pin(self, p):
        """Substitute q = p, folding powers of q into the coefficients."""
        if self.q is not None:
            if p != self.q:
                raise ValueError("value already pinned to a different prime")
            return self
        return MotivicValue(dict(self.num), self.den, int(p))

    def _den_poly(self, factors):
        out = {(0, ()): ONE}
        for fac, m in factors:
            fp = self._factor_poly(fac)
            for _ in range(m):
                out = _poly_mul(out, fp)
        return out

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        try:
            a, b = self._align(other)
        except TypeError:
            return NotImplemented
        if not a.num:
            return b
        if not b.num:
            return a
        da, db = dict(a.den), dict(b.den)
        common = dict(da)
        for f, m in db.items():
            common[f] = max(common.get(f, 0), m)
        extra_a = [(f, m - da.get(f, 0)) for f, m in common.items() if m > da.get(f, 0)]
        extra_b = [(f, m - db.get(f, 0)) for f, m in common.items() if m > db.get(f, 0)]
        na = _poly_mul(a.num, a._den_poly(extra_a)) if extra_a else dict(a.num)
        nb = _poly_mul(b.num, b._den_poly(extra_b)) if extra_b else b.num
        _poly_add_into(na, nb)
        return MotivicValue(na, tuple(common.items()), a.q)

    __radd__ = __add__

    def __neg__(self):
        return MotivicValue({m: -c for m, c in self.num.items()}, self.den, self.q, _canon=True)

    def __sub__(self, other):
        a, b = self._align(other)
        return a + (-b)

    def __rsub__(self, other):
        a, b = self._align(other)
        return b + (-a)

    def __mul__(self, other):
        try:
            a, b = self._align(other)
        except TypeError:
            return NotImplemented
        if not a.num or not b.num:
            return MotivicValue({}, (), a.q, _canon=True)
        if len(b.num) == 1 and not b.den:
            (m2, c2), = b.num.items()
            num = {_mono_mul(m, m2): c * c2 for m, c in a.num.items()}
            return MotivicValue(num, a.den, a.q, _canon=True)
        if len(a.num) == 1 and not a.den:
            return b * a
        d = dict(a.den)
        for f, m in b.den:
            d[f] = d.get(f, 0) + m
        return MotivicValue(_poly_mul(a.num, b.num), tuple(d.items()), a.q)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            raise ValueError("negative powers are not supported in the restricted ring")
        r = MotivicValue.const(1, self.q)
        for _ in range(e):
            r = r * self
        return r

    def scale_monomial(self, qexp=0, t=()):
        return self * MotivicValue.monomial(1, qexp, t, self.q)

    def divide_monomial(self, qexp=0, t=()):
        t = norm_tvec(t)
        return self.scale_monomial(-qexp, tuple((j, -e) for j, e in t))

    def is_zero(self) -> bool:
        return not self.num

    def __eq__(self, other):
        if not isinstance(other, MotivicValue):
            try:
                other = MotivicValue.const(as_cyc(other), self.q)
            except (TypeError, ValueError):
                return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        raise TypeError("MotivicValue is not hashable; compare with ==")

    def tvars(self) -> set:
        out = set()
        for m in self.num:
            out.update(j for j, _ in m[1])
        for (a, b), _ in self.den:
            out.update(j for j, _ in b)
        return out

    def is_constant(self) -> bool:
        return not self.den and all(m == (0, ()) for m in self.num)

    def constant_value(self) -> Cyclotomic:
        if not self.is_constant():
            raise ValueError("value depends on q or T")
        return self.num.get((0, ()), ZERO)

    # -- evaluation ---------------------------------------------------------
    def evaluate(self, q_val=None, t_vals=None) -> Cyclotomic:
        return mv_eval(self, q_val, t_vals)

    def substitute(self, q_val=None, t_vals=None) -> "MotivicValue":
        """Partially substitute; all substituted T_j must appear only in the numerator."""
        t_vals = {int(j): as_cyc(v) for j, v in (t_vals or {}).items()}
        x = self.pin(Fraction(q_val)) if q_val is not None and self.q is None else self
        for (a, b), _ in x.den:
            if any(j in t_vals for j, _ in b):
                raise ValueError("cannot partially substitute a T_j that occurs in a denominator")
        num = {}
        for (qe, t), c in x.num.items():
            rest = []
            for j, e in t:
                if j in t_vals:
                    c = c * t_vals[j] ** e
                else:
                    rest.append((j, e))
            m = (qe, tuple(rest))
            num[m] = num.get(m, ZERO) + c
        return MotivicValue(num, x.den, x.q)

    # -- text ---------------------------------------------------------------
    def __str__(self):
        return format_mv(self)

    def __repr__(self):
        return f"MotivicValue({format_mv(self)})"


def mv_mul(x: MotivicValue, y: MotivicValue) -> MotivicValue:
    return x * y


def mv_add(x: MotivicValue, y: MotivicValue) -> MotivicValue:
    return x + y


def mv_eval(x: MotivicValue, q_val=None, t_vals=None) -> Cyclotomic:
    """Exact substitution of q and the T_j; raises PoleError on a vanishing factor."""
    t_vals = {int(j): as_cyc(v) for j, v in (t_vals or {}).items()}
    if x.q is not None:
        if q_val is not None and Fraction(q_val) != x.q:
            raise ValueError(f"value is pinned to q={x.q}")
        qv = Fraction(x.q)
    else:
        if q_val is None:
            raise ValueError("q value required for a formal value")
        qv = Fraction(q_val)
        if qv <= 1:
            raise ValueError("q must exceed 1")

    def tmono(t):
        v = ONE
        for j, e in t:
            if j not in t_vals:
                raise ValueError(f"no value for T{j}")
            tv = t_vals[j]
            if e < 0 and not tv:
                raise PoleError(f"T{j}=0 in a negative power")
            v = v * tv ** e
        return v

    num = ZERO
    for (qe, t), c in x.num.items():
        num = num + c * tmono(t) * qv ** qe
    den = ONE
    for (a, b), m in x.den:
        f = ONE - tmono(b) * qv ** a
        if not f:
            raise PoleError(f"denominator factor (1 - q^{a} T^{b}) vanishes")
        den = den * f ** m
    if den == ONE:
        return num
    return num / den


def mv_series_coeff(x: MotivicValue, var: int, k: int, rest=None) -> MotivicValue:
    """Coefficient of T_var^k in the expansion of x around T_var = 0.

    The remaining variables stay symbolic; if ``rest`` is given (a map possibly
    containing ``"q"``), they are substituted after extraction.
    """
    var = int(var)
    keep, expand = [], []
    for (a, b), m in x.den:
        bj = dict(b).get(var, 0)
        (expand if bj else keep).append(((a, b), m, bj))
    lows = [dict(t).get(var, 0) for (_, t) in x.num]
    low = min(lows) if lows else 0
    need = k - low
    # truncated series of prod 1/(1 - w T_var^bj)^m, keyed by T_var exponent
    series = {0: {(0, ()): ONE}}
    for (a, b), m, bj in expand:
        w_t = tuple((j, e) for j, e in b if j != var)
        term = {}
        i = 0
        while bj * i <= need:
            c = Cyclotomic(comb(i + m - 1, m - 1))
            if x.q is None:
                mono = (a * i, _tscale(w_t, i))
            else:
                mono = (0, _tscale(w_t, i))
                c = c * Fraction(x.q) ** (a * i)
            term[bj * i] = {mono: c}
            i += 1
        new = {}
        for d1, p1 in series.items():
            for d2, p2 in term.items():
                if d1 + d2 <= need:
                    acc = new.setdefault(d1 + d2, {})
                    _poly_add_into(acc, _poly_mul(p1, p2))
        series = new
    coeff = {}
    for (qe, t), c in x.num.items():
        e = dict(t).get(var, 0)
        d = k - e
        if d < 0 or d not in series:
            continue
        rest_t = tuple((j, ee) for j, ee in t if j != var)
        _poly_add_into(coeff, _poly_mul({(qe, rest_t): c}, series[d]))
    out = MotivicValue(coeff, tuple((f, m) for f, m, _ in keep), x.q)
    if rest:
        rest = dict(rest)
        qv = rest.pop("q", None)
        tv = {int(str(j).lstrip("T")): v for j, v in rest.items()}
        for (a, b), _ in out.den:
            if all(j in tv for j, _ in b):
                try:
                    mv_eval(MotivicValue({(0, ()): ONE}, (((a, b), 1),), out.q),
                            qv if out.q is None else None, tv)
                except PoleError:
                    raise NotExpandable(f"factor (1 - q^{a} T^{b}) vanishes at the given point")
        if qv is not None or tv:
            if all(j in tv for j in out.tvars()) and (qv is not None or out.q is not None):
                return MotivicValue.const(mv_eval(out, qv if out.q is None else None, tv), out.q)
            return out.substitute(qv, tv)
    return out


# ---------------------------------------------------------------------------
# canonical text form

def _fmt_coeff(c: Cyclotomic) -> tuple:
    """(sign, body) where body is '' for a unit coefficient."""
    if c.is_rational():
        f = c.to_fraction()
        sign = "-" if f < 0 else "+"
        f = abs(f)
        return sign, ("" if f == 1 else _fmt_frac(f))
    return "+", f"({c})"


def _fmt_mono(qe, t):
    parts = []
    if qe:
        parts.append("q" if qe == 1 else f"q^{qe}")
    for j, e in t:
        parts.append(f"T{j}" if e == 1 else f"T{j}^{e}")
    return " * ".join(parts)


def format_poly(num) -> str:
    if not num:
        return "0"
    keys = sorted(num, key=lambda m: (sum(abs(e) for _, e in m[1]), m[1], -m[0]))
    out = ""
    for idx, m in enumerate(keys):
        sign, body = _fmt_coeff(num[m])
        mono = _fmt_mono(*m)
        if body and mono:
            piece = f"{body} * {mono}"
        else:
            piece = body or mono or "1"
        if idx == 0:
            out = ("-" if sign == "-" else "") + piece
        else:
            out += f" {sign} {piece}"
    return out


def format_mv(x: MotivicValue) -> str:
    s = format_poly(x.num)
    if x.den:
        if len(x.num) > 1 or " " in s:
            s = f"({s})"
        facs = []
        for (a, b), m in x.den:
            mono = _fmt_mono(a, b)
            f = f"(1 - {mono})"
            facs.append(f if m == 1 else f"{f}^{m}")
        d = " * ".join(facs)
        s = f"{s} / {d}" if len(facs) == 1 else f"{s} / ({d})"
    if x.q is not None:
        s += f" @ q={x.q}"
    return s


# ---------------------------------------------------------------------------
# parsing the canonical text form

import re as _re

_TOKEN = _re.compile(r"\s*(?:(\d+)|(q|T\d+|z\d+)|(\^-?\d+)|(@\s*q\s*=\s*\d+)|(.))")


def _tokenize(text):
    from .errors import FormulaSyntaxError
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        num, name, power, pin, other = m.groups()
        start = m.start(m.lastindex)
        if num:
            out.append(("num", int(num), start))
        elif name:
            out.append(("name", name, start))
        elif power:
            out.append(("pow", int(power[1:]), start))
        elif pin:
            out.append(("pin", int(pin.split("=")[1]), start))
        elif other.strip():
            if other not in "+-*/()":
                raise FormulaSyntaxError(f"unexpected character {other!r}", text, start)
            out.append((other, other, start))
        pos = m.end()
    return out


def parse_mv(text: str) -> MotivicValue:
    """Inverse of :func:`format_mv`; accepts any expression in that vocabulary.

    Division is allowed by monomials and by products of binomials ``(1 - q^a T^b)``.
    """
    from .errors import FormulaSyntaxError
    toks = _tokenize(text)
    q = None
    if toks and toks[-1][0] == "pin":
        q = toks.pop()[1]
    i = 0

    def peek():
        return toks[i] if i < len(toks) else (None, None, len(text))

    def err(msg):
        raise FormulaSyntaxError(msg, text, peek()[2])

    def take(kind):
        nonlocal i
        if peek()[0] != kind:
            err(f"expected {kind!r}")
        i += 1
        return toks[i - 1]

    def expr():
        nonlocal i
        sign = 1
        if peek()[0] in "+-" and peek()[0] is not None:
            sign = -1 if take(peek()[0])[0] == "-" else 1
        acc = term().__mul__(MotivicValue.const(sign))
        while peek()[0] in ("+", "-"):
            op = take(peek()[0])[0]
            t = term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term():
        acc = power()
        while peek()[0] in ("*", "/"):
            op = take(peek()[0])[0]
            if op == "*":
                acc = acc * power()
            else:
                acc = _divide(acc, power(), err)
        return acc

    def power():
        base = atom()
        if peek()[0] == "pow":
            e = take("pow")[1]
            if e < 0:
                return _divide(MotivicValue.const(1), base ** (-e), err)
            return base ** e
        return base

    def atom():
        kind, val, _ = peek()
        if kind == "num":
            take("num")
            if peek()[0] == "/" and i + 1 < len(toks) and toks[i + 1][0] == "num":
                take("/")
                return MotivicValue.const(Fraction(val, take("num")[1]))
            return MotivicValue.const(val)
        if kind == "name":
            take("name")
            if val == "q":
                if peek()[0] == "pow":
                    return MotivicValue.q_power(take("pow")[1])
                return MotivicValue.q_power(1)
            e = take("pow")[1] if peek()[0] == "pow" else 1
            if val[0] == "T":
                return MotivicValue.T(int(val[1:]), e)
            return MotivicValue.const(Cyclotomic.root(int(val[1:]), e))
        if kind == "(":
            take("(")
            v = expr()
            take(")")
            return v
        err("expected a number, q, T<j>, z<n> or '('")

    if not toks:
        raise FormulaSyntaxError("empty value", text, 0)
    v = expr()
    if i != len(toks):
        err("trailing input")
    return v.pin(q) if q is not None else v


def _divide(a: MotivicValue, b: MotivicValue, err) -> MotivicValue:
    if b.den:
        err("cannot divide by a fraction")
    if len(b.num) == 1:
        (qe, t), c = next(iter(b.num.items()))
        if not c:
            err("division by zero")
        inv = MotivicValue({(-qe, tuple((j, -e) for j, e in t)): c.inverse()}, (), b.q)
        return a * inv
    factors = _binomial_factors(b)
    if factors is None:
        err("denominator is not a product of binomials 1 - q^a T^b")
    return a * MotivicValue({(0, ()): ONE}, tuple(factors), a.q)


def _binomial_factors(b: MotivicValue):
    """Factor a polynomial as prod (1 - q^a T^b)^m with admissible binomials, trying
    the monomials that occur in it.  Returns None when this fails."""
    rest = b
    found = {}
    for _ in range(64):
        if len(rest.num) == 1 and rest.num.get((0, ())) == ONE:
            return [(k, m) for k, m in found.items()]
        cands = sorted((m for m in rest.num if m != (0, ())), key=lambda m: (sum(e for _, e in m[1]), -m[0]))
        for qe, t in cands:
            if qe >= 0 or any(e < 0 for _, e in t):
                continue
            key = (qe, t)
            trial = rest * MotivicValue({(0, ()): ONE}, ((key, 1),), rest.q)
            if not trial.den:
                found[key] = found.get(key, 0) + 1
                rest = trial
                break
        else:
            return None
    return None
