"""Brute-force integration used to validate the symbolic engine.

Valued-field coordinates are integrated by adaptive ball refinement: a ball
not containing any cell center is split until every cell's ord/ac data and
every psi argument are constant on it; a ball around a center is written as
a sum of spheres whose sums satisfy a linear recurrence, which gives an exact
tail.  Value-group coordinates are summed over a window with the same tail
recognition on both sides.  All arithmetic is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Optional

from .cfun import CFunction, _el, evaluate
from .characters import all_characters, standard_family
from .errors import UnsupportedClass, DepthTooLarge, EnumerationCap, Mismatch, WindowInsufficient
from .exactnum import ONE, ZERO, Cyclotomic, MotivicValue, mv_eval
from .localfield import LAURENT, PADIC, LocalFieldElement, StructureConfig
from .presburger import FALSE, LinearTerm, _decompose, substitute_many


@dataclass(frozen=True)
class TruncationSpec:
    level: int = 0                  # minimal refinement level for valued-field balls
    window: tuple = ()              # ((vg name, lo, hi), ...)
    T: tuple = ()                   # ((j, value), ...)
    lo_ord: Optional[int] = None    # support region pi^lo_ord O; inferred when None
    tail_terms: int = 12
    slide: int = 24                 # extra terms absorbed before a tail must be recurrent
    max_calls: int = 2_000_000

    @classmethod
    def make(cls, level=0, window=None, T=None, **kw):
        w = tuple((k, lo, hi) for k, (lo, hi) in (window or {}).items())
        t = tuple((int(str(j).lstrip("T")), Fraction(v) if not isinstance(v, Cyclotomic) else v)
                  for j, v in (T or {}).items())
        return cls(level, w, t, **kw)

    @property
    def t_values(self):
        return dict(self.T)


# ---------------------------------------------------------------------------
# exact tails

def _solve(A, b):
    """Gaussian elimination over the cyclotomic field; None if singular."""
    n = len(A)
    M = [list(row) + [v] for row, v in zip(A, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col]), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        inv = M[col][col].inverse()
        M[col] = [x * inv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col]:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[i][n] for i in range(n)]


def recurrence_sum(seq):
    """Sum of the infinite sequence starting with ``seq``, assuming it satisfies the
    shortest linear recurrence consistent with the data (verified on two extra terms).

    Returns None when no recurrence of admissible order is found.
    """
    seq = [x if isinstance(x, Cyclotomic) else Cyclotomic(x) for x in seq]
    if all(not x for x in seq):
        return ZERO
    n = len(seq)
    for L in range(1, (n - 2) // 2 + 1):
        A = [[seq[k - i] for i in range(1, L + 1)] for k in range(L, 2 * L)]
        b = [seq[k] for k in range(L, 2 * L)]
        c = _solve(A, b)
        if c is None:
            continue
        ok = all(sum((c[i - 1] * seq[k - i] for i in range(1, L + 1)), ZERO) == seq[k]
                 for k in range(2 * L, n))
        if not ok:
            continue
        Q1 = ONE - sum(c, ZERO)
        if not Q1:
            return None
        P = ZERO
        for k in range(L):
            pk = seq[k]
            for i in range(1, k + 1):
                pk = pk - c[i - 1] * seq[k - i]
            P = P + pk
        return P / Q1
    return None


# ---------------------------------------------------------------------------
# the oracle proper

class _Oracle:
    def __init__(self, F: CFunction, spec: TruncationSpec, cfg, chars):
        self.F, self.spec, self.cfg, self.chars = F, spec, cfg, chars
        self.tv = spec.t_values
        self.win = {k: (lo, hi) for k, lo, hi in spec.window}
        self.calls = 0
        self.report = []

    def run(self):
        return self._vg({}, 0)

    # innermost: residue coordinates
    def _value(self, point):
        self.calls += 1
        if self.calls > self.spec.max_calls:
            raise EnumerationCap("oracle exceeded its evaluation budget")
        v = evaluate(self.F, point, self.chars, self.cfg)
        if v.is_zero():
            return ZERO
        return mv_eval(v, self.cfg.p, self.tv)

    def _residues(self, point):
        names = [n for n, _ in self.F.res]
        if not names:
            return self._value(point)
        total = ZERO
        for combo in product(*(range(self.cfg.ring(d).size) for _, d in self.F.res)):
            pt = dict(point)
            pt.update(zip(names, combo))
            total = total + self._value(pt)
        return total

    # value-group coordinates first, so cell supports can depend on them
    def _vg(self, point, k):
        vg = self.F.vg
        if k == len(vg):
            return self.integrate(point, 0)
        v = vg[k]
        if v not in self.win:
            raise WindowInsufficient(f"no window for value-group coordinate {v}")
        lo, hi = self.win[v]
        for t in self.F.terms:
            f = self._known(t, point)
            bps = _breakpoints(f, v) if f is not None else []
            lo, hi = min([lo] + bps), max([hi] + bps)
        total = ZERO
        for w in range(lo, hi + 1):
            total = total + self._vg({**point, v: w}, k + 1)
        for side, start, step in (("upper", hi + 1, 1), ("lower", lo - 1, -1)):
            head, tail, seq = self._tail(lambda w: self._vg({**point, v: w}, k + 1), start, step)
            if tail is None:
                raise WindowInsufficient(f"{side} tail of {v} beyond {start - step} not recognized",
                                         report={"var": v, "side": side, "sequence": [str(s) for s in seq]})
            if tail:
                self.report.append(f"{side} tail of {v}: {tail}")
            total = total + head + tail
        return total

    # valued-field coordinates
    def integrate(self, point, i):
        vf = self.F.vf
        if i == len(vf):
            return self._residues(point)
        x = vf[i]
        info = self._cells(point, x, later=set(vf[i + 1:]))
        lo = self.spec.lo_ord if self.spec.lo_ord is not None else self._support(x, point)
        return self._ball(point, i, x, info, self.cfg.elem(0), lo, 0)

    def _cells(self, point, x, later):
        centers, depths, psi = [], [], []
        for t in self.F.terms:
            c = t.cell(x)
            if c is not None:
                if c.center.vars & later:
                    raise WindowInsufficient(f"cell of {x} is centered on a later coordinate")
                centers.append(c.center.value(point, self.cfg))
                depths.append(c.depth)
            b = t.g.coeff(x)
            if b is not None:
                psi.append(b)
        uniq = []
        for c in centers:
            if all(not (c - u).is_zero() for u in uniq):
                uniq.append(c)
        return {"centers": uniq, "all": list(zip(centers, depths)),
                "maxdepth": max(depths, default=0), "psi": psi}

    def _support(self, x, point):
        """Lower bound on ord(x) over the support, from cell centers and ord constraints."""
        bound = None
        for t in self.F.terms:
            c = t.cell(x)
            if c is None:
                raise WindowInsufficient(f"a term has no cell for {x}; its support is unbounded")
            vg = self._known(t, point)
            if vg is None:
                continue
            center = c.center.value(point, self.cfg)
            b = None if center.is_zero() else center.ord()
            if c.kind == 1:
                z = _zmin(vg, c.ordv)
                if z is None:
                    raise WindowInsufficient(f"support of {x} is not bounded below; pass lo_ord")
                b = z if b is None else min(b, z)
            if b is not None:
                bound = b if bound is None else min(bound, b)
        return 0 if bound is None else min(bound, 0)

    def _known(self, t, point):
        """The term's value-group condition with the coordinates fixed so far; None if it vanishes."""
        sub = {v: LinearTerm.constant(point[v]) for v in t.vg.free_vars if v in point}
        for c in t.cells:
            if c.var not in point:
                continue
            d = self.cfg.elem(point[c.var]) - c.center.value(point, self.cfg)
            if c.kind == 0:
                if not d.is_zero():
                    return None
            elif d.is_zero():
                return None
            else:
                sub[c.ordv] = LinearTerm.constant(int(d.ord()))
        f = substitute_many(t.vg, sub) if sub else t.vg
        return None if f == FALSE else f

    def _ball(self, point, i, x, info, c0, m, guard):
        if guard > 400:
            raise WindowInsufficient("refinement too deep while resolving a ball")
        inside = [c for c in info["centers"] if (c - c0).is_zero() or (c - c0).ord() >= m]
        if not inside:
            if m >= self.spec.level and self._resolved(info, c0, m):
                return self.integrate({**point, x: c0}, i + 1) * Cyclotomic(Fraction(self.cfg.p) ** (-m))
            return self._split(point, i, x, info, c0, m, guard)
        c = inside[0]
        others = [(u - c).ord() for u in inside[1:]]
        z_sep = max(others, default=m - 1) + 1
        z_sep = max(z_sep, m, self.spec.level, self._psi_level(info), self._last_break(point, x, c) + 1)
        total = ZERO
        for z in range(m, z_sep):
            total = total + self._sphere(point, i, x, info, c, z, guard)
        head, tail, seq = self._tail(lambda z: self._sphere(point, i, x, info, c, z, guard), z_sep, 1)
        if tail is None:
            raise WindowInsufficient(f"sphere sums around {c} not recognized",
                                     report={"var": x, "center": str(c), "sequence": [str(s) for s in seq]})
        return total + head + tail

    def _tail(self, term, start, step):
        """Sum term(start), term(start + step), ... as (direct head, recognized tail, last window).

        The window slides forward while the sequence is not yet recurrent, which
        absorbs finitely many irregular terms (breakpoints of ord conditions)."""
        K = self.spec.tail_terms
        seq = [term(start + step * i) for i in range(K)]
        head = ZERO
        nxt = start + step * K
        for _ in range(self.spec.slide):
            tail = recurrence_sum(seq)
            if tail is not None:
                return head, tail, seq
            head = head + seq.pop(0)
            seq.append(term(nxt))
            nxt += step
        return head, None, seq

    def _last_break(self, point, x, c):
        """Largest constant breakpoint of ord(x - c) among the terms with a cell at c."""
        last = -10 ** 9
        for t in self.F.terms:
            cl = t.cell(x)
            if cl is None or cl.kind != 1 or not (cl.center.value(point, self.cfg) - c).is_zero():
                continue
            f = self._known(t, point)
            if f is not None:
                last = max([last] + _breakpoints(f, cl.ordv))
        return last

    def _psi_level(self, info):
        return max((1 - b.ord() for b in info["psi"]), default=0)

    def _sphere(self, point, i, x, info, c, z, guard):
        total = ZERO
        for u in range(1, self.cfg.p):
            total = total + self._ball(point, i, x, info, c + LocalFieldElement.pi_power(self.cfg, z, u),
                                       z + 1, guard + 1)
        return total

    def _split(self, point, i, x, info, c0, m, guard):
        total = ZERO
        for d in range(self.cfg.p):
            total = total + self._ball(point, i, x, info, c0 + LocalFieldElement.pi_power(self.cfg, m, d),
                                       m + 1, guard + 1)
        return total

    def _resolved(self, info, c0, m):
        for c, t in info["all"]:
            d = c0 - c
            if d.is_zero() or d.ord() + t + 1 > m:
                return False
        return all(b.ord() + m >= 1 for b in info["psi"])


def _breakpoints(formula, v):
    out = []
    for _, pr in _decompose(formula, v):
        for e in (pr.start, pr.end):
            if e is not None and e.is_const():
                out.append(int(e.const))
    return out


def _zmin(formula, v):
    lo = None
    for g, pr in _decompose(formula, v):
        if pr.start is None or not pr.start.is_const():
            return None
        s = int(pr.start.const)
        lo = s if lo is None else min(lo, s)
    return lo


def truncated_integral(F: CFunction, spec: TruncationSpec, cfg: StructureConfig, chars=None) -> Cyclotomic:
    chars = chars or standard_family(cfg)
    return _Oracle(F, spec, cfg, chars).run()


def ball_integral(F: CFunction, center, m: int, cfg, chars=None, spec=None) -> Cyclotomic:
    """Exact integral of a one-variable function over center + pi^m O."""
    if len(F.vf) != 1 or F.vg:
        raise UnsupportedClass("ball integrals take functions of one valued-field variable alone")
    o = _Oracle(F, spec or TruncationSpec(), cfg, chars or standard_family(cfg))
    x = F.vf[0]
    return o._ball({}, 0, x, o._cells({}, x, set()), _el(cfg, center), m, 0)


@dataclass
class CompareReport:
    equal: bool
    symbolic: Cyclotomic
    oracle: Cyclotomic
    notes: list = field(default_factory=list)

    def __bool__(self):
        return self.equal


def compare(symbolic, F: CFunction, spec: TruncationSpec, cfg, chars=None) -> CompareReport:
    """Exact comparison of a symbolic integral (value or result) against the oracle."""
    chars = chars or standard_family(cfg)
    sym = symbolic.value(chars) if hasattr(symbolic, "value") and not isinstance(symbolic, MotivicValue) else symbolic
    s = mv_eval(sym, cfg.p, spec.t_values) if isinstance(sym, MotivicValue) else Cyclotomic(sym)
    orc = _Oracle(F, spec, cfg, chars)
    o = orc.run()
    if s != o:
        raise Mismatch(f"symbolic {s} differs from oracle {o}", symbolic=s, oracle=o, spec=spec)
    return CompareReport(True, s, o, orc.report)


def partial_sum_with_tail(a: int, b: int, c, W: int, q: int, T):
    """Partial sum of x^a q^(bx) prod T_j^(c_j x) for x = 0..W and an exact tail majorant.

    T values must be nonnegative rationals; the majorant is valid when the
    tail ratio bound is below 1 (otherwise None is returned for the bound).
    """
    r = Fraction(q) ** b
    for cj, tj in zip(c, T):
        r *= Fraction(tj) ** cj
    partial = sum((Fraction(x) ** a if (x or a) else Fraction(1)) * r ** x for x in range(W + 1))
    rho = (Fraction(W + 2, W + 1) ** a) * r
    if rho >= 1:
        return partial, None
    bound = Fraction(W + 1) ** a * r ** (W + 1) / (1 - rho)
    return partial, bound


# ---------------------------------------------------------------------------
# transfer between backends

@dataclass
class TransferReport:
    equal: bool
    values: list


def _check_depth_zero(F: CFunction, cfg):
    for t in F.terms:
        for r in t.rvars:
            if r.depth > 0:
                raise DepthTooLarge(f"residue coordinate {r.name} has depth {r.depth}")
        for c in t.cells:
            if c.depth > 0:
                raise DepthTooLarge(f"cell of {c.var} has depth {c.depth}")
            b = t.g.coeff(c.var)
            if b is not None and c.center.const is not None and not c.center.const.is_zero() \
                    and b.ord() + c.center.const.ord() < 0:
                raise DepthTooLarge("psi argument leaves O through a cell center")
        for k, _ in t.h:
            if cfg.depth(k) > 0:
                raise DepthTooLarge(f"character slot {k} has depth {cfg.depth(k)}")
        for e, _, d in t.g.lifts:
            if d > 0 or e.ord() < 0:
                raise DepthTooLarge("psi argument depends on residues beyond depth 0")
        for _, m in t.g.tables:
            for v in m.values():
                if _el(cfg, v).obar_ord() < 0:
                    raise DepthTooLarge("psi table value outside O")
        for w, b in t.g.lin:
            if b.ord() < 0:
                raise DepthTooLarge(f"psi coefficient of {w} has negative valuation")
        if t.g.const is not None and not t.g.const.is_zero() and t.g.const.ord() < 0:
            raise DepthTooLarge("psi constant outside O")


def transfer_check(builder, p: int, order=None, lam=None) -> TransferReport:
    """Integrate ``builder(cfg)`` over Q_p and F_p((t)) under every depth-0 character choice."""
    from .integrate import integral_value
    cfgs = [StructureConfig(p, PADIC, lam=lam or ()), StructureConfig(p, LAURENT, lam=lam or ())]
    Fs = [builder(c) for c in cfgs]
    for F, c in zip(Fs, cfgs):
        _check_depth_zero(F, c)
    keys = sorted({k for t in Fs[0].terms for k, _ in t.h})
    values = []
    groups = [list(zip(all_characters(cfgs[0], 0), all_characters(cfgs[1], 0))) for _ in keys]
    for combo in product(*groups):
        vals = []
        for idx, (F, c) in enumerate(zip(Fs, cfgs)):
            ch = standard_family(c)
            for k, pair in zip(keys, combo):
                ch = ch.with_chi(k, pair[idx])
            vals.append(integral_value(F, c, ch, order))
        if vals[0] != vals[1]:
            raise Mismatch(f"backends disagree: {vals[0]} vs {vals[1]}", symbolic=vals[0], oracle=vals[1])
        values.append(vals[0])
    return TransferReport(True, values)
