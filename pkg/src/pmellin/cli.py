"""Command-line front end.

A problem file is JSON with ``"format": 1`` and the blocks ``config``,
``characters``, ``definitions`` and ``tasks``.  Each task names a command and
the definitions it uses; results are printed in the canonical value syntax.
"""
from __future__ import annotations

import argparse
import ast
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from . import cfun as cf
from .characters import AdditiveCharacter, CharacterFamily, MultiplicativeCharacter
from .errors import FormulaSyntaxError, Mismatch, MotivicError
from .exactnum import MotivicValue, format_mv, mv_eval, mv_series_coeff, parse_mv
from .expsum import P_ONE, p_from_lt, p_mul
from .integrate import (SchwartzFunction, integrate_iterated, mellin, mellin_invert_at,
                        schwartz_from_cfunction)
from .localfield import LAURENT, PADIC, StructureConfig, parse_element
from .oracle import TruncationSpec, compare, transfer_check
from .presburger import TRUE, parse_formula, parse_linear_term

FORMAT = 1


class InputError(MotivicError):
    exit_code = 2


# ---------------------------------------------------------------------------
# parsing helpers

def _config(block: dict, args) -> StructureConfig:
    p = args.prime if args.prime is not None else block.get("p")
    if p is None:
        raise InputError("config.p is required (or pass --prime)")
    lam = dict(block.get("lambda", {}))
    for item in args.lam or ():
        k, _, v = item.partition("=")
        lam[k.strip()] = int(v)
    return StructureConfig(int(p), args.backend or block.get("backend", PADIC),
                           args.precision or block.get("precision", 24), tuple(sorted(lam.items())),
                           int(block.get("enum_cap", 10 ** 7)), int(block.get("table_cap", 3125)))


def element(text, cfg):
    """Field literal; ``pi`` stands for the uniformizer of either backend."""
    if isinstance(text, (int, Fraction)):
        return cfg.elem(text)
    text = str(text).strip()
    if "pi" in text:
        text = text.replace("pi", "t" if cfg.backend == LAURENT else str(cfg.p))
    return parse_element(text, cfg)


def value(text) -> MotivicValue:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return MotivicValue.const(Fraction(text))
    return parse_mv(str(text))


def _rx(text):
    try:
        node = ast.parse(str(text), mode="eval").body
    except SyntaxError as e:
        raise FormulaSyntaxError(f"bad residue expression: {e.msg}", str(text), (e.offset or 1) - 1)
    return _rx_node(node, str(text))


def _rx_node(n, text):
    if isinstance(n, ast.Name):
        return cf.rx_var(n.id)
    if isinstance(n, ast.Constant) and isinstance(n.value, int):
        return cf.rx_const(n.value)
    if isinstance(n, ast.UnaryOp) and isinstance(n.op, ast.USub):
        return cf.rx_neg(_rx_node(n.operand, text))
    if isinstance(n, ast.BinOp):
        a, b = _rx_node(n.left, text), _rx_node(n.right, text)
        if isinstance(n.op, ast.Add):
            return cf.rx_add(a, b)
        if isinstance(n.op, ast.Sub):
            return cf.rx_add(a, cf.rx_neg(b))
        if isinstance(n.op, ast.Mult):
            return cf.rx_mul(a, b)
    if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and len(n.args) == 2:
        d = n.args[1]
        if isinstance(d, ast.Constant):
            if n.func.id == "res":
                return cf.rx_res(_rx_node(n.args[0], text), d.value)
            if n.func.id == "lit" and isinstance(n.args[0], ast.Constant):
                return cf.rx_lit(n.args[0].value, d.value)
    raise FormulaSyntaxError("unsupported residue expression", text, getattr(n, "col_offset", 0))


def _affine(spec, cfg):
    if isinstance(spec, dict):
        const = element(spec.get("const", 0), cfg)
        lin = cf._clean_lin({w: element(c, cfg) for w, c in spec.get("linear", {}).items()})
        return cf.Affine(None if const.is_zero() else const, lin)
    return cf.aff_const(cfg, element(spec, cfg))


def _subset(s):
    if s in (None, "full"):
        return cf.FULL
    if s == "units":
        return cf.UNITS
    return frozenset(int(x) for x in s)


def _gexpr(spec, cfg):
    if not spec:
        return cf.GExpr()
    g = cf.g_linear(cfg, {w: element(c, cfg) for w, c in spec.get("linear", {}).items()},
                    element(spec["const"], cfg) if "const" in spec else None)
    lifts = tuple((element(l["coeff"], cfg), _rx(l["expr"]), int(l.get("depth", 0)))
                  for l in spec.get("lifts", ()))
    tables = tuple((tuple(tb["keys"]),
                    {tuple(int(x) for x in str(k).split(",")): element(v, cfg)
                     for k, v in tb["values"].items()})
                   for tb in spec.get("tables", ()))
    return cf.GExpr(g.lin, g.const, lifts, tables)


def _generic(spec, cfg) -> cf.CFunction:
    terms = []
    for tspec in spec.get("terms", ()):
        coeff = value(tspec.get("coeff", 1))
        for pf in tspec.get("prefactors", ()):
            b = {int(str(k).lstrip("T")): int(v) for k, v in pf.get("b", {}).items()}
            coeff = coeff * MotivicValue.geometric(int(pf["a"]), b, int(pf.get("mult", 1)))
        gen = tspec.get("generator", {})
        dom = gen.get("domain", {})
        cells = []
        for c in dom.get("cells", ()):
            params = c.get("params", {})
            cells.append(cf.Cell(c["var"], _affine(c.get("center", 0), cfg), int(c.get("depth", 0)),
                                 int(c.get("type", 1)), params.get("residue", ""), params.get("presburger", "")))
        rvars = tuple(cf.RVar(r["name"], int(r.get("depth", 0)), _subset(r.get("subset")), bool(r.get("bound")))
                      for r in dom.get("residue", ()))
        vg = parse_formula(dom["presburger"]) if dom.get("presburger") else TRUE
        poly = dict(P_ONE)
        for a in gen.get("alpha", ()):
            poly = p_mul(poly, p_from_lt(parse_linear_term(str(a))))
        gamma = {int(str(k).lstrip("T")): parse_linear_term(str(v)) for k, v in gen.get("gamma", {}).items()}
        h = tuple((hh["key"], _rx(hh["expr"])) for hh in gen.get("h", ()))
        terms.append(cf.make_term(coeff, poly, parse_linear_term(str(gen.get("beta", "0"))), gamma, vg,
                                  cells, rvars, (), _gexpr(gen.get("g"), cfg), h))
    res = tuple((r[0], int(r[1])) for r in spec.get("res", ()))
    return cf.CFunction(tuple(terms), tuple(spec.get("vf", ())), tuple(spec.get("vg", ())), res)


def build_function(spec, defs, cfg) -> cf.CFunction:
    """A definition is a builder call, a combinator over other definitions, or a term list."""
    if isinstance(spec, str):
        if spec not in defs:
            raise InputError(f"unknown function {spec!r}")
        return build_function(defs[spec], defs, cfg)
    if "terms" in spec:
        return _generic(spec, cfg)
    if "builder" in spec:
        a = dict(spec.get("args", {}))
        b = spec["builder"]
        if b == "phi_alpha":
            return cf.phi_alpha(int(a.get("alpha", 0)), int(a.get("n", 1)), cfg, a.get("names"))
        if b == "indicator_ball":
            return cf.indicator_ball(element(a.get("center", 0), cfg), int(a["radius"]), cfg, a.get("var", "x"))
        if b == "indicator_sphere":
            return cf.indicator_sphere(element(a.get("center", 0), cfg), int(a["z"]), cfg, a.get("var", "x"))
        if b == "norm_power":
            na = a.get("T", a.get("j", 1))
            return cf.norm_power(int(str(na).lstrip("T")), cfg, a.get("var", "x"), int(a.get("depth", 0)),
                                 a.get("zmin"))
        if b == "schwartz_from_table":
            table = {int(k): value(v) for k, v in a["table"].items()}
            return cf.schwartz_from_table(int(a["level"]), table, cfg, a.get("var", "x"),
                                          int(a.get("scale_exp", 0)))
        if b == "residue_indicator":
            return cf.residue_indicator(a["name"], int(a.get("depth", 0)), _subset(a.get("subset")))
        raise InputError(f"unknown builder {b!r}")
    if "product" in spec:
        parts = [build_function(s, defs, cfg) for s in spec["product"]]
        out = parts[0]
        for g in parts[1:]:
            out = cf.mul(out, g, cfg)
        return out
    if "sum" in spec:
        parts = [build_function(s, defs, cfg) for s in spec["sum"]]
        out = parts[0]
        for g in parts[1:]:
            out = out + g
        return out
    if "scale" in spec:
        return build_function(spec["function"], defs, cfg).scale(value(spec["scale"]))
    if "psi" in spec:
        return cf.with_psi(build_function(spec["function"], defs, cfg), _gexpr(spec["psi"], cfg))
    if "drop_points" in spec:
        return cf.drop_points(build_function(spec["function"], defs, cfg), spec["drop_points"])
    raise InputError("function definition needs one of terms/builder/product/sum/scale/psi/drop_points")


def _characters(block, cfg) -> CharacterFamily:
    chis = {}
    for key, c in (block or {}).items():
        if key == "psi":
            continue
        chis[key] = MultiplicativeCharacter(cfg.p, cfg.backend, int(c.get("depth", cfg.depth(key))),
                                            tuple(int(x) for x in c["images"]))
    psi = None
    if block and "psi" in block:
        psi = AdditiveCharacter(cfg.p, cfg.backend, element(block["psi"].get("twist", 1), cfg))
    return CharacterFamily(cfg, psi, chis)


def _evals(items):
    out = {}
    for item in items or ():
        k, _, v = item.partition("=")
        k = k.strip()
        if not k.startswith("T"):
            raise InputError(f"--eval expects T<j>=value, got {item!r}")
        out[int(k[1:])] = Fraction(v.strip())
    return out


# ---------------------------------------------------------------------------
# tasks

class Problem:
    def __init__(self, data, args):
        if data.get("format") != FORMAT:
            raise InputError(f"unsupported format {data.get('format')!r}; expected {FORMAT}")
        self.args = args
        self.cfg = _config(data.get("config", {}), args)
        self.char_block = data.get("characters", {})
        self.chars = _characters(self.char_block, self.cfg)
        defs = data.get("definitions", {})
        self.defs = dict(defs.get("functions", {}))
        self.tasks = list(data.get("tasks", ()))
        self.evals = _evals(args.eval)
        for name in self.defs:
            build_function(name, self.defs, self.cfg)      # validate before computing

    def fn(self, ref, cfg=None):
        return build_function(ref, self.defs, cfg or self.cfg)

    def run_task(self, task):
        cmd = task.get("command")
        handler = getattr(self, "_" + str(cmd).replace("-", "_"), None)
        if handler is None:
            raise InputError(f"unknown command {cmd!r}")
        return handler(task)

    def _check(self, got: MotivicValue, task):
        if "expect" not in task:
            return True
        want = value(task["expect"])
        if got.q is not None or want.q is not None:
            q = got.q or want.q
            return mv_eval(got, q) == mv_eval(want, q)
        return got == want

    def _fmt(self, v: MotivicValue):
        s = format_mv(v)
        if self.evals:
            try:
                s += f"  [at {', '.join(f'T{j}={x}' for j, x in sorted(self.evals.items()))}, q={self.cfg.p}: " \
                     f"{mv_eval(v, self.cfg.p, self.evals)}]"
            except MotivicError as e:
                s += f"  [evaluation failed: {e}]"
        return s

    def _integrate(self, task):
        F = self.fn(task["function"])
        res = integrate_iterated(F, task.get("order"), self.cfg, task.get("verify_order"), self.chars)
        if not res.integrable:
            return {"command": "integrate", "integrable": False, "witness": repr(res.witness), "ok": False,
                    "text": f"not integrable: {res.witness}"}
        v = res.value(self.chars)
        ok = self._check(v, task)
        return {"command": "integrate", "value": format_mv(v), "ok": ok, "text": self._fmt(v)}

    def _slots(self, task):
        return [(int(str(s.get("T", 1)).lstrip("T")), s.get("lambda", "0"), s.get("var", "x"))
                for s in task.get("slots", [{"T": 1, "lambda": "0", "var": "x"}])]

    def _mellin(self, task):
        F = self.fn(task["function"])
        M = mellin(F, self._slots(task), self.cfg, self.chars)
        lines, comps = [], {}
        for chis, v in sorted(M.items(), key=lambda kv: [c.images for c in kv[0]]):
            label = ";".join(",".join(str(i) for i in c.images) for c in chis)
            comps[label] = format_mv(v)
            lines.append(f"chi=({label}): {self._fmt(v)}")
        ok = True
        if "expect_trivial" in task:
            ok = M.trivial() == value(task["expect_trivial"])
        if task.get("expect_nontrivial_zero"):
            ok = ok and all(v.is_zero() for v in M.nontrivial().values())
        return {"command": "mellin", "components": comps, "ok": ok, "text": "\n".join(lines)}

    def _points(self, task, cfg):
        return [[element(x, cfg) for x in (pt if isinstance(pt, list) else [pt])] for pt in task.get("points", ())]

    def _fourier(self, task):
        F = self.fn(task["function"])
        S = F if isinstance(F, SchwartzFunction) else schwartz_from_cfunction(F, self.cfg)
        Fh = S.fourier()
        names = list(F.vf)
        lines, ok = [], True
        target = None
        if "expect_function" in task:
            target = self.fn(task["expect_function"])
            scale = value(task.get("expect_scale", 1))
        for pt in self._points(task, self.cfg):
            got = Fh.evaluate(pt, self.chars.psi)
            line = f"F^({', '.join(str(x) for x in pt)}) = {self._fmt(got)}"
            if target is not None:
                want = cf.evaluate(target, dict(zip(names, pt)), self.chars, self.cfg) * scale
                good = got.pin(self.cfg.p) == want.pin(self.cfg.p)
                ok = ok and good
                line += "" if good else f"  expected {format_mv(want)}"
            lines.append(line)
        if not lines:
            lines = [f"{format_mv(c)} * " + " * ".join(
                f"1[{w.a} + pi^{w.m} O] psi({w.b} x{i + 1})" for i, w in enumerate(ws)) for c, ws in Fh.terms]
        return {"command": "fourier", "ok": ok, "text": "\n".join(lines)}

    def _series(self, task):
        v = value(task["value"]) if "value" in task else \
            integrate_iterated(self.fn(task["function"]), task.get("order"), self.cfg).value(self.chars)
        j = int(str(task.get("var", "T1")).lstrip("T"))
        out = []
        for k in range(int(task.get("from", 0)), int(task.get("to", task.get("k", 0))) + 1):
            c = mv_series_coeff(v, j, k)
            out.append((k, c))
        ok = True
        if "expect" in task:
            ok = out[-1][1] == value(task["expect"])
        text = "\n".join(f"[T{j}^{k}] {self._fmt(c)}" for k, c in out)
        return {"command": "series", "coefficients": {str(k): format_mv(c) for k, c in out}, "ok": ok,
                "text": text}

    def _invert_mellin(self, task):
        F = self.fn(task["function"])
        slots = self._slots(task)
        M = mellin(F, slots, self.cfg, self.chars)
        lines, ok = [], True
        names = [v for _, _, v in slots]
        for pt in self._points(task, self.cfg):
            delta = [x.ord() for x in pt]
            xi = [x.ac(self.cfg.depth(k)) for x, (_, k, _) in zip(pt, slots)]
            got = mellin_invert_at(M, delta, xi)
            want = cf.evaluate(F, dict(zip(names, pt)), self.chars, self.cfg)
            good = got.pin(self.cfg.p) == want.pin(self.cfg.p)
            ok = ok and good
            lines.append(f"F({', '.join(str(x) for x in pt)}) = {format_mv(got)}"
                         + ("" if good else f"  but direct evaluation gives {format_mv(want)}"))
        return {"command": "invert-mellin", "ok": ok, "text": "\n".join(lines)}

    def _oracle_compare(self, task):
        F = self.fn(task["function"])
        tr = task.get("truncation", {})
        T = {int(str(k).lstrip("T")): Fraction(v) for k, v in tr.get("T", {}).items()} or self.evals
        spec = TruncationSpec.make(int(tr.get("level", 0)), {k: tuple(v) for k, v in tr.get("window", {}).items()},
                                   T, lo_ord=tr.get("lo_ord"))
        res = integrate_iterated(F, task.get("order"), self.cfg)
        try:
            rep = compare(res, F, spec, self.cfg, self.chars)
        except Mismatch as e:
            return {"command": "oracle-compare", "ok": False, "symbolic": str(e.symbolic),
                    "oracle": str(e.oracle), "text": f"MISMATCH symbolic {e.symbolic} oracle {e.oracle}"}
        return {"command": "oracle-compare", "ok": True, "symbolic": str(rep.symbolic), "oracle": str(rep.oracle),
                "text": f"equal: {rep.oracle}"}

    def _transfer_check(self, task):
        ref = task["function"]
        lam = self.cfg.lam
        rep = transfer_check(lambda c: self.fn(ref, c), self.cfg.p, task.get("order"), lam)
        vals = sorted({format_mv(v) for v in rep.values})
        return {"command": "transfer-check", "ok": rep.equal, "values": vals,
                "text": f"equal over Q_{self.cfg.p} and F_{self.cfg.p}((t)): {'; '.join(vals)}"}


def _run_one(problem, idx, task):
    try:
        return problem.run_task(task)
    except MotivicError as e:
        return {"command": task.get("command"), "ok": False, "error": type(e).__name__, "exit": e.exit_code,
                "text": f"error: {type(e).__name__}: {e}"}
    except (KeyError, ValueError, TypeError) as e:
        return {"command": task.get("command"), "ok": False, "error": type(e).__name__, "exit": 2,
                "text": f"error: {type(e).__name__}: {e}"}


def run(path, args) -> int:
    try:
        with open(path) as fh:
            text = fh.read()
        data = json.loads(text)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as e:
        print(f"error: {path}:{e.lineno}:{e.colno}: {e.msg}", file=sys.stderr)
        return 2
    try:
        problem = Problem(data, args)
    except MotivicError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except (KeyError, ValueError, TypeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    tasks = problem.tasks
    only = getattr(args, "command", None)
    if only:
        tasks = [t for t in tasks if t.get("command") == only]
    if args.threads and args.threads > 1:
        with ThreadPoolExecutor(args.threads) as ex:
            results = list(ex.map(lambda it: _run_one(problem, *it), enumerate(tasks)))
    else:
        results = [_run_one(problem, i, t) for i, t in enumerate(tasks)]
    code = 0
    for r in results:
        if not r["ok"]:
            code = max(code, r.get("exit", 1))
    if args.json:
        out = [{k: v for k, v in r.items() if k != "text"} for r in results]
        print(json.dumps({"format": FORMAT, "results": out}, indent=2, sort_keys=True))
    else:
        for i, (t, r) in enumerate(zip(tasks, results), 1):
            fn = t.get("function")
            name = t.get("name") or (fn if isinstance(fn, str) else "")
            status = "ok" if r["ok"] else "FAIL"
            print(f"[{i}] {t.get('command')} {name} ({status})")
            for line in r["text"].splitlines():
                print(f"    {line}")
    return code


COMMANDS = ("integrate", "mellin", "fourier", "series", "invert-mellin", "oracle-compare", "transfer-check")


def _flags(ap, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    ap.add_argument("--prime", type=int, default=d(None))
    ap.add_argument("--backend", choices=(PADIC, LAURENT), default=d(None))
    ap.add_argument("--precision", type=int, default=d(None))
    ap.add_argument("--lambda", dest="lam", action="append", metavar="K=V", default=d(None))
    ap.add_argument("--eval", action="append", metavar="T1=1/2", default=d(None))
    ap.add_argument("--json", action="store_true", default=d(False))
    ap.add_argument("--threads", type=int, default=d(1))


def build_parser():
    ap = argparse.ArgumentParser(prog="pmellin", description="Exact p-adic and motivic integration.")
    _flags(ap)
    common = argparse.ArgumentParser(add_help=False)
    _flags(common, defaults=False)
    sub = ap.add_subparsers(dest="command")
    run_p = sub.add_parser("run", parents=[common], help="run every task in a problem file")
    run_p.add_argument("file")
    for c in COMMANDS:
        sp = sub.add_parser(c, parents=[common], help=f"run the {c} tasks of a problem file")
        sp.add_argument("file")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if not args.command:
        ap.print_help()
        return 2
    if args.command == "run":
        args.command = None
    return run(args.file, args)


if __name__ == "__main__":
    sys.exit(main())
