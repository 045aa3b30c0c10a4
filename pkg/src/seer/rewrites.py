"""Rewrite catalog: internal pattern rules and external control-flow passes.

Internal rules are width-generic pattern/template pairs over the datapath
and gate operators, each exact under two's-complement wraparound (side
conditions guard the few that need them).  External rules wrap whole-AST
transformations: a trigger pattern locates a candidate e-class, an
analysis-friendly extraction materializes a concrete subtree, the pass
transforms it (or rejects), and the result is unioned back.

Loop fusion's internal dependence check deliberately accepts only affine
index expressions, mirroring what polyhedral-based loop passes can see; a
bit-level index like (i<<1)+i is rejected as unknown even though exact
enumeration could resolve it.  The standalone dependence_test below is the
stronger replacement used everywhere else, falling back to exact
small-domain enumeration before giving up.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import ir, sched
from .egraph import ENode, Justification, PApp, PVar, head_to_term
from .ir import (Block, CallFunc, Const, For, If, IntType, Load, Op, Seq,
                 Store, Var, mask)

I32 = IntType(32, True)

ENUM_LIMIT = 1 << 16


class PassReject(Exception):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


# ---------------------------------------------------------------------------
# Cost functions
# ---------------------------------------------------------------------------

ANALYSIS_OP_COST = {
    "add": 1, "sub": 1, "mul": 2,
    "shl": 100, "shr": 100, "and": 100, "or": 100, "xor": 100, "not": 100,
    "select": 50,
}


def analysis_cost(enode):
    """Low cost for affine-friendly arithmetic, high for bit-level tricks.

    Used when handing subtrees to external passes, so loop analyses see the
    most analyzable equivalent form.
    """
    tag = enode.tag
    if tag in ("const", "var"):
        return 0
    if tag == "op":
        return ANALYSIS_OP_COST.get(enode.head[1], 10)
    return 10


def size_cost(enode):
    return 1


# ---------------------------------------------------------------------------
# Templates (right-hand sides)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RVar:
    name: str


@dataclass(frozen=True, slots=True)
class RApp:
    tag: str
    kind: str | None = None
    children: tuple = ()


@dataclass(frozen=True, slots=True)
class RConst:
    fn: object  # (consts, width, signed) -> int


def _instantiate_graph(tmpl, g, m, consts):
    if isinstance(tmpl, RVar):
        return m.get(tmpl.name)
    if isinstance(tmpl, RConst):
        return g.add(Const(tmpl.fn(consts, m.width(), m.signed()),
                           IntType(m.width(), m.signed())))
    kids = tuple(_instantiate_graph(c, g, m, consts) for c in tmpl.children)
    if tmpl.tag == "op":
        head = ("op", tmpl.kind, m.width(), m.signed())
    elif tmpl.tag == "seq":
        head = ("seq",)
    else:
        raise ValueError(f"unsupported template tag {tmpl.tag!r}")
    return g.add_enode(ENode(head, kids))


def template_term(tmpl, width, signed, bindings, consts=None):
    """Instantiate a template as a plain term (tests, justifications)."""
    ty = IntType(width, signed)
    if isinstance(tmpl, RVar):
        return bindings[tmpl.name]
    if isinstance(tmpl, RConst):
        return Const(tmpl.fn(consts or {}, width, signed), ty)
    kids = [template_term(c, width, signed, bindings, consts) for c in tmpl.children]
    if tmpl.tag == "op":
        return Op(tmpl.kind, ty, tuple(kids))
    if tmpl.tag == "seq":
        return Seq(kids[0], kids[1])
    raise ValueError(f"unsupported template tag {tmpl.tag!r}")


def pattern_term(pattern, width, signed, bindings):
    """Instantiate a pattern as a plain term with the given leaf bindings."""
    ty = IntType(width, signed)
    if isinstance(pattern, PVar):
        return bindings[pattern.name]
    kids = [pattern_term(c, width, signed, bindings) for c in pattern.children]
    if pattern.tag == "op":
        return Op(pattern.kind, ty, tuple(kids))
    if pattern.tag == "seq":
        return Seq(kids[0], kids[1])
    raise ValueError(f"unsupported pattern tag {pattern.tag!r}")


def pattern_vars(pattern):
    if isinstance(pattern, PVar):
        return [pattern.name]
    out = []
    if getattr(pattern, "children", None):
        for c in pattern.children:
            for v in pattern_vars(c):
                if v not in out:
                    out.append(v)
    return out


# ---------------------------------------------------------------------------
# Internal rules
# ---------------------------------------------------------------------------

@dataclass
class InternalRule:
    name: str
    set: str                     # "control" | "datapath" | "gate"
    lhs: PApp
    rhs: object
    const_vars: tuple = ()
    value_cond: object = None    # (consts, width) -> bool
    stmt_vars: tuple = ()        # vars standing for statements, not expressions
    expansive: bool = False      # grows every class; off by default
    lhs_text: str = ""
    rhs_text: str = ""
    cond_text: str = ""

    @property
    def kind(self):
        return "internal"

    def condition(self, g, m):
        consts = {}
        for v in self.const_vars:
            value = g.class_const(m.get(v))
            if value is None:
                return None
            consts[v] = value
        if self.value_cond is not None and not self.value_cond(consts, m.width()):
            return None
        return consts

    def apply(self, g, ctx=None):
        applied = 0
        for m in g.ematch(self.lhs, skip_const_interiors=True):
            if applied % 64 == 0 and g.budget_exhausted():
                break
            # A class with a known constant value needs no further shapes:
            # extraction always prefers the literal constant.
            if g.class_const(m.root) is not None:
                continue
            consts = self.condition(g, m)
            if consts is None:
                continue
            new_id = _instantiate_graph(self.rhs, g, m, consts)
            root = g.find(m.root)
            if g.find(new_id) == root:
                continue
            w, s = self._match_type(m)
            bindings = {name: g.rep_term(cls) for name, cls in m.subst}
            why = Justification(
                self.name, root,
                before=pattern_term(self.lhs, w, s, bindings),
                after=template_term(self.rhs, w, s, bindings, consts))
            g.union(root, new_id, why)
            applied += 1
        return applied

    def _match_type(self, m):
        if m.root_node.tag == "op":
            return m.width(), m.signed()
        return 32, True  # statement-level rules (seq) carry no width


def _vc(fn):
    return fn


def _rule(name, set_, lhs, rhs, *, const_vars=(), value_cond=None, stmt_vars=(),
          expansive=False, lhs_text="", rhs_text="", cond_text=""):
    return InternalRule(name, set_, lhs, rhs, tuple(const_vars), value_cond,
                        tuple(stmt_vars), expansive, lhs_text, rhs_text, cond_text)


def _op(kind, *children):
    return PApp("op", kind, tuple(children))


def _rop(kind, *children):
    return RApp("op", kind, tuple(children))


A, B, C, D, E = PVar("?a"), PVar("?b"), PVar("?c"), PVar("?d"), PVar("?e")
RA, RB, RC, RD, RE = RVar("?a"), RVar("?b"), RVar("?c"), RVar("?d"), RVar("?e")


def _amt(value, w):
    return mask(value, w) % w


def datapath_rules(include_expansive=True):
    """The internal rule catalog.

    Rules come in pairs where both directions are sound and terminating;
    directions that would grow every e-class unboundedly (like x -> x*1)
    are marked expansive and excluded from the default saturation sets.
    """
    one = RConst(lambda c, w, s: 1)
    rules = [
        # statement ordering
        _rule("seq-assoc-r", "control",
              PApp("seq", None, (A, PApp("seq", None, (B, C)))),
              RApp("seq", None, (RApp("seq", None, (RA, RB)), RC)),
              stmt_vars=("?a", "?b", "?c"),
              lhs_text="(seq ?a (seq ?b ?c))", rhs_text="(seq (seq ?a ?b) ?c)"),
        _rule("seq-assoc-l", "control",
              PApp("seq", None, (PApp("seq", None, (A, B)), C)),
              RApp("seq", None, (RA, RApp("seq", None, (RB, RC)))),
              stmt_vars=("?a", "?b", "?c"),
              lhs_text="(seq (seq ?a ?b) ?c)", rhs_text="(seq ?a (seq ?b ?c))"),

        # shift/multiply interplay
        _rule("mulshl-swap-r", "datapath",
              _op("shl", _op("mul", A, B), C), _rop("mul", _rop("shl", RA, RC), RB),
              lhs_text="(shl (mul ?a ?b) ?c)", rhs_text="(mul (shl ?a ?c) ?b)"),
        _rule("mulshl-swap-l", "datapath",
              _op("mul", _op("shl", A, C), B), _rop("shl", _rop("mul", RA, RB), RC),
              lhs_text="(mul (shl ?a ?c) ?b)", rhs_text="(shl (mul ?a ?b) ?c)"),
        _rule("shl-to-mul", "datapath",
              _op("shl", A, C),
              _rop("mul", RA, RConst(lambda c, w, s: 1 << _amt(c["?c"], w))),
              const_vars=("?c",),
              lhs_text="(shl ?a ?c)", rhs_text="(mul ?a 2^?c)",
              cond_text="?c constant"),
        _rule("mul-to-shl", "datapath",
              _op("mul", A, C),
              _rop("shl", RA, RConst(lambda c, w, s: mask(c["?c"], w).bit_length() - 1)),
              const_vars=("?c",),
              value_cond=lambda c, w: mask(c["?c"], w) != 0
              and mask(c["?c"], w) & (mask(c["?c"], w) - 1) == 0,
              lhs_text="(mul ?a ?c)", rhs_text="(shl ?a log2(?c))",
              cond_text="?c constant power of two"),
        _rule("shlshl-combine", "datapath",
              _op("shl", _op("shl", A, B), C),
              _rop("shl", RA, RConst(lambda c, w, s: _amt(c["?b"], w) + _amt(c["?c"], w))),
              const_vars=("?b", "?c"),
              value_cond=lambda c, w: _amt(c["?b"], w) + _amt(c["?c"], w) < w,
              lhs_text="(shl (shl ?a ?b) ?c)", rhs_text="(shl ?a (add ?b ?c))",
              cond_text="?b, ?c constant, ?b+?c < width"),
        # Splitting needs the raw residues to stay below the width: the add
        # on the left wraps at 2^w before the shift reduces mod w, so a
        # guard on mod-w amounts alone is unsound (w=3, b=c=6 shifts by 1).
        _rule("shlshl-split", "datapath",
              _op("shl", A, _op("add", B, C)),
              _rop("shl", _rop("shl", RA, RB), RC),
              const_vars=("?b", "?c"),
              value_cond=lambda c, w: mask(c["?b"], w) + mask(c["?c"], w) < w,
              lhs_text="(shl ?a (add ?b ?c))", rhs_text="(shl (shl ?a ?b) ?c)",
              cond_text="?b, ?c constant, ?b+?c < width"),

        # multiply/add folding
        _rule("muladd-fold", "datapath",
              _op("add", _op("mul", A, B), A),
              _rop("mul", RA, _rop("add", RB, one)),
              lhs_text="(add (mul ?a ?b) ?a)", rhs_text="(mul ?a (add ?b 1))"),
        _rule("muladd-unfold", "datapath",
              _op("mul", A, _op("add", B, C)),
              _rop("add", _rop("mul", RA, RB), RA),
              const_vars=("?c",),
              value_cond=lambda c, w: mask(c["?c"], w) == 1,
              lhs_text="(mul ?a (add ?b 1))", rhs_text="(add (mul ?a ?b) ?a)",
              cond_text="?c == 1"),

        # select distribution
        _rule("select-distribute", "datapath",
              _op("select", A, _op("add", B, C), _op("add", D, E)),
              _rop("add", _rop("select", RA, RB, RD), _rop("select", RA, RC, RE)),
              lhs_text="(select ?a (add ?b ?c) (add ?d ?e))",
              rhs_text="(add (select ?a ?b ?d) (select ?a ?c ?e))"),
        _rule("select-factor", "datapath",
              _op("add", _op("select", A, B, D), _op("select", A, C, E)),
              _rop("select", RA, _rop("add", RB, RC), _rop("add", RD, RE)),
              lhs_text="(add (select ?a ?b ?d) (select ?a ?c ?e))",
              rhs_text="(select ?a (add ?b ?c) (add ?d ?e))"),

        # negation
        _rule("neg-to-not", "datapath",
              _op("neg", A), _rop("add", _rop("not", RA), one),
              lhs_text="(neg ?a)", rhs_text="(add (not ?a) 1)"),
        _rule("not-to-neg", "datapath",
              _op("add", _op("not", A), C), _rop("neg", RA),
              const_vars=("?c",),
              value_cond=lambda c, w: mask(c["?c"], w) == 1,
              lhs_text="(add (not ?a) 1)", rhs_text="(neg ?a)",
              cond_text="?c == 1"),

        # simplifications
        _rule("mul-one", "datapath",
              _op("mul", A, C), RA, const_vars=("?c",),
              value_cond=lambda c, w: mask(c["?c"], w) == 1,
              lhs_text="(mul ?a 1)", rhs_text="?a", cond_text="?c == 1"),
        _rule("mul-one-intro", "datapath",
              A, _rop("mul", RA, one), expansive=True,
              lhs_text="?a", rhs_text="(mul ?a 1)"),
        _rule("add-zero", "datapath",
              _op("add", A, C), RA, const_vars=("?c",),
              value_cond=lambda c, w: mask(c["?c"], w) == 0,
              lhs_text="(add ?a 0)", rhs_text="?a", cond_text="?c == 0"),
        _rule("add-zero-intro", "datapath",
              A, _rop("add", RA, RConst(lambda c, w, s: 0)), expansive=True,
              lhs_text="?a", rhs_text="(add ?a 0)"),
        _rule("select-same", "datapath",
              _op("select", A, B, B), RB,
              lhs_text="(select ?a ?b ?b)", rhs_text="?b"),
        _rule("select-const", "datapath",
              _op("select", C, A, B),
              RApp("op", "select", ()),  # placeholder, replaced below
              const_vars=("?c",),
              lhs_text="(select K ?a ?b)", rhs_text="?a or ?b",
              cond_text="condition constant"),

        # gate level
        _rule("and-xor-distribute", "gate",
              _op("xor", _op("and", A, B), _op("and", A, C)),
              _rop("and", RA, _rop("xor", RB, RC)),
              lhs_text="(xor (and ?a ?b) (and ?a ?c))", rhs_text="(and ?a (xor ?b ?c))"),
        _rule("and-xor-factor", "gate",
              _op("and", A, _op("xor", B, C)),
              _rop("xor", _rop("and", RA, RB), _rop("and", RA, RC)),
              lhs_text="(and ?a (xor ?b ?c))", rhs_text="(xor (and ?a ?b) (and ?a ?c))"),
        _rule("xor-self", "gate",
              _op("xor", A, A), RConst(lambda c, w, s: 0),
              lhs_text="(xor ?a ?a)", rhs_text="0"),
        _rule("demorgan-and", "gate",
              _op("not", _op("and", A, B)),
              _rop("or", _rop("not", RA), _rop("not", RB)),
              lhs_text="(not (and ?a ?b))", rhs_text="(or (not ?a) (not ?b))"),
        _rule("demorgan-or", "gate",
              _op("or", _op("not", A), _op("not", B)),
              _rop("not", _rop("and", RA, RB)),
              lhs_text="(or (not ?a) (not ?b))", rhs_text="(not (and ?a ?b))"),
    ]

    # select-const needs a value-dependent template; patch it in.
    for i, r in enumerate(rules):
        if r.name == "select-const":
            rules[i] = _SelectConstRule(
                r.name, r.set, r.lhs, None, r.const_vars, None, (), False,
                r.lhs_text, r.rhs_text, r.cond_text)

    for kind in ("add", "mul", "and", "or", "xor"):
        rules.append(_rule(
            f"comm-{kind}", "gate" if kind in ("and", "or", "xor") else "datapath",
            _op(kind, A, B), _rop(kind, RB, RA),
            lhs_text=f"({kind} ?a ?b)", rhs_text=f"({kind} ?b ?a)"))
        rules.append(_rule(
            f"assoc-{kind}-r", "gate" if kind in ("and", "or", "xor") else "datapath",
            _op(kind, _op(kind, A, B), C), _rop(kind, RA, _rop(kind, RB, RC)),
            lhs_text=f"({kind} ({kind} ?a ?b) ?c)", rhs_text=f"({kind} ?a ({kind} ?b ?c))"))
        rules.append(_rule(
            f"assoc-{kind}-l", "gate" if kind in ("and", "or", "xor") else "datapath",
            _op(kind, A, _op(kind, B, C)), _rop(kind, _rop(kind, RA, RB), RC),
            lhs_text=f"({kind} ?a ({kind} ?b ?c))", rhs_text=f"({kind} ({kind} ?a ?b) ?c)"))

    for kind in ("add", "sub", "mul", "shl", "shr", "and", "or", "xor", "eq", "lt"):
        rules.append(_rule(
            f"fold-{kind}", "datapath",
            _op(kind, A, B),
            RConst(_make_fold(kind, 2)),
            const_vars=("?a", "?b"),
            lhs_text=f"({kind} K1 K2)", rhs_text="K", cond_text="both constant"))
    for kind in ("not", "neg"):
        rules.append(_rule(
            f"fold-{kind}", "datapath",
            _op(kind, A),
            RConst(_make_fold(kind, 1)),
            const_vars=("?a",),
            lhs_text=f"({kind} K)", rhs_text="K", cond_text="constant"))

    if not include_expansive:
        rules = [r for r in rules if not r.expansive]
    return rules


def _make_fold(kind, arity):
    names = ("?a", "?b")[:arity]

    def fold(consts, w, s):
        args = [mask(consts[n], w) for n in names]
        return ir.eval_op(kind, w, s, args)

    return fold


class _SelectConstRule(InternalRule):
    """select with a constant condition picks one branch outright."""

    def apply(self, g, ctx=None):
        applied = 0
        for m in g.ematch(self.lhs, skip_const_interiors=True):
            if applied % 64 == 0 and g.budget_exhausted():
                break
            value = g.class_const(m.get("?c"))
            if value is None:
                continue
            w, s = m.width(), m.signed()
            branch = "?a" if mask(value, w) != 0 else "?b"
            new_id = m.get(branch)
            root = g.find(m.root)
            if g.find(new_id) == root:
                continue
            bindings = {name: g.rep_term(cls) for name, cls in m.subst}
            why = Justification(self.name, root,
                                before=pattern_term(self.lhs, w, s, bindings),
                                after=bindings[branch])
            g.union(root, new_id, why)
            applied += 1
        return applied


# ---------------------------------------------------------------------------
# Dependence analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class DependenceVerdict:
    result: str                 # "independent" | "dependent" | "unknown"
    witness: tuple | None = None


def _index_vars(t):
    return sorted({s.name for s in ir.subterms(t) if isinstance(s, Var)})


def _domain_points(domains, names):
    ranges = []
    total = 1
    for n in names:
        lo, hi, step = domains[n]
        values = list(range(lo, hi, step))
        total *= len(values)
        if total > ENUM_LIMIT:
            return None
        ranges.append(values)
    return [dict(zip(names, combo)) for combo in itertools.product(*ranges)]


def _index_values(index, domains):
    """{value: iteration env} for an index over its domain, or None."""
    names = [v for v in _index_vars(index) if v in domains]
    if any(v not in domains for v in _index_vars(index)):
        return None
    points = _domain_points(domains, names)
    if points is None:
        return None
    out = {}
    for env in points:
        value = ir.eval_index(index, env)
        if value is None:
            return None
        out.setdefault(value, env)
    return out


def _affine_overlap(a, b, domains):
    """Exact overlap test for two single-variable affine indices.

    Returns (overlaps, witness) or None when not applicable.
    """
    va = [v for v in _index_vars(a.index) if v in domains]
    vb = [v for v in _index_vars(b.index) if v in domains]
    if len(va) > 1 or len(vb) > 1:
        return None
    if any(v not in domains for v in _index_vars(a.index)):
        return None
    if any(v not in domains for v in _index_vars(b.index)):
        return None
    ca = ir.affine_coeffs(a.index, va[0]) if va else _const_coeffs(a.index)
    cb = ir.affine_coeffs(b.index, vb[0]) if vb else _const_coeffs(b.index)
    if ca is None or cb is None:
        return None

    iters_a = list(range(*domains[va[0]])) if va else [0]
    iters_b = list(range(*domains[vb[0]])) if vb else [0]
    if min(len(iters_a), len(iters_b)) > ENUM_LIMIT:
        return None
    # Solve a0 + a1*i == b0 + b1*j by iterating the smaller side.
    if len(iters_a) <= len(iters_b):
        for i in iters_a:
            value = ca[0] + ca[1] * i
            sol = _solve_affine(cb, value, iters_b)
            if sol is not None:
                wa = {va[0]: i} if va else {}
                wb = {vb[0]: sol} if vb else {}
                return True, (wa, wb, value)
            if ca[1] == 0:
                break
    else:
        for j in iters_b:
            value = cb[0] + cb[1] * j
            sol = _solve_affine(ca, value, iters_a)
            if sol is not None:
                wa = {va[0]: sol} if va else {}
                wb = {vb[0]: j} if vb else {}
                return True, (wa, wb, value)
            if cb[1] == 0:
                break
    return False, None


def _const_coeffs(t):
    value = ir.eval_index(t, {})
    return None if value is None else (value, 0)


def _solve_affine(coeffs, target, iters):
    c0, c1 = coeffs
    if c1 == 0:
        return iters[0] if c0 == target and iters else None
    diff = target - c0
    if diff % c1:
        return None
    sol = diff // c1
    return sol if iters and iters[0] <= sol <= iters[-1] and \
        (sol - iters[0]) % (iters[1] - iters[0] if len(iters) > 1 else 1) == 0 else None


def dependence_test(a, b, domains):
    """Can any two accesses (one a write) touch the same array cell?

    Affine index pairs are solved exactly; anything else falls back to
    exact enumeration when the combined iteration domain is at most 2^16
    points, and otherwise reports unknown (treated as dependent).
    """
    unknown = False
    for x in a:
        for y in b:
            if x.array != y.array:
                continue
            if x.kind != "store" and y.kind != "store":
                continue
            solved = _affine_overlap(x, y, domains)
            if solved is None:
                vx = _index_values(x.index, domains)
                vy = _index_values(y.index, domains)
                if vx is None or vy is None:
                    unknown = True
                    continue
                hit = next((v for v in vx if v in vy), None)
                if hit is not None:
                    return DependenceVerdict(
                        "dependent", (vx[hit], vy[hit], x.array, hit))
            else:
                overlaps, witness = solved
                if overlaps:
                    wa, wb, value = witness
                    return DependenceVerdict("dependent", (wa, wb, x.array, value))
    return DependenceVerdict("unknown" if unknown else "independent")


def _fusion_conflict(acc_a, acc_b, loop_a, loop_b):
    """Order-aware dependence check for fusing loop_a ; loop_b.

    Fusion moves iteration k of loop_b before iterations k+1.. of loop_a,
    so a conflict is an aliasing pair with the loop_a iteration strictly
    after the loop_b iteration.  Only affine indices are accepted; anything
    else is reported as unknown ("non-affine-unknown" upstream), matching
    the reach of polyhedral dependence analysis.
    """
    na, nb = ir.trip_count(loop_a), ir.trip_count(loop_b)

    def iter_coeffs(access, loop):
        if any(v != loop.iv for v in _index_vars(access.index)):
            return None
        c = ir.affine_coeffs(access.index, loop.iv)
        if c is None:
            return None
        # normalize to iteration-number coordinates
        return (c[0] + c[1] * loop.lo, c[1] * loop.step)

    for x in acc_a:
        for y in acc_b:
            if x.array != y.array:
                continue
            if x.kind != "store" and y.kind != "store":
                continue
            ca = iter_coeffs(x, loop_a)
            cb = iter_coeffs(y, loop_b)
            if ca is None or cb is None:
                return "unknown"
            a0, a1 = ca
            b0, b1 = cb
            if nb > ENUM_LIMIT:
                return "unknown"
            for kb in range(nb):
                target = b0 + b1 * kb
                if a1 == 0:
                    if a0 == target and kb + 1 < na:
                        return "dependent"
                else:
                    diff = target - a0
                    if diff % a1 == 0 and kb < diff // a1 < na:
                        return "dependent"
                if b1 == 0:
                    break
    return "independent"


# ---------------------------------------------------------------------------
# External passes (AST -> AST)
# ---------------------------------------------------------------------------

def _chain(stmts):
    return ir.chain_stmts(list(stmts))


def _body_stmts(loop_or_block):
    block = loop_or_block.body if isinstance(loop_or_block, For) else loop_or_block
    if not isinstance(block, Block) or not block.statements:
        return []
    return ir.flatten_chain(block.statements[0])


def _block(stmts):
    return Block((_chain(stmts),) if stmts else ())


def loop_fusion(a, b, ctx=None):
    """Fuse two adjacent loops; unequal trip counts get a predicated body."""
    if not isinstance(a, For) or not isinstance(b, For):
        raise PassReject("shape")
    if a.step != b.step or a.lo != b.lo:
        raise PassReject("shape")
    verdict = _fusion_conflict(ir.collect_accesses(a), ir.collect_accesses(b), a, b)
    if verdict == "dependent":
        raise PassReject("dependent")
    if verdict == "unknown":
        raise PassReject("non-affine-unknown")

    body_b = b.body
    if b.iv != a.iv:
        if any(isinstance(t, Var) and t.name == a.iv for t in ir.subterms(b.body)):
            raise PassReject("shape")  # name capture
        body_b = ir.substitute_var(b.body, b.iv, Var(a.iv, I32))

    stmts_a = _body_stmts(For(a.label, a.iv, a.lo, a.hi, a.step, a.body))
    stmts_b = _body_stmts(For(a.label, a.iv, b.lo, b.hi, b.step, body_b))
    guard = lambda hi: Op("lt", I32, (Var(a.iv, I32), Const(hi, I32)))
    if a.hi < b.hi:
        stmts_a = [If(guard(a.hi), _block(stmts_a), _block([]))] if stmts_a else []
    elif b.hi < a.hi:
        stmts_b = [If(guard(b.hi), _block(stmts_b), _block([]))] if stmts_b else []

    label = f"{a.label}_{b.label}"
    return For(label, a.iv, a.lo, max(a.hi, b.hi), a.step,
               _block(stmts_a + stmts_b))


def loop_unroll(loop, threshold=64):
    """Complete unroll: N copies of the body, in order, as one block."""
    if not isinstance(loop, For):
        raise PassReject("shape")
    n = ir.trip_count(loop)
    if n > threshold:
        raise PassReject("trip count above threshold")
    stmts = []
    for k in range(n):
        value = Const(loop.lo + k * loop.step, I32)
        body = ir.substitute_var(loop.body, loop.iv, value)
        stmts.extend(_body_stmts(For(loop.label, loop.iv, 0, 1, 1, body)))
    return _block(stmts)


def _perfect_nest(loop):
    stmts = _body_stmts(loop)
    if len(stmts) == 1 and isinstance(stmts[0], For):
        return stmts[0]
    return None


def loop_interchange(loop):
    """Swap a perfect 2-deep nest when the dependence order allows it."""
    inner = _perfect_nest(loop)
    if inner is None:
        raise PassReject("shape")
    outer_iters = list(range(loop.lo, loop.hi, loop.step))
    inner_iters = list(range(inner.lo, inner.hi, inner.step))
    points = [(o, i) for o in outer_iters for i in inner_iters]
    if len(points) > 256:
        raise PassReject("dependence")  # too large for the exact audit

    accesses = ir.collect_accesses(loop)
    stores = [x for x in accesses if x.kind == "store"]
    if stores:
        values = {}
        for acc in accesses:
            vals = []
            for (o, i) in points:
                v = ir.eval_index(acc.index, {loop.iv: o, inner.iv: i})
                if v is None:
                    raise PassReject("dependence")
                vals.append(v)
            values[id(acc)] = vals
        for w in stores:
            for x in accesses:
                if x.array != w.array or x is w:
                    continue
                wv, xv = values[id(w)], values[id(x)]
                for p in range(len(points)):
                    for q in range(len(points)):
                        if p == q or wv[p] != xv[q]:
                            continue
                        po, pi = points[p]
                        qo, qi = points[q]
                        before_old = (po, pi) < (qo, qi)
                        before_new = (pi, po) < (qi, qo)
                        if before_old != before_new:
                            raise PassReject("dependence")

    return For(f"{inner.label}_swap", inner.iv, inner.lo, inner.hi, inner.step,
               _block([For(f"{loop.label}_swap", loop.iv, loop.lo, loop.hi,
                           loop.step, inner.body)]))


def loop_flatten(loop):
    """Collapse a perfect nest into one loop with shift/mask index rebuild.

    Restricted to inner loops running 0..2^s by 1 so the reconstruction
    stays free of division (the language has no cross-iteration scalar
    state for strength-reduced counters).
    """
    inner = _perfect_nest(loop)
    if inner is None:
        raise PassReject("shape")
    ni = ir.trip_count(inner)
    if inner.lo != 0 or inner.step != 1 or ni & (ni - 1) != 0 or ni < 2:
        raise PassReject("shape")
    no = ir.trip_count(loop)
    shift = ni.bit_length() - 1
    k = f"{loop.iv}{inner.iv}"
    if any(isinstance(t, Var) and t.name == k for t in ir.subterms(inner.body)):
        raise PassReject("shape")
    kvar = Var(k, I32)
    outer_expr = Op("shr", I32, (kvar, Const(shift, I32)))
    if loop.step != 1 or loop.lo != 0:
        outer_expr = Op("add", I32, (Const(loop.lo, I32),
                        Op("mul", I32, (Const(loop.step, I32), outer_expr))))
    inner_expr = Op("and", I32, (kvar, Const(ni - 1, I32)))
    body = ir.substitute_var(inner.body, loop.iv, outer_expr)
    body = ir.substitute_var(body, inner.iv, inner_expr)
    return For(f"{loop.label}_{inner.label}_flat", k, 0, no * ni, 1, body)


def loop_perfection(loop):
    """Sink outer-body code into the inner loop under first/last-iteration guards."""
    stmts = _body_stmts(loop)
    inners = [s for s in stmts if isinstance(s, For)]
    if len(inners) != 1 or len(stmts) < 2:
        raise PassReject("shape")
    inner = inners[0]
    at = stmts.index(inner)
    pre, post = stmts[:at], stmts[at + 1:]
    iv = Var(inner.iv, I32)
    first = Op("eq", I32, (iv, Const(inner.lo, I32)))
    last_value = inner.lo + (ir.trip_count(inner) - 1) * inner.step
    last = Op("eq", I32, (iv, Const(last_value, I32)))
    new_stmts = []
    if pre:
        new_stmts.append(If(first, _block(pre), _block([])))
    new_stmts.extend(_body_stmts(inner))
    if post:
        new_stmts.append(If(last, _block(post), _block([])))
    new_inner = For(f"{inner.label}_perf", inner.iv, inner.lo, inner.hi,
                    inner.step, _block(new_stmts))
    return For(f"{loop.label}_perf", loop.iv, loop.lo, loop.hi, loop.step,
               _block([new_inner]))


def _single_stmt(block):
    stmts = _body_stmts(block)
    return stmts[0] if len(stmts) == 1 else None


def if_conversion(stmt):
    """Turn a branch into select dataflow when both sides are plain stores
    (or one side is empty, re-storing the old value)."""
    if not isinstance(stmt, If):
        raise PassReject("not-applicable")
    then_s = _single_stmt(stmt.then)
    else_s = _single_stmt(stmt.orelse)
    then_empty = not _body_stmts(stmt.then)
    else_empty = not _body_stmts(stmt.orelse)

    def conv(store_a, val_b):
        vty = ir.type_of(store_a.value)
        if ir.type_of(stmt.cond) != vty or ir.type_of(val_b) != vty:
            raise PassReject("not-applicable")
        return vty

    if isinstance(then_s, Store) and isinstance(else_s, Store):
        if then_s.array == else_s.array and then_s.index == else_s.index:
            vty = conv(then_s, else_s.value)
            return Store(then_s.array, then_s.index,
                         Op("select", vty, (stmt.cond, then_s.value, else_s.value)))
        raise PassReject("not-applicable")
    if isinstance(then_s, Store) and else_empty:
        old = Load(then_s.array, then_s.index, ir.type_of(then_s.value))
        vty = conv(then_s, old)
        return Store(then_s.array, then_s.index,
                     Op("select", vty, (stmt.cond, then_s.value, old)))
    if isinstance(else_s, Store) and then_empty:
        old = Load(else_s.array, else_s.index, ir.type_of(else_s.value))
        vty = conv(else_s, old)
        return Store(else_s.array, else_s.index,
                     Op("select", vty, (stmt.cond, old, else_s.value)))
    if then_s is not None and else_s is not None \
            and ir.type_of(then_s) is not None and ir.type_of(else_s) is not None \
            and not ir.contains_store(then_s) and not ir.contains_store(else_s):
        if ir.type_of(then_s) == ir.type_of(else_s) == ir.type_of(stmt.cond):
            return Op("select", ir.type_of(then_s), (stmt.cond, then_s, else_s))
    raise PassReject("not-applicable")


def control_flow_mux(stmt):
    """Hoist a common operation out of both branches, muxing its arguments."""
    if not isinstance(stmt, If):
        raise PassReject("not-applicable")
    then_s = _single_stmt(stmt.then)
    else_s = _single_stmt(stmt.orelse)
    if not (isinstance(then_s, Store) and isinstance(else_s, Store)):
        raise PassReject("not-applicable")
    if then_s.array != else_s.array or then_s.index != else_s.index:
        raise PassReject("not-applicable")
    va, vb = then_s.value, else_s.value
    if isinstance(va, Op) and isinstance(vb, Op) \
            and va.kind == vb.kind and va.ty == vb.ty:
        pairs = list(zip(va.operands, vb.operands))
        rebuild = lambda muxed: Op(va.kind, va.ty, tuple(muxed))
    elif isinstance(va, CallFunc) and isinstance(vb, CallFunc) \
            and va.name == vb.name and va.ty == vb.ty \
            and len(va.args) == len(vb.args):
        pairs = list(zip(va.args, vb.args))
        rebuild = lambda muxed: CallFunc(va.name, tuple(muxed), va.ty)
    else:
        raise PassReject("not-applicable")
    if va == vb:
        raise PassReject("not-applicable")  # select-same territory, not sharing
    muxed = []
    for x, y in pairs:
        if x == y:
            muxed.append(x)
            continue
        ty = ir.type_of(x)
        if ty != ir.type_of(y) or ty != ir.type_of(stmt.cond):
            raise PassReject("not-applicable")
        muxed.append(Op("select", ty, (stmt.cond, x, y)))
    return Store(then_s.array, then_s.index, rebuild(muxed))


def _provably_distinct(i, j):
    """Indices that can never alias: affine in one shared variable with a
    constant nonzero difference."""
    if i == j:
        return False
    names = set(_index_vars(i)) | set(_index_vars(j))
    if len(names) > 1:
        return False
    name = names.pop() if names else "_none"
    ci = ir.affine_coeffs(i, name)
    cj = ir.affine_coeffs(j, name)
    if ci is None or cj is None:
        return False
    return ci[1] == cj[1] and ci[0] != cj[0]


def memory_forward(term):
    """Forward stored values into later loads and drop dead stores.

    Works one block chain at a time; nested control statements act as
    barriers.  Forwarding a value that itself reads memory is only done
    while no store at all intervenes.
    """
    if isinstance(term, For):
        return For(term.label, term.iv, term.lo, term.hi, term.step,
                   memory_forward(term.body))
    if not isinstance(term, Block):
        raise PassReject("not-applicable")
    stmts = _body_stmts(term)
    if not stmts:
        raise PassReject("not-applicable")

    changed = False
    # store->load forwarding
    live = {}          # (array, index term) -> [value, set_clock]
    clock = 0
    out = []
    for stmt in stmts:
        if isinstance(stmt, (For, If)):
            barrier_block = memory_forward_try(stmt)
            if barrier_block is not None:
                stmt = barrier_block
                changed = True
            if ir.contains_store(stmt):
                live.clear()
                clock += 1
            out.append(stmt)
            continue
        if isinstance(stmt, Load) and (stmt.array, stmt.index) in live:
            value, set_clock = live[(stmt.array, stmt.index)]
            if not ir.contains_load(value) or clock == set_clock:
                changed = True  # redundant load marker dropped from the chain
                continue
        replaced = stmt
        for (arr, idx), (value, set_clock) in list(live.items()):
            ok = not ir.contains_load(value) or clock == set_clock
            if not ok:
                continue
            replaced, did = ir.replace_subterm(replaced, Load(arr, idx, ir.type_of(value)),
                                               value)
            changed = changed or did
        if isinstance(replaced, Store):
            for (arr, idx) in list(live):
                if arr == replaced.array and idx != replaced.index \
                        and not _provably_distinct(idx, replaced.index):
                    del live[(arr, idx)]
            clock += 1
            live[(replaced.array, replaced.index)] = (replaced.value, clock)
        out.append(replaced)

    # dead store elimination: a store overwritten before any possible read
    kept = []
    for i, stmt in enumerate(out):
        if isinstance(stmt, Store):
            dead = False
            for later in out[i + 1:]:
                if isinstance(later, (For, If)):
                    break
                reads = [t for t in ir.subterms(later) if isinstance(t, Load)
                         and t.array == stmt.array
                         and not _provably_distinct(t.index, stmt.index)]
                if isinstance(later, Store) and later.array == stmt.array \
                        and later.index == stmt.index:
                    if not [t for t in ir.subterms(later.index) if isinstance(t, Load)
                            and t.array == stmt.array] and not reads:
                        dead = True
                    break
                if reads:
                    break
            if dead:
                changed = True
                continue
        kept.append(stmt)

    if not changed:
        raise PassReject("not-applicable")
    if not kept:
        raise PassReject("not-applicable")
    return _block(kept)


def memory_forward_try(stmt):
    """memory_forward on a nested statement, or None when nothing changes."""
    try:
        if isinstance(stmt, For):
            return memory_forward(stmt)
        if isinstance(stmt, If):
            then = _try_block(stmt.then)
            orelse = _try_block(stmt.orelse)
            if then is None and orelse is None:
                return None
            return If(stmt.cond, then or stmt.then, orelse or stmt.orelse)
        return None
    except PassReject:
        return None


def _try_block(block):
    try:
        return memory_forward(block)
    except PassReject:
        return None


def _arrays_read_by(t):
    return {s.array for s in ir.subterms(t) if isinstance(s, Load)}


def _arrays_written_by(t):
    return {s.array for s in ir.subterms(t) if isinstance(s, Store)}


def if_correlation(term, prove_equal):
    """Merge adjacent branches whose conditions are identical or disjoint.

    Identity and disjointness are proven through the e-graph (`prove_equal`
    answers whether two expressions share an e-class), so an invariant
    visible in one representation can license merging in another.
    """
    if not isinstance(term, Block):
        raise PassReject("not-applicable")
    stmts = _body_stmts(term)
    for i in range(len(stmts) - 1):
        s1, s2 = stmts[i], stmts[i + 1]
        if not (isinstance(s1, If) and isinstance(s2, If)):
            continue
        writes = _arrays_written_by(s1.then) | _arrays_written_by(s1.orelse)
        if writes & _arrays_read_by(s2.cond):
            continue
        if prove_equal(s1.cond, s2.cond):
            merged = If(s1.cond,
                        _block(_body_stmts(s1.then) + _body_stmts(s2.then)),
                        _block(_body_stmts(s1.orelse) + _body_stmts(s2.orelse)))
            return _block(stmts[:i] + [merged] + stmts[i + 2:])
        if _disjoint_conditions(s1.cond, s2.cond, prove_equal) \
                and not _body_stmts(s1.orelse) and not _body_stmts(s2.orelse):
            merged = If(s1.cond, s1.then, _block([s2]))
            return _block(stmts[:i] + [merged] + stmts[i + 2:])
    raise PassReject("not-applicable")


def _disjoint_conditions(c1, c2, prove_equal):
    """At most one of two conditions can hold: eq against distinct constants
    of provably equal subjects."""
    if not (isinstance(c1, Op) and c1.kind == "eq"
            and isinstance(c2, Op) and c2.kind == "eq"):
        return False
    x1, k1 = c1.operands
    x2, k2 = c2.operands
    if not (isinstance(k1, Const) and isinstance(k2, Const)):
        return False
    return k1.value != k2.value and prove_equal(x1, x2)


def memory_reuse(func, fresh_label):
    """Hoist a loop-invariant read-only access in front of its loop.

    The value lands in a one-cell scratch array (underscore-prefixed, so
    validators ignore it) because the language has no scalar bindings.
    """
    if not isinstance(func, ir.Func):
        raise PassReject("not-applicable")

    def rewrite_chain(stmts):
        for i, stmt in enumerate(stmts):
            if isinstance(stmt, For):
                hit = find_candidate(stmt)
                if hit is not None:
                    load, loop = hit
                    scratch = f"_r_{loop.label}_{load.array}"
                    new_body = ir.replace_subterm(
                        loop.body, load, Load(scratch, Const(0, I32), load.ty))[0]
                    new_loop = For(fresh_label(loop.label), loop.iv, loop.lo,
                                   loop.hi, loop.step, new_body)
                    prologue = Store(scratch, Const(0, I32), load)
                    return (stmts[:i] + [prologue, new_loop] + stmts[i + 1:],
                            (scratch, 1, load.ty))
        return None

    def find_candidate(loop):
        written = _arrays_written_by(loop.body)
        for t in ir.subterms(loop.body):
            if isinstance(t, Load) and not t.array.startswith("_") \
                    and t.array not in written \
                    and not _index_vars(t.index) and not ir.contains_load(t.index):
                return t, loop
        return None

    stmts = _body_stmts(func.body)
    hit = rewrite_chain(stmts)
    if hit is None:
        raise PassReject("not-applicable")
    new_stmts, scratch_decl = hit
    return ir.Func(func.name, func.params, func.arrays + (scratch_decl,),
                   _block(new_stmts))


# ---------------------------------------------------------------------------
# External rewrite adapter
# ---------------------------------------------------------------------------

@dataclass
class RunContext:
    """Session state threaded through rule application."""
    latency: sched.LatencyTable = field(default_factory=sched.LatencyTable)
    constraints: dict = field(default_factory=dict)        # label -> SchedConstraints
    ports: dict = field(default_factory=dict)
    unroll_threshold: int = 64
    labels: dict = field(default_factory=dict)
    debug_validate: bool = False
    _cost_cache: tuple = None

    def fresh_label(self, base):
        base = f"{base}_v"
        if base not in self.labels:
            self.labels[base] = 0
        self.labels[base] += 1
        return f"{base}{self.labels[base]}"

    def register(self, label, constraints):
        self.constraints[label] = constraints

    def analysis_best(self, g):
        if self._cost_cache is None or self._cost_cache[0] != g.version:
            self._cost_cache = (g.version, g._fixpoint_costs(analysis_cost))
        return self._cost_cache[1]


def extract_trigger(g, pattern, cid, best):
    """Analysis-friendly term for a matched trigger, respecting its shape."""
    root = g.find(cid)
    if isinstance(pattern, PVar):
        if root not in best:
            raise PassReject("no finite extraction")
        return g._build(best[root][1], best)
    choice, cost = None, float("inf")
    for enode in g.class_nodes(root):
        if pattern.tag != enode.tag:
            continue
        if pattern.kind is not None and enode.head[1] != pattern.kind:
            continue
        if pattern.children is not None and len(pattern.children) != len(enode.children):
            continue
        total = analysis_cost(enode)
        for kid in enode.children:
            entry = best.get(g.find(kid))
            if entry is None:
                total = float("inf")
                break
            total += entry[0]
        if total < cost:
            choice, cost = enode, total
    if choice is None:
        raise PassReject("no finite extraction")
    if pattern.children is None:
        return g._build(choice, best)
    kids = [extract_trigger(g, sub, kid, best)
            for sub, kid in zip(pattern.children, choice.children)]
    return head_to_term(choice.head, kids)


@dataclass
class ExternalRewrite:
    name: str
    trigger: PApp
    runner: object        # (subject term, g, ctx) -> Term (may raise PassReject)
    set: str = "control"
    lhs_text: str = ""
    rhs_text: str = ""
    cond_text: str = ""

    @property
    def kind(self):
        return "external"

    def apply(self, g, ctx):
        applied = 0
        for i, m in enumerate(g.ematch(self.trigger)):
            if i % 8 == 0 and g.budget_exhausted():
                break
            status, _ = apply_external(self, g, m, ctx)
            applied += 1 if status == "unioned" else 0
        return applied


def apply_external(rule, g, site, ctx):
    """Run one external pass at a match site.

    Returns ("unioned", class) or ("rejected", reason).  A pass failure or
    an unchanged result never touches the graph.
    """
    root = g.find(site.root)
    try:
        subject = extract_trigger(g, rule.trigger, root, ctx.analysis_best(g))
    except PassReject as r:
        return ("rejected", r.reason)
    try:
        result = rule.runner(subject, g, ctx)
    except PassReject as r:
        return ("rejected", r.reason)
    except ir.NormalizeError:
        return ("rejected", "pass-error")
    if result is None or result == subject:
        return ("rejected", "no-change")
    new_id = g.add(result)
    if g.find(new_id) == root:
        return ("rejected", "no-change")
    g.union(root, new_id,
            Justification(rule.name, root, before=subject, after=result))
    return ("unioned", g.find(root))


# -- pass runners (bind constraints bookkeeping to each transformation) ------

def _run_fusion(subject, g, ctx):
    if not isinstance(subject, Seq):
        raise PassReject("shape")
    a, b = subject.first, subject.second
    fused = loop_fusion(a, b, ctx)
    ca, cb = ctx.constraints.get(a.label), ctx.constraints.get(b.label)
    if ca is None or cb is None:
        raise PassReject("no schedule for trigger loops")
    ctx.register(fused.label, sched.fuse_constraints(ca, cb, ctx.ports))
    return fused


def _run_unroll(subject, g, ctx):
    if ir.trip_count(subject) == 1 and \
            ir.substitute_var(subject.body, subject.iv,
                              Const(subject.lo, I32)) == subject.body:
        raise PassReject("no-change")  # one-trip loop with an unused iv
    block = loop_unroll(subject, ctx.unroll_threshold)
    if not block.statements:
        raise PassReject("empty body")
    c = ctx.constraints.get(subject.label)
    if c is None:
        raise PassReject("no schedule for trigger loop")
    # A completely unrolled loop still counts as a loop with one iteration;
    # keeping the one-trip wrapper pins the propagated constraints to a
    # labeled node that spine rewrites of the unrolled chain cannot evade.
    wrapper = For(f"{subject.label}_u1", subject.iv, 0, 1, 1, block)
    ctx.register(wrapper.label, sched.unroll_constraints(c))
    return wrapper


def _run_flatten(subject, g, ctx):
    inner = _perfect_nest(subject)
    flat = loop_flatten(subject)
    co = ctx.constraints.get(subject.label)
    ci = ctx.constraints.get(inner.label) if inner is not None else None
    if co is None or ci is None:
        raise PassReject("no schedule for trigger loops")
    ctx.register(flat.label, sched.flatten_constraints(co, ci))
    return flat


def _reestimate(term, ctx):
    table = sched.seed_schedule(term, ctx.latency, ports=ctx.ports)
    for label, c in table.items():
        if label not in ctx.constraints:
            ctx.register(label, c)


def _run_interchange(subject, g, ctx):
    swapped = loop_interchange(subject)
    _reestimate(swapped, ctx)
    return swapped


def _run_perfection(subject, g, ctx):
    perfected = loop_perfection(subject)
    _reestimate(perfected, ctx)
    return perfected


def _run_if_conversion(subject, g, ctx):
    return if_conversion(subject)


def _run_mux(subject, g, ctx):
    return control_flow_mux(subject)


def _run_memory_forward(subject, g, ctx):
    return memory_forward(subject)


def _run_if_correlation(subject, g, ctx):
    def prove_equal(t1, t2):
        c1, c2 = g.lookup_term(t1), g.lookup_term(t2)
        return c1 is not None and c2 is not None and c1 == c2
    return if_correlation(subject, prove_equal)


def _run_memory_reuse(subject, g, ctx):
    reused = memory_reuse(subject, ctx.fresh_label)
    _reestimate(reused, ctx)
    return reused


TRIGGER_SEQ_FORS = PApp("seq", None, (PApp("for", bind="?a"), PApp("for", bind="?b")))
TRIGGER_FOR = PApp("for", bind="?l")
TRIGGER_IF = PApp("if", bind="?s")
TRIGGER_BLOCK = PApp("block", bind="?b")
TRIGGER_FUNC = PApp("func", bind="?f")


def external_rules():
    return [
        ExternalRewrite("control-flow-mux", TRIGGER_IF, _run_mux,
                        lhs_text="(if ?c (store A i (op x)) (store A i (op y)))",
                        rhs_text="(store A i (op (select ?c x y)))"),
        ExternalRewrite("if-conversion", TRIGGER_IF, _run_if_conversion,
                        lhs_text="(if ?c (store ...) (store ...))",
                        rhs_text="(store A i (select ?c v1 v2))"),
        ExternalRewrite("if-correlation", TRIGGER_BLOCK, _run_if_correlation,
                        lhs_text="(block ... (if c1 ...) (if c2 ...) ...)",
                        rhs_text="merged branches",
                        cond_text="conditions identical or disjoint in the e-graph"),
        ExternalRewrite("loop-flatten", TRIGGER_FOR, _run_flatten,
                        lhs_text="(for ?o ... (for ?i ...))",
                        rhs_text="single loop, shift/mask index rebuild",
                        cond_text="perfect nest, inner trips a power of two"),
        ExternalRewrite("loop-fusion", TRIGGER_SEQ_FORS, _run_fusion,
                        lhs_text="(seq (for ?a) (for ?b))",
                        rhs_text="(for fused ...)",
                        cond_text="no loop-carried conflict (affine indices only)"),
        ExternalRewrite("loop-interchange", TRIGGER_FOR, _run_interchange,
                        lhs_text="(for ?o ... (for ?i ...))",
                        rhs_text="(for ?i ... (for ?o ...))",
                        cond_text="perfect nest, dependence order preserved"),
        ExternalRewrite("loop-perfection", TRIGGER_FOR, _run_perfection,
                        lhs_text="(for ?o pre (for ?i body) post)",
                        rhs_text="guarded pre/post inside the inner loop",
                        cond_text="exactly one inner loop"),
        ExternalRewrite("loop-unroll", TRIGGER_FOR, _run_unroll,
                        lhs_text="(for ?l lo hi step body)",
                        rhs_text="N copies of body",
                        cond_text="trip count within the unroll threshold"),
        ExternalRewrite("memory-forward", TRIGGER_BLOCK, _run_memory_forward,
                        lhs_text="(block ... (store A i v) ... (load A i) ...)",
                        rhs_text="loads replaced by v, dead stores dropped"),
        ExternalRewrite("memory-reuse", TRIGGER_FUNC, _run_memory_reuse,
                        lhs_text="(func ... (for ... (load A k) ...))",
                        rhs_text="hoisted load via scratch array",
                        cond_text="index loop-invariant, array unwritten in loop"),
    ]


def all_rules(include_expansive=False):
    return datapath_rules(include_expansive) + external_rules()


def rule_listing(include_expansive=True):
    """One line per rule for the `rules list` command."""
    lines = []
    for r in datapath_rules(True) + external_rules():
        if not include_expansive and getattr(r, "expansive", False):
            continue
        flags = []
        if getattr(r, "expansive", False):
            flags.append("expansive, off by default")
        if getattr(r, "kind", "") == "external":
            flags.append("external pass")
        note = f"  [{'; '.join(flags)}]" if flags else ""
        cond = f"  if {r.cond_text}" if r.cond_text else ""
        lines.append(f"{r.name:22s} {r.set:9s} {r.lhs_text} => {r.rhs_text}{cond}{note}")
    return "\n".join(lines)
