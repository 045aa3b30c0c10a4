"""Equality-saturation engine.

Terms are hashconsed into e-nodes whose children are e-class ids; a
union-find groups e-nodes proven equivalent.  Rewriting is constructive:
both sides of every applied rule stay in the graph, so the set of
representable terms only grows.  Each effective union records a
justification (rule name plus concrete before/after subterms) for later
proof-chain emission.

The run loop alternates between a control rewrite set and a datapath/gate
rewrite set, one set per iteration, until saturation or a configured
iteration, node-count or wall-clock limit.

E-classes are tagged control or datapath (control when any member is a
loop, branch, seq, block or store); the tag is monotone under union and
drives the two-phase extraction.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

from . import ir
from .ir import (Block, CallFunc, Const, For, Func, If, IntType, Load, Op,
                 Seq, Store, Var)

CONTROL_TAGS = frozenset({"seq", "for", "if", "block", "store", "func"})

INF = float("inf")


class NodeLimitError(Exception):
    pass


class ExtractError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class ENode:
    head: tuple
    children: tuple

    @property
    def tag(self):
        return self.head[0]


def term_head(t):
    if isinstance(t, Const):
        return ("const", t.value, t.ty.width, t.ty.signed)
    if isinstance(t, Var):
        return ("var", t.name, t.ty.width, t.ty.signed)
    if isinstance(t, Op):
        return ("op", t.kind, t.ty.width, t.ty.signed)
    if isinstance(t, Load):
        return ("load", t.array, t.ty.width, t.ty.signed)
    if isinstance(t, Store):
        return ("store", t.array)
    if isinstance(t, CallFunc):
        return ("call", t.name, t.ty.width, t.ty.signed)
    if isinstance(t, Seq):
        return ("seq",)
    if isinstance(t, For):
        return ("for", t.label, t.iv, t.lo, t.hi, t.step)
    if isinstance(t, If):
        return ("if",)
    if isinstance(t, Block):
        return ("block",)
    if isinstance(t, Func):
        return ("func", t.name, t.params, t.arrays)
    raise TypeError(f"not a term: {t!r}")


def head_to_term(head, child_terms):
    tag = head[0]
    if tag == "const":
        return Const(head[1], IntType(head[2], head[3]))
    if tag == "var":
        return Var(head[1], IntType(head[2], head[3]))
    if tag == "op":
        return Op(head[1], IntType(head[2], head[3]), tuple(child_terms))
    if tag == "load":
        return Load(head[1], child_terms[0], IntType(head[2], head[3]))
    if tag == "store":
        return Store(head[1], child_terms[0], child_terms[1])
    if tag == "call":
        return CallFunc(head[1], tuple(child_terms), IntType(head[2], head[3]))
    if tag == "seq":
        return Seq(child_terms[0], child_terms[1])
    if tag == "for":
        return For(head[1], head[2], head[3], head[4], head[5], child_terms[0])
    if tag == "if":
        return If(child_terms[0], child_terms[1], child_terms[2])
    if tag == "block":
        return Block(tuple(child_terms))
    if tag == "func":
        return Func(head[1], head[2], head[3], child_terms[0])
    raise ValueError(f"unknown head {head!r}")


@dataclass(frozen=True, slots=True)
class Justification:
    rule_name: str
    matched_class: int
    before: ir.Term
    after: ir.Term


# ---------------------------------------------------------------------------
# Patterns
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class PVar:
    """Pattern hole; binds a whole e-class.  Repeated names must agree."""
    name: str


@dataclass(frozen=True, slots=True)
class PApp:
    """Matches e-nodes by constructor tag (and operator kind, width-generic).

    children=None matches any node with the tag without descending, which
    is how control-pass triggers locate loops and branches.  `bind` records
    the matched class in the substitution.
    """
    tag: str
    kind: str | None = None
    children: tuple | None = None
    bind: str | None = None


@dataclass(frozen=True, slots=True)
class Match:
    subst: tuple         # sorted ((name, class_id), ...)
    root: int
    root_node: ENode

    def get(self, name):
        for k, v in self.subst:
            if k == name:
                return v
        raise KeyError(name)

    def width(self):
        return self.root_node.head[2]

    def signed(self):
        return self.root_node.head[3]


def _node_matches(pattern, enode):
    if pattern.tag != enode.tag:
        return False
    if pattern.kind is not None and enode.head[1] != pattern.kind:
        return False
    if pattern.children is not None and len(pattern.children) != len(enode.children):
        return False
    return True


class EGraph:
    def __init__(self, node_limit=None):
        self._parent = []
        self.classes = {}          # root id -> {ENode: None} (ordered set)
        self.hashcons = {}         # canonical ENode -> class id
        self.kind = {}             # root id -> "control" | "datapath"
        self.const_of = {}         # root id -> value (when class holds a Const)
        self.rep = {}              # root id -> (size, Term) cheap representative
        self.trace = []
        self.node_limit = node_limit
        self.version = 0
        self._dirty = False

    # -- union-find ---------------------------------------------------------

    def find(self, a):
        root = a
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[a] != root:
            self._parent[a], a = root, self._parent[a]
        return root

    def _canon(self, enode):
        return ENode(enode.head, tuple(self.find(c) for c in enode.children))

    # -- insertion ----------------------------------------------------------

    def add_enode(self, enode):
        enode = self._canon(enode)
        found = self.hashcons.get(enode)
        if found is not None:
            return self.find(found)
        if self.node_limit is not None and len(self.hashcons) >= self.node_limit:
            raise NodeLimitError(f"node limit {self.node_limit} exceeded")
        cid = len(self._parent)
        self._parent.append(cid)
        self.hashcons[enode] = cid
        self.classes[cid] = {enode: None}
        self.kind[cid] = "control" if enode.tag in CONTROL_TAGS else "datapath"
        if enode.tag == "const":
            self.const_of[cid] = enode.head[1]
        child_reps = [self.rep[self.find(c)] for c in enode.children]
        size = 1 + sum(s for s, _ in child_reps)
        self.rep[cid] = (size, head_to_term(enode.head, [t for _, t in child_reps]))
        self.version += 1
        return cid

    def add(self, t):
        """Insert a term, returning the id of its e-class (idempotent)."""
        memo = {}

        def go(term):
            hit = memo.get(id(term))
            if hit is not None:
                return hit
            cid = self.add_enode(
                ENode(term_head(term), tuple(go(k) for k in ir.children(term))))
            memo[id(term)] = cid
            return cid

        return go(t)

    # -- union and rebuild ----------------------------------------------------

    def union(self, a, b, why=None):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        root, other = (ra, rb) if ra < rb else (rb, ra)
        self._parent[other] = root
        nodes = self.classes.pop(other)
        self.classes[root].update(nodes)
        if self.kind.pop(other) == "control":
            self.kind[root] = "control"
        cv = self.const_of.pop(other, None)
        if cv is not None:
            prev = self.const_of.get(root)
            assert prev is None or prev == cv, \
                f"unsound union: constants {prev} and {cv} merged"
            self.const_of[root] = cv
        orep = self.rep.pop(other)
        if orep[0] < self.rep[root][0]:
            self.rep[root] = orep
        if why is not None:
            self.trace.append(why)
        self._dirty = True
        self.version += 1
        return root

    def rebuild(self):
        """Restore congruence closure; returns the number of repairs."""
        repairs = 0
        while self._dirty:
            self._dirty = False
            old = list(self.hashcons.items())
            self.hashcons = {}
            for enode, cid in old:
                canon = self._canon(enode)
                root = self.find(cid)
                existing = self.hashcons.get(canon)
                if existing is None:
                    self.hashcons[canon] = root
                else:
                    er = self.find(existing)
                    if er != root:
                        self.union(er, root)
                        repairs += 1
                    self.hashcons[canon] = self.find(existing)
            # Re-key class node sets with canonical children.
            classes = {}
            for enode, cid in self.hashcons.items():
                classes.setdefault(self.find(cid), {})[enode] = None
            self.classes = classes
        return repairs

    # -- queries --------------------------------------------------------------

    @property
    def node_count(self):
        return len(self.hashcons)

    @property
    def class_count(self):
        return len(self.classes)

    def class_nodes(self, cid):
        return self.classes[self.find(cid)]

    def class_const(self, cid):
        return self.const_of.get(self.find(cid))

    def rep_term(self, cid):
        return self.rep[self.find(cid)][1]

    def lookup_term(self, t):
        """Class id of a term if it is present, else None (no insertion)."""
        def go(term):
            node = ENode(term_head(term),
                         tuple(go(k) for k in ir.children(term)))
            for kid in node.children:
                if kid is None:
                    return None
            found = self.hashcons.get(self._canon(node))
            return None if found is None else self.find(found)
        return go(t)

    def top_enode(self, t):
        """Canonical e-node of a term already present in the graph."""
        kids = tuple(self.lookup_term(k) for k in ir.children(t))
        return self._canon(ENode(term_head(t), kids))

    # -- e-matching -----------------------------------------------------------

    def ematch(self, pattern, skip_const_interiors=False):
        """All substitutions making the pattern representable in some class.

        Deterministic: classes ascending, nodes in insertion order.  The
        returned matches are deduplicated by (root, substitution).

        With skip_const_interiors, structural sub-patterns refuse to match
        inside classes whose value is a known constant.  Constant classes
        accumulate arithmetic decompositions of their value as folding
        unions them in; re-associating through those members explodes the
        graph without ever producing anything a cost function could prefer
        over the constant itself.
        """
        out = []
        seen = set()
        for cid in sorted(self.classes):
            for enode in self.classes[cid]:
                if isinstance(pattern, PApp) and not _node_matches(pattern, enode):
                    continue
                for subst in self._match_node(pattern, enode, {},
                                              skip_const_interiors):
                    key = (cid, tuple(sorted(subst.items())))
                    if key not in seen:
                        seen.add(key)
                        out.append(Match(key[1], cid, enode))
        return out

    def _match_node(self, pattern, enode, subst, skip_const):
        if not _node_matches(pattern, enode):
            return
        base = subst
        if pattern.bind is not None:
            prev = base.get(pattern.bind)
            here = self.find(self.hashcons[self._canon(enode)])
            if prev is not None and prev != here:
                return
            base = dict(base)
            base[pattern.bind] = here
        if pattern.children is None:
            yield base
            return

        def descend(i, acc):
            if i == len(pattern.children):
                yield acc
                return
            sub = pattern.children[i]
            cls = self.find(enode.children[i])
            if isinstance(sub, PVar):
                prev = acc.get(sub.name)
                if prev is not None:
                    if prev == cls:
                        yield from descend(i + 1, acc)
                    return
                nxt = dict(acc)
                nxt[sub.name] = cls
                yield from descend(i + 1, nxt)
                return
            if skip_const and self.const_of.get(cls) is not None:
                return
            for kid in self.classes[cls]:
                for bound in self._match_node(sub, kid, acc, skip_const):
                    yield from descend(i + 1, bound)

        yield from descend(0, base)

    # -- rewrite budget ---------------------------------------------------

    def set_budget(self, deadline=None, node_limit=None):
        self._budget_deadline = deadline
        self._budget_nodes = node_limit

    def budget_exhausted(self):
        if getattr(self, "_budget_nodes", None) is not None \
                and len(self.hashcons) >= self._budget_nodes:
            return True
        if getattr(self, "_budget_deadline", None) is not None \
                and time.monotonic() > self._budget_deadline:
            return True
        return False

    # -- extraction -------------------------------------------------------

    def extract_local(self, cid, cost_fn, root_filter=None):
        """Minimum-cost term representable in a class (tree cost).

        Costs propagate bottom-up to a fixpoint from an all-infinite start,
        which handles cycles; strict-improvement updates keep the recorded
        argmin choices well-founded.
        """
        best = self._fixpoint_costs(cost_fn)
        root = self.find(cid)
        if root_filter is not None:
            candidates = [n for n in self.classes[root] if root_filter(n)]
            choice, cost = None, INF
            for n in candidates:
                c = cost_fn(n) + sum(best[self.find(k)][0] for k in n.children)
                if c < cost:
                    choice, cost = n, c
            if choice is None or cost == INF:
                raise ExtractError("no finite-cost term matches the root filter")
            return self._build(choice, best)
        if root not in best:
            raise ExtractError("class has no finite-cost term")
        return self._build(best[root][1], best)

    def _fixpoint_costs(self, cost_fn):
        best = {}
        changed = True
        while changed:
            changed = False
            for cid, nodes in self.classes.items():
                for enode in nodes:
                    total = cost_fn(enode)
                    for kid in enode.children:
                        entry = best.get(self.find(kid))
                        if entry is None:
                            total = INF
                            break
                        total += entry[0]
                    if total < best.get(cid, (INF,))[0]:
                        best[cid] = (total, enode)
                        changed = True
        return best

    def _build(self, enode, best):
        kids = [self._build(best[self.find(k)][1], best) for k in enode.children]
        return head_to_term(enode.head, kids)

    # -- saturation -----------------------------------------------------------

    def run(self, rules, limits=None, ctx=None, schedule=("control", "datapath")):
        """Alternate rewrite sets until saturation or a limit.

        Odd iterations apply the first set in `schedule`, even iterations
        the second.  Rules whose `set` is "gate" run with the datapath set.
        Limits are stop reasons, not errors; the node limit may overshoot
        by at most one iteration's growth, which the report reflects.
        """
        limits = limits or RunLimits()
        sets = {"control": [], "datapath": []}
        for rule in rules:
            bucket = "datapath" if rule.set in ("datapath", "gate") else "control"
            sets[bucket].append(rule)
        for bucket in sets.values():
            bucket.sort(key=lambda r: r.name)

        counts = {r.name: 0 for r in rules}
        # Saturation needs a full quiet cycle over the schedule; with no
        # rules at all a single quiet iteration settles it.
        needed_quiet = len(schedule) if any(sets.values()) else 1
        quiet = 0
        stop = "iterations"
        start = time.monotonic()
        iteration = 0

        self.rebuild()
        self.set_budget(start + limits.time_limit, limits.node_limit)
        try:
            while iteration < limits.iterations:
                iteration += 1
                active = sets[schedule[(iteration - 1) % len(schedule)]]
                before_version = self.version
                for rule in active:
                    counts[rule.name] += rule.apply(self, ctx)
                    self.rebuild()
                    if self.budget_exhausted():
                        break
                quiet = quiet + 1 if self.version == before_version else 0
                if quiet >= needed_quiet:
                    stop = "saturated"
                    break
                if self.node_count >= limits.node_limit:
                    stop = "node-limit"
                    break
                if time.monotonic() - start > limits.time_limit:
                    stop = "time-limit"
                    break
            else:
                stop = "iterations"
        finally:
            self.set_budget(None, None)

        return RunReport(iterations=iteration, nodes=self.node_count,
                         classes=self.class_count, stop_reason=stop,
                         elapsed_ms=(time.monotonic() - start) * 1000.0,
                         per_rule_match_counts=counts)


@dataclass
class RunLimits:
    iterations: int = 30
    node_limit: int = 100_000
    time_limit: float = 60.0


@dataclass
class RunReport:
    iterations: int
    nodes: int
    classes: int
    stop_reason: str
    elapsed_ms: float
    per_rule_match_counts: dict

    def to_dict(self, include_elapsed=True):
        out = {
            "iterations": self.iterations,
            "nodes": self.nodes,
            "classes": self.classes,
            "stop_reason": self.stop_reason,
            "elapsed_ms": round(self.elapsed_ms, 3) if include_elapsed else None,
            "per_rule_match_counts": dict(sorted(self.per_rule_match_counts.items())),
        }
        return out

    def to_json(self, include_elapsed=True):
        return json.dumps(self.to_dict(include_elapsed), indent=2, sort_keys=True)
