"""Two-phase extraction and the end-to-end optimization pipeline.

Phase 1 (control, greedy): every loop e-node gets the latency
(N-1)*P + l from its scheduling constraints (other nodes cost zero), costs
propagate bottom-up, and each control e-class keeps only its
minimum-latency members.  Datapath e-classes are untouched, so the result
is a sub-e-graph whose representable terms all share the best control
skeleton.

Phase 2 (datapath, exact): over the restricted graph, pick one e-node per
needed e-class minimizing the summed bitwidth-dependent area with shared
subterms counted once.  Solved by 0-1 branch and bound with incremental
cycle rejection; a configurable time limit falls back to the greedy
fixpoint solution, flagged non-optimal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ir, sched
from .egraph import EGraph, ExtractError, RunLimits, head_to_term
from .ir import Const, Func


INF = float("inf")


# ---------------------------------------------------------------------------
# Area model
# ---------------------------------------------------------------------------

def _ceil_log2(w):
    return max(1, (w - 1).bit_length())


@dataclass
class AreaModel:
    """Gate-unit cost per operator as a function of bitwidth.

    Entries are (c0, c1, c2) polynomial coefficients: c0 + c1*w + c2*w*w.
    Shifts by a constant are free wiring; shifts by a variable cost a
    barrel shifter (w * ceil(log2 w)).  Opaque calls are priced like a
    multiplier so hardware sharing rewrites have something to save.
    """
    table: dict = field(default_factory=dict)

    DEFAULTS = {
        "add": (0, 1, 0), "sub": (0, 1, 0), "mul": (0, 0, 1),
        "and": (0, 1, 0), "or": (0, 1, 0), "xor": (0, 1, 0),
        "eq": (0, 1, 0), "lt": (0, 1, 0), "select": (0, 1, 0),
        "call": (0, 0, 1),
    }

    def poly(self, kind):
        return self.table.get(kind) or self.DEFAULTS.get(kind)

    def op_cost(self, kind, width, shift_is_constant=True):
        if kind == "not":
            c = self.table.get("not")
            if c is not None:
                return c[0] + c[1] * width + c[2] * width * width
            return (width + 1) // 2
        if kind in ("shl", "shr"):
            c = self.table.get(kind)
            if c is not None:
                return c[0] + c[1] * width + c[2] * width * width
            return 0 if shift_is_constant else width * _ceil_log2(width)
        c = self.poly(kind)
        if c is None:
            return 0
        return c[0] + c[1] * width + c[2] * width * width

    def enode_cost(self, g, enode):
        tag = enode.tag
        if tag == "op":
            kind, width = enode.head[1], enode.head[2]
            if kind in ("shl", "shr"):
                const_amt = g.class_const(enode.children[1]) is not None
                return self.op_cost(kind, width, const_amt)
            return self.op_cost(kind, width)
        if tag == "call":
            return self.op_cost("call", enode.head[2])
        return 0

    def term_cost(self, t):
        """DAG area of a term: distinct subterms counted once."""
        total = 0
        for sub in set(ir.subterms(t)):
            if isinstance(sub, ir.Op):
                if sub.kind in ("shl", "shr"):
                    total += self.op_cost(sub.kind, sub.ty.width,
                                          isinstance(sub.operands[1], Const))
                else:
                    total += self.op_cost(sub.kind, sub.ty.width)
            elif isinstance(sub, ir.CallFunc):
                total += self.op_cost("call", sub.ty.width)
        return total


def area_cost(kind, width, shift_is_constant=True):
    """Gate-unit cost of one operator instance under the default model."""
    return AreaModel().op_cost(kind, width, shift_is_constant)


# ---------------------------------------------------------------------------
# Phase 1: control extraction
# ---------------------------------------------------------------------------

def _node_constraints(enode, label_constraints):
    if enode.tag == "for":
        c = label_constraints.get(enode.head[1])
        if c is None:
            raise ExtractError(
                f"loop {enode.head[1]!r} has no scheduling constraints "
                "(propagation gap)")
        return c
    return None


@dataclass
class ControlSelection:
    allowed: dict          # class root -> list of ENodes surviving phase 1
    root_cost: float       # summed loop latency of the best representation

    def is_allowed(self, cid, enode):
        keep = self.allowed.get(cid)
        return keep is None or enode in keep


def extract_control(g, label_constraints, root=None, pipelined=True):
    """Restrict every control e-class to its minimum-latency members."""
    g.rebuild()

    def latency_of(enode):
        c = _node_constraints(enode, label_constraints)
        return sched.node_latency(c, pipelined)

    best = g._fixpoint_costs(latency_of)

    allowed = {}
    for cid, nodes in g.classes.items():
        if g.kind[cid] != "control":
            continue
        class_best = best.get(cid, (INF, None))[0]
        keep = []
        for enode in nodes:
            total = latency_of(enode)
            for kid in enode.children:
                entry = best.get(g.find(kid))
                if entry is None:
                    total = INF
                    break
                total += entry[0]
            if total == class_best:
                keep.append(enode)
        allowed[cid] = keep if keep else list(nodes)

    root_cost = INF
    if root is not None:
        entry = best.get(g.find(root))
        if entry is None:
            raise ExtractError("root class has no finite control cost")
        root_cost = entry[0]
    return ControlSelection(allowed, root_cost)


# ---------------------------------------------------------------------------
# Phase 2: datapath extraction (exact selection, DAG cost)
# ---------------------------------------------------------------------------

@dataclass
class DatapathResult:
    term: ir.Term
    cost: float
    optimal: bool


STEPS_PER_SECOND = 250_000  # rough calibration for the search budget


def extract_datapath(g, area, root, selection=None, time_limit=10.0):
    """Minimum-area representable term of the root class.

    Chooses one e-node per reachable e-class (DAG cost: each selected node
    counted once); exact via branch and bound with cycle rejection, falling
    back to the best solution found when the budget runs out (flagged
    non-optimal).  The budget is counted in search steps rather than wall
    time so identical runs stop at identical points.
    """
    g.rebuild()
    root = g.find(root)

    def node_area(enode):
        return area.enode_cost(g, enode)

    def allowed_nodes(cid):
        nodes = list(g.classes[cid])
        if selection is not None:
            keep = selection.allowed.get(cid)
            if keep:
                nodes = [n for n in nodes if n in keep]
        return nodes

    # Greedy incumbent from the tree-cost fixpoint (always acyclic).
    best_tree = {}
    changed = True
    while changed:
        changed = False
        for cid in g.classes:
            for enode in allowed_nodes(cid):
                total = node_area(enode)
                for kid in enode.children:
                    entry = best_tree.get(g.find(kid))
                    if entry is None:
                        total = INF
                        break
                    total += entry[0]
                if total < best_tree.get(cid, (INF,))[0]:
                    best_tree[cid] = (total, enode)
                    changed = True
    if root not in best_tree:
        raise ExtractError("infeasible: no representable term at the root")

    def selection_of_greedy():
        chosen = {}
        stack = [root]
        while stack:
            cid = stack.pop()
            if cid in chosen:
                continue
            enode = best_tree[cid][1]
            chosen[cid] = enode
            stack.extend(g.find(k) for k in enode.children)
        return chosen

    def dag_cost(chosen):
        return sum(node_area(n) for n in chosen.values())

    incumbent = selection_of_greedy()
    incumbent_cost = dag_cost(incumbent)

    # Branch and bound over per-class choices, cheapest candidates first.
    min_area = {}
    candidates = {}
    for cid in g.classes:
        nodes = [n for n in allowed_nodes(cid)
                 if all(g.find(k) in best_tree for k in n.children)]
        nodes.sort(key=node_area)
        candidates[cid] = nodes
        min_area[cid] = node_area(nodes[0]) if nodes else INF

    step_budget = max(10_000, int(time_limit * STEPS_PER_SECOND))
    steps = 0
    best_state = {"chosen": incumbent, "cost": incumbent_cost, "optimal": True}

    chosen = {}
    needed = [root]
    needed_set = {root}
    min_prefix = [0, min_area[root]]  # prefix sums of min_area over `needed`

    def creates_cycle(cid, enode):
        # would an edge cid -> child close a loop through chosen edges?
        # A back edge needs an already-known class; all-new children are safe.
        targets = [g.find(k) for k in enode.children]
        if all(k not in chosen and k not in needed_set for k in targets):
            return False
        stack = targets
        seen = set()
        while stack:
            cur = stack.pop()
            if cur == cid:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            picked = chosen.get(cur)
            if picked is not None:
                stack.extend(g.find(k) for k in picked.children)
        return False

    def lower_bound(cost, pos):
        # positions before pos are always assigned, the tail never is
        return cost + min_prefix[-1] - min_prefix[pos]

    # Explicit DFS stack: one frame per class decision so deep graphs do
    # not hit the interpreter recursion limit.
    frames = []  # [cid, next_candidate, needed_mark, cost_before, pos]
    pos, cost = 0, 0.0
    exhausted = False
    while True:
        steps += 1
        if steps > step_budget:
            exhausted = True
        if not exhausted:
            while pos < len(needed) and needed[pos] in chosen:
                pos += 1
            if lower_bound(cost, pos) < best_state["cost"]:
                if pos < len(needed):
                    frames.append([needed[pos], 0, len(needed), cost, pos])
                else:
                    best_state["chosen"] = dict(chosen)
                    best_state["cost"] = cost
        if exhausted:
            best_state["optimal"] = False
            break
        # advance the innermost frame to its next viable candidate
        moved = False
        while frames:
            frame = frames[-1]
            cid, idx, mark, cost0, pos0 = frame
            if cid in chosen:
                del chosen[cid]
                for dropped in needed[mark:]:
                    needed_set.discard(dropped)
                del needed[mark:]
                del min_prefix[mark + 1:]
            while idx < len(candidates[cid]):
                enode = candidates[cid][idx]
                idx += 1
                if creates_cycle(cid, enode):
                    continue
                chosen[cid] = enode
                for kid in enode.children:
                    k = g.find(kid)
                    if k not in chosen and k not in needed_set:
                        needed.append(k)
                        needed_set.add(k)
                        min_prefix.append(min_prefix[-1] + min_area[k])
                frame[1] = idx
                cost = cost0 + node_area(enode)
                pos = pos0 + 1
                moved = True
                break
            if moved:
                break
            frames.pop()
        if not moved:
            break

    built = _build_selection(g, best_state["chosen"], root)
    return DatapathResult(built, best_state["cost"], best_state["optimal"])


def _build_selection(g, chosen, root):
    enode = chosen[g.find(root)]
    kids = [_build_selection(g, chosen, k) for k in enode.children]
    return head_to_term(enode.head, kids)


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

@dataclass
class OptimizeConfig:
    latency: sched.LatencyTable = field(default_factory=sched.LatencyTable)
    area: AreaModel = field(default_factory=AreaModel)
    overrides: dict = field(default_factory=dict)
    ports: dict = field(default_factory=dict)
    limits: RunLimits = field(default_factory=RunLimits)
    disable_control: bool = False
    disable_datapath: bool = False
    pipelined: bool = True
    unroll_threshold: int = 64
    seed: int = 0
    ilp_time_limit: float = 10.0


@dataclass
class OptimizeReport:
    modeled_cycles_before: float
    modeled_cycles_after: float
    modeled_area_before: float
    modeled_area_after: float
    egraph: object
    phase2_optimal: bool
    trace_len: int

    def to_dict(self, include_elapsed=True):
        return {
            "modeled_cycles_before": self.modeled_cycles_before,
            "modeled_cycles_after": self.modeled_cycles_after,
            "modeled_area_before": self.modeled_area_before,
            "modeled_area_after": self.modeled_area_after,
            "phase1_delta": self.modeled_cycles_after - self.modeled_cycles_before,
            "phase2_delta": self.modeled_area_after - self.modeled_area_before,
            "egraph": self.egraph.to_dict(include_elapsed),
            "phase2_optimal": self.phase2_optimal,
            "trace_len": self.trace_len,
        }


@dataclass
class OptimizeResult:
    program: ir.Term
    report: OptimizeReport
    trace: list
    graph: EGraph


def optimize(prog, config=None):
    """normalize -> seed schedule -> saturate -> extract control -> extract area.

    Returns the chosen program plus a report of modeled metrics before and
    after (cycles from the loop latency model, area from the gate model).
    """
    from . import rewrites  # local import: rewrites depends on egraph/sched

    config = config or OptimizeConfig()
    if config.disable_control and config.disable_datapath:
        raise ValueError("both rewrite sets disabled; nothing to explore")
    if not isinstance(prog, Func):
        raise TypeError("optimize expects a Func term")

    constraints = sched.seed_schedule(prog, config.latency, config.overrides,
                                      config.ports)
    before_cycles = sched.program_loop_latency(prog, constraints, config.pipelined)
    before_area = config.area.term_cost(prog)

    ctx = rewrites.RunContext(
        latency=config.latency,
        constraints=dict(constraints),
        ports=config.ports,
        unroll_threshold=config.unroll_threshold,
    )

    rules = []
    for rule in rewrites.all_rules():
        bucket = "datapath" if rule.set in ("datapath", "gate") else "control"
        if bucket == "control" and config.disable_control:
            continue
        if bucket == "datapath" and config.disable_datapath:
            continue
        rules.append(rule)

    g = EGraph()
    root = g.add(prog)
    run_report = g.run(rules, config.limits, ctx)

    selection = extract_control(g, ctx.constraints, root=root,
                                pipelined=config.pipelined)
    result = extract_datapath(g, config.area, root, selection,
                              time_limit=config.ilp_time_limit)

    if g.add(result.term) != g.find(root):
        raise ExtractError("extracted term escaped the root e-class")

    # Report cycles with the same distinct-loop sum used for the input so
    # the phase deltas compare like with like.
    after_cycles = sched.program_loop_latency(result.term, ctx.constraints,
                                              config.pipelined)
    report = OptimizeReport(
        modeled_cycles_before=before_cycles,
        modeled_cycles_after=after_cycles,
        modeled_area_before=before_area,
        modeled_area_after=result.cost,
        egraph=run_report,
        phase2_optimal=result.optimal,
        trace_len=len(g.trace),
    )
    return OptimizeResult(result.term, report, list(g.trace), g)
