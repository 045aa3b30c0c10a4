"""Pipelined-loop performance model.

Every loop carries four scheduling constraints: initiation interval P,
iteration latency l, trip count N and the multiset A of memory accesses in
its body.  The total latency of a pipelined loop is

    L = (N - 1) * P + l

Constraints of the input program's loops come from an internal estimator
(an operator latency table plus recurrence/resource analysis) or from
explicit per-loop overrides; loop-level transformations propagate them:

    fuse:     l' = max(l1, l2)   N' = max(N1, N2)
              A' = A1 u A2      P' = max(P1, P2, M(A'))
    flatten:  (P_in, l_in, N_in * N_out, A_in)
    unroll:   (1, N * l, 1, N * A)

where M(A) is the largest per-array access count, assuming single-ported
memories (a ports table relaxes this to ceil(count / ports)).

All numbers produced here are modeled cycles, never measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ir
from .ir import Block, CallFunc, Const, For, If, Load, Op, Seq, Store, Var


class ScheduleError(Exception):
    pass


DEFAULT_OP_CYCLES = {
    "add": 1, "sub": 1, "mul": 3, "shl": 0, "shr": 0,
    "and": 1, "or": 1, "xor": 1, "not": 1, "neg": 1,
    "eq": 1, "lt": 1, "select": 0,
}


@dataclass
class LatencyTable:
    """Cycles per operator kind, named function and memory port."""
    ops: dict = field(default_factory=lambda: dict(DEFAULT_OP_CYCLES))
    funcs: dict = field(default_factory=dict)
    load: int = 1
    store: int = 1

    def op_cycles(self, kind):
        try:
            return self.ops[kind]
        except KeyError:
            raise ScheduleError(f"no latency entry for operator {kind!r}") from None

    def func_cycles(self, name):
        try:
            return self.funcs[name]
        except KeyError:
            raise ScheduleError(
                f"no latency entry for function {name!r}; add it to the "
                "schedule config") from None


@dataclass(frozen=True, slots=True)
class SchedConstraints:
    p: int              # initiation interval, cycles >= 1
    l: int              # iteration latency, cycles >= 1
    n: int              # trip count >= 1
    a: tuple = ()       # sorted ((array, access_count), ...)

    def __post_init__(self):
        if self.p < 1 or self.l < 1 or self.n < 1:
            raise ValueError("P, l and N must all be at least 1")
        if self.p > self.l:
            raise ValueError("initiation interval cannot exceed iteration latency")

    def access_counts(self):
        return dict(self.a)


def accesses_of(counts):
    """Canonical A field from an {array: count} mapping."""
    return tuple(sorted((k, v) for k, v in counts.items() if v))


def max_port_pressure(a, ports=None):
    """M(A): worst per-array access count, scaled by available ports."""
    worst = 0
    for array, count in a:
        p = (ports or {}).get(array, 1)
        worst = max(worst, -(-count // p))
    return worst


def loop_latency(c, pipelined=True):
    """Total modeled latency of one loop execution."""
    if pipelined:
        return (c.n - 1) * c.p + c.l
    return c.n * c.l


def fuse_constraints(c1, c2, ports=None):
    counts = c1.access_counts()
    for array, count in c2.a:
        counts[array] = counts.get(array, 0) + count
    a = accesses_of(counts)
    p = max(c1.p, c2.p, max_port_pressure(a, ports), 1)
    # Port pressure can push the interval past both body latencies; the
    # serialized accesses stretch the iteration accordingly.
    l = max(c1.l, c2.l, p)
    return SchedConstraints(p, l, max(c1.n, c2.n), a)


def flatten_constraints(outer, inner):
    return SchedConstraints(inner.p, inner.l, inner.n * outer.n, inner.a)


def unroll_constraints(c):
    counts = {array: count * c.n for array, count in c.a}
    return SchedConstraints(1, c.n * c.l, 1, accesses_of(counts))


# ---------------------------------------------------------------------------
# Estimation of the input program's constraints
# ---------------------------------------------------------------------------

def _body_latency(t, lat, loop_latencies, memo):
    """Critical path over the shared dataflow DAG of one iteration.

    Identical subterms are one hardware node, so the recorded load feeding a
    later store contributes a single path.  A nested loop contributes its
    whole modeled latency.
    """
    hit = memo.get(t)
    if hit is not None:
        return hit
    if isinstance(t, (Const, Var)):
        out = 0
    elif isinstance(t, Op):
        out = lat.op_cycles(t.kind) + max(
            (_body_latency(o, lat, loop_latencies, memo) for o in t.operands))
    elif isinstance(t, Load):
        out = lat.load + _body_latency(t.index, lat, loop_latencies, memo)
    elif isinstance(t, Store):
        out = lat.store + max(_body_latency(t.index, lat, loop_latencies, memo),
                              _body_latency(t.value, lat, loop_latencies, memo))
    elif isinstance(t, CallFunc):
        args = max((_body_latency(a, lat, loop_latencies, memo) for a in t.args),
                   default=0)
        out = lat.func_cycles(t.name) + args
    elif isinstance(t, Seq):
        out = max(_body_latency(t.first, lat, loop_latencies, memo),
                  _body_latency(t.second, lat, loop_latencies, memo))
    elif isinstance(t, Block):
        out = max((_body_latency(s, lat, loop_latencies, memo)
                   for s in t.statements), default=0)
    elif isinstance(t, If):
        out = (_body_latency(t.cond, lat, loop_latencies, memo)
               + max(_body_latency(t.then, lat, loop_latencies, memo),
                     _body_latency(t.orelse, lat, loop_latencies, memo)))
    elif isinstance(t, For):
        out = loop_latencies[t.label]
    else:
        raise ScheduleError(f"cannot schedule term {t!r}")
    memo[t] = out
    return out


def _carried_distance(write, read, loop):
    """Smallest d >= 1 with write(i) aliasing read(i + d), or None.

    Affine indices are solved exactly over the iteration domain; anything
    else is reported as None (caller treats that conservatively).
    """
    n = ir.trip_count(loop)
    wa = ir.affine_coeffs(write.index, loop.iv)
    ra = ir.affine_coeffs(read.index, loop.iv)

    def iter_value(k):
        return loop.lo + k * loop.step

    if wa is not None and ra is not None:
        w0, w1 = wa
        r0, r1 = ra
        for d in range(1, n):
            # solve w0 + w1*iter(i) == r0 + r1*iter(i+d) over i
            for i in range(0, n - d):
                if w0 + w1 * iter_value(i) == r0 + r1 * iter_value(i + d):
                    return d
                # strides equal: distance is constant, one probe suffices
                if w1 == r1:
                    break
        return None

    # Exact enumeration through arbitrary pure index expressions.
    if n * n <= 1 << 16:
        wv = [ir.eval_index(write.index, {loop.iv: iter_value(k)}) for k in range(n)]
        rv = [ir.eval_index(read.index, {loop.iv: iter_value(k)}) for k in range(n)]
        if all(v is not None for v in wv) and all(v is not None for v in rv):
            best = None
            for i in range(n):
                for j in range(i + 1, n):
                    if wv[i] == rv[j]:
                        best = j - i if best is None else min(best, j - i)
                        break
            return best
        return 1  # unanalyzable: assume the tightest recurrence
    return 1


def estimate_loop(loop, lat, loop_latencies, ports=None):
    """Scheduling constraints for one loop from the latency table."""
    memo = {}
    body_lat = _body_latency(loop.body, lat, loop_latencies, memo)
    l = max(1, body_lat)

    direct = ir.direct_accesses(loop)
    counts = {}
    for acc in direct:
        counts[acc.array] = counts.get(acc.array, 0) + 1
    a = accesses_of(counts)

    recurrence = 0
    writes = [x for x in direct if x.kind == "store"]
    reads = [x for x in direct if x.kind == "load"]
    store_stmts = [t for t in ir.subterms(loop.body)
                   if isinstance(t, Store)]
    for w in writes:
        stmt = next((s for s in store_stmts
                     if s.array == w.array and s.index == w.index), None)
        cycle_lat = (_body_latency(stmt, lat, loop_latencies, memo)
                     if stmt is not None else l)
        for r in reads:
            if r.array != w.array:
                continue
            d = _carried_distance(w, r, loop)
            if d is not None:
                recurrence = max(recurrence, -(-cycle_lat // d))

    resource = max_port_pressure(a, ports)
    p = max(recurrence, resource, 1)
    l = max(l, p)
    return SchedConstraints(p, l, ir.trip_count(loop), a)


def seed_schedule(prog, lat, overrides=None, ports=None):
    """Constraints for every labeled loop in a program.

    Overrides win verbatim for (P, l); trip counts and access sets always
    come from the program text.
    """
    overrides = overrides or {}
    out = {}
    loop_latencies = {}

    def walk(t):
        for kid in ir.children(t):
            walk(kid)
        if isinstance(t, For):
            c = estimate_loop(t, lat, loop_latencies, ports)
            if t.label in overrides:
                p, l = overrides[t.label]
                c = SchedConstraints(p, l, c.n, c.a)
            if t.label in out:
                raise ScheduleError(f"duplicate loop label {t.label!r}")
            out[t.label] = c
            loop_latencies[t.label] = loop_latency(c)

    walk(prog)
    return out


def node_latency(constraints, pipelined=True):
    """Latency contribution of one e-node: its loop latency, or zero.

    A completely unrolled loop still counts as a loop with one iteration,
    so it keeps its body latency instead of dropping to zero.
    """
    if constraints is None:
        return 0
    return loop_latency(constraints, pipelined)


def program_loop_latency(prog, table, pipelined=True):
    """Sum of modeled loop latencies over the distinct loops of a term."""
    total = 0
    seen = set()
    for t in ir.subterms(prog):
        if isinstance(t, For) and t not in seen:
            seen.add(t)
            if t.label not in table:
                raise ScheduleError(f"no constraints for loop {t.label!r}")
            total += loop_latency(table[t.label], pipelined)
    return total
