"""Reference interpreter, randomized equivalence checking, proof chains.

The interpreter gives the IR its ground-truth semantics and doubles as the
oracle for every rewrite: two programs are checked by running both on many
randomized machine states (plus exhaustive sweeps when the input space is
small enough) and comparing final memory.

A cycle-accurate pipeline simulator lives here too; it is the independent
oracle for the closed-form pipelined-loop latency model.
"""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, field

from . import ir
from .ir import (Block, CallFunc, Const, For, Func, If, Load, Op, Seq, Store,
                 Var, mask, trip_count)


class InterpError(Exception):
    """Runtime failure during interpretation (bad index, missing function)."""


ADVERSARIAL_PROB = 0.1


@dataclass
class MachineState:
    scalars: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)
    rng_seed: int = 0

    def copy(self):
        return MachineState(dict(self.scalars),
                            {k: list(v) for k, v in self.arrays.items()},
                            self.rng_seed)

    def dump(self):
        return {"scalars": dict(self.scalars),
                "arrays": {k: list(v) for k, v in self.arrays.items()},
                "rng_seed": self.rng_seed}


def default_funcs(names):
    """Deterministic pure definitions for opaque functions.

    Each name hashes (stably) to a degree-2 polynomial with odd
    coefficients, applied per argument and summed.
    """
    table = {}
    for name in names:
        h = zlib.crc32(name.encode())
        coeffs = (2 * ((h >> 3) & 7) + 1, 2 * ((h >> 9) & 7) + 1, 2 * (h & 7) + 1)
        table[name] = _make_poly(coeffs)
    return table


def _make_poly(coeffs):
    a, b, c = coeffs

    def poly(*args):
        acc = c
        for x in args:
            acc += a * x * x + b * x
        return acc

    return poly


def opaque_names(prog):
    return sorted({t.name for t in ir.subterms(prog) if isinstance(t, CallFunc)})


class _Interp:
    def __init__(self, prog, state, funcs):
        self.prog = prog
        self.state = state
        self.funcs = funcs
        self.sizes = {name: size for name, size, _ in prog.arrays}

    def run(self):
        self.exec_stmt(self.prog.body)
        return self.state

    def expr(self, t, env):
        if isinstance(t, Const):
            return mask(t.value, t.ty.width)
        if isinstance(t, Var):
            try:
                return env[t.name]
            except KeyError:
                raise InterpError(f"unbound variable {t.name!r}") from None
        if isinstance(t, Op):
            args = [self.expr(o, env) for o in t.operands]
            return ir.eval_op(t.kind, t.ty.width, t.ty.signed, args)
        if isinstance(t, Load):
            idx = self.expr(t.index, env)
            return self.read(t.array, idx, t)
        if isinstance(t, CallFunc):
            fn = self.funcs.get(t.name)
            if fn is None:
                raise InterpError(f"no definition for function {t.name!r}")
            args = [self.expr(a, env) for a in t.args]
            return mask(fn(*args), t.ty.width)
        raise InterpError(f"not an expression: {t!r}")

    def read(self, array, idx, at):
        vec = self.state.arrays.get(array)
        if vec is None or not (0 <= idx < self.sizes.get(array, -1)):
            raise InterpError(
                f"out-of-bounds read {array}[{idx}] in {ir.print_program(at)}")
        return vec[idx]

    def exec_stmt(self, t, env=None):
        if env is None:
            env = {}
        if isinstance(t, Block):
            for s in t.statements:
                self.exec_stmt(s, env)
        elif isinstance(t, Seq):
            self.exec_stmt(t.first, env)
            self.exec_stmt(t.second, env)
        elif isinstance(t, Store):
            idx = self.expr(t.index, env)
            value = self.expr(t.value, env)
            vec = self.state.arrays.get(t.array)
            if vec is None or not (0 <= idx < self.sizes.get(t.array, -1)):
                raise InterpError(
                    f"out-of-bounds write {t.array}[{idx}] in {ir.print_program(t)}")
            vec[idx] = value
        elif isinstance(t, For):
            inner = dict(env)
            for k in range(trip_count(t)):
                inner[t.iv] = mask(t.lo + k * t.step, ir.IV_WIDTH)
                self.exec_stmt(t.body, inner)
        elif isinstance(t, If):
            if self.expr(t.cond, env) != 0:
                self.exec_stmt(t.then, env)
            else:
                self.exec_stmt(t.orelse, env)
        else:
            # Pure dataflow statement: evaluated for effect-free completeness
            # (an out-of-range index in dead code is still an error).
            self.expr(t, env)


def interpret(prog, state, funcs=None):
    """Run a program on a machine state, returning the final state.

    The input state must bind every parameter and every declared array at
    its declared size.  Values are masked to their declared widths.
    """
    if not isinstance(prog, Func):
        raise TypeError("interpret expects a Func term")
    if funcs is None:
        funcs = default_funcs(opaque_names(prog))
    out = state.copy()
    for name, ty in prog.params:
        if name not in out.scalars:
            raise InterpError(f"missing parameter {name!r} in state")
        out.scalars[name] = mask(out.scalars[name], ty.width)
    for name, size, ty in prog.arrays:
        if name.startswith("_"):
            out.arrays.setdefault(name, [0] * size)
        if name not in out.arrays:
            raise InterpError(f"missing array {name!r} in state")
        if len(out.arrays[name]) != size:
            raise InterpError(f"array {name!r} has size {len(out.arrays[name])}, "
                              f"declared {size}")
        out.arrays[name] = [mask(v, ty.width) for v in out.arrays[name]]
    interp = _Interp(prog, out, funcs)
    env = {name: out.scalars[name] for name, _ in prog.params}
    interp.exec_stmt(prog.body, env)
    return out


# ---------------------------------------------------------------------------
# Random state generation and validation
# ---------------------------------------------------------------------------

def _random_value(rng, width):
    if rng.random() < ADVERSARIAL_PROB:
        pick = rng.choice((0, 1, -1, -(1 << (width - 1)), (1 << width) - 1))
        return mask(pick, width)
    return rng.getrandbits(width)


def make_random_state(prog, rng):
    """Random machine state for a program's signature.

    Arrays whose names start with ``_`` are compiler scratch: they are
    zero-initialized and excluded from comparisons.
    """
    state = MachineState()
    for name, ty in prog.params:
        state.scalars[name] = _random_value(rng, ty.width)
    for name, size, ty in prog.arrays:
        if name.startswith("_"):
            state.arrays[name] = [0] * size
        else:
            state.arrays[name] = [_random_value(rng, ty.width) for _ in range(size)]
    return state


def signatures_match(p, q):
    """Programs agree on parameters and user-visible arrays."""
    if p.params != q.params:
        return False
    parrays = {a for a in p.arrays if not a[0].startswith("_")}
    qarrays = {a for a in q.arrays if not a[0].startswith("_")}
    return parrays == qarrays


def _visible_arrays(prog):
    return [name for name, _, _ in prog.arrays if not name.startswith("_")]


def _first_mismatch(prog, sp, sq):
    for name in _visible_arrays(prog):
        for i, (a, b) in enumerate(zip(sp.arrays[name], sq.arrays[name])):
            if a != b:
                return {"array": name, "index": i, "first": a, "second": b}
    return None


@dataclass
class ValidationResult:
    equivalent: bool
    runs: int
    counterexample: dict | None = None

    def to_json(self):
        out = {"equivalent": self.equivalent, "runs": self.runs}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        return out


def random_validate(p, q, runs=1000, seed=0, funcs=None):
    """Check two programs on seeded random states; report the first mismatch.

    This is a probabilistic stand-in for formal equivalence checking: it can
    refute equivalence but only builds confidence in it.
    """
    if not signatures_match(p, q):
        raise ValueError("programs do not share a signature")
    if funcs is None:
        funcs = default_funcs(sorted(set(opaque_names(p)) | set(opaque_names(q))))
    rng = random.Random(seed)
    for run in range(runs):
        state = make_random_state(p, rng)
        state.rng_seed = seed
        sp = interpret(p, state, funcs)
        sq = interpret(q, state, funcs)
        bad = _first_mismatch(p, sp, sq)
        if bad is not None:
            return ValidationResult(False, run + 1, {
                "run": run, "state": state.dump(), "mismatch": bad})
    return ValidationResult(True, runs)


def input_bits(prog):
    """Total number of input bits in a program's visible signature."""
    bits = sum(ty.width for _, ty in prog.params)
    bits += sum(size * ty.width for name, size, ty in prog.arrays
                if not name.startswith("_"))
    return bits


def exhaustive_validate(p, q, funcs=None, limit_bits=16):
    """Sweep all input assignments when the signature is small enough.

    Returns None when the input space exceeds 2**limit_bits states.
    """
    if not signatures_match(p, q):
        raise ValueError("programs do not share a signature")
    bits = input_bits(p)
    if bits > limit_bits:
        return None
    if funcs is None:
        funcs = default_funcs(sorted(set(opaque_names(p)) | set(opaque_names(q))))

    slots = [("scalar", name, ty.width) for name, ty in p.params]
    for name, size, ty in p.arrays:
        if not name.startswith("_"):
            slots.extend(("array", (name, i), ty.width) for i in range(size))

    total = 1 << bits
    for idx in range(total):
        state = MachineState()
        for name, size, _ in p.arrays:
            state.arrays[name] = [0] * size
        rest = idx
        for kind, key, width in slots:
            value = rest & ((1 << width) - 1)
            rest >>= width
            if kind == "scalar":
                state.scalars[key] = value
            else:
                state.arrays[key[0]][key[1]] = value
        sp = interpret(p, state, funcs)
        sq = interpret(q, state, funcs)
        bad = _first_mismatch(p, sp, sq)
        if bad is not None:
            return ValidationResult(False, idx + 1, {
                "run": idx, "state": state.dump(), "mismatch": bad})
    return ValidationResult(True, total)


# ---------------------------------------------------------------------------
# Pipeline simulator
# ---------------------------------------------------------------------------

def simulate_pipeline(constraints):
    """Cycle-accurate completion time of a pipelined loop.

    Iteration k issues at cycle k*P and completes at k*P + l; the result is
    the last completion time.  Kept as an explicit simulation so it stays
    independent of the closed-form latency model it cross-checks.
    """
    p, l = constraints.p, constraints.l
    done = 0
    start = 0
    for _ in range(constraints.n):
        finish = start + l
        if finish > done:
            done = finish
        start += p
    return done


# ---------------------------------------------------------------------------
# Proof chains
# ---------------------------------------------------------------------------

@dataclass
class ProofChain:
    """Sequence of programs from input to output, one rewrite step apart."""
    steps: list  # [(program_text, rule_name)], first rule_name is ""

    def __len__(self):
        return len(self.steps)


class ChainError(Exception):
    """The recorded rewrite trace does not connect input to output."""


def emit_proof_chain(trace, input_term, output_term, *, validate_runs=100,
                     seed=0, max_states=3000, funcs=None):
    """Connect input to output by replaying recorded rewrite equivalences.

    Each trace entry justifies replacing its before-term with its
    after-term (or the reverse; a union is symmetric, and reverse steps are
    marked).  A bidirectional breadth-first search finds a minimal-length
    chain; candidate moves at each state come from an index keyed by the
    state's subterms.  Every adjacent pair is re-validated on random
    states during emission.
    """
    # src term -> [(dst, rule name)]; both directions of every recorded union
    move_index = {}
    seen_moves = set()
    for j in trace:
        for src, dst, name in ((j.before, j.after, j.rule_name),
                               (j.after, j.before, j.rule_name + " [reverse]")):
            if src == dst or (src, dst) in seen_moves:
                continue
            seen_moves.add((src, dst))
            move_index.setdefault(src, []).append((dst, name))

    if input_term == output_term:
        return ProofChain([(ir.print_program(input_term), "")])

    def successors(term):
        for sub in set(ir.subterms(term)):
            for dst, name in move_index.get(sub, ()):
                succ, changed = ir.replace_subterm(term, sub, dst)
                if changed and succ != term:
                    yield succ, name

    # parents: term -> (predecessor, rule_name) per side
    fwd = {input_term: (None, "")}
    bwd = {output_term: (None, "")}
    frontier_f = [input_term]
    frontier_b = [output_term]
    meet = None
    states = 2

    while frontier_f and frontier_b and meet is None and states < max_states:
        # Expand the smaller frontier.
        if len(frontier_f) <= len(frontier_b):
            frontier, parents, other = frontier_f, fwd, bwd
            forward = True
        else:
            frontier, parents, other = frontier_b, bwd, fwd
            forward = False
        nxt = []
        for term in frontier:
            for succ, name in successors(term):
                if succ in parents:
                    continue
                parents[succ] = (term, name)
                nxt.append(succ)
                states += 1
                if succ in other:
                    meet = succ
                    break
                if states >= max_states:
                    break
            if meet is not None or states >= max_states:
                break
        if forward:
            frontier_f = nxt
        else:
            frontier_b = nxt

    if meet is None:
        # The breadth-first horizon was not enough (long chains through a
        # control landmark).  Fall back to a structure-directed connector.
        steps = _connect(move_index, input_term, output_term)
        if steps is None:
            raise ChainError("rewrite trace does not connect input to output")
        path = [(input_term, "")] + steps
        out_steps = [(ir.print_program(t), rule) for t, rule in path]
        for (ta, _), (tb, _) in zip(path, path[1:]):
            result = random_validate(ta, tb, runs=validate_runs, seed=seed,
                                     funcs=funcs)
            if not result.equivalent:
                raise ChainError(
                    f"adjacent proof steps disagree: {result.counterexample}")
        return ProofChain(out_steps)

    # Stitch the two halves together.
    left = []
    term = meet
    while term is not None:
        prev, rule = fwd[term]
        left.append((term, rule))
        term = prev
    left.reverse()

    right = []
    term = meet
    while True:
        prev, rule = bwd[term]
        if prev is None:
            break
        # Walking back toward the output flips each recorded move.
        flipped = rule[:-len(" [reverse]")] if rule.endswith(" [reverse]") \
            else rule + " [reverse]"
        right.append((prev, flipped))
        term = prev

    path = left + right
    steps = [(ir.print_program(t), rule) for t, rule in path]

    for (ta, _), (tb, _) in zip(path, path[1:]):
        result = random_validate(ta, tb, runs=validate_runs, seed=seed, funcs=funcs)
        if not result.equivalent:
            raise ChainError(
                f"adjacent proof steps disagree: {result.counterexample}")
    return ProofChain(steps)


def _connect(move_index, a, b, depth=14, budget=None):
    """Structure-directed chain search: list of (term, rule) steps, or None.

    Tries, in order: an exact recorded move a -> b; pairwise child chains
    when the heads agree (each child chain lifted into the parent context);
    recorded moves whose endpoint matches a or b exactly; and finally a few
    heuristically ranked one-step successors.  The budget counts work, so
    failure on unconnectable pairs stays cheap.
    """
    if budget is None:
        budget = [30000]
    memo = set()
    sub_cache = {}

    def subs(t):
        got = sub_cache.get(t)
        if got is None:
            got = set(ir.subterms(t))
            sub_cache[t] = got
        return got

    exact = {}
    by_dst = {}
    for src, moves in move_index.items():
        for dst, name in moves:
            exact.setdefault((src, dst), name)
            by_dst.setdefault(dst, []).append((src, name))

    def go(a, b, depth):
        if a == b:
            return []
        if depth <= 0 or budget[0] <= 0:
            return None
        key = (a, b, depth)
        if key in memo:
            return None
        budget[0] -= 1

        name = exact.get((a, b))
        if name is not None:
            return [(b, name)]

        # Structural descent is bounded by term height, so it keeps the
        # full bridge budget; only rewrite steps consume depth.
        if _head_of(a) == _head_of(b):
            ka, kb = ir.children(a), ir.children(b)
            if len(ka) == len(kb):
                steps = []
                current = list(ka)
                ok = True
                for i, (ca, cb) in enumerate(zip(ka, kb)):
                    sub = go(ca, cb, depth)
                    if sub is None:
                        ok = False
                        break
                    for term, rule in sub:
                        current[i] = term
                        steps.append((ir.rebuild_term(a, list(current)), rule))
                if ok:
                    return steps

        for dst, name in move_index.get(a, ()):
            rest = go(dst, b, depth - 1)
            if rest is not None:
                return [(dst, name)] + rest
        for src, name in by_dst.get(b, ()):
            head = go(a, src, depth - 1)
            if head is not None:
                return head + [(b, name)]

        # last resort: a few one-step successors ranked by shared structure
        if depth >= 3 and budget[0] > 0:
            target_subs = subs(b)
            scored = []
            candidates = [s for s in subs(a) if s in move_index]
            budget[0] -= len(candidates)
            for sub in candidates:
                for dst, name in move_index[sub]:
                    succ, changed = ir.replace_subterm(a, sub, dst)
                    if changed and succ != a:
                        score = len(subs(succ) & target_subs)
                        scored.append((-score, ir.print_program(succ), succ, name))
            scored.sort()
            for _, _, succ, name in scored[:8]:
                rest = go(succ, b, depth - 1)
                if rest is not None:
                    return [(succ, name)] + rest

        memo.add(key)
        return None

    return go(a, b, depth)


def _head_of(t):
    from .egraph import term_head
    return term_head(t)
