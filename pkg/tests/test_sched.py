"""Latency model: estimation, the closed form, and propagation formulas."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from seer import ir, sched, validate
from seer.ir import Block, Const, For, Func, IntType, Load, Op, Store, Var
from seer.sched import (LatencyTable, SchedConstraints, flatten_constraints,
                        fuse_constraints, loop_latency, seed_schedule,
                        unroll_constraints)

I32 = IntType(32, True)

MOTIVATING = open("src/seer/corpus/motivating.seer").read()


def motivating_schedule(f=10, g=100, h=1):
    prog = ir.parse_program(MOTIVATING)
    lat = LatencyTable(funcs={"f": f, "g": g, "h": h})
    return seed_schedule(prog, lat)


def test_seed_schedule_recurrence_bound_loop():
    table = motivating_schedule()
    c = table["loop_1"]
    # carried dependence distance 1 through x, cycle load+f+store = 12
    assert (c.p, c.l, c.n) == (12, 12, 100)
    assert dict(c.a) == {"x": 2}


def test_seed_schedule_port_bound_loop():
    table = motivating_schedule()
    c = table["loop_2"]
    assert (c.p, c.l, c.n) == (2, 102, 100)
    assert dict(c.a) == {"y": 2}


def test_seed_schedule_distance_two():
    table = motivating_schedule()
    c = table["loop_3"]
    # x written at i+2, read at i: distance 2, cycle latency 3 -> ceil(3/2)=2
    assert (c.p, c.l, c.n) == (2, 3, 100)


def test_override_wins_verbatim():
    prog = ir.parse_program(MOTIVATING)
    lat = LatencyTable(funcs={"f": 10, "g": 100, "h": 1})
    table = seed_schedule(prog, lat, overrides={"loop_1": (2, 5)})
    assert (table["loop_1"].p, table["loop_1"].l) == (2, 5)
    assert table["loop_1"].n == 100


def test_missing_function_latency_errors():
    prog = ir.parse_program(MOTIVATING)
    with pytest.raises(sched.ScheduleError, match="no latency entry"):
        seed_schedule(prog, LatencyTable())


def test_constraint_invariants():
    with pytest.raises(ValueError):
        SchedConstraints(0, 1, 1)
    with pytest.raises(ValueError):
        SchedConstraints(5, 3, 1)  # P > l
    with pytest.raises(ValueError):
        SchedConstraints(1, 1, 0)


# --- closed form -------------------------------------------------------------

def test_loop_latency_examples():
    assert loop_latency(SchedConstraints(2, 5, 3)) == 9
    assert loop_latency(SchedConstraints(1, 7, 1)) == 7
    assert loop_latency(SchedConstraints(12, 12, 100)) == 1200


def test_no_pipeline_mode():
    assert loop_latency(SchedConstraints(2, 5, 3), pipelined=False) == 15


@given(st.integers(1, 200), st.integers(0, 199), st.integers(1, 1000))
@settings(max_examples=250, deadline=None)
def test_latency_is_monotone(p, extra, n):
    c = SchedConstraints(p, p + extra, n)
    assert loop_latency(SchedConstraints(p, p + extra, n + 1)) >= loop_latency(c)
    assert loop_latency(SchedConstraints(p, p + extra + 1, n)) >= loop_latency(c)
    if p + 1 <= p + extra:
        assert loop_latency(SchedConstraints(p + 1, p + extra, n)) >= loop_latency(c)


# --- propagation formulas ----------------------------------------------------

def test_fuse_constraints_example():
    c1 = SchedConstraints(12, 12, 100, (("x", 2),))
    c2 = SchedConstraints(2, 102, 100, (("y", 2),))
    fused = fuse_constraints(c1, c2)
    assert (fused.p, fused.l, fused.n) == (12, 102, 100)
    assert dict(fused.a) == {"x": 2, "y": 2}


def test_fuse_identity_case():
    c = SchedConstraints(1, 1, 1)
    assert fuse_constraints(c, c) == c


def test_fuse_shared_array_raises_pressure():
    c1 = SchedConstraints(1, 5, 10, (("z", 2),))
    c2 = SchedConstraints(1, 4, 10, (("z", 2),))
    fused = fuse_constraints(c1, c2)
    assert fused.p == 4  # M(A') = 4 on a single-ported z


def test_fuse_with_ports():
    c1 = SchedConstraints(1, 5, 10, (("z", 2),))
    c2 = SchedConstraints(1, 4, 10, (("z", 2),))
    fused = fuse_constraints(c1, c2, ports={"z": 2})
    assert fused.p == 2


def test_flatten_constraints_example():
    outer = SchedConstraints(1, 3, 4)
    inner = SchedConstraints(2, 7, 5, (("m", 1),))
    flat = flatten_constraints(outer, inner)
    assert flat == SchedConstraints(2, 7, 20, (("m", 1),))
    # flattened latency beats the stacked nest
    assert loop_latency(flat) == 45
    assert 4 * loop_latency(inner) == 60


def test_flatten_outer_single_trip_identity():
    outer = SchedConstraints(1, 1, 1)
    inner = SchedConstraints(2, 7, 5)
    assert flatten_constraints(outer, inner) == inner


def test_unroll_constraints_example():
    c = SchedConstraints(2, 5, 3, (("x", 1),))
    u = unroll_constraints(c)
    assert u == SchedConstraints(1, 15, 1, (("x", 3),))
    # unrolling is not always a win
    assert loop_latency(c) == 9 and loop_latency(u) == 15


def test_unroll_single_iteration():
    c = SchedConstraints(1, 4, 1, (("x", 2),))
    assert unroll_constraints(c) == SchedConstraints(1, 4, 1, (("x", 2),))


def test_node_latency_loop_vs_other():
    assert sched.node_latency(SchedConstraints(2, 5, 3)) == 9
    assert sched.node_latency(None) == 0
    # a fully unrolled loop keeps its body latency
    assert sched.node_latency(SchedConstraints(1, 15, 1)) == 15


# --- formulas agree with the cycle-accurate simulator ------------------------

@given(st.integers(1, 50), st.integers(0, 50), st.integers(1, 100))
@settings(max_examples=200, deadline=None)
def test_closed_form_equals_simulator(p, extra, n):
    c = SchedConstraints(p, p + extra, n)
    assert loop_latency(c) == validate.simulate_pipeline(c)


@given(st.data())
@settings(max_examples=100, deadline=None)
def test_propagated_fuse_equals_simulator(data):
    p1 = data.draw(st.integers(1, 20))
    l1 = p1 + data.draw(st.integers(0, 30))
    p2 = data.draw(st.integers(1, 20))
    l2 = p2 + data.draw(st.integers(0, 30))
    n = data.draw(st.integers(1, 50))
    c1 = SchedConstraints(p1, l1, n, (("a", 1),))
    c2 = SchedConstraints(p2, l2, n, (("b", 1),))
    fused = fuse_constraints(c1, c2)
    assert loop_latency(fused) == validate.simulate_pipeline(fused)


# --- propagation agrees with re-estimation on the transformed AST ------------

def _single_loop(label, array, n, func):
    return For(label, "i", 0, n, 1,
               Block((Store(array, Var("i", I32),
                            ir.CallFunc(func, (Load(array, Var("i", I32), I32),), I32)),)))


@given(st.integers(1, 30), st.integers(1, 30), st.integers(2, 60))
@settings(max_examples=60, deadline=None)
def test_fuse_formula_matches_reseeding(fl, gl, n):
    """Disjoint-array fusable pairs: formula == estimator on the fused AST."""
    from seer.rewrites import loop_fusion
    lat = LatencyTable(funcs={"f": fl, "g": gl})
    a = _single_loop("la", "x", n, "f")
    b = _single_loop("lb", "y", n, "g")
    prog = Func("p", (), (("x", n, I32), ("y", n, I32)),
                Block((ir.Seq(a, b),)))
    table = seed_schedule(prog, lat)
    fused_formula = fuse_constraints(table["la"], table["lb"])

    fused_ast = loop_fusion(a, b)
    fused_prog = Func("p", (), (("x", n, I32), ("y", n, I32)),
                      Block((fused_ast,)))
    reseeded = seed_schedule(fused_prog, lat)[fused_ast.label]
    assert fused_formula == reseeded


def test_flatten_formula_matches_reseeding():
    """Perfect power-of-two nest; index rebuild configured as free wiring.

    Flattening reconstructs indices with shift/mask; a constant mask is bit
    selection in hardware, so the estimator preconditions hold when `and`
    costs zero cycles (shifts already default to zero).
    """
    from seer.rewrites import loop_flatten
    lat = LatencyTable(funcs={"f": 12})
    lat.ops["and"] = 0
    inner = For("li", "j", 0, 8, 1,
                Block((Store("x", Var("j", I32),
                             ir.CallFunc("f", (Load("x", Var("j", I32), I32),), I32)),)))
    outer = For("lo", "i", 0, 4, 1, Block((inner,)))
    prog = Func("p", (), (("x", 8, I32),), Block((outer,)))
    table = seed_schedule(prog, lat)
    formula = flatten_constraints(table["lo"], table["li"])

    flat = loop_flatten(outer)
    flat_prog = Func("p", (), (("x", 8, I32),), Block((flat,)))
    reseeded = seed_schedule(flat_prog, lat)[flat.label]
    assert formula == reseeded


def test_seed_schedule_order_independent_for_independent_ops():
    """Statement order among independent memory ops does not change l."""
    lat = LatencyTable()
    s1 = Store("x", Const(0, I32), Const(1, I32))
    s2 = Store("y", Const(0, I32), Const(2, I32))
    one = For("l", "i", 0, 4, 1, Block((ir.Seq(s1, s2),)))
    two = For("l", "i", 0, 4, 1, Block((ir.Seq(s2, s1),)))
    p1 = Func("p", (), (("x", 1, I32), ("y", 1, I32)), Block((one,)))
    p2 = Func("p", (), (("x", 1, I32), ("y", 1, I32)), Block((two,)))
    assert seed_schedule(p1, lat)["l"] == seed_schedule(p2, lat)["l"]
