import random

import pytest
from hypothesis import given, settings, strategies as st

from causec.errors import (
    CycleDetected,
    DuplicateDefinition,
    FreshIdCollision,
    NetworkError,
    NotEquivalent,
    ParseError,
    PartialAssignment,
    UndefinedVariable,
)
from causec.network import (
    And,
    Const,
    Not,
    Or,
    Var,
    VarKind,
    build_network,
    eval_expr,
    evaluate,
    expand_node,
    format_expr,
    format_network,
    inline_expr,
    parse_expr,
    parse_network,
    restrict,
    truth_table,
    with_actual,
)

import generators as gen
import oracles


X, Y, Z = Var("x"), Var("y"), Var("z")


def test_build_simple():
    net = build_network(None, {"o": X & Y}, "o", {"x": True, "y": False})
    assert net.inputs == ("x", "y")
    assert net.variables["o"].kind is VarKind.INTERNAL
    assert net.variables["x"].kind is VarKind.PRIMITIVE
    assert net.actual_output is False


def test_cycle_rejected():
    with pytest.raises(CycleDetected) as err:
        build_network(None, {"a": Var("b"), "b": Var("a") | X}, "a", {"x": True})
    assert err.value.code == "E_CYCLE"


def test_undefined_and_duplicate():
    with pytest.raises(UndefinedVariable):
        build_network(None, {"o": X & Y}, "o", {"x": True})
    with pytest.raises(DuplicateDefinition):
        build_network(None, [("o", X), ("o", Y)], "o", {"x": True, "y": True})
    with pytest.raises(DuplicateDefinition):
        build_network(None, {"o": X}, "o", {"x": True, "o": False})


def test_partial_assignment():
    net = build_network(None, {"o": X | Y}, "o", {"x": True, "y": False})
    with pytest.raises(PartialAssignment):
        evaluate(net, {"x": True})
    with pytest.raises(UndefinedVariable):
        evaluate(net, {"x": True, "y": True, "o": True})


def test_unused_flagged():
    defs = {"t": Y, "o": X}
    net = build_network(None, defs, "o", {"x": True, "y": True, "z": False})
    assert net.unused == frozenset({"t", "y", "z"})


def test_interventions():
    net = parse_network("sh = st\nbh = bt & !sh\nbs = sh | bh\n@output bs\n@actual st=1 bt=1")
    assert evaluate(net, {"st": 1, "bt": 1})["bh"] is False
    vals = evaluate(net, {"st": 0, "bt": 1}, interventions={"bh": False})
    assert vals["bs"] is False


def test_expr_text_roundtrip_examples():
    for text in ["x & y | z", "!(x | y) & z", "[& x]", "[| x & y]", "x & (y & z)", "0 | 1"]:
        e = parse_expr(text)
        assert parse_expr(format_expr(e)) == e
    assert parse_expr("x & y & z") == And((X, Y, Z))
    assert parse_expr("(x & y) & z") == And((And((X, Y)), Z))


@settings(max_examples=300, deadline=None)
@given(gen.expr_strategy())
def test_expr_roundtrip_property(e):
    assert parse_expr(format_expr(e)) == e


def test_parse_errors_carry_location():
    with pytest.raises(ParseError) as err:
        parse_expr("x & & y")
    assert err.value.position is not None
    with pytest.raises(ParseError) as err:
        parse_network("o = x &\n@output o\n@actual x=1")
    assert err.value.line == 1


@settings(max_examples=100, deadline=None)
@given(gen.network_strategy())
def test_network_text_roundtrip(net):
    back = parse_network(format_network(net))
    assert back == net
    assert format_network(back) == format_network(net)


@settings(max_examples=100, deadline=None)
@given(gen.network_strategy())
def test_evaluate_matches_oracle(net):
    rng = random.Random(len(net.inputs))
    for _ in range(4):
        a = gen.random_actual(rng, net.inputs)
        assert evaluate(net, a)[net.output] == oracles.out(net, a)


@settings(max_examples=60, deadline=None)
@given(gen.network_strategy())
def test_truth_table_and_inline(net):
    table = truth_table(net)
    flat = inline_expr(net)
    for p in range(1 << len(net.inputs)):
        a = {v: bool(p >> i & 1) for i, v in enumerate(net.inputs)}
        assert bool(table[p]) == oracles.out(net, a) == eval_expr(flat, a)


def test_restrict_examples():
    net = build_network(None, {"o": X & Y}, "o", {"x": True, "y": True})
    r = restrict(net, {"x": False})
    assert r.actual_output is False
    assert "x" not in r.inputs
    r = restrict(net, {"x": True})
    assert r.defs["o"] == Y


@settings(max_examples=60, deadline=None)
@given(gen.network_strategy(), st.integers(0, 2 ** 16))
def test_restrict_agrees_with_full_network(net, seed):
    rng = random.Random(seed)
    fix = {v: rng.random() < 0.5 for v in net.inputs if rng.random() < 0.5}
    r = restrict(net, fix)
    for p in range(1 << len(r.inputs)):
        a = {v: bool(p >> i & 1) for i, v in enumerate(r.inputs)}
        full = dict(a, **fix)
        assert evaluate(r, a)[r.output] == oracles.out(net, full)


def test_expand_node_example():
    net = build_network(None, {"o": And((X, Y, Z))}, "o", {"x": True, "y": True, "z": False})
    e = expand_node(net, "o", "t = x & y\no = t & z")
    assert "t" in e.defs and e.variables["t"].kind is VarKind.INTERNAL
    assert truth_table(e).tolist() == truth_table(net).tolist()


def test_expand_node_errors():
    net = build_network(None, {"o": X | Y}, "o", {"x": True, "y": True, "z": True})
    with pytest.raises(NotEquivalent):
        expand_node(net, "o", {"o": X & Y})
    with pytest.raises(NotEquivalent):
        expand_node(net, "o", {"o": X | Z})   # z is not a parent of o
    with pytest.raises(FreshIdCollision):
        expand_node(net, "o", {"y": X, "o": X | Y})
    with pytest.raises(NetworkError):
        expand_node(net, "x", {"x": X})
    with pytest.raises(UndefinedVariable):
        expand_node(net, "nope", {"nope": X})


@settings(max_examples=80, deadline=None)
@given(gen.network_strategy(), st.integers(0, 2 ** 16))
def test_expansion_preserves_function(net, seed):
    rng = random.Random(seed)
    pick = gen.expansion_for(net, rng)
    if pick is None:
        return
    var, repl, _ = pick
    e = expand_node(net, var, repl)
    assert truth_table(e).tolist() == truth_table(net).tolist()
    assert e.inputs == net.inputs


def test_with_actual_keeps_structure():
    net = build_network(None, {"o": X | Y}, "o", {"x": True, "y": False})
    other = with_actual(net, {"x": False, "y": False})
    assert other.defs is net.defs and other.actual_output is False
    with pytest.raises(PartialAssignment):
        with_actual(net, {"x": True})


def test_constants_and_single_child_gates():
    e = parse_expr("[& x] | 0")
    assert isinstance(e, Or) and isinstance(e.children[0], And)
    assert eval_expr(e, {"x": True}) is True
    assert eval_expr(Not(Const(True)), {}) is False
