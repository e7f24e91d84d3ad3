import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from causec.causes import functional_cause, is_counterfactual_cause
from causec.dbcompile import (
    OUTPUT,
    WhyNotSpace,
    aggregate_causes,
    aggregate_function,
    aggregate_value,
    explain_why,
    explain_why_not,
    why_network,
    why_not_network,
)
from causec.errors import (
    AlreadyAnswer,
    DuplicateTuple,
    NotAnAnswer,
    PredicateUndefined,
    SearchBudgetExceeded,
    SpaceTooLarge,
)
from causec.relational import RelationalInstance, make_fact, parse_query, parse_schema

import generators as gen
import oracles

RS = parse_schema("R(a:int,b:int)\nS(b:int)")
T = parse_schema("T(k:int,v:int)")
Q = parse_query("Q(x) :- R(x,y), S(y)")


def fact(rel, *vals):
    return make_fact({**RS, **T}, rel, vals)


def test_why_single_valuation():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)], "S": [(2,)]})
    net = why_network(inst, Q, (1,))
    assert net.output == OUTPUT and all(net.actual.values())
    assert set(net.inputs) == {fact("R", 1, 2).id, fact("S", 2).id}
    for v in net.inputs:
        c = functional_cause(net, v)
        assert c.verdict and c.responsibility == 1
        assert is_counterfactual_cause(net, v).verdict
    assert net.label(fact("S", 2).id) == "S(2)"


def test_why_two_valuations():
    inst = RelationalInstance.build(RS, {"R": [(1, 2), (1, 3)], "S": [(2,), (3,)]})
    net = why_network(inst, Q, (1,))
    for v in net.inputs:
        assert functional_cause(net, v).responsibility <= Fraction(1, 2)
        assert functional_cause(net, v).responsibility == oracles.functional(net, v)[2]


def test_not_an_answer():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)]})
    with pytest.raises(NotAnAnswer) as err:
        why_network(inst, Q, (1,))
    assert err.value.code == "E_NOT_ANSWER"


def test_why_not_single_candidate():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)]})
    space = WhyNotSpace.of(inst, [fact("S", 2)])
    rep = explain_why_not(inst, Q, (1,), space)
    assert [(e.label, e.responsibility, e.inserted) for e in rep.causes] == [("S(2)", 1, True)]


def test_why_not_independent_candidates():
    # each insertion alone produces the answer, so each is counterfactual
    inst = RelationalInstance.build(RS, {"R": [(1, 2), (1, 3)]})
    space = WhyNotSpace.of(inst, [fact("S", 2), fact("S", 3)])
    net = why_not_network(inst, Q, (1,), space)
    assert not net.actual_output
    for v in net.inputs:
        ref = oracles.functional(net, v)[2]
        assert functional_cause(net, v).responsibility == ref
    rep = explain_why_not(inst, Q, (1,), space)
    assert [e.responsibility for e in rep.causes] == [1, 1]


def test_why_not_joint_candidates():
    inst = RelationalInstance.build(RS, {})
    space = WhyNotSpace.of(inst, [fact("R", 1, 2), fact("S", 2)])
    rep = explain_why_not(inst, Q, (1,), space)
    assert [e.responsibility for e in rep.causes] == [Fraction(1, 2)] * 2
    assert all(e.contingency[0][1] for e in rep.causes)


def test_why_not_errors():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)], "S": [(2,)]})
    with pytest.raises(AlreadyAnswer):
        why_not_network(inst, Q, (1,), WhyNotSpace())
    with pytest.raises(DuplicateTuple):
        WhyNotSpace.of(inst, [fact("S", 2)])
    with pytest.raises(SpaceTooLarge):
        WhyNotSpace.active_domain(inst, parse_query("Q(x) :- R(x,y), S(y)"), (5,), max_size=3)


def test_active_domain_space():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)]})
    space = WhyNotSpace.active_domain(inst, Q, (1,))
    labels = {f.label for f in space.candidates}
    assert "S(2)" in labels and "R(1,2)" not in labels
    rep = explain_why_not(inst, Q, (1,))
    assert rep.causes[0].label == "S(2)" and rep.causes[0].responsibility == 1


def test_no_valuation_gives_constant_false():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)]})
    net = why_not_network(inst, Q, (9,), WhyNotSpace())
    assert net.inputs == () and not net.actual_output
    assert explain_why_not(inst, Q, (9,), WhyNotSpace()).causes == ()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["functional", "hp", "chk", "cf"]))
def test_why_not_certificates_valid(seed, definition):
    sc = gen.why_not_scenario(random.Random(seed))
    space = WhyNotSpace.of(sc.instance, sc.candidates)
    rep = explain_why_not(sc.instance, sc.query, sc.missing, space, definition)
    by_label = {f.label: f for f in list(sc.instance.facts()) + list(space.candidates)}
    for e in rep.causes:
        _check_certificate(sc, e, by_label)


def _check_certificate(sc, e, by_label):
    ins = [by_label[e.label]] if e.inserted else []
    dels = [] if e.inserted else [by_label[e.label]]
    for lbl, present in e.contingency:
        (ins if present else dels).append(by_label[lbl])
    changed = sc.instance.with_changes(insert=ins, delete=dels)
    assert sc.missing in oracles.naive_answers(changed, sc.query), (e, sc.missing)


def test_explain_why_uses_tree_on_read_once(monkeypatch):
    import causec.causes

    def refuse(*a, **k):
        raise AssertionError("exhaustive search used on read-once lineage")

    monkeypatch.setattr(causec.causes, "rank_by_responsibility", refuse)
    inst = RelationalInstance.build(RS, {"R": [(1, 2), (1, 3)], "S": [(2,), (3,)]})
    rep = explain_why(inst, Q, (1,))
    assert len(rep.causes) == 4
    assert all(e.responsibility == Fraction(1, 2) for e in rep.causes)


def test_explain_why_self_join_not_read_once():
    schemas = parse_schema("E(a:int,b:int)")
    inst = RelationalInstance.build(schemas, {"E": [(1, 2), (2, 3), (2, 2)]})
    q = parse_query("Q(x) :- E(x,y), E(y,z)")
    rep = explain_why(inst, q, (1,))
    net = why_network(inst, q, (1,))
    for e in rep.causes:
        assert e.responsibility == oracles.functional(net, e.tuple_id)[2]


def _agg(rows, text):
    return RelationalInstance.build(T, {"T": rows}), parse_query(text)


def test_aggregate_examples():
    inst, aq = _agg([(1, 5), (2, 7)], "Q() :- SUM[T(k,v) : v] > 10")
    rep = aggregate_causes(inst, aq)
    assert [e.responsibility for e in rep.causes] == [1, 1]
    inst, aq = _agg([(1, 5), (2, 5), (3, 5)], "Q() :- COUNT[T(k,v)] >= 2")
    assert [e.responsibility for e in aggregate_causes(inst, aq).causes] == [Fraction(1, 2)] * 3
    inst, aq = _agg([(1, 100), (2, 1)], "Q() :- SUM[T(k,v) : v] > 50")
    rep = aggregate_causes(inst, aq)
    assert [(e.label, e.responsibility) for e in rep.causes] == [("T(1,100)", 1)]


def test_aggregate_errors():
    inst, aq = _agg([], "Q() :- SUM[T(k,v) : v] > 1")
    with pytest.raises(PredicateUndefined):
        aggregate_causes(inst, aq)
    inst, aq = _agg([(i, 1) for i in range(8)], "Q() :- COUNT[T(k,v)] >= 2")
    with pytest.raises(SearchBudgetExceeded):
        aggregate_causes(inst, aq, max_inputs=5)


def test_aggregate_rational_threshold_and_values():
    schemas = parse_schema("W(k:int,v:rational)")
    inst = RelationalInstance.build(schemas, {"W": [(1, Fraction(1, 3)), (2, Fraction(1, 2))]})
    aq = parse_query("Q() :- SUM[W(k,v) : v] >= 5/6")
    assert aggregate_value(inst, aq) == Fraction(5, 6)
    assert [e.responsibility for e in aggregate_causes(inst, aq).causes] == [1, 1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=6, unique=True),
       st.integers(0, 60), st.sampled_from([">", ">=", "<", "<=", "=", "!="]))
def test_aggregate_matches_toggle_oracle(values, c, op):
    inst, aq = _agg([(i, v) for i, v in enumerate(values)], f"Q() :- SUM[T(k,v) : v] {op} {c}")
    rep = aggregate_causes(inst, aq)
    got = {e.tuple_id: e.responsibility for e in rep.causes}
    for f in inst.facts():
        assert got.get(f.id, 0) == oracles.aggregate_responsibility(inst, aq, f.id)
    fn = aggregate_function(inst, aq)
    for idx in range(1 << fn.n):
        present = {fn.inputs[i] for i in range(fn.n) if idx >> i & 1}
        assert bool(fn.values[idx]) == oracles.aggregate_holds(inst, aq, present)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=6, unique=True), st.integers(0, 100))
def test_aggregate_monotone_sanity(values, c):
    inst, aq = _agg([(i, v) for i, v in enumerate(values)], f"Q() :- SUM[T(k,v) : v] > {c}")
    total = sum(values)
    if not total > c:
        return
    rep = {e.tuple_id: e for e in aggregate_causes(inst, aq).causes}
    for f in inst.facts():
        if f.values[1] > total - c:
            assert rep[f.id].responsibility == 1


def test_report_json_schema():
    inst, aq = _agg([(1, 5), (2, 7)], "Q() :- SUM[T(k,v) : v] > 10")
    js = aggregate_causes(inst, aq, "chk").to_json()
    assert js["question"] == "aggregate" and js["definition"] == "chk"
    assert js["causes"][0] == {"tuple": "T(1,5)", "kind": "existing", "responsibility": "1/1",
                               "contingency": []}
