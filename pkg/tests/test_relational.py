import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from causec.errors import DuplicateTuple, ParseError, QuerySyntaxError, SchemaMismatch, UnsafeQuery
from causec.relational import (
    AggregateQuery,
    ConjunctiveQuery,
    RelationalInstance,
    evaluate_query,
    load_instance,
    make_fact,
    parse_fact,
    parse_query,
    parse_schema,
    parse_tuple,
)

import generators as gen
import oracles

RS = parse_schema("R(a:int,b:int)\nS(b:int)")


def write_db(tmp_path, schema, tables):
    (tmp_path / "schema.txt").write_text(schema)
    for rel, text in tables.items():
        (tmp_path / f"{rel}.csv").write_text(text)
    return tmp_path


def test_load_instance(tmp_path):
    d = write_db(tmp_path, "R(a:int,b:int)", {"R": "a,b\n1,2\n3,4\n"})
    inst = load_instance(d)
    assert len(inst) == 2
    ids = [f.id for f in inst.facts()]
    assert all(i.startswith("R#") for i in ids)
    assert ids == [f.id for f in load_instance(d).facts()]


def test_load_errors(tmp_path):
    d = write_db(tmp_path, "R(a:int,b:int)", {"R": "a,b\n1,2\n3\n"})
    with pytest.raises(ParseError) as err:
        load_instance(d)
    assert err.value.line == 3
    (tmp_path / "R.csv").write_text("a,b\n1,2\n1,2\n")
    with pytest.raises(DuplicateTuple):
        load_instance(d)
    (tmp_path / "R.csv").write_text("a,c\n1,2\n")
    with pytest.raises(SchemaMismatch):
        load_instance(d)


def test_types(tmp_path):
    d = write_db(tmp_path, "P(n:str,w:rational)", {"P": "n,w\nann,1/2\n\"b, c\",3\n"})
    inst = load_instance(d)
    vals = sorted(f.values for f in inst.facts())
    assert vals == [("ann", Fraction(1, 2)), ("b, c", 3)]
    with pytest.raises(SchemaMismatch):
        make_fact(inst.schemas, "P", ("x", "y"))


def test_parse_query_examples():
    q = parse_query("Q(x) :- R(x,y)")
    assert isinstance(q, ConjunctiveQuery) and q.head == ("x",) and len(q.atoms) == 1
    with pytest.raises(UnsafeQuery) as err:
        parse_query("Q(z) :- R(x,y)")
    assert err.value.code == "E_UNSAFE"
    a = parse_query("Q() :- COUNT[R(x,y)] >= 2")
    assert isinstance(a, AggregateQuery) and a.function == "COUNT" and a.threshold == 2
    s = parse_query("Q() :- SUM[R(x,v) : v] > 10")
    assert s.function == "SUM" and s.attribute == "v"
    c = parse_query("Q(x) :- R(x,y), S(y), y < 5")
    assert len(c.comparisons) == 1
    with pytest.raises(QuerySyntaxError) as err:
        parse_query("Q(x) :- R(x,")
    assert err.value.position is not None
    with pytest.raises(UnsafeQuery):
        parse_query("Q() :- SUM[R(x,y) : v] > 1")


def test_query_text_roundtrip():
    for text in ["Q(x) :- R(x,y), S(y), y < 5", "Q() :- SUM[R(x,v) : v] > 10",
                 "Ans(n) :- P(n,'a b')", "Q() :- COUNT[R(x,y)] >= 2"]:
        q = parse_query(text)
        assert parse_query(str(q)) == q


def test_evaluate_examples():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)]})
    q = parse_query("Q(x) :- R(x,y)")
    res = evaluate_query(inst, q)
    assert list(res) == [(1,)]
    assert res[(1,)] == ((make_fact(RS, "R", (1, 2)).id,),)
    inst = RelationalInstance.build(RS, {"R": [(1, 2), (1, 3)]})
    assert len(evaluate_query(inst, q)[(1,)]) == 2
    assert evaluate_query(RelationalInstance.build(RS, {}), q) == {}


def test_comparisons_and_constants():
    inst = RelationalInstance.build(RS, {"R": [(1, 2), (1, 7), (2, 3)], "S": [(2,), (7,)]})
    q = parse_query("Q(x) :- R(x,y), S(y), y < 5")
    assert list(evaluate_query(inst, q)) == [(1,)]
    q = parse_query("Q(y) :- R(1,y)")
    assert list(evaluate_query(inst, q)) == [(2,), (7,)]
    strs = parse_schema("P(n:str)")
    pi = RelationalInstance.build(strs, {"P": [("1",)]})
    # the string '1' is not the number 1
    assert evaluate_query(pi, parse_query("Q() :- P(1)")) == {}
    assert list(evaluate_query(pi, parse_query("Q() :- P('1')"))) == [()]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_evaluate_matches_naive_join(seed):
    sc = gen.why_not_scenario(random.Random(seed))
    fast = evaluate_query(sc.instance, sc.query)
    slow = oracles.naive_answers(sc.instance, sc.query)
    assert set(fast) == set(slow)
    for ans, lineage in fast.items():
        assert set(lineage) == slow[ans]
        assert list(lineage) == sorted(lineage)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lineage_soundness(seed):
    sc = gen.why_not_scenario(random.Random(seed))
    inst, q = sc.instance, sc.query
    for ans, lineage in evaluate_query(inst, q).items():
        for conj in lineage:
            only = RelationalInstance.build(inst.schemas, {})
            only = only.with_changes(insert=[inst.fact(i) for i in conj])
            assert ans in evaluate_query(only, q)
        # deleting one tuple from every conjunct removes the answer
        hit = {conj[0] for conj in lineage}
        gone = inst.with_changes(delete=[inst.fact(i) for i in hit])
        assert ans not in evaluate_query(gone, q)


def test_parse_tuple_and_fact():
    assert parse_tuple("(1,'a')") == (1, "a")
    assert parse_tuple("(ann, 2/3)") == ("ann", Fraction(2, 3))
    assert parse_tuple("()") == ()
    f = parse_fact("R(1,2)", RS)
    assert f.label == "R(1,2)"
    with pytest.raises(SchemaMismatch):
        parse_fact("R(1)", RS)


def test_with_changes():
    inst = RelationalInstance.build(RS, {"R": [(1, 2)]})
    f = make_fact(RS, "S", (2,))
    more = inst.with_changes(insert=[f])
    assert f in more and f not in inst
    assert len(more.with_changes(delete=[f])) == 1
