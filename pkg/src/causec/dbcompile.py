"""From relational data to causal networks, and explanation reports.

* why: the primitive inputs of an answer's network are the facts in its
  lineage, all present; the output is the lineage DNF.
* why-not: inputs are the facts that could take part in producing the
  missing answer once candidate insertions are allowed; candidates start
  absent, so their causes are insertions.
* aggregates: inputs are the facts feeding a SUM/COUNT; the output
  "predicate holds" is computed numerically for every sub-instance, never
  arithmetized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from math import lcm
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import causes
from .causes import BooleanFunction, CauseCertificate, Definition, format_fraction
from .errors import (
    AlreadyAnswer,
    DuplicateTuple,
    NotAnAnswer,
    PredicateUndefined,
    SchemaMismatch,
    SearchBudgetExceeded,
    SpaceTooLarge,
)
from .network import And, CausalNetwork, Const, Or, Var, Variable, build_network
from .potential import check_read_once
from .relational import (
    AggregateQuery,
    ConjunctiveQuery,
    Fact,
    QConst,
    RelationalInstance,
    _check_value,
    _lineage,
    answer_key,
    coerce_answer,
    compare,
    evaluate_query,
    format_value,
    make_fact,
    parse_fact,
    valuations,
)

OUTPUT = "answer"
DEFAULT_MAX_CANDIDATES = 10_000


def _dnf_network(conjuncts, facts: Mapping[str, Fact], actual: Mapping[str, bool]) -> CausalNetwork:
    ids = sorted({i for c in conjuncts for i in c})
    terms = [Var(c[0]) if len(c) == 1 else And(tuple(Var(i) for i in c)) for c in conjuncts]
    if not terms:
        expr = Const(False)
    elif len(terms) == 1:
        expr = terms[0]
    else:
        expr = Or(tuple(terms))
    variables = [Variable(i, label=facts[i].label) for i in ids]
    return build_network(variables, {OUTPUT: expr}, OUTPUT, {i: actual[i] for i in ids})


def _find_answer(instance, cq, answer):
    answer = coerce_answer(answer, cq, instance.schemas)
    return answer, evaluate_query(instance, cq).get(answer)


def why_network(instance: RelationalInstance, cq: ConjunctiveQuery, answer: Sequence) -> CausalNetwork:
    answer, lineage = _find_answer(instance, cq, answer)
    if lineage is None:
        raise NotAnAnswer(f"{cq.name}({','.join(map(format_value, answer))}) is not an answer")
    facts = {f.id: f for f in instance.facts()}
    return _dnf_network(lineage, facts, {i: True for c in lineage for i in c})


# -- why-not ---------------------------------------------------------------------

@dataclass(frozen=True)
class WhyNotSpace:
    """Finite set of candidate insertions, disjoint from the instance."""

    candidates: tuple[Fact, ...] = ()

    @classmethod
    def of(cls, instance: RelationalInstance, facts: Iterable[Fact]) -> "WhyNotSpace":
        out: dict[str, Fact] = {}
        for f in facts:
            if f in instance:
                raise DuplicateTuple(f"candidate {f.label} is already in the instance")
            out.setdefault(f.id, f)
        return cls(tuple(sorted(out.values(), key=lambda f: f.id)))

    @classmethod
    def parse(cls, instance: RelationalInstance, text: str) -> "WhyNotSpace":
        facts = [parse_fact(line, instance.schemas) for line in text.splitlines()
                 if line.strip() and not line.strip().startswith("#")]
        return cls.of(instance, facts)

    @classmethod
    def active_domain(cls, instance: RelationalInstance, cq: ConjunctiveQuery,
                      constants: Iterable = (), max_size: int = DEFAULT_MAX_CANDIDATES) -> "WhyNotSpace":
        """Every absent tuple of the query's relations over the typed active domain.

        The domain of each type is the instance's values of that type plus
        the query's constants and ``constants`` (e.g. the missing answer).
        """
        extra = list(constants) + [t.value for a in cq.atoms for t in a.terms if isinstance(t, QConst)]
        pools = {}
        for typ in ("int", "str", "rational"):
            vals = {(type(v).__name__, v): v for v in instance.active_domain(typ)}
            vals.update({(type(v).__name__, v): v for v in extra if _check_value(v, typ)})
            pools[typ] = sorted(vals.values(), key=lambda v: answer_key((v,)))
        facts = []
        for rel in dict.fromkeys(a.relation for a in cq.atoms):
            attrs = instance.schemas[rel]
            size = 1
            for a in attrs:
                size *= len(pools[a.type])
            if len(facts) + size > max_size:
                raise SpaceTooLarge(f"active-domain candidate space exceeds {max_size} tuples")
            for row in product(*(pools[a.type] for a in attrs)):
                f = make_fact(instance.schemas, rel, row)
                if f not in instance:
                    facts.append(f)
        return cls.of(instance, facts)


def why_not_network(instance: RelationalInstance, cq: ConjunctiveQuery, missing: Sequence,
                    space: WhyNotSpace | None = None,
                    max_candidates: int = DEFAULT_MAX_CANDIDATES) -> CausalNetwork:
    missing, lineage = _find_answer(instance, cq, missing)
    if lineage is not None:
        raise AlreadyAnswer(f"{cq.name}({','.join(map(format_value, missing))}) is already an answer")
    if space is None:
        space = WhyNotSpace.active_domain(instance, cq, missing, max_size=max_candidates)
    if len(space.candidates) > max_candidates:
        raise SpaceTooLarge(f"{len(space.candidates)} candidates exceeds the cap of {max_candidates}")
    facts = {f.id: f for f in instance.facts()}
    cand = {f.id: f for f in space.candidates}
    overlap = facts.keys() & cand.keys()
    if overlap:
        raise DuplicateTuple(f"candidates already present: {[facts[i].label for i in sorted(overlap)]}")
    tables = {r: list(fs) for r, fs in instance.tables.items()}
    for f in space.candidates:
        tables.setdefault(f.relation, []).append(f)
    fixed = {}
    for v, val in zip(cq.head, missing):
        if v in fixed and fixed[v] != val:
            return _dnf_network([], {}, {})
        fixed[v] = val
    conjuncts = _lineage({f.id for f in used}
                         for _, used in valuations(cq, tables, instance.schemas, fixed))
    every = {**facts, **cand}
    return _dnf_network(conjuncts, every, {i: i in facts for c in conjuncts for i in c})


# -- aggregates ------------------------------------------------------------------

def aggregate_function(instance: RelationalInstance, aq: AggregateQuery,
                       max_inputs: int = causes.DEFAULT_MAX_INPUTS) -> BooleanFunction:
    """The aggregate predicate as a Boolean function of its contributing facts."""
    rows = []
    for binding, used in valuations(aq.base, instance.tables, instance.schemas):
        if aq.function == "SUM":
            v = binding[aq.attribute]
            if isinstance(v, str):
                raise SchemaMismatch(f"SUM over non-numeric value {format_value(v)}")
            rows.append((frozenset(f.id for f in used), Fraction(v)))
        else:
            rows.append((frozenset(f.id for f in used), Fraction(1)))
    if aq.function == "SUM" and not rows:
        raise PredicateUndefined("SUM over an empty set has no value")
    inputs = sorted({i for ids, _ in rows for i in ids})
    if len(inputs) > max_inputs:
        raise SearchBudgetExceeded(f"{len(inputs)} contributing tuples exceeds the cap of {max_inputs}")
    n = len(inputs)
    bit = {t: k for k, t in enumerate(inputs)}
    scale = lcm(*(v.denominator for _, v in rows), Fraction(aq.threshold).denominator) if rows else 1
    idx = np.arange(1 << n, dtype=np.int64)
    total = np.zeros(1 << n, dtype=object if n and _too_wide(rows, scale) else np.int64)
    nonempty = np.zeros(1 << n, dtype=bool)
    for ids, v in rows:
        mask = sum(1 << bit[i] for i in ids)
        present = (idx & mask) == mask
        total[present] += int(v * scale)
        nonempty |= present
    threshold = Fraction(aq.threshold) * scale
    holds = np.array([compare(aq.op, Fraction(int(t)), threshold) for t in total]) if total.dtype == object \
        else _vector_compare(aq.op, total, threshold)
    if aq.function == "SUM":
        # SUM of nothing is NULL; a comparison against NULL never holds
        holds &= nonempty
    labels = {f.id: f.label for f in instance.facts()}
    return BooleanFunction(inputs, {i: True for i in inputs}, holds, labels)


def _too_wide(rows, scale):
    return sum(abs(v) * scale for _, v in rows) >= 2 ** 62


def _vector_compare(op, values, threshold: Fraction):
    # values are integers; compare num/den exactly via cross multiplication
    num, den = threshold.numerator, threshold.denominator
    lhs = values * den
    return {"=": lhs == num, "!=": lhs != num, "<": lhs < num, "<=": lhs <= num,
            ">": lhs > num, ">=": lhs >= num}[op]


# -- reports ---------------------------------------------------------------------

@dataclass(frozen=True)
class ExplanationEntry:
    tuple_id: str
    label: str
    responsibility: Fraction
    contingency: tuple[tuple[str, bool], ...]  # (fact label, present after the change)
    inserted: bool = False
    certificate: CauseCertificate | None = field(default=None, compare=False)

    def to_json(self) -> dict:
        return {
            "tuple": self.label,
            "kind": "insert" if self.inserted else "existing",
            "responsibility": format_fraction(self.responsibility),
            "contingency": [{"tuple": lbl, "action": "insert" if present else "delete"}
                            for lbl, present in self.contingency],
        }


@dataclass(frozen=True)
class ExplanationReport:
    question: str            # "why", "whynot" or "aggregate"
    subject: str
    causes: tuple[ExplanationEntry, ...] = ()
    definition: Definition = Definition.FUNCTIONAL

    def to_json(self) -> dict:
        return {
            "question": self.question,
            "subject": self.subject,
            "definition": self.definition.value,
            "causes": [c.to_json() for c in self.causes],
        }


def _entries(certs: Iterable[CauseCertificate], labels: Mapping[str, str],
             actual: Mapping[str, bool]) -> tuple[ExplanationEntry, ...]:
    out = []
    for c in sorted((c for c in certs if c.verdict), key=causes.rank_key):
        cont = tuple(sorted(((labels[k], v) for k, v in c.witness.assignment),
                            key=lambda kv: kv[0]))
        out.append(ExplanationEntry(c.variable, labels[c.variable], c.responsibility, cont,
                                    inserted=not actual[c.variable], certificate=c))
    return tuple(out)


def explain_network(net: CausalNetwork, definition: Definition | str = Definition.FUNCTIONAL,
                    *, workers: int = 1, **caps) -> list[CauseCertificate]:
    """Rank the causes of a lineage network.

    Functional causes of read-once lineage go through the polynomial tree
    algorithm; everything else through exhaustive search.
    """
    definition = Definition.parse(definition)
    if definition is Definition.FUNCTIONAL and check_read_once(_output_expr(net)) is not None:
        certs = [causes.functional_cause_tree(net, v) for v in net.inputs]
        return sorted((c for c in certs if c.verdict), key=causes.rank_key)
    return causes.rank_by_responsibility(net, definition, workers=workers, **caps)


def _output_expr(net):
    from .network import inline_expr
    return inline_expr(net)


def _subject(cq, values):
    return f"{cq.name}({','.join(map(format_value, values))})"


def explain_why(instance: RelationalInstance, cq: ConjunctiveQuery, answer: Sequence,
                definition: Definition | str = Definition.FUNCTIONAL, **opts) -> ExplanationReport:
    answer = coerce_answer(answer, cq, instance.schemas)
    net = why_network(instance, cq, answer)
    certs = explain_network(net, definition, **opts)
    labels = {v: net.label(v) for v in net.inputs}
    return ExplanationReport("why", _subject(cq, answer), _entries(certs, labels, net.actual),
                             Definition.parse(definition))


def explain_why_not(instance: RelationalInstance, cq: ConjunctiveQuery, missing: Sequence,
                    space: WhyNotSpace | None = None,
                    definition: Definition | str = Definition.FUNCTIONAL,
                    max_candidates: int = DEFAULT_MAX_CANDIDATES, **opts) -> ExplanationReport:
    missing = coerce_answer(missing, cq, instance.schemas)
    net = why_not_network(instance, cq, missing, space, max_candidates)
    certs = explain_network(net, definition, **opts)
    labels = {v: net.label(v) for v in net.inputs}
    return ExplanationReport("whynot", _subject(cq, missing), _entries(certs, labels, net.actual),
                             Definition.parse(definition))


def aggregate_causes(instance: RelationalInstance, aq: AggregateQuery,
                     definition: Definition | str = Definition.FUNCTIONAL,
                     *, max_inputs: int = causes.DEFAULT_MAX_INPUTS) -> ExplanationReport:
    definition = Definition.parse(definition)
    fn = aggregate_function(instance, aq, max_inputs)
    certs = [fn.certificate(v, definition) for v in fn.inputs]
    labels = {v: fn.labels[v] for v in fn.inputs}
    return ExplanationReport("aggregate", str(aq), _entries(certs, labels, fn.actual), definition)


def aggregate_value(instance: RelationalInstance, aq: AggregateQuery, present: Iterable[str] | None = None):
    """SUM/COUNT over the sub-instance made of ``present`` fact ids (default: all)."""
    keep = None if present is None else set(present)
    total = Fraction(0)
    count = 0
    for binding, used in valuations(aq.base, instance.tables, instance.schemas):
        if keep is not None and not all(f.id in keep for f in used):
            continue
        count += 1
        total += Fraction(binding[aq.attribute]) if aq.function == "SUM" else 1
    if aq.function == "SUM" and count == 0:
        return None
    return total
