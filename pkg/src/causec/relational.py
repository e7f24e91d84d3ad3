"""Relational instances, rule-style conjunctive queries and lineage.

Schema declarations are one relation per line, ``R(a:int,b:str)``; attribute
types are ``int``, ``str`` and ``rational``.  Each relation's rows live in a
CSV file named after it, with a header row of the attribute names.

Queries::

    Q(x) :- R(x,y), S(y,z), y < 5
    Q() :- SUM[R(x,v) : v] > 10
    Q() :- COUNT[R(x,y)] >= 2
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    DuplicateTuple,
    ParseError,
    QuerySyntaxError,
    SchemaMismatch,
    UnsafeQuery,
)

TYPES = {"int": "int", "integer": "int", "str": "str", "string": "str",
         "rational": "rational", "rat": "rational"}


# -- values ---------------------------------------------------------------------

def convert(raw: str, typ: str):
    raw = raw.strip()
    if typ == "int":
        return int(raw)
    if typ == "rational":
        q = Fraction(raw)
        return q.numerator if q.denominator == 1 else q
    return raw


def format_value(v) -> str:
    if isinstance(v, str):
        return "'" + v.replace("'", "\\'") + "'"
    return str(v)


def _value_key(v):
    # total order over mixed values: numbers before strings
    return (1, v) if isinstance(v, str) else (0, v)


@dataclass(frozen=True)
class Attribute:
    name: str
    type: str


@dataclass(frozen=True)
class Fact:
    relation: str
    values: tuple

    @property
    def id(self) -> str:
        enc = "\x1f".join(f"{type(v).__name__}:{v}" for v in self.values)
        digest = hashlib.sha1(f"{self.relation}\x1e{enc}".encode()).hexdigest()[:10]
        return f"{self.relation}#{digest}"

    @property
    def label(self) -> str:
        return f"{self.relation}({','.join(format_value(v) for v in self.values)})"

    def __str__(self):
        return self.label


def parse_schema(text: str) -> dict[str, tuple[Attribute, ...]]:
    schemas: dict[str, tuple[Attribute, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = re.fullmatch(r"([A-Za-z_]\w*)\s*\((.*)\)", line)
        if not m:
            raise ParseError("expected 'Rel(attr:type,...)'", line=lineno)
        attrs = []
        for item in filter(None, (s.strip() for s in m.group(2).split(","))):
            name, _, typ = (s.strip() for s in item.partition(":"))
            if typ.lower() not in TYPES or not re.fullmatch(r"[A-Za-z_]\w*", name):
                raise ParseError(f"bad attribute {item!r}", line=lineno)
            attrs.append(Attribute(name, TYPES[typ.lower()]))
        if m.group(1) in schemas:
            raise SchemaMismatch(f"relation {m.group(1)} declared twice (line {lineno})")
        if len({a.name for a in attrs}) != len(attrs):
            raise SchemaMismatch(f"repeated attribute in {m.group(1)} (line {lineno})")
        schemas[m.group(1)] = tuple(attrs)
    return schemas


def format_schema(schemas: Mapping[str, Sequence[Attribute]]) -> str:
    return "".join(f"{rel}({','.join(f'{a.name}:{a.type}' for a in attrs)})\n"
                   for rel, attrs in schemas.items())


# -- instances --------------------------------------------------------------------

def _check_value(v, typ):
    if typ == "str":
        return isinstance(v, str)
    if typ == "int":
        return isinstance(v, int) and not isinstance(v, bool)
    return isinstance(v, (int, Fraction)) and not isinstance(v, bool)


@dataclass(frozen=True, eq=False)
class RelationalInstance:
    schemas: Mapping[str, tuple[Attribute, ...]]
    tables: Mapping[str, tuple[Fact, ...]]
    _index: Mapping[str, Fact] = field(repr=False, default_factory=dict)

    @classmethod
    def build(cls, schemas: Mapping[str, Sequence[Attribute]],
              rows: Mapping[str, Iterable[Sequence]] | None = None) -> "RelationalInstance":
        schemas = {r: tuple(a) for r, a in schemas.items()}
        tables: dict[str, list[Fact]] = {r: [] for r in schemas}
        index: dict[str, Fact] = {}
        for rel, rel_rows in (rows or {}).items():
            if rel not in schemas:
                raise SchemaMismatch(f"no schema for relation {rel!r}")
            for row in rel_rows:
                fact = make_fact(schemas, rel, row)
                if fact.id in index:
                    raise DuplicateTuple(f"duplicate tuple {fact.label}")
                index[fact.id] = fact
                tables[rel].append(fact)
        return cls(MappingProxyType(schemas),
                   MappingProxyType({r: tuple(f) for r, f in tables.items()}),
                   MappingProxyType(index))

    def facts(self) -> Iterator[Fact]:
        for rel in self.tables:
            yield from self.tables[rel]

    def fact(self, fact_id: str) -> Fact:
        return self._index[fact_id]

    def __contains__(self, fact: Fact) -> bool:
        return fact.id in self._index

    def __len__(self):
        return len(self._index)

    def with_changes(self, insert: Iterable[Fact] = (), delete: Iterable[Fact] = ()) -> "RelationalInstance":
        gone = {f.id for f in delete}
        rows: dict[str, list] = {r: [f.values for f in fs if f.id not in gone]
                                 for r, fs in self.tables.items()}
        present = {f.id for f in self.facts()} - gone
        for f in insert:
            if f.id not in present:
                rows[f.relation].append(f.values)
                present.add(f.id)
        return RelationalInstance.build(self.schemas, rows)

    def active_domain(self, typ: str) -> list:
        seen = {}
        for f in self.facts():
            for a, v in zip(self.schemas[f.relation], f.values):
                if a.type == typ:
                    seen[(type(v).__name__, v)] = v
        return sorted(seen.values(), key=_value_key)


def make_fact(schemas, rel: str, row: Sequence) -> Fact:
    if rel not in schemas:
        raise SchemaMismatch(f"no schema for relation {rel!r}")
    attrs = schemas[rel]
    if len(row) != len(attrs):
        raise SchemaMismatch(f"{rel} expects {len(attrs)} values, got {len(row)}")
    values = []
    for a, v in zip(attrs, row):
        if isinstance(v, str) and a.type != "str":
            try:
                v = convert(v, a.type)
            except (ValueError, ZeroDivisionError):
                raise SchemaMismatch(f"{rel}.{a.name} expects {a.type}, got {v!r}") from None
        if isinstance(v, Fraction) and v.denominator == 1:
            v = v.numerator
        if not _check_value(v, a.type):
            raise SchemaMismatch(f"{rel}.{a.name} expects {a.type}, got {v!r}")
        values.append(v)
    return Fact(rel, tuple(values))


def load_instance(files: str | os.PathLike | Mapping[str, str | os.PathLike],
                  schema_decl: str | os.PathLike | None = None) -> RelationalInstance:
    """Load CSV tables.

    ``files`` is either a directory holding ``<Rel>.csv`` files (and, when
    ``schema_decl`` is omitted, a ``schema.txt``) or a mapping from relation
    name to CSV path.  ``schema_decl`` is declaration text or a path to it.
    """
    if isinstance(files, Mapping):
        paths = {r: Path(p) for r, p in files.items()}
        base = None
    else:
        base = Path(files)
        paths = None
    if schema_decl is None:
        if base is None:
            raise SchemaMismatch("a schema declaration is required")
        schema_decl = base / "schema.txt"
    if isinstance(schema_decl, Path) or (isinstance(schema_decl, str) and "(" not in schema_decl):
        schema_text = Path(schema_decl).read_text()
    else:
        schema_text = str(schema_decl)
    schemas = parse_schema(schema_text)
    if paths is None:
        paths = {r: base / f"{r}.csv" for r in schemas if (base / f"{r}.csv").exists()}
    rows: dict[str, list] = {}
    for rel, path in paths.items():
        if rel not in schemas:
            raise SchemaMismatch(f"CSV for undeclared relation {rel!r}")
        rows[rel] = _read_csv(path.read_text(), rel, schemas[rel])
    return _assemble(schemas, rows)


def _assemble(schemas, rows):
    tables = {}
    for rel, rel_rows in rows.items():
        seen = set()
        for lineno, values in rel_rows:
            fact = Fact(rel, values)
            if fact.id in seen:
                raise DuplicateTuple(f"duplicate tuple {fact.label} at line {lineno} of {rel}.csv")
            seen.add(fact.id)
        tables[rel] = [v for _, v in rel_rows]
    return RelationalInstance.build(schemas, tables)


def _read_csv(text: str, rel: str, attrs: Sequence[Attribute]) -> list[tuple[int, tuple]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != [a.name for a in attrs]:
        raise SchemaMismatch(f"{rel}.csv header {header} does not match schema "
                             f"{[a.name for a in attrs]}")
    out = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(attrs):
            raise ParseError(f"{rel}.csv: expected {len(attrs)} fields, got {len(row)}", line=lineno)
        try:
            out.append((lineno, tuple(convert(c, a.type) for c, a in zip(row, attrs))))
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"{rel}.csv: {exc}", line=lineno) from None
    return out


# -- queries ----------------------------------------------------------------------

@dataclass(frozen=True)
class QVar:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class QConst:
    value: object

    def __str__(self):
        return format_value(self.value)


Term = QVar | QConst


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple[Term, ...]

    def __str__(self):
        return f"{self.relation}({','.join(map(str, self.terms))})"


@dataclass(frozen=True)
class Comparison:
    left: Term
    op: str
    right: Term

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


_OPS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}
_OP_ALIASES = {"==": "=", "<>": "!=", "≠": "!=", "≤": "<=", "≥": ">="}


def compare(op: str, a, b) -> bool:
    if op not in ("=", "!=") and isinstance(a, str) != isinstance(b, str):
        raise SchemaMismatch(f"cannot order {format_value(a)} and {format_value(b)}")
    return _OPS[op](a, b)


@dataclass(frozen=True)
class ConjunctiveQuery:
    name: str
    head: tuple[str, ...]
    atoms: tuple[Atom, ...]
    comparisons: tuple[Comparison, ...] = ()

    def variables(self) -> set[str]:
        return {t.name for a in self.atoms for t in a.terms if isinstance(t, QVar)}

    def __str__(self):
        body = ", ".join([str(a) for a in self.atoms] + [str(c) for c in self.comparisons])
        return f"{self.name}({','.join(self.head)}) :- {body}"


@dataclass(frozen=True)
class AggregateQuery:
    base: ConjunctiveQuery
    function: str          # "SUM" or "COUNT"
    attribute: str | None  # SUM variable
    op: str
    threshold: Fraction | int

    def __str__(self):
        body = ", ".join([str(a) for a in self.base.atoms] + [str(c) for c in self.base.comparisons])
        target = f" : {self.attribute}" if self.attribute else ""
        return f"{self.base.name}() :- {self.function}[{body}{target}] {self.op} {self.threshold}"


_QTOKEN = re.compile(r"""\s*(?:
     (?P<imp>:-)
    |(?P<num>-?\d+(?:/\d+|\.\d+)?)
    |(?P<str>'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*")
    |(?P<name>[A-Za-z_]\w*)
    |(?P<op><=|>=|!=|<>|==|[<>=≠≤≥])
    |(?P<punct>[(),\[\]:])
)""", re.VERBOSE)


def _qtokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _QTOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise QuerySyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}",
                                   position=len(text) - len(text[pos:].lstrip()))
        kind = m.lastgroup
        val = m.group(kind)
        out.append((kind, val, m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def _literal(tok):
    kind, val, _ = tok
    if kind == "num":
        q = Fraction(val)
        return q.numerator if q.denominator == 1 else q
    body = val[1:-1]
    return re.sub(r"\\(.)", r"\1", body)


class _QueryParser:
    def __init__(self, text):
        self.toks = _qtokens(text)
        self.i = 0

    def peek(self, k=0):
        return self.toks[self.i + k]

    def take(self, kind=None, value=None):
        tok = self.peek()
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise QuerySyntaxError(f"expected {want!r}, found {got!r}", position=tok[2])
        self.i += 1
        return tok

    def term(self):
        tok = self.peek()
        if tok[0] == "name":
            self.take()
            return QVar(tok[1])
        if tok[0] in ("num", "str"):
            self.take()
            return QConst(_literal(tok))
        raise QuerySyntaxError(f"expected a term, found {tok[1] or 'end of input'!r}", position=tok[2])

    def body(self):
        atoms, comps = [], []
        while True:
            tok = self.peek()
            if tok[0] == "name" and self.peek(1)[1] == "(":
                rel = self.take()[1]
                self.take(value="(")
                terms = []
                if self.peek()[1] != ")":
                    terms.append(self.term())
                    while self.peek()[1] == ",":
                        self.take()
                        terms.append(self.term())
                self.take(value=")")
                atoms.append(Atom(rel, tuple(terms)))
            else:
                left = self.term()
                op = self.take("op")[1]
                right = self.term()
                comps.append(Comparison(left, _OP_ALIASES.get(op, op), right))
            if self.peek()[1] != ",":
                break
            self.take()
        if not atoms:
            raise QuerySyntaxError("query body needs at least one atom", position=self.peek()[2])
        return atoms, comps

    def parse(self):
        name = self.take("name")[1]
        self.take(value="(")
        head = []
        if self.peek()[1] != ")":
            head.append(self.take("name")[1])
            while self.peek()[1] == ",":
                self.take()
                head.append(self.take("name")[1])
        self.take(value=")")
        self.take("imp")
        tok = self.peek()
        if tok[0] == "name" and tok[1].upper() in ("SUM", "COUNT") and self.peek(1)[1] == "[":
            func = self.take()[1].upper()
            self.take(value="[")
            atoms, comps = self.body()
            attr = None
            if self.peek()[1] == ":":
                self.take()
                attr = self.take("name")[1]
            self.take(value="]")
            op = self.take("op")[1]
            num = self.take("num")
            self.take("end")
            if head:
                raise QuerySyntaxError("aggregate queries have an empty head", position=tok[2])
            if func == "SUM" and attr is None:
                raise QuerySyntaxError("SUM needs a ': var' target", position=tok[2])
            if func == "COUNT" and attr is not None:
                raise QuerySyntaxError("COUNT takes no target variable", position=tok[2])
            base = ConjunctiveQuery(name, (), tuple(atoms), tuple(comps))
            _check_safety(base)
            if attr is not None and attr not in base.variables():
                raise UnsafeQuery(f"SUM variable {attr!r} is not bound by an atom")
            return AggregateQuery(base, func, attr, _OP_ALIASES.get(op, op), _literal(num))
        atoms, comps = self.body()
        self.take("end")
        q = ConjunctiveQuery(name, tuple(head), tuple(atoms), tuple(comps))
        _check_safety(q)
        return q


def _check_safety(q: ConjunctiveQuery):
    bound = q.variables()
    unbound = [v for v in q.head if v not in bound]
    if unbound:
        raise UnsafeQuery(f"head variables {unbound} do not occur in a body atom")
    for c in q.comparisons:
        for t in (c.left, c.right):
            if isinstance(t, QVar) and t.name not in bound:
                raise UnsafeQuery(f"comparison variable {t.name!r} does not occur in a body atom")


def parse_query(text: str) -> ConjunctiveQuery | AggregateQuery:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("%")]
    return _QueryParser(" ".join(lines)).parse()


def parse_tuple(text: str) -> tuple:
    """Parse an answer literal such as ``(1, 'a')``; bare words are strings."""
    s = text.strip()
    if s.startswith("(") and s.endswith(")"):
        s = s[1:-1]
    if not s.strip():
        return ()
    out = []
    for cell in next(csv.reader([s], skipinitialspace=True, quotechar="'")):
        cell = cell.strip()
        try:
            q = Fraction(cell)
            out.append(q.numerator if q.denominator == 1 else q)
        except ValueError:
            out.append(cell.strip('"'))
    return tuple(out)


def parse_fact(text: str, schemas) -> Fact:
    m = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*(\(.*\))\s*", text)
    if not m:
        raise ParseError(f"expected 'Rel(v1,...)', got {text.strip()!r}")
    raw = parse_tuple(m.group(2))
    rel = m.group(1)
    if rel not in schemas:
        raise SchemaMismatch(f"no schema for relation {rel!r}")
    attrs = schemas[rel]
    if len(raw) != len(attrs):
        raise SchemaMismatch(f"{rel} expects {len(attrs)} values, got {len(raw)}")
    values = [str(v) if a.type == "str" and not isinstance(v, str) else v
              for v, a in zip(raw, attrs)]
    return make_fact(schemas, rel, values)


# -- evaluation -------------------------------------------------------------------

Lineage = tuple  # tuple of conjuncts, each a sorted tuple of fact ids


def _term_value(t, binding):
    return t.value if isinstance(t, QConst) else binding.get(t.name, _UNBOUND)


_UNBOUND = object()


def valuations(cq: ConjunctiveQuery, tables: Mapping[str, Sequence[Fact]],
               schemas: Mapping[str, Sequence[Attribute]],
               fixed: Mapping[str, object] | None = None) -> Iterator[tuple[dict, tuple[Fact, ...]]]:
    """Satisfying valuations of the body, with the facts each one uses."""
    for atom in cq.atoms:
        if atom.relation not in schemas:
            raise SchemaMismatch(f"query mentions unknown relation {atom.relation!r}")
        if len(atom.terms) != len(schemas[atom.relation]):
            raise SchemaMismatch(f"{atom.relation} has arity {len(schemas[atom.relation])}, "
                                 f"query uses {len(atom.terms)}")
    pending = list(cq.comparisons)

    def ready(binding):
        for c in pending:
            a, b = _term_value(c.left, binding), _term_value(c.right, binding)
            if a is _UNBOUND or b is _UNBOUND:
                continue
            if not compare(c.op, a, b):
                return False
        return True

    def rec(k, binding, used):
        if k == len(cq.atoms):
            yield dict(binding), tuple(used)
            return
        atom = cq.atoms[k]
        for fact in tables.get(atom.relation, ()):
            new = dict(binding)
            ok = True
            for t, v in zip(atom.terms, fact.values):
                if isinstance(t, QConst):
                    if t.value != v or isinstance(t.value, str) != isinstance(v, str):
                        ok = False
                        break
                elif t.name in new:
                    if new[t.name] != v or isinstance(new[t.name], str) != isinstance(v, str):
                        ok = False
                        break
                else:
                    new[t.name] = v
            if ok and ready(new):
                yield from rec(k + 1, new, used + [fact])

    yield from rec(0, dict(fixed or {}), [])


def _lineage(conjuncts: Iterable[Iterable[str]]) -> Lineage:
    return tuple(sorted({tuple(sorted(set(c))) for c in conjuncts}))


def answer_key(values: tuple):
    return tuple(_value_key(v) for v in values)


def evaluate_query(instance: RelationalInstance, cq: ConjunctiveQuery) -> dict[tuple, Lineage]:
    """Answers of ``cq`` (set semantics), each with its DNF lineage over fact ids."""
    found: dict[tuple, set] = {}
    for binding, used in valuations(cq, instance.tables, instance.schemas):
        ans = tuple(binding[v] for v in cq.head)
        found.setdefault(ans, set()).add(tuple(sorted({f.id for f in used})))
    return {a: _lineage(found[a]) for a in sorted(found, key=answer_key)}


def head_types(cq: ConjunctiveQuery, schemas) -> list[str]:
    types = {}
    for atom in cq.atoms:
        for t, a in zip(atom.terms, schemas.get(atom.relation, ())):
            if isinstance(t, QVar):
                types.setdefault(t.name, a.type)
    return [types.get(v, "str") for v in cq.head]


def coerce_answer(values: Sequence, cq: ConjunctiveQuery, schemas) -> tuple:
    """Bring a parsed answer literal to the types of the head variables."""
    if len(values) != len(cq.head):
        raise SchemaMismatch(f"{cq.name} has {len(cq.head)} head variables, got {len(values)} values")
    out = []
    for v, typ in zip(values, head_types(cq, schemas)):
        if typ == "str":
            out.append(v if isinstance(v, str) else str(v))
        elif isinstance(v, str):
            try:
                out.append(convert(v, typ))
            except ValueError:
                raise SchemaMismatch(f"{v!r} is not a valid {typ}") from None
        else:
            out.append(v)
    return tuple(out)
