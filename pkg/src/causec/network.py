"""Boolean causal networks.

A network is an acyclic set of Boolean definitions over *primitive inputs*
(variables with no definition, e.g. one per database tuple) plus an *actual*
assignment of the inputs.  Networks are immutable once built.

Text format, one definition per line::

    # comment
    t = x & y
    o = t | !z
    @output o
    @actual x=1 y=1 z=0
    @label x R(1,2)

The primitive inputs are exactly the variables listed by ``@actual``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    CycleDetected,
    DuplicateDefinition,
    FreshIdCollision,
    NetworkError,
    NotEquivalent,
    ParseError,
    PartialAssignment,
    SearchBudgetExceeded,
    UndefinedVariable,
)

MAX_EQUIVALENCE_PARENTS = 20
STRUCTURAL_CACHE_KEYS = ("potential", "tree")


# -- expressions --------------------------------------------------------------

class BoolExpr:
    """Base class for expression nodes.  Supports ``&``, ``|`` and ``~``."""

    __slots__ = ()

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))

    def __invert__(self):
        return Not(self)

    def __str__(self):
        return format_expr(self)


@dataclass(frozen=True, repr=False)
class Const(BoolExpr):
    value: bool

    def __repr__(self):
        return f"Const({self.value})"


@dataclass(frozen=True, repr=False)
class Var(BoolExpr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Not(BoolExpr):
    child: BoolExpr

    def __repr__(self):
        return f"Not({self.child!r})"


@dataclass(frozen=True, repr=False)
class _NAry(BoolExpr):
    children: tuple

    def __post_init__(self):
        children = tuple(self.children)
        if not children:
            raise NetworkError(f"{type(self).__name__} needs at least one child")
        object.__setattr__(self, "children", children)

    def __repr__(self):
        return f"{type(self).__name__}({list(self.children)!r})"


class And(_NAry):
    pass


class Or(_NAry):
    pass


def conj(*children: BoolExpr) -> And:
    return And(children)


def disj(*children: BoolExpr) -> Or:
    return Or(children)


def expr_variables(expr: BoolExpr) -> frozenset[str]:
    out: set[str] = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Var):
            out.add(e.name)
        elif isinstance(e, Not):
            stack.append(e.child)
        elif isinstance(e, _NAry):
            stack.extend(e.children)
    return frozenset(out)


def eval_expr(expr: BoolExpr, env: Mapping[str, bool]) -> bool:
    t = type(expr)
    if t is Var:
        return env[expr.name]
    if t is And:
        for c in expr.children:
            if not eval_expr(c, env):
                return False
        return True
    if t is Or:
        for c in expr.children:
            if eval_expr(c, env):
                return True
        return False
    if t is Not:
        return not eval_expr(expr.child, env)
    if t is Const:
        return expr.value
    raise TypeError(f"not an expression: {expr!r}")


def eval_expr_array(expr: BoolExpr, env: Mapping[str, np.ndarray], size: int) -> np.ndarray:
    """Evaluate ``expr`` pointwise over boolean arrays of length ``size``."""
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, Const):
        return np.full(size, expr.value, dtype=bool)
    if isinstance(expr, Not):
        return ~eval_expr_array(expr.child, env, size)
    parts = [eval_expr_array(c, env, size) for c in expr.children]
    if isinstance(expr, And):
        return reduce(np.logical_and, parts)
    return reduce(np.logical_or, parts)


def substitute(expr: BoolExpr, mapping: Mapping[str, BoolExpr]) -> BoolExpr:
    if isinstance(expr, Var):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Not):
        return Not(substitute(expr.child, mapping))
    return type(expr)(tuple(substitute(c, mapping) for c in expr.children))


def fold_constants(expr: BoolExpr) -> BoolExpr:
    """Remove constants; a one-child And/Or left over collapses to the child."""
    if isinstance(expr, (Var, Const)):
        return expr
    if isinstance(expr, Not):
        child = fold_constants(expr.child)
        if isinstance(child, Const):
            return Const(not child.value)
        return Not(child)
    absorbing = isinstance(expr, Or)  # value that decides the gate
    kept = []
    for c in expr.children:
        c = fold_constants(c)
        if isinstance(c, Const):
            if c.value == absorbing:
                return Const(absorbing)
            continue
        kept.append(c)
    if not kept:
        return Const(not absorbing)
    if len(kept) == 1 and len(expr.children) > 1:
        return kept[0]
    return type(expr)(tuple(kept))


# -- expression text ----------------------------------------------------------

_IDENT = r"[A-Za-z_][A-Za-z0-9_#.']*"
_TOKEN = re.compile(rf"\s*(?:({_IDENT})|([01])|([&|!()\[\]]))")


def _tokenize(text: str, line=None):
    pos = 0
    tokens = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].strip()[:1]!r}", position=pos, line=line)
        if m.group(1):
            tokens.append(("id", m.group(1), m.start(1)))
        elif m.group(2):
            tokens.append(("const", m.group(2), m.start(2)))
        else:
            tokens.append(("op", m.group(3), m.start(3)))
        pos = m.end()
    return tokens


class _ExprParser:
    def __init__(self, text: str, line=None):
        self.tokens = _tokenize(text, line)
        self.i = 0
        self.line = line
        self.text = text

    def error(self, msg):
        pos = self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.text)
        raise ParseError(msg, position=pos, line=self.line)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self, value=None):
        tok = self.peek()
        if tok is None or (value is not None and tok[1] != value):
            self.error(f"expected {value!r}" if value else "unexpected end of expression")
        self.i += 1
        return tok

    def parse(self) -> BoolExpr:
        if not self.tokens:
            self.error("empty expression")
        e = self.parse_or()
        if self.peek() is not None:
            self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def parse_or(self):
        parts = [self.parse_and()]
        while self.peek() and self.peek()[1] == "|":
            self.take()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def parse_and(self):
        parts = [self.parse_unary()]
        while self.peek() and self.peek()[1] == "&":
            self.take()
            parts.append(self.parse_unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def parse_unary(self):
        tok = self.peek()
        if tok is None:
            self.error("unexpected end of expression")
        kind, value, _ = tok
        if value == "!":
            self.take()
            return Not(self.parse_unary())
        if value == "[":
            # explicit one-child gate: [& e] or [| e]
            self.take()
            op = self.take()[1]
            if op not in "&|":
                self.error("expected '&' or '|' after '['")
            child = self.parse_or()
            self.take("]")
            return And((child,)) if op == "&" else Or((child,))
        if value == "(":
            self.take()
            e = self.parse_or()
            self.take(")")
            return e
        if kind == "id":
            self.take()
            return Var(value)
        if kind == "const":
            self.take()
            return Const(value == "1")
        self.error(f"unexpected token {value!r}")


def parse_expr(text: str, line=None) -> BoolExpr:
    return _ExprParser(text, line).parse()


def format_expr(expr: BoolExpr) -> str:
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Const):
        return "1" if expr.value else "0"
    if isinstance(expr, Not):
        return "!" + _format_operand(expr.child)
    sym = " & " if isinstance(expr, And) else " | "
    if len(expr.children) == 1:
        return "[" + sym.strip() + " " + format_expr(expr.children[0]) + "]"
    return sym.join(_format_operand(c) for c in expr.children)


def _format_operand(expr):
    if isinstance(expr, _NAry) and len(expr.children) > 1:
        return "(" + format_expr(expr) + ")"
    return format_expr(expr)


# -- networks -----------------------------------------------------------------

class VarKind(enum.Enum):
    PRIMITIVE = "PrimitiveInput"
    INTERNAL = "Internal"


@dataclass(frozen=True)
class Variable:
    id: str
    kind: VarKind = VarKind.PRIMITIVE
    label: str = ""

    def __post_init__(self):
        if not self.label:
            object.__setattr__(self, "label", self.id)


@dataclass(frozen=True, eq=False)
class CausalNetwork:
    """Validated network; build with :func:`build_network`."""

    variables: Mapping[str, Variable]
    defs: Mapping[str, BoolExpr]
    output: str
    actual: Mapping[str, bool]
    inputs: tuple[str, ...]
    order: tuple[str, ...]          # internal variables, topologically sorted
    unused: frozenset[str]
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def internals(self) -> tuple[str, ...]:
        return self.order

    def is_primitive(self, var: str) -> bool:
        return var in self.variables and var not in self.defs

    def label(self, var: str) -> str:
        return self.variables[var].label

    def parents(self, var: str) -> frozenset[str]:
        if var not in self.defs:
            return frozenset()
        return expr_variables(self.defs[var])

    def _actual_values(self) -> dict[str, bool]:
        if "actual_values" not in self._cache:
            self._cache["actual_values"] = evaluate(self, self.actual)
        return self._cache["actual_values"]

    def actual_values(self) -> dict[str, bool]:
        """Values of every variable in the actual world (cached)."""
        return dict(self._actual_values())

    @property
    def actual_output(self) -> bool:
        return self._actual_values()[self.output]

    def _key(self):
        return (
            {k: (v.kind, v.label) for k, v in self.variables.items()},
            dict(self.defs),
            self.output,
            dict(self.actual),
        )

    def __eq__(self, other):
        if not isinstance(other, CausalNetwork):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash((self.output, tuple(sorted(self.defs.items(), key=lambda kv: kv[0])),
                     tuple(sorted(self.actual.items()))))

    def __str__(self):
        return format_network(self)


def _topological_order(defs: Mapping[str, BoolExpr]) -> list[str]:
    deps = {v: sorted(expr_variables(e) & defs.keys()) for v, e in defs.items()}
    order: list[str] = []
    state: dict[str, int] = {}
    for root in sorted(defs):
        if state.get(root) == 2:
            continue
        stack = [(root, iter(deps[root]))]
        path = [root]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                state[node] = 2
                order.append(node)
            elif state.get(nxt) == 1:
                cycle = path[path.index(nxt):] + [nxt]
                raise CycleDetected("cycle: " + " -> ".join(cycle))
            elif state.get(nxt) is None:
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(deps[nxt])))
    return order


def build_network(
    variables: Iterable[Variable | str] | None,
    defs: Mapping[str, BoolExpr] | Iterable[tuple[str, BoolExpr]],
    output: str,
    actual: Mapping[str, bool],
) -> CausalNetwork:
    """Validate the pieces of a network and assemble it.

    ``variables`` may be ``None``, in which case the declared variables are the
    defined ones plus the keys of ``actual``.  Declaring a variable only
    matters for its label or to add an unused primitive input.
    """
    pairs = list(defs.items()) if isinstance(defs, Mapping) else list(defs)
    def_map: dict[str, BoolExpr] = {}
    for name, expr in pairs:
        if name in def_map:
            raise DuplicateDefinition(f"variable {name!r} defined twice")
        if not isinstance(expr, BoolExpr):
            raise NetworkError(f"definition of {name!r} is not an expression")
        def_map[name] = expr

    declared: dict[str, Variable] = {}
    for v in variables if variables is not None else ():
        v = v if isinstance(v, Variable) else Variable(v)
        if v.id in declared:
            raise DuplicateDefinition(f"variable {v.id!r} declared twice")
        declared[v.id] = v
    if variables is None:
        for name in actual:
            declared[name] = Variable(name)

    result: dict[str, Variable] = {}
    for name, v in declared.items():
        kind = VarKind.INTERNAL if name in def_map else VarKind.PRIMITIVE
        result[name] = Variable(name, kind, v.label)
    for name in def_map:
        result.setdefault(name, Variable(name, VarKind.INTERNAL))

    for name, expr in def_map.items():
        missing = expr_variables(expr) - result.keys()
        if missing:
            raise UndefinedVariable(f"{name!r} refers to undefined {sorted(missing)}")
    if output not in result:
        raise UndefinedVariable(f"output {output!r} is not a variable")

    inputs = tuple(sorted(n for n in result if n not in def_map))
    for name in actual:
        if name not in result:
            raise UndefinedVariable(f"actual assignment names unknown variable {name!r}")
        if name in def_map:
            raise DuplicateDefinition(f"internal variable {name!r} cannot be assigned")
    missing = [n for n in inputs if n not in actual]
    if missing:
        raise PartialAssignment(f"no actual value for {missing}")

    order = _topological_order(def_map)

    reach = {output}
    stack = [output]
    while stack:
        for p in expr_variables(def_map[v]) if (v := stack.pop()) in def_map else ():
            if p not in reach:
                reach.add(p)
                stack.append(p)

    return CausalNetwork(
        variables=MappingProxyType(result),
        defs=MappingProxyType(def_map),
        output=output,
        actual=MappingProxyType({n: bool(actual[n]) for n in inputs}),
        inputs=inputs,
        order=tuple(order),
        unused=frozenset(result.keys() - reach),
    )


def _check_assignment(net: CausalNetwork, assignment: Mapping[str, bool]):
    for name in assignment:
        if not net.is_primitive(name):
            raise UndefinedVariable(f"{name!r} is not a primitive input")
    missing = [n for n in net.inputs if n not in assignment]
    if missing:
        raise PartialAssignment(f"no value for {missing}")


def evaluate(
    net: CausalNetwork,
    assignment: Mapping[str, bool],
    interventions: Mapping[str, bool] | None = None,
) -> dict[str, bool]:
    """Bottom-up evaluation.

    ``interventions`` pins internal variables to fixed values, overriding
    their definitions; used by the structural contingency checks.
    """
    _check_assignment(net, assignment)
    return _propagate(net, {n: bool(assignment[n]) for n in net.inputs}, interventions or {})


def _propagate(net: CausalNetwork, values: dict, interventions: Mapping[str, bool]) -> dict:
    """Fill in internal values over an already-checked input assignment."""
    for name in net.order:
        if name in interventions:
            values[name] = bool(interventions[name])
        else:
            values[name] = eval_expr(net.defs[name], values)
    return values


def with_actual(net: CausalNetwork, actual: Mapping[str, bool]) -> CausalNetwork:
    """The same structure under another actual world (no re-validation)."""
    _check_assignment(net, actual)
    out = CausalNetwork(net.variables, net.defs, net.output,
                        MappingProxyType({k: bool(actual[k]) for k in net.inputs}),
                        net.inputs, net.order, net.unused)
    # structure-only caches stay valid
    for key, value in net._cache.items():
        if (key[0] if isinstance(key, tuple) else key) in STRUCTURAL_CACHE_KEYS:
            out._cache[key] = value
    return out


def input_cube(n: int) -> list[np.ndarray]:
    """Column ``i`` holds bit ``i`` of every index in ``range(2**n)``."""
    idx = np.arange(1 << n, dtype=np.int64)
    return [((idx >> i) & 1).astype(bool) for i in range(n)]


def truth_table(net: CausalNetwork, var: str | None = None) -> np.ndarray:
    """Output values over all input points; bit ``i`` of the index is ``net.inputs[i]``."""
    n = len(net.inputs)
    if n > MAX_EQUIVALENCE_PARENTS:
        raise SearchBudgetExceeded(f"{n} inputs is too many for a truth table")
    size = 1 << n
    env = dict(zip(net.inputs, input_cube(n)))
    for name in net.order:
        env[name] = eval_expr_array(net.defs[name], env, size)
    return env[var or net.output]


def inline_expr(net: CausalNetwork, var: str | None = None) -> BoolExpr:
    """The definition of ``var`` (default: the output) over primitive inputs only."""
    memo: dict[str, BoolExpr] = {}
    for name in net.order:
        memo[name] = substitute(net.defs[name], memo)
    var = var or net.output
    return memo.get(var, Var(var))


def restrict(net: CausalNetwork, partial: Mapping[str, bool]) -> CausalNetwork:
    """Fix some primitive inputs to constants and fold them away."""
    for name in partial:
        if not net.is_primitive(name):
            raise UndefinedVariable(f"{name!r} is not a primitive input of the network")
    consts: dict[str, BoolExpr] = {n: Const(bool(v)) for n, v in partial.items()}
    new_defs: dict[str, BoolExpr] = {}
    for name in net.order:
        e = fold_constants(substitute(net.defs[name], consts))
        new_defs[name] = e
        if isinstance(e, Const):
            consts[name] = e
    if net.output in partial:
        new_defs[net.output] = Const(bool(partial[net.output]))
    variables = [v for n, v in net.variables.items() if n not in partial or n == net.output]
    variables = [Variable(v.id, VarKind.INTERNAL if v.id in new_defs else v.kind, v.label)
                 for v in variables]
    actual = {n: v for n, v in net.actual.items() if n not in partial}
    return build_network(variables, new_defs, net.output, actual)


def _eval_subnetwork(defs: Mapping[str, BoolExpr], order: list[str], env: dict) -> dict:
    env = dict(env)
    for name in order:
        env[name] = eval_expr(defs[name], env)
    return env


def expand_node(
    net: CausalNetwork,
    var: str,
    replacement: Mapping[str, BoolExpr] | str,
) -> CausalNetwork:
    """Replace the definition of internal ``var`` by a multi-node subnetwork.

    ``replacement`` maps ``var`` to its new top-level expression and every
    fresh intermediate variable to its definition (or is that mapping in
    network text form).  It may only mention the original parents of ``var``
    and its own fresh variables, and must agree with the old definition on
    every valuation of the parents.
    """
    if isinstance(replacement, str):
        replacement = dict(parse_definitions(replacement))
    if var not in net.variables:
        raise UndefinedVariable(f"{var!r} is not in the network")
    if var not in net.defs:
        raise NetworkError(f"{var!r} is a primitive input; only internal variables expand")
    if var not in replacement:
        raise NetworkError(f"replacement must define {var!r}")
    fresh = [n for n in replacement if n != var]
    clash = [n for n in fresh if n in net.variables]
    if clash:
        raise FreshIdCollision(f"fresh ids already in the network: {clash}")
    parents = sorted(net.parents(var))
    allowed = set(parents) | set(replacement)
    for name, e in replacement.items():
        extra = expr_variables(e) - allowed
        if extra:
            raise NotEquivalent(f"{name!r} refers to non-parent variables {sorted(extra)}")
    if len(parents) > MAX_EQUIVALENCE_PARENTS:
        raise SearchBudgetExceeded(f"{len(parents)} parents exceeds the equivalence cap")
    sub_order = [n for n in _topological_order(replacement) if n != var] + [var]
    old = net.defs[var]
    for bits in product((False, True), repeat=len(parents)):
        env = dict(zip(parents, bits))
        if eval_expr(old, env) != _eval_subnetwork(replacement, sub_order, env)[var]:
            raise NotEquivalent(f"replacement differs from {var!r} at {env}")
    new_defs = dict(net.defs)
    new_defs.update(replacement)
    variables = list(net.variables.values()) + [Variable(n, VarKind.INTERNAL) for n in fresh]
    return build_network(variables, new_defs, net.output, net.actual)


# -- network text -------------------------------------------------------------

_DEF_LINE = re.compile(rf"^\s*({_IDENT})\s*=(.*)$")


def parse_definitions(text: str) -> list[tuple[str, BoolExpr]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _DEF_LINE.match(line)
        if not m:
            raise ParseError("expected 'name = expr'", line=lineno)
        out.append((m.group(1), parse_expr(m.group(2), line=lineno)))
    return out


def parse_network(text: str) -> CausalNetwork:
    defs = []
    output = None
    actual: dict[str, bool] = {}
    labels: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("@"):
            directive, _, rest = line.partition(" ")
            rest = rest.strip()
            if directive == "@output":
                if not re.fullmatch(_IDENT, rest):
                    raise ParseError("bad @output", line=lineno)
                output = rest
            elif directive == "@actual":
                for item in rest.split():
                    name, eq, val = item.partition("=")
                    if not eq or val not in ("0", "1") or not re.fullmatch(_IDENT, name):
                        raise ParseError(f"bad actual value {item!r}", line=lineno)
                    if name in actual:
                        raise DuplicateDefinition(f"{name!r} assigned twice (line {lineno})")
                    actual[name] = val == "1"
            elif directive == "@label":
                name, _, label = rest.partition(" ")
                if not re.fullmatch(_IDENT, name) or not label.strip():
                    raise ParseError("bad @label", line=lineno)
                labels[name] = label.strip()
            else:
                raise ParseError(f"unknown directive {directive}", line=lineno)
            continue
        m = _DEF_LINE.match(line)
        if not m:
            raise ParseError("expected 'name = expr'", line=lineno)
        defs.append((m.group(1), parse_expr(m.group(2), line=lineno)))
    if output is None:
        raise ParseError("missing @output")
    names = list(dict.fromkeys([n for n, _ in defs] + list(actual)))
    unknown = set(labels) - set(names)
    if unknown:
        raise UndefinedVariable(f"@label for unknown variables {sorted(unknown)}")
    variables = [Variable(n, VarKind.INTERNAL if n not in actual else VarKind.PRIMITIVE,
                          labels.get(n, n)) for n in names]
    return build_network(variables, defs, output, actual)


def format_network(net: CausalNetwork) -> str:
    lines = [f"{name} = {format_expr(net.defs[name])}" for name in net.order]
    lines.append(f"@output {net.output}")
    if net.inputs:
        lines.append("@actual " + " ".join(f"{n}={int(net.actual[n])}" for n in net.inputs))
    for name in sorted(net.variables):
        label = net.variables[name].label
        if label != name:
            lines.append(f"@label {name} {label}")
    return "\n".join(lines) + "\n"
