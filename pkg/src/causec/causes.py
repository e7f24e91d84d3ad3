"""Cause checkers, responsibility and ranking.

Four definitions are implemented, all with single primitive inputs as the
candidate causes:

``cf``
    Counterfactual: flipping the variable alone flips the output.
``hp``
    Halpern-Pearl actual cause (strong AC2(b)).  The contingency ``W`` may
    contain internal variables as well as inputs; for every ``W' ⊆ W`` kept
    at the contingency values and every set of other internal variables
    reset to their actual values, the output must keep its actual value.
``chk``
    Chockler-Halpern-Kupferman variant for Boolean circuits: some set of
    inputs, when flipped, leaves the output unchanged and makes the variable
    critical.  No condition is placed on subsets of the flipped set.
``functional``
    Decided on the potential function of the output over the primitive
    inputs: a set of inputs ``Γ`` is flipped so that the partial derivative
    with respect to the variable is nonzero, and flipping any subset of
    ``Γ`` leaves the output value intact.  Because only the function of the
    inputs is consulted, rewriting the network into an equivalent one never
    changes the verdicts.

Responsibility is ``1/(1+|Γ|)`` for a minimum witness, and 0 for non-causes.
Witnesses are chosen by size, then by the lexicographic order of their
sorted variable ids, so certificates are reproducible.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import NotPrimitive, NotReadOnce, SearchBudgetExceeded, UndefinedVariable
from .network import (
    And,
    CausalNetwork,
    Const,
    Not,
    Or,
    Var,
    _propagate,
    eval_expr_array,
    evaluate,
    input_cube,
    inline_expr,
    truth_table,
)
from .potential import (
    DEFAULT_MAX_TERMS,
    Potential,
    check_read_once,
    cube_values,
    network_potential,
)

DEFAULT_MAX_INPUTS = 20
DEFAULT_MAX_INTERNAL = 16
DEFAULT_MAX_CANDIDATES = 1_000_000
_CHUNK_BITS = 16


class Definition(enum.Enum):
    COUNTERFACTUAL = "cf"
    HP = "hp"
    CHK = "chk"
    FUNCTIONAL = "functional"

    @classmethod
    def parse(cls, name: "str | Definition") -> "Definition":
        if isinstance(name, Definition):
            return name
        for d in cls:
            if name.lower() in (d.value, d.name.lower()):
                return d
        raise ValueError(f"unknown definition {name!r}; expected one of cf, hp, chk, functional")


def format_fraction(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Contingency:
    """Variables re-assigned by a contingency, sorted by id."""

    assignment: tuple[tuple[str, bool], ...] = ()

    @classmethod
    def of(cls, values: Mapping[str, bool]) -> "Contingency":
        return cls(tuple(sorted((k, bool(v)) for k, v in values.items())))

    @property
    def gamma(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.assignment)

    @property
    def gamma_assignment(self) -> dict[str, bool]:
        return dict(self.assignment)

    def __len__(self):
        return len(self.assignment)


@dataclass(frozen=True)
class CauseCertificate:
    variable: str
    definition: Definition
    verdict: bool
    witness: Contingency | None
    responsibility: Fraction
    label: str = ""

    def to_json(self) -> dict:
        gamma = self.witness.assignment if self.witness else ()
        return {
            "variable": self.variable,
            "definition": self.definition.value,
            "verdict": self.verdict,
            "gamma": [{"var": k, "value": v} for k, v in gamma],
            "responsibility": format_fraction(self.responsibility),
        }


_ZERO = Fraction(0)


def _certificate(var, definition, witness, label) -> CauseCertificate:
    if witness is None:
        return CauseCertificate(var, definition, False, None, _ZERO, label)
    return CauseCertificate(var, definition, True, witness,
                            Fraction(1, 1 + len(witness)), label)


def _require_primitive(net: CausalNetwork, var: str):
    if var not in net.variables:
        raise UndefinedVariable(f"{var!r} is not a network variable")
    if var in net.defs:
        raise NotPrimitive(f"{var!r} is internal; causes are primitive inputs")


def _require_cap(n: int, max_inputs: int):
    if n > max_inputs:
        raise SearchBudgetExceeded(
            f"{n} primitive inputs exceeds the exhaustive-search cap of {max_inputs}")


# -- exhaustive search over flip masks ------------------------------------------

@lru_cache(maxsize=32)
def _popcounts(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    pc = np.zeros(1 << n, dtype=np.int16)
    for i in range(n):
        pc += ((idx >> i) & 1).astype(np.int16)
    pc.flags.writeable = False
    return pc


def _all_submasks(good: np.ndarray, n: int) -> np.ndarray:
    """out[M] = AND of good[M'] over every M' ⊆ M."""
    out = good.copy()
    if n:
        cube = out.reshape((2,) * n)
        for axis in range(n):
            lo = (slice(None),) * axis + (0,)
            hi = (slice(None),) * axis + (1,)
            cube[hi] &= cube[lo]
    return out


def _min_mask(ok: np.ndarray, n: int) -> int | None:
    """Smallest admissible flip mask: by popcount, then lexicographic bit tuple."""
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    pc = _popcounts(n)[hits]
    best = hits[pc == pc.min()]
    return min(best.tolist(), key=lambda m: [i for i in range(n) if m >> i & 1])


class BooleanFunction:
    """A Boolean function of named inputs tabulated over the whole cube.

    ``values[i]`` is the output at the point whose bit ``j`` is input ``j``.
    Used directly for outputs that are not expressions (aggregate
    predicates); networks go through the potential function instead.
    """

    def __init__(self, inputs: Sequence[str], actual: Mapping[str, bool], values: np.ndarray,
                 labels: Mapping[str, str] | None = None):
        self.inputs = tuple(inputs)
        self.n = len(self.inputs)
        self.values = np.asarray(values, dtype=bool)
        if self.values.shape != (1 << self.n,):
            raise ValueError("table size does not match the number of inputs")
        self.actual = {k: bool(actual[k]) for k in self.inputs}
        self.actual_index = sum(1 << i for i, k in enumerate(self.inputs) if self.actual[k])
        self.labels = dict(labels or {})
        self._rel = np.arange(1 << self.n, dtype=np.int64) ^ self.actual_index

    @property
    def actual_output(self) -> bool:
        return bool(self.values[self.actual_index])

    def _bit(self, var):
        try:
            return self.inputs.index(var)
        except ValueError:
            raise UndefinedVariable(f"{var!r} is not an input") from None

    def _witness(self, mask: int | None) -> Contingency | None:
        if mask is None:
            return None
        return Contingency.of({k: not self.actual[k]
                               for i, k in enumerate(self.inputs) if mask >> i & 1})

    def certificate(self, var: str, definition: Definition | str) -> CauseCertificate:
        definition = Definition.parse(definition)
        b = self._bit(var)
        out = self.actual_output
        rel_vals = self.values[self._rel]
        flipped = self.values[self._rel ^ (1 << b)]
        xfree = (np.arange(1 << self.n) >> b & 1) == 0
        if definition is Definition.COUNTERFACTUAL:
            mask = 0 if flipped[0] != out else None
        else:
            keep = rel_vals == out
            pivot = flipped != rel_vals
            if definition is Definition.CHK:
                ok = keep & pivot & xfree
            else:
                # without internal variables HP and functional coincide
                ok = _all_submasks(keep, self.n) & pivot & xfree
            mask = _min_mask(ok, self.n)
        return _certificate(var, definition, self._witness(mask), self.labels.get(var, var))


# -- the four checkers on networks ----------------------------------------------

def is_counterfactual_cause(net: CausalNetwork, var: str) -> CauseCertificate:
    _require_primitive(net, var)
    world = dict(net.actual)
    world[var] = not world[var]
    flips = _propagate(net, world, {})[net.output] != net.actual_output
    return _certificate(var, Definition.COUNTERFACTUAL, Contingency() if flips else None,
                        net.label(var))


def chk_cause(net: CausalNetwork, var: str, *, max_inputs: int = DEFAULT_MAX_INPUTS) -> CauseCertificate:
    _require_primitive(net, var)
    _require_cap(len(net.inputs), max_inputs)
    return _table_view(net).certificate(var, Definition.CHK)


def _table_view(net: CausalNetwork) -> BooleanFunction:
    if "table" not in net._cache:
        net._cache["table"] = BooleanFunction(
            net.inputs, net.actual, truth_table(net),
            {k: net.label(k) for k in net.inputs})
    return net._cache["table"]


def functional_cause(
    net: CausalNetwork,
    var: str,
    *,
    max_inputs: int = DEFAULT_MAX_INPUTS,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> CauseCertificate:
    _require_primitive(net, var)
    _require_cap(len(net.inputs), max_inputs)
    p = network_potential(net, max_terms)
    return _functional_from_potential(p, net.inputs, net.actual, var, net.label(var), net._cache)


def _functional_from_potential(p: Potential, inputs, actual, var, label, cache=None) -> CauseCertificate:
    n = len(inputs)
    if var not in p.variables:
        return _certificate(var, Definition.FUNCTIONAL, None, label)
    values, rel, stable = _functional_cube(p, inputs, actual, cache)
    b = inputs.index(var)
    idx = np.arange(1 << n, dtype=np.int64)
    # multilinear, so the derivative in x is p(x=1) - p(x=0) at every point
    derivative = values[idx | (1 << b)] - values[idx & ~(1 << b)]
    pivot = derivative[rel] != 0
    xfree = (idx >> b & 1) == 0
    mask = _min_mask(stable & pivot & xfree, n)
    witness = None
    if mask is not None:
        witness = Contingency.of({k: not actual[k] for i, k in enumerate(inputs) if mask >> i & 1})
    return _certificate(var, Definition.FUNCTIONAL, witness, label)


def _functional_cube(p: Potential, inputs, actual, cache):
    """Value cube, flip-to-point map and the all-subsets-keep mask; shared by every variable."""
    if cache is not None and "functional_cube" in cache:
        return cache["functional_cube"]
    n = len(inputs)
    a_idx = sum(1 << i for i, k in enumerate(inputs) if actual[k])
    rel = np.arange(1 << n, dtype=np.int64) ^ a_idx
    values = cube_values(p, inputs)
    stable = _all_submasks(values[rel] == values[a_idx], n)
    out = (values, rel, stable)
    if cache is not None:
        cache["functional_cube"] = out
    return out


def _ac2b_holds(net, var, w, actual_vals, resettable) -> bool:
    """Output keeps its actual value for every W' ⊆ W and every reset set Z'."""
    out = actual_vals[net.output]
    choices = sorted(w) + sorted(resettable)
    c = len(choices)
    low = min(c, _CHUNK_BITS)
    size = 1 << low
    low_cols = input_cube(low)
    for high in product((False, True), repeat=c - low):
        cols = dict(zip(choices, low_cols))
        for name, bit in zip(choices[low:], high):
            cols[name] = np.full(size, bit)
        env = {}
        for i in net.inputs:
            if i in w:
                env[i] = np.where(cols[i], w[i], actual_vals[i])
            else:
                env[i] = np.full(size, actual_vals[i])
        for name in net.order:
            computed = eval_expr_array(net.defs[name], env, size)
            if name in w:
                computed = np.where(cols[name], w[name], computed)
            elif name in resettable:
                computed = np.where(cols[name], actual_vals[name], computed)
            env[name] = computed
        if not np.all(env[net.output] == out):
            return False
    return True


def hp_actual_cause(
    net: CausalNetwork,
    var: str,
    *,
    max_inputs: int = DEFAULT_MAX_INPUTS,
    max_internal: int = DEFAULT_MAX_INTERNAL,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
) -> CauseCertificate:
    _require_primitive(net, var)
    _require_cap(len(net.inputs), max_inputs)
    actual_vals = net.actual_values()
    out = actual_vals[net.output]
    relevant = [v for v in net.variables if v not in net.unused and v not in (var, net.output)]
    internal = [v for v in relevant if v in net.defs]
    if len(internal) > max_internal:
        raise SearchBudgetExceeded(
            f"{len(internal)} internal variables exceeds the HP search cap of {max_internal}")
    pool = sorted(relevant)
    flipped_world = dict(net.actual)
    flipped_world[var] = not flipped_world[var]
    examined = 0
    for k in range(len(pool) + 1):
        for W in combinations(pool, k):
            w_int = [v for v in W if v in net.defs]
            prim = {v: not net.actual[v] for v in W if v not in net.defs}
            world = dict(flipped_world)
            world.update(prim)
            for bits in product((False, True), repeat=len(w_int)):
                examined += 1
                if examined > max_candidates:
                    raise SearchBudgetExceeded(
                        f"HP search examined more than {max_candidates} contingencies")
                pinned = dict(zip(w_int, bits))
                # AC2(a): the flip changes the output under the contingency
                if evaluate(net, world, pinned)[net.output] == out:
                    continue
                w = {**prim, **pinned}
                resettable = [v for v in internal if v not in w]
                if _ac2b_holds(net, var, w, actual_vals, set(resettable)):
                    return _certificate(var, Definition.HP, Contingency.of(w), net.label(var))
    return _certificate(var, Definition.HP, None, net.label(var))


# -- tractable case: read-once output -------------------------------------------

def _tree_costs(e, actual, memo):
    """(value, min flips to change the value, one minimum flip set) per subtree."""
    key = id(e)
    if key in memo:
        return memo[key]
    if isinstance(e, Var):
        r = (actual[e.name], 1, (e.name,))
    elif isinstance(e, Not):
        v, c, s = _tree_costs(e.child, actual, memo)
        r = (not v, c, s)
    elif isinstance(e, Const):
        r = (e.value, None, ())
    else:
        kids = [_tree_costs(c, actual, memo) for c in e.children]
        controlling = isinstance(e, Or)  # child value that decides the gate
        deciding = [k for k in kids if k[0] == controlling]
        value = controlling if deciding else not controlling
        if deciding:
            # every deciding child must change
            if any(k[1] is None for k in deciding):
                r = (value, None, ())
            else:
                r = (value, sum(k[1] for k in deciding),
                     tuple(sorted(v for k in deciding for v in k[2])))
        else:
            finite = [k for k in kids if k[1] is not None]
            if not finite:
                r = (value, None, ())
            else:
                best = min(finite, key=lambda k: (k[1], k[2]))
                r = (value, best[1], best[2])
    memo[key] = r
    return r


def _path_to(e, var):
    """Gates from the root down to the leaf of ``var``, with the child index taken."""
    path = []
    while True:
        if isinstance(e, Var):
            return path if e.name == var else None
        if isinstance(e, Not):
            e = e.child
            continue
        if isinstance(e, Const):
            return None
        for i, c in enumerate(e.children):
            sub = _path_to(c, var)
            if sub is not None:
                return path + [(e, i)] + sub
        return None


def functional_cause_tree(net: CausalNetwork, var: str) -> CauseCertificate:
    """Functional cause for read-once outputs in time polynomial in the formula size.

    Along the path from ``var`` to the root, a sibling already at the gate's
    non-controlling value costs nothing; any other sibling must be flipped
    (at its minimum flip cost), and that is only admissible when ``var``'s
    literal holds the gate's controlling value, so that flipping a subset
    of the siblings cannot move the output.
    """
    _require_primitive(net, var)
    tree = _readonce_tree(net)
    label = net.label(var)
    if var not in tree.variables:
        return _certificate(var, Definition.FUNCTIONAL, None, label)
    memo = net._cache.setdefault("tree_costs", {})
    path = _path_to(tree.expr, var)
    literal = _tree_costs(_leaf(tree.expr, path), net.actual, memo)[0]
    flips: list[str] = []
    for gate, idx in path:
        passing = isinstance(gate, And)  # non-controlling value
        for j, sibling in enumerate(gate.children):
            if j == idx:
                continue
            value, cost, flipset = _tree_costs(sibling, net.actual, memo)
            if value == passing:
                continue
            if literal == passing:
                return _certificate(var, Definition.FUNCTIONAL, None, label)
            flips.extend(flipset)
    witness = Contingency.of({v: not net.actual[v] for v in flips})
    return _certificate(var, Definition.FUNCTIONAL, witness, label)


def _leaf(expr, path):
    node = path[-1][0].children[path[-1][1]] if path else expr
    return node


def _readonce_tree(net):
    if "tree" not in net._cache:
        net._cache["tree"] = check_read_once(inline_expr(net))
    tree = net._cache["tree"]
    if tree is None:
        raise NotReadOnce("network output is not read-once")
    return tree


# -- dispatch, ranking, comparison ---------------------------------------------

def check_cause(net: CausalNetwork, var: str, definition: Definition | str = Definition.FUNCTIONAL,
                **caps) -> CauseCertificate:
    definition = Definition.parse(definition)
    if definition is Definition.COUNTERFACTUAL:
        return is_counterfactual_cause(net, var)
    if definition is Definition.HP:
        return hp_actual_cause(net, var, **caps)
    if definition is Definition.CHK:
        return chk_cause(net, var, **{k: v for k, v in caps.items() if k == "max_inputs"})
    return functional_cause(net, var, **{k: v for k, v in caps.items() if k in ("max_inputs", "max_terms")})


def responsibility(net: CausalNetwork, var: str, definition: Definition | str = Definition.FUNCTIONAL,
                   **caps) -> Fraction:
    return check_cause(net, var, definition, **caps).responsibility


def rank_key(cert: CauseCertificate):
    return (-cert.responsibility, cert.label, cert.variable)


def _map(fn: Callable, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def rank_by_responsibility(net: CausalNetwork, definition: Definition | str = Definition.FUNCTIONAL,
                           *, workers: int = 1, **caps) -> list[CauseCertificate]:
    """Causes sorted by responsibility (descending), then label."""
    certs = _map(lambda v: check_cause(net, v, definition, **caps), list(net.inputs), workers)
    return sorted((c for c in certs if c.verdict), key=rank_key)


@dataclass(frozen=True)
class ComparisonRow:
    variable: str
    label: str
    certificates: Mapping[Definition, CauseCertificate]

    def verdict(self, d: Definition | str) -> bool:
        return self.certificates[Definition.parse(d)].verdict

    @property
    def disagreements(self) -> tuple[tuple[str, str], ...]:
        order = list(Definition)
        return tuple((a.value, b.value) for i, a in enumerate(order) for b in order[i + 1:]
                     if self.verdict(a) != self.verdict(b))


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...] = field(default_factory=tuple)

    def disagrees(self, a: Definition | str, b: Definition | str) -> bool:
        a, b = Definition.parse(a), Definition.parse(b)
        return any(r.verdict(a) != r.verdict(b) for r in self.rows)

    def row(self, var: str) -> ComparisonRow:
        for r in self.rows:
            if r.variable == var:
                return r
        raise KeyError(var)

    def to_json(self) -> dict:
        return {"variables": [
            {
                "variable": r.variable,
                "label": r.label,
                "verdicts": {d.value: r.verdict(d) for d in Definition},
                "responsibility": {d.value: format_fraction(r.certificates[d].responsibility)
                                   for d in Definition},
                "disagreements": [f"{a}/{b}" for a, b in r.disagreements],
            }
            for r in self.rows
        ]}


def compare_definitions(net: CausalNetwork, *, workers: int = 1, **caps) -> ComparisonReport:
    def row(var):
        certs = {d: check_cause(net, var, d, **caps) for d in Definition}
        return ComparisonRow(var, net.label(var), certs)

    return ComparisonReport(tuple(_map(row, list(net.inputs), workers)))
