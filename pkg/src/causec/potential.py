"""Potential functions: multilinear polynomials with exact rational coefficients.

Arithmetization maps a Boolean expression to the unique multilinear
polynomial that agrees with it on every 0/1 point::

    x      -> x
    !e     -> 1 - v(e)
    e & f  -> v(e) * v(f)
    e | f  -> v(e) + v(f) - v(e) * v(f)

with ``x * x`` reduced to ``x``.  A monomial is a frozenset of variable names;
the empty set is the constant term.  Coefficients are ``int`` when integral
and ``Fraction`` otherwise, never floats.

Printed form lists monomials in colexicographic order (compare the
reverse-sorted variable tuples): ``1 - x*y + 2/3*z``, ``x*y + z - x*y*z``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, PartialPoint, SizeExceeded, UndefinedVariable
from .network import And, BoolExpr, CausalNetwork, Const, Not, Or, Var, _NAry, fold_constants

DEFAULT_MAX_TERMS = 1 << 20

Monomial = frozenset


def _norm(c):
    if isinstance(c, bool):
        return int(c)
    if isinstance(c, int):
        return c
    if isinstance(c, Fraction):
        return c.numerator if c.denominator == 1 else c
    if isinstance(c, Rational):
        return _norm(Fraction(c.numerator, c.denominator))
    raise TypeError(f"coefficients must be exact rationals, got {type(c).__name__}")


def _colex(mono) -> tuple:
    return tuple(sorted(mono, reverse=True))


class Potential:
    """Immutable sparse multilinear polynomial."""

    __slots__ = ("_terms", "_hash", "_vars")

    def __init__(self, terms: Mapping[Iterable[str], object] | None = None):
        clean: dict[frozenset, object] = {}
        for mono, c in (terms or {}).items():
            mono = frozenset(mono)
            c = _norm(c) + clean.get(mono, 0)
            if c:
                clean[mono] = _norm(c)
            else:
                clean.pop(mono, None)
        self._terms = clean
        self._hash = None
        self._vars = None

    @classmethod
    def _raw(cls, terms: dict) -> "Potential":
        p = cls.__new__(cls)
        p._terms = terms
        p._hash = None
        p._vars = None
        return p

    @classmethod
    def const(cls, c) -> "Potential":
        c = _norm(c)
        return cls._raw({frozenset(): c} if c else {})

    @classmethod
    def var(cls, name: str) -> "Potential":
        return cls._raw({frozenset((name,)): 1})

    # -- inspection

    @property
    def terms(self) -> Mapping[frozenset, object]:
        return MappingProxyType(self._terms)

    @property
    def variables(self) -> frozenset[str]:
        if self._vars is None:
            self._vars = frozenset().union(*self._terms) if self._terms else frozenset()
        return self._vars

    def degree(self, var: str) -> int:
        """Degree in ``var``: 1 if it occurs in some monomial, else 0."""
        return int(any(var in m for m in self._terms))

    def total_degree(self) -> int:
        return max((len(m) for m in self._terms), default=0)

    def constant(self):
        return self._terms.get(frozenset(), 0)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self):
        return len(self._terms)

    # -- arithmetic

    @staticmethod
    def _lift(other):
        if isinstance(other, Potential):
            return other
        if isinstance(other, (int, Fraction)):
            return Potential.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = _norm(v)
            else:
                out.pop(m, None)
        return Potential._raw(out)

    __radd__ = __add__

    def __neg__(self):
        return Potential._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def mul(self, other: "Potential", max_terms: int = DEFAULT_MAX_TERMS) -> "Potential":
        out: dict[frozenset, object] = {}
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                m = ma | mb
                v = out.get(m, 0) + ca * cb
                if v:
                    out[m] = v
                else:
                    del out[m]
            if len(out) > max_terms:
                raise SizeExceeded(f"potential exceeds {max_terms} monomials")
        return Potential._raw({m: _norm(c) for m, c in out.items()})

    def __mul__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self.mul(other)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Potential.const(other)
        if not isinstance(other, Potential):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __call__(self, point: Mapping[str, object]) -> Fraction:
        return eval_potential(self, point)

    def __str__(self):
        return format_potential(self)

    def __repr__(self):
        return f"Potential({format_potential(self)!r})"


# -- arithmetization ------------------------------------------------------------

def arithmetize(
    expr: BoolExpr,
    net: CausalNetwork | None = None,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> Potential:
    """Potential function of ``expr``.

    With a network, internal variables are replaced by the potentials of
    their definitions, so the result is a polynomial over primitive inputs.
    """
    memo: dict[str, Potential] = {}

    def check(p):
        if len(p) > max_terms:
            raise SizeExceeded(f"potential exceeds {max_terms} monomials")
        return p

    def var(name):
        if net is None:
            return Potential.var(name)
        if name not in net.variables:
            raise UndefinedVariable(f"{name!r} is not a network variable")
        if name not in net.defs:
            return Potential.var(name)
        if name not in memo:
            memo[name] = rec(net.defs[name])
        return memo[name]

    def rec(e):
        if isinstance(e, Var):
            return var(e.name)
        if isinstance(e, Const):
            return Potential.const(int(e.value))
        if isinstance(e, Not):
            return check(1 - rec(e.child))
        parts = [rec(c) for c in e.children]
        acc = parts[0]
        for p in parts[1:]:
            prod = acc.mul(p, max_terms)
            acc = check(prod if isinstance(e, And) else acc + p - prod)
        return acc

    if net is not None:
        # Fill the memo bottom-up so deep networks don't recurse through definitions.
        for name in net.order:
            memo[name] = rec(net.defs[name])
    return rec(expr)


def network_potential(net: CausalNetwork, max_terms: int = DEFAULT_MAX_TERMS) -> Potential:
    """Potential of the network output over its primitive inputs (cached on ``net``)."""
    key = ("potential", max_terms)
    if key not in net._cache:
        net._cache[key] = arithmetize(Var(net.output), net, max_terms)
    return net._cache[key]


# -- evaluation and manipulation -----------------------------------------------

def _exact(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, Fraction)):
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, float):
        return Fraction(v)
    if isinstance(v, Rational):
        return Fraction(v.numerator, v.denominator)
    raise TypeError(f"point values must be rationals, got {type(v).__name__}")


def eval_potential(p: Potential, point: Mapping[str, object]) -> Fraction:
    missing = p.variables - point.keys()
    if missing:
        raise PartialPoint(f"no value for {sorted(missing)}")
    vals = {k: _exact(point[k]) for k in p.variables}
    # plain int arithmetic until a rational shows up
    total = 0
    for mono, c in p._terms.items():
        term = c
        for v in mono:
            x = vals[v]
            if x == 0:
                term = 0
                break
            if x != 1:
                term *= x
        if term:
            total += term
    return Fraction(total)


def partial_derivative(p: Potential, var: str) -> Potential:
    return Potential({m - {var}: c for m, c in p._terms.items() if var in m})


def cofactor(p: Potential, var: str, value: int) -> Potential:
    if value not in (0, 1):
        raise ValueError("cofactor value must be 0 or 1")
    if value == 0:
        return Potential._raw({m: c for m, c in p._terms.items() if var not in m})
    out: dict[frozenset, object] = {}
    for m, c in p._terms.items():
        key = m - {var}
        out[key] = out.get(key, 0) + c
    return Potential(out)


def dense_coefficients(p: Potential, inputs: Sequence[str]) -> np.ndarray:
    """Coefficient vector indexed by monomial bitmask (bit ``i`` is ``inputs[i]``)."""
    index = {v: i for i, v in enumerate(inputs)}
    stray = p.variables - index.keys()
    if stray:
        raise UndefinedVariable(f"potential mentions {sorted(stray)} outside the inputs")
    integral = all(isinstance(c, int) for c in p._terms.values())
    out = np.zeros(1 << len(inputs), dtype=np.int64 if integral else object)
    if not integral:
        out[:] = Fraction(0)
    for mono, c in p._terms.items():
        mask = 0
        for v in mono:
            mask |= 1 << index[v]
        out[mask] = c
    return out


def _subset_sum(values: np.ndarray, n: int) -> np.ndarray:
    """In-place zeta transform: out[S] = sum of values[T] over T subset of S."""
    if n == 0:
        return values
    cube = values.reshape((2,) * n)
    for axis in range(n):
        lo = (slice(None),) * axis + (0,)
        hi = (slice(None),) * axis + (1,)
        cube[hi] += cube[lo]
    return values


def cube_values(p: Potential, inputs: Sequence[str]) -> np.ndarray:
    """Values of ``p`` at every 0/1 point; index bit ``i`` is ``inputs[i]``."""
    return _subset_sum(dense_coefficients(p, inputs), len(inputs))


# -- read-once tree forms -------------------------------------------------------

@dataclass(frozen=True)
class TreeForm:
    """Negation-normal, flattened, constant-free formula with each variable once."""

    expr: BoolExpr
    variables: frozenset[str]


def _nnf(e: BoolExpr, negate: bool = False) -> BoolExpr:
    if isinstance(e, Var):
        return Not(e) if negate else e
    if isinstance(e, Const):
        return Const(e.value != negate)
    if isinstance(e, Not):
        return _nnf(e.child, not negate)
    op = And if isinstance(e, And) != negate else Or
    return op(tuple(_nnf(c, negate) for c in e.children))


def _flatten(e: BoolExpr) -> BoolExpr:
    if not isinstance(e, _NAry):
        return e
    kids = []
    for c in e.children:
        c = _flatten(c)
        if type(c) is type(e):
            kids.extend(c.children)
        else:
            kids.append(c)
    return kids[0] if len(kids) == 1 else type(e)(tuple(kids))


def normalize(expr: BoolExpr) -> BoolExpr:
    """Push negations to the leaves, fold constants, merge nested same-type gates."""
    return _flatten(fold_constants(_nnf(expr)))


def check_read_once(expr: BoolExpr) -> TreeForm | None:
    tree = normalize(expr)
    seen: set[str] = set()
    stack = [tree]
    while stack:
        e = stack.pop()
        if isinstance(e, Var):
            if e.name in seen:
                return None
            seen.add(e.name)
        elif isinstance(e, Not):
            stack.append(e.child)
        elif isinstance(e, _NAry):
            stack.extend(e.children)
    return TreeForm(tree, frozenset(seen))


# -- text form -------------------------------------------------------------------

def _format_coeff(c) -> str:
    return str(c)  # int -> "3", Fraction -> "2/3"


def format_potential(p: Potential) -> str:
    if not p._terms:
        return "0"
    pieces = []
    for mono in sorted(p._terms, key=_colex):
        c = p._terms[mono]
        mag = -c if c < 0 else c
        names = "*".join(sorted(mono))
        if not names:
            body = _format_coeff(mag)
        elif mag == 1:
            body = names
        else:
            body = f"{_format_coeff(mag)}*{names}"
        if not pieces:
            pieces.append(("-" if c < 0 else "") + body)
        else:
            pieces.append(("- " if c < 0 else "+ ") + body)
    return " ".join(pieces)


_PTOKEN = re.compile(r"\s*(?:(\d+(?:/\d+)?)|([A-Za-z_][A-Za-z0-9_#.']*)|([-+*]))")


def parse_potential(text: str) -> Potential:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _PTOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError("unexpected character in polynomial", position=pos)
        if m.group(1):
            tokens.append(("num", m.group(1), m.start(1)))
        elif m.group(2):
            tokens.append(("var", m.group(2), m.start(2)))
        else:
            tokens.append(("op", m.group(3), m.start(3)))
        pos = m.end()
    if not tokens:
        raise ParseError("empty polynomial", position=0)

    terms: dict[frozenset, object] = {}
    i = 0
    first = True
    while i < len(tokens):
        sign = 1
        if tokens[i][0] == "op" and tokens[i][1] in "+-":
            sign = -1 if tokens[i][1] == "-" else 1
            i += 1
        elif not first:
            raise ParseError("expected '+' or '-'", position=tokens[i][2])
        first = False
        coeff: object = 1
        mono: set[str] = set()
        expect_factor = True
        while i < len(tokens) and expect_factor:
            kind, val, where = tokens[i]
            if kind == "num":
                coeff = coeff * Fraction(val)
            elif kind == "var":
                mono.add(val)
            else:
                raise ParseError("expected a number or variable", position=where)
            i += 1
            expect_factor = i < len(tokens) and tokens[i][1] == "*"
            if expect_factor:
                i += 1
                if i >= len(tokens):
                    raise ParseError("dangling '*'", position=len(text))
        key = frozenset(mono)
        terms[key] = terms.get(key, 0) + sign * _norm(Fraction(coeff))
    return Potential(terms)
