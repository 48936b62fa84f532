"""Symbolic integer expressions over dynamic-constant parameters.

A DynConst is an integer whose value is unknown until a compiled program is
invoked: array extents, fork factors, and divisibility requirements are all
expressed in terms of them. Expressions are kept in a normal form (literal
arithmetic folded, commutative operands sorted, nested exact divisions
merged) so that structurally equal quantities produced by different passes
compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass


class DynConstError(Exception):
    pass


@dataclass(frozen=True)
class DynConst:
    """Base class; use the constructors below rather than subclasses directly."""

    def __add__(self, other):
        return dc_add(self, _coerce(other))

    def __sub__(self, other):
        return dc_sub(self, _coerce(other))

    def __mul__(self, other):
        return dc_mul(self, _coerce(other))

    def __floordiv__(self, other):
        return dc_div(self, _coerce(other))


@dataclass(frozen=True)
class DcParam(DynConst):
    index: int


@dataclass(frozen=True)
class DcLiteral(DynConst):
    value: int


@dataclass(frozen=True)
class DcAdd(DynConst):
    left: DynConst
    right: DynConst


@dataclass(frozen=True)
class DcSub(DynConst):
    left: DynConst
    right: DynConst


@dataclass(frozen=True)
class DcMul(DynConst):
    left: DynConst
    right: DynConst


@dataclass(frozen=True)
class DcDiv(DynConst):
    left: DynConst
    right: DynConst


def _coerce(x) -> DynConst:
    if isinstance(x, DynConst):
        return x
    if isinstance(x, int):
        if x < 0:
            raise DynConstError(f"dynamic constants are non-negative, got {x}")
        return DcLiteral(x)
    raise TypeError(f"cannot use {x!r} as a dynamic constant")


def _sort_key(e: DynConst):
    if isinstance(e, DcLiteral):
        return (0, e.value, "", "")
    if isinstance(e, DcParam):
        return (1, e.index, "", "")
    tag = type(e).__name__
    return (2, 0, tag, render(e))


def _flatten(e: DynConst, cls) -> list[DynConst]:
    if isinstance(e, cls):
        return _flatten(e.left, cls) + _flatten(e.right, cls)
    return [e]


def _rebuild(terms: list[DynConst], cls) -> DynConst:
    acc = terms[0]
    for t in terms[1:]:
        acc = cls(acc, t)
    return acc


def dc_add(a, b) -> DynConst:
    a, b = _coerce(a), _coerce(b)
    terms = _flatten(a, DcAdd) + _flatten(b, DcAdd)
    lit = sum(t.value for t in terms if isinstance(t, DcLiteral))
    rest = sorted((t for t in terms if not isinstance(t, DcLiteral)), key=_sort_key)
    if not rest:
        return DcLiteral(lit)
    if lit:
        rest.append(DcLiteral(lit))
    return _rebuild(rest, DcAdd)


def dc_sub(a, b) -> DynConst:
    a, b = _coerce(a), _coerce(b)
    if isinstance(a, DcLiteral) and isinstance(b, DcLiteral):
        if a.value < b.value:
            raise DynConstError(f"negative dynamic constant: {a.value} - {b.value}")
        return DcLiteral(a.value - b.value)
    if isinstance(b, DcLiteral) and b.value == 0:
        return a
    if a == b:
        return DcLiteral(0)
    return DcSub(a, b)


def dc_mul(a, b) -> DynConst:
    a, b = _coerce(a), _coerce(b)
    factors = _flatten(a, DcMul) + _flatten(b, DcMul)
    lit = 1
    for f in factors:
        if isinstance(f, DcLiteral):
            lit *= f.value
    rest = sorted((f for f in factors if not isinstance(f, DcLiteral)), key=_sort_key)
    if lit == 0 or not rest:
        return DcLiteral(lit if rest or lit == 0 else lit)
    if lit != 1:
        rest.insert(0, DcLiteral(lit))
    return _rebuild(rest, DcMul)


def dc_div(a, b) -> DynConst:
    a, b = _coerce(a), _coerce(b)
    if isinstance(b, DcLiteral):
        if b.value == 0:
            raise DynConstError("division of a dynamic constant by zero")
        if b.value == 1:
            return a
        if isinstance(a, DcLiteral):
            if a.value % b.value != 0:
                raise DynConstError(f"inexact dynamic-constant division {a.value}/{b.value}")
            return DcLiteral(a.value // b.value)
        # (x / c1) / c2 == x / (c1 * c2): exact division composes.
        if isinstance(a, DcDiv) and isinstance(a.right, DcLiteral):
            return dc_div(a.left, DcLiteral(a.right.value * b.value))
        # Fold a literal coefficient of a product: (c*x)/d with d | c.
        if isinstance(a, DcMul) and isinstance(a.left, DcLiteral) and a.left.value % b.value == 0:
            return dc_mul(DcLiteral(a.left.value // b.value), a.right)
    if a == b:
        return DcLiteral(1)
    return DcDiv(a, b)


def normalize(e: DynConst) -> DynConst:
    """Re-apply the smart constructors bottom-up."""
    if isinstance(e, (DcParam, DcLiteral)):
        return e
    l, r = normalize(e.left), normalize(e.right)
    if isinstance(e, DcAdd):
        return dc_add(l, r)
    if isinstance(e, DcSub):
        return dc_sub(l, r)
    if isinstance(e, DcMul):
        return dc_mul(l, r)
    return dc_div(l, r)


def evaluate(e: DynConst, params: tuple[int, ...] | list[int]) -> int:
    """Evaluate under a concrete parameter assignment.

    Raises DynConstError for inexact division or a negative intermediate,
    which surfaces at invocation time rather than compile time.
    """
    if isinstance(e, DcLiteral):
        return e.value
    if isinstance(e, DcParam):
        if e.index >= len(params):
            raise DynConstError(f"dynamic-constant parameter #{e.index} not supplied")
        return params[e.index]
    l, r = evaluate(e.left, params), evaluate(e.right, params)
    if isinstance(e, DcAdd):
        return l + r
    if isinstance(e, DcMul):
        return l * r
    if isinstance(e, DcSub):
        if l < r:
            raise DynConstError(f"negative dynamic constant: {l} - {r}")
        return l - r
    if r == 0:
        raise DynConstError("division of a dynamic constant by zero")
    if l % r != 0:
        raise DynConstError(f"inexact dynamic-constant division {l}/{r}")
    return l // r


def max_param(e: DynConst) -> int:
    """Largest parameter index referenced, or -1."""
    if isinstance(e, DcParam):
        return e.index
    if isinstance(e, DcLiteral):
        return -1
    return max(max_param(e.left), max_param(e.right))


_PREC = {DcAdd: 1, DcSub: 1, DcMul: 2, DcDiv: 2}


def render(e: DynConst, names: list[str] | None = None) -> str:
    """Stable text form, e.g. ``n/4`` or ``4*n + 1``."""

    def go(x: DynConst, parent_prec: int) -> str:
        if isinstance(x, DcLiteral):
            return str(x.value)
        if isinstance(x, DcParam):
            if names and x.index < len(names):
                return names[x.index]
            return f"#{x.index}"
        prec = _PREC[type(x)]
        op = {DcAdd: " + ", DcSub: " - ", DcMul: "*", DcDiv: "/"}[type(x)]
        # Right operand of - and / binds tighter to keep output unambiguous.
        rp = prec + 1 if isinstance(x, (DcSub, DcDiv)) else prec
        s = go(x.left, prec) + op + go(x.right, rp)
        if prec < parent_prec:
            return "(" + s + ")"
        return s

    return go(e, 0)


@dataclass(frozen=True)
class DivisibilityConstraint:
    """Requirement that ``divisor`` exactly divides ``dividend`` at run time."""

    divisor: int
    dividend: DynConst
    origin: str  # pass or phase that introduced the requirement

    def check(self, params) -> bool:
        return evaluate(self.dividend, params) % self.divisor == 0

    def describe(self, names=None) -> str:
        return f"{self.divisor} | {render(self.dividend, names)}"
