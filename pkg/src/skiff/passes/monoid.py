"""Monoid reduction re-association.

In a chunked nest whose inner reduce is a known monoid, the inner fold can
start from the operator's identity instead of the running outer partial; the
outer reduce then combines the per-chunk partials with the same operator.
Integer results are unchanged exactly; floating-point results move within the
usual re-association error.
"""

from __future__ import annotations

import math

from ..ir import ConstValue, Module, MONOID_REDUCE
from ..types import BoolType, FloatType, IntType, is_scalar
from .common import PassError, PassResult, RegionValue, register

MONOID_OPS = ("add", "mul", "min", "max", "and", "or", "xor")


def identity_for(op: str, ty) -> object:
    if isinstance(ty, FloatType):
        return {"add": 0.0, "mul": 1.0, "min": math.inf, "max": -math.inf}[op]
    if isinstance(ty, IntType):
        lo = -(1 << (ty.width - 1)) if ty.signed else 0
        hi = (1 << (ty.width - 1)) - 1 if ty.signed else (1 << ty.width) - 1
        return {"add": 0, "mul": 1, "min": hi, "max": lo,
                "and": -1 if ty.signed else hi, "or": 0, "xor": 0}[op]
    if isinstance(ty, BoolType):
        return {"and": True, "or": False, "xor": False}[op]
    raise PassError(f"no identity for {op} over {ty}")


def recognized_op(fn, reduce_id) -> str | None:
    """The monoid operator of a scalar reduce cycle ``r = op(r, x)``."""
    r = fn.node(reduce_id)
    u = fn.node(r.inputs[1])
    if u.kind != "binary" or u.op not in MONOID_OPS:
        return None
    if reduce_id not in u.inputs:
        return None
    other = [i for i in u.inputs if i != reduce_id]
    if len(other) != 1:
        return None
    from .. import analysis
    if reduce_id in analysis.transitive_inputs(fn, other):
        return None
    return u.op


@register("monoid-reassociate", region_arity=1)
def monoid_reassociate(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    targets = [i for i in sorted(region.nodes)
               if fn.nodes[i] is not None and fn.node(i).kind == "reduce"
               and MONOID_REDUCE in fn.node(i).attributes]
    if not targets:
        raise PassError("region has no reduce with the monoid-reduce attribute")

    changed = []
    diags = []
    for rid in targets:
        r = fn.node(rid)
        if not is_scalar(r.ty):
            diags.append(f"%{rid}: collection monoid left untouched")
            continue
        init = fn.node(r.inputs[0])
        if init.kind != "reduce":
            diags.append(f"%{rid}: single-level reduce; nothing to re-associate")
            continue
        op = recognized_op(fn, rid)
        if op is None:
            raise PassError(f"%{rid}: reduction cycle is not a recognized monoid")
        outer_id = r.inputs[0]
        outer = fn.node(outer_id)
        if outer.inputs[1] != rid:
            raise PassError(f"%{rid}: outer reduce does not chain to the inner one")
        ident = fn.constant(ConstValue(r.ty, identity_for(op, r.ty)))
        r.inputs[0] = ident
        combine = fn.binary(op, outer_id, rid, ty=r.ty)
        outer.inputs[1] = combine
        outer.attributes.add(MONOID_REDUCE)
        for nid in (ident, combine):
            fn.node(nid).labels.update(r.labels)
        changed.append((rid, outer_id, ident, combine))
    if not changed and diags:
        return PassResult(diagnostics=diags)

    nodes = set()
    for rid, outer_id, ident, combine in changed:
        nodes.update((rid, outer_id, ident, combine))
    return PassResult(results=[RegionValue(fn.name, nodes)], diagnostics=diags)
