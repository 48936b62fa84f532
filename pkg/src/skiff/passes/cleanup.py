"""Scalar cleanups: dead code elimination and constant folding."""

from __future__ import annotations

from ..ir import ConstValue, Module, NodeId
from ..types import BOOL, U64, IntType
from .common import PassResult, RegionValue, register


@register("dce", region_arity=1)
def dce(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    live: set[NodeId] = set()
    stack: list[NodeId] = []
    for i, n in fn.live_nodes():
        if n.is_control:
            live.add(i)
            stack.extend(x for x in n.all_inputs())
    while stack:
        i = stack.pop()
        if i in live:
            continue
        live.add(i)
        stack.extend(fn.node(i).all_inputs())
    remap: dict[NodeId, tuple[NodeId, ...]] = {}
    removed = 0
    for i, n in list(fn.live_nodes()):
        if i in live or i not in region.nodes:
            continue
        remap[i] = ()
        fn.delete(i)
        removed += 1
    return PassResult(remapping={fn.name: remap},
                      diagnostics=[f"removed {removed} dead nodes"])


def _fold_binary(op: str, a, b, ty):
    import numpy as np
    from ..runtime.values import scalar_binop
    return scalar_binop(op, a, b, ty)


@register("constant-fold", region_arity=1)
def constant_fold(module: Module, static_args, regions) -> PassResult:
    from ..runtime.values import typed_scalar
    region = regions[0]
    fn = module.functions[region.function]
    remap: dict[NodeId, tuple[NodeId, ...]] = {}
    folded = 0
    changed = True
    while changed:
        changed = False
        for i, n in list(fn.live_nodes()):
            if i not in region.nodes or fn.nodes[i] is None:
                continue
            if n.kind == "dynconst":
                from ..dynconst import DcLiteral
                if isinstance(n.dc, DcLiteral):
                    c = fn.constant(ConstValue(U64, n.dc.value))
                    fn.node(c).labels.update(n.labels)
                    fn.replace_uses(i, c)
                    remap[i] = (c,)
                    fn.delete(i)
                    region.nodes.add(c)
                    folded += 1
                    changed = True
                continue
            if n.kind not in ("binary", "unary"):
                continue
            ins = [fn.nodes[x] for x in n.inputs]
            if not all(x is not None and x.kind == "constant"
                       and not x.const.is_zero_collection for x in ins):
                continue
            vals = [typed_scalar(x.const.value if x.const.value is not None else 0,
                                 x.const.ty) for x in ins]
            try:
                if n.kind == "binary":
                    out = _fold_binary(n.op, vals[0], vals[1], n.ty)
                elif n.op == "neg":
                    out = typed_scalar(-vals[0], n.ty)
                elif n.op == "not":
                    out = not bool(vals[0])
                else:  # cast
                    out = typed_scalar(vals[0], n.ty)
            except Exception:
                continue
            if n.ty == BOOL:
                py = bool(out)
            elif isinstance(n.ty, IntType):
                py = int(out)
            else:
                py = float(out)
            c = fn.constant(ConstValue(n.ty, py))
            fn.node(c).labels.update(n.labels)
            fn.replace_uses(i, c)
            remap[i] = (c,)
            fn.delete(i)
            region.nodes.add(c)
            folded += 1
            changed = True
    return PassResult(remapping={fn.name: remap},
                      diagnostics=[f"folded {folded} nodes"])
