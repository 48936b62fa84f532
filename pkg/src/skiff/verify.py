"""Structural and type verification.

``verify`` returns diagnostics instead of raising: an empty list is the
well-formedness certificate every pass must re-establish.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import analysis
from .analysis import AnalysisError
from .dynconst import DynConst, max_param
from .ir import (Function, Module, Node, NodeId, Field, Variant, Position,
                 BINARY_OPS, COMPARISON_OPS, UNARY_OPS)
from .types import (Type, BOOL, U64, ArrayType, ProductType, SummationType,
                    is_scalar, is_collection, is_integer)


@dataclass
class Diagnostic:
    function: str
    node: NodeId | None
    rule: str
    message: str

    def __str__(self):
        where = f"%{self.node}" if self.node is not None else "<fn>"
        return f"{self.function}:{where}: [{self.rule}] {self.message}"


def verify(module: Module) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for fn in module.functions.values():
        diags.extend(_verify_function(module, fn))
    diags.extend(_verify_call_graph(module))
    return diags


def verify_function(module: Module, fn: Function) -> list[Diagnostic]:
    return _verify_function(module, fn)


def _verify_call_graph(module: Module) -> list[Diagnostic]:
    graph = module.call_graph()
    state: dict[str, int] = {}
    diags: list[Diagnostic] = []

    def visit(name: str, path: list[str]):
        if state.get(name) == 1:
            diags.append(Diagnostic(name, None, "recursion",
                                    "call cycle: " + " -> ".join(path + [name])))
            return
        if state.get(name) == 2:
            return
        state[name] = 1
        for callee in sorted(graph.get(name, ())):
            if callee not in module.functions:
                diags.append(Diagnostic(name, None, "unknown-callee",
                                        f"call to undefined function {callee}"))
                continue
            visit(callee, path + [name])
        state[name] = 2

    for name in module.functions:
        visit(name, [])
    for fn in module.entries():
        for t in list(fn.param_types) + [fn.return_type]:
            if not (is_scalar(t) or isinstance(t, ArrayType) and is_scalar(t.element)):
                diags.append(Diagnostic(fn.name, None, "entry-boundary",
                                        "entry signatures are scalars and arrays of scalars"))
    return diags


def _check_dc(fn: Function, nid: NodeId | None, dc: DynConst, diags: list[Diagnostic]):
    if max_param(dc) >= fn.num_dyn_consts:
        diags.append(Diagnostic(fn.name, nid, "dc-param",
                                f"dynamic-constant parameter out of range (have {fn.num_dyn_consts})"))


def _check_type_dcs(fn: Function, nid: NodeId | None, t: Type, diags):
    if isinstance(t, ArrayType):
        for e in t.extents:
            _check_dc(fn, nid, e, diags)
        _check_type_dcs(fn, nid, t.element, diags)
    elif isinstance(t, ProductType):
        for f in t.fields:
            _check_type_dcs(fn, nid, f, diags)
    elif isinstance(t, SummationType):
        for v in t.variants:
            _check_type_dcs(fn, nid, v, diags)


def _verify_function(module: Module, fn: Function) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    live = fn.all_ids()

    for i, n in fn.live_nodes():
        for inp in n.all_inputs():
            if inp not in live:
                diags.append(Diagnostic(fn.name, i, "dangling-edge",
                                        f"input %{inp} is deleted or out of range"))
    if diags:
        return diags

    for t in list(fn.param_types) + [fn.return_type]:
        _check_type_dcs(fn, None, t, diags)

    # control structure
    for i, n in fn.live_nodes():
        if n.kind == "start" and i != fn.start:
            diags.append(Diagnostic(fn.name, i, "start", "multiple start nodes"))
        if n.is_control and n.kind != "start" and n.kind != "region":
            if n.control is None or not fn.node(n.control).is_control:
                diags.append(Diagnostic(fn.name, i, "control-edge",
                                        "control node without a control predecessor"))
        if n.kind == "region":
            if not n.preds:
                diags.append(Diagnostic(fn.name, i, "region-preds", "region with no predecessors"))
            for p in n.preds:
                if not fn.node(p).is_control:
                    diags.append(Diagnostic(fn.name, i, "region-preds",
                                            f"region predecessor %{p} is not control"))
        if n.kind == "proj" and fn.node(n.control).kind != "if":
            diags.append(Diagnostic(fn.name, i, "proj", "projection must select an if branch"))
        if n.kind == "thread_id":
            fork = fn.node(n.control)
            if fork.kind != "fork":
                diags.append(Diagnostic(fn.name, i, "thread-id", "thread id must reference a fork"))
            elif n.dim >= len(fork.factors):
                diags.append(Diagnostic(fn.name, i, "thread-id-dim",
                                        f"dimension {n.dim} >= fork factor count {len(fork.factors)}"))
        if n.kind == "reduce" and fn.node(n.control).kind != "join":
            diags.append(Diagnostic(fn.name, i, "reduce", "reduce must reference a join"))
        if n.kind == "phi":
            region = fn.node(n.control)
            if region.kind != "region":
                diags.append(Diagnostic(fn.name, i, "phi", "phi must reference a region"))
            elif len(n.inputs) != len(region.preds):
                diags.append(Diagnostic(fn.name, i, "phi-arity",
                                        f"{len(n.inputs)} inputs for {len(region.preds)} predecessors"))
        if n.kind == "fork":
            if not n.factors:
                diags.append(Diagnostic(fn.name, i, "fork-factors", "fork with no factors"))
            for f in n.factors:
                _check_dc(fn, i, f, diags)
        if n.kind == "param" and n.index >= len(fn.param_types):
            diags.append(Diagnostic(fn.name, i, "param-index", "parameter ordinal out of range"))
        if n.kind == "dynconst":
            _check_dc(fn, i, n.dc, diags)
        if n.kind == "call":
            for d in n.dc_args:
                _check_dc(fn, i, d, diags)

    if diags:
        return diags

    reach = analysis.reachable_control(fn)
    rets = [i for i, n in fn.live_nodes() if n.kind == "return"]
    if len(rets) != 1:
        diags.append(Diagnostic(fn.name, None, "return", f"expected 1 return, found {len(rets)}"))
    elif rets[0] not in reach:
        diags.append(Diagnostic(fn.name, rets[0], "return", "return unreachable from start"))
    for i, n in fn.live_nodes():
        if n.is_control and i not in reach:
            diags.append(Diagnostic(fn.name, i, "unreachable-control",
                                    "control node unreachable from start"))
    if diags:
        return diags

    try:
        analysis.fork_joins(fn)
    except AnalysisError as e:
        diags.append(Diagnostic(fn.name, None, "fork-join", str(e)))
        return diags

    diags.extend(_type_check(module, fn))
    return diags


def _index_type(fn: Function, nid: NodeId, coll: Type, indices, diags) -> Type | None:
    t = coll
    for ix in indices:
        if isinstance(ix, Field):
            if not isinstance(t, ProductType) or ix.ordinal >= len(t.fields):
                diags.append(Diagnostic(fn.name, nid, "index", "bad product field index"))
                return None
            t = t.fields[ix.ordinal]
        elif isinstance(ix, Variant):
            if not isinstance(t, SummationType) or ix.ordinal >= len(t.variants):
                diags.append(Diagnostic(fn.name, nid, "index", "bad summation variant index"))
                return None
            t = t.variants[ix.ordinal]
        else:
            if not isinstance(t, ArrayType) or len(ix.ids) != len(t.extents):
                diags.append(Diagnostic(fn.name, nid, "index",
                                        "position arity must equal array dimensionality"))
                return None
            for pid in ix.ids:
                pt = fn.node(pid).ty
                if pt is not None and not is_integer(pt):
                    diags.append(Diagnostic(fn.name, nid, "index", "array position must be integer"))
            t = t.element
    return t


def _type_check(module: Module, fn: Function) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    ty: dict[NodeId, Type] = {}
    for i, n in fn.live_nodes():
        if n.ty is not None:
            ty[i] = n.ty
        elif n.kind == "param":
            ty[i] = fn.param_types[n.index]
        elif n.kind == "constant":
            ty[i] = n.const.ty
        elif n.kind in ("dynconst", "thread_id"):
            ty[i] = U64

    changed = True
    while changed:
        changed = False
        for i, n in fn.live_nodes():
            if i in ty or n.is_control:
                continue
            t = None
            if n.kind == "binary":
                lt = ty.get(n.inputs[0])
                if lt is not None:
                    t = BOOL if n.op in COMPARISON_OPS else lt
            elif n.kind == "unary":
                t = ty.get(n.inputs[0])
            elif n.kind in ("phi", "reduce"):
                for inp in n.inputs:
                    if inp in ty:
                        t = ty[inp]
                        break
            elif n.kind == "read":
                ct = ty.get(n.inputs[0])
                if ct is not None:
                    t = _index_type(fn, i, ct, n.indices, diags)
            elif n.kind == "write":
                t = ty.get(n.inputs[0])
            elif n.kind == "call":
                callee = module.functions.get(n.callee)
                if callee is not None:
                    t = _subst_call_type(callee.return_type, n.dc_args)
            if t is not None:
                ty[i] = t
                changed = True
    if diags:
        return diags

    for i, n in fn.live_nodes():
        if n.is_control:
            if n.kind == "if":
                ct = ty.get(n.inputs[0])
                if ct is not None and ct != BOOL:
                    diags.append(Diagnostic(fn.name, i, "type", "if condition must be bool"))
            if n.kind == "return":
                rt = ty.get(n.inputs[0])
                if rt is not None and rt != fn.return_type:
                    diags.append(Diagnostic(fn.name, i, "type", "return value type mismatch"))
            continue
        if i not in ty:
            diags.append(Diagnostic(fn.name, i, "type", "untypeable node"))
            continue
        t = ty[i]
        if n.kind == "binary":
            lt, rt = ty.get(n.inputs[0]), ty.get(n.inputs[1])
            if lt is not None and rt is not None and lt != rt:
                diags.append(Diagnostic(fn.name, i, "type", f"operand types differ for {n.op}"))
            if n.op not in BINARY_OPS:
                diags.append(Diagnostic(fn.name, i, "op", f"unknown binary op {n.op}"))
        elif n.kind == "unary" and n.op not in UNARY_OPS:
            diags.append(Diagnostic(fn.name, i, "op", f"unknown unary op {n.op}"))
        elif n.kind in ("phi", "reduce"):
            for inp in n.inputs:
                it = ty.get(inp)
                if it is not None and it != t:
                    diags.append(Diagnostic(fn.name, i, "type",
                                            f"{n.kind} merges incompatible types"))
        elif n.kind == "write":
            ct = ty.get(n.inputs[0])
            vt = ty.get(n.inputs[1])
            if ct is not None:
                et = _index_type(fn, i, ct, n.indices, diags)
                if et is not None and vt is not None and et != vt:
                    diags.append(Diagnostic(fn.name, i, "type", "written value type mismatch"))
                if t != ct:
                    diags.append(Diagnostic(fn.name, i, "type", "write result must keep collection type"))
        elif n.kind == "read":
            ct = ty.get(n.inputs[0])
            if ct is not None:
                et = _index_type(fn, i, ct, n.indices, diags)
                if et is not None and et != t:
                    diags.append(Diagnostic(fn.name, i, "type", "read type mismatch"))
        elif n.kind == "call":
            callee = module.functions.get(n.callee)
            if callee is None:
                diags.append(Diagnostic(fn.name, i, "unknown-callee", n.callee))
            else:
                if len(n.dc_args) != callee.num_dyn_consts:
                    diags.append(Diagnostic(fn.name, i, "call-dc-arity",
                                            "wrong number of dynamic-constant arguments"))
                if len(n.inputs) != len(callee.param_types):
                    diags.append(Diagnostic(fn.name, i, "call-arity", "wrong number of arguments"))
                else:
                    for a, pt in zip(n.inputs, callee.param_types):
                        at = ty.get(a)
                        expect = _subst_call_type(pt, n.dc_args)
                        if at is not None and expect is not None and at != expect:
                            diags.append(Diagnostic(fn.name, i, "type", "call argument type mismatch"))
        if n.ty is None:
            n.ty = t
    return diags


def _subst_call_type(t: Type, dc_args: list[DynConst]) -> Type:
    """Instantiate a callee-side type with the call's dyn-const arguments."""
    from .dynconst import DcParam, DcLiteral, DcAdd, DcSub, DcMul, DcDiv, normalize

    def subst_dc(e):
        if isinstance(e, DcParam):
            return dc_args[e.index] if e.index < len(dc_args) else e
        if isinstance(e, DcLiteral):
            return e
        cls = type(e)
        return cls(subst_dc(e.left), subst_dc(e.right))

    def subst(tt: Type) -> Type:
        if isinstance(tt, ArrayType):
            return ArrayType(subst(tt.element), tuple(normalize(subst_dc(e)) for e in tt.extents))
        if isinstance(tt, ProductType):
            return ProductType(tuple(subst(f) for f in tt.fields))
        if isinstance(tt, SummationType):
            return SummationType(tuple(subst(v) for v in tt.variants))
        return tt

    return subst(t)
