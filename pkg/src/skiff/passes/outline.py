"""Function outlining and inlining.

Outlining extracts a single-entry/single-exit subgraph into a new function:
data edges entering it become parameters, edges leaving it become return
values, and the caller's dyn-const parameters are forwarded. Inlining splices
a callee back into its caller. These two passes are the device-partitioning
mechanism; host orchestration is whatever remains in the caller.
"""

from __future__ import annotations

from .. import analysis
from ..dynconst import DcParam
from ..ir import (Field, Function, Module, Node, NodeId, Position)
from ..types import ProductType
from .common import (FunctionHandle, PassError, PassResult, RegionValue, register)


def _clone_node(fn_src: Function, nid: NodeId, idmap) -> Node:
    n = fn_src.node(nid)
    return Node(n.kind,
                control=idmap(n.control) if n.control is not None else None,
                inputs=[idmap(i) for i in n.inputs],
                preds=[idmap(p) for p in n.preds],
                selection=n.selection, factors=list(n.factors), dim=n.dim,
                index=n.index, const=n.const, dc=n.dc, op=n.op,
                indices=[Position(tuple(idmap(i) for i in ix.ids))
                         if isinstance(ix, Position) else ix
                         for ix in n.indices],
                callee=n.callee, dc_args=list(n.dc_args), ty=n.ty,
                attributes=set(n.attributes), labels=set(n.labels))


@register("outline", region_arity=1)
def outline(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    live_region = {i for i in region.nodes if fn.nodes[i] is not None}
    controls = sorted(i for i in live_region if fn.node(i).is_control)

    entry = exit_ = None
    if controls:
        cset = set(controls)
        entries = [c for c in controls if fn.node(c).control not in cset
                   and not (set(fn.node(c).preds) & cset)]
        succ = analysis.control_successors(fn)
        exits = [c for c in controls
                 if any(s not in cset for s in succ.get(c, ()))]
        ends = [c for c in controls if not succ.get(c)]
        if len(entries) != 1 or len(exits) + len(ends) != 1:
            raise PassError("region is not single-entry/single-exit")
        entry = entries[0]
        exit_ = (exits + ends)[0]

    # grow the movable set: anything consuming a per-iteration value moves too
    anchored_outside = {i for i, n in fn.live_nodes()
                        if n.kind in ("thread_id", "reduce", "phi")
                        and n.control not in set(controls)}
    moved = set(live_region)
    for i, n in fn.live_nodes():
        if n.kind in ("thread_id", "reduce", "phi") and n.control in set(controls):
            moved.add(i)
    changed = True
    while changed:
        changed = False
        for i, n in fn.live_nodes():
            if i in moved or n.is_control or i in anchored_outside:
                continue
            if any(x in moved for x in n.all_inputs()):
                moved.add(i)
                changed = True
    for i in sorted(moved):
        n = fn.node(i)
        if n.is_control and i not in set(controls):
            raise PassError("region's data flows into control outside the region")
        if n.kind in ("thread_id", "reduce", "phi") and n.control not in set(controls):
            raise PassError("a per-iteration value escapes the region boundary")

    # boundary edges
    inbound: list[NodeId] = []
    for i in sorted(moved):
        for x in fn.node(i).all_inputs():
            if x not in moved and not fn.node(x).is_control and x not in inbound:
                inbound.append(x)
    outbound: list[NodeId] = []
    for i in sorted(moved):
        if fn.node(i).is_control:
            continue
        if any(u not in moved for u in fn.users(i)):
            outbound.append(i)
    if not outbound:
        raise PassError("region produces no value; outlining it would drop code")

    k = sum(1 for other in module.functions if other.startswith(fn.name + "_out")) + 1
    name = f"{fn.name}_out{k}"
    ret_ty = fn.node(outbound[0]).ty if len(outbound) == 1 else \
        ProductType(tuple(fn.node(o).ty for o in outbound))
    callee = Function(name, fn.num_dyn_consts,
                      [fn.node(x).ty for x in inbound], ret_ty,
                      entry=False, dc_names=list(fn.dc_names))
    module.add_function(callee)
    callee.constraints = list(fn.constraints)

    new_ids: dict[NodeId, NodeId] = {}
    for k, x in enumerate(inbound):
        new_ids[x] = callee.param(k)

    def idmap(old: NodeId) -> NodeId:
        return new_ids.get(old, old)

    # allocate slots first so cycles (phi/reduce) can refer forward
    order = sorted(moved)
    base = len(callee.nodes)
    for pos, i in enumerate(order):
        new_ids[i] = base + pos
    for i in order:
        callee.nodes.append(_clone_node(fn, i, idmap))
    if entry is not None:
        callee.node(new_ids[entry]).control = callee.start
        if fn.node(entry).preds:
            callee.node(new_ids[entry]).preds = [callee.start]
    if len(outbound) == 1:
        out_val = new_ids[outbound[0]]
    else:
        # bundle multiple results into a product
        from ..ir import ConstValue
        prod = callee.constant(ConstValue(ret_ty, None))
        for k, o in enumerate(outbound):
            prod = callee.write(prod, [Field(k)], new_ids[o], ty=ret_ty)
        out_val = prod
    callee.return_(callee.start if exit_ is None else new_ids[exit_], out_val)

    # caller side: a single call stands in for the region
    dc_args = [DcParam(i) for i in range(fn.num_dyn_consts)]
    call = fn.call(name, dc_args, list(inbound), ty=ret_ty)
    fn.node(call).labels.update(
        set().union(*(fn.node(i).labels for i in moved)) if moved else set())
    results: dict[NodeId, NodeId] = {}
    if len(outbound) == 1:
        results[outbound[0]] = call
    else:
        for k, o in enumerate(outbound):
            results[o] = fn.read(call, [Field(k)], ty=fn.node(o).ty)
    for o in outbound:
        for u in fn.users(o):
            if u not in moved and u != results[o]:
                fn.node(u).replace_input(o, results[o])

    # control around the region collapses to a straight edge
    if entry is not None:
        before = fn.node(entry).control or fn.node(entry).preds[0]
        for u in fn.users(exit_):
            if u not in moved:
                fn.node(u).replace_input(exit_, before)

    remap: dict[NodeId, tuple[NodeId, ...]] = {}
    for i in sorted(moved):
        remap[i] = (call,)
        fn.delete(i)
    return PassResult(remapping={fn.name: remap},
                      results=[FunctionHandle(name)])


@register("inline", region_arity=1)
def inline(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    calls = [i for i in sorted(region.nodes)
             if fn.nodes[i] is not None and fn.node(i).kind == "call"]
    if not calls:
        raise PassError("region selects no call")
    combined = PassResult()
    for c in calls:
        if fn.nodes[c] is None:
            continue
        combined.merge(_inline_one(module, fn, c))
    return combined


def _inline_one(module: Module, fn: Function, call_id: NodeId) -> PassResult:
    call = fn.node(call_id)
    callee = module.functions.get(call.callee)
    if callee is None:
        raise PassError(f"unknown callee {call.callee}")
    if callee.entry:
        raise PassError("refusing to inline an entry function")

    from ..verify import _subst_call_type
    from ..dynconst import DcLiteral, DcParam as P, normalize

    def subst_dc(e):
        from ..dynconst import DcParam, DcLiteral as L
        if isinstance(e, DcParam):
            return call.dc_args[e.index]
        if isinstance(e, L):
            return e
        cls = type(e)
        return cls(subst_dc(e.left), subst_dc(e.right))

    callee_ids = sorted(i for i, _ in callee.live_nodes())
    ret_id = callee.return_node()
    new_ids: dict[NodeId, NodeId] = {}
    base = len(fn.nodes)
    pos = 0
    for i in callee_ids:
        n = callee.node(i)
        if n.kind in ("start", "return"):
            continue
        if n.kind == "param":
            new_ids[i] = call.inputs[n.index]
            continue
        new_ids[i] = base + pos
        pos += 1

    # where does the callee's control go? the call's latest legal block
    from ..gcm import schedule_blocks
    has_control = any(callee.node(i).is_control and callee.node(i).kind
                      not in ("start", "return") for i in callee_ids)
    insert_at = None
    if has_control:
        blocks = schedule_blocks(module, fn)
        insert_at = blocks.data_block[call_id]

    def idmap(old: NodeId) -> NodeId:
        if old in new_ids:
            return new_ids[old]
        if old == callee.start:
            return insert_at if insert_at is not None else fn.start
        return old

    for i in callee_ids:
        n = callee.node(i)
        if n.kind in ("start", "return", "param"):
            continue
        clone = _clone_node(callee, i, idmap)
        clone.dc = None if clone.dc is None else normalize(subst_dc(clone.dc))
        clone.factors = [normalize(subst_dc(x)) for x in clone.factors]
        clone.dc_args = [normalize(subst_dc(x)) for x in clone.dc_args]
        if clone.ty is not None:
            clone.ty = _subst_call_type(clone.ty, call.dc_args)
        if clone.const is not None and clone.const.ty is not None:
            from ..ir import ConstValue
            clone.const = ConstValue(_subst_call_type(clone.const.ty, call.dc_args),
                                     clone.const.value)
        clone.labels.update(call.labels)
        got = fn.add(clone)
        assert got == new_ids[i]

    # stitch control: callee chain replaces the straight edge at insert_at
    if has_control:
        last_control = callee.node(ret_id).control
        if last_control != callee.start:
            for u in list(fn.users(insert_at)):
                un = fn.node(u)
                if un.is_control and u not in new_ids.values():
                    un.replace_input(insert_at, new_ids[last_control])

    ret_val = callee.node(ret_id).inputs[0]
    result = idmap(ret_val)
    fn.replace_uses(call_id, result)
    fn.delete(call_id)
    remap = {call_id: (result,)}
    fn.constraints.extend(
        type(c)(c.divisor, normalize(subst_dc(c.dividend)), c.origin)
        for c in callee.constraints)
    return PassResult(remapping={fn.name: remap},
                      results=[RegionValue(fn.name, set(new_ids.values()))])
