"""Conversion of counted natural loops into fork-joins.

A loop qualifies when its induction variable starts at zero, steps by one,
and its bound is a dynamic constant (or integer literal), with the
condition-first shape the frontend emits. The induction phi becomes a thread
id; every other loop-carried phi becomes a reduce whose sequential fold order
(increasing thread id) reproduces the loop's semantics.
"""

from __future__ import annotations

from .. import analysis
from ..dynconst import DcLiteral
from ..ir import Function, Module, NodeId
from ..types import IntType
from .common import PassError, PassResult, RegionValue, register, inherit_labels


def _qualifying_loop(fn: Function, loop: analysis.Loop, region: set[NodeId]):
    """Return (preheader, latch, phi_ind, bound_dc, if_, body_proj, exit_proj)
    or None."""
    header = loop.header
    if header not in region:
        return None
    hnode = fn.node(header)
    if hnode.kind != "region" or len(hnode.preds) != 2:
        return None
    in_loop = [p in loop.body for p in hnode.preds]
    if in_loop == [False, True]:
        pre_ix, latch_ix = 0, 1
    elif in_loop == [True, False]:
        pre_ix, latch_ix = 1, 0
    else:
        return None
    preheader, latch = hnode.preds[pre_ix], hnode.preds[latch_ix]

    users = analysis.def_use(fn)
    ifs = [u for u in users[header] if fn.node(u).kind == "if"]
    if len(ifs) != 1:
        return None
    if_ = ifs[0]
    projs = sorted(u for u in users[if_] if fn.node(u).kind == "proj")
    if len(projs) != 2:
        return None
    body_proj = next((p for p in projs if p in loop.body), None)
    exit_proj = next((p for p in projs if p not in loop.body), None)
    if body_proj is None or exit_proj is None:
        return None

    cond = fn.node(if_).inputs[0]
    cnode = fn.node(cond)
    if cnode.kind != "binary" or cnode.op != "lt":
        return None
    phi_ind, bound = cnode.inputs
    pn = fn.node(phi_ind)
    if pn.kind != "phi" or pn.control != header:
        return None
    init = pn.inputs[pre_ix]
    init_n = fn.node(init)
    if not (init_n.kind == "constant" and isinstance(init_n.const.ty, IntType)
            and (init_n.const.value in (0, None))):
        return None
    stepv = pn.inputs[latch_ix]
    sn = fn.node(stepv)
    if sn.kind != "binary" or sn.op != "add":
        return None
    one_side = [i for i in sn.inputs if i != phi_ind]
    if len(one_side) != 1:
        return None
    one_n = fn.node(one_side[0])
    if not (one_n.kind == "constant" and one_n.const.value == 1):
        return None

    bnode = fn.node(bound)
    if bnode.kind == "dynconst":
        bound_dc = bnode.dc
    elif bnode.kind == "constant" and isinstance(bnode.const.ty, IntType) \
            and isinstance(bnode.const.value, int) and bnode.const.value >= 0:
        bound_dc = DcLiteral(bnode.const.value)
    else:
        return None
    return (preheader, latch, phi_ind, bound_dc, if_, body_proj, exit_proj,
            pre_ix, latch_ix, cond, stepv)


@register("forkify", region_arity=1)
def forkify(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    loops = analysis.natural_loops(fn)
    match = None
    for loop in loops:  # innermost first (sorted by body size)
        got = _qualifying_loop(fn, loop, region.nodes)
        if got is not None:
            match = (loop, got)
            break
    if match is None:
        return PassResult(diagnostics=["no qualifying loop in region; forkify skipped"])

    loop, (preheader, latch, phi_ind, bound_dc, if_, body_proj, exit_proj,
           pre_ix, latch_ix, cond, stepv) = match
    header = loop.header

    fork = fn.fork(preheader, [bound_dc])
    inherit_labels(fn, header, [fork])
    # body controls hang off the body projection; re-parent them to the fork
    users = analysis.def_use(fn)
    for u in users[body_proj]:
        un = fn.node(u)
        if un.is_control:
            un.replace_input(body_proj, fork)
    join = fn.join(fork if latch == body_proj else latch)
    inherit_labels(fn, header, [join])

    tid = fn.thread_id(fork, 0)
    inherit_labels(fn, phi_ind, [tid])

    remap: dict[NodeId, tuple[NodeId, ...]] = {
        header: (fork, join), if_: (), body_proj: (), exit_proj: (),
        phi_ind: (tid,),
    }

    # other loop-carried phis become reduces
    reduces = []
    for i, n in list(fn.live_nodes()):
        if n.kind == "phi" and n.control == header and i != phi_ind:
            red = fn.reduce(join, n.inputs[pre_ix], n.inputs[latch_ix], ty=n.ty)
            inherit_labels(fn, i, [red])
            remap[i] = (red,)
            reduces.append(red)
            fn.replace_uses(i, red)
            fn.delete(i)

    fn.replace_uses(phi_ind, tid)
    fn.delete(phi_ind)
    # everything after the loop now hangs off the join
    for u in fn.users(exit_proj):
        fn.node(u).replace_input(exit_proj, join)
    fn.delete(if_)
    fn.delete(body_proj)
    fn.delete(exit_proj)
    fn.delete(header)
    # the condition and increment die with the loop unless shared
    for dead in (cond, stepv):
        if fn.nodes[dead] is not None and not fn.users(dead):
            remap[dead] = ()
            fn.delete(dead)

    new_region = {fork, join, tid, *reduces}
    for c in loop.body:
        if fn.nodes[c] is not None and c not in (header,):
            new_region.add(c)
    return PassResult(remapping={fn.name: remap},
                      results=[RegionValue(fn.name, new_region)])
