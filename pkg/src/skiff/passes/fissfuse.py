"""Fork fission and fork fusion.

Fission splits one fork-join into a producer/consumer pair: the first fork
materializes each per-iteration scalar crossing the split into a fresh
thread-indexed array, the second reads those partials and performs the rest
of the reduction. Fusion is the inverse pattern for adjacent fork-joins with
equal factors whose communication is iteration-aligned.
"""

from __future__ import annotations

from .. import analysis
from ..ir import (ConstValue, Module, Node, NodeId, Position,
                  MONOID_REDUCE, NO_RESET_CONSTANT, PARALLEL_REDUCE)
from ..types import ArrayType, is_scalar
from .common import (PassError, PassResult, RegionValue, forks_in_region,
                     inherit_labels, register)


def _outermost_fork(fn, region_nodes):
    forks = forks_in_region(fn, region_nodes)
    if not forks:
        raise PassError("region selects no fork")
    infos = analysis.fork_joins(fn)
    return max(forks, key=lambda f: (len(infos[f].body_controls), -f)), infos


@register("fork-fission", region_arity=1)
def fork_fission(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    f, infos = _outermost_fork(fn, region.nodes)
    info = infos[f]
    join = info.join
    factors = list(fn.node(f).factors)
    ndim = len(factors)

    inner_tids: set[NodeId] = set()
    inner_reduces: set[NodeId] = set()
    for g in info.body_controls:
        gn = fn.node(g)
        if gn.kind == "fork":
            inner_tids.update(analysis.thread_ids_of_fork(fn, g))
        if gn.kind == "join":
            inner_reduces.update(analysis.reduces_of_join(fn, g))

    reach_cache: dict[NodeId, bool] = {}

    def reaches_inner_tid(nid: NodeId) -> bool:
        """Per-inner-iteration dependence, not smuggled through a reduce."""
        if nid in reach_cache:
            return reach_cache[nid]
        reach_cache[nid] = False  # break cycles
        if nid in inner_tids:
            reach_cache[nid] = True
            return True
        if nid in inner_reduces:
            return False
        n = fn.node(nid)
        if n.is_control:
            return False
        got = any(reaches_inner_tid(i) for i in n.all_inputs()
                  if not fn.node(i).is_control)
        reach_cache[nid] = got
        return got

    j_reduces = analysis.reduces_of_join(fn, join)
    if not j_reduces:
        raise PassError("fork has no reduction to fission around")
    old_tids = analysis.thread_ids_of_fork(fn, f)

    # walk each reduct to find the bottom computation and its crossing values
    crossings: list[NodeId] = []
    bottom_nodes: set[NodeId] = set()
    for r in j_reduces:
        u = fn.node(r).inputs[1]
        stack = [u]
        seen = set()
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            node = fn.node(nid)
            if nid in j_reduces:
                continue
            if nid in old_tids:
                continue
            if nid in inner_reduces:
                if nid not in crossings:
                    crossings.append(nid)
                continue
            if reaches_inner_tid(nid):
                raise PassError(
                    f"%{nid}: update consumes a per-iteration value of an "
                    "inner fork outside any reduction (unsupported frontier)")
            if node.is_control:
                continue
            bottom_nodes.add(nid)
            stack.extend(i for i in node.all_inputs())

    for x in crossings:
        xt = fn.node(x).ty
        if not is_scalar(xt):
            raise PassError(
                "crossing values must be per-iteration scalars; "
                f"%{x} has a collection type")
        deps = analysis.transitive_inputs(fn, [x])
        if deps & set(j_reduces):
            raise PassError(
                "crossing value depends on the outer reduction; "
                "re-associate it first (monoid-reassociate)")
    crossings.sort()

    # -- producer fork -------------------------------------------------------
    f_top = fn.fork(fn.node(f).control, factors)
    inherit_labels(fn, f, [f_top])
    for i, nd in fn.live_nodes():
        if nd.is_control and i != join and f in nd.all_inputs():
            nd.replace_input(f, f_top)
    last_body = fn.node(join).control
    j_top = fn.join(f_top if last_body == f else last_body)
    inherit_labels(fn, join, [j_top])

    # reuse the old thread ids on the producer side
    top_tids: dict[int, NodeId] = {}
    for t in old_tids:
        fn.node(t).control = f_top
        top_tids.setdefault(fn.node(t).dim, t)
    for d in range(ndim):
        if d not in top_tids:
            top_tids[d] = fn.thread_id(f_top, d)

    partial_arrays: dict[NodeId, NodeId] = {}
    for x in crossings:
        arr_ty = ArrayType(fn.node(x).ty, tuple(factors))
        zero = fn.constant(ConstValue(arr_ty, None))
        fn.node(zero).attributes.add(NO_RESET_CONSTANT)
        red = fn.add(Node("reduce", control=j_top, inputs=[zero, 0], ty=arr_ty))
        w = fn.write(red, [Position(tuple(top_tids[d] for d in range(ndim)))], x,
                     ty=arr_ty)
        fn.node(red).inputs[1] = w
        fn.node(red).attributes.add(PARALLEL_REDUCE)
        inherit_labels(fn, x, [zero, red, w])
        partial_arrays[x] = red

    # -- consumer fork -------------------------------------------------------
    f_bot = fn.fork(j_top, factors)
    j_bot = fn.join(f_bot)
    inherit_labels(fn, f, [f_bot])
    inherit_labels(fn, join, [j_bot])
    bot_tids = {d: fn.thread_id(f_bot, d) for d in range(ndim)}

    subst: dict[NodeId, NodeId] = {}
    for x in crossings:
        subst[x] = fn.read(partial_arrays[x],
                           [Position(tuple(bot_tids[d] for d in range(ndim)))],
                           ty=fn.node(x).ty)
        inherit_labels(fn, x, [subst[x]])
    for d, t in top_tids.items():
        subst[t] = bot_tids[d]
    new_reduces: dict[NodeId, NodeId] = {}
    for r in j_reduces:
        rn = fn.node(r)
        nr = fn.add(Node("reduce", control=j_bot, inputs=[rn.inputs[0], 0],
                         ty=rn.ty, attributes=set(rn.attributes)))
        inherit_labels(fn, r, [nr])
        new_reduces[r] = nr
        subst[r] = nr

    def clone(nid: NodeId) -> NodeId:
        if nid in subst:
            return subst[nid]
        if nid not in bottom_nodes:
            return nid
        n = fn.node(nid)
        copy = Node(n.kind, control=n.control, inputs=[clone(i) for i in n.inputs],
                    preds=list(n.preds), selection=n.selection,
                    factors=list(n.factors), dim=n.dim, index=n.index,
                    const=n.const, dc=n.dc, op=n.op,
                    indices=[Position(tuple(clone(i) for i in ix.ids))
                             if isinstance(ix, Position) else ix
                             for ix in n.indices],
                    callee=n.callee, dc_args=list(n.dc_args), ty=n.ty,
                    attributes=set(n.attributes), labels=set(n.labels))
        new = fn.add(copy)
        subst[nid] = new
        return new

    remap: dict[NodeId, tuple[NodeId, ...]] = {f: (f_top, f_bot),
                                               join: (j_top, j_bot)}
    for r in j_reduces:
        fn.node(new_reduces[r]).inputs[1] = clone(fn.node(r).inputs[1])
    for r in j_reduces:
        fn.replace_uses(r, new_reduces[r])
        fn.delete(r)
        remap[r] = (new_reduces[r],)
    # control flow after the old join continues after the consumer join
    for u in fn.users(join):
        un = fn.node(u)
        if un.is_control:
            un.replace_input(join, j_bot)
    fn.delete(f)
    fn.delete(join)

    # bottom computations that moved wholesale leave dead originals behind
    changed = True
    while changed:
        changed = False
        for nid in sorted(bottom_nodes, reverse=True):
            if fn.nodes[nid] is not None and not fn.users(nid):
                remap[nid] = (subst[nid],) if nid in subst else ()
                fn.delete(nid)
                changed = True

    infos2 = analysis.fork_joins(fn)
    def subtree(fk):
        nodes = {fk, infos2[fk].join} | infos2[fk].body_controls
        for c in sorted(set(nodes)):
            cn = fn.node(c)
            if cn.kind == "fork":
                nodes.update(analysis.thread_ids_of_fork(fn, c))
            if cn.kind == "join":
                nodes.update(analysis.reduces_of_join(fn, c))
        return nodes

    return PassResult(remapping={fn.name: remap},
                      results=[RegionValue(fn.name, subtree(f_top)),
                               RegionValue(fn.name, subtree(f_bot))])


@register("fork-fuse", region_arity=2)
def fork_fuse(module: Module, static_args, regions) -> PassResult:
    first, second = regions
    if first.function != second.function:
        raise PassError("fork-fuse operands must be in one function")
    fn = module.functions[first.function]
    f1, infos = _outermost_fork(fn, first.nodes)
    f2, _ = _outermost_fork(fn, second.nodes)
    if f1 == f2:
        raise PassError("fork-fuse needs two distinct forks")
    j1, j2 = infos[f1].join, infos[f2].join
    if fn.node(f2).control != j1:
        raise PassError("forks are not adjacent")
    if [str(x) for x in fn.node(f1).factors] != [str(x) for x in fn.node(f2).factors]:
        raise PassError("fork factors differ")
    ndim = len(fn.node(f1).factors)

    r1s = analysis.reduces_of_join(fn, j1)
    tids1 = {fn.node(t).dim: t for t in analysis.thread_ids_of_fork(fn, f1)}
    tids2 = {fn.node(t).dim: t for t in analysis.thread_ids_of_fork(fn, f2)}

    # communication legality: consumers read producer collections only at the
    # producer's own iteration (identical thread-id positions, dimension-wise)
    writes_of: dict[NodeId, list[NodeId]] = {}
    for r in r1s:
        chainset = {r}
        w = fn.node(r).inputs[1]
        ws = []
        while fn.node(w).kind == "write":
            ws.append(w)
            w = fn.node(w).inputs[0]
            if w in chainset:
                break
        writes_of[r] = ws
    produced = set(r1s)

    tidset2 = set(tids2.values())
    second_inside = {i for i, nd in fn.live_nodes()
                     if not nd.is_control
                     and analysis.transitive_inputs(fn, [i]) & tidset2}
    forwards: dict[NodeId, NodeId] = {}
    for i, nd in list(fn.live_nodes()):
        if nd.kind != "read" or nd.inputs[0] not in produced:
            continue
        if i not in second_inside:
            continue  # reads after both joins see the final value; always legal
        r = nd.inputs[0]
        pos = [ix for ix in nd.indices if isinstance(ix, Position)]
        if len(pos) != 1:
            raise PassError("cannot fuse: consumer indexing is not elementwise")
        read_ids = pos[0].ids
        ok = len(read_ids) == ndim and all(
            tids2.get(d) == read_ids[d] for d in range(ndim))
        if not ok:
            raise PassError("cannot fuse: consumer reads a different iteration "
                            "than the producer wrote")
        ws = writes_of[r]
        match = None
        for w in ws:
            wpos = [ix for ix in fn.node(w).indices if isinstance(ix, Position)]
            if len(wpos) == 1 and len(wpos[0].ids) == ndim and all(
                    tids1.get(d) == wpos[0].ids[d] for d in range(ndim)):
                match = w
                break
        if match is None:
            raise PassError("cannot fuse: producer write is not iteration-aligned")
        forwards[i] = fn.node(match).inputs[1]

    for r2 in analysis.reduces_of_join(fn, j2):
        if set(r1s) & analysis.transitive_inputs(fn, [fn.node(r2).inputs[0]]):
            raise PassError("cannot fuse: second fork is initialized from the "
                            "first fork's result")

    # splice: first body ++ second body under f1, join at j2
    last1 = fn.node(j1).control
    for i, nd in fn.live_nodes():
        if nd.is_control and i != j2 and f2 in nd.all_inputs():
            nd.replace_input(f2, last1 if last1 != f1 else f1)
    if fn.node(j2).control == f2:
        fn.node(j2).control = last1 if last1 != f1 else f1
    for d, t in tids2.items():
        if d in tids1:
            fn.replace_uses(t, tids1[d])
            fn.delete(t)
        else:
            fn.node(t).control = f1
    for r in r1s:
        fn.node(r).control = j2
    remap: dict[NodeId, tuple[NodeId, ...]] = {f2: (f1,), j1: (j2,)}
    for t, keep in ((t, tids1[d]) for d, t in tids2.items() if d in tids1):
        remap[t] = (keep,)
    fn.delete(f2)
    fn.delete(j1)

    # forward iteration-aligned element reads to the produced value
    for read, value in forwards.items():
        fn.replace_uses(read, value)
        remap[read] = (value,)
        fn.delete(read)
    # drop producer chains that no longer have consumers
    changed = True
    while changed:
        changed = False
        for i, nd in list(fn.live_nodes()):
            if nd.is_control or nd.kind in ("param",):
                continue
            if nd.kind in ("reduce", "write", "constant", "read") and not fn.users(i):
                remap.setdefault(i, ())
                fn.delete(i)
                changed = True

    infos2 = analysis.fork_joins(fn)
    merged = {f1, j2} | infos2[f1].body_controls
    merged.update(analysis.thread_ids_of_fork(fn, f1))
    merged.update(analysis.reduces_of_join(fn, j2))
    return PassResult(remapping={fn.name: remap},
                      results=[RegionValue(fn.name, merged)])
