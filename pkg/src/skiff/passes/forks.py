"""Fork-dimension manipulation: chunking, tiling, and nest reshaping.

Chunking splits a dimension of extent D into (N, D/N) with the new dimension
first; tiling splits it into (D/N, N) with the new dimension after. Both use
contiguous index maps (chunk: b*(D/N) + i, tile: t*N + i) and record the
divisibility requirement for the runner to check. Reshaping rebuilds a chain
of directly nested forks into one fork per requested dimension group.
"""

from __future__ import annotations

from .. import analysis
from ..dynconst import (DcLiteral, DynConst, DivisibilityConstraint, DynConstError,
                        dc_div)
from ..ir import (Function, Module, Node, NodeId, MONOID_REDUCE, PARALLEL_REDUCE)
from .common import (PassError, PassResult, RegionValue, forks_in_region,
                     inherit_labels, register)


def _split_dims(module: Module, static_args, regions, new_first: bool,
                pass_name: str) -> PassResult:
    if len(static_args) != 1 or not isinstance(static_args[0], int):
        raise PassError(f"{pass_name} takes one integer argument")
    n = static_args[0]
    if n <= 0:
        raise PassError(f"{pass_name} factor must be positive, got {n}")
    region = regions[0]
    fn = module.functions[region.function]
    forks = forks_in_region(fn, region.nodes)
    if not forks:
        raise PassError("region selects no fork")

    remap: dict[NodeId, tuple[NodeId, ...]] = {}
    touched: set[NodeId] = set(forks)
    for f in forks:
        fork = fn.node(f)
        old_factors = list(fork.factors)
        new_factors: list[DynConst] = []
        for d, extent in enumerate(old_factors):
            try:
                quot = dc_div(extent, n)
            except DynConstError as e:
                raise PassError(str(e)) from e
            if not isinstance(extent, DcLiteral):
                fn.constraints.append(DivisibilityConstraint(n, extent, pass_name))
            if new_first:
                new_factors += [DcLiteral(n), quot]
            else:
                new_factors += [quot, DcLiteral(n)]
        fork.factors = new_factors

        tids = [(i, fn.node(i)) for i in analysis.thread_ids_of_fork(fn, f)]
        for tid_id, tid in tids:
            d = tid.dim
            extent = old_factors[d]
            outer = fn.thread_id(f, 2 * d)
            inner = fn.thread_id(f, 2 * d + 1)
            # chunk: original = outer*(D/N) + inner; tile: original = outer*N + inner
            stride = dc_div(extent, n) if new_first else DcLiteral(n)
            stride_node = fn.dynamic_constant(stride)
            mul = fn.binary("mul", outer, stride_node, ty=fn.node(tid_id).ty)
            add = fn.binary("add", mul, inner, ty=fn.node(tid_id).ty)
            news = (outer, inner, stride_node, mul, add)
            inherit_labels(fn, tid_id, news)
            fn.replace_uses(tid_id, add)
            fn.delete(tid_id)
            remap[tid_id] = news
            touched.update(news)

    result = RegionValue(fn.name, (region.nodes - set(remap)) | touched)
    return PassResult(remapping={fn.name: remap}, results=[result])


@register("fork-chunk", region_arity=1, takes_static=True)
def fork_chunk(module: Module, static_args, regions) -> PassResult:
    return _split_dims(module, static_args, regions, new_first=True,
                       pass_name="fork-chunk")


@register("fork-tile", region_arity=1, takes_static=True)
def fork_tile(module: Module, static_args, regions) -> PassResult:
    return _split_dims(module, static_args, regions, new_first=False,
                       pass_name="fork-tile")


# -- reshape -------------------------------------------------------------------


def fork_chain(fn: Function, forks: list[NodeId]):
    """Order region forks outermost-first and insist on direct nesting."""
    infos = analysis.fork_joins(fn)
    chain = sorted(forks, key=lambda f: -len(infos[f].body_controls))
    for a in range(len(chain) - 1):
        outer, inner = chain[a], chain[a + 1]
        if fn.node(inner).control != outer:
            raise PassError(
                f"forks %{outer} and %{inner} are not directly nested")
        if fn.node(infos[outer].join).control != infos[inner].join:
            raise PassError(
                f"joins of %{outer} and %{inner} are not directly nested")
    return chain, infos


def _fork_is_parallel(fn: Function, join: NodeId) -> bool:
    reds = analysis.reduces_of_join(fn, join)
    return all(PARALLEL_REDUCE in fn.node(r).attributes for r in reds)


def _reduce_chains(fn: Function, chain: list[NodeId], infos):
    """Discover reduce chains threading values through the fork chain.

    Returns a list of (start_level, [reduce ids from start_level..innermost]).
    """
    joins = [infos[f].join for f in chain]
    covered: set[NodeId] = set()
    out = []
    for level, j in enumerate(joins):
        for r in analysis.reduces_of_join(fn, j):
            if r in covered:
                continue
            ids = [r]
            covered.add(r)
            lvl = level
            while lvl + 1 < len(joins):
                reduct = fn.node(ids[-1]).inputs[1]
                rn = fn.nodes[reduct]
                if rn is not None and rn.kind == "reduce" \
                        and rn.control == joins[lvl + 1] and rn.inputs[0] == ids[-1]:
                    ids.append(reduct)
                    covered.add(reduct)
                    lvl += 1
                else:
                    break
            if lvl != len(joins) - 1:
                raise PassError(
                    "cannot reshape: a reduced value is not threaded through "
                    "the innermost fork")
            out.append((level, ids))
    return out


@register("fork-reshape", region_arity=1, takes_static=True)
def fork_reshape(module: Module, static_args, regions) -> PassResult:
    groups = static_args
    if not groups or not all(isinstance(g, list) and g and
                             all(isinstance(x, int) for x in g) for g in groups):
        raise PassError("fork-reshape takes non-empty lists of dimension ordinals")
    region = regions[0]
    fn = module.functions[region.function]
    forks = forks_in_region(fn, region.nodes)
    if not forks:
        raise PassError("region selects no fork")
    chain, infos = fork_chain(fn, forks)
    joins = [infos[f].join for f in chain]

    flat: list[tuple[NodeId, int]] = []  # (fork, dim) per flattened ordinal
    offsets = []
    for f in chain:
        offsets.append(len(flat))
        for d in range(len(fn.node(f).factors)):
            flat.append((f, d))
    perm = [o for g in groups for o in g]
    if sorted(perm) != list(range(len(flat))):
        raise PassError(
            f"groups must partition dimensions 0..{len(flat) - 1}")

    # Reordering across a sequential reduction is illegal: the combined
    # subsequence of sequential-fork dimensions must be order-invariant.
    seq_forks = {f for f, j in zip(chain, joins)
                 if analysis.reduces_of_join(fn, j) and not _fork_is_parallel(fn, j)}
    seq_old = [o for o in range(len(flat)) if flat[o][0] in seq_forks]
    seq_new = [o for o in perm if flat[o][0] in seq_forks]
    if seq_old != seq_new:
        raise PassError("cannot reshape across a sequential reduction")

    chains = _reduce_chains(fn, chain, infos)
    # each chain's dimension span must land on a suffix of the new groups
    suffix_sets = []
    acc: set[int] = set()
    for g in reversed(range(len(groups))):
        acc |= set(groups[g])
        suffix_sets.insert(0, set(acc))
    chain_levels = []
    for start_level, ids in chains:
        span = {o for o in range(offsets[start_level], len(flat))}
        g0 = next((g for g in range(len(groups)) if suffix_sets[g] == span), None)
        if g0 is None:
            raise PassError(
                "cannot reshape: grouping would move a reduction across its "
                "initialization boundary")
        chain_levels.append(g0)

    # -- rebuild ---------------------------------------------------------
    outer_pred = fn.node(chain[0]).control
    f_inner, j_inner = chain[-1], joins[-1]
    old_factors = {(f, d): fn.node(f).factors[d] for f, d in flat}

    new_forks: list[NodeId] = []
    prev = outer_pred
    for g, members in enumerate(groups):
        nf = fn.fork(prev, [old_factors[flat[o]] for o in members])
        contributing = {flat[o][0] for o in members}
        for f in sorted(contributing):
            inherit_labels(fn, f, [nf])
        new_forks.append(nf)
        prev = nf

    # re-parent the innermost body (control users of the old innermost fork)
    for i, nd in fn.live_nodes():
        if nd.is_control and i not in (j_inner,) and f_inner in nd.all_inputs():
            nd.replace_input(f_inner, new_forks[-1])

    last_body = fn.node(j_inner).control
    new_joins: list[NodeId] = [0] * len(groups)
    prev = new_forks[-1] if last_body == f_inner else last_body
    for g in reversed(range(len(groups))):
        nj = fn.join(prev)
        contributing = {flat[o][0] for o in groups[g]}
        for f in sorted(contributing):
            inherit_labels(fn, infos[f].join, [nj])
        new_joins[g] = nj
        prev = nj

    # control users of the old outermost join move to the new one
    for u in fn.users(joins[0]):
        un = fn.node(u)
        if un.is_control:
            un.replace_input(joins[0], new_joins[0])

    # thread ids move (ids stable)
    new_pos = {}
    for g, members in enumerate(groups):
        for y, o in enumerate(members):
            new_pos[o] = (g, y)
    for o, (f, d) in enumerate(flat):
        for tid in [i for i, nd in fn.live_nodes()
                    if nd.kind == "thread_id" and nd.control == f and nd.dim == d]:
            g, y = new_pos[o]
            tn = fn.node(tid)
            tn.control = new_forks[g]
            tn.dim = y

    remap: dict[NodeId, tuple[NodeId, ...]] = {}
    for f in chain:
        gs = sorted({new_pos[o][0] for o, (ff, _) in enumerate(flat) if ff == f})
        remap[f] = tuple(new_forks[g] for g in gs)
        remap[infos[f].join] = tuple(new_joins[g] for g in gs)

    # rebuild reduce chains
    for (start_level, ids), g0 in zip(chains, chain_levels):
        innermost = fn.node(ids[-1])
        inner_reduct = innermost.inputs[1]
        outer_init = fn.node(ids[0]).inputs[0]
        inside = analysis.transitive_inputs(fn, [inner_reduct])
        news: list[NodeId] = []
        for g in range(g0, len(groups)):
            init = news[-1] if news else outer_init
            nr = fn.reduce(new_joins[g], init, inner_reduct, ty=innermost.ty)
            news.append(nr)
        for a, nr in enumerate(news[:-1]):
            fn.node(nr).inputs[1] = news[a + 1]
        # attributes
        level_of_fork = {f: lv for lv, f in enumerate(chain)}
        for g, nr in zip(range(g0, len(groups)), news):
            contributing_levels = {level_of_fork[flat[o][0]] for o in groups[g]}
            olds = [ids[lv - start_level] for lv in contributing_levels
                    if lv >= start_level]
            if olds and all(PARALLEL_REDUCE in fn.node(r).attributes for r in olds):
                fn.node(nr).attributes.add(PARALLEL_REDUCE)
        if MONOID_REDUCE in innermost.attributes:
            fn.node(news[-1]).attributes.add(MONOID_REDUCE)
        for r in ids:
            inherit_labels(fn, r, news)
        # rewire uses
        idset = set(ids)
        for r in ids:
            for u in fn.users(r):
                if u in idset or u in set(news):
                    continue
                fn.node(u).replace_input(r, news[-1] if u in inside else news[0])
            remap[r] = tuple(news)
        for r in ids:
            fn.delete(r)

    for f in chain:
        fn.delete(infos[f].join)
        fn.delete(f)

    # result regions: one per group, the fork-join subtree rooted there
    new_infos = analysis.fork_joins(fn)
    results = []
    for g, nf in enumerate(new_forks):
        sub_controls = {nf, new_infos[nf].join} | new_infos[nf].body_controls
        nodes = set(sub_controls)
        for c in sorted(sub_controls):
            cn = fn.node(c)
            if cn.kind == "fork":
                nodes.update(analysis.thread_ids_of_fork(fn, c))
            if cn.kind == "join":
                nodes.update(analysis.reduces_of_join(fn, c))
        results.append(RegionValue(fn.name, nodes))
    return PassResult(remapping={fn.name: remap}, results=results)
