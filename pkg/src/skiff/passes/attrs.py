"""Attribute inference and application.

Inference is conservative: an attribute is added only when the structural
pattern guarantees it is sound, and never removed. Manual application passes
exist for schedules but are logged as unsafe since the compiler cannot check
them.
"""

from __future__ import annotations

from .. import analysis
from ..ir import (Module, NodeId, Position, ASYNC_CALL, MONOID_REDUCE,
                  NO_RESET_CONSTANT, PARALLEL_REDUCE)
from ..types import is_collection, is_scalar
from .common import PassError, PassResult, RegionValue, forks_in_region, register
from .monoid import MONOID_OPS

# Internal marker on fork nodes chosen for parallel host execution.
PARALLEL_FORK = "parallel"


def _scc_of_reduce(fn, rid: NodeId) -> set[NodeId]:
    """Data-edge strongly connected component containing the reduce."""
    fwd: dict[NodeId, set[NodeId]] = {}
    for i, n in fn.live_nodes():
        if n.is_control:
            continue
        for j in n.all_inputs():
            jn = fn.node(j)
            if not jn.is_control:
                fwd.setdefault(j, set()).add(i)

    reach_from: set[NodeId] = set()
    stack = [rid]
    while stack:
        x = stack.pop()
        if x in reach_from:
            continue
        reach_from.add(x)
        stack.extend(fwd.get(x, ()))
    reach_to: set[NodeId] = set()
    stack = [rid]
    while stack:
        x = stack.pop()
        if x in reach_to:
            continue
        reach_to.add(x)
        stack.extend(i for i in fn.node(x).all_inputs()
                     if not fn.node(i).is_control)
    return reach_from & reach_to


def _flat_position_ids(indices) -> tuple[NodeId, ...] | None:
    ids: list[NodeId] = []
    for ix in indices:
        if isinstance(ix, Position):
            ids.extend(ix.ids)
        else:
            return None
    return tuple(ids)


def infer_monoid(fn, rid: NodeId) -> bool:
    from .monoid import recognized_op
    r = fn.node(rid)
    if is_scalar(r.ty):
        return recognized_op(fn, rid) is not None
    # collection element accumulation: w = write(r, idx, op(read(r, idx), x))
    w = fn.node(r.inputs[1])
    if w.kind != "write" or w.inputs[0] != rid:
        return False
    widx = _flat_position_ids(w.indices)
    b = fn.node(w.inputs[1])
    if b.kind != "binary" or b.op not in MONOID_OPS or widx is None:
        return False
    reads = [i for i in b.inputs
             if fn.node(i).kind == "read" and fn.node(i).inputs[0] == rid]
    if len(reads) != 1:
        return False
    ridx = _flat_position_ids(fn.node(reads[0]).indices)
    other = [i for i in b.inputs if i != reads[0]]
    if ridx != widx or len(other) != 1:
        return False
    return rid not in analysis.transitive_inputs(fn, other)


def infer_parallel(fn, rid: NodeId) -> bool:
    r = fn.node(rid)
    if not is_collection(r.ty):
        return False
    infos = analysis.fork_joins(fn)
    fork = next((f for f, fi in infos.items() if fi.join == r.control), None)
    if fork is None:
        return False
    dims = len(fn.node(fork).factors)
    tids = analysis.thread_ids_of_fork(fn, fork)
    scc = _scc_of_reduce(fn, rid)
    sig = None
    for i in sorted(scc):
        n = fn.node(i)
        if n.kind not in ("read", "write"):
            continue
        ids = _flat_position_ids(n.indices)
        if ids is None:
            return False
        if sig is None:
            sig = ids
        elif ids != sig:
            return False
    if sig is None:
        return False
    # every dimension's thread id must appear directly among the indices
    sig_set = set(sig)
    covered_dims = {fn.node(t).dim for t in tids if t in sig_set}
    return covered_dims == set(range(dims))


def _chain_values(fn, const_id: NodeId) -> set[NodeId]:
    out = {const_id}
    changed = True
    while changed:
        changed = False
        for i, n in fn.live_nodes():
            if i in out or n.is_control:
                continue
            if n.kind == "write" and n.inputs[0] in out:
                out.add(i)
                changed = True
            elif n.kind in ("reduce", "phi") and any(x in out for x in n.inputs):
                out.add(i)
                changed = True
    return out


def infer_no_reset(fn, const_id: NodeId) -> bool:
    """True when every read of the constant's value chain is covered by a
    same-indices write earlier on its own chain path."""
    covered: dict[NodeId, set] = {const_id: set()}

    def cov(v: NodeId, seen: set[NodeId]) -> set:
        if v in covered:
            return covered[v]
        if v in seen:
            return set()
        seen = seen | {v}
        n = fn.node(v)
        if n.kind == "write":
            base = cov(n.inputs[0], seen)
            sig = _flat_position_ids(n.indices)
            got = set(base)
            if sig is not None:
                got.add(sig)
            covered[v] = got
            return got
        if n.kind in ("phi", "reduce"):
            parts = [cov(x, seen) for x in n.inputs]
            got = set.intersection(*parts) if parts else set()
            covered[v] = got
            return got
        covered[v] = set()
        return covered[v]

    chain = _chain_values(fn, const_id)
    saw_read = False
    for i, n in fn.live_nodes():
        if n.kind == "read" and n.inputs[0] in chain:
            saw_read = True
            sig = _flat_position_ids(n.indices)
            if sig is None or sig not in cov(n.inputs[0], set()):
                return False
    return saw_read


@register("infer-attributes", region_arity=1)
def infer_attributes(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    added = []
    for i in sorted(region.nodes):
        if fn.nodes[i] is None:
            continue
        n = fn.node(i)
        if n.kind == "reduce":
            if MONOID_REDUCE not in n.attributes and infer_monoid(fn, i):
                n.attributes.add(MONOID_REDUCE)
                added.append(f"%{i}: {MONOID_REDUCE}")
            if PARALLEL_REDUCE not in n.attributes and infer_parallel(fn, i):
                n.attributes.add(PARALLEL_REDUCE)
                added.append(f"%{i}: {PARALLEL_REDUCE}")
        elif n.kind == "constant" and n.const.is_zero_collection:
            if NO_RESET_CONSTANT not in n.attributes and infer_no_reset(fn, i):
                n.attributes.add(NO_RESET_CONSTANT)
                added.append(f"%{i}: {NO_RESET_CONSTANT}")
    return PassResult(diagnostics=added)


@register("parallelize", region_arity=1)
def parallelize(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    forks = forks_in_region(fn, region.nodes)
    if not forks:
        raise PassError("region selects no fork")
    infos = analysis.fork_joins(fn)
    for f in forks:
        join = infos[f].join
        for r in analysis.reduces_of_join(fn, join):
            if PARALLEL_REDUCE not in fn.node(r).attributes:
                raise PassError(
                    f"fork %{f} carries a sequential reduction (%{r}); "
                    "cannot parallelize")
        fn.node(f).attributes.add(PARALLEL_FORK)
    return PassResult()


@register("async-call", region_arity=1)
def async_call(module: Module, static_args, regions) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    calls = [i for i in sorted(region.nodes)
             if fn.nodes[i] is not None and fn.node(i).kind == "call"]
    if not calls:
        raise PassError("region selects no call")
    for c in calls:
        fn.node(c).attributes.add(ASYNC_CALL)
    return PassResult()


def _apply_attr(module, regions, attr: str, kinds: tuple[str, ...]) -> PassResult:
    region = regions[0]
    fn = module.functions[region.function]
    hit = []
    for i in sorted(region.nodes):
        if fn.nodes[i] is not None and fn.node(i).kind in kinds:
            fn.node(i).attributes.add(attr)
            hit.append(i)
    if not hit:
        raise PassError(f"region has no node eligible for {attr}")
    return PassResult(diagnostics=[f"applied {attr} to %{i}" for i in hit])


@register("parallel-reduce", region_arity=1, unsafe=True)
def apply_parallel_reduce(module: Module, static_args, regions) -> PassResult:
    return _apply_attr(module, regions, PARALLEL_REDUCE, ("reduce",))


@register("monoid-reduce", region_arity=1, unsafe=True)
def apply_monoid_reduce(module: Module, static_args, regions) -> PassResult:
    return _apply_attr(module, regions, MONOID_REDUCE, ("reduce",))


@register("no-reset-constant", region_arity=1, unsafe=True)
def apply_no_reset(module: Module, static_args, regions) -> PassResult:
    return _apply_attr(module, regions, NO_RESET_CONSTANT, ("constant",))
