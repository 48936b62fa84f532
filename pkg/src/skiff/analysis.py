"""Structural analyses over a function's node graph.

Everything here is recomputed on demand; the graphs are small enough that
caching across mutations is not worth the invalidation bugs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import Function, NodeId, CONTROL_KINDS
from .dynconst import DcLiteral


class AnalysisError(Exception):
    pass


def def_use(fn: Function) -> dict[NodeId, list[NodeId]]:
    """Map each node to the ordered list of nodes that consume it."""
    users: dict[NodeId, list[NodeId]] = {i: [] for i in fn.ids()}
    for i, n in fn.live_nodes():
        seen = set()
        for inp in n.all_inputs():
            if (inp, i) not in seen:
                seen.add((inp, i))
                if inp in users:
                    users[inp].append(i)
    return users


def control_nodes(fn: Function) -> list[NodeId]:
    return [i for i, n in fn.live_nodes() if n.is_control]


def control_successors(fn: Function) -> dict[NodeId, list[NodeId]]:
    """Forward control-flow edges (derived from stored predecessor edges)."""
    succ: dict[NodeId, list[NodeId]] = {i: [] for i in fn.ids() if fn.node(i).is_control}
    for i, n in fn.live_nodes():
        if not n.is_control:
            continue
        preds = []
        if n.control is not None:
            preds.append(n.control)
        preds.extend(n.preds)
        for p in preds:
            if p in succ:
                succ[p].append(i)
    for lst in succ.values():
        lst.sort()
    return succ


def reachable_control(fn: Function) -> set[NodeId]:
    succ = control_successors(fn)
    seen = {fn.start}
    stack = [fn.start]
    while stack:
        c = stack.pop()
        for s in succ.get(c, ()):
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return seen


def dominators(fn: Function) -> dict[NodeId, NodeId]:
    """Immediate dominators over the control subgraph (start maps to itself)."""
    succ = control_successors(fn)
    order: list[NodeId] = []
    seen = set()

    def dfs(c: NodeId):
        stack = [(c, iter(succ.get(c, ())))]
        seen.add(c)
        while stack:
            node, it = stack[-1]
            advanced = False
            for s in it:
                if s not in seen:
                    seen.add(s)
                    stack.append((s, iter(succ.get(s, ()))))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()

    dfs(fn.start)
    rpo = list(reversed(order))
    index = {c: i for i, c in enumerate(rpo)}
    preds: dict[NodeId, list[NodeId]] = {c: [] for c in rpo}
    for c in rpo:
        for s in succ.get(c, ()):
            if s in preds:
                preds[s].append(c)

    idom: dict[NodeId, NodeId] = {fn.start: fn.start}

    def intersect(a: NodeId, b: NodeId) -> NodeId:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for c in rpo:
            if c == fn.start:
                continue
            avail = [p for p in preds[c] if p in idom]
            if not avail:
                continue
            new = avail[0]
            for p in avail[1:]:
                new = intersect(new, p)
            if idom.get(c) != new:
                idom[c] = new
                changed = True
    return idom


def dominates(idom: dict[NodeId, NodeId], a: NodeId, b: NodeId) -> bool:
    """True if a dominates b."""
    while True:
        if a == b:
            return True
        nxt = idom.get(b)
        if nxt is None or nxt == b:
            return a == b
        b = nxt


def dom_depth(idom: dict[NodeId, NodeId], c: NodeId) -> int:
    d = 0
    while idom.get(c, c) != c:
        c = idom[c]
        d += 1
    return d


@dataclass
class Loop:
    header: NodeId
    back_edges: list[NodeId]        # tail control nodes of the latch edges
    body: set[NodeId] = field(default_factory=set)  # control nodes incl. header


def natural_loops(fn: Function) -> list[Loop]:
    """Natural loops of the control subgraph, innermost-last by body size."""
    idom = dominators(fn)
    succ = control_successors(fn)
    loops: dict[NodeId, Loop] = {}
    for tail in sorted(succ):
        for head in succ[tail]:
            if dominates(idom, head, tail):
                loop = loops.setdefault(head, Loop(head, []))
                loop.back_edges.append(tail)
                # body: reverse reachability from tail to head
                body = {head, tail}
                stack = [tail]
                preds_of: dict[NodeId, list[NodeId]] = {}
                for c in succ:
                    for s in succ[c]:
                        preds_of.setdefault(s, []).append(c)
                while stack:
                    c = stack.pop()
                    for p in preds_of.get(c, ()):
                        if p not in body:
                            body.add(p)
                            stack.append(p)
                loop.body |= body
    out = sorted(loops.values(), key=lambda l: (len(l.body), l.header))
    return out


def loop_depths(fn: Function) -> dict[NodeId, int]:
    """Loop-nesting depth per control node; fork-join bodies count as loops."""
    depth = {c: 0 for c in control_nodes(fn)}
    for loop in natural_loops(fn):
        for c in loop.body:
            depth[c] = depth.get(c, 0) + 1
    for f, info in fork_joins(fn).items():
        for c in info.body_controls | {info.join}:
            depth[c] = depth.get(c, 0) + 1
    return depth


@dataclass
class ForkJoinInfo:
    fork: NodeId
    join: NodeId
    body_controls: set[NodeId]  # strictly between fork and join (may be empty)


def fork_joins(fn: Function) -> dict[NodeId, ForkJoinInfo]:
    """Match each fork with its join.

    The matching join is the unique join reached by every spawned token path
    at the fork's own nesting depth; a fork whose paths reach different joins
    is malformed.
    """
    succ = control_successors(fn)
    out: dict[NodeId, ForkJoinInfo] = {}
    for f in sorted(succ):
        if fn.node(f).kind != "fork":
            continue
        joins: set[NodeId] = set()
        body: set[NodeId] = set()
        seen: set[tuple[NodeId, int]] = set()
        stack: list[tuple[NodeId, int]] = [(f, 0)]
        while stack:
            c, depth = stack.pop()
            for s in succ.get(c, ()):
                kind = fn.node(s).kind
                d = depth
                if kind == "join":
                    if d == 0:
                        joins.add(s)
                        continue
                    d -= 1
                elif kind == "fork":
                    d += 1
                if (s, d) not in seen:
                    seen.add((s, d))
                    body.add(s)
                    stack.append((s, d))
        if len(joins) != 1:
            raise AnalysisError(
                f"{fn.name}: fork %{f} matches {sorted(joins)} joins; fork-joins must nest properly")
        join = joins.pop()
        body.discard(join)
        out[f] = ForkJoinInfo(f, join, body)
    return out


@dataclass
class ForkTree:
    """Fork-join nesting tree. ``fork`` is None for the synthetic root."""

    fork: NodeId | None
    children: list["ForkTree"] = field(default_factory=list)

    @property
    def synthetic(self) -> bool:
        return self.fork is None

    def factors(self, fn: Function):
        if self.fork is None:
            return [DcLiteral(1)]
        return fn.node(self.fork).factors

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


def fork_join_nest(fn: Function) -> ForkTree | None:
    """Tree of forks by containment.

    A synthetic factor-1 root is added only when there are multiple top-level
    forks; a function with no forks yields None.
    """
    infos = fork_joins(fn)
    if not infos:
        return None
    parent: dict[NodeId, NodeId | None] = {}
    for f in infos:
        # innermost enclosing fork: the containing fork with the smallest body
        enclosing = [g for g, gi in infos.items() if g != f and f in gi.body_controls]
        if enclosing:
            parent[f] = min(enclosing, key=lambda g: (len(infos[g].body_controls), g))
        else:
            parent[f] = None
    trees: dict[NodeId, ForkTree] = {f: ForkTree(f) for f in infos}
    roots: list[ForkTree] = []
    for f in sorted(infos):
        p = parent[f]
        if p is None:
            roots.append(trees[f])
        else:
            trees[p].children.append(trees[f])
    for t in trees.values():
        t.children.sort(key=lambda c: c.fork)
    if len(roots) == 1:
        return roots[0]
    return ForkTree(None, roots)


def immediate_child_forks(fn: Function, fork: NodeId) -> list[NodeId]:
    infos = fork_joins(fn)
    me = infos[fork]
    out = []
    for g, gi in infos.items():
        if g == fork or g not in me.body_controls:
            continue
        if not any(h != g and h != fork and g in infos[h].body_controls
                   and h in me.body_controls for h in infos):
            out.append(g)
    return sorted(out)


def reduces_of_join(fn: Function, join: NodeId) -> list[NodeId]:
    return sorted(i for i, n in fn.live_nodes() if n.kind == "reduce" and n.control == join)


def thread_ids_of_fork(fn: Function, fork: NodeId) -> list[NodeId]:
    return sorted(i for i, n in fn.live_nodes() if n.kind == "thread_id" and n.control == fork)


def transitive_inputs(fn: Function, roots: list[NodeId]) -> set[NodeId]:
    """All nodes reachable from roots by following input edges (roots included)."""
    seen = set()
    stack = list(roots)
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        for j in fn.node(i).all_inputs():
            if j not in seen:
                stack.append(j)
    return seen
