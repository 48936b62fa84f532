"""The sea-of-nodes program representation.

Each function owns a flat node arena; node identifiers are dense indices into
it. Deleted nodes are tombstoned (slot set to None) so identifiers stay stable
while schedules hold on to region sets. Control and data nodes share the
arena: a control token conceptually walks the control subgraph from ``start``,
while data nodes have no position until global code motion assigns them to
blocks.

Edges point from user to definition: every node lists the ids of the nodes it
consumes. ``Node.all_inputs`` flattens that list uniformly for analyses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .dynconst import DynConst, DcLiteral, render
from .types import Type, is_collection

NodeId = int

# Node attributes (inferred or applied by schedules).
PARALLEL_REDUCE = "parallel_reduce"
MONOID_REDUCE = "monoid_reduce"
NO_RESET_CONSTANT = "no_reset_constant"
ASYNC_CALL = "async_call"
ATTRIBUTES = (PARALLEL_REDUCE, MONOID_REDUCE, NO_RESET_CONSTANT, ASYNC_CALL)

CONTROL_KINDS = frozenset({"start", "region", "if", "proj", "return", "fork", "join"})

BINARY_OPS = frozenset({
    "add", "sub", "mul", "div", "rem",
    "and", "or", "xor", "shl", "shr",
    "lt", "le", "gt", "ge", "eq", "ne",
    "min", "max",
})
COMPARISON_OPS = frozenset({"lt", "le", "gt", "ge", "eq", "ne"})
UNARY_OPS = frozenset({"neg", "not", "cast"})


@dataclass(frozen=True)
class Field:
    """Static product-field index."""
    ordinal: int


@dataclass(frozen=True)
class Variant:
    """Static summation-variant index."""
    ordinal: int


@dataclass(frozen=True)
class Position:
    """Dynamic array position: one data id per array dimension."""
    ids: tuple[NodeId, ...]


Index = Union[Field, Variant, Position]


@dataclass(frozen=True)
class ConstValue:
    """Payload of a constant node: a typed scalar literal or a zero collection."""

    ty: Type
    value: object = None  # None means the zero value of ty (incl. zero collections)

    @property
    def is_zero_collection(self) -> bool:
        return is_collection(self.ty)


@dataclass
class Node:
    kind: str
    # Control edge (pred control / owning region / fork / join), if any.
    control: Optional[NodeId] = None
    # Generic data inputs; meaning depends on kind (see builders below).
    inputs: list[NodeId] = field(default_factory=list)
    # Kind-specific payload.
    preds: list[NodeId] = field(default_factory=list)       # region
    selection: int = 0                                      # proj branch ordinal
    factors: list[DynConst] = field(default_factory=list)   # fork
    dim: int = 0                                            # thread_id dimension
    index: int = 0                                          # parameter ordinal
    const: Optional[ConstValue] = None                      # constant
    dc: Optional[DynConst] = None                           # dynamic-constant value
    op: str = ""                                            # binary/unary operator
    indices: list[Index] = field(default_factory=list)      # read/write
    callee: str = ""                                        # call target
    dc_args: list[DynConst] = field(default_factory=list)   # call dyn-const args
    ty: Optional[Type] = None                               # result type (data nodes)
    attributes: set[str] = field(default_factory=set)
    labels: set[str] = field(default_factory=set)

    @property
    def is_control(self) -> bool:
        return self.kind in CONTROL_KINDS

    def all_inputs(self) -> list[NodeId]:
        """Every node id this node consumes, control edge included."""
        out: list[NodeId] = []
        if self.control is not None:
            out.append(self.control)
        out.extend(self.preds)
        out.extend(self.inputs)
        for ix in self.indices:
            if isinstance(ix, Position):
                out.extend(ix.ids)
        return out

    def replace_input(self, old: NodeId, new: NodeId) -> None:
        if self.control == old:
            self.control = new
        self.preds = [new if p == old else p for p in self.preds]
        self.inputs = [new if p == old else p for p in self.inputs]
        self.indices = [
            Position(tuple(new if i == old else i for i in ix.ids))
            if isinstance(ix, Position) else ix
            for ix in self.indices
        ]


class Function:
    def __init__(self, name: str, num_dyn_consts: int, param_types: list[Type],
                 return_type: Type, entry: bool = False,
                 dc_names: list[str] | None = None):
        self.name = name
        self.num_dyn_consts = num_dyn_consts
        self.param_types = list(param_types)
        self.return_type = return_type
        self.entry = entry
        self.device: str = DEVICE_UNASSIGNED
        self.nodes: list[Optional[Node]] = []
        self.dc_names = dc_names or [f"#{i}" for i in range(num_dyn_consts)]
        self.constraints: list = []  # DivisibilityConstraint
        self.start = self.add(Node("start"))

    # -- arena ------------------------------------------------------------

    def add(self, node: Node) -> NodeId:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def node(self, nid: NodeId) -> Node:
        n = self.nodes[nid]
        if n is None:
            raise KeyError(f"node %{nid} was deleted")
        return n

    def delete(self, nid: NodeId) -> None:
        self.nodes[nid] = None

    def ids(self) -> Iterator[NodeId]:
        for i, n in enumerate(self.nodes):
            if n is not None:
                yield i

    def live_nodes(self) -> Iterator[tuple[NodeId, Node]]:
        for i, n in enumerate(self.nodes):
            if n is not None:
                yield i, n

    def all_ids(self) -> set[NodeId]:
        return set(self.ids())

    def replace_uses(self, old: NodeId, new: NodeId,
                     except_ids: set[NodeId] | None = None) -> None:
        for i, n in self.live_nodes():
            if except_ids and i in except_ids:
                continue
            n.replace_input(old, new)

    def users(self, nid: NodeId) -> list[NodeId]:
        return [i for i, n in self.live_nodes() if nid in n.all_inputs()]

    # -- builders ----------------------------------------------------------

    def region(self, preds: list[NodeId]) -> NodeId:
        return self.add(Node("region", preds=list(preds)))

    def if_(self, control: NodeId, cond: NodeId) -> NodeId:
        return self.add(Node("if", control=control, inputs=[cond]))

    def proj(self, control: NodeId, selection: int) -> NodeId:
        return self.add(Node("proj", control=control, selection=selection))

    def return_(self, control: NodeId, value: NodeId) -> NodeId:
        return self.add(Node("return", control=control, inputs=[value]))

    def fork(self, control: NodeId, factors: list[DynConst]) -> NodeId:
        return self.add(Node("fork", control=control, factors=list(factors)))

    def join(self, control: NodeId) -> NodeId:
        return self.add(Node("join", control=control))

    def thread_id(self, fork: NodeId, dim: int, ty: Type = None) -> NodeId:
        from .types import U64
        return self.add(Node("thread_id", control=fork, dim=dim, ty=ty or U64))

    def reduce(self, join: NodeId, init: NodeId, reduct: NodeId, ty: Type = None) -> NodeId:
        return self.add(Node("reduce", control=join, inputs=[init, reduct], ty=ty))

    def phi(self, region: NodeId, inputs: list[NodeId], ty: Type = None) -> NodeId:
        return self.add(Node("phi", control=region, inputs=list(inputs), ty=ty))

    def param(self, index: int) -> NodeId:
        return self.add(Node("param", index=index, ty=self.param_types[index]))

    def constant(self, cv: ConstValue) -> NodeId:
        return self.add(Node("constant", const=cv, ty=cv.ty))

    def dynamic_constant(self, dc: DynConst, ty: Type = None) -> NodeId:
        from .types import U64
        return self.add(Node("dynconst", dc=dc, ty=ty or U64))

    def binary(self, op: str, lhs: NodeId, rhs: NodeId, ty: Type = None) -> NodeId:
        return self.add(Node("binary", op=op, inputs=[lhs, rhs], ty=ty))

    def unary(self, op: str, operand: NodeId, ty: Type = None) -> NodeId:
        return self.add(Node("unary", op=op, inputs=[operand], ty=ty))

    def read(self, collection: NodeId, indices: list[Index], ty: Type = None) -> NodeId:
        return self.add(Node("read", inputs=[collection], indices=list(indices), ty=ty))

    def write(self, collection: NodeId, indices: list[Index], value: NodeId,
              ty: Type = None) -> NodeId:
        return self.add(Node("write", inputs=[collection, value],
                             indices=list(indices), ty=ty))

    def call(self, callee: str, dc_args: list[DynConst], args: list[NodeId],
             ty: Type = None) -> NodeId:
        return self.add(Node("call", callee=callee, dc_args=list(dc_args),
                             inputs=list(args), ty=ty))

    # -- convenience -------------------------------------------------------

    def return_node(self) -> NodeId:
        rets = [i for i, n in self.live_nodes() if n.kind == "return"]
        if len(rets) != 1:
            raise ValueError(f"{self.name}: expected exactly one return, got {len(rets)}")
        return rets[0]

    def nodes_with_label(self, label: str) -> set[NodeId]:
        return {i for i, n in self.live_nodes() if label in n.labels}

    def labels_defined(self) -> set[str]:
        out: set[str] = set()
        for _, n in self.live_nodes():
            out |= n.labels
        return out


DEVICE_UNASSIGNED = "unassigned"
DEVICE_CPU = "cpu"
DEVICE_HOST = "host"
DEVICE_GPU_SIM = "gpu_sim"
DEVICES = (DEVICE_UNASSIGNED, DEVICE_CPU, DEVICE_HOST, DEVICE_GPU_SIM)


class Module:
    def __init__(self):
        self.functions: dict[str, Function] = {}

    def add_function(self, fn: Function) -> Function:
        if fn.name in self.functions:
            raise ValueError(f"duplicate function {fn.name}")
        self.functions[fn.name] = fn
        return fn

    def function(self, name: str) -> Function:
        return self.functions[name]

    def entries(self) -> list[Function]:
        return [f for f in self.functions.values() if f.entry]

    def call_graph(self) -> dict[str, set[str]]:
        g: dict[str, set[str]] = {name: set() for name in self.functions}
        for name, fn in self.functions.items():
            for _, n in fn.live_nodes():
                if n.kind == "call":
                    g[name].add(n.callee)
        return g


def describe_node(fn: Function, nid: NodeId) -> str:
    """One-line rendering: ``id = kind(inputs) : type [attrs] [labels]``."""
    from .types import render_type

    n = fn.node(nid)
    parts: list[str] = []
    if n.control is not None:
        parts.append(f"%{n.control}")
    parts += [f"%{p}" for p in n.preds]
    parts += [f"%{i}" for i in n.inputs]
    detail = ""
    if n.kind == "fork":
        detail = "; " + ", ".join(render(f, fn.dc_names) for f in n.factors)
    elif n.kind == "proj":
        detail = f"; {n.selection}"
    elif n.kind == "thread_id":
        detail = f"; dim {n.dim}"
    elif n.kind == "param":
        detail = f"; #{n.index}"
    elif n.kind == "constant":
        cv = n.const
        detail = "; zero" if cv.value is None else f"; {cv.value!r}"
    elif n.kind == "dynconst":
        detail = f"; {render(n.dc, fn.dc_names)}"
    elif n.kind in ("binary", "unary"):
        detail = f"; {n.op}"
    elif n.kind in ("read", "write"):
        rendered = []
        for ix in n.indices:
            if isinstance(ix, Field):
                rendered.append(f".{ix.ordinal}")
            elif isinstance(ix, Variant):
                rendered.append(f"@{ix.ordinal}")
            else:
                rendered.append("[" + ", ".join(f"%{i}" for i in ix.ids) + "]")
        detail = "; " + "".join(rendered) if rendered else "; <whole>"
    elif n.kind == "call":
        dcs = ", ".join(render(d, fn.dc_names) for d in n.dc_args)
        detail = f"; {n.callee}<{dcs}>"
    body = f"%{nid} = {n.kind}(" + ", ".join(parts) + detail + ")"
    if n.ty is not None:
        body += f" : {render_type(n.ty, fn.dc_names)}"
    if n.attributes:
        body += " [" + " ".join(sorted(n.attributes)) + "]"
    if n.labels:
        body += " [" + " ".join("@" + l for l in sorted(n.labels)) + "]"
    return body
