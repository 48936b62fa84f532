"""Shared machinery for transformation passes.

Every pass returns a PassResult carrying (a) a node remapping covering every
node it deleted or replaced and (b) zero or more result regions. The schedule
interpreter pushes the remapping through all live region values, which is how
label- and pass-produced regions survive rewrites.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import Function, Module, NodeId


class PassError(Exception):
    pass


@dataclass
class RegionValue:
    function: str
    nodes: set[NodeId]

    def copy(self) -> "RegionValue":
        return RegionValue(self.function, set(self.nodes))


@dataclass
class PassResult:
    # per function: old node id -> replacement ids (empty tuple = deleted)
    remapping: dict[str, dict[NodeId, tuple[NodeId, ...]]] = field(default_factory=dict)
    results: list[object] = field(default_factory=list)  # RegionValue | FunctionHandle
    diagnostics: list[str] = field(default_factory=list)

    def map_region(self, region: RegionValue) -> RegionValue:
        m = self.remapping.get(region.function)
        if not m:
            return region
        out: set[NodeId] = set()
        for nid in region.nodes:
            out.update(m.get(nid, (nid,)))
        return RegionValue(region.function, out)

    def merge(self, other: "PassResult") -> None:
        for fname, m in other.remapping.items():
            mine = self.remapping.setdefault(fname, {})
            # compose: existing entries route through the new mapping
            for old, news in list(mine.items()):
                routed: list[NodeId] = []
                for n in news:
                    routed.extend(m.get(n, (n,)))
                mine[old] = tuple(routed)
            for old, news in m.items():
                if old not in mine:
                    mine[old] = news
        self.results.extend(other.results)
        self.diagnostics.extend(other.diagnostics)


@dataclass
class FunctionHandle:
    function: str


@dataclass
class PassSpec:
    name: str
    func: object            # callable(module, static_args, regions) -> PassResult
    region_arity: int       # number of region arguments
    takes_static: bool = False
    unsafe: bool = False    # manual attribute application


_REGISTRY: dict[str, PassSpec] = {}


def register(name: str, region_arity: int = 1, takes_static: bool = False,
             unsafe: bool = False):
    def deco(fn):
        _REGISTRY[name] = PassSpec(name, fn, region_arity, takes_static, unsafe)
        return fn
    return deco


def registry() -> dict[str, PassSpec]:
    return dict(_REGISTRY)


def lookup(name: str) -> PassSpec | None:
    return _REGISTRY.get(name)


def forks_in_region(fn: Function, region: set[NodeId]) -> list[NodeId]:
    return sorted(i for i in region
                  if fn.nodes[i] is not None and fn.node(i).kind == "fork")


def inherit_labels(fn: Function, src: NodeId, dst_ids) -> None:
    labels = fn.node(src).labels
    for d in dst_ids:
        fn.node(d).labels.update(labels)
