"""Deterministic textual and Graphviz renderings of a module.

The text dump is the golden-test surface: one node per line in arena order,
byte-identical across runs for identical inputs.
"""

from __future__ import annotations

from .ir import Function, Module, describe_node
from .types import render_type


def dump_function(fn: Function) -> str:
    head = f"fn {fn.name}<{', '.join(fn.dc_names)}>(" + \
        ", ".join(render_type(t, fn.dc_names) for t in fn.param_types) + \
        f") -> {render_type(fn.return_type, fn.dc_names)}"
    flags = []
    if fn.entry:
        flags.append("entry")
    if fn.device != "unassigned":
        flags.append(f"device={fn.device}")
    if flags:
        head += "  [" + " ".join(flags) + "]"
    lines = [head]
    for i, _ in fn.live_nodes():
        lines.append("  " + describe_node(fn, i))
    for c in fn.constraints:
        lines.append(f"  require {c.describe(fn.dc_names)}  ({c.origin})")
    return "\n".join(lines) + "\n"


def dump_module(module: Module) -> str:
    return "\n".join(dump_function(fn) for _, fn in sorted(module.functions.items()))


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(fn: Function) -> str:
    """Graphviz rendering.

    Control nodes are red and data nodes are blue. Data dependencies are
    solid, control flow edges are dashed, control-data interactions are
    dotted.
    """
    lines = [f'digraph "{_dot_escape(fn.name)}" {{']
    lines.append('  rankdir=TB;')
    for i, n in fn.live_nodes():
        color = "red" if n.is_control else "blue"
        label = describe_node(fn, i).split(" = ", 1)[1]
        label = label.split(" : ")[0] if " : " in label else label
        lines.append(f'  n{i} [label="{_dot_escape(f"%{i} {label}")}", color={color}, '
                     f'fontcolor={color}, shape={"box" if n.is_control else "ellipse"}];')
    for i, n in fn.live_nodes():
        for inp in n.all_inputs():
            src_ctrl = fn.node(inp).is_control
            dst_ctrl = n.is_control
            if src_ctrl and dst_ctrl:
                style = "dashed"
            elif src_ctrl or dst_ctrl:
                style = "dotted"
            else:
                style = "solid"
            lines.append(f"  n{inp} -> n{i} [style={style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def module_to_dot(module: Module) -> str:
    return "\n".join(to_dot(fn) for _, fn in sorted(module.functions.items()))
