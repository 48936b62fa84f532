"""The value-semantics reference interpreter.

This is the semantics oracle: a strictly single-threaded, purely functional
evaluation of the node graph. Every write produces a fresh collection; forks
iterate their grids sequentially in lexicographic order (dimension 0
outermost); reduces fold in that same order. The parallel executor must agree
with this interpreter bit-for-bit except where re-association was explicitly
licensed.
"""

from __future__ import annotations

import numpy as np

from .. import analysis
from ..dynconst import evaluate
from ..ir import Field, Function, Module, NodeId, Position, Variant
from ..types import (ArrayType, ProductType, SummationType, BoolType,
                     is_scalar, numpy_dtype)
from .values import (RuntimeError_, scalar_binop, scalar_unop, typed_scalar,
                     zero_value)


class OracleLimitError(RuntimeError_):
    pass


def oracle_execute(module: Module, entry: str, dyn_consts, args,
                   max_steps: int = 50_000_000):
    fn = module.functions[entry]
    budget = [max_steps]
    return _Eval(module, fn, list(dyn_consts), list(args), budget).run()


class _Eval:
    def __init__(self, module: Module, fn: Function, dcs, args, budget):
        self.module = module
        self.fn = fn
        self.dcs = dcs
        self.args = args
        self.budget = budget
        self.values: dict[NodeId, object] = {}
        self.users = analysis.def_use(fn)
        self.succ = analysis.control_successors(fn)
        self.infos = analysis.fork_joins(fn)
        self._dependents_cache: dict[tuple, set[NodeId]] = {}

    # -- data evaluation ----------------------------------------------------

    def _spend(self, n=1):
        self.budget[0] -= n
        if self.budget[0] < 0:
            raise OracleLimitError("oracle step budget exhausted")

    def dependents(self, roots: tuple) -> set[NodeId]:
        """Data nodes whose value (transitively) depends on any root."""
        got = self._dependents_cache.get(roots)
        if got is not None:
            return got
        out: set[NodeId] = set()
        stack = list(roots)
        while stack:
            x = stack.pop()
            for u in self.users.get(x, ()):
                if u not in out and not self.fn.node(u).is_control:
                    out.add(u)
                    stack.append(u)
        out |= set(roots)
        self._dependents_cache[roots] = out
        return out

    def invalidate(self, roots: tuple) -> None:
        for x in self.dependents(roots):
            self.values.pop(x, None)

    def eval(self, nid: NodeId):
        if nid in self.values:
            return self.values[nid]
        stack = [nid]
        while stack:
            top = stack[-1]
            if top in self.values:
                stack.pop()
                continue
            n = self.fn.node(top)
            missing = [i for i in self._data_inputs(top)
                       if i not in self.values]
            if missing:
                stack.extend(missing)
                continue
            self.values[top] = self._compute(top)
            self._spend()
            stack.pop()
        return self.values[nid]

    def _data_inputs(self, nid: NodeId) -> list[NodeId]:
        n = self.fn.node(nid)
        if n.kind in ("phi", "reduce", "thread_id", "param", "constant",
                      "dynconst"):
            return []  # bound by the control walk, not demand-evaluated
        out = list(n.inputs)
        for ix in n.indices:
            if isinstance(ix, Position):
                out.extend(ix.ids)
        return out

    def _compute(self, nid: NodeId):
        n = self.fn.node(nid)
        if n.kind == "binary":
            a, b = self.values[n.inputs[0]], self.values[n.inputs[1]]
            return scalar_binop(n.op, a, b, n.ty)
        if n.kind == "unary":
            return scalar_unop(n.op, self.values[n.inputs[0]], n.ty)
        if n.kind == "read":
            return self._read(self.values[n.inputs[0]], n, nid)
        if n.kind == "write":
            return self._write(self.values[n.inputs[0]], n,
                               self.values[n.inputs[1]], nid)
        if n.kind == "call":
            callee = self.module.functions[n.callee]
            dc_args = [evaluate(d, self.dcs) for d in n.dc_args]
            call_args = [self._copy(self.values[a]) for a in n.inputs]
            sub = _Eval(self.module, callee, dc_args, call_args, self.budget)
            return sub.run()
        raise RuntimeError_(f"oracle cannot evaluate node kind {n.kind}")

    @staticmethod
    def _copy(v):
        return v.copy() if isinstance(v, np.ndarray) else v

    def _positions(self, n) -> list:
        out = []
        for ix in n.indices:
            if isinstance(ix, Position):
                out.append(tuple(int(self.values[i]) for i in ix.ids))
            else:
                out.append(ix)
        return out

    def _read(self, coll, n, nid):
        v = coll
        for ix in self._positions(n):
            if isinstance(ix, Field):
                v = v[ix.ordinal]
            elif isinstance(ix, Variant):
                tag, payload = v
                if tag != ix.ordinal:
                    raise RuntimeError_(
                        f"%{nid}: read of inactive summation variant "
                        f"{ix.ordinal} (active {tag})")
                v = payload
            else:
                arr = v
                if isinstance(arr, np.ndarray):
                    shape = arr.shape
                    if len(ix) != len(shape) or any(
                            p < 0 or p >= s for p, s in zip(ix, shape)):
                        raise RuntimeError_(
                            f"%{nid}: index {ix} out of bounds for shape {shape}")
                    v = arr[ix]
                    if isinstance(v, np.ndarray):
                        v = v.copy()
                else:
                    raise RuntimeError_(f"%{nid}: positional read of non-array")
        return v

    def _write(self, coll, n, value, nid):
        positions = self._positions(n)
        if not positions:
            return self._copy(value)
        return self._write_rec(coll, positions, value, nid)

    def _write_rec(self, coll, positions, value, nid):
        ix, rest = positions[0], positions[1:]
        if isinstance(ix, Field):
            parts = list(coll)
            parts[ix.ordinal] = self._write_rec(parts[ix.ordinal], rest, value, nid) \
                if rest else self._copy(value)
            return tuple(parts)
        if isinstance(ix, Variant):
            inner = self._write_rec(zero_value_like(coll, ix.ordinal), rest, value, nid) \
                if rest else self._copy(value)
            return (ix.ordinal, inner)
        arr = coll
        if not isinstance(arr, np.ndarray):
            raise RuntimeError_(f"%{nid}: positional write of non-array")
        if len(ix) != len(arr.shape) or any(
                p < 0 or p >= s for p, s in zip(ix, arr.shape)):
            raise RuntimeError_(
                f"%{nid}: index {ix} out of bounds for shape {arr.shape}")
        out = arr.copy()
        if rest:
            out[ix] = self._write_rec(arr[ix], rest, value, nid)
        else:
            out[ix] = value
        return out

    # -- control walk --------------------------------------------------------

    def run(self):
        fn = self.fn
        for i, n in fn.live_nodes():
            if n.kind == "param":
                self.values[i] = self.args[n.index]
            elif n.kind == "constant":
                cv = n.const
                if cv.value is None:
                    self.values[i] = zero_value(cv.ty, self.dcs)
                elif isinstance(cv.ty, BoolType):
                    self.values[i] = bool(cv.value)
                elif is_scalar(cv.ty):
                    self.values[i] = typed_scalar(cv.value, cv.ty)
                else:
                    self.values[i] = cv.value
            elif n.kind == "dynconst":
                self.values[i] = typed_scalar(evaluate(n.dc, self.dcs), n.ty)
        result = self.walk(fn.start, stop_at=None)
        return result

    def _control_successor(self, c: NodeId, from_branch: int | None = None):
        outs = self.succ.get(c, [])
        if from_branch is not None:
            for s in outs:
                sn = self.fn.node(s)
                if sn.kind == "proj" and sn.selection == from_branch:
                    return s
            raise RuntimeError_(f"missing projection {from_branch} after %{c}")
        real = [s for s in outs]
        if len(real) != 1:
            raise RuntimeError_(f"control diverges after %{c}: {real}")
        return real[0]

    def walk(self, start: NodeId, stop_at: NodeId | None):
        """Drive the control token from start; return at the function's return
        node, or when reaching stop_at (exclusive)."""
        fn = self.fn
        c = start
        prev = None
        while True:
            if c == stop_at:
                return None
            n = fn.node(c)
            self._spend()
            if n.kind in ("start", "proj"):
                c, prev = self._control_successor(c), c
            elif n.kind == "region":
                entry_ix = n.preds.index(prev)
                phis = [(i, u) for i, u in ((i, fn.node(i)) for i in self.users[c])
                        if u.kind == "phi" and u.control == c]
                new_vals = {}
                for i, phi in phis:
                    new_vals[i] = self.eval(phi.inputs[entry_ix])
                self.invalidate(tuple(sorted(i for i, _ in phis)))
                for i, v in new_vals.items():
                    self.values[i] = v
                c, prev = self._control_successor(c), c
            elif n.kind == "if":
                cond = self.eval(n.inputs[0])
                c, prev = self._control_successor(c, from_branch=1 if cond else 0), c
            elif n.kind == "return":
                return self.eval(n.inputs[0])
            elif n.kind == "fork":
                c, prev = self._run_fork(c), c
            elif n.kind == "join":
                # reached only as a stop marker for nested walks
                raise RuntimeError_(f"unexpected join %{c} in control walk")
            else:
                raise RuntimeError_(f"oracle cannot walk control kind {n.kind}")

    def _run_fork(self, f: NodeId) -> NodeId:
        fn = self.fn
        info = self.infos[f]
        join = info.join
        factors = [evaluate(x, self.dcs) for x in fn.node(f).factors]
        tids = analysis.thread_ids_of_fork(fn, f)
        reduces = analysis.reduces_of_join(fn, join)
        # initial partials
        for r in reduces:
            self.values[r] = self.eval(fn.node(r).inputs[0])
        roots = tuple(sorted(tids + reduces))
        body_start = None
        for s in self.succ.get(f, ()):
            body_start = s
        total = 1
        for x in factors:
            total *= x
        idx = [0] * len(factors)
        for _ in range(total):
            partials = {r: self.values[r] for r in reduces}
            self.invalidate(roots)
            for r, v in partials.items():
                self.values[r] = v
            for t in tids:
                self.values[t] = typed_scalar(idx[fn.node(t).dim], fn.node(t).ty)
            if body_start is not None and body_start != join:
                self.walk(body_start, stop_at=join)
            nexts = {r: self.eval(fn.node(r).inputs[1]) for r in reduces}
            for r, v in nexts.items():
                self.values[r] = v
            for d in reversed(range(len(factors))):
                idx[d] += 1
                if idx[d] < factors[d]:
                    break
                idx[d] = 0
        finals = {r: self.values[r] for r in reduces}
        self.invalidate(roots)
        for r, v in finals.items():
            self.values[r] = v
        if total == 0:
            for r in reduces:
                self.values[r] = self.eval(fn.node(r).inputs[0])
        return self._join_successor(join)

    def _join_successor(self, join: NodeId) -> NodeId:
        outs = self.succ.get(join, [])
        if len(outs) != 1:
            if not outs:
                raise RuntimeError_(f"join %{join} has no successor")
            raise RuntimeError_(f"control diverges after join %{join}")
        return outs[0]


def zero_value_like(v, ordinal):
    raise RuntimeError_("summation variant re-targeting is not supported")
