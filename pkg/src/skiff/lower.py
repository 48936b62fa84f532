"""Lowering from the source AST into the sea-of-nodes IR.

Mutable variables become SSA values threaded through phi nodes; element
assignment becomes a write node producing a new collection value; an
uninitialized collection declaration becomes a zero-collection constant.
Loops lower condition-first: a region, an if on the continue condition, and
projections to the body and the exit. Every node created while lowering a
labeled statement carries that label (and those of enclosing labeled
statements).
"""

from __future__ import annotations

from . import frontend as ast
from .dynconst import DynConst, DcParam, DcLiteral, dc_add, dc_sub, dc_mul, dc_div, DynConstError, normalize
from .ir import ConstValue, Function, Module, NodeId, Position
from .types import (Type, ArrayType, BOOL, F32, I64, U64, IntType, FloatType, BoolType,
                    is_scalar, is_collection, is_integer, render_type)


class LowerError(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


LabelMap = dict[tuple[str, str], set[NodeId]]


def lower(program: ast.SourceProgram) -> tuple[Module, LabelMap]:
    module = Module()
    sigs = {f.name: f for f in program.functions}
    if len(sigs) != len(program.functions):
        raise LowerError("duplicate function name")
    _check_call_cycles(program, sigs)
    for decl in program.functions:
        _FunctionLowerer(module, sigs, decl).run()
    labels: LabelMap = {}
    for name, fn in module.functions.items():
        for label in sorted(fn.labels_defined()):
            labels[(name, label)] = fn.nodes_with_label(label)
    return module, labels


def _collect_calls(stmts) -> set[str]:
    out: set[str] = set()

    def expr(e):
        if isinstance(e, ast.CallExpr):
            out.add(e.callee)
            for a in e.args:
                expr(a)
        elif isinstance(e, ast.BinaryExpr):
            expr(e.lhs)
            expr(e.rhs)
        elif isinstance(e, (ast.UnaryExpr, ast.CastExpr)):
            expr(e.operand)
        elif isinstance(e, ast.IndexExpr):
            expr(e.base)
            for i in e.indices:
                expr(i)

    def stmt(s):
        if isinstance(s, ast.LetStmt) and s.init is not None:
            expr(s.init)
        elif isinstance(s, ast.AssignStmt):
            expr(s.value)
            for i in s.indices:
                expr(i)
        elif isinstance(s, ast.ForStmt):
            expr(s.lo)
            expr(s.hi)
            walk(s.body)
        elif isinstance(s, ast.WhileStmt):
            expr(s.cond)
            walk(s.body)
        elif isinstance(s, ast.IfStmt):
            expr(s.cond)
            walk(s.then)
            walk(s.orelse)
        elif isinstance(s, ast.ReturnStmt) and s.value is not None:
            expr(s.value)

    def walk(ss):
        for s in ss:
            stmt(s)

    walk(stmts)
    return out


def _check_call_cycles(program: ast.SourceProgram, sigs) -> None:
    graph = {f.name: _collect_calls(f.body) & set(sigs) for f in program.functions}
    state: dict[str, int] = {}

    def visit(name, path):
        if state.get(name) == 1:
            raise LowerError("recursive call cycle: " + " -> ".join(path + [name]))
        if state.get(name) == 2:
            return
        state[name] = 1
        for callee in sorted(graph.get(name, ())):
            visit(callee, path + [name])
        state[name] = 2

    for name in graph:
        visit(name, [])


def _assigned_names(stmts) -> set[str]:
    """Names assigned (not declared) anywhere in a statement list."""
    out: set[str] = set()
    declared: set[str] = set()
    for s in stmts:
        if isinstance(s, ast.LetStmt):
            declared.add(s.name)
        elif isinstance(s, ast.AssignStmt):
            if s.target not in declared:
                out.add(s.target)
        elif isinstance(s, ast.ForStmt):
            inner = _assigned_names(s.body) - {s.var} - declared
            out |= inner
        elif isinstance(s, ast.WhileStmt):
            out |= _assigned_names(s.body) - declared
        elif isinstance(s, ast.IfStmt):
            out |= (_assigned_names(s.then) | _assigned_names(s.orelse)) - declared
    return out


class _Scope:
    def __init__(self, parent=None):
        self.vars: dict[str, NodeId] = {}
        self.types: dict[str, Type] = {}
        self.parent = parent

    def lookup(self, name: str):
        s = self
        while s is not None:
            if name in s.vars:
                return s
            s = s.parent
        return None


class _FunctionLowerer:
    def __init__(self, module: Module, sigs: dict[str, ast.FunctionDecl],
                 decl: ast.FunctionDecl):
        self.module = module
        self.sigs = sigs
        self.decl = decl
        self.fn = Function(decl.name, len(decl.dc_params),
                           [t for _, t in decl.params], decl.return_type,
                           entry=decl.entry, dc_names=list(decl.dc_params))
        self.control: NodeId | None = self.fn.start
        self.label_stack: list[str] = []
        self.returned = False

    def run(self):
        self.module.add_function(self.fn)
        scope = _Scope()
        for i, (name, ty) in enumerate(self.decl.params):
            scope.vars[name] = self.fn.param(i)
            scope.types[name] = ty
        self.lower_block(self.decl.body, scope)
        if not self.returned:
            self.implicit_return(scope)

    # -- helpers -----------------------------------------------------------

    def new_node(self, nid: NodeId) -> NodeId:
        for label in self.label_stack:
            self.fn.node(nid).labels.add(label)
        return nid

    def mark(self) -> int:
        return len(self.fn.nodes)

    def apply_labels(self, since: int, labels: list[str]):
        if not labels:
            return
        for nid in range(since, len(self.fn.nodes)):
            n = self.fn.nodes[nid]
            if n is not None:
                n.labels.update(labels)

    def err(self, msg: str, line: int = 0):
        raise LowerError(f"{self.decl.name}: {msg}", line)

    # -- expressions ---------------------------------------------------------

    def as_dynconst(self, e: ast.Expr, scope: _Scope) -> DynConst | None:
        """Recognize expressions built purely from dyn-consts and int literals."""
        try:
            if isinstance(e, ast.IntLit):
                return DcLiteral(e.value)
            if isinstance(e, ast.Name) and e.ident in self.decl.dc_params:
                if scope.lookup(e.ident) is not None:
                    return None  # shadowed by a local
                return DcParam(self.decl.dc_params.index(e.ident))
            if isinstance(e, ast.BinaryExpr) and e.op in ("add", "sub", "mul", "div"):
                l = self.as_dynconst(e.lhs, scope)
                r = self.as_dynconst(e.rhs, scope)
                if l is None or r is None:
                    return None
                f = {"add": dc_add, "sub": dc_sub, "mul": dc_mul, "div": dc_div}[e.op]
                return f(l, r)
        except DynConstError:
            return None
        return None

    def lower_expr(self, e: ast.Expr, scope: _Scope, expected: Type | None = None) -> NodeId:
        if not isinstance(e, ast.IntLit):
            # Expressions built purely from dyn-const parameters and integer
            # literals lower to a single symbolic node so later passes can see
            # bounds like n/4 as dynamic constants.
            dc = self.as_dynconst(e, scope)
            if dc is not None:
                return self.new_node(self.fn.dynamic_constant(dc))
        if isinstance(e, ast.IntLit):
            if expected is not None and isinstance(expected, FloatType):
                return self.new_node(self.fn.constant(ConstValue(expected, float(e.value))))
            ty = expected if expected is not None and isinstance(expected, IntType) else I64
            return self.new_node(self.fn.constant(ConstValue(ty, e.value)))
        if isinstance(e, ast.FloatLit):
            ty = expected if expected is not None and isinstance(expected, FloatType) else F32
            return self.new_node(self.fn.constant(ConstValue(ty, e.value)))
        if isinstance(e, ast.BoolLit):
            return self.new_node(self.fn.constant(ConstValue(BOOL, e.value)))
        if isinstance(e, ast.Name):
            s = scope.lookup(e.ident)
            if s is None:
                self.err(f"unknown variable {e.ident!r}", e.line)
            return s.vars[e.ident]
        if isinstance(e, ast.IndexExpr):
            return self.lower_read(e, scope)
        if isinstance(e, ast.BinaryExpr):
            return self.lower_binary(e, scope, expected)
        if isinstance(e, ast.UnaryExpr):
            v = self.lower_expr(e.operand, scope, expected)
            vt = self.fn.node(v).ty
            if e.op == "neg" and not isinstance(vt, (IntType, FloatType)):
                self.err("negation needs a numeric operand", e.line)
            if e.op == "not" and vt != BOOL:
                self.err("logical not needs a bool operand", e.line)
            return self.new_node(self.fn.unary(e.op, v, ty=vt))
        if isinstance(e, ast.CastExpr):
            from .types import SCALAR_NAMES
            target = SCALAR_NAMES[e.target]
            v = self.lower_expr(e.operand, scope)
            if not is_scalar(self.fn.node(v).ty):
                self.err("casts apply to scalars", e.line)
            return self.new_node(self.fn.unary("cast", v, ty=target))
        if isinstance(e, ast.CallExpr):
            return self.lower_call(e, scope)
        self.err(f"cannot lower expression {e!r}", e.line)

    def lower_binary(self, e: ast.BinaryExpr, scope: _Scope, expected: Type | None) -> NodeId:
        from .ir import COMPARISON_OPS
        if e.op in ("and", "or"):
            l = self.lower_expr(e.lhs, scope, BOOL)
            r = self.lower_expr(e.rhs, scope, BOOL)
            if self.fn.node(l).ty != BOOL or self.fn.node(r).ty != BOOL:
                self.err(f"{e.op} needs bool operands", e.line)
            return self.new_node(self.fn.binary(e.op, l, r, ty=BOOL))
        want = None if e.op in COMPARISON_OPS else expected
        l = self.lower_expr(e.lhs, scope, want)
        lt = self.fn.node(l).ty
        r = self.lower_expr(e.rhs, scope, lt)
        rt = self.fn.node(r).ty
        if lt != rt:
            self.err(f"operand types differ for {e.op}: "
                     f"{render_type(lt)} vs {render_type(rt)}", e.line)
        if not is_scalar(lt):
            self.err(f"{e.op} needs scalar operands", e.line)
        out = BOOL if e.op in COMPARISON_OPS else lt
        return self.new_node(self.fn.binary(e.op, l, r, ty=out))

    def lower_indices(self, base_ty: Type, indices: list[ast.Expr], scope: _Scope,
                      line: int) -> Position:
        if not isinstance(base_ty, ArrayType):
            self.err("indexing a non-array", line)
        if len(indices) != len(base_ty.extents):
            self.err(f"array rank mismatch: {len(base_ty.extents)} dims, "
                     f"{len(indices)} indices", line)
        ids = []
        for ix in indices:
            v = self.lower_expr(ix, scope, U64)
            if not is_integer(self.fn.node(v).ty):
                self.err("array index must be an integer", line)
            ids.append(v)
        return Position(tuple(ids))

    def lower_read(self, e: ast.IndexExpr, scope: _Scope) -> NodeId:
        base = self.lower_expr(e.base, scope)
        bt = self.fn.node(base).ty
        pos = self.lower_indices(bt, e.indices, scope, e.line)
        return self.new_node(self.fn.read(base, [pos], ty=bt.element))

    def lower_call(self, e: ast.CallExpr, scope: _Scope) -> NodeId:
        callee = self.sigs.get(e.callee)
        if callee is None:
            self.err(f"call to unknown function {e.callee!r}", e.line)
        args = [self.lower_expr(a, scope) for a in e.args]
        if len(args) != len(callee.params):
            self.err(f"{e.callee} expects {len(callee.params)} arguments", e.line)
        dc_args = self.infer_call_dcs(e, callee, args, scope)
        from .verify import _subst_call_type
        for a, (_, pt) in zip(args, callee.params):
            want = _subst_call_type(pt, dc_args)
            have = self.fn.node(a).ty
            if have != want:
                self.err(f"argument type mismatch calling {e.callee}: "
                         f"{render_type(have)} vs {render_type(want)}", e.line)
        ret = _subst_call_type(callee.return_type, dc_args)
        return self.new_node(self.fn.call(e.callee, dc_args, args, ty=ret))

    def infer_call_dcs(self, e: ast.CallExpr, callee: ast.FunctionDecl,
                       args: list[NodeId], scope: _Scope) -> list[DynConst]:
        if e.dc_args is not None:
            if len(e.dc_args) != len(callee.dc_params):
                self.err(f"{e.callee} takes {len(callee.dc_params)} dyn-const arguments", e.line)
            return [normalize(d) for d in e.dc_args]
        # Unify callee parameter extents (over its own dc params) against the
        # caller-side argument types.
        bound: dict[int, DynConst] = {}
        for a, (_, pt) in zip(args, callee.params):
            at = self.fn.node(a).ty
            if isinstance(pt, ArrayType) and isinstance(at, ArrayType):
                for ce, ae in zip(pt.extents, at.extents):
                    if isinstance(ce, DcParam) and ce.index not in bound:
                        bound[ce.index] = ae
        missing = [callee.dc_params[i] for i in range(len(callee.dc_params)) if i not in bound]
        if missing:
            self.err(f"cannot infer dyn-consts {missing} for {e.callee}; "
                     f"use {e.callee}::<...>(...)", e.line)
        return [bound[i] for i in range(len(callee.dc_params))]

    # -- statements ----------------------------------------------------------

    def lower_block(self, stmts: list[ast.Stmt], scope: _Scope):
        for s in stmts:
            if self.returned:
                self.err("unreachable statement after return", s.line)
            start = self.mark()
            self.label_stack.extend(s.labels)
            try:
                self.lower_stmt(s, scope)
            finally:
                for _ in s.labels:
                    self.label_stack.pop()
            self.apply_labels(start, s.labels)

    def lower_stmt(self, s: ast.Stmt, scope: _Scope):
        if isinstance(s, ast.LetStmt):
            if s.name in scope.vars:
                self.err(f"redeclaration of {s.name!r}", s.line)
            if s.init is None:
                nid = self.new_node(self.fn.constant(ConstValue(s.ty, None)))
            else:
                nid = self.lower_expr(s.init, scope, s.ty)
                got = self.fn.node(nid).ty
                if got != s.ty:
                    self.err(f"let {s.name}: declared {render_type(s.ty)}, "
                             f"got {render_type(got)}", s.line)
            scope.vars[s.name] = nid
            scope.types[s.name] = s.ty
        elif isinstance(s, ast.AssignStmt):
            self.lower_assign(s, scope)
        elif isinstance(s, ast.ForStmt):
            self.lower_for(s, scope)
        elif isinstance(s, ast.WhileStmt):
            self.lower_while(s, scope)
        elif isinstance(s, ast.IfStmt):
            self.lower_if(s, scope)
        elif isinstance(s, ast.ReturnStmt):
            if s.value is None:
                self.err("return needs a value", s.line)
            v = self.lower_expr(s.value, scope, self.fn.return_type)
            if self.fn.node(v).ty != self.fn.return_type:
                self.err("return type mismatch", s.line)
            self.new_node(self.fn.return_(self.control, v))
            self.returned = True
        else:
            self.err(f"cannot lower statement {s!r}", s.line)

    def lower_assign(self, s: ast.AssignStmt, scope: _Scope):
        owner = scope.lookup(s.target)
        if owner is None:
            self.err(f"assignment to undeclared variable {s.target!r}", s.line)
        cur = owner.vars[s.target]
        declared = owner.types[s.target]
        if not s.indices:
            if s.op == "=":
                v = self.lower_expr(s.value, scope, declared)
            else:
                op = "add" if s.op == "+=" else "mul"
                rhs = self.lower_expr(s.value, scope, declared)
                if self.fn.node(rhs).ty != declared:
                    self.err("compound assignment type mismatch", s.line)
                v = self.new_node(self.fn.binary(op, cur, rhs, ty=declared))
            if self.fn.node(v).ty != declared:
                self.err(f"assignment to {s.target}: type mismatch", s.line)
            owner.vars[s.target] = v
            return
        # element assignment
        if not isinstance(declared, ArrayType):
            self.err(f"{s.target} is not an array", s.line)
        pos = self.lower_indices(declared, s.indices, scope, s.line)
        elem_ty = declared.element
        if s.op == "=":
            v = self.lower_expr(s.value, scope, elem_ty)
        else:
            op = "add" if s.op == "+=" else "mul"
            old = self.new_node(self.fn.read(cur, [pos], ty=elem_ty))
            rhs = self.lower_expr(s.value, scope, elem_ty)
            if self.fn.node(rhs).ty != elem_ty:
                self.err("compound assignment type mismatch", s.line)
            v = self.new_node(self.fn.binary(op, old, rhs, ty=elem_ty))
        if self.fn.node(v).ty != elem_ty:
            self.err("element assignment type mismatch", s.line)
        owner.vars[s.target] = self.new_node(self.fn.write(cur, [pos], v, ty=declared))

    def _loop_shell(self, carried: list[str], scope: _Scope):
        """Create region + phis for the loop-carried variables."""
        region = self.new_node(self.fn.region([self.control]))
        phis: dict[str, NodeId] = {}
        for name in carried:
            owner = scope.lookup(name)
            init = owner.vars[name]
            phi = self.new_node(self.fn.phi(region, [init], ty=self.fn.node(init).ty))
            phis[name] = phi
            owner.vars[name] = phi
        return region, phis

    def _loop_close(self, region: NodeId, phis: dict[str, NodeId], scope: _Scope,
                    extra: dict[NodeId, NodeId] | None = None):
        """Patch the backedge: region pred + phi second inputs."""
        self.fn.node(region).preds.append(self.control)
        for name, phi in phis.items():
            owner = scope.lookup(name)
            self.fn.node(phi).inputs.append(owner.vars[name])
            owner.vars[name] = phi
        if extra:
            for phi, val in extra.items():
                self.fn.node(phi).inputs.append(val)

    def lower_for(self, s: ast.ForStmt, scope: _Scope):
        lo = self.lower_expr(s.lo, scope, U64)
        hi = self.lower_expr(s.hi, scope, U64)
        if not is_integer(self.fn.node(lo).ty) or not is_integer(self.fn.node(hi).ty):
            self.err("loop bounds must be integers", s.line)
        carried = sorted(_assigned_names(s.body) & _visible(scope))
        region, phis = self._loop_shell(carried, scope)
        phi_i = self.new_node(self.fn.phi(region, [lo], ty=U64))
        cond = self.new_node(self.fn.binary("lt", phi_i, hi, ty=BOOL))
        iff = self.new_node(self.fn.if_(region, cond))
        body_c = self.new_node(self.fn.proj(iff, 1))
        exit_c = self.new_node(self.fn.proj(iff, 0))
        self.control = body_c
        inner = _Scope(scope)
        inner.vars[s.var] = phi_i
        inner.types[s.var] = U64
        self.lower_block(s.body, inner)
        if self.returned:
            self.err("return inside a loop is not supported", s.line)
        one = self.new_node(self.fn.constant(ConstValue(U64, 1)))
        nxt = self.new_node(self.fn.binary("add", phi_i, one, ty=U64))
        self._loop_close(region, phis, scope, extra={phi_i: nxt})
        self.control = exit_c

    def lower_while(self, s: ast.WhileStmt, scope: _Scope):
        carried = sorted(_assigned_names(s.body) & _visible(scope))
        region, phis = self._loop_shell(carried, scope)
        cond = self.lower_expr(s.cond, scope, BOOL)
        if self.fn.node(cond).ty != BOOL:
            self.err("while condition must be bool", s.line)
        iff = self.new_node(self.fn.if_(region, cond))
        body_c = self.new_node(self.fn.proj(iff, 1))
        exit_c = self.new_node(self.fn.proj(iff, 0))
        self.control = body_c
        self.lower_block(s.body, _Scope(scope))
        if self.returned:
            self.err("return inside a loop is not supported", s.line)
        self._loop_close(region, phis, scope)
        self.control = exit_c

    def lower_if(self, s: ast.IfStmt, scope: _Scope):
        cond = self.lower_expr(s.cond, scope, BOOL)
        if self.fn.node(cond).ty != BOOL:
            self.err("if condition must be bool", s.line)
        iff = self.new_node(self.fn.if_(self.control, cond))
        then_c = self.new_node(self.fn.proj(iff, 1))
        else_c = self.new_node(self.fn.proj(iff, 0))
        assigned = sorted((_assigned_names(s.then) | _assigned_names(s.orelse))
                          & _visible(scope))
        saved = {name: scope.lookup(name).vars[name] for name in assigned}

        self.control = then_c
        self.lower_block(s.then, _Scope(scope))
        if self.returned:
            self.err("return inside a conditional branch is not supported", s.line)
        then_end = self.control
        then_vals = {name: scope.lookup(name).vars[name] for name in assigned}

        for name, v in saved.items():
            scope.lookup(name).vars[name] = v
        self.control = else_c
        self.lower_block(s.orelse, _Scope(scope))
        if self.returned:
            self.err("return inside a conditional branch is not supported", s.line)
        else_end = self.control
        else_vals = {name: scope.lookup(name).vars[name] for name in assigned}

        merge = self.new_node(self.fn.region([then_end, else_end]))
        self.control = merge
        for name in assigned:
            tv, ev = then_vals[name], else_vals[name]
            if tv == ev:
                scope.lookup(name).vars[name] = tv
            else:
                phi = self.new_node(self.fn.phi(merge, [tv, ev], ty=self.fn.node(tv).ty))
                scope.lookup(name).vars[name] = phi

    def implicit_return(self, scope: _Scope):
        """Without a trailing return, exactly one in-scope value of the return
        type must be live; it becomes the function result."""
        candidates = [(name, nid) for name, nid in scope.vars.items()
                      if scope.types.get(name) == self.fn.return_type]
        if len(candidates) != 1:
            self.err(f"missing return and {len(candidates)} candidates of the return type")
        _, nid = candidates[0]
        self.fn.return_(self.control, nid)
        self.returned = True


def _visible(scope: _Scope) -> set[str]:
    out: set[str] = set()
    s = scope
    while s is not None:
        out |= set(s.vars)
        s = s.parent
    return out
