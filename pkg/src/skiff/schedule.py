"""The scheduling language: parsing and execution.

Schedules are straight-line imperative programs over regions of IR nodes:
label references, set algebra, pass invocations with static bracket
arguments, let-bound (and tuple-destructured) results, macros, and device
assignment. A macro call evaluates to the value bound by its final ``let``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import Module, DEVICE_CPU, DEVICE_HOST, DEVICE_GPU_SIM
from .passes.common import (FunctionHandle, PassError, PassResult, RegionValue,
                            lookup as lookup_pass)
from .verify import verify


class ScheduleError(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"schedule line {line}: {message}" if line else message)
        self.line = line


# -- tokens -------------------------------------------------------------------

@dataclass
class Tok:
    kind: str  # ident, int, sym, kw, eof
    text: str
    line: int


_KEYWORDS = {"let", "macro"}
_SYMS = ["(", ")", "[", "]", "{", "}", ",", ";", "=", "!", "@", "*", "\\", "|", "&", "_"]
_UNICODE = {"∖": "\\", "∪": "|", "∩": "&"}


def _tokenize(src: str) -> list[Tok]:
    toks: list[Tok] = []
    i, line = 0, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c in _UNICODE:
            toks.append(Tok("sym", _UNICODE[c], line))
            i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Tok("int", src[i:j], line))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] in "_-"):
                j += 1
            text = src[i:j]
            if text == "_":
                toks.append(Tok("sym", "_", line))
            else:
                toks.append(Tok("kw" if text in _KEYWORDS else "ident", text, line))
            i = j
            continue
        if c in "".join(_SYMS):
            toks.append(Tok("sym", c, line))
            i += 1
            continue
        raise ScheduleError(f"unexpected character {c!r}", line)
    toks.append(Tok("eof", "", line))
    return toks


# -- AST ----------------------------------------------------------------------

@dataclass
class SExpr:
    line: int = 0


@dataclass
class LabelRef(SExpr):
    function: str = ""
    label: str = ""


@dataclass
class NameRef(SExpr):
    name: str = ""     # schedule variable, function, or macro/pass via CallExpr


@dataclass
class Star(SExpr):
    pass


@dataclass
class SetOp(SExpr):
    op: str = ""       # "\\", "|", "&"
    lhs: SExpr = None
    rhs: SExpr = None


@dataclass
class CallExpr(SExpr):
    name: str = ""
    static_args: list | None = None   # ints / nested int lists / param names
    region_args: list[SExpr] = field(default_factory=list)


@dataclass
class SStmt:
    line: int = 0


@dataclass
class LetStmt(SStmt):
    patterns: list[str] = field(default_factory=list)  # "_" drops a value
    expr: SExpr = None


@dataclass
class ExprStmt(SStmt):
    expr: SExpr = None


@dataclass
class DeviceStmt(SStmt):
    device: str = ""
    expr: SExpr = None


@dataclass
class MacroDef(SStmt):
    name: str = ""
    static_params: list[str] = field(default_factory=list)
    region_params: list[str] = field(default_factory=list)
    body: list[SStmt] = field(default_factory=list)


@dataclass
class ScheduleProgram:
    statements: list[SStmt]


_DEVICES = {"cpu": DEVICE_CPU, "host": DEVICE_HOST, "gpu": DEVICE_GPU_SIM}


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self) -> Tok:
        return self.toks[self.pos]

    def next(self) -> Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("sym", "kw")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            t = self.peek()
            raise ScheduleError(f"expected {text!r}, found {t.text!r}", t.line)
        return self.next()

    def expect_ident(self) -> Tok:
        t = self.peek()
        if t.kind != "ident":
            raise ScheduleError(f"expected identifier, found {t.text!r}", t.line)
        return self.next()

    def parse_static_arg(self):
        t = self.peek()
        if t.kind == "int":
            self.next()
            return int(t.text)
        if t.kind == "ident":
            self.next()
            return t.text  # macro static parameter, substituted at expansion
        if self.accept("["):
            items = []
            if not self.at("]"):
                items.append(self.parse_static_arg())
                while self.accept(","):
                    items.append(self.parse_static_arg())
            self.expect("]")
            return items
        raise ScheduleError(f"expected static argument, found {t.text!r}", t.line)

    def parse_primary(self) -> SExpr:
        t = self.peek()
        if self.accept("*"):
            return Star(t.line)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        name = self.expect_ident().text
        if self.at("@"):
            self.next()
            label = self.expect_ident().text
            return LabelRef(t.line, name, label)
        bang = self.accept("!")
        static_args = None
        if self.at("["):
            self.next()
            static_args = []
            if not self.at("]"):
                static_args.append(self.parse_static_arg())
                while self.accept(","):
                    static_args.append(self.parse_static_arg())
            self.expect("]")
        if self.at("("):
            self.next()
            region_args = []
            if not self.at(")"):
                region_args.append(self.parse_expr())
                while self.accept(","):
                    region_args.append(self.parse_expr())
            self.expect(")")
            return CallExpr(t.line, name, static_args, region_args)
        if bang or static_args is not None:
            raise ScheduleError("pass arguments without a call", t.line)
        return NameRef(t.line, name)

    def parse_expr(self) -> SExpr:
        e = self.parse_primary()
        while True:
            t = self.peek()
            if t.kind == "sym" and t.text in ("\\", "|", "&"):
                self.next()
                e = SetOp(t.line, t.text, e, self.parse_primary())
            else:
                return e

    def parse_stmt(self) -> SStmt:
        t = self.peek()
        if self.accept("let"):
            patterns: list[str] = []
            if self.accept("("):
                while True:
                    p = self.peek()
                    if self.accept("_"):
                        patterns.append("_")
                    else:
                        patterns.append(self.expect_ident().text)
                    if not self.accept(","):
                        break
                self.expect(")")
            else:
                patterns.append(self.expect_ident().text)
            self.expect("=")
            e = self.parse_expr()
            self.expect(";")
            return LetStmt(t.line, patterns, e)
        if self.accept("macro"):
            name = self.expect_ident().text
            self.accept("!")
            static_params: list[str] = []
            if self.accept("["):
                if not self.at("]"):
                    static_params.append(self.expect_ident().text)
                    while self.accept(","):
                        static_params.append(self.expect_ident().text)
                self.expect("]")
            self.expect("(")
            region_params: list[str] = []
            if not self.at(")"):
                region_params.append(self.expect_ident().text)
                while self.accept(","):
                    region_params.append(self.expect_ident().text)
            self.expect(")")
            self.expect("{")
            body: list[SStmt] = []
            while not self.at("}"):
                body.append(self.parse_stmt())
            self.expect("}")
            return MacroDef(t.line, name, static_params, region_params, body)
        e = self.parse_expr()
        self.expect(";")
        if isinstance(e, CallExpr) and e.name in _DEVICES and e.static_args is None \
                and len(e.region_args) == 1:
            return DeviceStmt(e.line, _DEVICES[e.name], e.region_args[0])
        return ExprStmt(t.line, e)

    def parse_program(self) -> ScheduleProgram:
        out: list[SStmt] = []
        while self.peek().kind != "eof":
            out.append(self.parse_stmt())
        return ScheduleProgram(out)


def parse_schedule(src: str) -> ScheduleProgram:
    return _Parser(src).parse_program()


# -- interpreter ----------------------------------------------------------------

class _Scope:
    def __init__(self, parent=None):
        self.vars: dict[str, object] = {}
        self.parent = parent

    def lookup(self, name: str):
        s = self
        while s is not None:
            if name in s.vars:
                return s.vars[name]
            s = s.parent
        return None

    def all_values(self):
        s = self
        while s is not None:
            yield from s.vars.items()
            s = s.parent


class Scheduler:
    """Executes a schedule against a module, maintaining region values."""

    def __init__(self, module: Module, verify_each_pass: bool = True,
                 on_pass=None):
        self.module = module
        self.macros: dict[str, MacroDef] = {}
        self.verify_each_pass = verify_each_pass
        self.log: list[str] = []
        self.on_pass = on_pass  # callback(stmt_line, pass_name) after each pass
        self._scopes: list[_Scope] = [_Scope()]

    # value helpers

    def _coerce_region(self, value, line) -> RegionValue:
        if isinstance(value, RegionValue):
            return value.copy()
        if isinstance(value, FunctionHandle):
            fn = self.module.functions.get(value.function)
            if fn is None:
                raise ScheduleError(f"unknown function {value.function}", line)
            return RegionValue(value.function, fn.all_ids())
        raise ScheduleError(f"expected a region value, got {type(value).__name__}", line)

    def _remap_env(self, result: PassResult):
        for scope in self._scopes:
            s = scope
            while s is not None:
                for name, v in list(s.vars.items()):
                    if isinstance(v, RegionValue):
                        s.vars[name] = result.map_region(v)
                    elif isinstance(v, tuple):
                        s.vars[name] = tuple(
                            result.map_region(x) if isinstance(x, RegionValue) else x
                            for x in v)
                s = s.parent

    # evaluation

    def eval_expr(self, e: SExpr, scope: _Scope, static_env: dict[str, object]):
        if isinstance(e, Star):
            return Star()
        if isinstance(e, LabelRef):
            fn = self.module.functions.get(e.function)
            if fn is None:
                raise ScheduleError(f"unknown function {e.function}", e.line)
            nodes = fn.nodes_with_label(e.label)
            if not nodes:
                raise ScheduleError(f"unknown label {e.function}@{e.label}", e.line)
            return RegionValue(e.function, nodes)
        if isinstance(e, NameRef):
            v = scope.lookup(e.name)
            if v is not None:
                return v
            if e.name in self.module.functions:
                return FunctionHandle(e.name)
            raise ScheduleError(f"unknown name {e.name!r}", e.line)
        if isinstance(e, SetOp):
            l = self._coerce_region(self.eval_expr(e.lhs, scope, static_env), e.line)
            r = self._coerce_region(self.eval_expr(e.rhs, scope, static_env), e.line)
            if l.function != r.function:
                raise ScheduleError("set operands must be regions of the same function", e.line)
            if e.op == "\\":
                nodes = l.nodes - r.nodes
            elif e.op == "|":
                nodes = l.nodes | r.nodes
            else:
                nodes = l.nodes & r.nodes
            return RegionValue(l.function, nodes)
        if isinstance(e, CallExpr):
            return self.eval_call(e, scope, static_env)
        raise ScheduleError(f"cannot evaluate {e!r}", e.line)

    def _resolve_static(self, arg, static_env, line):
        if isinstance(arg, int):
            return arg
        if isinstance(arg, str):
            if arg not in static_env:
                raise ScheduleError(f"unknown static parameter {arg!r}", line)
            return static_env[arg]
        return [self._resolve_static(a, static_env, line) for a in arg]

    def eval_call(self, e: CallExpr, scope: _Scope, static_env):
        if e.name in self.macros:
            return self.run_macro(self.macros[e.name], e, scope, static_env)
        spec = lookup_pass(e.name)
        if spec is None:
            raise ScheduleError(f"unknown pass {e.name!r}", e.line)
        static_args = [self._resolve_static(a, static_env, e.line)
                       for a in (e.static_args or [])]
        if spec.takes_static and e.static_args is None:
            raise ScheduleError(f"pass {e.name} needs static arguments", e.line)
        if not spec.takes_static and static_args:
            raise ScheduleError(f"pass {e.name} takes no static arguments", e.line)
        args = [self.eval_expr(a, scope, static_env) for a in e.region_args]
        if len(args) != spec.region_arity:
            raise ScheduleError(
                f"pass {e.name} takes {spec.region_arity} region arguments", e.line)
        if spec.unsafe:
            self.log.append(f"line {e.line}: unsafe attribute application {e.name}")
        if any(isinstance(a, Star) for a in args):
            if len(args) != 1:
                raise ScheduleError("* must be the only region argument", e.line)
            combined = PassResult()
            for fname in sorted(self.module.functions):
                fn = self.module.functions[fname]
                region = RegionValue(fname, fn.all_ids())
                try:
                    res = spec.func(self.module, static_args, [region])
                except PassError as err:
                    raise ScheduleError(f"{e.name}: {err}", e.line) from err
                self._remap_env(res)
                combined.merge(res)
            self._after_pass(e, combined)
            return self._result_value(combined)
        regions = [self._coerce_region(a, e.line) if not isinstance(a, FunctionHandle)
                   else self._coerce_region(a, e.line) for a in args]
        try:
            res = spec.func(self.module, static_args, regions)
        except PassError as err:
            raise ScheduleError(f"{e.name}: {err}", e.line) from err
        self._remap_env(res)
        self._after_pass(e, res)
        return self._result_value(res)

    def _after_pass(self, e: CallExpr, res: PassResult):
        for d in res.diagnostics:
            self.log.append(f"line {e.line}: {e.name}: {d}")
        if self.verify_each_pass:
            diags = verify(self.module)
            if diags:
                msgs = "; ".join(str(d) for d in diags[:5])
                raise ScheduleError(f"IR invalid after {e.name}: {msgs}", e.line)
        if self.on_pass is not None:
            self.on_pass(e.line, e.name)

    @staticmethod
    def _result_value(res: PassResult):
        if not res.results:
            return None
        if len(res.results) == 1:
            return res.results[0]
        return tuple(res.results)

    def run_macro(self, macro: MacroDef, call: CallExpr, scope: _Scope, static_env):
        static_args = [self._resolve_static(a, static_env, call.line)
                       for a in (call.static_args or [])]
        if len(static_args) != len(macro.static_params):
            raise ScheduleError(
                f"macro {macro.name} takes {len(macro.static_params)} static arguments",
                call.line)
        if len(call.region_args) != len(macro.region_params):
            raise ScheduleError(
                f"macro {macro.name} takes {len(macro.region_params)} region arguments",
                call.line)
        inner = _Scope(scope)
        for p, a in zip(macro.region_params, call.region_args):
            inner.vars[p] = self.eval_expr(a, scope, static_env)
        inner_static = dict(zip(macro.static_params, static_args))
        self._scopes.append(inner)
        try:
            value = None
            for stmt in macro.body:
                value = self.exec_stmt(stmt, inner, inner_static)
        finally:
            self._scopes.pop()
        return value

    # statements

    def exec_stmt(self, stmt: SStmt, scope: _Scope, static_env):
        if isinstance(stmt, MacroDef):
            if stmt.name in self.macros:
                raise ScheduleError(f"macro {stmt.name} redefined", stmt.line)
            self.macros[stmt.name] = stmt
            return None
        if isinstance(stmt, LetStmt):
            value = self.eval_expr(stmt.expr, scope, static_env)
            values = value if isinstance(value, tuple) else (value,)
            if len(stmt.patterns) == 1 and not isinstance(value, tuple):
                values = (value,)
            if len(values) < len(stmt.patterns):
                raise ScheduleError(
                    f"destructuring {len(stmt.patterns)} names from "
                    f"{len(values)} results", stmt.line)
            bound = []
            for p, v in zip(stmt.patterns, values):
                if p != "_":
                    scope.vars[p] = v
                bound.append(v)
            return tuple(bound) if len(bound) > 1 else bound[0]
        if isinstance(stmt, DeviceStmt):
            v = self.eval_expr(stmt.expr, scope, static_env)
            if isinstance(v, FunctionHandle):
                fname = v.function
            elif isinstance(v, RegionValue):
                fname = v.function
            else:
                raise ScheduleError("device assignment needs a function or region", stmt.line)
            self.module.functions[fname].device = stmt.device
            if self.on_pass is not None:
                self.on_pass(stmt.line, f"device-{stmt.device}")
            return None
        if isinstance(stmt, ExprStmt):
            return self.eval_expr(stmt.expr, scope, static_env)
        raise ScheduleError(f"cannot execute {stmt!r}", stmt.line)

    def run(self, program: ScheduleProgram):
        top = self._scopes[0]
        for stmt in program.statements:
            self.exec_stmt(stmt, top, {})


def run_schedule(module: Module, program: ScheduleProgram, on_pass=None) -> Scheduler:
    sched = Scheduler(module, on_pass=on_pass)
    sched.run(program)
    diags = verify(module)
    if diags:
        raise ScheduleError("module invalid after schedule: " +
                            "; ".join(str(d) for d in diags[:5]))
    return sched
