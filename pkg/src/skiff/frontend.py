"""Parser for the application language.

The surface is a small Rust-flavoured imperative language: functions with
dynamic-constant parameters, scalar and multidimensional array types, ``let``
declarations, ``for``/``while``/``if`` statements, compound assignment, and
``@label`` statement prefixes. There is no I/O, no references, and no
recursion; collections are ordinary values.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .dynconst import DynConst, DcParam, DcLiteral, dc_add, dc_sub, dc_mul, dc_div
from .types import Type, ArrayType, SCALAR_NAMES


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


# -- tokens -----------------------------------------------------------------

KEYWORDS = {"fn", "let", "for", "while", "if", "else", "return", "in", "true", "false"}
SYMBOLS = [
    "#[", "::", "->", "..", "==", "!=", "<=", ">=", "&&", "||", "+=", "*=",
    "(", ")", "{", "}", "[", "]", "<", ">", ",", ";", ":", "@",
    "+", "-", "*", "/", "%", "=", "!",
]


@dataclass
class Token:
    kind: str  # ident, int, float, kw, sym, eof
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c.isdigit():
            j = i
            isfloat = False
            while j < n and (src[j].isdigit() or src[j] == "_"):
                j += 1
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                isfloat = True
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] in "eE" and isfloat:
                j += 1
                if j < n and src[j] in "+-":
                    j += 1
                while j < n and src[j].isdigit():
                    j += 1
            text = src[i:j].replace("_", "")
            toks.append(Token("float" if isfloat else "int", text, line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            toks.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if src.startswith(sym, i):
                toks.append(Token("sym", sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


# -- AST ---------------------------------------------------------------------

@dataclass
class Expr:
    line: int = 0
    col: int = 0


@dataclass
class IntLit(Expr):
    value: int = 0


@dataclass
class FloatLit(Expr):
    value: float = 0.0


@dataclass
class BoolLit(Expr):
    value: bool = False


@dataclass
class Name(Expr):
    ident: str = ""


@dataclass
class IndexExpr(Expr):
    base: Expr = None
    indices: list[Expr] = dc_field(default_factory=list)


@dataclass
class BinaryExpr(Expr):
    op: str = ""
    lhs: Expr = None
    rhs: Expr = None


@dataclass
class UnaryExpr(Expr):
    op: str = ""
    operand: Expr = None


@dataclass
class CastExpr(Expr):
    target: str = ""
    operand: Expr = None


@dataclass
class CallExpr(Expr):
    callee: str = ""
    dc_args: list[DynConst] | None = None  # explicit ::<...> arguments
    args: list[Expr] = dc_field(default_factory=list)


@dataclass
class Stmt:
    labels: list[str] = dc_field(default_factory=list)
    line: int = 0


@dataclass
class LetStmt(Stmt):
    name: str = ""
    ty: Type = None
    init: Expr | None = None


@dataclass
class AssignStmt(Stmt):
    target: str = ""
    indices: list[Expr] = dc_field(default_factory=list)  # empty for plain vars
    op: str = "="  # "=", "+=", "*="
    value: Expr = None


@dataclass
class ForStmt(Stmt):
    var: str = ""
    lo: Expr = None
    hi: Expr = None
    body: list[Stmt] = dc_field(default_factory=list)


@dataclass
class WhileStmt(Stmt):
    cond: Expr = None
    body: list[Stmt] = dc_field(default_factory=list)


@dataclass
class IfStmt(Stmt):
    cond: Expr = None
    then: list[Stmt] = dc_field(default_factory=list)
    orelse: list[Stmt] = dc_field(default_factory=list)


@dataclass
class ReturnStmt(Stmt):
    value: Expr | None = None


@dataclass
class FunctionDecl:
    name: str
    entry: bool
    dc_params: list[str]
    params: list[tuple[str, Type]]
    return_type: Type
    body: list[Stmt]
    line: int


@dataclass
class SourceProgram:
    functions: list[FunctionDecl]


# -- parser -------------------------------------------------------------------

class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.pos = 0
        self.dc_params: list[str] = []

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
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

    def expect(self, text: str) -> Token:
        t = self.peek()
        if not self.at(text):
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.line, t.col)
        return self.next()

    def expect_ident(self) -> Token:
        t = self.peek()
        if t.kind != "ident":
            raise ParseError(f"expected identifier, found {t.text!r}", t.line, t.col)
        return self.next()

    # types and dynamic-constant expressions

    def parse_dc_atom(self) -> DynConst:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return DcLiteral(int(t.text))
        if t.kind == "ident":
            self.next()
            if t.text not in self.dc_params:
                raise ParseError(f"unknown dynamic constant {t.text!r}", t.line, t.col)
            return DcParam(self.dc_params.index(t.text))
        if self.accept("("):
            e = self.parse_dc_expr()
            self.expect(")")
            return e
        raise ParseError(f"expected dynamic-constant expression, found {t.text!r}", t.line, t.col)

    def parse_dc_term(self) -> DynConst:
        e = self.parse_dc_atom()
        while True:
            if self.accept("*"):
                e = dc_mul(e, self.parse_dc_atom())
            elif self.accept("/"):
                e = dc_div(e, self.parse_dc_atom())
            else:
                return e

    def parse_dc_expr(self) -> DynConst:
        e = self.parse_dc_term()
        while True:
            if self.accept("+"):
                e = dc_add(e, self.parse_dc_term())
            elif self.accept("-"):
                e = dc_sub(e, self.parse_dc_term())
            else:
                return e

    def parse_type(self) -> Type:
        t = self.expect_ident()
        if t.text not in SCALAR_NAMES:
            raise ParseError(f"unknown type {t.text!r}", t.line, t.col)
        ty: Type = SCALAR_NAMES[t.text]
        if self.accept("["):
            extents = [self.parse_dc_expr()]
            while self.accept(","):
                extents.append(self.parse_dc_expr())
            self.expect("]")
            ty = ArrayType(ty, tuple(extents))
        return ty

    # expressions

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        e = self.parse_and()
        while self.at("||"):
            t = self.next()
            e = BinaryExpr(t.line, t.col, "or", e, self.parse_and())
        return e

    def parse_and(self) -> Expr:
        e = self.parse_cmp()
        while self.at("&&"):
            t = self.next()
            e = BinaryExpr(t.line, t.col, "and", e, self.parse_cmp())
        return e

    _CMP = {"==": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}

    def parse_cmp(self) -> Expr:
        e = self.parse_add()
        t = self.peek()
        if t.kind == "sym" and t.text in self._CMP:
            self.next()
            e = BinaryExpr(t.line, t.col, self._CMP[t.text], e, self.parse_add())
        return e

    def parse_add(self) -> Expr:
        e = self.parse_mul()
        while True:
            t = self.peek()
            if t.kind == "sym" and t.text in ("+", "-"):
                self.next()
                e = BinaryExpr(t.line, t.col, "add" if t.text == "+" else "sub",
                               e, self.parse_mul())
            else:
                return e

    def parse_mul(self) -> Expr:
        e = self.parse_unary()
        while True:
            t = self.peek()
            if t.kind == "sym" and t.text in ("*", "/", "%"):
                self.next()
                op = {"*": "mul", "/": "div", "%": "rem"}[t.text]
                e = BinaryExpr(t.line, t.col, op, e, self.parse_unary())
            else:
                return e

    def parse_unary(self) -> Expr:
        t = self.peek()
        if t.kind == "sym" and t.text in ("-", "!"):
            self.next()
            op = "neg" if t.text == "-" else "not"
            return UnaryExpr(t.line, t.col, op, self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_atom()
        while self.at("["):
            t = self.next()
            indices = [self.parse_expr()]
            while self.accept(","):
                indices.append(self.parse_expr())
            self.expect("]")
            e = IndexExpr(t.line, t.col, e, indices)
        return e

    def parse_atom(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return IntLit(t.line, t.col, int(t.text))
        if t.kind == "float":
            self.next()
            return FloatLit(t.line, t.col, float(t.text))
        if t.kind == "kw" and t.text in ("true", "false"):
            self.next()
            return BoolLit(t.line, t.col, t.text == "true")
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.next()
            dc_args = None
            if self.at("::"):
                self.next()
                self.expect("<")
                dc_args = [self.parse_dc_expr()]
                while self.accept(","):
                    dc_args.append(self.parse_dc_expr())
                self.expect(">")
            if self.at("("):
                self.next()
                args = []
                if not self.at(")"):
                    args.append(self.parse_expr())
                    while self.accept(","):
                        args.append(self.parse_expr())
                self.expect(")")
                if t.text in SCALAR_NAMES and dc_args is None:
                    if len(args) != 1:
                        raise ParseError("scalar casts take one argument", t.line, t.col)
                    return CastExpr(t.line, t.col, t.text, args[0])
                return CallExpr(t.line, t.col, t.text, dc_args, args)
            if dc_args is not None:
                raise ParseError("dyn-const arguments require a call", t.line, t.col)
            return Name(t.line, t.col, t.text)
        raise ParseError(f"expected expression, found {t.text!r}", t.line, t.col)

    # statements

    def parse_block(self) -> list[Stmt]:
        self.expect("{")
        out: list[Stmt] = []
        while not self.at("}"):
            out.append(self.parse_stmt())
        self.expect("}")
        return out

    def parse_stmt(self) -> Stmt:
        labels: list[str] = []
        while self.at("@"):
            self.next()
            labels.append(self.expect_ident().text)
        t = self.peek()
        if self.accept("let"):
            name = self.expect_ident().text
            self.expect(":")
            ty = self.parse_type()
            init = None
            if self.accept("="):
                init = self.parse_expr()
            self.expect(";")
            return LetStmt(labels, t.line, name, ty, init)
        if self.accept("for"):
            var = self.expect_ident().text
            self.expect("in")
            lo = self.parse_expr()
            self.expect("..")
            hi = self.parse_expr()
            body = self.parse_block()
            return ForStmt(labels, t.line, var, lo, hi, body)
        if self.accept("while"):
            cond = self.parse_expr()
            body = self.parse_block()
            return WhileStmt(labels, t.line, cond, body)
        if self.accept("if"):
            return self.parse_if(labels, t)
        if self.accept("return"):
            value = None
            if not self.at(";"):
                value = self.parse_expr()
            self.expect(";")
            return ReturnStmt(labels, t.line, value)
        # assignment
        target = self.expect_ident().text
        indices: list[Expr] = []
        if self.accept("["):
            indices.append(self.parse_expr())
            while self.accept(","):
                indices.append(self.parse_expr())
            self.expect("]")
        op_tok = self.peek()
        if op_tok.text in ("=", "+=", "*="):
            self.next()
        else:
            raise ParseError(f"expected assignment operator, found {op_tok.text!r}",
                             op_tok.line, op_tok.col)
        value = self.parse_expr()
        self.expect(";")
        return AssignStmt(labels, t.line, target, indices, op_tok.text, value)

    def parse_if(self, labels: list[str], t: Token) -> IfStmt:
        cond = self.parse_expr()
        then = self.parse_block()
        orelse: list[Stmt] = []
        if self.accept("else"):
            if self.at("if"):
                self.next()
                orelse = [self.parse_if([], self.peek())]
            else:
                orelse = self.parse_block()
        return IfStmt(labels, t.line, cond, then, orelse)

    # top level

    def parse_function(self) -> FunctionDecl:
        entry = False
        if self.accept("#["):
            attr = self.expect_ident()
            if attr.text != "entry":
                raise ParseError(f"unknown attribute {attr.text!r}", attr.line, attr.col)
            self.expect("]")
            entry = True
        t = self.expect("fn")
        name = self.expect_ident().text
        self.dc_params = []
        if self.accept("<"):
            self.dc_params.append(self.expect_ident().text)
            while self.accept(","):
                self.dc_params.append(self.expect_ident().text)
            if self.accept(":"):
                suffix = self.expect_ident()
                if suffix.text != "usize":
                    raise ParseError("dynamic constants are usize", suffix.line, suffix.col)
            self.expect(">")
        self.expect("(")
        params: list[tuple[str, Type]] = []
        if not self.at(")"):
            while True:
                pname = self.expect_ident().text
                self.expect(":")
                params.append((pname, self.parse_type()))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("->")
        ret = self.parse_type()
        body = self.parse_block()
        return FunctionDecl(name, entry, list(self.dc_params), params, ret, body, t.line)

    def parse_program(self) -> SourceProgram:
        fns: list[FunctionDecl] = []
        while self.peek().kind != "eof":
            fns.append(self.parse_function())
        return SourceProgram(fns)


def parse(src: str) -> SourceProgram:
    return Parser(src).parse_program()
