"""Lexer, AST and recursive-descent parser for the ``.mj`` mini language.

The language is a small class-based curly-brace subset::

    class DatanodeManager extends Base {
        static String KEY = "dfs.replication";
        private long interval;

        public void init(Configuration conf) {
            long v = conf.getLong(DFSConfigKeys.INTERVAL_KEY, 30);
            if (v <= 0) {
                v = 30;
            } else {
                LOG.info("interval {}", v);
            }
            this.interval = v;
        }
    }

Supported: classes (single inheritance, nesting), static/instance fields,
methods, local declarations, assignment, ``if``/``else``, ``return``, calls,
field access, string/int/bool/null literals, unary ``!``/``-``, binary
arithmetic, comparison and ``&&``/``||``. There are no loops, ``new``,
exceptions or generics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .errors import SourceSyntaxError

KEYWORDS = {
    "class", "extends", "if", "else", "return", "true", "false", "null", "this",
    "public", "private", "protected", "static", "final", "void",
}
MODIFIERS = {"public", "private", "protected", "static", "final"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>\d+(?:\.\d+)?[lLfFdD]?)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||[-+*/%<>=!(){}\[\];,.])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, string, number, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str, path: str = "<string>") -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SourceSyntaxError(f"unexpected character {text[pos]!r}", path, line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "comment":
            nls = value.count("\n")
            if nls:
                line += nls
                line_start = pos + value.rfind("\n") + 1
        elif kind != "ws":
            if kind == "ident" and value in KEYWORDS:
                kind = "keyword"
            tokens.append(Token(kind, value, line, col))  # type: ignore[arg-type]
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --- AST ---------------------------------------------------------------------


@dataclass
class Node:
    line: int
    col: int


@dataclass
class Literal(Node):
    kind: str  # string, int, bool, null
    value: str  # source text for int/bool/null, unescaped content for strings


@dataclass
class Name(Node):
    id: str


@dataclass
class This(Node):
    pass


@dataclass
class FieldAccess(Node):
    obj: "Expr"
    name: str


@dataclass
class Call(Node):
    obj: "Expr | None"
    name: str
    args: list["Expr"]


@dataclass
class Binary(Node):
    op: str
    left: "Expr"
    right: "Expr"


@dataclass
class Unary(Node):
    op: str
    operand: "Expr"


Expr = Union[Literal, Name, This, FieldAccess, Call, Binary, Unary]


@dataclass
class LocalDecl(Node):
    type: str
    name: str
    init: Expr


@dataclass
class Assign(Node):
    target: Expr  # Name or FieldAccess
    value: Expr


@dataclass
class If(Node):
    cond: Expr
    then: list["Stmt"]
    orelse: list["Stmt"] | None
    end_line: int = 0


@dataclass
class Return(Node):
    value: Expr | None


@dataclass
class ExprStmt(Node):
    expr: Expr


Stmt = Union[LocalDecl, Assign, If, Return, ExprStmt]


@dataclass
class Param:
    type: str
    name: str


@dataclass
class FieldNode(Node):
    name: str
    type: str
    init: Expr | None
    modifiers: frozenset[str]


@dataclass
class MethodNode(Node):
    name: str
    return_type: str
    params: list[Param]
    body: list[Stmt]
    modifiers: frozenset[str]
    end_line: int = 0


@dataclass
class ClassNode(Node):
    name: str
    superclass: str | None
    modifiers: frozenset[str]
    fields: list[FieldNode] = field(default_factory=list)
    methods: list[MethodNode] = field(default_factory=list)
    classes: list["ClassNode"] = field(default_factory=list)
    end_line: int = 0


@dataclass
class SourceFile:
    path: str
    classes: list[ClassNode]


# --- rendering -------------------------------------------------------------------

_PRECEDENCE = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, ">": 4, "<=": 4, ">=": 4, "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}


def quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def render(e: Expr, parent_prec: int = 0) -> str:
    """Canonical source text of an expression."""
    if isinstance(e, Literal):
        return quote(e.value) if e.kind == "string" else e.value
    if isinstance(e, Name):
        return e.id
    if isinstance(e, This):
        return "this"
    if isinstance(e, FieldAccess):
        return f"{render(e.obj, 9)}.{e.name}"
    if isinstance(e, Call):
        args = ", ".join(render(a) for a in e.args)
        head = f"{render(e.obj, 9)}." if e.obj is not None else ""
        return f"{head}{e.name}({args})"
    if isinstance(e, Unary):
        return f"{e.op}{render(e.operand, 8)}"
    if isinstance(e, Binary):
        prec = _PRECEDENCE[e.op]
        text = f"{render(e.left, prec)} {e.op} {render(e.right, prec + 1)}"
        return f"({text})" if prec < parent_prec else text
    raise TypeError(e)


# --- parser ------------------------------------------------------------------------

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\", "'": "'", "r": "\r"}


def _unescape(body: str) -> str:
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)


class Parser:
    def __init__(self, text: str, path: str = "<string>"):
        self.path = path
        self.tokens = tokenize(text, path)
        self.pos = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def error(self, message: str, tok: Token | None = None) -> SourceSyntaxError:
        tok = tok or self.tok
        return SourceSyntaxError(message, self.path, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "keyword")

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            t = self.tok
            self.pos += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of file"
            raise self.error(f"expected {text!r}, found {found!r}")
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of file'!r}")
        t = self.tok
        self.pos += 1
        return t

    # declarations
    def parse_file(self) -> SourceFile:
        classes = []
        while self.tok.kind != "eof":
            classes.append(self.parse_class(self.modifiers()))
        return SourceFile(self.path, classes)

    def modifiers(self) -> frozenset[str]:
        mods = set()
        while self.tok.kind == "keyword" and self.tok.text in MODIFIERS:
            mods.add(self.tok.text)
            self.pos += 1
        return frozenset(mods)

    def parse_type(self) -> str:
        if self.at("void"):
            self.pos += 1
            return "void"
        parts = [self.ident().text]
        while self.at(".") and self.peek().kind == "ident":
            self.pos += 1
            parts.append(self.ident().text)
        name = ".".join(parts)
        if self.at("[") and self.peek().text == "]":
            self.pos += 2
            name += "[]"
        return name

    def parse_class(self, mods: frozenset[str]) -> ClassNode:
        start = self.expect("class")
        name = self.ident().text
        superclass = None
        if self.accept("extends"):
            superclass = self.parse_type()
        self.expect("{")
        node = ClassNode(start.line, start.col, name, superclass, mods)
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error(f"unterminated class {name}")
            member_mods = self.modifiers()
            if self.at("class"):
                node.classes.append(self.parse_class(member_mods))
                continue
            first = self.tok
            type_name = self.parse_type()
            member = self.ident()
            if self.at("("):
                node.methods.append(self.parse_method(first, type_name, member.text, member_mods))
            else:
                init = None
                if self.accept("="):
                    init = self.parse_expr()
                self.expect(";")
                node.fields.append(FieldNode(first.line, first.col, member.text, type_name, init, member_mods))
        node.end_line = self.expect("}").line
        return node

    def parse_method(self, first: Token, rtype: str, name: str, mods: frozenset[str]) -> MethodNode:
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                self.modifiers()  # "final" on parameters
                ptype = self.parse_type()
                params.append(Param(ptype, self.ident().text))
                if not self.accept(","):
                    break
        self.expect(")")
        body, end = self.parse_block()
        return MethodNode(first.line, first.col, name, rtype, params, body, mods, end)

    def parse_block(self) -> tuple[list[Stmt], int]:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            stmts.append(self.parse_stmt())
        return stmts, self.expect("}").line

    # statements
    def parse_stmt(self) -> Stmt:
        t = self.tok
        if self.at("if"):
            return self.parse_if()
        if self.accept("return"):
            value = None if self.at(";") else self.parse_expr()
            self.expect(";")
            return Return(t.line, t.col, value)
        if self._looks_like_decl():
            self.modifiers()
            type_name = self.parse_type()
            name = self.ident().text
            self.expect("=")
            init = self.parse_expr()
            self.expect(";")
            return LocalDecl(t.line, t.col, type_name, name, init)
        expr = self.parse_expr()
        if self.accept("="):
            if not isinstance(expr, (Name, FieldAccess)):
                raise self.error("invalid assignment target", t)
            value = self.parse_expr()
            self.expect(";")
            return Assign(t.line, t.col, expr, value)
        self.expect(";")
        if not isinstance(expr, Call):
            raise self.error("expression statement must be a call", t)
        return ExprStmt(t.line, t.col, expr)

    def _looks_like_decl(self) -> bool:
        i = self.pos
        toks = self.tokens
        while toks[i].kind == "keyword" and toks[i].text == "final":
            i += 1
        if toks[i].kind != "ident":
            return False
        i += 1
        while toks[i].text == "." and toks[i + 1].kind == "ident":
            i += 2
        if toks[i].text == "[" and toks[i + 1].text == "]":
            i += 2
        return toks[i].kind == "ident" and toks[i + 1].text in ("=", ";")

    def parse_if(self) -> If:
        t = self.expect("if")
        self.expect("(")
        cond = self.parse_expr()
        self.expect(")")
        then, end = self.parse_block()
        orelse = None
        if self.accept("else"):
            if self.at("if"):
                nested = self.parse_if()
                orelse, end = [nested], nested.end_line
            else:
                orelse, end = self.parse_block()
        return If(t.line, t.col, cond, then, orelse, end)

    # expressions (precedence climbing)
    def parse_expr(self, min_prec: int = 1) -> Expr:
        left = self.parse_unary()
        while self.tok.kind == "op" and self.tok.text in _PRECEDENCE and _PRECEDENCE[self.tok.text] >= min_prec:
            op = self.tok
            self.pos += 1
            right = self.parse_expr(_PRECEDENCE[op.text] + 1)
            left = Binary(op.line, op.col, op.text, left, right)
        return left

    def parse_unary(self) -> Expr:
        t = self.tok
        if self.accept("!") or self.accept("-"):
            return Unary(t.line, t.col, t.text, self.parse_unary())
        return self.parse_postfix(self.parse_primary())

    def parse_primary(self) -> Expr:
        t = self.tok
        if t.kind == "string":
            self.pos += 1
            return Literal(t.line, t.col, "string", _unescape(t.text[1:-1]))
        if t.kind == "number":
            self.pos += 1
            return Literal(t.line, t.col, "int", t.text)
        if self.accept("true") or self.accept("false"):
            return Literal(t.line, t.col, "bool", t.text)
        if self.accept("null"):
            return Literal(t.line, t.col, "null", "null")
        if self.accept("this"):
            return This(t.line, t.col)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.pos += 1
            if self.at("("):
                return Call(t.line, t.col, None, t.text, self.parse_args())
            return Name(t.line, t.col, t.text)
        raise self.error(f"unexpected {t.text or 'end of file'!r}")

    def parse_postfix(self, e: Expr) -> Expr:
        while self.accept("."):
            name = self.ident()
            if self.at("("):
                e = Call(e.line, e.col, e, name.text, self.parse_args())
            else:
                e = FieldAccess(e.line, e.col, e, name.text)
        return e

    def parse_args(self) -> list[Expr]:
        self.expect("(")
        args = []
        if not self.at(")"):
            while True:
                args.append(self.parse_expr())
                if not self.accept(","):
                    break
        self.expect(")")
        return args


def parse_text(text: str, path: str = "<string>") -> SourceFile:
    return Parser(text, path).parse_file()


def parse_statement(text: str) -> Stmt:
    """Parse one statement (used to validate generated logging lines)."""
    p = Parser(text, "<statement>")
    stmt = p.parse_stmt()
    if p.tok.kind != "eof":
        raise p.error("trailing input after statement")
    return stmt
