"""Lower parsed ``.mj`` sources to SSA IR.

Lowering runs in two passes: every file is parsed first so that class,
field and method tables are program-wide, then each file is lowered with a
shared statement-id counter (files in sorted path order, so ids are
deterministic).

Calls that do not resolve to a program method are kept as opaque external
calls and listed in ``CompilationUnit.unresolved``; they are not errors.
``&&`` and ``||`` are lowered as plain boolean operators without
short-circuit control flow.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from . import syntax as ast
from .errors import SourceSyntaxError
from .ir import (
    LOG_LEVELS,
    LOG_RECEIVER,
    THIS,
    BasicBlock,
    ClassDecl,
    CompilationUnit,
    FieldDecl,
    Kind,
    MethodDecl,
    Statement,
    method_signature,
    validate_units,
)

SOURCE_SUFFIX = ".mj"
PRIMITIVES = {"int", "long", "boolean", "String", "float", "double", "void", "Object"}


# --- program-wide symbol tables ------------------------------------------------


@dataclass
class MethodInfo:
    cls: str
    name: str
    param_types: tuple[str, ...]
    return_type: str
    is_static: bool

    @property
    def signature(self) -> str:
        return method_signature(self.cls, self.name, self.param_types)


@dataclass
class ClassInfo:
    name: str
    node: ast.ClassNode
    path: str
    outer: str | None
    superclass: str | None = None
    fields: dict[str, ast.FieldNode] = field(default_factory=dict)
    methods: list[MethodInfo] = field(default_factory=list)


class SymbolTable:
    def __init__(self, files: list[ast.SourceFile]):
        self.classes: dict[str, ClassInfo] = {}
        for f in files:
            for c in f.classes:
                self._collect(c, None, f.path)
        for info in self.classes.values():
            if info.node.superclass:
                sup = self.resolve_class(info.node.superclass, info.outer or info.name)
                if sup is None:
                    raise SourceSyntaxError(
                        f"unknown superclass {info.node.superclass!r}", info.path, info.node.line, info.node.col
                    )
                info.superclass = sup
        for info in self.classes.values():
            for m in info.node.methods:
                ptypes = tuple(self.resolve_type(p.type, info.name) for p in m.params)
                info.methods.append(
                    MethodInfo(info.name, m.name, ptypes, self.resolve_type(m.return_type, info.name), "static" in m.modifiers)
                )
            for ms in _duplicates(mi.signature for mi in info.methods):
                raise SourceSyntaxError(f"method {ms} declared twice", info.path, info.node.line, info.node.col)
        self._check_acyclic()

    def _collect(self, node: ast.ClassNode, outer: str | None, path: str) -> None:
        name = f"{outer}.{node.name}" if outer else node.name
        if name in self.classes:
            raise SourceSyntaxError(f"class {name} declared twice", path, node.line, node.col)
        info = ClassInfo(name, node, path, outer)
        for f in node.fields:
            if f.name in info.fields:
                raise SourceSyntaxError(f"field {f.name} declared twice", path, f.line, f.col)
            info.fields[f.name] = f
        self.classes[name] = info
        for inner in node.classes:
            self._collect(inner, name, path)

    def _check_acyclic(self) -> None:
        for info in self.classes.values():
            seen = {info.name}
            cur = info.superclass
            while cur is not None:
                if cur in seen:
                    raise SourceSyntaxError(f"cyclic inheritance through {info.name}", info.path, info.node.line, info.node.col)
                seen.add(cur)
                cur = self.classes[cur].superclass

    def resolve_class(self, name: str, context: str | None) -> str | None:
        """Resolve a (possibly dotted) class name seen inside class ``context``."""
        scope = context
        while scope is not None:
            candidate = f"{scope}.{name}"
            if candidate in self.classes:
                return candidate
            scope = self.classes[scope].outer if scope in self.classes else None
        return name if name in self.classes else None

    def resolve_type(self, name: str, context: str | None) -> str:
        if name in PRIMITIVES:
            return name
        return self.resolve_class(name, context) or name

    def chain(self, cls: str) -> list[str]:
        out = []
        cur: str | None = cls
        while cur is not None and cur in self.classes:
            out.append(cur)
            cur = self.classes[cur].superclass
        return out

    def find_field(self, cls: str, name: str) -> tuple[str, ast.FieldNode] | None:
        for c in self.chain(cls):
            f = self.classes[c].fields.get(name)
            if f is not None:
                return c, f
        return None

    def find_method(self, cls: str, name: str, argc: int) -> MethodInfo | None:
        for c in self.chain(cls):
            for m in self.classes[c].methods:
                if m.name == name and len(m.param_types) == argc:
                    return m
        return None

    def enclosing(self, cls: str) -> list[str]:
        out = []
        cur: str | None = cls
        while cur is not None:
            out.append(cur)
            cur = self.classes[cur].outer
        return out


def _duplicates(items):
    seen = set()
    for i in items:
        if i in seen:
            yield i
        seen.add(i)


# --- method lowering ---------------------------------------------------------------


@dataclass(frozen=True)
class Val:
    """A lowered expression: an SSA value with its static type."""

    name: str
    type: str


@dataclass(frozen=True)
class ClassRef:
    name: str
    external: bool = False


@dataclass(frozen=True)
class LoggerRef:
    pass


class MethodLowerer:
    def __init__(self, symbols: SymbolTable, cls: str, node: ast.MethodNode, path: str, ids: itertools.count, unresolved: list[str]):
        self.symbols = symbols
        self.cls = cls
        self.node = node
        self.path = path
        self.ids = ids
        self.unresolved = unresolved
        self.blocks: list[BasicBlock] = []
        self.block_counter = itertools.count()
        self.versions: dict[str, int] = {}
        self.temps = itertools.count(1)
        self.value_names: dict[str, str] = {}
        self.line_map: dict[int, tuple[str, int]] = {}
        self.current: BasicBlock | None = None
        self.is_static = "static" in node.modifiers

    def error(self, message: str, n: ast.Node) -> SourceSyntaxError:
        return SourceSyntaxError(message, self.path, n.line, n.col)

    def new_block(self) -> BasicBlock:
        b = BasicBlock(f"b{next(self.block_counter)}")
        self.blocks.append(b)
        return b

    def fresh(self, base: str | None) -> str:
        if base is None:
            return f"t{next(self.temps)}"
        k = self.versions.get(base, 0) + 1
        self.versions[base] = k
        return f"{base}#{k}"

    def emit(self, line: int, kind: Kind, **kw) -> Statement:
        if self.current is None:
            raise SourceSyntaxError("unreachable statement", self.path, line, 0)
        s = Statement(next(self.ids), kind, **kw)
        self.current.statements.append(s)
        self.line_map[s.id] = (self.path, line)
        return s

    def lower(self) -> MethodDecl:
        node = self.node
        self.current = self.new_block()
        env: dict[str, Val] = {}
        params = []
        ptypes = []
        for i, p in enumerate(node.params):
            if p.name in env:
                raise self.error(f"duplicate parameter {p.name}", node)
            ptype = self.symbols.resolve_type(p.type, self.cls)
            v = self.fresh(p.name)
            self.emit(node.line, Kind.ASSIGN, defs=(v,), op="param", value=str(i), text=p.name)
            self.value_names[v] = p.name
            env[p.name] = Val(v, ptype)
            params.append(v)
            ptypes.append(ptype)
        self.lower_body(node.body, env)
        return MethodDecl(
            class_name=self.cls,
            name=node.name,
            param_types=tuple(ptypes),
            return_type=self.symbols.resolve_type(node.return_type, self.cls),
            params=tuple(params),
            blocks=self.blocks,
            is_public="public" in node.modifiers,
            is_static=self.is_static,
            value_names=self.value_names,
            first_line=node.line,
            last_line=node.end_line,
        )

    # statements
    def lower_body(self, stmts: list[ast.Stmt], env: dict[str, Val]) -> None:
        for st in stmts:
            if self.current is None:
                raise self.error("unreachable statement", st)
            self.lower_stmt(st, env)

    def lower_stmt(self, st: ast.Stmt, env: dict[str, Val]) -> None:
        if isinstance(st, ast.LocalDecl):
            if st.name in env:
                raise self.error(f"variable {st.name} already declared", st)
            v = self.lower_expr(st.init, env, target=st.name)
            env[st.name] = Val(v.name, self.symbols.resolve_type(st.type, self.cls))
        elif isinstance(st, ast.Assign):
            self.lower_assign(st, env)
        elif isinstance(st, ast.ExprStmt):
            self.lower_expr(st.expr, env)
        elif isinstance(st, ast.Return):
            uses: tuple[str, ...] = ()
            if st.value is not None:
                uses = (self.lower_expr(st.value, env).name,)
            text = "return" + (" " + ast.render(st.value) if st.value is not None else "")
            self.emit(st.line, Kind.RETURN, uses=uses, text=text)
            self.current = None
        elif isinstance(st, ast.If):
            self.lower_if(st, env)
        else:  # pragma: no cover - parser produces nothing else
            raise TypeError(st)

    def lower_assign(self, st: ast.Assign, env: dict[str, Val]) -> None:
        target = st.target
        if isinstance(target, ast.Name) and target.id in env:
            v = self.lower_expr(st.value, env, target=target.id)
            env[target.id] = Val(v.name, env[target.id].type)
            return
        ref = self.field_target(target, env)
        value = self.lower_expr(st.value, env)
        owner, fname, receiver = ref
        uses = (value.name,) if receiver in (None, THIS) else (receiver, value.name)
        self.emit(
            st.line,
            Kind.FIELD_WRITE,
            uses=uses,
            receiver=receiver,
            value=f"{owner}.{fname}",
            text=f"{ast.render(target)} = {ast.render(st.value)}",
        )

    def field_target(self, target: ast.Expr, env: dict[str, Val]) -> tuple[str, str, str | None]:
        if isinstance(target, ast.Name):
            found = self.lookup_field(target.id)
            if found is None:
                raise self.error(f"unknown variable {target.id!r}", target)
            owner, fnode = found
            return owner, target.id, None if "static" in fnode.modifiers else THIS
        assert isinstance(target, ast.FieldAccess)
        obj = self.lower_operand(target.obj, env)
        if isinstance(obj, ClassRef):
            found = None if obj.external else self.symbols.find_field(obj.name, target.name)
            owner = found[0] if found else obj.name
            return owner, target.name, None
        if isinstance(obj, LoggerRef):
            raise self.error("cannot assign to LOG", target)
        if obj == "this":
            found = self.symbols.find_field(self.cls, target.name)
            if found is None:
                raise self.error(f"unknown field {target.name!r}", target)
            return found[0], target.name, THIS
        found = self.symbols.find_field(obj.type, target.name) if obj.type in self.symbols.classes else None
        owner = found[0] if found else obj.type
        return owner, target.name, obj.name

    def lower_if(self, st: ast.If, env: dict[str, Val]) -> None:
        cond = self.lower_expr(st.cond, env)
        head = self.current
        assert head is not None
        then_block = self.new_block()
        else_block = self.new_block() if st.orelse is not None else None
        join = BasicBlock(f"b{next(self.block_counter)}")
        self.emit(
            st.line,
            Kind.BRANCH,
            uses=(cond.name,),
            cond=cond.name,
            then=then_block.id,
            else_=else_block.id if else_block else None,
            text=ast.render(st.cond),
        )
        head.succs = [then_block.id, else_block.id if else_block else join.id]

        arms: list[tuple[BasicBlock, dict[str, Val]]] = []
        if else_block is None:
            arms.append((head, env))
        for block, body in ((then_block, st.then), (else_block, st.orelse)):
            if block is None:
                continue
            self.current = block
            arm_env = dict(env)
            self.lower_body(body or [], arm_env)
            if self.current is not None:
                self.current.succs.append(join.id)
                arms.append((self.current, arm_env))
        if not arms:
            self.current = None
            return
        self.blocks.append(join)
        self.current = join
        for name in sorted(env):
            incoming = [arm_env[name] for _, arm_env in arms]
            if all(v.name == incoming[0].name for v in incoming):
                env[name] = incoming[0]
                continue
            v = self.fresh(name)
            self.emit(
                st.line,
                Kind.PHI,
                uses=tuple(i.name for i in incoming),
                defs=(v,),
                preds=tuple(b.id for b, _ in arms),
                text=name,
            )
            self.value_names[v] = name
            env[name] = Val(v, env[name].type)
        if len(arms) == 1:
            # single surviving arm: its local view of outer variables wins
            env.update({k: arms[0][1][k] for k in env})

    # expressions
    def lookup_field(self, name: str) -> tuple[str, ast.FieldNode] | None:
        for c in self.symbols.enclosing(self.cls):
            found = self.symbols.find_field(c, name)
            if found is not None:
                return found
        return None

    def lower_operand(self, e: ast.Expr, env: dict[str, Val]):
        """Lower an expression that may also denote a class or the logger."""
        if isinstance(e, ast.This):
            return "this"
        if isinstance(e, ast.Name) and e.id not in env and self.lookup_field(e.id) is None:
            resolved = self.symbols.resolve_class(e.id, self.cls)
            if resolved is not None:
                return ClassRef(resolved)
            if e.id == LOG_RECEIVER:
                return LoggerRef()
            if e.id[:1].isupper():
                return ClassRef(e.id, external=True)
            raise self.error(f"unknown variable {e.id!r}", e)
        return self.lower_expr(e, env)

    def lower_expr(self, e: ast.Expr, env: dict[str, Val], target: str | None = None) -> Val:
        text = ast.render(e)
        if isinstance(e, ast.Name) and e.id in env:
            if target is None:
                return env[e.id]
            v = self.fresh(target)
            self.emit(e.line, Kind.ASSIGN, uses=(env[e.id].name,), defs=(v,), op="copy", text=text)
            self.value_names[v] = target
            return Val(v, env[e.id].type)
        out = self.fresh(target)
        self.value_names[out] = target if target is not None else text
        if isinstance(e, ast.Literal):
            if e.kind == "string":
                self.emit(e.line, Kind.CONST_STRING, defs=(out,), value=e.value, text=text)
                return Val(out, "String")
            self.emit(e.line, Kind.ASSIGN, defs=(out,), op="const", value=e.value, text=text)
            return Val(out, {"int": "int", "bool": "boolean", "null": "null"}[e.kind])
        if isinstance(e, ast.Name):
            found = self.lookup_field(e.id)
            if found is None:
                raise self.error(f"unknown variable {e.id!r}", e)
            owner, fnode = found
            receiver = None if "static" in fnode.modifiers else THIS
            self.emit(e.line, Kind.FIELD_READ, defs=(out,), receiver=receiver, value=f"{owner}.{e.id}", text=text)
            return Val(out, self.symbols.resolve_type(fnode.type, owner))
        if isinstance(e, ast.This):
            raise self.error("'this' is not a value here", e)
        if isinstance(e, ast.FieldAccess):
            obj = self.lower_operand(e.obj, env)
            if isinstance(obj, LoggerRef):
                raise self.error("LOG has no fields", e)
            if isinstance(obj, ClassRef):
                found = None if obj.external else self.symbols.find_field(obj.name, e.name)
                owner = found[0] if found else obj.name
                ftype = self.symbols.resolve_type(found[1].type, owner) if found else "?"
                self.emit(e.line, Kind.FIELD_READ, defs=(out,), value=f"{owner}.{e.name}", text=text)
                return Val(out, ftype)
            if obj == "this":
                found = self.symbols.find_field(self.cls, e.name)
                if found is None:
                    raise self.error(f"unknown field {e.name!r}", e)
                self.emit(e.line, Kind.FIELD_READ, defs=(out,), receiver=THIS, value=f"{found[0]}.{e.name}", text=text)
                return Val(out, self.symbols.resolve_type(found[1].type, found[0]))
            found = self.symbols.find_field(obj.type, e.name) if obj.type in self.symbols.classes else None
            owner = found[0] if found else obj.type
            ftype = self.symbols.resolve_type(found[1].type, owner) if found else "?"
            self.emit(e.line, Kind.FIELD_READ, uses=(obj.name,), defs=(out,), receiver=obj.name, value=f"{owner}.{e.name}", text=text)
            return Val(out, ftype)
        if isinstance(e, ast.Unary):
            operand = self.lower_expr(e.operand, env)
            self.emit(e.line, Kind.ASSIGN, uses=(operand.name,), defs=(out,), op=e.op, text=text)
            return Val(out, "boolean" if e.op == "!" else operand.type)
        if isinstance(e, ast.Binary):
            left = self.lower_expr(e.left, env)
            right = self.lower_expr(e.right, env)
            self.emit(e.line, Kind.ASSIGN, uses=(left.name, right.name), defs=(out,), op=e.op, text=text)
            if e.op in ("==", "!=", "<", ">", "<=", ">=", "&&", "||"):
                rtype = "boolean"
            elif e.op == "+" and "String" in (left.type, right.type):
                rtype = "String"
            else:
                rtype = left.type
            return Val(out, rtype)
        if isinstance(e, ast.Call):
            return self.lower_call(e, env, out, text)
        raise TypeError(e)  # pragma: no cover

    def lower_call(self, e: ast.Call, env: dict[str, Val], out: str, text: str) -> Val:
        receiver_value: str | None = None
        receiver: str | None = None
        info: MethodInfo | None = None
        ext_owner = "?"
        if e.obj is None:
            for c in self.symbols.enclosing(self.cls):
                info = self.symbols.find_method(c, e.name, len(e.args))
                if info is not None:
                    break
            receiver = None if info is None or info.is_static else THIS
        else:
            obj = self.lower_operand(e.obj, env)
            if isinstance(obj, LoggerRef):
                if e.name not in LOG_LEVELS:
                    raise self.error(f"unknown log level {e.name!r}", e)
                if not e.args:
                    raise self.error("logging call needs a message template", e)
                self.value_names.pop(out, None)
                args = tuple(self.lower_expr(a, env).name for a in e.args)
                self.emit(e.line, Kind.CALL, uses=args, callee=f"{LOG_RECEIVER}.{e.name}", args=args, text=text)
                return Val("", "void")
            if isinstance(obj, ClassRef):
                ext_owner = obj.name
                if not obj.external:
                    info = self.symbols.find_method(obj.name, e.name, len(e.args))
            elif obj == "this":
                info = self.symbols.find_method(self.cls, e.name, len(e.args))
                receiver = THIS
            else:
                receiver_value = obj.name
                receiver = obj.name
                ext_owner = obj.type
                if obj.type in self.symbols.classes:
                    info = self.symbols.find_method(obj.type, e.name, len(e.args))
        args = tuple(self.lower_expr(a, env).name for a in e.args)
        uses = ((receiver_value,) if receiver_value else ()) + args
        if info is not None:
            callee = info.signature
            rtype = info.return_type
        else:
            callee = f"{ext_owner}.{e.name}/{len(e.args)}"
            rtype = _external_return_type(e.name, ext_owner)
            self.unresolved.append(f"{self.path}:{e.line}: {callee}")
        ret = None if rtype == "void" else out
        self.emit(
            e.line,
            Kind.CALL,
            uses=uses,
            defs=(ret,) if ret else (),
            callee=callee,
            receiver=receiver,
            args=args,
            ret=ret,
            text=text,
        )
        if ret is None:
            self.value_names.pop(out, None)
        return Val(ret or "", rtype)


_BOOLEAN_METHODS = {"equals", "equalsIgnoreCase", "isEmpty", "contains", "startsWith", "endsWith", "parseBoolean", "isAlive"}
_STRING_METHODS = {"trim", "toLowerCase", "toUpperCase", "valueOf", "toString", "get", "getProperty", "substring", "getName"}


def _external_return_type(name: str, owner: str) -> str:
    if name in _BOOLEAN_METHODS or name.startswith("is"):
        return "boolean"
    if name in _STRING_METHODS:
        return "String"
    if name in ("parseInt", "length", "size", "max", "min", "abs", "parseLong"):
        return "int"
    return "?"


# --- entry points ------------------------------------------------------------------


def lower_files(files: list[ast.SourceFile], start_id: int = 1) -> list[CompilationUnit]:
    symbols = SymbolTable(files)
    ids = itertools.count(start_id)
    units = []
    for f in files:
        classes: list[ClassDecl] = []
        line_map: dict[int, tuple[str, int]] = {}
        unresolved: list[str] = []

        def visit(node: ast.ClassNode, outer: str | None) -> None:
            name = f"{outer}.{node.name}" if outer else node.name
            info = symbols.classes[name]
            fields = []
            for fnode in node.fields:
                initializer = literal = None
                if fnode.init is not None:
                    if isinstance(fnode.init, ast.Literal):
                        if fnode.init.kind == "string":
                            initializer = fnode.init.value
                        else:
                            literal = fnode.init.value
                    elif isinstance(fnode.init, ast.Unary) and isinstance(fnode.init.operand, ast.Literal):
                        literal = ast.render(fnode.init)
                    else:
                        raise SourceSyntaxError("field initializers must be literals", f.path, fnode.line, fnode.col)
                fields.append(
                    FieldDecl(fnode.name, symbols.resolve_type(fnode.type, name), initializer, "static" in fnode.modifiers, literal)
                )
            methods = []
            for mnode in node.methods:
                lowerer = MethodLowerer(symbols, name, mnode, f.path, ids, unresolved)
                methods.append(lowerer.lower())
                line_map.update(lowerer.line_map)
            classes.append(ClassDecl(name, info.superclass, outer, fields, methods, node.line))
            for inner in node.classes:
                visit(inner, name)

        for c in f.classes:
            visit(c, None)
        units.append(CompilationUnit(f.path, classes, line_map, unresolved))
    return units


def parse_texts(sources: dict[str, str], start_id: int = 1) -> list[CompilationUnit]:
    """Parse in-memory sources keyed by (relative) path."""
    files = [ast.parse_text(sources[p], p) for p in sorted(sources)]
    units = lower_files(files, start_id)
    validate_units(units)
    return units


def read_sources(directory: str | Path) -> dict[str, str]:
    root = Path(directory)
    if not root.is_dir():
        raise SourceSyntaxError("source directory does not exist", str(root))
    return {
        p.relative_to(root).as_posix(): p.read_text(encoding="utf-8")
        for p in sorted(root.rglob(f"*{SOURCE_SUFFIX}"))
    }


def parse_source(directory: str | Path) -> list[CompilationUnit]:
    """Parse every ``.mj`` file below ``directory`` into compilation units."""
    return parse_texts(read_sources(directory))
