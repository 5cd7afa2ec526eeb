"""SSA intermediate representation shared by every analysis stage.

A program is a list of :class:`CompilationUnit`. Each method body is a list of
basic blocks holding :class:`Statement` objects in SSA form: every value is
defined by exactly one statement, and the defining statement dominates every
use. Statement ids are integers unique across the whole program.

Parameters are materialised as ``assign`` statements with ``op="param"`` at
the head of the entry block, so inter-procedural edges have a node to land on.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

import jsonschema
import networkx as nx

from .errors import SchemaViolation, SsaViolation

LOG_LEVELS = ("trace", "debug", "info", "warn", "error")
LOG_RECEIVER = "LOG"
THIS = "this"
EXIT = "<exit>"


class Kind(str, enum.Enum):
    ASSIGN = "assign"
    CONST_STRING = "const-string"
    FIELD_READ = "field-read"
    FIELD_WRITE = "field-write"
    CALL = "call"
    BRANCH = "branch"
    PHI = "phi"
    RETURN = "return"


@dataclass(frozen=True)
class Statement:
    """One IR instruction.

    ``op`` refines ``assign`` (``param``, ``const``, ``copy``, or an operator
    such as ``==``); ``value`` holds a literal, a parameter index, or a
    resolved field reference ``Class.field``. ``text`` is the source rendering
    of the expression the statement computes.
    """

    id: int
    kind: Kind
    uses: tuple[str, ...] = ()
    defs: tuple[str, ...] = ()
    callee: str | None = None
    receiver: str | None = None
    args: tuple[str, ...] = ()
    ret: str | None = None
    cond: str | None = None
    then: str | None = None
    else_: str | None = None
    op: str | None = None
    value: str | None = None
    preds: tuple[str, ...] = ()
    text: str = ""

    @property
    def is_log_call(self) -> bool:
        return self.kind is Kind.CALL and is_log_callee(self.callee)

    @property
    def log_level(self) -> str | None:
        if not self.is_log_call:
            return None
        return self.callee.split(".", 1)[1]  # type: ignore[union-attr]


def is_log_callee(callee: str | None) -> bool:
    if not callee or not callee.startswith(LOG_RECEIVER + "."):
        return False
    return callee.split(".", 1)[1] in LOG_LEVELS


@dataclass
class BasicBlock:
    id: str
    statements: list[Statement] = field(default_factory=list)
    succs: list[str] = field(default_factory=list)


@dataclass
class MethodDecl:
    class_name: str
    name: str
    param_types: tuple[str, ...]
    return_type: str
    params: tuple[str, ...]
    blocks: list[BasicBlock]
    is_public: bool = True
    is_static: bool = False
    # SSA value -> source expression text, used when rendering log variables
    value_names: dict[str, str] = field(default_factory=dict)
    first_line: int = 0
    last_line: int = 0

    @property
    def signature(self) -> str:
        return method_signature(self.class_name, self.name, self.param_types)

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def statements(self) -> Iterator[Statement]:
        for b in self.blocks:
            yield from b.statements

    def block_of(self, stmt_id: int) -> BasicBlock:
        for b in self.blocks:
            if any(s.id == stmt_id for s in b.statements):
                return b
        raise KeyError(stmt_id)


def method_signature(class_name: str, name: str, param_types: Iterable[str]) -> str:
    return f"{class_name}.{name}({','.join(param_types)})"


@dataclass
class FieldDecl:
    name: str
    type: str
    initializer: str | None = None  # constant string initializer, if any
    is_static: bool = False
    literal: str | None = None  # non-string literal initializer (int/bool)


@dataclass
class ClassDecl:
    qualified_name: str
    superclass: str | None = None
    nested_in: str | None = None
    fields: list[FieldDecl] = field(default_factory=list)
    methods: list[MethodDecl] = field(default_factory=list)
    line: int = 0

    def field(self, name: str) -> FieldDecl | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None


@dataclass
class CompilationUnit:
    path: str
    classes: list[ClassDecl]
    line_map: dict[int, tuple[str, int]]
    unresolved: list[str] = field(default_factory=list)

    def methods(self) -> Iterator[MethodDecl]:
        for c in self.classes:
            yield from c.methods


# --- whole-program index -----------------------------------------------------


@dataclass(frozen=True)
class StmtLocation:
    unit: CompilationUnit
    cls: ClassDecl
    method: MethodDecl
    block: BasicBlock
    stmt: Statement


class Program:
    """Read-only lookup tables over a list of compilation units."""

    def __init__(self, units: list[CompilationUnit]):
        self.units = units
        self.classes: dict[str, ClassDecl] = {}
        self.methods: dict[str, MethodDecl] = {}
        self.method_unit: dict[str, CompilationUnit] = {}
        self.locations: dict[int, StmtLocation] = {}
        for u in units:
            for c in u.classes:
                self.classes[c.qualified_name] = c
                for m in c.methods:
                    self.methods[m.signature] = m
                    self.method_unit[m.signature] = u
                    for b in m.blocks:
                        for s in b.statements:
                            self.locations[s.id] = StmtLocation(u, c, m, b, s)

    def stmt(self, sid: int) -> Statement:
        return self.locations[sid].stmt

    def method_of(self, sid: int) -> MethodDecl:
        return self.locations[sid].method

    def line_of(self, sid: int) -> tuple[str, int]:
        loc = self.locations[sid]
        return loc.unit.line_map[sid]

    @cached_property
    def def_sites(self) -> dict[str, dict[str, int]]:
        """method signature -> SSA value -> defining statement id"""
        out: dict[str, dict[str, int]] = {}
        for sig, m in self.methods.items():
            table: dict[str, int] = {}
            for s in m.statements():
                for d in s.defs:
                    table[d] = s.id
            out[sig] = table
        return out

    def def_stmt(self, method: MethodDecl, value: str) -> Statement | None:
        sid = self.def_sites[method.signature].get(value)
        return None if sid is None else self.stmt(sid)

    def superclasses(self, name: str) -> list[str]:
        chain = []
        cur = self.classes.get(name)
        seen = {name}
        while cur is not None and cur.superclass and cur.superclass not in seen:
            chain.append(cur.superclass)
            seen.add(cur.superclass)
            cur = self.classes.get(cur.superclass)
        return chain

    def resolve_field(self, class_name: str, field_name: str) -> str | None:
        for cname in [class_name, *self.superclasses(class_name)]:
            c = self.classes.get(cname)
            if c is not None and c.field(field_name) is not None:
                return cname
        return None

    def field_decl(self, ref: str) -> FieldDecl | None:
        cname, _, fname = ref.rpartition(".")
        c = self.classes.get(cname)
        return None if c is None else c.field(fname)

    def resolve_callee(self, callee: str | None) -> MethodDecl | None:
        return None if callee is None else self.methods.get(callee)


def iter_statements(units: Iterable[CompilationUnit]) -> Iterator[Statement]:
    for u in units:
        for m in u.methods():
            yield from m.statements()


# --- SSA validation ------------------------------------------------------------


def cfg_of(method: MethodDecl) -> nx.DiGraph:
    g = nx.DiGraph()
    for b in method.blocks:
        g.add_node(b.id)
    for b in method.blocks:
        for s in b.succs:
            g.add_edge(b.id, s)
    return g


def dominators(method: MethodDecl) -> dict[str, str]:
    """Immediate dominator of each reachable block (entry maps to itself)."""
    return nx.immediate_dominators(cfg_of(method), method.entry.id)


def dominates(idom: dict[str, str], a: str, b: str) -> bool:
    """True when block ``a`` dominates block ``b`` (reflexive)."""
    cur = b
    while True:
        if cur == a:
            return True
        nxt = idom.get(cur)
        if nxt is None or nxt == cur:
            return False
        cur = nxt


def validate_method(method: MethodDecl) -> None:
    """Check CFG connectivity, single definition and def-dominates-use."""
    where = method.signature
    ids = {b.id for b in method.blocks}
    if len(ids) != len(method.blocks):
        raise SsaViolation(f"{where}: duplicate block id")
    for b in method.blocks:
        for s in b.succs:
            if s not in ids:
                raise SsaViolation(f"{where}: block {b.id} has unknown successor {s}")
        for i, s in enumerate(b.statements):
            if s.kind is Kind.BRANCH:
                if i != len(b.statements) - 1:
                    raise SsaViolation(f"{where}: branch {s.id} is not the last statement of {b.id}")
                if s.cond is None or s.uses != (s.cond,):
                    raise SsaViolation(f"{where}: branch {s.id} must use exactly its condition value")
                targets = [t for t in (s.then, s.else_) if t is not None]
                if any(t not in b.succs for t in targets):
                    raise SsaViolation(f"{where}: branch {s.id} targets a non-successor block")
            if s.kind is Kind.CALL and len(s.defs) > 1:
                raise SsaViolation(f"{where}: call {s.id} defines more than one value")
    g = cfg_of(method)
    reachable = nx.descendants(g, method.entry.id) | {method.entry.id}
    if reachable != ids:
        raise SsaViolation(f"{where}: unreachable blocks {sorted(ids - reachable)}")
    idom = dominators(method)

    def_block: dict[str, tuple[str, int]] = {}
    for b in method.blocks:
        for i, s in enumerate(b.statements):
            for d in s.defs:
                if d in def_block:
                    raise SsaViolation(f"{where}: value {d!r} defined twice")
                def_block[d] = (b.id, i)
    preds = {b.id: list(g.predecessors(b.id)) for b in method.blocks}
    for b in method.blocks:
        for i, s in enumerate(b.statements):
            if s.kind is Kind.PHI:
                if len(s.preds) != len(s.uses):
                    raise SsaViolation(f"{where}: phi {s.id} needs one predecessor per incoming value")
                for value, pred in zip(s.uses, s.preds):
                    if pred not in preds[b.id]:
                        raise SsaViolation(f"{where}: phi {s.id} names non-predecessor {pred}")
                    site = def_block.get(value)
                    if site is None or not dominates(idom, site[0], pred):
                        raise SsaViolation(f"{where}: value {value!r} used before defined (phi {s.id})")
                continue
            for value in s.uses:
                site = def_block.get(value)
                if site is None:
                    raise SsaViolation(f"{where}: value {value!r} used before defined (stmt {s.id})")
                dblock, dindex = site
                if dblock == b.id:
                    if dindex >= i:
                        raise SsaViolation(f"{where}: value {value!r} used before defined (stmt {s.id})")
                elif not dominates(idom, dblock, b.id):
                    raise SsaViolation(f"{where}: value {value!r} used before defined (stmt {s.id})")


def validate_units(units: list[CompilationUnit]) -> None:
    seen: set[int] = set()
    names: set[str] = set()
    for u in units:
        ids = [s.id for m in u.methods() for s in m.statements()]
        if set(ids) != set(u.line_map) or len(ids) != len(set(ids)):
            raise SsaViolation(f"{u.path}: line_map must cover every statement id exactly once")
        dup = seen.intersection(ids)
        if dup:
            raise SsaViolation(f"{u.path}: statement ids {sorted(dup)[:5]} reused across units")
        seen.update(ids)
        for c in u.classes:
            if c.qualified_name in names:
                raise SsaViolation(f"class {c.qualified_name} declared twice")
            names.add(c.qualified_name)
            for m in c.methods:
                validate_method(m)
    classes = {c.qualified_name: c for u in units for c in u.classes}
    for rel in ("superclass", "nested_in"):
        for c in classes.values():
            seen_chain = {c.qualified_name}
            cur = getattr(c, rel)
            while cur is not None and cur in classes:
                if cur in seen_chain:
                    raise SsaViolation(f"cyclic {rel} relation through {c.qualified_name}")
                seen_chain.add(cur)
                cur = getattr(classes[cur], rel)


# --- CIR serialisation ------------------------------------------------------------

_SCHEMA = json.loads(resources.files("conflog").joinpath("schema/cir.json").read_text(encoding="utf-8"))


def _stmt_to_json(s: Statement) -> dict:
    d: dict = {"id": s.id, "kind": s.kind.value, "uses": list(s.uses), "defs": list(s.defs)}
    if s.kind is Kind.CALL:
        d.update(callee=s.callee, receiver=s.receiver, args=list(s.args), ret=s.ret)
    elif s.receiver is not None:
        d["receiver"] = s.receiver
    if s.kind is Kind.BRANCH:
        d.update(cond=s.cond, then=s.then)
        d["else"] = s.else_
    for name in ("op", "value", "text"):
        v = getattr(s, name)
        if v:
            d[name] = v
    if s.preds:
        d["preds"] = list(s.preds)
    return d


def _stmt_from_json(d: dict) -> Statement:
    return Statement(
        id=d["id"],
        kind=Kind(d["kind"]),
        uses=tuple(d.get("uses", ())),
        defs=tuple(d.get("defs", ())),
        callee=d.get("callee"),
        receiver=d.get("receiver"),
        args=tuple(d.get("args", ())),
        ret=d.get("ret"),
        cond=d.get("cond"),
        then=d.get("then"),
        else_=d.get("else"),
        op=d.get("op"),
        value=d.get("value"),
        preds=tuple(d.get("preds", ())),
        text=d.get("text", ""),
    )


def unit_to_json(u: CompilationUnit) -> dict:
    return {
        "path": u.path,
        "classes": [
            {
                "name": c.qualified_name,
                "superclass": c.superclass,
                "nested_in": c.nested_in,
                "line": c.line,
                "fields": [
                    {
                        "name": f.name,
                        "type": f.type,
                        "initializer": f.initializer,
                        "literal": f.literal,
                        "static": f.is_static,
                    }
                    for f in c.fields
                ],
                "methods": [
                    {
                        "name": m.name,
                        "param_types": list(m.param_types),
                        "return_type": m.return_type,
                        "params": list(m.params),
                        "public": m.is_public,
                        "static": m.is_static,
                        "first_line": m.first_line,
                        "last_line": m.last_line,
                        "value_names": dict(sorted(m.value_names.items())),
                        "blocks": [
                            {"id": b.id, "succs": list(b.succs), "statements": [_stmt_to_json(s) for s in b.statements]}
                            for b in m.blocks
                        ],
                    }
                    for m in c.methods
                ],
            }
            for c in u.classes
        ],
        "line_map": {str(k): {"file": f, "line": ln} for k, (f, ln) in sorted(u.line_map.items())},
        "unresolved": list(u.unresolved),
    }


def unit_from_json(d: dict) -> CompilationUnit:
    classes = []
    for c in d["classes"]:
        methods = []
        for m in c.get("methods", []):
            blocks = []
            for b in m["blocks"]:
                stmts = [_stmt_from_json(s) for s in b["statements"]]
                succs = b.get("succs")
                if succs is None:
                    succs = _implied_succs(stmts)
                blocks.append(BasicBlock(b["id"], stmts, list(succs)))
            methods.append(
                MethodDecl(
                    class_name=c["name"],
                    name=m["name"],
                    param_types=tuple(m.get("param_types", ())),
                    return_type=m.get("return_type", "void"),
                    params=tuple(m.get("params", ())),
                    blocks=blocks,
                    is_public=m.get("public", True),
                    is_static=m.get("static", False),
                    value_names=dict(m.get("value_names", {})),
                    first_line=m.get("first_line", 0),
                    last_line=m.get("last_line", 0),
                )
            )
        classes.append(
            ClassDecl(
                qualified_name=c["name"],
                superclass=c.get("superclass"),
                nested_in=c.get("nested_in"),
                fields=[
                    FieldDecl(f["name"], f.get("type", "Object"), f.get("initializer"), f.get("static", False), f.get("literal"))
                    for f in c.get("fields", [])
                ],
                methods=methods,
                line=c.get("line", 0),
            )
        )
    line_map = {int(k): (v["file"], v["line"]) for k, v in d["line_map"].items()}
    return CompilationUnit(d.get("path", ""), classes, line_map, list(d.get("unresolved", [])))


def _implied_succs(stmts: list[Statement]) -> list[str]:
    if stmts and stmts[-1].kind is Kind.BRANCH:
        last = stmts[-1]
        return [t for t in (last.then, last.else_) if t is not None]
    return []


def emit_cir(units: list[CompilationUnit]) -> str:
    return json.dumps({"format": "cir", "version": 1, "units": [unit_to_json(u) for u in units]}, indent=1)


def load_ir(path: str | Path) -> list[CompilationUnit]:
    """Load a CIR document and validate schema, SSA and line map invariants."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"{path}: {exc}") from exc
    return units_from_document(doc)


def units_from_document(doc: dict) -> list[CompilationUnit]:
    # a bare single-unit document (top-level classes + line_map) is accepted too
    if isinstance(doc, dict) and "classes" in doc and "units" not in doc:
        doc = {"format": "cir", "version": 1, "units": [doc]}
    try:
        jsonschema.validate(doc, _SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaViolation(f"at {loc or '<root>'}: {exc.message}") from exc
    units = [unit_from_json(u) for u in doc["units"]]
    validate_units(units)
    return units


def renumber(units: list[CompilationUnit], start: int) -> list[CompilationUnit]:
    """Shift every statement id by ``start`` (used to merge independently parsed units)."""
    out = []
    for u in units:
        classes = []
        for c in u.classes:
            methods = [
                replace(m, blocks=[BasicBlock(b.id, [replace(s, id=s.id + start) for s in b.statements], list(b.succs)) for b in m.blocks])
                for m in c.methods
            ]
            classes.append(replace(c, methods=methods))
        out.append(replace(u, classes=classes, line_map={k + start: v for k, v in u.line_map.items()}))
    return out
