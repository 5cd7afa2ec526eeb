"""A small interpreter over the SSA IR, used to replay a program under a
given configuration and capture the log lines it prints.

Only what the mini-language can express is supported: straight-line code,
``if``/``else`` with phis, calls, fields, and a handful of library builtins.
``Properties``-typed fields hold the configuration map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConflogError
from .ir import THIS, Kind, MethodDecl, Program, Statement

MAX_STEPS = 200_000


class ReplayError(ConflogError):
    code = "replay.Error"


class JavaException(ReplayError):
    """A runtime exception raised by the replayed program (e.g. a failed parse)."""

    code = "replay.Exception"


@dataclass(eq=False)
class Obj:
    cls: str
    fields: dict[str, object] = field(default_factory=dict)


def java_str(v: object) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Obj):
        return f"{v.cls}@{id(v) & 0xFFFF:x}"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}={java_str(x)}" for k, x in v.items()) + "}"
    return str(v)


def format_template(template: str, args: list[object]) -> str:
    out, k, i = [], 0, 0
    while i < len(template):
        if template.startswith("{}", i) and k < len(args):
            out.append(java_str(args[k]))
            k += 1
            i += 2
        else:
            out.append(template[i])
            i += 1
    return "".join(out)


def _parse_int(s: object) -> int:
    try:
        return int(str(s).strip())
    except (TypeError, ValueError):
        raise JavaException(f"NumberFormatException: For input string: \"{java_str(s)}\"") from None


_STATIC = {
    "Boolean.parseBoolean": lambda s: s is not None and str(s).lower() == "true",
    "Integer.parseInt": _parse_int,
    "Long.parseLong": _parse_int,
    "Math.max": max,
    "Math.min": min,
    "Math.abs": abs,
    "String.valueOf": java_str,
    "Integer.valueOf": _parse_int,
    "Long.valueOf": _parse_int,
}


def _call_builtin(name: str, owner: str, recv: object, args: list[object], has_recv: bool) -> object:
    if not has_recv:
        fn = _STATIC.get(f"{owner}.{name}")
        return fn(*args) if fn is not None else None
    if recv is None:
        raise JavaException(f"NullPointerException: {name}() on null")
    if isinstance(recv, dict):
        if name in ("get", "getProperty"):
            v = recv.get(args[0])
            return args[1] if v is None and len(args) > 1 else v
        if name in ("put", "set", "setProperty"):
            old = recv.get(args[0])
            recv[args[0]] = args[1]
            return old
        if name == "containsKey":
            return args[0] in recv
        if name == "size":
            return len(recv)
        return None
    if isinstance(recv, str):
        table = {
            "equals": lambda o: recv == o,
            "equalsIgnoreCase": lambda o: isinstance(o, str) and recv.lower() == o.lower(),
            "isEmpty": lambda: recv == "",
            "trim": lambda: recv.strip(),
            "toLowerCase": lambda: recv.lower(),
            "toUpperCase": lambda: recv.upper(),
            "contains": lambda o: str(o) in recv,
            "startsWith": lambda o: recv.startswith(str(o)),
            "endsWith": lambda o: recv.endswith(str(o)),
            "length": lambda: len(recv),
            "toString": lambda: recv,
        }
        fn = table.get(name)
        return fn(*args) if fn is not None else None
    if name == "equals":
        return recv == args[0]
    if name == "toString":
        return java_str(recv)
    return None


def _binary(op: str, a: object, b: object) -> object:
    if op == "+":
        if isinstance(a, str) or isinstance(b, str):
            return java_str(a) + java_str(b)
        return a + b
    if op == "==":
        return a is b if isinstance(a, Obj) or isinstance(b, Obj) else a == b
    if op == "!=":
        return not _binary("==", a, b)
    if op == "&&":
        return bool(a) and bool(b)
    if op == "||":
        return bool(a) or bool(b)
    if a is None or b is None:
        raise JavaException(f"NullPointerException: operand of {op} is null")
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op in ("/", "%"):
        if b == 0:
            raise JavaException("ArithmeticException: / by zero")
        q = abs(a) // abs(b) * (1 if (a >= 0) == (b >= 0) else -1)
        return q if op == "/" else a - q * b
    return {"<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]


def _literal(text: str | None) -> object:
    if text is None or text == "null":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        return text


_DEFAULTS = {"int": 0, "long": 0, "short": 0, "byte": 0, "boolean": False, "double": 0, "float": 0}


class Interpreter:
    def __init__(self, program: Program, config: dict[str, str] | None = None):
        self.program = program
        self.config: dict[str, object] = dict(config or {})
        self.logs: list[str] = []
        self.steps = 0
        self.statics: dict[str, object] = {}
        for cname, cls in program.classes.items():
            for f in cls.fields:
                if f.is_static:
                    self.statics[f"{cname}.{f.name}"] = self._initial(f)

    def _initial(self, f) -> object:
        if f.initializer is not None:
            return f.initializer
        if f.literal is not None:
            return _literal(f.literal)
        if f.type == "Properties":
            return self.config
        return _DEFAULTS.get(f.type)

    def new(self, cls_name: str, depth: int = 0) -> Obj:
        """Instantiate a class; Properties fields share the run configuration."""
        obj = Obj(cls_name)
        for c in [cls_name, *self.program.superclasses(cls_name)]:
            decl = self.program.classes.get(c)
            if decl is None:
                continue
            for f in decl.fields:
                if f.is_static or f.name in obj.fields:
                    continue
                if f.type in self.program.classes and depth < 3:
                    obj.fields[f.name] = self.new(f.type, depth + 1)
                else:
                    obj.fields[f.name] = self._initial(f)
        return obj

    def argument(self, type_name: str, given: object = None) -> object:
        if given is not None:
            return given
        if type_name in self.program.classes:
            return self.new(type_name)
        if type_name == "Properties":
            return self.config
        return _DEFAULTS.get(type_name)

    # execution
    def invoke(self, method: MethodDecl, this: object, args: list[object]) -> object:
        env: dict[str, object] = {}
        blocks = {b.id: b for b in method.blocks}
        block, prev = method.entry, None
        while True:
            next_block = None
            for s in block.statements:
                self.steps += 1
                if self.steps > MAX_STEPS:
                    raise ReplayError("step budget exhausted")
                if s.kind is Kind.PHI:
                    env[s.defs[0]] = env[s.uses[s.preds.index(prev)]]
                elif s.kind is Kind.RETURN:
                    return env[s.uses[0]] if s.uses else None
                elif s.kind is Kind.BRANCH:
                    taken = s.then if env[s.cond] else s.else_
                    next_block = taken if taken is not None else block.succs[-1]
                else:
                    self.execute(s, env, this, args)
            if next_block is None:
                if not block.succs:
                    return None
                next_block = block.succs[0]
            prev, block = block.id, blocks[next_block]

    def _field_owner(self, s: Statement, env: dict, this: object):
        if s.receiver is None:
            return None
        return this if s.receiver == THIS else env[s.receiver]

    def execute(self, s: Statement, env: dict, this: object, args: list[object]) -> None:
        if s.kind is Kind.CONST_STRING:
            env[s.defs[0]] = s.value
        elif s.kind is Kind.ASSIGN:
            if s.op == "param":
                env[s.defs[0]] = args[int(s.value)]
            elif s.op == "const":
                env[s.defs[0]] = _literal(s.value)
            elif s.op == "copy":
                env[s.defs[0]] = env[s.uses[0]]
            elif s.op == "!":
                env[s.defs[0]] = not env[s.uses[0]]
            elif s.op == "-" and len(s.uses) == 1:
                env[s.defs[0]] = -env[s.uses[0]]
            else:
                env[s.defs[0]] = _binary(s.op, env[s.uses[0]], env[s.uses[1]])
        elif s.kind is Kind.FIELD_READ:
            owner = self._field_owner(s, env, this)
            name = s.value.rpartition(".")[2]
            if owner is None and s.receiver is None:
                env[s.defs[0]] = self.statics.get(s.value)
            elif isinstance(owner, Obj):
                env[s.defs[0]] = owner.fields.get(name)
            else:
                raise JavaException(f"NullPointerException: read of {s.value}")
        elif s.kind is Kind.FIELD_WRITE:
            owner = self._field_owner(s, env, this)
            value = env[s.uses[-1]]
            if s.receiver is None:
                self.statics[s.value] = value
            elif isinstance(owner, Obj):
                owner.fields[s.value.rpartition(".")[2]] = value
            else:
                raise JavaException(f"NullPointerException: write of {s.value}")
        elif s.kind is Kind.CALL:
            result = self.call(s, env, this)
            if s.ret:
                env[s.ret] = result

    def call(self, s: Statement, env: dict, this: object) -> object:
        values = [env[a] for a in s.args]
        if s.is_log_call:
            template = values[0] if isinstance(values[0], str) else java_str(values[0])
            self.logs.append(f"{s.log_level.upper()} {format_template(template, values[1:])}")
            return None
        target = self.program.resolve_callee(s.callee)
        if s.receiver == THIS:
            recv, has_recv = this, True
        elif s.receiver is not None:
            recv, has_recv = env[s.receiver], True
        else:
            recv, has_recv = None, False
        if target is not None:
            if has_recv and recv is None and not target.is_static:
                raise JavaException(f"NullPointerException: {target.signature} on null")
            return self.invoke(target, recv if has_recv else None, values)
        owner, _, name = s.callee.rpartition("/")[0].rpartition(".")
        return _call_builtin(name, owner, recv, values, has_recv)


@dataclass
class ReplayResult:
    logs: list[str]
    returned: object = None
    exception: str | None = None


def run(program: Program, entry: str, config: dict[str, str] | None = None, args: list | None = None) -> ReplayResult:
    """Run ``entry`` (a method signature) on a fresh receiver; exceptions are captured."""
    method = program.methods.get(entry)
    if method is None:
        raise ReplayError(f"unknown entry method {entry}")
    interp = Interpreter(program, config)
    given = list(args or [])
    values = [interp.argument(t, given[i] if i < len(given) else None) for i, t in enumerate(method.param_types)]
    this = None if method.is_static else interp.new(method.class_name)
    try:
        returned = interp.invoke(method, this, values)
    except JavaException as exc:
        return ReplayResult(interp.logs, None, str(exc))
    return ReplayResult(interp.logs, returned)
