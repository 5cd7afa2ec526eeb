"""Configuration engine labeling.

Seeds are classes declaring a string constant whose value is a documented
parameter key. Seeds are expanded to a fixpoint along

* inheritance, both directions (subclasses and superclasses of an engine),
* composition: classes nested in an engine, and classes holding a field whose
  declared type is an engine.

A reached class becomes an engine only if it fits one of the three kinds;
constants of an expanded class are colored with their own literal value.
"""

from __future__ import annotations

import enum
import time
from collections import deque
from dataclasses import dataclass, field

from .catalog import ParameterCatalog
from .ir import ClassDecl, CompilationUnit, MethodDecl, Program

STRING_TYPE = "String"


class EngineKind(str, enum.Enum):
    KEY_HOLDER = "key_holder"
    DICT_HOLDER = "dict_holder"
    BOTH_HOLDER = "both_holder"


class GetterStyle(str, enum.Enum):
    GENERIC_BY_KEY = "generic_by_key"
    BUILT_IN_SPECIFIC = "built_in_specific"


class Reason(str, enum.Enum):
    SEED = "seed"
    INHERITANCE = "inheritance"
    COMPOSITION = "composition"


@dataclass(frozen=True)
class Getter:
    signature: str
    style: GetterStyle
    key_positions: tuple[int, ...] = ()  # argument indexes typed String


@dataclass(frozen=True)
class ConfigEngine:
    class_name: str
    kind: EngineKind
    colored_constants: tuple[tuple[str, str], ...]  # (field name, key), sorted
    getters: tuple[Getter, ...]

    @property
    def constant_map(self) -> dict[str, str]:
        return dict(self.colored_constants)

    def check(self) -> None:
        """Assert the invariant of this engine's kind."""
        generic = [g for g in self.getters if g.style is GetterStyle.GENERIC_BY_KEY]
        builtin = [g for g in self.getters if g.style is GetterStyle.BUILT_IN_SPECIFIC]
        if self.kind is EngineKind.KEY_HOLDER:
            ok = bool(self.colored_constants) and not generic
        elif self.kind is EngineKind.DICT_HOLDER:
            ok = bool(generic)
        else:
            ok = bool(self.colored_constants or builtin) and bool(generic)
        if not ok:
            raise AssertionError(f"{self.class_name} violates the {self.kind.value} invariant")


@dataclass(frozen=True)
class TraceEntry:
    class_name: str
    reason: Reason
    via: str | None  # engine the expansion came from; None for seeds


@dataclass
class EngineSet:
    engines: list[ConfigEngine]
    expansion_trace: list[TraceEntry]
    elapsed_s: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        self._by_class = {e.class_name: e for e in self.engines}

    def get(self, class_name: str) -> ConfigEngine | None:
        return self._by_class.get(class_name)

    def __contains__(self, class_name: object) -> bool:
        return class_name in self._by_class

    def getter_index(self) -> dict[str, tuple[ConfigEngine, Getter]]:
        out = {}
        for e in self.engines:
            for g in e.getters:
                out[g.signature] = (e, g)
        return out

    def colored_fields(self) -> dict[str, tuple[ConfigEngine, str]]:
        """``Class.FIELD`` -> (engine, key) for every colored constant."""
        return {f"{e.class_name}.{name}": (e, key) for e in self.engines for name, key in e.colored_constants}

    def to_report(self) -> dict:
        reasons = {t.class_name: t for t in self.expansion_trace}
        rows = []
        for e in self.engines:
            t = reasons[e.class_name]
            rows.append(
                {
                    "class": e.class_name,
                    "kind": e.kind.value,
                    "seeds": [k for _, k in e.colored_constants] if t.reason is Reason.SEED else [],
                    "reason": t.reason.value,
                    "via": t.via,
                    "getters": [{"signature": g.signature, "style": g.style.value} for g in e.getters],
                }
            )
        return {"engines": rows}


def classify_getter(method: MethodDecl) -> Getter | None:
    """Getter shape of a method, or None when it is not a value getter."""
    if not method.is_public or method.return_type == "void" or method.name.startswith("set"):
        return None
    key_positions = tuple(i for i, t in enumerate(method.param_types) if t == STRING_TYPE)
    if key_positions:
        return Getter(method.signature, GetterStyle.GENERIC_BY_KEY, key_positions)
    if not method.param_types:
        return Getter(method.signature, GetterStyle.BUILT_IN_SPECIFIC)
    return None


def getter_inventory(engine: ConfigEngine) -> list[str]:
    return [g.signature for g in engine.getters]


def _colored(cls: ClassDecl, catalog: ParameterCatalog, expanded: bool) -> list[tuple[str, str]]:
    out = []
    for f in cls.fields:
        if f.initializer is None or f.type != STRING_TYPE:
            continue
        if f.initializer in catalog or (expanded and f.initializer):
            out.append((f.name, f.initializer))
    return sorted(out)


def classify(cls: ClassDecl, catalog: ParameterCatalog, expanded: bool) -> ConfigEngine | None:
    colored = _colored(cls, catalog, expanded)
    getters = [g for g in (classify_getter(m) for m in cls.methods) if g is not None]
    generic = [g for g in getters if g.style is GetterStyle.GENERIC_BY_KEY]
    builtin = [g for g in getters if g.style is GetterStyle.BUILT_IN_SPECIFIC]
    if generic:
        kind = EngineKind.BOTH_HOLDER if (colored or builtin) else EngineKind.DICT_HOLDER
    elif colored:
        # built-in shaped accessors of a key holder hand out identifiers, not values
        kind = EngineKind.KEY_HOLDER
    else:
        return None
    return ConfigEngine(cls.qualified_name, kind, tuple(colored), tuple(sorted(getters, key=lambda g: g.signature)))


def _neighbours(program: Program, name: str) -> list[tuple[str, Reason]]:
    out: list[tuple[str, Reason]] = []
    cls = program.classes[name]
    if cls.superclass in program.classes:
        out.append((cls.superclass, Reason.INHERITANCE))
    for other in program.classes.values():
        if other.superclass == name:
            out.append((other.qualified_name, Reason.INHERITANCE))
        if other.nested_in == name:
            out.append((other.qualified_name, Reason.COMPOSITION))
        if any(f.type == name for f in other.fields):
            out.append((other.qualified_name, Reason.COMPOSITION))
    return sorted(set(out))


def label_engines(
    units: list[CompilationUnit] | Program,
    catalog: ParameterCatalog,
    extra_engines: list[str] | tuple[str, ...] = (),
) -> EngineSet:
    """Label configuration engines: seeds from colored constants, then expansion."""
    t0 = time.perf_counter()
    program = units if isinstance(units, Program) else Program(units)
    engines: dict[str, ConfigEngine] = {}
    trace: list[TraceEntry] = []
    queue: deque[str] = deque()
    for name in sorted(program.classes):
        cls = program.classes[name]
        seed = any(f.initializer in catalog for f in cls.fields if f.type == STRING_TYPE and f.initializer)
        if seed or name in extra_engines:
            engine = classify(cls, catalog, expanded=name in extra_engines)
            if engine is not None:
                engines[name] = engine
                trace.append(TraceEntry(name, Reason.SEED, None))
                queue.append(name)
    while queue:
        current = queue.popleft()
        for neighbour, reason in _neighbours(program, current):
            if neighbour in engines:
                continue
            engine = classify(program.classes[neighbour], catalog, expanded=True)
            if engine is None:
                continue
            engines[neighbour] = engine
            trace.append(TraceEntry(neighbour, reason, current))
            queue.append(neighbour)
    ordered = [engines[t.class_name] for t in trace]
    return EngineSet(ordered, trace, time.perf_counter() - t0)


def replay_trace(trace: list[TraceEntry]) -> list[str]:
    """Classes reconstructed from a trace; every non-seed must hang off an earlier entry."""
    seen: list[str] = []
    for t in trace:
        if t.reason is Reason.SEED:
            if t.via is not None:
                raise AssertionError(f"seed {t.class_name} names a parent")
        elif t.via not in seen:
            raise AssertionError(f"{t.class_name} expanded from unknown engine {t.via}")
        seen.append(t.class_name)
    return seen
