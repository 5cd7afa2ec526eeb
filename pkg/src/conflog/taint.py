"""Configuration taint tracking and sensitive-block extraction.

Sources are calls to engine getters, validated per engine kind:

* key holders hand out identifiers only, so calls to them never taint;
* both holders accept any key argument (or none, for built-in getters);
* dict holders are trusted only when every key argument traces back to a
  colored constant of a key holder or both holder.

Taint spreads from a valid source over PDG edges breadth-first, at most
``max_path_len`` edges. Every branch statement reached is a sink; its branch
plus the code reacting to it forms a :class:`SensitiveBlock`.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

from .catalog import ParameterCatalog
from .depgraph import Pdg, build_pdg, edge_rank
from .engines import ConfigEngine, EngineKind, EngineSet, GetterStyle, label_engines
from .ir import Kind, MethodDecl, Program, Statement, dominates, dominators

DEFAULT_MAX_PATH_LEN = 30


class SourceReason:
    BOTH_HOLDER = "both_holder_untyped"
    COLORED_KEY = "colored_key"
    KEY_HOLDER = "key_holder_excluded"
    UNCONSTRAINED = "unconstrained_key"
    ENGINE_INTERNAL = "engine_internal"


@dataclass(frozen=True)
class SourceStatement:
    stmt: int
    engine: ConfigEngine
    getter: str
    bound_keys: tuple[str, ...]
    valid: bool
    reason: str
    key_resolved: bool = True


@dataclass(frozen=True)
class TaintPath:
    source: SourceStatement
    hops: tuple[tuple[int, str], ...]  # (statement id, kind of the edge entering it)
    sink: int

    def __len__(self) -> int:
        return len(self.hops)


@dataclass(frozen=True)
class SensitiveBlock:
    method: str
    file: str
    entry_stmt: int
    entry_line: int
    checking_span: tuple[int, int]
    handling_span: tuple[int, int]
    parameters: tuple[str, ...]
    paths: tuple[TaintPath, ...]
    existing_logs: tuple[int, ...]
    then_stmts: tuple[int, ...] = ()
    else_stmts: tuple[int, ...] = ()
    dependent_stmts: tuple[int, ...] = ()
    # statement id -> parameter keys whose taint reaches it (same method only)
    tainted: dict[int, tuple[str, ...]] = field(default_factory=dict, compare=False)

    @property
    def block_id(self) -> str:
        return f"{self.method}@{self.entry_line}"

    @property
    def path_len(self) -> int:
        return min(len(p) for p in self.paths)

    def region_stmts(self) -> tuple[int, ...]:
        return self.then_stmts + self.else_stmts

    def to_report(self) -> dict:
        return {
            "method": self.method,
            "file": self.file,
            "entry_line": self.entry_line,
            "block_id": self.block_id,
            "checking_span": list(self.checking_span),
            "handling_span": list(self.handling_span),
            "parameters": list(self.parameters),
            "path_len": self.path_len,
            "existing_logs": list(self.existing_logs),
        }


# --- sources -----------------------------------------------------------------------


def _trace_key(program: Program, pdg: Pdg, start: int, colored: dict[str, tuple[ConfigEngine, str]]):
    """Walk value-preserving dependences backwards from ``start``.

    Returns (colored hits as (engine kind, key), string literals, resolved?).
    Crosses into callers through call-arg edges.
    """
    hits: set[tuple[EngineKind, str]] = set()
    literals: set[str] = set()
    seen = {start}
    queue = deque([start])
    resolved = True
    while queue:
        s = program.stmt(queue.popleft())
        follow: tuple[str, ...] = ()
        if s.kind is Kind.FIELD_READ:
            if s.value in colored:
                engine, key = colored[s.value]
                hits.add((engine.kind, key))
                continue
            follow = ("data",)
        elif s.kind is Kind.CONST_STRING:
            literals.add(s.value or "")
            continue
        elif s.kind is Kind.PHI or (s.kind is Kind.ASSIGN and s.op == "copy") or s.kind is Kind.FIELD_WRITE:
            follow = ("data",)
        elif s.kind is Kind.ASSIGN and s.op == "param":
            follow = ("call-arg",)
        else:
            resolved = False
            continue
        preds = [p for p, kind in pdg.predecessors(s.id) if kind in follow]
        if not preds:
            resolved = False
        for p in preds:
            if p not in seen:
                seen.add(p)
                queue.append(p)
    return hits, literals, resolved


def _builtin_keys(program: Program, signature: str, colored: dict[str, tuple[ConfigEngine, str]]) -> set[str]:
    method = program.methods.get(signature)
    if method is None:
        return set()
    return {colored[s.value][1] for s in method.statements() if s.kind is Kind.FIELD_READ and s.value in colored}


def find_sources(pdg: Pdg, engines: EngineSet, catalog: ParameterCatalog | None = None) -> list[SourceStatement]:
    """Every call to an engine getter, with validity decided per engine kind."""
    program = pdg.program
    getters = engines.getter_index()
    colored = engines.colored_fields()
    out = []
    for sid in pdg.nodes:
        s = program.stmt(sid)
        if s.kind is not Kind.CALL or s.callee not in getters:
            continue
        engine, getter = getters[s.callee]
        caller = program.method_of(sid)
        keys: set[str] = set()
        resolved = True
        colored_ok = True
        if getter.style is GetterStyle.GENERIC_BY_KEY:
            defs = program.def_sites[caller.signature]
            for pos in getter.key_positions:
                if pos >= len(s.args) or s.args[pos] not in defs:
                    resolved = colored_ok = False
                    continue
                hits, literals, ok = _trace_key(program, pdg, defs[s.args[pos]], colored)
                resolved &= ok
                keys |= {k for _, k in hits}
                keys |= {lit for lit in literals if catalog is None or lit in catalog}
                if not any(kind in (EngineKind.KEY_HOLDER, EngineKind.BOTH_HOLDER) for kind, _ in hits):
                    colored_ok = False
        else:
            keys = _builtin_keys(program, getter.signature, colored)
        if caller.signature in getters:
            valid, reason = False, SourceReason.ENGINE_INTERNAL
        elif engine.kind is EngineKind.KEY_HOLDER:
            valid, reason = False, SourceReason.KEY_HOLDER
        elif engine.kind is EngineKind.BOTH_HOLDER:
            valid, reason = True, SourceReason.BOTH_HOLDER
        elif colored_ok:
            valid, reason = True, SourceReason.COLORED_KEY
        else:
            valid, reason = False, SourceReason.UNCONSTRAINED
        out.append(SourceStatement(sid, engine, getter.signature, tuple(sorted(keys)), valid, reason, resolved))
    return out


# --- propagation ------------------------------------------------------------------------


def shortest_paths(
    pdg: Pdg, start: int, max_hops: int, skip_control: bool = False
) -> dict[int, tuple[tuple[int, ...], tuple[str, ...]]]:
    """Bounded BFS keeping, per reached node, the lexicographically smallest shortest path."""
    best: dict[int, tuple[tuple[int, ...], tuple[str, ...]]] = {start: ((), ())}
    frontier = [start]
    for _ in range(max_hops):
        layer: dict[int, tuple[tuple[int, ...], tuple[int, ...], tuple[str, ...]]] = {}
        for p in frontier:
            ppath, pkinds = best[p]
            for n, kind in pdg.successors(p):
                if n in best or (skip_control and kind == "control"):
                    continue
                cand = (ppath + (n,), tuple(edge_rank(k) for k in pkinds) + (edge_rank(kind),), pkinds + (kind,))
                if n not in layer or cand[:2] < layer[n][:2]:
                    layer[n] = cand
        if not layer:
            break
        for n, (path, _ranks, kinds) in layer.items():
            best[n] = (path, kinds)
        frontier = sorted(layer)
    del best[start]
    return best


def track_taints(pdg: Pdg, sources: list[SourceStatement], max_path_len: int = DEFAULT_MAX_PATH_LEN) -> list[TaintPath]:
    """One shortest witnessing path per (valid source, reachable branch)."""
    if max_path_len < 1:
        raise ValueError("max_path_len must be >= 1")
    program = pdg.program
    paths = []
    for src in sorted(sources, key=lambda s: s.stmt):
        if not src.valid:
            continue
        for node, (path, kinds) in sorted(shortest_paths(pdg, src.stmt, max_path_len).items()):
            if program.stmt(node).kind is Kind.BRANCH:
                paths.append(TaintPath(src, tuple(zip(path, kinds)), node))
    return paths


def sink_set(paths: list[TaintPath]) -> set[int]:
    return {p.sink for p in paths}


# --- block extraction ---------------------------------------------------------------------


def _region(method: MethodDecl, branch: Statement) -> tuple[list[Statement], list[Statement]]:
    idom = dominators(method)
    head = method.block_of(branch.id)
    arms = []
    for target in (branch.then, branch.else_):
        stmts: list[Statement] = []
        if target is not None:
            for b in method.blocks:
                if dominates(idom, target, b.id) and b.id != head.id:
                    stmts.extend(b.statements)
        arms.append(stmts)
    return arms[0], arms[1]


def _dependents(program: Program, pdg: Pdg, method: MethodDecl, region: set[int]) -> set[int]:
    """Statements outside the region consuming region values, through phi/copy chains."""
    in_method = {s.id for s in method.statements()}
    out: set[int] = set()
    queue = deque(region)
    seen = set(region)
    while queue:
        sid = queue.popleft()
        for n, kind in pdg.successors(sid):
            if kind != "data" or n not in in_method or n in seen:
                continue
            seen.add(n)
            out.add(n)
            s = program.stmt(n)
            if s.kind is Kind.PHI or (s.kind is Kind.ASSIGN and s.op == "copy"):
                queue.append(n)
    return out


def extract_blocks(
    pdg: Pdg,
    paths: list[TaintPath],
    max_path_len: int = DEFAULT_MAX_PATH_LEN,
) -> list[SensitiveBlock]:
    """Group sinks by enclosing method and cut out checking/handling regions.

    Sinks whose sources carry no resolved parameter key are dropped: such a
    block would have nothing to report. ``tainted`` records value taint only
    (control edges excluded).
    """
    program = pdg.program
    by_sink: dict[int, list[TaintPath]] = {}
    for p in paths:
        by_sink.setdefault(p.sink, []).append(p)
    reach_cache: dict[int, dict] = {}
    blocks = []
    for sink, sink_paths in by_sink.items():
        keys = sorted({k for p in sink_paths for k in p.source.bound_keys})
        if not keys:
            continue
        loc = program.locations[sink]
        method = loc.method
        branch = loc.stmt
        file, line = program.line_of(sink)
        then_stmts, else_stmts = _region(method, branch)
        region_ids = {s.id for s in then_stmts + else_stmts}
        dependents = _dependents(program, pdg, method, region_ids)
        handling_lines = [program.line_of(i)[1] for i in region_ids | dependents]
        handling = (min(handling_lines), max(handling_lines)) if handling_lines else (line, line)
        lo, hi = min(line, handling[0]), max(line, handling[1])
        logs = tuple(
            s.id for s in method.statements() if s.is_log_call and lo <= program.line_of(s.id)[1] <= hi
        )
        in_method = {s.id for s in method.statements()}
        tainted: dict[int, set[str]] = {}
        for p in sink_paths:
            src = p.source
            if src.stmt not in reach_cache:
                reach_cache[src.stmt] = shortest_paths(pdg, src.stmt, max_path_len, skip_control=True)
            for sid in [src.stmt, *reach_cache[src.stmt]]:
                if sid in in_method:
                    tainted.setdefault(sid, set()).update(src.bound_keys)
        blocks.append(
            SensitiveBlock(
                method=method.signature,
                file=file,
                entry_stmt=sink,
                entry_line=line,
                checking_span=(line, line),
                handling_span=handling,
                parameters=tuple(keys),
                paths=tuple(sorted(sink_paths, key=lambda p: (p.source.stmt, len(p)))),
                existing_logs=logs,
                then_stmts=tuple(s.id for s in then_stmts),
                else_stmts=tuple(s.id for s in else_stmts),
                dependent_stmts=tuple(sorted(dependents)),
                tainted={k: tuple(sorted(v)) for k, v in sorted(tainted.items())},
            )
        )
    blocks.sort(key=lambda b: (b.file, b.entry_line, b.method, b.entry_stmt))
    return blocks


@dataclass
class Analysis:
    """Bundle of one full analysis run."""

    program: Program
    engines: EngineSet
    pdg: Pdg
    sources: list[SourceStatement]
    paths: list[TaintPath]
    blocks: list[SensitiveBlock]
    timings: dict[str, float]


def analyze(
    units,
    catalog: ParameterCatalog,
    max_path_len: int = DEFAULT_MAX_PATH_LEN,
    include_control: bool = True,
    extra_engines: tuple[str, ...] = (),
) -> Analysis:
    program = units if isinstance(units, Program) else Program(units)
    timings = {}
    engines = label_engines(program, catalog, extra_engines)
    timings["engine_labeling"] = engines.elapsed_s
    t = time.perf_counter()
    pdg = build_pdg(program, include_control)
    timings["pdg"] = time.perf_counter() - t
    t = time.perf_counter()
    sources = find_sources(pdg, engines, catalog)
    paths = track_taints(pdg, sources, max_path_len)
    timings["taint"] = time.perf_counter() - t
    t = time.perf_counter()
    blocks = extract_blocks(pdg, paths, max_path_len)
    timings["extract"] = time.perf_counter() - t
    return Analysis(program, engines, pdg, sources, paths, blocks, timings)
