"""Program dependence graph over the SSA IR.

Edge kinds:

``data``
    def of a value -> statement using it (same method); additionally a
    field-write of ``C.f`` -> every field-read of ``C.f`` (name-sensitive
    heap link, no aliasing).
``control``
    branch -> statement whose execution depends on the branch outcome,
    computed from post-dominance on the method CFG. Not propagated across calls.
``call-arg``
    statement defining an argument -> the callee's matching parameter statement.
``call-return``
    callee return statement -> the calling statement.
"""

from __future__ import annotations

import json
from collections import defaultdict, deque
from dataclasses import dataclass, field

import networkx as nx

from .errors import UnknownNode
from .ir import EXIT, CompilationUnit, Kind, MethodDecl, Program, cfg_of

EDGE_KINDS = ("data", "control", "call-arg", "call-return")
_KIND_RANK = {k: i for i, k in enumerate(EDGE_KINDS)}


@dataclass(frozen=True, order=True)
class Edge:
    src: int
    dst: int
    kind: str


@dataclass
class Pdg:
    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]
    program: Program = field(repr=False, compare=False)
    include_control: bool = True

    def __post_init__(self) -> None:
        succ: dict[int, list[tuple[int, str]]] = defaultdict(list)
        pred: dict[int, list[tuple[int, str]]] = defaultdict(list)
        for e in self.edges:
            succ[e.src].append((e.dst, e.kind))
            pred[e.dst].append((e.src, e.kind))
        self._succ = dict(succ)
        self._pred = dict(pred)
        self._nodes = frozenset(self.nodes)

    def successors(self, node: int) -> list[tuple[int, str]]:
        return self._succ.get(node, [])

    def predecessors(self, node: int) -> list[tuple[int, str]]:
        return self._pred.get(node, [])

    def __contains__(self, node: object) -> bool:
        return node in self._nodes

    def to_json(self) -> str:
        return json.dumps(
            {
                "nodes": list(self.nodes),
                "edges": [{"from": e.src, "to": e.dst, "kind": e.kind} for e in self.edges],
            },
            indent=1,
        )


def control_dependences(method: MethodDecl) -> dict[str, set[str]]:
    """Map each branch block id to the block ids control-dependent on it."""
    g = cfg_of(method)
    rev = g.reverse(copy=True)
    rev.add_node(EXIT)
    for b in method.blocks:
        if not b.succs:
            rev.add_edge(EXIT, b.id)
    ipdom = nx.immediate_dominators(rev, EXIT)
    out: dict[str, set[str]] = {}
    for b in method.blocks:
        if not b.statements or b.statements[-1].kind is not Kind.BRANCH:
            continue
        if b.id not in ipdom:
            continue  # cannot reach exit (back-edge loop without exit)
        stop = ipdom[b.id]
        dependents: set[str] = set()
        for s in b.succs:
            runner = s
            while runner != stop and runner != EXIT and runner in ipdom:
                dependents.add(runner)
                if ipdom[runner] == runner:
                    break
                runner = ipdom[runner]
        out[b.id] = dependents
    return out


def build_pdg(units: list[CompilationUnit] | Program, include_control: bool = True) -> Pdg:
    program = units if isinstance(units, Program) else Program(units)
    nodes: list[int] = []
    edges: set[Edge] = set()
    writes: dict[str, list[int]] = defaultdict(list)
    reads: dict[str, list[int]] = defaultdict(list)

    for sig, method in program.methods.items():
        defs = program.def_sites[sig]
        by_block = {b.id: b for b in method.blocks}
        for s in method.statements():
            nodes.append(s.id)
            for u in s.uses:
                d = defs.get(u)
                if d is not None:
                    edges.add(Edge(d, s.id, "data"))
            if s.kind is Kind.FIELD_WRITE and s.value:
                writes[s.value].append(s.id)
            elif s.kind is Kind.FIELD_READ and s.value:
                reads[s.value].append(s.id)
            if s.kind is Kind.CALL:
                callee = program.resolve_callee(s.callee)
                if callee is not None:
                    _call_edges(program, method, s.id, s.args, callee, edges)
        if include_control:
            for head, dependents in control_dependences(method).items():
                branch = by_block[head].statements[-1]
                for bid in dependents:
                    for s in by_block[bid].statements:
                        edges.add(Edge(branch.id, s.id, "control"))
    for ref, wids in writes.items():
        for w in wids:
            for r in reads.get(ref, ()):
                edges.add(Edge(w, r, "data"))
    return Pdg(tuple(sorted(nodes)), tuple(sorted(edges, key=lambda e: (e.src, e.dst, _KIND_RANK[e.kind]))), program, include_control)


def _call_edges(program: Program, caller: MethodDecl, call_id: int, args, callee: MethodDecl, edges: set[Edge]) -> None:
    defs = program.def_sites[caller.signature]
    param_stmts = {s.value: s.id for s in callee.entry.statements if s.kind is Kind.ASSIGN and s.op == "param"}
    for i, a in enumerate(args):
        d = defs.get(a)
        p = param_stmts.get(str(i))
        if d is not None and p is not None:
            edges.add(Edge(d, p, "call-arg"))
    for s in callee.statements():
        if s.kind is Kind.RETURN and s.uses:
            edges.add(Edge(s.id, call_id, "call-return"))


def reachable_within(pdg: Pdg, start: int, max_hops: int) -> set[int]:
    """Nodes reachable from ``start`` by a directed path of at most ``max_hops`` edges.

    ``start`` itself is excluded even when a cycle leads back to it.
    """
    if start not in pdg:
        raise UnknownNode(f"statement {start} is not a PDG node")
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    dist = {start: 0}
    queue = deque([start])
    while queue:
        n = queue.popleft()
        if dist[n] == max_hops:
            continue
        for m, _kind in pdg.successors(n):
            if m not in dist:
                dist[m] = dist[n] + 1
                queue.append(m)
    dist.pop(start)
    return set(dist)


def edge_rank(kind: str) -> int:
    return _KIND_RANK[kind]
