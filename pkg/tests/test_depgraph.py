import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conflog.depgraph import Edge, Pdg, build_pdg, control_dependences, reachable_within
from conflog.errors import UnknownNode
from conflog.frontend import parse_source, parse_texts
from conflog.ir import EXIT, Kind, Program, cfg_of

from conftest import MINICORPUS
from progen import generate


def _pdg(src, include_control=True):
    return build_pdg(parse_texts({"T.mj": src}), include_control)


def _ids(pdg, kind=None):
    return {(e.src, e.dst) for e in pdg.edges if kind is None or e.kind == kind}


def test_straight_line_single_data_edge():
    pdg = _pdg("class A {\n    void f() {\n        int a = 1;\n        int b = a;\n    }\n}\n")
    assert [(e.src, e.dst, e.kind) for e in pdg.edges] == [(1, 2, "data")]


IF_SRC = "class A {\n    void f(boolean c) {\n        if (c) {\n            int x = 1;\n        }\n    }\n}\n"


def test_branch_controls_body():
    pdg = _pdg(IF_SRC)
    p = pdg.program
    branch = next(s for s in p.methods["A.f(boolean)"].statements() if s.kind is Kind.BRANCH)
    assign = next(s for s in p.methods["A.f(boolean)"].statements() if s.op == "const")
    assert (branch.id, assign.id) in _ids(pdg, "control")
    assert _ids(pdg, "control") == {(branch.id, assign.id)}
    assert not _ids(_pdg(IF_SRC, include_control=False), "control")


def test_call_arg_and_return_edges():
    src = (
        "class A {\n"
        "    int g(int p) {\n"
        "        return p;\n"
        "    }\n"
        "    int f() {\n"
        "        int v = 5;\n"
        "        int r = g(v);\n"
        "        return r;\n"
        "    }\n"
        "}\n"
    )
    pdg = _pdg(src)
    p = pdg.program
    g, f = p.methods["A.g(int)"], p.methods["A.f()"]
    param = next(s for s in g.statements() if s.op == "param")
    ret_g = next(s for s in g.statements() if s.kind is Kind.RETURN)
    v_def = next(s for s in f.statements() if s.op == "const")
    call = next(s for s in f.statements() if s.kind is Kind.CALL)
    assert (v_def.id, param.id) in _ids(pdg, "call-arg")
    assert (ret_g.id, call.id) in _ids(pdg, "call-return")


def test_unresolved_callee_has_no_call_edges():
    pdg = _pdg("class A {\n    int f(int x) {\n        int y = Ext.go(x);\n        return y;\n    }\n}\n")
    assert not _ids(pdg, "call-arg") and not _ids(pdg, "call-return")


def test_field_write_links_read():
    src = (
        "class A {\n    int f0;\n"
        "    void w(int x) {\n        this.f0 = x;\n    }\n"
        "    int r() {\n        int y = this.f0;\n        return y;\n    }\n}\n"
    )
    pdg = _pdg(src)
    p = pdg.program
    w = next(s for s in p.methods["A.w(int)"].statements() if s.kind is Kind.FIELD_WRITE)
    r = next(s for s in p.methods["A.r()"].statements() if s.kind is Kind.FIELD_READ)
    assert (w.id, r.id) in _ids(pdg, "data")


def test_deterministic_and_control_toggle():
    units = parse_source(MINICORPUS)
    a, b = build_pdg(units), build_pdg(units)
    assert a.to_json() == b.to_json()
    off = build_pdg(units, include_control=False)
    assert set(off.edges) <= set(a.edges)
    assert {e for e in a.edges if e not in set(off.edges)} == {e for e in a.edges if e.kind == "control"}


def test_data_edge_invariant_on_corpus():
    pdg = build_pdg(parse_source(MINICORPUS))
    p = pdg.program
    expected = set()
    for m in p.methods.values():
        defs = {d: s.id for s in m.statements() for d in s.defs}
        for s in m.statements():
            for u in s.uses:
                if u in defs:
                    expected.add((defs[u], s.id))
    stmts = [s for m in p.methods.values() for s in m.statements()]
    for w in stmts:
        for r in stmts:
            if w.kind is Kind.FIELD_WRITE and r.kind is Kind.FIELD_READ and w.value == r.value:
                expected.add((w.id, r.id))
    assert _ids(pdg, "data") == expected


def _post_dominates(g, exit_nodes, a, b):
    """Brute force: every path from b to an exit passes through a."""
    if a == b:
        return True
    h = g.copy()
    h.remove_node(a)
    if b in exit_nodes:
        return False
    reach = nx.descendants(h, b)
    return not any(x in reach for x in exit_nodes if x != a)


def _brute_control_deps(method):
    g = cfg_of(method)
    exits = {b.id for b in method.blocks if not b.succs}
    out = {}
    for b in method.blocks:
        if not b.statements or b.statements[-1].kind is not Kind.BRANCH:
            continue
        deps = set()
        for y in g.nodes:
            strictly = y != b.id and _post_dominates(g, exits, y, b.id)
            if not strictly and any(_post_dominates(g, exits, y, s) for s in b.succs):
                deps.add(y)
        out[b.id] = deps
    return out


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_control_dependence_matches_postdominance_oracle(seed):
    program = Program(parse_texts({"R.mj": generate(seed).text}))
    for m in program.methods.values():
        assert control_dependences(m) == _brute_control_deps(m)


def _random_dag(rng, n):
    edges = set()
    for _ in range(rng.randint(0, 3 * n)):
        a, b = sorted(rng.sample(range(n), 2)) if n > 1 else (0, 0)
        if a != b:
            edges.add(Edge(a, b, "data"))
    return Pdg(tuple(range(n)), tuple(sorted(edges)), None)


def _brute_reach(pdg, start, k):
    """Enumerate every path up to k edges."""
    found = set()

    def walk(node, depth):
        if depth == k:
            return
        for m, _ in pdg.successors(node):
            found.add(m)
            walk(m, depth + 1)

    walk(start, 0)
    found.discard(start)
    return found


def test_reachable_within_random_dags():
    rng = random.Random(20261017)
    for _ in range(1000):
        n = rng.randint(1, 50)
        pdg = _random_dag(rng, n)
        start = rng.randrange(n)
        k = rng.randint(1, 6)
        got = reachable_within(pdg, start, k)
        assert got == _brute_reach(pdg, start, k)
        assert got <= reachable_within(pdg, start, k + 1)


def test_chain_bound():
    chain = Pdg(tuple(range(32)), tuple(Edge(i, i + 1, "data") for i in range(31)), None)
    assert 31 not in reachable_within(chain, 0, 30)
    assert 31 in reachable_within(chain, 0, 31)


def test_cycle_is_loop_safe_and_excludes_start():
    cyc = Pdg((0, 1, 2), (Edge(0, 1, "data"), Edge(1, 2, "data"), Edge(2, 0, "data")), None)
    assert reachable_within(cyc, 0, 100) == {1, 2}


def test_leaf_and_errors():
    pdg = Pdg((0, 1), (Edge(0, 1, "data"),), None)
    assert reachable_within(pdg, 1, 5) == set()
    with pytest.raises(UnknownNode):
        reachable_within(pdg, 7, 1)
    with pytest.raises(ValueError):
        reachable_within(pdg, 0, 0)


def test_dump_shape():
    import json

    doc = json.loads(build_pdg(parse_source(MINICORPUS)).to_json())
    assert set(doc) == {"nodes", "edges"}
    assert all(set(e) == {"from", "to", "kind"} for e in doc["edges"])
    assert EXIT not in doc["nodes"]
