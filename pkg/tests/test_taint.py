import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conflog.catalog import ConfigParameter, ParameterCatalog
from conflog.depgraph import build_pdg
from conflog.frontend import parse_texts
from conflog.ir import Kind, Program
from conflog.taint import analyze, find_sources, shortest_paths, sink_set, track_taints

from progen import CATALOG, generate, oracle_sinks, source_ids
from shapes import CHAIN_CATALOG, VALIDITY_RULES, VALIDITY_CATALOG, VALIDITY_EXPECTED, chain_source

AVOID = "dfs.namenode.avoid.write.stale.datanode"


def _analyze(src, catalog, **kw):
    return analyze(Program(parse_texts({"T.mj": src})), catalog, **kw)


def test_source_validity_rules():
    a = _analyze(VALIDITY_RULES, VALIDITY_CATALOG)
    got = {a.program.line_of(s.stmt)[1]: (s.valid, s.reason, s.bound_keys) for s in a.sources}
    assert got == VALIDITY_EXPECTED


def test_every_getter_call_listed_once():
    a = _analyze(VALIDITY_RULES, VALIDITY_CATALOG)
    index = a.engines.getter_index()
    calls = [loc.stmt.id for loc in a.program.locations.values() if loc.stmt.kind is Kind.CALL and loc.stmt.callee in index]
    assert sorted(calls) == [src.stmt for src in a.sources]


STALE_NODE = f"""class DFSConfigKeys {{
    static String AVOID = "{AVOID}";
}}
class Configuration {{
    static String DEFAULT_FS = "fs.defaultFS";
    Properties props;
    public boolean getBoolean(String name, boolean d) {{
        return d;
    }}
}}
class DatanodeDescriptor {{
    public boolean isAlive() {{
        return true;
    }}
}}
class DatanodeManager {{
    long heartbeatRecheckInterval;
    public void init(Configuration conf, long staleInterval, long recheckInterval, DatanodeDescriptor d) {{
        boolean avoidStaleDataNodesForWrite = conf.getBoolean(DFSConfigKeys.AVOID, false);
        long interval = recheckInterval;
        if (avoidStaleDataNodesForWrite) {{
            interval = staleInterval;
        }}
        this.heartbeatRecheckInterval = interval;
        if (d.isAlive()) {{
            interval = 0;
        }}
    }}
}}
"""
STALE_CAT = ParameterCatalog((ConfigParameter(AVOID), ConfigParameter("fs.defaultFS")))


def test_stale_datanode_block():
    a = _analyze(STALE_NODE, STALE_CAT)
    (src,) = a.sources
    assert src.valid and src.bound_keys == (AVOID,)
    assert len(a.blocks) == 1
    (block,) = a.blocks
    assert block.entry_line == 21
    assert block.parameters == (AVOID,)
    assert block.path_len <= 3
    assert block.handling_span[0] <= 22 <= block.handling_span[1]
    assert block.handling_span[1] >= 24  # the field write consuming the phi


def test_config_independent_branch_is_not_sink():
    a = _analyze(STALE_NODE, STALE_CAT, include_control=False)
    assert [b.entry_line for b in a.blocks] == [21]


def test_arithmetic_only_has_no_paths():
    src = STALE_NODE.replace(
        """        if (avoidStaleDataNodesForWrite) {
            interval = staleInterval;
        }
""",
        "",
    ).replace("if (d.isAlive())", "if (recheckInterval > 3)")
    src = src.replace("long interval = recheckInterval;", "long interval = recheckInterval;\n        boolean u = !avoidStaleDataNodesForWrite;")
    a = _analyze(src, STALE_CAT, include_control=False)
    assert a.paths == []


def test_two_sources_merge_into_one_block():
    src = """class C {
    static String A = "k.a";
    static String B = "k.b";
    Properties props;
    public int getInt(String name, int d) {
        return d;
    }
}
class U {
    public int f(C c) {
        int x = c.getInt(C.A, 1);
        int y = c.getInt(C.B, 2);
        if (x > y) {
            return 1;
        }
        return 0;
    }
}
"""
    cat = ParameterCatalog((ConfigParameter("k.a"), ConfigParameter("k.b")))
    a = _analyze(src, cat)
    (block,) = a.blocks
    assert block.parameters == tuple(sorted({k for p in block.paths for k in p.source.bound_keys}))
    assert block.parameters == ("k.a", "k.b")
    assert len(block.paths) == 2


@pytest.mark.parametrize("bound,expected", [(30, 0), (31, 1), (32, 1)])
def test_chain_bound(bound, expected):
    a = _analyze(chain_source(31), CHAIN_CATALOG, max_path_len=bound)
    assert len(a.paths) == expected
    if expected:
        assert len(a.paths[0]) == 31


def test_invalid_bound_rejected():
    a = _analyze(STALE_NODE, STALE_CAT)
    with pytest.raises(ValueError):
        track_taints(a.pdg, a.sources, 0)


def _replays(pdg, path):
    edges = {(e.src, e.dst, e.kind) for e in pdg.edges}
    cur = path.source.stmt
    for node, kind in path.hops:
        if (cur, node, kind) not in edges:
            return False
        cur = node
    return cur == path.sink


def test_corpus_paths_replay(corpus_analysis):
    a = corpus_analysis
    assert a.paths
    for p in a.paths:
        assert _replays(a.pdg, p)
        assert len(p) <= 30
        assert a.program.stmt(p.sink).kind is Kind.BRANCH
    for b in a.blocks:
        assert b.entry_stmt in {p.sink for p in b.paths}
        assert set(b.parameters) == {k for p in b.paths for k in p.source.bound_keys}


def test_control_toggle_never_adds_sinks(corpus_analysis, catalog):
    off = analyze(corpus_analysis.program, catalog, include_control=False)
    assert sink_set(off.paths) <= sink_set(corpus_analysis.paths)


def test_block_report_deterministic(catalog, corpus_sources):
    runs = [
        json.dumps([b.to_report() for b in analyze(Program(parse_texts(corpus_sources)), catalog).blocks])
        for _ in range(2)
    ]
    assert runs[0] == runs[1]
    keys = [(b["file"], b["entry_line"], b["method"]) for b in json.loads(runs[0])]
    assert keys == sorted(keys)
    assert all({"method", "file", "entry_line", "parameters", "path_len", "existing_logs"} <= set(b) for b in json.loads(runs[0]))


def test_shortest_path_tie_break():
    # two equal-length routes reach the branch; the one through the smaller id wins
    src = """class C {
    static String A = "k.a";
    Properties props;
    public int getInt(String name, int d) {
        return d;
    }
}
class U {
    public int f(C c) {
        int x = c.getInt(C.A, 1);
        int p = x + 1;
        int q = x + 2;
        int s = p + q;
        if (s > 0) {
            return 1;
        }
        return 0;
    }
}
"""
    a = _analyze(src, ParameterCatalog((ConfigParameter("k.a"),)))
    (path,) = a.paths
    by_line = {a.program.line_of(loc.stmt.id)[1]: loc.stmt.id for loc in a.program.locations.values() if loc.stmt.defs}
    assert path.hops[0] == (by_line[11], "data")
    assert by_line[11] < by_line[12]
    assert len(path) == 4


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000))
def test_random_programs_against_oracle(seed):
    gen = generate(seed)
    program = Program(parse_texts({"R.mj": gen.text}))
    a = analyze(program, CATALOG)
    valid = source_ids(program, gen.valid_lines)
    invalid = source_ids(program, gen.invalid_lines)
    got_valid = {s.stmt for s in a.sources if s.valid and program.method_of(s.stmt).class_name == "P"}
    assert got_valid == valid
    assert not invalid & {s.stmt for s in a.sources if s.valid}
    pdg = build_pdg(program)
    sources = find_sources(pdg, a.engines, CATALOG)
    oracle = oracle_sinks(pdg, {s.stmt for s in sources if s.valid}, (1, 3, 30))
    for k in (1, 3, 30):
        assert sink_set(track_taints(pdg, sources, k)) == oracle[k]


def test_shortest_paths_respect_bound(corpus_analysis):
    a = corpus_analysis
    for s in a.sources[:5]:
        for k in (1, 2, 5):
            assert all(len(path) <= k for path, _ in shortest_paths(a.pdg, s.stmt, k).values())
