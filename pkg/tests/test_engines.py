import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conflog.catalog import ConfigParameter, ParameterCatalog
from conflog.engines import EngineKind, GetterStyle, Reason, classify_getter, getter_inventory, label_engines, replay_trace
from conflog.frontend import parse_source, parse_texts
from conflog.ir import Program

from conftest import MINICORPUS

AVOID = "dfs.namenode.avoid.write.stale.datanode"
CAT = ParameterCatalog((ConfigParameter(AVOID), ConfigParameter("dfs.replication")))

FIG = f"""class CommonConfigurationKeys {{
    static String IO_SORT = "io.sort.undocumented";
}}
class DFSConfigKeys extends CommonConfigurationKeys {{
    static String DFS_NAMENODE_AVOID_STALE_DATANODE_FOR_WRITE_KEY = "{AVOID}";
}}
class Configuration {{
    static String REPL = "dfs.replication";
    Properties props;
    public boolean getBoolean(String name, boolean d) {{
        return d;
    }}
    public boolean getResilient() {{
        return true;
    }}
    public void set(String name, String value) {{
        this.props.put(name, value);
    }}
    void helper(String name) {{
        return;
    }}
}}
class Unrelated {{
    int x;
}}
"""


@pytest.fixture(scope="module")
def fig():
    return label_engines(parse_texts({"F.mj": FIG}), CAT)


def test_seed_key_holder(fig):
    e = fig.get("DFSConfigKeys")
    assert e.kind is EngineKind.KEY_HOLDER
    assert e.constant_map == {"DFS_NAMENODE_AVOID_STALE_DATANODE_FOR_WRITE_KEY": AVOID}
    assert e.getters == ()


def test_superclass_expanded_by_inheritance(fig):
    e = fig.get("CommonConfigurationKeys")
    assert e is not None and e.kind is EngineKind.KEY_HOLDER
    (t,) = [t for t in fig.expansion_trace if t.class_name == "CommonConfigurationKeys"]
    assert (t.reason, t.via) == (Reason.INHERITANCE, "DFSConfigKeys")


def test_both_holder(fig):
    e = fig.get("Configuration")
    assert e.kind is EngineKind.BOTH_HOLDER
    styles = {g.signature: g.style for g in e.getters}
    assert styles == {
        "Configuration.getBoolean(String,boolean)": GetterStyle.GENERIC_BY_KEY,
        "Configuration.getResilient()": GetterStyle.BUILT_IN_SPECIFIC,
    }
    assert getter_inventory(e) == sorted(styles)


def test_unrelated_not_engine(fig):
    assert "Unrelated" not in fig


def test_getter_shapes():
    program = Program(parse_texts({"F.mj": FIG}))
    m = program.methods
    assert classify_getter(m["Configuration.getBoolean(String,boolean)"]).style is GetterStyle.GENERIC_BY_KEY
    assert classify_getter(m["Configuration.getResilient()"]).style is GetterStyle.BUILT_IN_SPECIFIC
    assert classify_getter(m["Configuration.set(String,String)"]) is None
    assert classify_getter(m["Configuration.helper(String)"]) is None  # void and not public


def test_subclass_and_nested_expansion():
    src = FIG + """class JobConf extends Configuration {
    public String getRaw(String name) {
        return name;
    }
}
class Holder {
    Configuration conf;
    public String lookup(String k) {
        return k;
    }
}
class DFSConfigKeys2 {
    class Inner {
        public String value(String k) {
            return k;
        }
    }
}
"""
    es = label_engines(parse_texts({"F.mj": src}), CAT)
    assert es.get("JobConf").kind is EngineKind.DICT_HOLDER
    assert es.get("Holder").kind is EngineKind.DICT_HOLDER
    reasons = {t.class_name: t.reason for t in es.expansion_trace}
    assert reasons["JobConf"] is Reason.INHERITANCE
    assert reasons["Holder"] is Reason.COMPOSITION
    assert "DFSConfigKeys2.Inner" not in es  # its outer class is not an engine


def test_extra_engines_override():
    es = label_engines(parse_texts({"F.mj": FIG}), ParameterCatalog(), extra_engines=["Configuration"])
    assert es.get("Configuration").kind is EngineKind.BOTH_HOLDER
    assert [t.reason for t in es.expansion_trace] == [Reason.SEED]


def test_corpus_kinds_and_invariants():
    es = label_engines(parse_source(MINICORPUS), _corpus_catalog())
    kinds = {e.class_name: e.kind for e in es.engines}
    assert kinds["Configuration"] is EngineKind.BOTH_HOLDER
    assert kinds["DFSConfigKeys"] is EngineKind.KEY_HOLDER
    assert kinds["JobConf"] is EngineKind.DICT_HOLDER
    assert kinds["YarnConfiguration.Scheduler"] is EngineKind.DICT_HOLDER
    for e in es.engines:
        e.check()
    assert replay_trace(es.expansion_trace) == [e.class_name for e in es.engines]
    rows = es.to_report()["engines"]
    assert all({"class", "kind", "seeds", "reason"} <= set(r) for r in rows)


def _corpus_catalog():
    from conflog.catalog import load_catalog
    from conftest import PARAMS

    return load_catalog(PARAMS)


def test_replay_trace_rejects_orphans():
    from conflog.engines import TraceEntry

    with pytest.raises(AssertionError):
        replay_trace([TraceEntry("A", Reason.INHERITANCE, "B")])


_unrelated = st.lists(st.sampled_from(["int", "String", "boolean"]), max_size=3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), _unrelated)
def test_monotone_under_unrelated_classes(n, field_types):
    base = label_engines(parse_texts({"F.mj": FIG}), CAT)
    extra = "".join(
        f"class Noise{i} {{\n" + "".join(f"    {t} f{j};\n" for j, t in enumerate(field_types)) + "}\n" for i in range(n)
    )
    grown = label_engines(parse_texts({"F.mj": FIG + extra}), CAT)
    for e in base.engines:
        assert grown.get(e.class_name) == e
