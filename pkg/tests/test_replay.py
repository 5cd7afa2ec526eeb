import json

import pytest

from conflog.frontend import parse_texts
from conflog.ir import Program
from conflog.replay import ReplayError, format_template, run

from conftest import MINICORPUS

SRC = """class Conf {
    static String K = "a.key";
    Properties props;
    public int getInt(String name, int d) {
        String v = this.props.get(name);
        if (v == null) {
            return d;
        }
        return Integer.parseInt(v);
    }
}
class App {
    int limit;
    public int start(Conf c) {
        int n = c.getInt(Conf.K, 5);
        if (n > 10) {
            LOG.warn("limit {} too high for {}", n, Conf.K);
            n = 10;
        }
        this.limit = n;
        return n;
    }
}
"""


def _program():
    return Program(parse_texts({"A.mj": SRC}))


def test_default_path_is_silent():
    r = run(_program(), "App.start(Conf)", {})
    assert r.logs == [] and r.returned == 5 and r.exception is None


def test_configured_value_flows_to_log():
    r = run(_program(), "App.start(Conf)", {"a.key": "42"})
    assert r.logs == ["WARN limit 42 too high for a.key"]
    assert r.returned == 10


def test_parse_failure_is_captured():
    r = run(_program(), "App.start(Conf)", {"a.key": "lots"})
    assert r.exception and "NumberFormatException" in r.exception


def test_unknown_entry():
    with pytest.raises(ReplayError):
        run(_program(), "App.nope()", {})


def test_format_template():
    assert format_template("{} and {} and {}", [1, True]) == "1 and true and {}"
    assert format_template("x={}", [None]) == "x=null"


def test_corpus_originals_are_silent(corpus_sources):
    program = Program(parse_texts(corpus_sources))
    cases = json.loads((MINICORPUS / "cases.json").read_text(encoding="utf-8"))["cases"]
    for case in cases:
        r = run(program, case["entry"], case["config"], case["args"])
        assert r.exception is None, case["id"]
        assert not any(k in line for line in r.logs for k in case["misconfigured_keys"]), case["id"]
