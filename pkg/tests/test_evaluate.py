import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conflog.catalog import ConfigParameter, ParameterCatalog
from conflog.errors import MalformedDoc
from conflog.evaluate import (
    LEVEL_ORDER,
    GroundTruthPoint,
    direct_hit,
    evaluate,
    format_coverage,
    level_metrics,
    load_points,
    max_dist,
    position_accuracy,
    specific_rate,
    text_metrics,
    tokenize,
    variable_metrics,
)

TOL = 1e-9


def P(line, block="B", level="WARN", file="F.mj", variables=(), text=""):
    return GroundTruthPoint(file, line, block, level, frozenset(variables), text)


@pytest.mark.parametrize(
    "pred,truth,expected",
    [
        (P(10), P(10), 1),
        (P(12), P(10), 0),
        (P(11, block="C"), P(10), 0),
        (P(9), P(10), 1),
        (P(10, file="G.mj"), P(10), 0),
    ],
)
def test_position_accuracy(pred, truth, expected):
    assert position_accuracy(pred, truth) == expected


def test_max_dist_table():
    assert [max_dist(l) for l in LEVEL_ORDER] == [4, 3, 2, 3, 4]


@pytest.mark.parametrize(
    "truth,injected,la,aod",
    [("WARN", "WARN", 1, 1.0), ("ERROR", "WARN", 0, 0.75), ("INFO", "ERROR", 0, 0.0), ("TRACE", "ERROR", 0, 0.0)],
)
def test_level_metrics(truth, injected, la, aod):
    got_la, got_aod = level_metrics(truth, injected)
    assert got_la == la
    assert abs(got_aod - aod) < TOL


@given(st.sampled_from(LEVEL_ORDER), st.sampled_from(LEVEL_ORDER))
def test_aod_bounds(t, i):
    la, aod = level_metrics(t, i)
    assert 0.0 <= aod <= 1.0
    assert (aod == 1.0) == (la == 1)


def test_variable_metrics():
    assert variable_metrics({"a", "b"}, {"a", "b"}) == (1.0, 1.0, 1.0)
    p, r, f1 = variable_metrics({"a", "b"}, {"a"})
    assert (p, r) == (1.0, 0.5)
    assert abs(f1 - 2 / 3) < TOL
    assert variable_metrics(set(), set()) == (None, None, None)
    assert variable_metrics({"conf.get( k )"}, {"conf.get(k)"}) == (1.0, 1.0, 1.0)


def test_text_identity_and_disjoint():
    assert text_metrics("set yarn framework now", "set yarn framework now") == (1.0, 1.0, 1.0, 1.0)
    b1, b4, r1, rl = text_metrics("alpha beta", "gamma delta")
    assert b1 == 0.0 and r1 == 0.0 and rl == 0.0
    assert 0.0 <= b4 <= 1.0


def test_rouge_hand_count():
    _, _, r1, rl = text_metrics("set the yarn framework", "set yarn framework")
    assert abs(r1 - 6 / 7) < TOL
    assert abs(rl - 6 / 7) < TOL


def test_bleu1_with_brevity_penalty():
    b1, _, _, _ = text_metrics("set the yarn framework", "set yarn framework")
    assert abs(b1 - math.exp(1 - 4 / 3)) < TOL


def test_tokenize_placeholders():
    assert tokenize("Value {} of %s is BAD") == ["value", "<*>", "of", "<*>", "is", "bad"]


_words = st.lists(st.sampled_from(["a", "b", "c", "d", "{}", "key.x"]), max_size=12).map(" ".join)


@settings(max_examples=200)
@given(_words, _words)
def test_text_metrics_bounded(a, b):
    for v in text_metrics(a, b):
        assert 0.0 <= v <= 1.0 + TOL


@settings(max_examples=100)
@given(_words.filter(lambda s: s.strip()))
def test_text_identity_property(a):
    assert text_metrics(a, a) == (1.0, 1.0, 1.0, 1.0)


CAT = ParameterCatalog((ConfigParameter("mapreduce.framework.name"), ConfigParameter("dfs.replication")))


def test_direct_hit():
    logs = ["WARN Configuration 'mapreduce.framework.name': mismatch"]
    assert direct_hit(logs, CAT, ["mapreduce.framework.name"]) == (1.0, 1)
    assert direct_hit(["INFO nothing here"], CAT, ["mapreduce.framework.name"]) == (0.0, -1)
    assert direct_hit(["INFO nothing"], CAT, ["dfs.replication"], indirect=lambda l, k: True) == (0.5, -1)
    # a different key in the log does not count
    assert direct_hit(["WARN dfs.replication"], CAT, ["mapreduce.framework.name"]) == (0.0, -1)


@given(st.booleans())
def test_empty_logs_never_score(stub_says):
    assert direct_hit([], CAT, ["dfs.replication"], indirect=lambda l, k: stub_says) == (0.0, -1)


def test_specific_rate():
    assert abs(specific_rate({"a", "b", "c"}, {"b"}) - 2 / 3) < TOL
    assert specific_rate({"a"}, {"a"}) == 0.0
    assert specific_rate({"a"}, set()) == 1.0


def test_coverage_rendering():
    assert format_coverage(67, 90) == "74% (67/90)"
    truth = [P(10 * i + 1, block=f"B{i}") for i in range(90)]
    predicted = [P(10 * i + 1, block=f"B{i}") for i in range(67)]
    report = evaluate(truth, predicted)
    assert report.aggregates["coverage_text"] == "74% (67/90)"
    assert abs(report.aggregates["coverage"] - 67 / 90) < TOL
    assert "74% (67/90)" in report.table()


def test_evaluate_only_scores_positioned_points():
    truth = [P(10, level="ERROR", variables={"a", "b"}, text="set the yarn framework"), P(30, block="C")]
    predicted = [P(11, level="WARN", variables={"a"}, text="set yarn framework"), P(40, block="C")]
    report = evaluate(truth, predicted)
    first, second = report.points
    assert first.pa == 1 and second.pa == 0 and second.la is None
    agg = report.aggregates
    assert agg["pa_hits"] == 1
    assert abs(agg["aod"] - 0.75) < TOL
    assert abs(agg["var_f1"] - 2 / 3) < TOL
    assert abs(agg["rouge1"] - 6 / 7) < TOL


def test_points_validate():
    with pytest.raises(ValueError):
        P(0)
    with pytest.raises(ValueError):
        P(1, level="FATAL")


def test_load_points_shapes(tmp_path):
    pts = [P(3).to_json()]
    for i, doc in enumerate([pts, {"points": pts}, {"predicted": pts}]):
        f = tmp_path / f"p{i}.json"
        f.write_text(json.dumps(doc), encoding="utf-8")
        assert load_points(f) == [P(3)]
    bad = tmp_path / "bad.json"
    bad.write_text('[{"line": 2}]', encoding="utf-8")
    with pytest.raises(MalformedDoc):
        load_points(bad)
