import json
import re
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from conflog.errors import ReparseFailure, ResponseRejected
from conflog.frontend import parse_texts
from conflog.ir import Program
from conflog.synth import (
    SCENARIO_LEVEL,
    Decision,
    GeneratorResponse,
    LogDraft,
    Scenario,
    build_request,
    classify_scenario,
    enhance,
    inspect_existing,
    remove_line,
    rewrite_source,
    synthesize_template,
    validate_response,
)
from conflog.taint import analyze


@pytest.fixture(scope="module")
def enhanced(catalog, corpus_sources):
    return enhance(corpus_sources, catalog)


def _outcome(result, prefix):
    (o,) = [o for o in result.outcomes if o.block.block_id.startswith(prefix)]
    return o


def _block(analysis, prefix):
    (b,) = [b for b in analysis.blocks if b.block_id.startswith(prefix)]
    return b


KEEP = """class MRConfig {
    static String LOCAL_DIR = "mapred.local.dir";
}
class JobConf {
    static String X = "fs.defaultFS";
    Properties props;
    public String get(String name) {
        return this.props.get(name);
    }
}
class Tracker {
    public void check(JobConf job) {
        String dirs = job.get(MRConfig.LOCAL_DIR);
        if (dirs == null) {
            LOG.warn("No valid local directories in property: mapred.local.dir");
        }
    }
}
"""


def test_keep_existing_informative_log(catalog):
    a = analyze(parse_texts({"K.mj": KEEP}), catalog)
    (block,) = a.blocks
    decision, rationale = inspect_existing(block, a.program)
    assert decision is Decision.KEEP_EXISTING
    assert "mapred.local.dir" in rationale


def test_no_logs_means_inject(corpus_analysis):
    decision, _ = inspect_existing(_block(corpus_analysis, "JobSplitWriter"), corpus_analysis.program)
    assert decision is Decision.INJECT


def test_uninformative_log_flagged(corpus_analysis, enhanced):
    block = _block(corpus_analysis, "HttpServer2")
    decision, _ = inspect_existing(block, corpus_analysis.program)
    assert decision is Decision.INJECT_AND_FLAG_REDUNDANT
    o = _outcome(enhanced, "HttpServer2")
    assert o.redundant_lines == (8,)
    assert 'LOG.info("done");' in enhanced.sources["cases/HttpServer2.mj"]  # flagged, never deleted


@pytest.mark.parametrize(
    "prefix,scenario",
    [
        ("DatanodeManager", Scenario.FALLBACK_PATH),
        ("SharedCacheConfig", Scenario.SERVICE_SWITCH),
        ("BlockReceiver", Scenario.CONFIG_PROCESSING),
        ("TrashPolicy", Scenario.SERVICE_SWITCH),
        ("TaskTracker", Scenario.FALLBACK_PATH),
    ],
)
def test_scenarios(corpus_analysis, prefix, scenario):
    assert classify_scenario(_block(corpus_analysis, prefix), corpus_analysis.program) is scenario


def test_shared_cache_template(enhanced):
    d = _outcome(enhanced, "SharedCacheConfig").draft
    assert d.level == "WARN"
    assert d.guidance == "Please set 'mapreduce.framework.name' to 'yarn'."
    assert d.variables == ("conf.get(MRConfig.FRAMEWORK_NAME)",)
    assert d.insert_line == 7  # before the early return, inside the guard


def test_bound_template_names_key(enhanced):
    d = _outcome(enhanced, "JobSplitWriter").draft
    assert "mapreduce.job.max.split.locations" in d.message_template
    assert "locations" in d.message_template.split(":", 1)[1]
    assert d.variables == ("maxBlockLocations",)
    assert d.level == "INFO"


def test_every_draft_meets_contract(enhanced):
    for o in enhanced.outcomes:
        if o.draft is None:
            continue
        d = o.draft
        d.check()
        assert d.level == SCENARIO_LEVEL[d.scenario]
        assert any(k in d.message_template for k in o.block.parameters)
        lo, hi = o.block.handling_span
        assert lo <= d.insert_line <= hi or d.insert_line == o.block.entry_line + 1


def test_template_backend_deterministic(corpus_analysis):
    b = _block(corpus_analysis, "DatanodeManager")
    p = corpus_analysis.program
    first = synthesize_template(b, Scenario.FALLBACK_PATH, Decision.INJECT, p)
    second = synthesize_template(b, Scenario.FALLBACK_PATH, Decision.INJECT, p)
    assert first == second and first.statement() == second.statement()


def test_keep_existing_is_not_drafted(corpus_analysis):
    b = _block(corpus_analysis, "DatanodeManager")
    with pytest.raises(ValueError):
        synthesize_template(b, Scenario.FALLBACK_PATH, Decision.KEEP_EXISTING, corpus_analysis.program)


def test_one_statement_per_block(corpus_sources, enhanced):
    for path, text in enhanced.sources.items():
        added = text.count("LOG.") - corpus_sources[path].count("LOG.")
        blocks = sum(1 for o in enhanced.injected if o.draft.file == path)
        assert added == blocks


def test_strip_injected_restores_original(corpus_sources, enhanced):
    for path in corpus_sources:
        lines = sorted((o.final_line for o in enhanced.injected if o.draft.file == path), reverse=True)
        text = enhanced.sources[path]
        for line in lines:
            text = remove_line(text, line)
        assert text == corpus_sources[path]


def test_keep_existing_rewrite_is_identity(corpus_sources):
    draft = LogDraft("b", "cases/Balancer.mj", Decision.KEEP_EXISTING, Scenario.FALLBACK_PATH, "WARN", 3, "x", (), "", ())
    assert rewrite_source(corpus_sources, draft) == corpus_sources["cases/Balancer.mj"]


def test_unparsable_insertion_rejected(corpus_sources, enhanced):
    d = _outcome(enhanced, "SharedCacheConfig").draft
    from dataclasses import replace

    bad = replace(d, insert_line=2)  # between the class header and its first member
    with pytest.raises(ReparseFailure):
        rewrite_source(corpus_sources, bad)
    outside = replace(d, insert_line=9)  # after the guard closes
    with pytest.raises(ReparseFailure):
        rewrite_source(corpus_sources, outside, entry_line=6)


def test_idempotent(catalog, enhanced):
    again = enhance(enhanced.sources, catalog)
    assert again.injected == []
    assert again.sources == enhanced.sources
    assert all(o.decision is Decision.KEEP_EXISTING for o in again.outcomes)


# --- external generator gates ---------------------------------------------------------


@pytest.fixture()
def shared_request(corpus_analysis, corpus_sources):
    block = _block(corpus_analysis, "SharedCacheConfig")
    request, first = build_request(block, corpus_sources, corpus_analysis.program)
    return block, request, first


def _response(request, offset, statements):
    lines = request.code_whole.splitlines()
    new = lines[:offset] + statements + lines[offset:]
    m = re.match(r"\s*LOG\.(\w+)\(\"([^\"]*)\"", statements[0])
    return GeneratorResponse("\n".join(new), offset + 1, m.group(1).upper(), m.group(2))


GOOD = '            LOG.warn("Shared cache disabled: {} is not yarn. Please set \'mapreduce.framework.name\' to \'yarn\'.", conf.get(MRConfig.FRAMEWORK_NAME));'


def test_request_shape(shared_request):
    _, request, first = shared_request
    assert request.code_specified in request.code_whole
    assert request.params == ("mapreduce.framework.name",)
    assert first == 5


def test_valid_response_accepted(shared_request):
    block, request, first = shared_request
    level, line, variables, template = validate_response(request, _response(request, 2, [GOOD]), block, first)
    assert (level, line) == ("WARN", 7)
    assert variables == ("conf.get(MRConfig.FRAMEWORK_NAME)",)
    assert template.startswith("Shared cache disabled")


def test_multi_insert_rejected(shared_request):
    block, request, first = shared_request
    with pytest.raises(ResponseRejected, match="multi-insert"):
        validate_response(request, _response(request, 2, [GOOD, GOOD]), block, first)


def test_uninformative_rejected(shared_request):
    block, request, first = shared_request
    stmt = '            LOG.warn("Shared cache disabled");'
    with pytest.raises(ResponseRejected, match="not configuration-informative"):
        validate_response(request, _response(request, 2, [stmt]), block, first)


def test_constant_reference_counts_as_informative(shared_request):
    block, request, first = shared_request
    stmt = '            LOG.warn("Shared cache disabled: {}", MRConfig.FRAMEWORK_NAME);'
    consts = {"MRConfig.FRAMEWORK_NAME": "mapreduce.framework.name"}
    validate_response(request, _response(request, 2, [stmt]), block, first, consts)


def test_arity_and_placement_gates(shared_request):
    block, request, first = shared_request
    arity = '            LOG.warn("mapreduce.framework.name {} {}", conf);'
    with pytest.raises(ResponseRejected, match="placeholder"):
        validate_response(request, _response(request, 2, [arity]), block, first)
    with pytest.raises(ResponseRejected, match="outside"):
        validate_response(request, _response(request, 5, [GOOD]), block, first)


class _Stub(BaseHTTPRequestHandler):
    reply = None

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append(body)
        payload = type(self).reply(body)
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub():
    _Stub.seen = []
    server = HTTPServer(("127.0.0.1", 0), _Stub)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


def _one_case(corpus_sources, name):
    keep = {p: t for p, t in corpus_sources.items() if p.startswith("conf/") or p.endswith(name)}
    return keep


def test_external_backend_accepts_good_reply(stub, catalog, corpus_sources):
    def reply(body):
        lines = body["code_whole"].splitlines()
        new = lines[:2] + [GOOD] + lines[2:]
        return {"enhanced_code": "\n".join(new), "inserted_line": 3, "level": "warn", "message_template": "x", "variables": []}

    _Stub.reply = staticmethod(reply)
    sources = _one_case(corpus_sources, "SharedCacheConfig.mj")
    url = f"http://127.0.0.1:{stub.server_address[1]}/"
    result = enhance(sources, catalog, backend="external", endpoint=url)
    (o,) = result.injected
    assert o.draft.backend == "external"
    assert "Shared cache disabled" in result.sources["cases/SharedCacheConfig.mj"]
    assert _Stub.seen and set(_Stub.seen[0]) == {"code_whole", "code_specified", "params", "existing_logs"}


def test_external_backend_falls_back_on_bad_reply(stub, catalog, corpus_sources):
    _Stub.reply = staticmethod(lambda body: {"enhanced_code": body["code_whole"]})
    sources = _one_case(corpus_sources, "SharedCacheConfig.mj")
    url = f"http://127.0.0.1:{stub.server_address[1]}/"
    result = enhance(sources, catalog, backend="external", endpoint=url)
    (o,) = result.injected
    assert o.draft.backend.startswith("template-fallback")


def test_external_backend_unreachable(catalog, corpus_sources):
    sources = _one_case(corpus_sources, "SharedCacheConfig.mj")
    result = enhance(sources, catalog, backend="external", endpoint="http://127.0.0.1:9/")
    (o,) = result.injected
    assert o.draft.backend.startswith("template-fallback")
    assert "Please set 'mapreduce.framework.name' to 'yarn'" in result.sources["cases/SharedCacheConfig.mj"]
