import json
import os
import subprocess
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

import clozebias

FIXTURES = os.environ.get(
    "CLOZEBIAS_FIXTURE_DIR", os.path.join(os.path.dirname(__file__), "..", "fixtures")
)
CLI = os.environ.get("CLOZEBIAS_CLI")


def fixture(name):
    return os.path.join(FIXTURES, name)


def test_cgs_endpoints():
    assert clozebias.cgs(0.5, 0.0) == 0.5
    assert clozebias.cgs(0.5, 1.0) == 1.0
    assert clozebias.cgs(0.35, 0.3) == pytest.approx(0.35 ** 0.7, rel=1e-12)


def test_errors_carry_kind_and_exit_code():
    with pytest.raises(clozebias.ClozeBiasError) as info:
        clozebias.cgs(1.5, 0.2)
    assert info.value.kind == "precondition error"
    with pytest.raises(clozebias.ClozeBiasError) as info:
        clozebias.score(fixture("empty.jsonl"), "fix=" + fixture("emb3.txt"), mock=True)
    assert info.value.exit_code == 3


def test_embedding_table():
    table = clozebias.load_embeddings(fixture("emb3.txt"))
    assert table.dimension == 3
    assert len(table) == 38
    assert "him" in table and "HIM" in table
    sim = table.similarity(["him"], ["frosted"])
    assert sim["value"] == 0.0 and sim["oov"] == ["frosted"]


def test_mock_record_passes_validator():
    rec = clozebias.mock_score("The chef thanked her.", model_id="mock")
    assert rec["logprobs"][0] is None
    assert rec["sentence_id"] == clozebias.sentence_id("mock", rec["text"])
    line = json.dumps(rec)
    assert clozebias.validate_logprob_file(line + "\n") == []
    assert clozebias.validate_http_response("[" + line + "]") == []


def test_fixture_formats():
    with open(fixture("logprobs_valid.jsonl"), encoding="utf-8") as fh:
        assert clozebias.validate_logprob_file(fh.read()) == []
    with open(fixture("logprobs_invalid.jsonl"), encoding="utf-8") as fh:
        problems = clozebias.validate_logprob_file(fh.read())
    assert problems and all(p.startswith("line ") for p in problems)
    for name in ("http_response_valid.json", "http_response_error.json"):
        with open(fixture(name), encoding="utf-8") as fh:
            assert clozebias.validate_http_response(fh.read()) == []


def test_mock_report_matches_golden():
    report = clozebias.score(fixture("genderlex3.jsonl"), "fix=" + fixture("emb3.txt"), mock=True)
    with open(fixture("golden_report3.json"), encoding="utf-8") as fh:
        golden = json.load(fh)
    assert report == golden
    markdown = clozebias.score(
        fixture("genderlex3.jsonl"), "fix=" + fixture("emb3.txt"), mock=True, format="markdown"
    )
    assert "| context | M | W | KL | WEAT |" in markdown


def test_file_provider_report():
    report = clozebias.score(
        fixture("genderlex3.jsonl"), "fix=" + fixture("emb3.txt"), logprobs=fixture("logprobs_valid.jsonl")
    )
    assert report["config"]["model_id"] == "gpt2"
    for row in report["rows"]:
        assert sum(row["ratios"].values()) == pytest.approx(1.0, abs=1e-9)


def test_export_sentences_deduplicates():
    entries, duplicates = clozebias.export_sentences(fixture("genderlex_duplicates.jsonl"), model_id="mock")
    assert len(entries) == 4 and duplicates == 2
    for e in entries:
        assert e["sentence_id"] == clozebias.sentence_id("mock", e["text"])


def test_corpus_round_trip():
    with open(fixture("genderlex12.jsonl"), encoding="utf-8") as fh:
        canonical = clozebias.parse_corpus(fh.read())
    assert clozebias.parse_corpus(canonical) == canonical
    neutral = clozebias.neutralize(canonical, entity="someone")
    assert "chef" not in neutral.split('"template"')[1].split("\n")[0]


class _MockServer(BaseHTTPRequestHandler):
    def do_POST(self):
        if self.path != "/v1/logprobs":
            self._send(404, {"error": {"code": 404, "message": "not found"}})
            return
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        texts = body.get("texts")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            self._send(400, {"error": {"code": 400, "message": "malformed body: 'texts' must be a list of strings"}})
            return
        self._send(200, [clozebias.mock_score(t, model_id=body["model_id"]) for t in texts])

    def _send(self, status, payload):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), _MockServer)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield "http://127.0.0.1:%d" % httpd.server_address[1]
    httpd.shutdown()


def test_http_provider_matches_mock(server):
    emb = "fix=" + fixture("emb3.txt")
    over_http = clozebias.score(fixture("genderlex3.jsonl"), emb, server=server, model_id="mock")
    local = clozebias.score(fixture("genderlex3.jsonl"), emb, mock=True)
    assert over_http["rows"] == local["rows"]
    assert over_http["instances"] == local["instances"]


def _cli(*args, env=None):
    if not CLI:
        pytest.skip("CLOZEBIAS_CLI not set")
    return subprocess.run([CLI, *args], capture_output=True, text=True, env=env)


def test_cli_exit_codes():
    emb = "fix=" + fixture("emb3.txt")
    ok = _cli("score", "--corpus", fixture("genderlex3.jsonl"), "--embeddings", emb, "--mock", "--format", "json")
    assert ok.returncode == 0
    with open(fixture("golden_report3.json"), encoding="utf-8") as fh:
        assert ok.stdout == fh.read()
    assert _cli("score", "--corpus", fixture("genderlex_invalid.jsonl"), "--embeddings", emb, "--mock").returncode == 1
    down = _cli("score", "--corpus", fixture("genderlex3.jsonl"), "--embeddings", emb,
                "--server", "http://127.0.0.1:9", "--retries", "0")
    assert down.returncode == 2
    assert "http://127.0.0.1:9" in down.stderr
    assert _cli("score", "--corpus", fixture("empty.jsonl"), "--embeddings", emb, "--mock").returncode == 3
    assert _cli("validate", "--logprobs", fixture("logprobs_valid.jsonl")).returncode == 0
    assert _cli("validate", "--logprobs", fixture("logprobs_invalid.jsonl")).returncode == 1


def test_cli_uses_env_server(server):
    env = dict(os.environ, CLOZEBIAS_LM_URL=server)
    res = _cli("score", "--corpus", fixture("genderlex3.jsonl"), "--embeddings", "fix=" + fixture("emb3.txt"),
               "--model-id", "mock", "--format", "tsv", env=env)
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("embedding\tcontext\t")
