import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from qualcode import cli
from qualcode.pipeline import read_manifest

BASE = ["--seed", "5", "--n", "30", "--N", "2"]


def args(fixture_csv, out, *extra):
    return ["--corpus", str(fixture_csv), *BASE, "--out", str(out), *extra]


class AlwaysFailing:
    """Answers every POST with a fixed status and counts the requests."""

    def __init__(self, status):
        self.hits = 0
        srv = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                srv.hits += 1
                self.rfile.read(int(self.headers.get("Content-Length", 0)))
                self.send_response(status)
                self.send_header("Content-Length", "2")
                self.end_headers()
                self.wfile.write(b"{}")

            def log_message(self, *a):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1/chat/completions"

    def __enter__(self):
        threading.Thread(target=self.server.serve_forever, daemon=True).start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def test_pipeline_with_replay(fixture_csv, tmp_path, capsys):
    assert cli.main(["pipeline", *args(fixture_csv, tmp_path)]) == 0
    assert "pipeline: ok" in capsys.readouterr().out
    stages = [r["stage"] for r in read_manifest(tmp_path)]
    assert stages == ["ingest", "sample", "code", "metrics", "validity", "report"]
    perf = json.loads((tmp_path / "reports" / "performance.json").read_text())
    assert all(row["Accuracy"] == "1.000" for row in perf)


def test_missing_key_exits_before_requests(fixture_csv, tmp_path, monkeypatch):
    monkeypatch.delenv("CODER_API_KEY", raising=False)
    with AlwaysFailing(200) as srv:
        status = cli.main(["pipeline", *args(fixture_csv, tmp_path), "--backend", "http",
                           "--endpoint", srv.url, "--model", "m"])
    assert status == 1 and srv.hits == 0
    assert [r["stage"] for r in read_manifest(tmp_path)] == ["ingest", "sample"]
    assert not (tmp_path / "runs").exists()


def test_backend_failure_exits_2(fixture_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("CODER_API_KEY", "k")
    with AlwaysFailing(500) as srv:
        cfg = {"corpus": str(fixture_csv), "seed": 5, "n": 30, "N": 2, "out": str(tmp_path),
               "backend": "http", "kinds": ["zero_shot"],
               "http": {"endpoint": srv.url, "model": "m", "max_retries": 1,
                        "backoff_base_ms": 1}}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert cli.main(["pipeline", "--config", str(path)]) == 2
    assert srv.hits == 2


@pytest.mark.parametrize("extra", [["--n", "0"], ["--N", "0"], ["--kinds", "bogus"],
                                   ["--backend", "noisy", "--epsilon", "1.5"],
                                   ["--backend", "http"]])
def test_validation_errors_exit_1(fixture_csv, tmp_path, extra):
    assert cli.main(["ingest", *args(fixture_csv, tmp_path), *extra]) == 1


def test_required_flags(fixture_csv, tmp_path):
    assert cli.main(["ingest", "--corpus", str(fixture_csv)]) == 1
    assert cli.main(["ingest", "--seed", "1"]) == 1
    assert cli.main(["ingest", "--corpus", str(tmp_path / "none.csv"), "--seed", "1",
                     "--out", str(tmp_path)]) == 1
    # later stages refuse to run without their inputs
    assert cli.main(["metrics", *args(fixture_csv, tmp_path / "empty")]) == 1


def test_config_file_with_overrides(fixture_csv, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"corpus": str(fixture_csv), "seed": 5, "n": 30, "N": 3,
                                "out": str(tmp_path / "ignored")}))
    out = tmp_path / "run"
    assert cli.main(["pipeline", "--config", str(path), "--N", "2", "--out", str(out),
                     "--kinds", "zero_shot,definitions"]) == 0
    samples = json.loads((out / "samples.json").read_text())
    assert len(samples["samples"]) == 2
    assert sorted(p.name for p in (out / "runs").iterdir()) == [
        "definitions_000.jsonl", "definitions_001.jsonl",
        "zero_shot_000.jsonl", "zero_shot_001.jsonl"]
    assert not (tmp_path / "ignored").exists()
    path.write_text(json.dumps({"corpus": str(fixture_csv), "seed": 5, "typo": 1}))
    assert cli.main(["ingest", "--config", str(path)]) == 1


def test_pipeline_equals_stages(fixture_csv, tmp_path):
    noisy = ["--backend", "noisy", "--epsilon", "0.3"]
    assert cli.main(["pipeline", *args(fixture_csv, tmp_path / "a", *noisy)]) == 0
    for stage in ("ingest", "sample", "code", "metrics", "validity", "report"):
        assert cli.main([stage, *args(fixture_csv, tmp_path / "b", *noisy)]) == 0
    for d in ("reports", "plots", "metrics", "runs"):
        for p in sorted((tmp_path / "a" / d).iterdir()):
            assert p.read_bytes() == (tmp_path / "b" / d / p.name).read_bytes(), p.name


def test_rerunning_metrics_is_stable(fixture_csv, tmp_path):
    noisy = ["--backend", "noisy", "--epsilon", "0.2"]
    assert cli.main(["pipeline", *args(fixture_csv, tmp_path, *noisy)]) == 0
    assert cli.main(["metrics", *args(fixture_csv, tmp_path, *noisy)]) == 0
    records = [r for r in read_manifest(tmp_path) if r["stage"] == "metrics"]
    assert len(records) == 2
    assert records[0]["outputs"] == records[1]["outputs"]
    assert records[0]["inputs"] == records[1]["inputs"]
