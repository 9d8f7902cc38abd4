import json
import socket
import subprocess
import sys

import pytest

from shardsearch.cli import main
from shardsearch.service import make_server
from shardsearch.storage import load_shard_dir

import fixtures


@pytest.fixture()
def indexed(tmp_path):
    fixtures.hitrate_fixture(tmp_path)
    assert main(["index", "--dataset", str(tmp_path / "dataset.jsonl"), "--repos", str(tmp_path / "repos"),
                 "--out", str(tmp_path / "shards")]) == 0
    srv = make_server(load_shard_dir(tmp_path / "shards"))
    srv.start_background()
    yield tmp_path, srv.url
    srv.stop()


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_index_prints_summary(tmp_path, capsys):
    fixtures.hitrate_fixture(tmp_path)
    code = main(["index", "--dataset", str(tmp_path / "dataset.jsonl"), "--repos", str(tmp_path / "repos"),
                 "--out", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "projA" in out and "wrote 2 shards" in out


def test_index_empty_dataset(tmp_path):
    (tmp_path / "d.jsonl").write_text("")
    assert main(["index", "--dataset", str(tmp_path / "d.jsonl"), "--repos", str(tmp_path), "--out",
                 str(tmp_path / "o")]) == 0
    assert list((tmp_path / "o").iterdir()) == []


def test_index_missing_revision_exits_1(tmp_path, capsys):
    (tmp_path / "d.jsonl").write_text(json.dumps({"id": "1", "repo": "r", "revision": "v", "path": "a"}) + "\n")
    assert main(["index", "--dataset", str(tmp_path / "d.jsonl"), "--repos", str(tmp_path), "--out",
                 str(tmp_path / "o")]) == 1


def test_retrieve_writes_one_line_per_record(indexed, capsys):
    root, url = indexed
    out = root / "out.jsonl"
    assert main(["retrieve", "--dataset", str(root / "dataset.jsonl"), "--server", url, "--mode", "cross",
                 "--out", str(out)]) == 0
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(lines) == 10 and all(x["hit"] for x in lines)
    assert lines[0]["context"].startswith("# lib/helper0.py:1-2@r1")


def test_retrieve_budget_flags(indexed):
    root, url = indexed
    out = root / "tiny.jsonl"
    assert main(["retrieve", "--dataset", str(root / "dataset.jsonl"), "--server", url, "--mode", "single",
                 "--out", str(out), "--model-max", "30", "--buffer", "0", "--top-k", "1"]) == 0
    for line in map(json.loads, out.read_text().splitlines()):
        assert line["total_tokens"] <= 30


def test_hitrate_report(indexed, capsys):
    root, url = indexed
    report = root / "report.json"
    assert main(["hitrate", "--dataset", str(root / "dataset.jsonl"), "--server", url, "--report", str(report)]) == 0
    text = capsys.readouterr().out
    assert "Hit                8            10" in text
    assert json.loads(report.read_text())["counts"]["CrossShard"] == {"hit": 10, "miss": 0}


def test_hitrate_with_revision_guard(indexed, capsys):
    root, url = indexed
    order = root / "order.json"
    order.write_text(json.dumps({"projA": ["r1", "r2"]}))
    assert main(["hitrate", "--dataset", str(root / "dataset.jsonl"), "--server", url,
                 "--revision-order", str(order), "--max-revision-order"]) == 0
    assert "Hit                8             9" in capsys.readouterr().out


def test_unreachable_server_exits_2(tmp_path):
    fixtures.hitrate_fixture(tmp_path)
    url = f"http://127.0.0.1:{_free_port()}"
    assert main(["retrieve", "--dataset", str(tmp_path / "dataset.jsonl"), "--server", url, "--mode", "single",
                 "--out", str(tmp_path / "o.jsonl")]) == 2
    assert main(["hitrate", "--dataset", str(tmp_path / "dataset.jsonl"), "--server", url]) == 2


def test_serve_port_in_use(tmp_path, capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen(1)
        port = s.getsockname()[1]
        assert main(["serve", "--shards", str(tmp_path), "--port", str(port)]) == 1
    assert "cannot bind" in capsys.readouterr().err


def test_serve_subprocess_health(tmp_path):
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "shardsearch.cli", "serve", "--shards", str(tmp_path), "--port", str(port)],
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        assert "serving 0 shards" in proc.stdout.readline()
        from shardsearch.client import HttpSearchClient

        assert HttpSearchClient(f"http://127.0.0.1:{port}").health()["shard_count"] == 0
    finally:
        proc.terminate()
        proc.wait(5)


def test_bad_mode_is_a_usage_error(tmp_path):
    # 2 is reserved for an unreachable server
    assert main(["retrieve", "--dataset", "x", "--server", "y", "--mode", "sideways", "--out", "z"]) == 1
