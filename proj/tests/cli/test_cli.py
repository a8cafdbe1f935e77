import json
import os
import subprocess
from pathlib import Path

import pytest

BIN = os.environ.get("IHANAS_BIN", "build/ihanas")
CONFIGS = Path(os.environ.get("IHANAS_CONFIGS", "configs"))


def run(*args):
    return subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, timeout=600)


def small_config(tmp_path, **over):
    cfg = json.loads((CONFIGS / "search_oracle_g15.json").read_text())
    cfg.update(population=10, offspring=10, generations=3)
    cfg.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_count():
    r = run("count")
    assert r.returncode == 0
    assert "GQA: 27" in r.stdout and "IHA: 11250" in r.stdout


def test_check_iha():
    r = run("check-iha", "--draws", 10)
    assert r.returncode == 0, r.stdout + r.stderr
    assert "FAIL" not in r.stdout


def test_search_writes_artifacts_and_is_deterministic(tmp_path):
    cfg = small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("-q", "search", "--config", cfg, "--out", a).returncode == 0
    assert run("-q", "search", "--config", cfg, "--out", b).returncode == 0
    for name in ("generations.csv", "archive.csv", "events.jsonl", "front.svg", "manifest.json"):
        assert (a / name).exists(), name
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    rows = (a / "generations.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 3


def test_refuses_overwrite(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "run"
    assert run("-q", "search", "--config", cfg, "--out", out).returncode == 0
    assert run("-q", "search", "--config", cfg, "--out", out).returncode == 2
    assert run("-q", "search", "--config", cfg, "--out", out, "--force").returncode == 0


def test_missing_field_is_config_error(tmp_path):
    cfg = json.loads((CONFIGS / "search_oracle_g15.json").read_text())
    del cfg["val_loss_max"]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(cfg))
    r = run("search", "--config", p, "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "val_loss_max" in r.stderr


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    assert run("search", "--config", p, "--out", tmp_path / "o").returncode == 2


def test_unknown_flag():
    assert run("count", "--bogus").returncode == 2


def test_pack(tmp_path):
    r = run("pack", "--genome", CONFIGS / "genome_32x960.json", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "grid.csv").exists()
    assert list(tmp_path.glob("ring_plan_*.csv"))


def test_pack_oversized_warns(tmp_path):
    r = run("pack", "--genome", CONFIGS / "genome_oversized.json", "--out", tmp_path)
    assert r.returncode == 0
    assert r.stderr.strip()


def test_surrogate_eval_oracle(tmp_path):
    corpus = tmp_path / "c.jsonl"
    assert run("corpus", "gen", "--n", 40, "--seed", 3, "--out", corpus).returncode == 0
    r = run("surrogate", "eval", "--corpus", corpus, "--model", "oracle", "--oracle-seed", 3)
    assert r.returncode == 0, r.stderr
    rep = json.loads(r.stdout)
    assert rep["tau"] == pytest.approx(1.0)
    assert rep["rho"] == pytest.approx(1.0)


def test_missing_file_exit_code(tmp_path):
    assert run("pack", "--genome", tmp_path / "nope.json").returncode == 2
