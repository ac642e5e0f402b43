import csv
import json

import pytest
from click.testing import CliRunner

from synthq.cli import MANIFEST, main

from .cli_runs import invoke, replay_matches, run_pipeline


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, demo_paths):
    return run_pipeline(tmp_path_factory.mktemp("cli"), demo_paths)


def _run(*args):
    return CliRunner().invoke(main, list(args))


def test_every_command_writes_manifest(pipeline):
    for name, d in pipeline.items():
        m = json.loads((d / MANIFEST).read_text())
        assert m["command"] == name
        assert m["outputs"] and all(len(h) == 64 for h in m["outputs"].values())
        assert m["argv"][0] == name and "--out" not in m["argv"]


@pytest.mark.parametrize("name", ["synth-catalog", "ingest", "qgen", "index", "suggest",
                                  "search", "simulate", "sweep", "judge"])
def test_replay_byte_identical(pipeline, tmp_path, name):
    ok, diffs = replay_matches(pipeline[name], tmp_path / name)
    assert ok, diffs


def test_simulate_outputs(pipeline):
    rows = list(csv.DictReader((pipeline["simulate"] / "share_table.csv").open()))
    assert [r["config_id"] for r in rows] == ["config1", "config2", "config3", "config4"]
    assert all(r["seed"] == "7" for r in rows)
    long = list(csv.DictReader((pipeline["simulate"] / "shares.csv").open()))
    assert len(long) == 12 and set(long[0]) == {"config_id", "entity_type", "share_percent", "query_set_size", "seed"}


def test_sweep_demo_non_decreasing(pipeline):
    rows = list(csv.DictReader((pipeline["sweep"] / "sweep.csv").open()))
    assert len(rows) == 3
    shares = [float(r["audiobook_share"]) for r in rows]
    assert shares == sorted(shares)


def test_suggest_demo_worked_example(pipeline, demo_paths):
    lines = (pipeline["suggest"] / "suggestions.jsonl").read_text().splitlines()
    texts = [json.loads(l)["text"] for l in lines]
    assert len(texts) == 3 and "audiobooks for children" in texts
    direct = _run("suggest", "--prefix", "audiob", "--n", "3", "--catalog", str(demo_paths["catalog"]),
                  "--log", str(demo_paths["log"]), "--gen", str(demo_paths["gen"]))
    assert direct.exit_code == 0
    assert [json.loads(l) for l in direct.output.splitlines()] == [json.loads(l) for l in lines]


def test_search_demo_christian(pipeline):
    first = json.loads((pipeline["search"] / "hits.jsonl").read_text().splitlines()[0])
    assert first["rank"] == 1 and first["entity_type"] == "audiobook"


def test_judge_outputs(pipeline):
    summary = json.loads((pipeline["judge"] / "summary.json").read_text())
    assert summary["n_queries"] > 0 and 0 <= summary["quality_pct"] <= 100
    header = (pipeline["judge"] / "verdicts.csv").read_text().splitlines()[0]
    assert header == "query_text,quality,relevancy,broadness,path"


def test_ingest_stats(pipeline):
    stats = json.loads((pipeline["ingest"] / "ingest_stats.json").read_text())
    assert stats["entities"] == 12 and stats["log_records"] == 10


def test_simulate_needs_gen_for_configs_2_to_4(demo_paths, tmp_path):
    r = _run("simulate", "--catalog", str(demo_paths["catalog"]), "--log", str(demo_paths["log"]),
             "--configs", "3", "--out", str(tmp_path))
    assert r.exit_code != 0 and "--gen" in r.output
    ok = _run("simulate", "--catalog", str(demo_paths["catalog"]), "--log", str(demo_paths["log"]),
              "--configs", "1", "--out", str(tmp_path))
    assert ok.exit_code == 0


def test_missing_input_file(tmp_path):
    r = _run("index", "--catalog", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o"))
    assert r.exit_code != 0 and "does not exist" in r.output


def test_bad_catalog_reports_line(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "entity_type": "audiobook", "title": "T"}\n{oops\n')
    r = _run("ingest", "--catalog", str(bad), "--out", str(tmp_path / "o"))
    assert r.exit_code != 0 and "line 2" in r.output


def test_invalid_flags(demo_paths, tmp_path):
    cat = str(demo_paths["catalog"])
    assert _run("suggest", "--prefix", "a", "--n", "0", "--catalog", cat).exit_code != 0
    assert _run("search", "--query", "a", "--k", "0", "--catalog", cat).exit_code != 0
    assert _run("suggest", "--prefix", "a").exit_code != 0  # no index source
    assert _run("simulate", "--catalog", cat, "--log", str(demo_paths["log"]), "--configs", "5",
                "--out", str(tmp_path)).exit_code != 0
    assert _run("sweep", "--catalog", cat, "--log", str(demo_paths["log"]), "--gen", str(demo_paths["gen"]),
                "--fractions", "1,0", "--out", str(tmp_path)).exit_code != 0
    assert _run("synth-catalog", "--counts", "1,2", "--out", str(tmp_path)).exit_code != 0


def test_config_file_and_flag_precedence(demo_paths, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("qac:\n  N: 2\n")
    args = ["suggest", "--prefix", "a", "--catalog", str(demo_paths["catalog"]), "--gen", str(demo_paths["gen"]),
            "--config", str(cfg)]
    assert len(invoke(*args).output.splitlines()) == 2
    assert len(invoke(*args, "--n", "4").output.splitlines()) == 4


def test_qgen_llm_via_mock(demo_paths, tmp_path, monkeypatch):
    from synthq.mock_llm import MockLlmServer

    answer = json.dumps({"queries": ["mock topic audiobooks"], "genres": ["mock"]})
    with MockLlmServer(answer) as srv:
        cfg = tmp_path / "c.yaml"
        cfg.write_text(f"llm:\n  endpoint: {srv.url}\n  backoff_seconds: 0\n")
        monkeypatch.setenv("SYNTHQ_LLM_API_KEY", "k")
        invoke("qgen", "--catalog", str(demo_paths["catalog"]), "--llm", "--config", str(cfg),
               "--out", str(tmp_path / "g"))
    rows = [json.loads(l) for l in (tmp_path / "g" / "generated.jsonl").read_text().splitlines()]
    assert any(r["text"] == "mock topic audiobooks" for r in rows)


def test_qgen_llm_without_key_fails(demo_paths, tmp_path, monkeypatch):
    monkeypatch.delenv("SYNTHQ_LLM_API_KEY", raising=False)
    r = _run("qgen", "--catalog", str(demo_paths["catalog"]), "--llm", "--out", str(tmp_path))
    assert r.exit_code != 0 and "SYNTHQ_LLM_API_KEY" in r.output


def test_version():
    assert _run("--version").exit_code == 0
