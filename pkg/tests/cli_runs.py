"""Run every manifest-writing CLI command once; shared by the CLI and acceptance tests."""

from __future__ import annotations

import json
from pathlib import Path

from click.testing import CliRunner

from synthq.cli import MANIFEST, main


def invoke(*args: str):
    result = CliRunner().invoke(main, list(args), catch_exceptions=False)
    if result.exit_code != 0:
        raise AssertionError(f"synthq {' '.join(args)} exited {result.exit_code}:\n{result.output}")
    return result


def run_pipeline(root: Path, demo: dict[str, Path]) -> dict[str, Path]:
    """Returns command name -> output directory."""
    d = {k: str(v) for k, v in demo.items()}
    dirs = {name: root / name for name in
            ("synth-catalog", "ingest", "qgen", "index", "suggest", "search", "simulate", "sweep", "judge")}
    invoke("synth-catalog", "--seed", "3", "--counts", "8,5,5", "--log-size", "60", "--out", str(dirs["synth-catalog"]))
    invoke("ingest", "--catalog", d["catalog"], "--log", d["log"], "--out", str(dirs["ingest"]))
    invoke("qgen", "--catalog", str(dirs["synth-catalog"] / "catalog.jsonl"), "--out", str(dirs["qgen"]))
    invoke("index", "--catalog", d["catalog"], "--log", d["log"], "--gen", d["gen"], "--out", str(dirs["index"]))
    invoke("suggest", "--prefix", "audiob", "--n", "3", "--index-dir", str(dirs["index"]), "--out", str(dirs["suggest"]))
    invoke("search", "--query", "christian audiobooks", "--index-dir", str(dirs["index"]), "--out", str(dirs["search"]))
    invoke("simulate", "--catalog", d["catalog"], "--log", d["log"], "--gen", d["gen"],
           "--configs", "1,2,3,4", "--seed", "7", "--out", str(dirs["simulate"]))
    invoke("sweep", "--catalog", d["catalog"], "--log", d["log"], "--gen", d["gen"],
           "--fractions", "0,0.5,1", "--out", str(dirs["sweep"]))
    invoke("judge", "--catalog", d["catalog"], "--gen", d["gen"], "--out", str(dirs["judge"]))
    return dirs


def replay_matches(out_dir: Path, replay_dir: Path) -> tuple[bool, list[str]]:
    manifest = json.loads((out_dir / MANIFEST).read_text())
    invoke("replay", str(out_dir / MANIFEST), "--out", str(replay_dir))
    diffs = [name for name in manifest["outputs"]
             if (out_dir / name).read_bytes() != (replay_dir / name).read_bytes()]
    return not diffs, diffs
