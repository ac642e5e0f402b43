"""50-case CLI-vs-service comparison suite, shared by the service and acceptance tests."""

from __future__ import annotations

import json
from pathlib import Path
from urllib.parse import urlencode

import httpx

from .cli_runs import invoke

SUGGEST_CASES = [
    ("audiob", 3), ("audiob", 10), ("a", 1), ("a", 5), ("a", 20), ("", 4), ("c", 10), ("ch", 2),
    ("christian", 10), ("f", 10), ("fr", 3), ("h", 10), ("l", 6), ("lo", 10), ("love", 2),
    ("m", 10), ("p", 10), ("po", 7), ("s", 10), ("t", 10), ("the", 10), ("zzz", 10),
    ("Audiobooks  For", 5), ("w", 10), ("b", 10),
]
SEARCH_CASES = [
    ("christian audiobooks", 10), ("christian", 3), ("audiobooks", 10), ("love", 5), ("french", 10),
    ("children", 1), ("podcast", 10), ("music", 10), ("history", 10), ("the", 10), ("mystery", 4),
    ("qwertyuiop", 10), ("jazz playlist", 10), ("romance audiobooks", 10), ("kids stories", 10),
    ("faith", 2), ("news", 10), ("true crime", 10), ("fantasy", 10), ("sleep", 10), ("workout", 10),
    ("comedy", 10), ("science fiction", 10), ("self help", 3), ("AUDIOBOOKS!!", 10),
]
assert len(SUGGEST_CASES) + len(SEARCH_CASES) == 50


def _cli_rows(*args: str) -> list[dict]:
    return [json.loads(line) for line in invoke(*args).output.splitlines() if line.strip()]


def compare(base_url: str, index_dir: Path) -> list[str]:
    """Returns a description of every case where the service and CLI disagree."""
    failures = []
    with httpx.Client(base_url=base_url, timeout=10) as client:
        for prefix, n in SUGGEST_CASES:
            body = client.get("/suggest?" + urlencode({"prefix": prefix, "n": n})).json()
            cli = _cli_rows("suggest", "--prefix", prefix, "--n", str(n), "--index-dir", str(index_dir))
            if body != cli:
                failures.append(f"suggest {prefix!r} n={n}")
        for q, k in SEARCH_CASES:
            body = client.get("/search?" + urlencode({"q": q, "k": k})).json()
            cli = _cli_rows("search", "--query", q, "--k", str(k), "--index-dir", str(index_dir))
            if body != cli:
                failures.append(f"search {q!r} k={k}")
    return failures
