"""Shared text analyzer.

Index building, query-time search, QAC prefix handling and the rule judges all
go through :func:`analyze` / :func:`normalize_query` so their token streams agree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

# letters and digits of any script; underscore counts as a separator
_TOKEN_RE = re.compile(r"[^\W_]+")
_WS_RE = re.compile(r"\s+")


@lru_cache(maxsize=8)
def load_stopwords(path: str) -> frozenset[str]:
    words = Path(path).read_text(encoding="utf-8").split()
    return frozenset(w.lower() for w in words)


@lru_cache(maxsize=1)
def _porter():
    import snowballstemmer

    return snowballstemmer.stemmer("porter")


@dataclass(frozen=True)
class AnalyzerConfig:
    """Analyzer switches. Both are off by default."""

    stemming: bool = False
    stopwords: str | None = None  # path to a whitespace-separated word file

    @classmethod
    def from_mapping(cls, data: dict | None) -> AnalyzerConfig:
        data = data or {}
        stop = data.get("stopwords")
        if stop in ("none", ""):
            stop = None
        return cls(stemming=bool(data.get("stemming", False)), stopwords=stop)

    def to_mapping(self) -> dict:
        return {"stemming": self.stemming, "stopwords": self.stopwords}


DEFAULT_ANALYZER = AnalyzerConfig()


def _lower(text: str) -> str:
    out = text.lower()
    # a handful of code points lowercase into strings that lowercase again
    while True:
        again = out.lower()
        if again == out:
            return out
        out = again


def analyze(text: str, config: AnalyzerConfig = DEFAULT_ANALYZER) -> list[str]:
    """Lowercase ``text`` and split it on every non-alphanumeric character."""
    tokens = _TOKEN_RE.findall(_lower(text))
    if config.stopwords:
        stop = load_stopwords(config.stopwords)
        tokens = [t for t in tokens if t not in stop]
    if config.stemming:
        stemmer = _porter()
        tokens = [s for s in stemmer.stemWords(tokens) if s]
    return tokens


def normalize_query(text: str) -> str:
    """Lowercase, collapse whitespace runs to one space and trim."""
    return _WS_RE.sub(" ", _lower(text)).strip()
