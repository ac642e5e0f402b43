"""Toolkit configuration: one YAML (or JSON) file of nested keys.

Keys are addressed with dots (``qac.weights.v``); command-line flags override
file values.
"""

from __future__ import annotations

import copy
import hashlib
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import yaml

DEFAULTS: dict[str, Any] = {
    "analyzer": {"stemming": False, "stopwords": None},
    "bm25": {"k1": 1.2, "b": 0.75},
    "qac": {
        "K": 10,
        "N": 10,
        "exploratory_threshold": 2,
        "weights": {
            "v": 1.0,
            "s": 0.2,
            "source_prior": {"entity_titles": 0.0, "log_queries": 0.05, "synthetic_queries": 0.05},
        },
    },
    "simulation": {"c": 100, "synthetic_query_sample_size": None, "min_query_len": None},
    "judge": {"min_length": 3, "max_length": 120, "broadness_threshold": 2, "max_jaccard": 0.8},
    "llm": {
        "endpoint": "http://127.0.0.1:8089/v1/chat/completions",
        "model_name": "default",
        "temperature": 0.0,
        "max_output_tokens": 1024,
        "max_retries": 3,
        "max_concurrency": 4,
    },
    "service": {"host": "127.0.0.1", "port": 8080, "index_paths": None},
}


def _merge(base: dict, extra: Mapping) -> dict:
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = copy.deepcopy(v)
    return base


class Config:
    def __init__(self, data: Mapping | None = None, source: str | None = None):
        self.data = _merge(copy.deepcopy(DEFAULTS), data or {})
        self.source = source

    @classmethod
    def load(cls, path: str | Path | None) -> Config:
        if path is None:
            return cls()
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text) or {}
        if not isinstance(data, Mapping):
            raise ValueError(f"{path}: config must be a mapping")
        # allow flat dotted keys as well as nesting
        nested: dict = {}
        for key, value in data.items():
            cur = nested
            parts = str(key).split(".")
            for p in parts[:-1]:
                cur = cur.setdefault(p, {})
            if isinstance(value, Mapping) and isinstance(cur.get(parts[-1]), dict):
                _merge(cur[parts[-1]], value)
            else:
                cur[parts[-1]] = value
        return cls(nested, str(path))

    def get(self, dotted: str, default: Any = None) -> Any:
        cur: Any = self.data
        for part in dotted.split("."):
            if not isinstance(cur, Mapping) or part not in cur:
                return default
            cur = cur[part]
        return cur

    def set(self, dotted: str, value: Any) -> None:
        """Override one key; ``None`` leaves the current value alone."""
        if value is None:
            return
        cur = self.data
        parts = dotted.split(".")
        for part in parts[:-1]:
            cur = cur.setdefault(part, {})
        cur[parts[-1]] = value

    def section(self, name: str) -> dict:
        return copy.deepcopy(self.data.get(name, {}))


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
