"""Query autocomplete: per-source prefix candidates, global scores, re-ranking.

Each source keeps its completions in a sorted list, so the entries matching a
prefix form one contiguous slice found by bisection.
"""

from __future__ import annotations

import bisect
import heapq
import json
import math
import statistics
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .catalog import Catalog, QueryLogRecord
from .qgen import SyntheticQuery
from .textproc import normalize_query

QAC_FORMAT = "synthq-qac"
QAC_VERSION = 1
_MAX_CHAR = chr(0x10FFFF)


class CompletionSource(str, Enum):
    ENTITY_TITLES = "entity_titles"
    LOG_QUERIES = "log_queries"
    SYNTHETIC_QUERIES = "synthetic_queries"


SOURCES = tuple(CompletionSource)
_SOURCE_ORDER = {s: i for i, s in enumerate(SOURCES)}


class QacError(ValueError):
    pass


def broadness(entity_count: int) -> float:
    """``ln(|A| + 1)``: zero for no entities, growing with each distinct one."""
    if entity_count < 0:
        raise QacError("entity_count must be >= 0")
    return math.log(entity_count + 1)


def median_popularity(ids: Iterable[str], catalog: Catalog) -> float:
    pops = []
    for eid in ids:
        if eid not in catalog:
            raise QacError(f"unknown entity id {eid!r}")
        pops.append(catalog[eid].popularity)
    return float(statistics.median(pops)) if pops else 0.0


def global_score(query: SyntheticQuery, catalog: Catalog) -> float:
    """Median popularity of the query's source entities times its broadness."""
    return median_popularity(query.source_entity_ids, catalog) * broadness(query.entity_count)


def prefix_score(prefix: str, completion: str) -> float:
    """Length ratio of prefix to completion when the completion extends the prefix.

    An empty prefix matches everything with ``1 / len(completion)``.
    """
    p, q = normalize_query(prefix), normalize_query(completion)
    if not q or not q.startswith(p):
        return 0.0
    if not p:
        return min(1.0, 1.0 / len(q))
    return len(p) / len(q)


@dataclass(frozen=True)
class CompletionEntry:
    text: str
    source: CompletionSource
    global_score: float
    associated_entity_count: int = 0
    median_popularity: float = 0.0

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "source": self.source.value,
            "global_score": self.global_score,
            "associated_entity_count": self.associated_entity_count,
            "median_popularity": self.median_popularity,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CompletionEntry:
        return cls(d["text"], CompletionSource(d["source"]), float(d["global_score"]),
                   int(d["associated_entity_count"]), float(d["median_popularity"]))


@dataclass(frozen=True)
class CompletionCandidate:
    entry: CompletionEntry
    prefix_score: float
    rerank_score: float = 0.0

    @property
    def text(self) -> str:
        return self.entry.text

    def to_dict(self) -> dict:
        return {
            "text": self.entry.text,
            "source": self.entry.source.value,
            "v": self.prefix_score,
            "s": self.entry.global_score,
            "rerank_score": self.rerank_score,
        }


@dataclass(frozen=True)
class RerankWeights:
    """Linear re-ranker weights: ``v * prefix + s * ln(1 + global) + prior[source]``."""

    v: float = 1.0
    s: float = 0.2
    source_prior: Mapping[CompletionSource, float] = field(
        default_factory=lambda: {
            CompletionSource.ENTITY_TITLES: 0.0,
            CompletionSource.LOG_QUERIES: 0.05,
            CompletionSource.SYNTHETIC_QUERIES: 0.05,
        }
    )

    def __post_init__(self) -> None:
        prior = {CompletionSource(k): float(v) for k, v in dict(self.source_prior).items()}
        for s in SOURCES:
            prior.setdefault(s, 0.0)
        object.__setattr__(self, "source_prior", prior)
        vals = [self.v, self.s, *prior.values()]
        if not all(math.isfinite(x) for x in vals):
            raise QacError("re-rank weights must be finite")

    @classmethod
    def parse(cls, spec: str | Mapping | None) -> RerankWeights:
        """Accept a mapping, a JSON object, or ``v=1,s=0.2,log_queries=0.1``."""
        if spec is None or spec == "":
            return cls()
        if isinstance(spec, str):
            spec = spec.strip()
            if spec.startswith("{"):
                data = json.loads(spec)
            else:
                data = {}
                for part in spec.split(","):
                    key, _, val = part.partition("=")
                    data[key.strip()] = float(val)
        else:
            data = dict(spec)
        prior = dict(cls().source_prior)
        nested = data.pop("source_prior", None) or {}
        for k, v in nested.items():
            prior[CompletionSource(k)] = float(v)
        for key in list(data):
            if key.startswith("source_prior."):
                prior[CompletionSource(key.split(".", 1)[1])] = float(data.pop(key))
            elif key in CompletionSource._value2member_map_:
                prior[CompletionSource(key)] = float(data.pop(key))
        unknown = set(data) - {"v", "s"}
        if unknown:
            raise QacError(f"unknown weight keys: {sorted(unknown)}")
        return cls(float(data.get("v", cls.v)), float(data.get("s", cls.s)), prior)

    def to_dict(self) -> dict:
        return {"v": self.v, "s": self.s,
                "source_prior": {k.value: v for k, v in self.source_prior.items()}}


class QacIndex:
    """Per-source sorted completion lists; immutable once built."""

    def __init__(self, entries: Iterable[CompletionEntry] = ()):
        by_source: dict[CompletionSource, dict[str, CompletionEntry]] = {s: {} for s in SOURCES}
        for e in entries:
            text = normalize_query(e.text)
            if not text:
                continue
            if text in by_source[e.source]:
                raise QacError(f"duplicate {e.source.value} completion {text!r}")
            by_source[e.source][text] = replace(e, text=text)
        self._texts = {s: sorted(d) for s, d in by_source.items()}
        self._entries = {s: [by_source[s][t] for t in self._texts[s]] for s in SOURCES}

    def __len__(self) -> int:
        return sum(len(v) for v in self._texts.values())

    def entries(self, source: CompletionSource | None = None) -> list[CompletionEntry]:
        if source is not None:
            return list(self._entries[source])
        return [e for s in SOURCES for e in self._entries[s]]

    def matching(self, source: CompletionSource, prefix: str) -> list[CompletionEntry]:
        p = normalize_query(prefix)
        texts = self._texts[source]
        lo = bisect.bisect_left(texts, p)
        hi = bisect.bisect_right(texts, p + _MAX_CHAR, lo)
        return self._entries[source][lo:hi]

    def to_dict(self) -> dict:
        return {"format": QAC_FORMAT, "version": QAC_VERSION,
                "entries": [e.to_dict() for e in self.entries()]}

    @classmethod
    def from_dict(cls, data: Mapping) -> QacIndex:
        if data.get("format") != QAC_FORMAT or data.get("version") != QAC_VERSION:
            raise QacError("unsupported QAC index format")
        return cls(CompletionEntry.from_dict(e) for e in data["entries"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":")),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> QacIndex:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def title_entries(catalog: Catalog) -> list[CompletionEntry]:
    groups: dict[str, list[str]] = defaultdict(list)
    for e in catalog.values():
        text = normalize_query(e.title)
        if text:
            groups[text].append(e.id)
    out = []
    for text, ids in groups.items():
        med = median_popularity(ids, catalog)
        out.append(CompletionEntry(text, CompletionSource.ENTITY_TITLES, med, len(ids), med))
    return out


def log_entries(records: Iterable[QueryLogRecord], catalog: Catalog | None = None) -> list[CompletionEntry]:
    freq: dict[str, float] = defaultdict(float)
    targets: dict[str, set[str]] = defaultdict(set)
    for r in records:
        text = normalize_query(r.query_text)
        if not text:
            continue
        freq[text] += r.weight
        if catalog is not None and r.target_entity_id in catalog:
            targets[text].add(r.target_entity_id)
    out = []
    for text, f in freq.items():
        ids = sorted(targets.get(text, ()))
        med = median_popularity(ids, catalog) if catalog is not None else 0.0
        out.append(CompletionEntry(text, CompletionSource.LOG_QUERIES, f, len(ids), med))
    return out


def synthetic_entries(queries: Iterable[SyntheticQuery], catalog: Catalog) -> list[CompletionEntry]:
    out = []
    for q in queries:
        med = median_popularity(q.source_entity_ids, catalog)
        out.append(CompletionEntry(
            q.text, CompletionSource.SYNTHETIC_QUERIES,
            med * broadness(q.entity_count), q.entity_count, med,
        ))
    return out


def build_qac_index(
    catalog: Catalog,
    log_records: Iterable[QueryLogRecord] = (),
    synthetic_queries: Iterable[SyntheticQuery] = (),
) -> QacIndex:
    return QacIndex(
        title_entries(catalog)
        + log_entries(log_records, catalog)
        + synthetic_entries(synthetic_queries, catalog)
    )


def _candidate_key(c: CompletionCandidate):
    return (-c.prefix_score, -c.entry.global_score, c.entry.text)


def top_k_per_source(index: QacIndex, prefix: str, K: int) -> dict[CompletionSource, list[CompletionCandidate]]:
    """The ``K`` best prefix matches of every source, by (v desc, s desc, text)."""
    if K < 1:
        raise QacError("K must be >= 1")
    out = {}
    for source in SOURCES:
        cands = (CompletionCandidate(e, prefix_score(prefix, e.text)) for e in index.matching(source, prefix))
        out[source] = heapq.nsmallest(K, (c for c in cands if c.prefix_score > 0), key=_candidate_key)
    return out


def rerank_score(candidate: CompletionCandidate, weights: RerankWeights) -> float:
    return (
        weights.v * candidate.prefix_score
        + weights.s * math.log1p(candidate.entry.global_score)
        + weights.source_prior[candidate.entry.source]
    )


def rerank(candidates: Sequence[CompletionCandidate], N: int, weights: RerankWeights = RerankWeights()) -> list[CompletionCandidate]:
    """Top-``N`` by linear score; a text offered by several sources keeps its best."""
    if N < 1:
        raise QacError("N must be >= 1")
    best: dict[str, CompletionCandidate] = {}
    for c in candidates:
        scored = replace(c, rerank_score=rerank_score(c, weights))
        cur = best.get(scored.text)
        if cur is None or (scored.rerank_score, -_SOURCE_ORDER[scored.entry.source]) > (
            cur.rerank_score, -_SOURCE_ORDER[cur.entry.source]
        ):
            best[scored.text] = scored
    return heapq.nsmallest(N, best.values(), key=lambda c: (-c.rerank_score, c.text))


def suggest(
    index: QacIndex,
    prefix: str,
    K: int = 10,
    N: int = 10,
    weights: RerankWeights = RerankWeights(),
) -> list[CompletionCandidate]:
    per_source = top_k_per_source(index, prefix, K)
    merged = [c for s in SOURCES for c in per_source[s]]
    return rerank(merged, N, weights)


def is_exploratory(entry: CompletionEntry, threshold: int = 2) -> bool:
    """Broadness-only exploratory flag: associated with at least ``threshold`` entities."""
    return entry.associated_entity_count >= threshold
