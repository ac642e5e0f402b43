"""BM25 index over entity documents, with optional document augmentation."""

from __future__ import annotations

import json
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .catalog import Entity, EntityType
from .qgen import GenerationRecord
from .textproc import DEFAULT_ANALYZER, AnalyzerConfig, analyze

FIELD_SEPARATOR = " - "
INDEX_FORMAT = "synthq-bm25"
INDEX_VERSION = 1


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    entity_type: EntityType
    text: str
    token_count: int


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    rank: int


def build_document(
    entity: Entity,
    augmentation: GenerationRecord | None = None,
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
) -> Document:
    """Lay out ``title - author - description - genres`` and, when augmenting,
    append ``- descriptors - synthetic queries``."""
    parts = [entity.title, " ".join(entity.authors), entity.description, " ".join(entity.genres)]
    if augmentation is not None:
        if augmentation.entity_id != entity.id:
            raise RetrievalError(
                f"augmentation for {augmentation.entity_id!r} given to entity {entity.id!r}"
            )
        parts.append(" ".join(augmentation.descriptor_texts()))
        parts.append(" ".join(augmentation.query_texts()))
    text = FIELD_SEPARATOR.join(parts)
    return Document(entity.id, entity.entity_type, text, len(analyze(text, analyzer)))


def build_documents(
    entities: Iterable[Entity],
    records: dict[str, GenerationRecord] | None = None,
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
) -> list[Document]:
    records = records or {}
    return [build_document(e, records.get(e.id), analyzer) for e in entities]


class InvertedIndex:
    """Immutable BM25 index stored as CSR postings.

    Documents are held in ascending ``doc_id`` order; that order is also the
    tie-break between equal scores.
    """

    def __init__(
        self,
        doc_ids: Sequence[str],
        entity_types: Sequence[EntityType],
        doc_lengths: np.ndarray,
        terms: Sequence[str],
        indptr: np.ndarray,
        post_docs: np.ndarray,
        post_tf: np.ndarray,
        params: BM25Params = BM25Params(),
        analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
    ):
        self.doc_ids = list(doc_ids)
        self.entity_types = [EntityType(t) for t in entity_types]
        self.doc_index = {d: i for i, d in enumerate(self.doc_ids)}
        self.terms = list(terms)
        self.vocab = {t: i for i, t in enumerate(self.terms)}
        self.doc_len = np.asarray(doc_lengths, dtype=np.int64)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.post_docs = np.asarray(post_docs, dtype=np.int64)
        self.post_tf = np.asarray(post_tf, dtype=np.int64)
        self.params = params
        self.analyzer = analyzer

        self.N = len(self.doc_ids)
        total = int(self.doc_len.sum())
        self.avgdl = total / self.N if self.N else 0.0
        k1, b = params.k1, params.b
        self.k1p1 = k1 + 1.0
        if self.avgdl > 0:
            self.norm = k1 * (1.0 - b + b * self.doc_len / self.avgdl)
        else:
            self.norm = np.full(self.N, k1 * (1.0 - b))
        df = np.diff(self.indptr)
        self.df = df
        self.idf = np.array(
            [math.log(1.0 + (self.N - int(n) + 0.5) / (int(n) + 0.5)) for n in df],
            dtype=np.float64,
        )
        self._scratch = np.zeros(self.N, dtype=np.float64)

    # -- views ---------------------------------------------------------------
    @property
    def postings(self) -> dict[str, list[tuple[str, int]]]:
        out = {}
        for t, term in enumerate(self.terms):
            lo, hi = self.indptr[t], self.indptr[t + 1]
            out[term] = [
                (self.doc_ids[int(d)], int(tf))
                for d, tf in zip(self.post_docs[lo:hi], self.post_tf[lo:hi])
            ]
        return out

    @property
    def doc_lengths(self) -> dict[str, int]:
        return {d: int(n) for d, n in zip(self.doc_ids, self.doc_len)}

    def term_frequency(self, term: str, doc_id: str) -> int:
        t = self.vocab.get(term)
        if t is None:
            return 0
        d = self.doc_index[doc_id]
        lo, hi = self.indptr[t], self.indptr[t + 1]
        j = lo + int(np.searchsorted(self.post_docs[lo:hi], d))
        if j < hi and self.post_docs[j] == d:
            return int(self.post_tf[j])
        return 0

    def term_ids(self, tokens: Iterable[str]) -> np.ndarray:
        """Vocabulary ids of ``tokens`` in order; unknown tokens are skipped."""
        return np.array([self.vocab[t] for t in tokens if t in self.vocab], dtype=np.int64)

    # -- scoring -------------------------------------------------------------
    def scores(self, query_tokens: Sequence[str]) -> np.ndarray:
        """Dense score vector in internal document order."""
        out = np.zeros(self.N, dtype=np.float64)
        if self.N:
            kernels.accumulate_scores(
                self.indptr, self.post_docs, self.post_tf, self.idf, self.norm,
                self.k1p1, self.term_ids(query_tokens), out,
            )
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        return (
            self.doc_ids == other.doc_ids
            and self.entity_types == other.entity_types
            and self.terms == other.terms
            and self.params == other.params
            and self.analyzer == other.analyzer
            and np.array_equal(self.doc_len, other.doc_len)
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.post_docs, other.post_docs)
            and np.array_equal(self.post_tf, other.post_tf)
        )

    # -- persistence ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "params": {"k1": self.params.k1, "b": self.params.b},
            "analyzer": self.analyzer.to_mapping(),
            "docs": [
                {"doc_id": d, "entity_type": t.value, "length": int(n)}
                for d, t, n in zip(self.doc_ids, self.entity_types, self.doc_len)
            ],
            "terms": self.terms,
            "indptr": self.indptr.tolist(),
            "post_docs": self.post_docs.tolist(),
            "post_tf": self.post_tf.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> InvertedIndex:
        if data.get("format") != INDEX_FORMAT or data.get("version") != INDEX_VERSION:
            raise RetrievalError(
                f"unsupported index format {data.get('format')!r} v{data.get('version')!r}"
            )
        docs = data["docs"]
        return cls(
            [d["doc_id"] for d in docs],
            [d["entity_type"] for d in docs],
            np.array([d["length"] for d in docs], dtype=np.int64),
            data["terms"],
            np.array(data["indptr"], dtype=np.int64),
            np.array(data["post_docs"], dtype=np.int64),
            np.array(data["post_tf"], dtype=np.int64),
            BM25Params(**data["params"]),
            AnalyzerConfig.from_mapping(data.get("analyzer")),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> InvertedIndex:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_index(
    docs: Sequence[Document],
    params: BM25Params = BM25Params(),
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER,
) -> InvertedIndex:
    seen: set[str] = set()
    for d in docs:
        if d.doc_id in seen:
            raise RetrievalError(f"duplicate doc_id {d.doc_id!r}")
        seen.add(d.doc_id)
    ordered = sorted(docs, key=lambda d: d.doc_id)
    counts = [Counter(analyze(d.text, analyzer)) for d in ordered]
    terms = sorted({t for c in counts for t in c})
    vocab = {t: i for i, t in enumerate(terms)}
    per_term: list[list[tuple[int, int]]] = [[] for _ in terms]
    for di, c in enumerate(counts):
        for t, tf in c.items():
            per_term[vocab[t]].append((di, tf))
    indptr = np.zeros(len(terms) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(p) for p in per_term]) if terms else []
    flat = [p for plist in per_term for p in plist]
    post_docs = np.array([p[0] for p in flat], dtype=np.int64)
    post_tf = np.array([p[1] for p in flat], dtype=np.int64)
    lengths = np.array([sum(c.values()) for c in counts], dtype=np.int64)
    return InvertedIndex(
        [d.doc_id for d in ordered], [d.entity_type for d in ordered], lengths,
        terms, indptr, post_docs, post_tf, params, analyzer,
    )


def bm25_score(index: InvertedIndex, query_tokens: Sequence[str], doc_id: str) -> float:
    """Score one document; each query token occurrence contributes once."""
    if doc_id not in index.doc_index:
        raise RetrievalError(f"unknown doc_id {doc_id!r}")
    d = index.doc_index[doc_id]
    score = 0.0
    for tok in query_tokens:
        tf = index.term_frequency(tok, doc_id)
        if tf == 0:
            continue
        t = index.vocab[tok]
        tf = float(tf)
        score += float(index.idf[t]) * (tf * index.k1p1) / (tf + float(index.norm[d]))
    return score


def search(index: InvertedIndex, query: str, k: int) -> list[SearchHit]:
    """Top-``k`` documents with a positive score."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    tokens = analyze(query, index.analyzer)
    if not tokens or index.N == 0:
        return []
    scores = index.scores(tokens)
    top = kernels.top_c(scores, k)
    return [
        SearchHit(index.doc_ids[int(d)], float(scores[d]), rank)
        for rank, d in enumerate(top, start=1)
    ]
