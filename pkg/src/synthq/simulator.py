"""Retrievability simulation over the four query-set/index configurations.

r(e) counts the (weighted) queries for which entity ``e`` ranks within the
cutoff ``c``. A configuration picks the index (plain or augmented) and the
query set (log queries, optionally extended by a seeded sample of synthetic
queries).
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels
from .catalog import ENTITY_TYPES, Catalog, EntityType, QueryLogRecord
from .qgen import GenerationRecord, SyntheticQuery
from .retrieval import BM25Params, InvertedIndex, build_documents, build_index
from .textproc import DEFAULT_ANALYZER, AnalyzerConfig, analyze

logger = logging.getLogger(__name__)


class SimulationError(ValueError):
    pass


class ConfigId(str, Enum):
    CONFIG1 = "config1"
    CONFIG2 = "config2"
    CONFIG3 = "config3"
    CONFIG4 = "config4"


# (doc_augmentation, add_synthetic_queries_to_query_set)
_FLAGS = {
    ConfigId.CONFIG1: (False, False),
    ConfigId.CONFIG2: (True, False),
    ConfigId.CONFIG3: (False, True),
    ConfigId.CONFIG4: (True, True),
}


@dataclass(frozen=True)
class SimulationConfig:
    id: ConfigId
    cutoff_c: int = 100
    synthetic_query_sample_size: int | None = None  # None: match the log size, capped at the pool
    click_fraction: float = 1.0
    random_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", ConfigId(self.id))
        if self.cutoff_c < 1:
            raise SimulationError("cutoff_c must be >= 1")
        if not 0.0 <= self.click_fraction <= 1.0:
            raise SimulationError("click_fraction must be in [0, 1]")

    @classmethod
    def preset(cls, n: int | str, **kwargs) -> SimulationConfig:
        key = str(n)
        if not key.startswith("config"):
            key = f"config{key}"
        return cls(ConfigId(key), **kwargs)

    @property
    def doc_augmentation(self) -> bool:
        return _FLAGS[self.id][0]

    @property
    def add_synthetic_queries_to_query_set(self) -> bool:
        return _FLAGS[self.id][1]


@dataclass(frozen=True)
class WeightedQuery:
    text: str
    weight: float = 1.0


@dataclass
class RetrievabilityReport:
    per_entity_r: dict[str, float]
    per_type_share: dict[EntityType, float]
    config: SimulationConfig
    query_set_size: int
    all_zero: bool = False

    @property
    def audiobook_share(self) -> float:
        return self.per_type_share[EntityType.AUDIOBOOK]


def encode_queries(index: InvertedIndex, queries: Sequence[WeightedQuery | QueryLogRecord]):
    """Pack analyzed queries into CSR arrays of vocabulary ids."""
    ptr = [0]
    terms: list[int] = []
    weights = []
    for q in queries:
        text = q.text if isinstance(q, WeightedQuery) else q.query_text
        ids = index.term_ids(analyze(text, index.analyzer))
        terms.extend(int(i) for i in ids)
        ptr.append(len(terms))
        weights.append(float(q.weight))
    return (np.array(ptr, dtype=np.int64), np.array(terms, dtype=np.int64),
            np.array(weights, dtype=np.float64))


def retrievability(index: InvertedIndex, queries: Sequence[WeightedQuery | QueryLogRecord], c: int = 100) -> dict[str, float]:
    """r(e) for every indexed entity; never-retrieved entities get 0."""
    if c < 1:
        raise SimulationError("c must be >= 1")
    if index.N == 0:
        return {}
    q_ptr, q_terms, q_w = encode_queries(index, queries)
    r = kernels.retrievability_counts(
        index.indptr, index.post_docs, index.post_tf, index.idf, index.norm, index.k1p1,
        q_ptr, q_terms, q_w, int(c), index.N,
    )
    return {d: float(v) for d, v in zip(index.doc_ids, r)}


def share_by_type(r: Mapping[str, float], catalog: Catalog) -> tuple[dict[EntityType, float], bool]:
    """Percentage of total retrievability per entity type, plus an all-zero flag."""
    sums = {t: 0.0 for t in ENTITY_TYPES}
    for eid, val in r.items():
        if eid not in catalog:
            raise SimulationError(f"unknown entity id {eid!r}")
        sums[catalog[eid].entity_type] += val
    total = sum(sums.values())
    if total <= 0:
        return {t: 0.0 for t in ENTITY_TYPES}, True
    return {t: 100.0 * v / total for t, v in sums.items()}, False


def sample_size(config: SimulationConfig, n_log: int, n_pool: int) -> int:
    if config.synthetic_query_sample_size is None:
        return min(n_log, n_pool)
    if config.synthetic_query_sample_size > n_pool:
        raise SimulationError(
            f"sample size {config.synthetic_query_sample_size} exceeds the {n_pool} synthetic queries available"
        )
    return int(config.synthetic_query_sample_size)


def build_query_set(
    config: SimulationConfig,
    log_queries: Sequence[QueryLogRecord],
    synthetic_queries: Sequence[SyntheticQuery],
    seed: int | None = None,
) -> list[WeightedQuery]:
    """Log queries, plus for configs 3/4 the first ``floor(click_fraction * size)``
    entries of a seeded permutation of the synthetic pool.

    Taking a prefix of one permutation keeps samples nested as the click
    fraction grows.
    """
    seed = config.random_seed if seed is None else seed
    out = [WeightedQuery(q.query_text, 1.0) for q in log_queries]
    if not config.add_synthetic_queries_to_query_set:
        return out
    pool = sorted(q.text for q in synthetic_queries)
    size = sample_size(config, len(log_queries), len(pool))
    take = int(np.floor(config.click_fraction * size + 1e-12))
    if take == 0:
        return out
    perm = np.random.default_rng(seed).permutation(len(pool))
    out.extend(WeightedQuery(pool[int(i)], 1.0) for i in perm[:take])
    return out


@dataclass
class Simulation:
    """Shared state for several runs over one catalog; indexes are built once."""

    catalog: Catalog
    records: Mapping[str, GenerationRecord] | None
    log_queries: Sequence[QueryLogRecord]
    synthetic_queries: Sequence[SyntheticQuery]
    params: BM25Params = BM25Params()
    analyzer: AnalyzerConfig = DEFAULT_ANALYZER
    _indexes: dict[bool, InvertedIndex] = field(default_factory=dict, repr=False)

    def index(self, augmented: bool) -> InvertedIndex:
        if augmented not in self._indexes:
            recs = self.records if augmented else None
            docs = build_documents(self.catalog.values(), recs, self.analyzer)
            self._indexes[augmented] = build_index(docs, self.params, self.analyzer)
        return self._indexes[augmented]

    def run(self, config: SimulationConfig) -> RetrievabilityReport:
        needs_gen = config.doc_augmentation or config.add_synthetic_queries_to_query_set
        if needs_gen and self.records is None:
            raise SimulationError(f"{config.id.value} needs generation records")
        queries = build_query_set(config, self.log_queries, self.synthetic_queries)
        r = retrievability(self.index(config.doc_augmentation), queries, config.cutoff_c)
        shares, all_zero = share_by_type(r, self.catalog)
        if all_zero:
            logger.warning("%s: total retrievability is zero", config.id.value)
        return RetrievabilityReport(r, shares, config, len(queries), all_zero)

    def sweep(self, fractions: Sequence[float], base: SimulationConfig | None = None) -> list[tuple[float, float]]:
        if list(fractions) != sorted(fractions) or any(not 0 <= f <= 1 for f in fractions):
            raise SimulationError("fractions must be sorted ascending within [0, 1]")
        base = base or SimulationConfig(ConfigId.CONFIG4)
        base = replace(base, id=ConfigId.CONFIG4)
        return [(f, self.run(replace(base, click_fraction=f)).audiobook_share) for f in fractions]


def _records_map(records) -> dict[str, GenerationRecord] | None:
    if records is None:
        return None
    if isinstance(records, Mapping):
        return dict(records)
    return {r.entity_id: r for r in records}


def run_configuration(
    catalog: Catalog,
    generation_records,
    log_queries: Sequence[QueryLogRecord],
    config: SimulationConfig,
    synthetic_queries: Sequence[SyntheticQuery] | None = None,
    params: BM25Params = BM25Params(),
) -> RetrievabilityReport:
    """One configuration end to end.

    ``synthetic_queries`` defaults to the aggregated queries of
    ``generation_records``.
    """
    from .qgen import aggregate_queries

    recs = _records_map(generation_records)
    if synthetic_queries is None:
        synthetic_queries = aggregate_queries(recs.values()) if recs else []
    sim = Simulation(catalog, recs, log_queries, synthetic_queries, params)
    return sim.run(config)


def sweep_click_fraction(
    catalog: Catalog,
    generation_records,
    log_queries: Sequence[QueryLogRecord],
    fractions: Sequence[float],
    base: SimulationConfig | None = None,
    synthetic_queries: Sequence[SyntheticQuery] | None = None,
    params: BM25Params = BM25Params(),
) -> list[tuple[float, float]]:
    from .qgen import aggregate_queries

    recs = _records_map(generation_records)
    if synthetic_queries is None:
        synthetic_queries = aggregate_queries(recs.values()) if recs else []
    return Simulation(catalog, recs, log_queries, synthetic_queries, params).sweep(fractions, base)


# --- CSV output --------------------------------------------------------------

SHARE_COLUMNS = ("config_id", "entity_type", "share_percent", "query_set_size", "seed")


def write_share_csv(reports: Iterable[RetrievabilityReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SHARE_COLUMNS)
        for rep in reports:
            for t in ENTITY_TYPES:
                w.writerow([rep.config.id.value, t.value, f"{rep.per_type_share[t]:.6f}",
                            rep.query_set_size, rep.config.random_seed])


def write_entity_csv(reports: Iterable[RetrievabilityReport], catalog: Catalog, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("config_id", "entity_id", "entity_type", "r"))
        for rep in reports:
            for eid in sorted(rep.per_entity_r):
                w.writerow([rep.config.id.value, eid, catalog[eid].entity_type.value,
                            f"{rep.per_entity_r[eid]:g}"])


def write_sweep_csv(points: Iterable[tuple[float, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fraction", "audiobook_share"))
        for f, s in points:
            w.writerow([f"{f:g}", f"{s:.6f}"])


def share_table_markdown(reports: Sequence[RetrievabilityReport]) -> str:
    lines = ["| config | " + " | ".join(t.value for t in ENTITY_TYPES) + " | queries |",
             "|---" * (len(ENTITY_TYPES) + 2) + "|"]
    for rep in reports:
        cells = " | ".join(f"{rep.per_type_share[t]:.2f}%" for t in ENTITY_TYPES)
        lines.append(f"| {rep.config.id.value} | {cells} | {rep.query_set_size} |")
    return "\n".join(lines)
