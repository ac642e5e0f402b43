"""Rule-based (and optional LLM) judging of synthetic queries.

The four rules are proxies for the judging dimensions:

* quality: well-formed text whose tokens are all known words;
* relevancy: some content token also occurs in the entity's metadata;
* broadness: shared by several entities, or free of source-title words;
* diversity: no two queries of one audiobook are near-duplicates by token Jaccard.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from itertools import combinations
from pathlib import Path

from .catalog import Catalog, Entity
from .qgen import GenerationRecord, SyntheticQuery, extract_json
from .textproc import analyze, load_stopwords

SUFFIX_TOKENS = frozenset({"audiobook", "audiobooks"})
_ALLOWED_PUNCT = frozenset(" '-")


class JudgeError(ValueError):
    pass


def _data_file(name: str) -> str:
    return str(resources.files("synthq") / "data" / name)


@lru_cache(maxsize=4)
def load_wordlist(path: str | None = None) -> frozenset[str]:
    text = Path(path or _data_file("wordlist.txt")).read_text(encoding="utf-8")
    return frozenset(analyze(text))


@dataclass(frozen=True)
class JudgeRules:
    min_length: int = 3
    max_length: int = 120
    broadness_threshold: int = 2
    max_jaccard: float = 0.8
    stopwords: str | None = None  # defaults to the shipped list
    wordlist: str | None = None

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> JudgeRules:
        data = dict(data or {})
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})

    def stop_tokens(self) -> frozenset[str]:
        return load_stopwords(self.stopwords or _data_file("stopwords.txt"))


DEFAULT_RULES = JudgeRules()


def corpus_vocabulary(catalog: Catalog, rules: JudgeRules = DEFAULT_RULES) -> frozenset[str]:
    """Every analyzed metadata token in the catalog plus the shipped word list."""
    vocab = set(load_wordlist(rules.wordlist))
    for e in catalog.values():
        vocab.update(analyze(_metadata_text(e)))
    return frozenset(vocab)


def _metadata_text(e: Entity) -> str:
    return " ".join([e.title, *e.authors, e.description, *e.genres])


@dataclass(frozen=True)
class Verdict:
    query_text: str
    quality: bool
    relevancy: bool
    broadness: bool
    path: str = "rule"
    entity_id: str | None = None


@dataclass(frozen=True)
class DiversityVerdict:
    entity_id: str
    diverse: bool
    path: str = "rule"


@dataclass(frozen=True)
class JudgeSummary:
    quality_pct: float | None
    relevancy_pct: float | None
    broadness_pct: float | None
    diversity_pct: float | None
    n_queries: int
    n_audiobooks: int
    paths: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["paths"] = list(self.paths)
        return d


def judge_quality(q: str, vocabulary: Iterable[str] | None = None, rules: JudgeRules = DEFAULT_RULES) -> bool:
    if not q or not rules.min_length <= len(q) <= rules.max_length:
        return False
    if any(a.isspace() and b.isspace() for a, b in zip(q, q[1:])):
        return False
    if not all(ch.isalnum() or ch in _ALLOWED_PUNCT for ch in q):
        return False
    known = load_wordlist(rules.wordlist)
    vocab = set(vocabulary) if vocabulary is not None else set()
    tokens = analyze(q)
    return bool(tokens) and all(t in vocab or t in known for t in tokens)


def content_tokens(q: str, rules: JudgeRules = DEFAULT_RULES) -> set[str]:
    stop = rules.stop_tokens()
    return {t for t in analyze(q) if t not in SUFFIX_TOKENS and t not in stop}


def judge_relevancy(q: str, entity: Entity, rules: JudgeRules = DEFAULT_RULES) -> bool:
    return bool(content_tokens(q, rules) & set(analyze(_metadata_text(entity))))


def judge_broadness(q: SyntheticQuery, catalog: Catalog, threshold: int | None = None,
                    rules: JudgeRules = DEFAULT_RULES) -> bool:
    threshold = rules.broadness_threshold if threshold is None else threshold
    if threshold < 1:
        raise JudgeError("threshold must be >= 1")
    if q.entity_count >= threshold:
        return True
    title_tokens: set[str] = set()
    for eid in q.source_entity_ids:
        if eid in catalog:
            title_tokens |= content_tokens(catalog[eid].title, rules)
    return not (content_tokens(q.text, rules) & title_tokens)


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def judge_diversity(queries: Sequence[str], max_jaccard: float | None = None,
                    rules: JudgeRules = DEFAULT_RULES) -> bool:
    if not queries:
        raise JudgeError("diversity needs at least one query")
    limit = rules.max_jaccard if max_jaccard is None else max_jaccard
    sets = [set(analyze(q)) for q in queries]
    return all(jaccard(a, b) <= limit for a, b in combinations(sets, 2))


def _pct(flags: Sequence[bool]) -> float | None:
    return 100.0 * sum(flags) / len(flags) if flags else None


def summarize(verdicts: Sequence[Verdict], diversity_verdicts: Sequence[DiversityVerdict] = ()) -> JudgeSummary:
    paths = sorted({v.path for v in verdicts} | {d.path for d in diversity_verdicts})
    return JudgeSummary(
        _pct([v.quality for v in verdicts]),
        _pct([v.relevancy for v in verdicts]),
        _pct([v.broadness for v in verdicts]),
        _pct([d.diverse for d in diversity_verdicts]),
        len(verdicts),
        len(diversity_verdicts),
        tuple(paths),
    )


def judge_records(
    records: Iterable[GenerationRecord],
    catalog: Catalog,
    rules: JudgeRules = DEFAULT_RULES,
    vocabulary: frozenset[str] | None = None,
) -> tuple[list[Verdict], list[DiversityVerdict]]:
    """Rule verdicts for every (audiobook, query) pair and one diversity verdict per audiobook."""
    vocab = vocabulary if vocabulary is not None else corpus_vocabulary(catalog, rules)
    verdicts, diversity = [], []
    for rec in sorted(records, key=lambda r: r.entity_id):
        if not rec.queries:
            continue
        entity = catalog[rec.entity_id]
        for q in rec.queries:
            verdicts.append(Verdict(
                q.text,
                judge_quality(q.text, vocab, rules),
                judge_relevancy(q.text, entity, rules),
                judge_broadness(q, catalog, rules=rules),
                "rule",
                rec.entity_id,
            ))
        diversity.append(DiversityVerdict(rec.entity_id, judge_diversity(rec.query_texts(), rules=rules)))
    return verdicts, diversity


# --- LLM judge -------------------------------------------------------------

_JUDGE_EXAMPLES = (
    ("cozy mystery audiobooks", {"title": "Murder at the Bakery", "genres": ["Fiction / Mystery / Cozy"]},
     {"quality": True, "relevancy": True, "broadness": True}),
    ("murder at the bakery audiobok", {"title": "Murder at the Bakery", "genres": ["Fiction / Mystery / Cozy"]},
     {"quality": False, "relevancy": True, "broadness": False}),
    ("space opera audiobooks", {"title": "Letters to My Garden", "genres": ["Gardening"]},
     {"quality": True, "relevancy": False, "broadness": True}),
)

JUDGE_KEYS = ("quality", "relevancy", "broadness")


def build_judge_prompt(q: str, entity: Entity) -> str:
    lines = [
        "Grade a search query written for an audiobook. Answer with a JSON object of booleans:",
        "- quality: complete, well formatted, no misspellings",
        "- relevancy: matches the audiobook metadata given",
        "- broadness: names a general topic or genre rather than this one book",
        "",
    ]
    for query, meta, answer in _JUDGE_EXAMPLES:
        lines += [f"Query: {json.dumps(query)}", f"Audiobook: {json.dumps(meta, sort_keys=True)}",
                  f"Answer: {json.dumps(answer)}", ""]
    meta = {"title": entity.title, "authors": list(entity.authors),
            "description": entity.description, "genres": list(entity.genres)}
    lines += [f"Query: {json.dumps(q, ensure_ascii=False)}",
              f"Audiobook: {json.dumps(meta, ensure_ascii=False, sort_keys=True)}",
              "Answer:"]
    return "\n".join(lines)


def parse_judge_response(raw: str, query_text: str = "", entity_id: str | None = None) -> Verdict:
    try:
        data = extract_json(raw)
    except (json.JSONDecodeError, TypeError) as exc:
        raise JudgeError(f"malformed judge response: {exc}") from None
    if not isinstance(data, dict):
        raise JudgeError("judge response is not a JSON object")
    missing = [k for k in JUDGE_KEYS if k not in data]
    if missing:
        raise JudgeError(f"judge response missing {', '.join(missing)}")
    if not all(isinstance(data[k], bool) for k in JUDGE_KEYS):
        raise JudgeError("judge fields must be booleans")
    return Verdict(query_text, data["quality"], data["relevancy"], data["broadness"], "llm", entity_id)


def llm_judge_records(records: Iterable[GenerationRecord], catalog: Catalog, client,
                      rules: JudgeRules = DEFAULT_RULES) -> tuple[list[Verdict], list[DiversityVerdict]]:
    """LLM verdicts per (audiobook, query); diversity stays rule-based."""
    pairs = [(rec, q) for rec in sorted(records, key=lambda r: r.entity_id) for q in rec.queries]
    prompts = [build_judge_prompt(q.text, catalog[rec.entity_id]) for rec, q in pairs]
    responses = client.complete_many(prompts)
    verdicts = [parse_judge_response(r.text, q.text, rec.entity_id) for (rec, q), r in zip(pairs, responses)]
    seen = {}
    for rec, _ in pairs:
        seen[rec.entity_id] = rec
    diversity = [DiversityVerdict(eid, judge_diversity(rec.query_texts(), rules=rules))
                 for eid, rec in seen.items()]
    return verdicts, diversity


VERDICT_COLUMNS = ("query_text", "quality", "relevancy", "broadness", "path")


def write_verdicts_csv(verdicts: Iterable[Verdict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VERDICT_COLUMNS)
        for v in verdicts:
            w.writerow([v.query_text, str(v.quality).lower(), str(v.relevancy).lower(),
                        str(v.broadness).lower(), v.path])


def read_verdicts_csv(path: str | Path) -> list[Verdict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            Verdict(row["query_text"], row["quality"] == "true", row["relevancy"] == "true",
                    row["broadness"] == "true", row["path"])
            for row in csv.DictReader(fh)
        ]
