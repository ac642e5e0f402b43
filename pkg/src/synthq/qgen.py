"""Synthetic descriptor and query generation.

Two producers feed the same :class:`GenerationRecord` shape: a deterministic
template engine driven by shipped keyword lexicons, and an LLM path
(:func:`build_prompt` + :func:`parse_llm_response`). Downstream code only ever
sees records and aggregated :class:`SyntheticQuery` rows.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .catalog import Entity, EntityType
from .textproc import analyze, normalize_query

logger = logging.getLogger(__name__)

QUERY_SUFFIX = "audiobooks"


class DescriptorType(str, Enum):
    GENRE = "genre"
    THEME = "theme"
    CHARACTER = "character"
    MOOD = "mood"
    SETTING = "setting"
    PERSONAL_SITUATION = "personal_situation"
    STORY_TROPE = "story_trope"
    TARGET_AUDIENCE = "target_audience"
    OBJECTIVE = "objective"
    NAMED_ENTITY = "named_entity"
    QUERY = "query"
    COMPOUND_QUERY = "compound_query"

    @property
    def is_query(self) -> bool:
        return self in (DescriptorType.QUERY, DescriptorType.COMPOUND_QUERY)


DESCRIPTOR_TYPES = tuple(t for t in DescriptorType if not t.is_query)
QUERY_TYPES = (DescriptorType.QUERY, DescriptorType.COMPOUND_QUERY)
_TYPE_ORDER = {t: i for i, t in enumerate(DescriptorType)}

# categories whose descriptors come from keyword lexicons
LEXICON_TYPES = (
    DescriptorType.THEME,
    DescriptorType.CHARACTER,
    DescriptorType.MOOD,
    DescriptorType.SETTING,
    DescriptorType.PERSONAL_SITUATION,
    DescriptorType.STORY_TROPE,
    DescriptorType.TARGET_AUDIENCE,
    DescriptorType.OBJECTIVE,
)


class Provenance(str, Enum):
    TEMPLATE = "template"
    LLM = "llm"


class GenerationError(ValueError):
    def __init__(self, message: str, entity_id: str | None = None):
        self.entity_id = entity_id
        if entity_id is not None:
            message = f"{entity_id}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SyntheticQuery:
    text: str
    dtype: DescriptorType
    source_entity_ids: tuple[str, ...]
    provenance: Provenance = Provenance.TEMPLATE

    def __post_init__(self) -> None:
        dtype = DescriptorType(self.dtype)
        object.__setattr__(self, "dtype", dtype)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        object.__setattr__(self, "source_entity_ids", tuple(sorted(set(self.source_entity_ids))))
        if normalize_query(self.text) != self.text or not self.text:
            raise GenerationError(f"query text not normalized: {self.text!r}")
        if not self.source_entity_ids:
            raise GenerationError(f"query {self.text!r} has no source entities")

    @property
    def entity_count(self) -> int:
        return len(self.source_entity_ids)

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "dtype": self.dtype.value,
            "source_entity_ids": list(self.source_entity_ids),
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SyntheticQuery:
        return cls(
            data["text"],
            DescriptorType(data["dtype"]),
            tuple(data["source_entity_ids"]),
            Provenance(data.get("provenance", "template")),
        )


@dataclass
class GenerationRecord:
    entity_id: str
    descriptors: dict[DescriptorType, list[str]] = field(default_factory=dict)
    queries: list[SyntheticQuery] = field(default_factory=list)

    def __post_init__(self) -> None:
        for q in self.queries:
            if not q.dtype.is_query:
                raise GenerationError(f"{q.text!r} has non-query dtype {q.dtype.value}", self.entity_id)
            if self.entity_id not in q.source_entity_ids:
                raise GenerationError(f"query {q.text!r} does not cite its entity", self.entity_id)

    def descriptor_texts(self) -> list[str]:
        """Descriptor texts in taxonomy order."""
        return [t for d in DESCRIPTOR_TYPES for t in self.descriptors.get(d, ())]

    def query_texts(self) -> list[str]:
        return [q.text for q in self.queries]


# ---------------------------------------------------------------------------
# template engine

_CLEAN_RE = re.compile(r"[^\w\s'-]|_")


def _clean(text: str) -> str:
    """Normalize and drop characters a well-formed query would not contain."""
    return normalize_query(_CLEAN_RE.sub(" ", text))


def _lexicon_dir() -> Path:
    return Path(str(resources.files("synthq") / "data" / "lexicons"))


@lru_cache(maxsize=4)
def load_lexicons(directory: str | None = None) -> dict[DescriptorType, tuple[tuple[str, ...], ...]]:
    """Read ``<type>.txt`` keyword lists; each phrase is returned pre-tokenized."""
    base = Path(directory) if directory else _lexicon_dir()
    out: dict[DescriptorType, tuple[tuple[str, ...], ...]] = {}
    for dtype in LEXICON_TYPES:
        path = base / f"{dtype.value}.txt"
        if not path.exists():
            out[dtype] = ()
            continue
        phrases = []
        for line in path.read_text(encoding="utf-8").splitlines():
            toks = tuple(analyze(line))
            if toks:
                phrases.append(toks)
        out[dtype] = tuple(phrases)
    return out


def _contains(tokens: Sequence[str], phrase: Sequence[str]) -> bool:
    n = len(phrase)
    return any(tuple(tokens[i:i + n]) == tuple(phrase) for i in range(len(tokens) - n + 1))


def named_entity_spans(text: str) -> list[str]:
    """Runs of two or more capitalized words."""
    spans, current = [], []
    for raw in text.split():
        word = raw.strip(".,;:!?\"()[]")
        if word and word[0].isupper():
            current.append(word)
        else:
            if len(current) >= 2:
                spans.append(" ".join(current))
            current = []
            continue
        if raw != raw.rstrip(".,;:!?\")]"):
            # punctuation closes the span
            if len(current) >= 2:
                spans.append(" ".join(current))
            current = []
    if len(current) >= 2:
        spans.append(" ".join(current))
    return spans


def _dedup(items: Iterable[str]) -> list[str]:
    seen: dict[str, None] = {}
    for it in items:
        if it and it not in seen:
            seen[it] = None
    return list(seen)


def generate_template(entity: Entity, lexicon_dir: str | None = None) -> GenerationRecord:
    if entity.entity_type != EntityType.AUDIOBOOK:
        raise GenerationError("template generation needs an audiobook", entity.id)
    lexicons = load_lexicons(lexicon_dir)
    desc_tokens = analyze(entity.description)

    descriptors: dict[DescriptorType, list[str]] = {}
    descriptors[DescriptorType.GENRE] = _dedup(_clean(g) for g in entity.genres)
    for dtype in LEXICON_TYPES:
        descriptors[dtype] = _dedup(
            " ".join(p) for p in lexicons[dtype] if _contains(desc_tokens, p)
        )
    descriptors[DescriptorType.NAMED_ENTITY] = _dedup(
        _clean(s) for s in named_entity_spans(entity.description)
    )
    descriptors = {k: v for k, v in descriptors.items() if v}

    texts: list[tuple[str, DescriptorType]] = []
    for d in descriptors.get(DescriptorType.GENRE, []) + descriptors.get(DescriptorType.THEME, []):
        texts.append((f"{d} {QUERY_SUFFIX}", DescriptorType.QUERY))
    for author in entity.authors:
        a = _clean(author)
        if not a:
            continue
        for g in descriptors.get(DescriptorType.GENRE, []):
            texts.append((f"{a} {g} {QUERY_SUFFIX}", DescriptorType.COMPOUND_QUERY))
    queries, seen = [], set()
    for text, dtype in texts:
        text = normalize_query(text)
        if text in seen:
            continue
        seen.add(text)
        queries.append(SyntheticQuery(text, dtype, (entity.id,), Provenance.TEMPLATE))
    return GenerationRecord(entity.id, descriptors, queries)


# ---------------------------------------------------------------------------
# LLM prompt and response

_TYPE_INSTRUCTIONS = {
    DescriptorType.GENRE: "literary genres the book belongs to (horror, romance, detective, fantasy)",
    DescriptorType.THEME: "subjects or topics the book covers (politics, self-improvement, education)",
    DescriptorType.CHARACTER: "notable traits of the protagonist or other key characters",
    DescriptorType.MOOD: "the emotional tone a listener should expect (dark, funny, moving)",
    DescriptorType.SETTING: "places, periods or seasonal atmospheres the story is set in",
    DescriptorType.PERSONAL_SITUATION: "life circumstances the book speaks to (grief, parenting)",
    DescriptorType.STORY_TROPE: "recognizable plot devices (found family, forbidden love)",
    DescriptorType.TARGET_AUDIENCE: "who the book is for (children, family listening)",
    DescriptorType.OBJECTIVE: "activities or goals the book supports (learning a language, sleep)",
    DescriptorType.NAMED_ENTITY: "real people, places or organizations the book relates to",
    DescriptorType.QUERY: "broad search queries combining the descriptors above, ending in 'audiobooks'",
    DescriptorType.COMPOUND_QUERY: "queries pairing an author name with a broad descriptor, ending in 'audiobooks'",
}

_HEADINGS = {
    DescriptorType.QUERY: "Queries",
    DescriptorType.COMPOUND_QUERY: "Compound queries",
}

# two fixed in-context examples: metadata, then descriptors, then queries
_EXAMPLES = (
    (
        {
            "title": "The Lantern Keeper",
            "authors": ["Mira Castell"],
            "description": "An orphaned girl tends a lighthouse on a stormy island and "
                           "discovers her missing father left her a map.",
            "genres": ["Juvenile Fiction / Action & Adventure"],
        },
        {
            "descriptors": {
                "genre": ["juvenile fiction", "adventure"],
                "theme": ["family secrets"],
                "character": ["brave young heroine"],
                "mood": ["adventurous", "suspenseful"],
                "setting": ["remote island", "lighthouse"],
                "personal_situation": ["missing parent"],
                "story_trope": ["treasure map", "coming of age"],
                "target_audience": ["middle grade readers"],
                "objective": ["family listening"],
                "named_entity": [],
            },
            "queries": ["juvenile adventure audiobooks", "coming of age island audiobooks"],
            "compound_queries": ["mira castell adventure audiobooks"],
        },
    ),
    (
        {
            "title": "Quiet Power at Work",
            "authors": ["Daniel Roe"],
            "description": "A practical guide for introverts who want to lead teams "
                           "without changing who they are.",
            "genres": ["Business & Economics / Leadership"],
        },
        {
            "descriptors": {
                "genre": ["business", "leadership"],
                "theme": ["introversion", "management"],
                "character": [],
                "mood": ["encouraging"],
                "setting": ["the workplace"],
                "personal_situation": ["new manager"],
                "story_trope": [],
                "target_audience": ["professionals"],
                "objective": ["become a better leader"],
                "named_entity": [],
            },
            "queries": ["leadership audiobooks", "audiobooks for introverts"],
            "compound_queries": ["daniel roe leadership audiobooks"],
        },
    ),
)

INPUT_MARKER = "### Audiobook"
OUTPUT_MARKER = "### Output"
EXAMPLE_MARKER = "### Example"


def _escape_json(value) -> str:
    """JSON-encode ``value`` with braces inside strings escaped."""
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False).replace("{", "\\u007b").replace("}", "\\u007d")
    if isinstance(value, list):
        return "[" + ", ".join(_escape_json(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{_escape_json(k)}: {_escape_json(v)}" for k, v in value.items()) + "}"
    return json.dumps(value)


def entity_prompt_metadata(entity: Entity) -> dict:
    return {
        "title": entity.title,
        "authors": list(entity.authors),
        "description": entity.description,
        "genres": list(entity.genres),
    }


def build_prompt(entity: Entity) -> str:
    if entity.entity_type != EntityType.AUDIOBOOK:
        raise GenerationError("prompts are built for audiobooks only", entity.id)
    lines = [
        "You help listeners discover audiobooks through search.",
        "Given an audiobook's metadata, first list descriptors for each of these types:",
    ]
    for i, dtype in enumerate(DESCRIPTOR_TYPES, start=1):
        lines.append(f"{i}. {dtype.value}: {_TYPE_INSTRUCTIONS[dtype]}")
    lines.append("Then use those descriptors to write two kinds of search queries:")
    for i, dtype in enumerate(QUERY_TYPES, start=len(DESCRIPTOR_TYPES) + 1):
        lines.append(f"{i}. {_HEADINGS[dtype]} ({dtype.value}): {_TYPE_INSTRUCTIONS[dtype]}")
    lines.append(
        'Answer with one JSON object: {"descriptors": {<type>: [...]}, '
        '"queries": [...], "compound_queries": [...]}.'
    )
    for n, (meta, answer) in enumerate(_EXAMPLES, start=1):
        lines += ["", f"{EXAMPLE_MARKER} {n}", INPUT_MARKER, _escape_json(meta),
                  OUTPUT_MARKER, _escape_json(answer)]
    lines += ["", INPUT_MARKER, _escape_json(entity_prompt_metadata(entity)), OUTPUT_MARKER, ""]
    return "\n".join(lines)


def parse_prompt(prompt: str) -> dict:
    """Recover the example blocks and the input metadata from a built prompt."""
    lines = prompt.split("\n")
    examples, target = [], None
    for i, line in enumerate(lines):
        if line != INPUT_MARKER:
            continue
        meta = json.loads(lines[i + 1])
        is_example = i > 0 and lines[i - 1].startswith(EXAMPLE_MARKER)
        if is_example:
            examples.append((meta, json.loads(lines[i + 3])))
        else:
            target = meta
    return {"examples": examples, "input": target}


_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)\n\s*```", re.DOTALL)


def extract_json(raw: str):
    m = _FENCE_RE.search(raw)
    return json.loads(m.group(1) if m else raw)


def parse_llm_response(entity_id: str, raw: str) -> GenerationRecord:
    try:
        data = extract_json(raw)
    except (json.JSONDecodeError, TypeError) as exc:
        raise GenerationError(f"malformed LLM response: {exc}", entity_id) from None
    if not isinstance(data, dict):
        raise GenerationError("LLM response is not a JSON object", entity_id)

    descriptors: dict[DescriptorType, list[str]] = {}
    for key, values in (data.get("descriptors") or {}).items():
        try:
            dtype = DescriptorType(key)
        except ValueError:
            dtype = None
        if dtype is None or dtype.is_query:
            logger.warning("%s: ignoring unknown descriptor key %r", entity_id, key)
            continue
        texts = _dedup(normalize_query(v) for v in values or () if isinstance(v, str))
        if texts:
            descriptors[dtype] = texts

    queries, seen = [], set()
    for key, dtype in (("queries", DescriptorType.QUERY), ("compound_queries", DescriptorType.COMPOUND_QUERY)):
        for v in data.get(key) or ():
            text = normalize_query(v) if isinstance(v, str) else ""
            if text and text not in seen:
                seen.add(text)
                queries.append(SyntheticQuery(text, dtype, (entity_id,), Provenance.LLM))
    if not queries:
        raise GenerationError("empty generation", entity_id)
    return GenerationRecord(entity_id, descriptors, queries)


# ---------------------------------------------------------------------------
# aggregation and the generated-queries table

def aggregate_queries(records: Iterable[GenerationRecord]) -> list[SyntheticQuery]:
    """Merge queries sharing a normalized text; sources are unioned.

    dtype and provenance come from the first occurrence in (text, entity id)
    order, which keeps the result independent of record order.
    """
    occurrences = sorted(
        ((q.text, rec.entity_id, i, q) for rec in records for i, q in enumerate(rec.queries)),
        key=lambda o: o[:3],
    )
    merged: dict[str, tuple[SyntheticQuery, set[str]]] = {}
    for text, _, _, q in occurrences:
        if text in merged:
            merged[text][1].update(q.source_entity_ids)
        else:
            merged[text] = (q, set(q.source_entity_ids))
    return [
        SyntheticQuery(text, first.dtype, tuple(ids), first.provenance)
        for text, (first, ids) in merged.items()
    ]


@dataclass(frozen=True)
class DescriptorRow:
    text: str
    dtype: DescriptorType
    source_entity_ids: tuple[str, ...]
    provenance: Provenance = Provenance.TEMPLATE

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "dtype": self.dtype.value,
            "source_entity_ids": list(self.source_entity_ids),
            "provenance": self.provenance.value,
        }


def aggregate_descriptors(records: Iterable[GenerationRecord], provenance: dict[str, Provenance] | None = None) -> list[DescriptorRow]:
    merged: dict[tuple[int, str], set[str]] = {}
    prov: dict[tuple[int, str], Provenance] = {}
    for rec in sorted(records, key=lambda r: r.entity_id):
        p = (provenance or {}).get(rec.entity_id)
        if p is None:
            p = rec.queries[0].provenance if rec.queries else Provenance.TEMPLATE
        for dtype, texts in rec.descriptors.items():
            for t in texts:
                key = (_TYPE_ORDER[dtype], t)
                merged.setdefault(key, set()).add(rec.entity_id)
                prov.setdefault(key, p)
    return [
        DescriptorRow(text, DESCRIPTOR_TYPES[order], tuple(sorted(ids)), prov[(order, text)])
        for (order, text), ids in sorted(merged.items())
    ]


@dataclass
class GenerationTable:
    """The stored output of generation: aggregated queries plus descriptor rows."""

    queries: list[SyntheticQuery]
    descriptors: list[DescriptorRow] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.queries = sorted(self.queries, key=lambda q: q.text)
        self.descriptors = sorted(self.descriptors, key=lambda d: (_TYPE_ORDER[d.dtype], d.text))

    @classmethod
    def from_records(cls, records: Sequence[GenerationRecord]) -> GenerationTable:
        return cls(aggregate_queries(records), aggregate_descriptors(records))

    def records(self) -> dict[str, GenerationRecord]:
        """Per-entity records rebuilt from the table, keyed by entity id."""
        out: dict[str, GenerationRecord] = {}
        for row in self.descriptors:
            for eid in row.source_entity_ids:
                rec = out.setdefault(eid, GenerationRecord(eid))
                rec.descriptors.setdefault(row.dtype, []).append(row.text)
        for q in sorted(self.queries, key=lambda q: (_TYPE_ORDER[q.dtype], q.text)):
            for eid in q.source_entity_ids:
                out.setdefault(eid, GenerationRecord(eid)).queries.append(q)
        return dict(sorted(out.items()))

    def write(self, path: str | Path) -> None:
        rows = [q.to_dict() for q in self.queries] + [d.to_dict() for d in self.descriptors]
        rows.sort(key=lambda r: (_TYPE_ORDER[DescriptorType(r["dtype"])], r["text"]))
        with open(path, "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> GenerationTable:
        queries, descriptors = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                    dtype = DescriptorType(data["dtype"])
                    if dtype.is_query:
                        queries.append(SyntheticQuery.from_dict(data))
                    else:
                        descriptors.append(DescriptorRow(
                            normalize_query(data["text"]), dtype,
                            tuple(sorted(data["source_entity_ids"])),
                            Provenance(data.get("provenance", "template")),
                        ))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise GenerationError(f"{path} line {lineno}: {exc}") from None
        return cls(queries, descriptors)


def generate_catalog_template(entities: Iterable[Entity]) -> list[GenerationRecord]:
    """Template records for every audiobook in ``entities``."""
    return [generate_template(e) for e in entities if e.entity_type == EntityType.AUDIOBOOK]
