"""Entities, query logs and JSON-lines ingestion."""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .textproc import normalize_query

logger = logging.getLogger(__name__)


class EntityType(str, Enum):
    AUDIOBOOK = "audiobook"
    PLAYLIST = "playlist"
    PODCAST = "podcast"


ENTITY_TYPES = tuple(EntityType)


class CatalogError(ValueError):
    """Raised on invalid catalog or query-log input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Entity:
    id: str
    entity_type: EntityType
    title: str
    authors: tuple[str, ...] = ()
    description: str = ""
    genres: tuple[str, ...] = ()
    popularity: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise CatalogError("entity id must be a non-empty string")
        if not isinstance(self.entity_type, EntityType):
            try:
                object.__setattr__(self, "entity_type", EntityType(self.entity_type))
            except ValueError:
                raise CatalogError(f"unknown entity_type {self.entity_type!r}") from None
        if not self.popularity >= 0:
            raise CatalogError(f"popularity must be >= 0 for {self.id!r}")
        object.__setattr__(self, "authors", tuple(self.authors))
        object.__setattr__(self, "genres", tuple(self.genres))
        object.__setattr__(self, "popularity", float(self.popularity))

    @classmethod
    def from_dict(cls, data: Mapping) -> Entity:
        missing = {"id", "entity_type", "title"} - data.keys()
        if missing:
            raise CatalogError(f"missing fields: {', '.join(sorted(missing))}")
        return cls(
            id=data["id"],
            entity_type=data["entity_type"],
            title=data["title"],
            authors=tuple(data.get("authors") or ()),
            description=data.get("description") or "",
            genres=tuple(data.get("genres") or ()),
            popularity=data.get("popularity", 0.0),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["entity_type"] = self.entity_type.value
        d["authors"] = list(self.authors)
        d["genres"] = list(self.genres)
        return d


@dataclass(frozen=True)
class QueryLogRecord:
    query_text: str
    target_entity_id: str = ""
    weight: float = 1.0


class Catalog(Mapping[str, Entity]):
    """Immutable id-keyed collection of entities, kept in insertion order."""

    def __init__(self, entities: Iterable[Entity] = ()):
        self._entities: dict[str, Entity] = {}
        for e in entities:
            if e.id in self._entities:
                raise CatalogError(f"duplicate id {e.id!r}")
            self._entities[e.id] = e

    def __getitem__(self, key: str) -> Entity:
        return self._entities[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entities)

    def __len__(self) -> int:
        return len(self._entities)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Catalog):
            return NotImplemented
        return list(self._entities.values()) == list(other._entities.values())

    def __hash__(self) -> int:  # pragma: no cover - mapping identity
        return id(self)

    def __repr__(self) -> str:
        return f"Catalog({len(self)} entities)"

    def entities(self) -> list[Entity]:
        return list(self._entities.values())

    def of_type(self, entity_type: EntityType) -> list[Entity]:
        return [e for e in self._entities.values() if e.entity_type == entity_type]


def _read_json_lines(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CatalogError(f"malformed JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise CatalogError("expected a JSON object", line=lineno)
            yield lineno, obj


def load_catalog(path: str | Path) -> Catalog:
    entities: dict[str, Entity] = {}
    for lineno, obj in _read_json_lines(path):
        try:
            entity = Entity.from_dict(obj)
        except CatalogError as exc:
            raise CatalogError(str(exc), line=lineno) from None
        if entity.id in entities:
            raise CatalogError(f"duplicate id {entity.id!r}", line=lineno)
        entities[entity.id] = entity
    return Catalog(entities.values())


def write_catalog(catalog: Catalog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in catalog.values():
            fh.write(json.dumps(e.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


@dataclass
class QueryLog:
    records: list[QueryLogRecord]
    dropped: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def load_query_log(path: str | Path, min_query_len: int | None = None) -> QueryLog:
    """Read a query log; blank queries (and, optionally, short ones) are dropped.

    ``min_query_len`` keeps only queries with more than that many characters
    after normalization.
    """
    records: list[QueryLogRecord] = []
    dropped = 0
    for lineno, obj in _read_json_lines(path):
        text = obj.get("query_text")
        if not isinstance(text, str):
            raise CatalogError("query_text must be a string", line=lineno)
        text = normalize_query(text)
        weight = obj.get("weight")
        weight = 1.0 if weight is None else float(weight)
        if weight < 0:
            raise CatalogError("weight must be >= 0", line=lineno)
        if not text or (min_query_len is not None and len(text) <= min_query_len):
            dropped += 1
            continue
        records.append(QueryLogRecord(text, str(obj.get("target_entity_id", "")), weight))
    if dropped:
        logger.warning("dropped %d query-log lines from %s", dropped, path)
    return QueryLog(records, dropped)


def write_query_log(records: Iterable[QueryLogRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), ensure_ascii=False, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# desk-scale synthetic data

_FIRST = [
    "anna", "marcus", "elena", "david", "sofia", "james", "maya", "lucas", "clara",
    "omar", "ruth", "stephen", "grace", "victor", "hannah", "leo", "nora", "samuel",
]
_LAST = [
    "king", "walker", "moreau", "tanaka", "oduya", "lindqvist", "patel", "brennan",
    "castillo", "novak", "adler", "quinn", "hart", "sato", "rivers", "bloom",
]

# (genre label, words that go into descriptions)
_AUDIOBOOK_GENRES = [
    ("juvenile fiction", ["school", "friends", "summer", "adventure"]),
    ("supernatural fiction", ["ghost", "haunted", "curse", "night"]),
    ("realistic fiction", ["family", "town", "secrets", "life"]),
    ("ancient history", ["rome", "empire", "pharaoh", "war"]),
    ("self help", ["habits", "mindset", "success", "life"]),
    ("christian living", ["faith", "prayer", "hope", "church"]),
    ("science fiction", ["space", "robots", "future", "planet"]),
    ("historical romance", ["duke", "love", "ballroom", "letters"]),
    ("cozy mystery", ["detective", "murder", "village", "clues"]),
    ("business leadership", ["teams", "strategy", "startup", "success"]),
    ("true crime", ["murder", "trial", "investigation", "killer"]),
    ("epic fantasy", ["dragons", "magic", "kingdom", "quest"]),
]
_PLAYLIST_GENRES = [
    ("indie rock", ["guitar", "night", "summer", "drive"]),
    ("lofi beats", ["study", "focus", "chill", "rain"]),
    ("workout", ["gym", "run", "energy", "power"]),
    ("classical", ["piano", "orchestra", "focus", "calm"]),
    ("hip hop", ["beats", "city", "bars", "flow"]),
    ("worship", ["faith", "praise", "hope", "church"]),
    ("romance", ["love", "heart", "dance", "night"]),
    ("ambient", ["sleep", "calm", "space", "rain"]),
]
_PODCAST_GENRES = [
    ("true crime", ["murder", "investigation", "trial", "case"]),
    ("history", ["empire", "war", "rome", "revolution"]),
    ("business", ["startup", "strategy", "money", "success"]),
    ("comedy", ["jokes", "friends", "stories", "weekly"]),
    ("news", ["politics", "world", "daily", "briefing"]),
    ("self improvement", ["habits", "mindset", "growth", "life"]),
    ("religion", ["faith", "bible", "prayer", "sermon"]),
    ("technology", ["ai", "robots", "future", "code"]),
]
# phrases that the template lexicons pick up from audiobook descriptions
_AUDIOBOOK_PHRASES = [
    "spiritual growth", "global politics", "coming of age", "enemies to lovers",
    "found family", "dealing with loss", "heroic protagonist", "cultural revolution",
    "adventurous", "dark", "heartwarming", "funny", "venice", "christmas",
    "small town", "parenting", "bedtime stories", "learn japanese", "meditation",
]
_FILLER = [
    "the", "a", "of", "and", "in", "with", "story", "new", "best", "great", "world",
    "journey", "guide", "one", "more", "time", "home", "today", "voices",
]
_PODCAST_WORDS = ["episode", "show", "weekly", "interview", "hosts", "talk", "guests"]
_PLAYLIST_WORDS = ["songs", "hits", "mix", "tracks", "vibes", "playlist"]
_TITLE_WORDS = [
    "shadow", "river", "light", "storm", "garden", "silver", "empire", "heart",
    "road", "winter", "glass", "echo", "fire", "ocean", "crown", "secret",
]


def _pick(rng: np.random.Generator, pool: list, n: int = 1) -> list:
    idx = rng.choice(len(pool), size=min(n, len(pool)), replace=False)
    return [pool[i] for i in sorted(int(i) for i in idx)]


def _popularity(rng: np.random.Generator) -> float:
    # Pareto tail, rounded so the JSON form is stable
    return round(float((rng.pareto(1.5) + 1.0) * 10.0), 3)


def generate_synthetic_catalog(seed: int, counts: Mapping[str, int] | tuple[int, int, int]) -> Catalog:
    """Deterministic desk-scale catalog of audiobooks, playlists and podcasts.

    ``counts`` is either a mapping keyed by entity type or an
    (audiobook, playlist, podcast) triple.
    """
    if not isinstance(counts, Mapping):
        counts = dict(zip((t.value for t in ENTITY_TYPES), counts))
    counts = {EntityType(k).value: int(v) for k, v in counts.items()}
    if any(v < 0 for v in counts.values()):
        raise ValueError("counts must be >= 0")
    rng = np.random.default_rng(seed)
    entities: list[Entity] = []

    for i in range(counts.get("audiobook", 0)):
        gi = _pick(rng, list(range(len(_AUDIOBOOK_GENRES))), int(rng.integers(1, 3)))
        genres = [_AUDIOBOOK_GENRES[g][0] for g in gi]
        words = [w for g in gi for w in _AUDIOBOOK_GENRES[g][1]]
        n_auth = int(rng.integers(1, 3)) if rng.random() < 0.9 else 0
        authors = [
            f"{_pick(rng, _FIRST)[0]} {_pick(rng, _LAST)[0]}".title() for _ in range(n_auth)
        ]
        phrases = _pick(rng, _AUDIOBOOK_PHRASES, int(rng.integers(0, 3)))
        desc_words = _pick(rng, words, 3) + _pick(rng, _FILLER, 4)
        rng.shuffle(desc_words)
        description = " ".join(desc_words)
        if phrases:
            description += ". A story about " + " and ".join(phrases) + "."
        if rng.random() < 0.2:
            description += f" Set in {_pick(rng, ['Venice', 'Rome', 'Kyoto', 'Lagos'])[0]}."
        title = " ".join(_pick(rng, _TITLE_WORDS, 2) + _pick(rng, words, 1)).title()
        entities.append(
            Entity(f"ab{i:04d}", EntityType.AUDIOBOOK, title, tuple(authors), description,
                   tuple(g.title() for g in genres), _popularity(rng))
        )

    for kind, prefix, genre_pool, extra in (
        ("playlist", "pl", _PLAYLIST_GENRES, _PLAYLIST_WORDS),
        ("podcast", "pc", _PODCAST_GENRES, _PODCAST_WORDS),
    ):
        for i in range(counts.get(kind, 0)):
            gi = int(rng.integers(len(genre_pool)))
            genre, words = genre_pool[gi]
            desc_words = _pick(rng, words, 3) + _pick(rng, extra, 2) + _pick(rng, _FILLER, 4)
            rng.shuffle(desc_words)
            title = " ".join(_pick(rng, words, 1) + _pick(rng, _TITLE_WORDS + extra, 2)).title()
            authors: tuple[str, ...] = ()
            if kind == "podcast" and rng.random() < 0.5:
                authors = (f"{_pick(rng, _FIRST)[0]} {_pick(rng, _LAST)[0]}".title(),)
            entities.append(
                Entity(f"{prefix}{i:04d}", EntityType(kind), title, authors,
                       " ".join(desc_words), (genre.title(),), _popularity(rng))
            )
    return Catalog(entities)


# target-type mix of the synthetic log; audiobooks are the minority type
LOG_TYPE_MIX = {"audiobook": 0.1277, "playlist": 0.4347, "podcast": 0.4376}
# fraction of audiobook-targeted log queries that are broad ("audiobooks", "<genre> audiobooks")
EXPLORATORY_SHARE = 0.25


def generate_synthetic_query_log(catalog: Catalog, seed: int, n: int) -> list[QueryLogRecord]:
    """Sample ``n`` successful (query, entity) pairs skewed away from audiobooks.

    Targets are drawn per type by :data:`LOG_TYPE_MIX` and within a type
    proportionally to popularity; the query text is one to three words from
    the target's title, genre or description.
    """
    rng = np.random.default_rng(seed)
    by_type = {t.value: catalog.of_type(t) for t in ENTITY_TYPES}
    types = [t for t in LOG_TYPE_MIX if by_type[t]]
    if not types or n <= 0:
        return []
    probs = np.array([LOG_TYPE_MIX[t] for t in types])
    probs = probs / probs.sum()
    weights = {}
    for t in types:
        pop = np.array([e.popularity for e in by_type[t]], dtype=float) + 1e-9
        weights[t] = pop / pop.sum()
    out: list[QueryLogRecord] = []
    for _ in range(n):
        t = types[int(rng.choice(len(types), p=probs))]
        ent = by_type[t][int(rng.choice(len(by_type[t]), p=weights[t]))]
        source = rng.random()
        if t == "audiobook" and rng.random() < EXPLORATORY_SHARE:
            genre = ent.genres[int(rng.integers(len(ent.genres)))].lower() if ent.genres else ""
            form = int(rng.integers(3))
            text = ["audiobooks", f"{genre} audiobooks", f"{genre} books"][form] if genre else "audiobooks"
            out.append(QueryLogRecord(text, ent.id, 1.0))
            continue
        if source < 0.5:
            words = ent.title.lower().split()
        elif source < 0.8 and ent.genres:
            words = ent.genres[int(rng.integers(len(ent.genres)))].lower().split()
        else:
            words = [w for w in ent.description.lower().replace(".", " ").split() if w not in _FILLER]
        if not words:
            words = ent.title.lower().split()
        k = int(rng.integers(1, min(3, len(words)) + 1))
        start = int(rng.integers(0, len(words) - k + 1))
        out.append(QueryLogRecord(" ".join(words[start:start + k]), ent.id, 1.0))
    return out
