from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from synthq.catalog import Catalog, Entity, EntityType, load_catalog, load_query_log
from synthq.qgen import GenerationTable

DATA = Path(str(resources.files("synthq") / "data"))
TEST_DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def demo_paths() -> dict[str, Path]:
    d = DATA / "demo"
    return {"catalog": d / "catalog.jsonl", "log": d / "log.jsonl", "gen": d / "generated.jsonl"}


@pytest.fixture(scope="session")
def desk_paths() -> dict[str, Path]:
    d = DATA / "desk"
    return {"catalog": d / "catalog.jsonl", "log": d / "log.jsonl", "gen": d / "generated.jsonl"}


@pytest.fixture(scope="session")
def desk(desk_paths):
    catalog = load_catalog(desk_paths["catalog"])
    log = load_query_log(desk_paths["log"]).records
    table = GenerationTable.load(desk_paths["gen"])
    return catalog, log, table


@pytest.fixture(scope="session")
def demo(demo_paths):
    catalog = load_catalog(demo_paths["catalog"])
    log = load_query_log(demo_paths["log"]).records
    table = GenerationTable.load(demo_paths["gen"])
    return catalog, log, table


def audiobook(id="a1", title="A Title", authors=(), description="", genres=(), popularity=1.0) -> Entity:
    return Entity(id, EntityType.AUDIOBOOK, title, tuple(authors), description, tuple(genres), popularity)


@pytest.fixture
def small_catalog() -> Catalog:
    return Catalog([
        audiobook("a1", "Ancient Rome", ["Mary Beard"], "The empire of Rome.", ["Ancient History"], 10),
        audiobook("a2", "Pharaohs", ["Toby Wilkinson"], "Egypt and its kings.", ["Ancient History"], 20),
        audiobook("a3", "The Hobbit", ["J.R.R. Tolkien"], "A quest with a dragon.", ["Fantasy"], 30),
        Entity("p1", EntityType.PLAYLIST, "Roman Holiday Mix", (), "Songs for travel", ("Pop",), 5),
        Entity("s1", EntityType.PODCAST, "History Hour", ("Dan Host",), "Ancient history weekly", ("History",), 7),
    ])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
