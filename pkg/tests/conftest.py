from __future__ import annotations

import pytest

from sqlclarify.datagen import load_bundled
from sqlclarify.minidb import Column, Table, TableStore
from sqlclarify.nlg import QuestionGenerator


@pytest.fixture(scope="session")
def nlg() -> QuestionGenerator:
    return QuestionGenerator()


@pytest.fixture()
def t1_table() -> Table:
    return Table(
        id="t1",
        name="players",
        columns=(Column("player", "text"), Column("age", "number"), Column("place", "text")),
        rows=(("ann", 30, "ohio"), ("bob", 25, "iowa"), ("cal", 30, "ohio")),
    )


@pytest.fixture()
def t1_store(t1_table) -> TableStore:
    store = TableStore()
    store.add(t1_table)
    return store


@pytest.fixture(scope="session")
def bundled_wikisql():
    return load_bundled("wikisql")


@pytest.fixture(scope="session")
def bundled_spider():
    return load_bundled("spider")
