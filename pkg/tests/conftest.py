"""Shared fixtures: engine factories and record builders."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from memkit.config import EngineConfig
from memkit.engine import MemoryEngine
from memkit.index import IndexEntry, ScoredEntry
from memkit.knowledge import StoredTriplet, Triplet
from memkit.providers import Embedding, MockProvider

BASE_TS = datetime(2025, 6, 1, 12, 0, tzinfo=timezone.utc)


def ts(minutes: float = 0.0) -> datetime:
    """A fixed base instant plus an offset in minutes."""
    return BASE_TS + timedelta(minutes=minutes)


def make_stored(
    triplet_id: int,
    created_at: datetime,
    subject: str = "thing",
    predicate: str = "is",
    obj: str = "value",
    user_name: str = "u",
    session_id: str = "s",
) -> StoredTriplet:
    return StoredTriplet(
        triplet_id=triplet_id,
        triplet=Triplet(subject=subject, predicate=predicate, object=obj),
        user_name=user_name,
        session_id=session_id,
        source_message=f"{subject} {predicate} {obj}",
        created_at=created_at,
        embedding_ref=triplet_id,
    )


def make_scored(entry_id: int, created_at: datetime, similarity: float = 0.5, user_name: str = "u") -> ScoredEntry:
    entry = IndexEntry(
        entry_id=entry_id,
        user_name=user_name,
        vector=Embedding((1.0, 0.0)),
        payload_id=entry_id,
        created_at=created_at,
    )
    return ScoredEntry(entry=entry, similarity=similarity)


@pytest.fixture
def mock_provider() -> MockProvider:
    return MockProvider(seed=0, embed_dim=256)


@pytest.fixture
def engine_factory(tmp_path):
    """Create isolated engines; overrides use dotted keys like 'retrieval.k'."""
    created: list[MemoryEngine] = []

    def make(**overrides) -> MemoryEngine:
        config = EngineConfig()
        n = len(created)
        config.store.path = str(tmp_path / f"store{n}.db")
        config.index.path = str(tmp_path / f"index{n}.idx")
        for key, value in overrides.items():
            section, attr = key.split(".")
            setattr(getattr(config, section), attr, value)
        config.validate()
        engine = MemoryEngine.from_config(config)
        created.append(engine)
        return engine

    yield make
    for engine in created:
        engine.close()


@pytest.fixture
def engine(engine_factory) -> MemoryEngine:
    return engine_factory()
