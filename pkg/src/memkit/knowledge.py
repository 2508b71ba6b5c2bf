"""Per-user knowledge graph of (subject, predicate, object) triplets.

Triplets come from user messages only — assistant text is never read here,
so the graph reflects what the user actually said. Each stored triplet is
dual-written: a relational row for raw inspection plus a vector-index
entry embedding the plain ``"subject predicate object"`` rendering for
semantic retrieval. Contradictory triplets are retained side by side;
conflicts resolve downstream through recency weights, not deletion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from typing import TYPE_CHECKING, Sequence

from . import prompts
from .providers import ChatExchange, Provider

if TYPE_CHECKING:
    from .index import VectorIndex
    from .store import ConversationStore

logger = logging.getLogger(__name__)

RECORD_SEPARATOR = "|"


@dataclass(frozen=True)
class Triplet:
    """One (subject, predicate, object) assertion."""

    subject: str
    predicate: str
    object: str

    def __post_init__(self) -> None:
        for name, value in (("subject", self.subject), ("predicate", self.predicate), ("object", self.object)):
            if not value.strip():
                raise ValueError(f"triplet {name} must be non-empty")
            if RECORD_SEPARATOR in value:
                raise ValueError(f"triplet {name} must not contain {RECORD_SEPARATOR!r}")

    def rendered(self) -> str:
        """Canonical text embedded for similarity search."""
        return f"{self.subject} {self.predicate} {self.object}"


@dataclass(frozen=True)
class StoredTriplet:
    """A persisted triplet with provenance and its index reference."""

    triplet_id: int
    triplet: Triplet
    user_name: str
    session_id: str
    source_message: str
    created_at: datetime
    embedding_ref: int

    @property
    def subject(self) -> str:
        return self.triplet.subject

    @property
    def predicate(self) -> str:
        return self.triplet.predicate

    @property
    def object(self) -> str:
        return self.triplet.object


@dataclass
class PersonaGraph:
    """Entity graph for one user: canonical labels linked by triplets."""

    user_name: str
    nodes: set[str]
    edges: set[tuple[str, str, str, int]]


def canonical_label(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace (idempotent)."""
    return " ".join(text.split()).lower()


def parse_triplet_reply(reply: str) -> list[Triplet]:
    """Parse ``subject|predicate|object`` lines; malformed lines are skipped."""
    triplets = []
    for line in reply.splitlines():
        parts = line.split(RECORD_SEPARATOR)
        if len(parts) != 3:
            continue
        subject, predicate, obj = (part.strip() for part in parts)
        if not subject or not predicate or not obj:
            continue
        triplets.append(Triplet(subject=subject, predicate=predicate, object=obj))
    return triplets


def extract_triplets_with_usage(user_message: str, provider: Provider, max_output_tokens: int = 512):
    """Extraction plus the call's token usage; see :func:`extract_triplets`."""
    if not user_message:
        raise ValueError("user_message must be non-empty")
    reply, usage = provider.chat_complete(
        ChatExchange(
            system_text=prompts.EXTRACTION_SYSTEM,
            user_text=user_message,
            max_output_tokens=max_output_tokens,
        )
    )
    return parse_triplet_reply(reply), usage


def extract_triplets(user_message: str, provider: Provider, max_output_tokens: int = 512) -> list[Triplet]:
    """Ask the provider to extract triplets from one user message.

    Assistant text is deliberately not part of this call. A reply with no
    parsable triplet yields an empty list, not an error.
    """
    triplets, _ = extract_triplets_with_usage(user_message, provider, max_output_tokens)
    return triplets


class KnowledgeGraph:
    """Extraction, dual-write persistence, and persona reconstruction."""

    def __init__(self, store: "ConversationStore", index: "VectorIndex", provider: Provider):
        self._store = store
        self._index = index
        self._provider = provider

    def extract(self, user_message: str) -> list[Triplet]:
        return extract_triplets(user_message, self._provider)

    def store_triplets(
        self,
        triplets: Sequence[Triplet],
        user_name: str,
        session_id: str,
        source_message: str,
        created_at: datetime,
    ) -> list[int]:
        """Persist and index each triplet; returns the new triplet ids.

        Atomic per triplet: the embedding is computed first (a failure
        writes nothing), and an index failure removes the already-written
        row before re-raising, so a triplet is never half-stored.
        """
        from .index import IndexEntry  # local import to avoid a module cycle

        ids = []
        for triplet in triplets:
            embedding = self._provider.embed(triplet.rendered())
            triplet_id = self._store.insert_triplet(
                triplet,
                user_name=user_name,
                session_id=session_id,
                source_message=source_message,
                created_at=created_at,
                embedding_ref=None,
            )
            try:
                self._index.add(
                    IndexEntry(
                        entry_id=triplet_id,
                        user_name=user_name,
                        vector=embedding,
                        payload_id=triplet_id,
                        created_at=created_at,
                    )
                )
            except Exception:
                logger.exception("index write failed for triplet %s; removing row", triplet_id)
                self._store.delete_triplet(triplet_id)
                raise
            ids.append(triplet_id)
        return ids

    def get_persona(self, user_name: str) -> PersonaGraph:
        """Rebuild the user's graph from all stored triplets (empty if none)."""
        nodes: set[str] = set()
        edges: set[tuple[str, str, str, int]] = set()
        for stored in self._store.triplets_for_user(user_name):
            subject_node = canonical_label(stored.subject)
            object_node = canonical_label(stored.object)
            nodes.add(subject_node)
            nodes.add(object_node)
            edges.add((subject_node, stored.predicate, object_node, stored.triplet_id))
        return PersonaGraph(user_name=user_name, nodes=nodes, edges=edges)
