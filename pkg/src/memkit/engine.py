"""Turn lifecycle: retrieve memory context before generation, update
memory after generation.

The engine never owns the answering LLM call — the host application asks
for a :class:`MemoryContext`, generates its reply however it likes, then
reports the finished turn through :meth:`MemoryEngine.record_turn`.

Each incoming turn is classified by what memory exists for it:

* ``new_user_new_session`` — no history at all; the context is empty.
* ``repeat_user_new_session`` — the user is known but the session is new;
  knowledge triplets are retrieved immediately, no summary yet.
* ``repeat_user_ongoing_session`` — summary and triplets both available.

The fourth combination (a summary for a user with no history) cannot be
produced by the engine and is reported as store corruption.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any

from . import prompts
from .config import EngineConfig
from .decay import WeightedTriplet, uniform_weigh, weigh
from .index import VectorIndex, VectorIndexError
from .knowledge import KnowledgeGraph, extract_triplets_with_usage
from .providers import Provider, ProviderError, build_provider, count_tokens
from .store import ConversationStore, MessageRecord, Role, StorageError, SummaryRecord
from .summarize import SummaryUpdate, update_summary_with_usage
from .timeutil import utc_now

logger = logging.getLogger(__name__)


class StoreCorruptionError(RuntimeError):
    """A summary exists for a user with no recorded history."""


class Scenario(str, Enum):
    NEW_USER_NEW_SESSION = "new_user_new_session"
    REPEAT_USER_NEW_SESSION = "repeat_user_new_session"
    REPEAT_USER_ONGOING_SESSION = "repeat_user_ongoing_session"


@dataclass(frozen=True)
class TurnRequest:
    """Identity and content of one incoming user turn."""

    user_name: str
    session_id: str
    user_text: str
    timestamp: datetime = field(default_factory=utc_now)

    def __post_init__(self) -> None:
        if not self.user_name or not self.session_id or not self.user_text:
            raise ValueError("user_name, session_id, and user_text must be non-empty")


@dataclass
class MemoryContext:
    """The assembled retrieval product handed back to the host application."""

    scenario: Scenario
    session_summary: str | None
    weighted_triplets: list[WeightedTriplet]
    rendered_context: str
    context_token_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.value,
            "session_summary": self.session_summary,
            "weighted_triplets": [
                {
                    "triplet_id": item.triplet.triplet_id,
                    "subject": item.triplet.subject,
                    "predicate": item.triplet.predicate,
                    "object": item.triplet.object,
                    "similarity": item.similarity,
                    "normalized_age": item.normalized_age,
                    "raw_weight": item.raw_weight,
                    "weight": item.weight,
                }
                for item in self.weighted_triplets
            ],
            "rendered_context": self.rendered_context,
            "context_token_count": self.context_token_count,
        }


@dataclass
class TurnReceipt:
    """What :meth:`MemoryEngine.record_turn` actually accomplished.

    Stage 1 (raw message log) failing raises; failures in stage 2
    (knowledge extraction) or stage 3 (summary update) are reported in the
    corresponding ``*_error`` field without rolling back the raw log.
    """

    user_message_id: int
    assistant_message_id: int
    triplet_ids: list[int]
    summary_text: str | None
    turns_covered: int | None
    extraction_error: str | None = None
    summary_error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "user_message_id": self.user_message_id,
            "assistant_message_id": self.assistant_message_id,
            "triplet_ids": list(self.triplet_ids),
            "summary_text": self.summary_text,
            "turns_covered": self.turns_covered,
            "extraction_error": self.extraction_error,
            "summary_error": self.summary_error,
        }


def render_context(
    summary_text: str | None,
    weighted: list[WeightedTriplet],
    max_tokens: int,
) -> tuple[str, list[WeightedTriplet], int]:
    """Render the canonical context, dropping triplets to fit the budget.

    Template (bit-exact)::

        [SESSION SUMMARY]
        <summary or "none">
        [USER KNOWLEDGE]
        (s, p, o) [weight=0.xxxx]
        ...

    Triplets are dropped lowest-weight-first (ties drop the later, less
    similar line) until the whitespace token count fits ``max_tokens``.
    If the summary alone still exceeds the budget, its oldest tokens are
    trimmed as a last resort so the bound holds for all inputs.
    """
    kept = list(weighted)

    def render(summary: str | None, items: list[WeightedTriplet]) -> str:
        lines = ["[SESSION SUMMARY]", summary if summary else "none", "[USER KNOWLEDGE]"]
        lines.extend(
            f"({item.triplet.subject}, {item.triplet.predicate}, {item.triplet.object})"
            f" [weight={item.weight:.4f}]"
            for item in items
        )
        return "\n".join(lines)

    text = render(summary_text, kept)
    while count_tokens(text) > max_tokens and kept:
        drop = min(range(len(kept)), key=lambda i: (kept[i].weight, -i))
        kept.pop(drop)
        text = render(summary_text, kept)
    if count_tokens(text) > max_tokens and summary_text:
        overhead = count_tokens(render(None, [])) - 1  # header tokens minus the "none" slot
        budget = max(max_tokens - overhead, 1)
        summary_text = " ".join(summary_text.split()[-budget:])
        text = render(summary_text, kept)
    return text, kept, count_tokens(text)


class MemoryEngine:
    """Orchestrates the per-turn retrieve/record cycle over all stores.

    Writes are serialized per user; retrieval takes no locks and never
    mutates state.
    """

    def __init__(
        self,
        store: ConversationStore,
        index: VectorIndex,
        provider: Provider,
        config: EngineConfig,
    ):
        self.store = store
        self.index = index
        self.provider = provider
        self.config = config
        self.knowledge = KnowledgeGraph(store, index, provider)
        self._summary_template = prompts.load_summary_template(config.summary.prompt_path)
        self._user_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    @classmethod
    def from_config(cls, config: EngineConfig) -> "MemoryEngine":
        config.validate()
        provider = build_provider(config.provider)
        store = ConversationStore(config.store.path)
        index = VectorIndex(config.index.path, dim=config.provider.embed_dim)
        return cls(store=store, index=index, provider=provider, config=config)

    def close(self) -> None:
        self.index.close()
        self.store.close()

    def _lock_for(self, user_name: str) -> threading.Lock:
        with self._locks_guard:
            lock = self._user_locks.get(user_name)
            if lock is None:
                lock = self._user_locks[user_name] = threading.Lock()
            return lock

    # -- retrieval -----------------------------------------------------------

    def classify(self, user_name: str, session_id: str) -> Scenario:
        """Scenario dispatch over (history exists?, session summary exists?)."""
        has_history = self.store.has_user_history(user_name)
        has_summary = self.store.get_summary(session_id) is not None
        if not has_history and has_summary:
            raise StoreCorruptionError(
                f"session {session_id!r} has a summary but user {user_name!r} has no history"
            )
        if not has_history:
            return Scenario.NEW_USER_NEW_SESSION
        if not has_summary:
            return Scenario.REPEAT_USER_NEW_SESSION
        return Scenario.REPEAT_USER_ONGOING_SESSION

    def retrieve_context(self, request: TurnRequest) -> MemoryContext:
        """Assemble the memory context for one incoming turn.

        For repeat users the request text is embedded, the user's top-K
        triplets are fetched by cosine similarity, and the batch is
        recency-weighted. An embedding failure degrades the context to
        summary-only (with a logged warning) rather than failing the turn.
        """
        scenario = self.classify(request.user_name, request.session_id)
        summary_record = self.store.get_summary(request.session_id)
        summary_text = summary_record.summary_text if summary_record else None

        weighted: list[WeightedTriplet] = []
        if scenario is not Scenario.NEW_USER_NEW_SESSION:
            try:
                query = self.provider.embed(request.user_text)
            except ProviderError as exc:
                logger.warning(
                    "embedding failed for user %r; degrading to summary-only context: %s",
                    request.user_name,
                    exc,
                )
            else:
                scored = self.index.query_top_k(query, request.user_name, self.config.retrieval.k)
                if scored:
                    stored_map = self.store.get_triplets([entry.entry.payload_id for entry in scored])
                    batch = []
                    for entry in scored:
                        stored = stored_map.get(entry.entry.payload_id)
                        if stored is None:
                            logger.error("index entry %s has no triplet row", entry.entry.entry_id)
                            continue
                        batch.append((entry, stored))
                    if batch:
                        if self.config.retrieval.decay_rate > 0:
                            weighted = weigh(batch, now=request.timestamp, a=self.config.retrieval.decay_rate)
                        else:
                            weighted = uniform_weigh(batch, now=request.timestamp)

        rendered, kept, token_count = render_context(
            summary_text, weighted, self.config.context.max_tokens
        )
        return MemoryContext(
            scenario=scenario,
            session_summary=summary_text,
            weighted_triplets=kept,
            rendered_context=rendered,
            context_token_count=token_count,
        )

    # -- recording -------------------------------------------------------------

    def record_turn(self, request: TurnRequest, assistant_text: str) -> TurnReceipt:
        """Persist one finished turn: raw log, knowledge triplets, summary.

        The raw message log is ground truth — it is written first and never
        rolled back. Knowledge extraction reads the user text only.
        """
        if not assistant_text:
            raise ValueError("assistant_text must be non-empty")
        with self._lock_for(request.user_name):
            return self._record_turn_locked(request, assistant_text)

    def _record_turn_locked(self, request: TurnRequest, assistant_text: str) -> TurnReceipt:
        user_message_id = self.store.append_message(
            MessageRecord(
                user_name=request.user_name,
                session_id=request.session_id,
                role=Role.USER,
                content=request.user_text,
                created_at=request.timestamp,
            )
        )
        assistant_message_id = self.store.append_message(
            MessageRecord(
                user_name=request.user_name,
                session_id=request.session_id,
                role=Role.ASSISTANT,
                content=assistant_text,
                created_at=request.timestamp,
            )
        )

        triplet_ids: list[int] = []
        extraction_error: str | None = None
        try:
            triplets, usage = extract_triplets_with_usage(request.user_text, self.provider)
            self.store.record_usage(user_message_id, usage)
            triplet_ids = self.knowledge.store_triplets(
                triplets,
                user_name=request.user_name,
                session_id=request.session_id,
                source_message=request.user_text,
                created_at=request.timestamp,
            )
        except (ProviderError, StorageError, VectorIndexError) as exc:
            extraction_error = f"{type(exc).__name__}: {exc}"
            logger.warning("knowledge update failed for user %r: %s", request.user_name, exc)

        prior = self.store.get_summary(request.session_id)
        summary_text = prior.summary_text if prior else None
        turns_covered = prior.turns_covered if prior else None
        summary_error: str | None = None
        try:
            text, usage = update_summary_with_usage(
                SummaryUpdate(
                    prior_summary=prior.summary_text if prior else None,
                    user_text=request.user_text,
                    assistant_text=assistant_text,
                ),
                self.provider,
                max_tokens=self.config.summary.max_tokens,
                template=self._summary_template,
            )
            turns = (prior.turns_covered if prior else 0) + 1
            self.store.upsert_summary(
                SummaryRecord(
                    session_id=request.session_id,
                    user_name=request.user_name,
                    summary_text=text,
                    updated_at=request.timestamp,
                    turns_covered=turns,
                )
            )
            self.store.record_usage(assistant_message_id, usage)
            summary_text, turns_covered = text, turns
        except (ProviderError, StorageError) as exc:
            summary_error = f"{type(exc).__name__}: {exc}"
            logger.warning(
                "summary update failed for session %r; keeping stale summary: %s",
                request.session_id,
                exc,
            )

        return TurnReceipt(
            user_message_id=user_message_id,
            assistant_message_id=assistant_message_id,
            triplet_ids=triplet_ids,
            summary_text=summary_text,
            turns_covered=turns_covered,
            extraction_error=extraction_error,
            summary_error=summary_error,
        )
