"""memkit — a persistent, recency-weighted memory layer for chat applications.

Two complementary memory sources back every conversation: a rolling
per-session summary and a per-user knowledge graph of (subject,
predicate, object) triplets retrieved by cosine similarity and weighted
by exponential recency decay. The engine exposes a two-call API —
``retrieve_context`` before the host generates its reply,
``record_turn`` after — plus an HTTP service and a replay/eval CLI.
"""

from .config import ConfigError, EngineConfig, load_config
from .decay import WeightedTriplet, normalize_ages, normalize_weights, raw_weights, weigh
from .engine import (
    MemoryContext,
    MemoryEngine,
    Scenario,
    StoreCorruptionError,
    TurnReceipt,
    TurnRequest,
)
from .index import IndexEntry, ScoredEntry, VectorIndex, VectorIndexError
from .knowledge import KnowledgeGraph, PersonaGraph, StoredTriplet, Triplet, extract_triplets
from .providers import (
    ChatExchange,
    Embedding,
    HttpProvider,
    MockProvider,
    Provider,
    ProviderError,
    TokenUsage,
    build_provider,
    count_tokens,
)
from .store import ConversationStore, MessageRecord, Role, StorageError, SummaryRecord
from .summarize import SummaryUpdate, update_summary

__version__ = "0.1.0"

__all__ = [
    "ChatExchange",
    "ConfigError",
    "ConversationStore",
    "Embedding",
    "EngineConfig",
    "HttpProvider",
    "IndexEntry",
    "KnowledgeGraph",
    "MemoryContext",
    "MemoryEngine",
    "MessageRecord",
    "MockProvider",
    "PersonaGraph",
    "Provider",
    "ProviderError",
    "Role",
    "Scenario",
    "ScoredEntry",
    "StorageError",
    "StoreCorruptionError",
    "StoredTriplet",
    "SummaryRecord",
    "SummaryUpdate",
    "TokenUsage",
    "Triplet",
    "TurnReceipt",
    "TurnRequest",
    "VectorIndex",
    "VectorIndexError",
    "WeightedTriplet",
    "build_provider",
    "count_tokens",
    "extract_triplets",
    "load_config",
    "normalize_ages",
    "normalize_weights",
    "raw_weights",
    "update_summary",
    "weigh",
]
