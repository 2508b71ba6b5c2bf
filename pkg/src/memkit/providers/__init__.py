"""Provider abstraction: deterministic mock and OpenAI-compatible HTTP client."""

from ..config import ProviderConfig
from .base import (
    ChatExchange,
    Embedding,
    Provider,
    ProviderError,
    ProviderResponseError,
    ProviderStatusError,
    ProviderTimeoutError,
    ProviderTransportError,
    TokenUsage,
    count_tokens,
)
from .http import HttpProvider
from .mock import MockProvider

__all__ = [
    "ChatExchange",
    "Embedding",
    "HttpProvider",
    "MockProvider",
    "Provider",
    "ProviderError",
    "ProviderResponseError",
    "ProviderStatusError",
    "ProviderTimeoutError",
    "ProviderTransportError",
    "TokenUsage",
    "build_provider",
    "count_tokens",
]


def build_provider(config: ProviderConfig) -> Provider:
    """Instantiate the provider selected by ``provider.kind``."""
    if config.kind == "mock":
        return MockProvider(seed=config.mock_seed, embed_dim=config.embed_dim)
    if config.kind == "http":
        return HttpProvider(config)
    raise ValueError(f"unknown provider kind {config.kind!r}")
