"""Domain types and the provider interface for generative/embedding calls.

The rest of the engine only ever talks to :class:`Provider`; whether the
backing implementation is a remote OpenAI-compatible endpoint or the
deterministic in-process mock is a configuration detail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable


class ProviderError(Exception):
    """Base class for all provider failures."""


class ProviderTransportError(ProviderError):
    """The request never produced an HTTP response (DNS, connection, TLS)."""


class ProviderTimeoutError(ProviderError):
    """The request timed out."""


class ProviderStatusError(ProviderError):
    """The endpoint answered with a non-2xx status."""

    def __init__(self, status_code: int, detail: str = ""):
        self.status_code = status_code
        super().__init__(f"provider returned HTTP {status_code}: {detail}")


class ProviderResponseError(ProviderError):
    """The response body could not be parsed into the expected shape."""


def count_tokens(text: str) -> int:
    """Whitespace token count — the accounting rule used across the engine."""
    return len(text.split())


@dataclass(frozen=True)
class TokenUsage:
    """Prompt/completion token accounting for one provider call."""

    prompt_tokens: int
    completion_tokens: int
    total_tokens: int

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be nonnegative")
        if self.total_tokens != self.prompt_tokens + self.completion_tokens:
            raise ValueError("total_tokens must equal prompt_tokens + completion_tokens")

    @classmethod
    def of(cls, prompt_tokens: int, completion_tokens: int) -> "TokenUsage":
        return cls(prompt_tokens, completion_tokens, prompt_tokens + completion_tokens)


@dataclass(frozen=True)
class ChatExchange:
    """One request to the chat-completion capability.

    ``system_text`` carries the instruction, ``user_text`` the payload.
    """

    system_text: str
    user_text: str
    max_output_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")


@dataclass(frozen=True)
class Embedding:
    """A fixed-length real vector; dimension is uniform per deployment."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding must be non-empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding contains non-finite values")

    @property
    def dimension(self) -> int:
        return len(self.values)


@runtime_checkable
class Provider(Protocol):
    """Generative + embedding capabilities behind one interface.

    Implementations must be safe to call from multiple threads; they hold
    no mutable shared state beyond an optional connection pool.
    """

    def chat_complete(self, exchange: ChatExchange) -> tuple[str, TokenUsage]:
        """Run one chat completion; returns (non-empty text, usage)."""
        ...

    def embed(self, text: str) -> Embedding:
        """Embed ``text`` (non-empty) into the configured vector space."""
        ...
