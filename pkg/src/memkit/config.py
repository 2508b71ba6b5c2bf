"""Configuration for the memory engine and its services.

All tunables live here, grouped by subsystem, with defaults chosen so a
fresh install runs fully offline against the deterministic mock provider.
Config files are YAML with one section per subsystem::

    provider:
      kind: http
      base_url: https://api.example.com/v1
      api_key_env: OPENAI_API_KEY
    retrieval:
      k: 20
      decay_rate: 0.02

Every key is optional; omitted keys keep their defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised when a config file or value fails validation."""


@dataclass
class ProviderConfig:
    """Settings for the chat/embedding provider.

    ``kind`` selects the implementation: ``mock`` (deterministic, offline)
    or ``http`` (OpenAI-compatible wire format). The API key is never put
    in the file; ``api_key_env`` names the environment variable holding it.
    """

    kind: str = "mock"
    base_url: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    chat_model: str = "gpt-4.1-mini"
    embed_model: str = "text-embedding-ada-002"
    embed_dim: int = 256
    timeout_ms: int = 30_000
    mock_seed: int = 0
    max_retries: int = 0


@dataclass
class StoreConfig:
    """Location of the embedded relational store (single file)."""

    path: str = "memkit.db"


@dataclass
class IndexConfig:
    """Location of the vector index segment file."""

    path: str = "memkit.idx"


@dataclass
class RetrievalConfig:
    """Top-K retrieval and recency-decay settings.

    ``decay_rate`` must be >= 0. Zero is a diagnostic ablation mode that
    forces uniform weights instead of the exponential recency decay.
    """

    k: int = 20
    decay_rate: float = 0.02


@dataclass
class ContextConfig:
    """Hard token budget for the rendered memory context."""

    max_tokens: int = 400


@dataclass
class SummaryConfig:
    """Session-summary generation settings.

    ``prompt_path`` optionally points to a custom summarization prompt
    template; ``None`` uses the packaged default.
    """

    prompt_path: str | None = None
    max_tokens: int = 256


@dataclass
class EngineConfig:
    """Aggregate configuration for one deployment."""

    provider: ProviderConfig = field(default_factory=ProviderConfig)
    store: StoreConfig = field(default_factory=StoreConfig)
    index: IndexConfig = field(default_factory=IndexConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    summary: SummaryConfig = field(default_factory=SummaryConfig)

    def validate(self) -> "EngineConfig":
        if self.provider.kind not in ("mock", "http"):
            raise ConfigError(f"provider.kind must be 'mock' or 'http', got {self.provider.kind!r}")
        if self.provider.kind == "http" and not self.provider.base_url:
            raise ConfigError("provider.base_url is required when provider.kind is 'http'")
        if self.provider.embed_dim < 1:
            raise ConfigError("provider.embed_dim must be >= 1")
        if self.provider.timeout_ms < 1:
            raise ConfigError("provider.timeout_ms must be >= 1")
        if self.provider.max_retries < 0:
            raise ConfigError("provider.max_retries must be >= 0")
        if self.retrieval.k < 1:
            raise ConfigError("retrieval.k must be >= 1")
        if self.retrieval.decay_rate < 0:
            raise ConfigError("retrieval.decay_rate must be >= 0 (0 forces uniform weights)")
        if self.context.max_tokens < 1:
            raise ConfigError("context.max_tokens must be >= 1")
        if self.summary.max_tokens < 1:
            raise ConfigError("summary.max_tokens must be >= 1")
        return self

    def echo(self) -> dict[str, Any]:
        """Flat, JSON-serializable view of the effective config (for reports)."""
        return {
            "provider.kind": self.provider.kind,
            "provider.chat_model": self.provider.chat_model,
            "provider.embed_model": self.provider.embed_model,
            "provider.embed_dim": self.provider.embed_dim,
            "provider.mock_seed": self.provider.mock_seed,
            "store.path": self.store.path,
            "index.path": self.index.path,
            "retrieval.k": self.retrieval.k,
            "retrieval.decay_rate": self.retrieval.decay_rate,
            "context.max_tokens": self.context.max_tokens,
            "summary.max_tokens": self.summary.max_tokens,
        }


_SECTIONS = {
    "provider": ProviderConfig,
    "store": StoreConfig,
    "index": IndexConfig,
    "retrieval": RetrievalConfig,
    "context": ContextConfig,
    "summary": SummaryConfig,
}


def _build_section(cls: type, data: dict[str, Any], section: str) -> Any:
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    return cls(**data)


def load_config(path: str | Path | None = None) -> EngineConfig:
    """Load and validate an :class:`EngineConfig` from a YAML file.

    With ``path=None`` the built-in defaults are returned (mock provider).
    """
    if path is None:
        return EngineConfig().validate()
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"config section [{name}] must be a mapping")
        kwargs[name] = _build_section(cls, section, name)
    return EngineConfig(**kwargs).validate()
