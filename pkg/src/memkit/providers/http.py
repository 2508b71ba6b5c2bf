"""OpenAI-compatible HTTP provider (chat completions + embeddings).

Targets the standard ``/chat/completions`` and ``/embeddings`` wire shapes
so any compatible endpoint works; base URL, model names, and the API-key
environment variable come from :class:`~memkit.config.ProviderConfig`.
Transport, timeout, bad-status, and malformed-body failures surface as
distinct exception types so callers can decide retry-or-abort per kind.
"""

from __future__ import annotations

import os
from typing import Any

import httpx

from ..config import ProviderConfig
from .base import (
    ChatExchange,
    Embedding,
    ProviderResponseError,
    ProviderStatusError,
    ProviderTimeoutError,
    ProviderTransportError,
    TokenUsage,
)

_RETRYABLE = (ProviderTransportError, ProviderTimeoutError)


class HttpProvider:
    """Thread-safe client for an OpenAI-compatible endpoint.

    A single retry budget (``max_retries``) applies to transport/timeout
    failures and 5xx statuses; 4xx statuses and parse failures never retry.
    """

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        if not config.base_url:
            raise ValueError("HttpProvider requires provider.base_url")
        self._config = config
        api_key = os.environ.get(config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers=headers,
            timeout=config.timeout_ms / 1000.0,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    # -- wire calls --------------------------------------------------------

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        attempts = self._config.max_retries + 1
        last_error: Exception | None = None
        for _ in range(attempts):
            try:
                response = self._client.post(path, json=payload)
            except httpx.TimeoutException as exc:
                last_error = ProviderTimeoutError(str(exc))
                continue
            except httpx.TransportError as exc:
                last_error = ProviderTransportError(str(exc))
                continue
            if response.status_code // 100 != 2:
                last_error = ProviderStatusError(response.status_code, response.text[:200])
                if response.status_code < 500:
                    raise last_error
                continue
            try:
                body = response.json()
            except ValueError as exc:
                raise ProviderResponseError(f"response body is not JSON: {exc}") from exc
            if not isinstance(body, dict):
                raise ProviderResponseError("response body is not a JSON object")
            return body
        assert last_error is not None
        raise last_error

    def chat_complete(self, exchange: ChatExchange) -> tuple[str, TokenUsage]:
        payload = {
            "model": self._config.chat_model,
            "messages": [
                {"role": "system", "content": exchange.system_text},
                {"role": "user", "content": exchange.user_text},
            ],
            "max_tokens": exchange.max_output_tokens,
            "temperature": exchange.temperature,
        }
        body = self._post("/chat/completions", payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderResponseError(f"missing choices[0].message.content: {exc}") from exc
        if not isinstance(content, str) or not content:
            raise ProviderResponseError("completion content is empty")
        return content, self._parse_usage(body)

    def embed(self, text: str) -> Embedding:
        if not text:
            raise ValueError("cannot embed empty text")
        body = self._post("/embeddings", {"model": self._config.embed_model, "input": text})
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderResponseError(f"missing data[0].embedding: {exc}") from exc
        if not isinstance(values, list) or not values:
            raise ProviderResponseError("embedding payload is not a non-empty list")
        if len(values) != self._config.embed_dim:
            raise ProviderResponseError(
                f"embedding dimension {len(values)} does not match configured {self._config.embed_dim}"
            )
        try:
            return Embedding(tuple(float(v) for v in values))
        except (TypeError, ValueError) as exc:
            raise ProviderResponseError(f"embedding values invalid: {exc}") from exc

    @staticmethod
    def _parse_usage(body: dict[str, Any]) -> TokenUsage:
        usage = body.get("usage") or {}
        prompt = int(usage.get("prompt_tokens", 0))
        completion = int(usage.get("completion_tokens", 0))
        return TokenUsage.of(prompt, completion)
