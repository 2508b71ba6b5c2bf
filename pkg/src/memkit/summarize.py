"""Rolling session summaries, one provider call per recorded turn pair.

Each update is a function of the prior summary and the newest
(user, assistant) pair only — the full history is never re-read, which
is what keeps the summary's token cost flat as sessions grow.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import prompts
from .providers import ChatExchange, Provider

NO_PRIOR_MARKER = "(none)"


@dataclass(frozen=True)
class SummaryUpdate:
    """Inputs for one incremental summary step."""

    prior_summary: str | None
    user_text: str
    assistant_text: str

    def __post_init__(self) -> None:
        if not self.user_text or not self.assistant_text:
            raise ValueError("user_text and assistant_text must be non-empty")


def render_turn_pair(user_text: str, assistant_text: str) -> str:
    return f"[USER MESSAGE]\n{user_text}\n[ASSISTANT MESSAGE]\n{assistant_text}"


def update_summary_with_usage(
    update: SummaryUpdate,
    provider: Provider,
    *,
    max_tokens: int = 256,
    template: str | None = None,
):
    """Run one summary step; returns (summary text, token usage).

    Provider failures propagate; the caller decides whether to keep the
    stale summary (the engine does).
    """
    user_text = (template or prompts.SUMMARY_TEMPLATE).format(
        prior_summary=update.prior_summary or NO_PRIOR_MARKER,
        turn_pair=render_turn_pair(update.user_text, update.assistant_text),
    )
    return provider.chat_complete(
        ChatExchange(
            system_text=prompts.SUMMARY_SYSTEM,
            user_text=user_text,
            max_output_tokens=max_tokens,
        )
    )


def update_summary(
    update: SummaryUpdate,
    provider: Provider,
    *,
    max_tokens: int = 256,
    template: str | None = None,
) -> str:
    """Create (no prior) or update (prior present) the session summary."""
    text, _ = update_summary_with_usage(update, provider, max_tokens=max_tokens, template=template)
    return text
