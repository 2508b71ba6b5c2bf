"""Fully deterministic provider used by the test suite and offline demos.

Every reply is a pure function of (seed, request), byte-identical across
runs and platforms. The chat side recognizes the engine's default prompt
kinds by markers in the system text and answers each with a fixed rule:

* ``triplet`` in the system text — run a small pattern extractor over the
  user text and emit one ``subject|predicate|object`` line per match
  (``NO_TRIPLETS`` when nothing matches, so replies are never empty).
* ``summar`` — parse the prior summary and the new turn pair out of the
  rendered prompt and append exactly one sentence:
  ``User said: <first 12 tokens>. Assistant said: <first 12 tokens>.``
* ``answer`` — parse the memory context and question, pick the best
  knowledge line (see :meth:`MockProvider._answer`), and answer with it.
* anything else — a fixed acknowledgement template.

Token accounting is whitespace token counts throughout. Embeddings hash
each lowercased whitespace token into one of ``dim`` buckets (seeded
SHA-256), count occurrences, and L2-normalize.
"""

from __future__ import annotations

import hashlib
import re

from .base import ChatExchange, Embedding, TokenUsage, count_tokens

_SENTENCE_SPLIT = re.compile(r"[.!?;\n]+")

# "X is Y" forms, with an optional locative/associative preposition folded
# into the predicate: "my shoes are under the bed" -> (my shoes, are under, the bed).
_COPULA = re.compile(
    r"^(?P<subj>.+?)\s+(?P<verb>is|are|am|was|were)\s+"
    r"(?:(?P<prep>in|on|at|under|over|near|inside|behind|from|with)\s+)?(?P<obj>.+)$",
    re.IGNORECASE,
)

# "I <verb> X" forms: "I live in Paris" -> (I, live in, Paris).
_FIRST_PERSON = re.compile(
    r"^[Ii]\s+(?P<verb>[A-Za-z]+)\s+"
    r"(?:(?P<prep>in|on|at|to|with|for|about|near)\s+)?(?P<obj>.+)$",
)

_PRIOR_RE = re.compile(r"\[PRIOR SUMMARY\]\n(?P<prior>.*?)\n\[TURN PAIR\]", re.DOTALL)
_USER_RE = re.compile(r"\[USER MESSAGE\]\n(?P<user>.*?)\n\[ASSISTANT MESSAGE\]", re.DOTALL)
_ASSISTANT_RE = re.compile(r"\[ASSISTANT MESSAGE\]\n(?P<assistant>.*)\Z", re.DOTALL)

_CONTEXT_RE = re.compile(r"\[MEMORY CONTEXT\]\n(?P<context>.*?)\n\[QUESTION\]\n(?P<question>.*)\Z", re.DOTALL)
_KNOWLEDGE_LINE = re.compile(r"^\((?P<s>.+?), (?P<p>.+?), (?P<o>.+)\) \[weight=(?P<w>\d+\.\d{4})\]$")

# Function words ignored when judging whether a knowledge line bears on a
# question; everything else counts as content.
_STOPWORDS = frozenset(
    "a an the my our your his her their i you we he she it is are am was were "
    "do does did where when what who why how which in on at to of and or for me now".split()
)

NO_TRIPLETS_MARKER = "NO_TRIPLETS"


def extract_triplet_lines(text: str) -> list[tuple[str, str, str]]:
    """Apply the pattern rules to ``text``, one candidate triplet per sentence."""
    found: list[tuple[str, str, str]] = []
    for sentence in _SENTENCE_SPLIT.split(text):
        sentence = sentence.strip()
        if not sentence:
            continue
        match = _COPULA.match(sentence)
        if match:
            subject = match.group("subj").strip()
            predicate = match.group("verb")
            if match.group("prep"):
                predicate += " " + match.group("prep")
            obj = match.group("obj").strip()
        else:
            match = _FIRST_PERSON.match(sentence)
            if not match:
                continue
            subject = "I"
            predicate = match.group("verb")
            if match.group("prep"):
                predicate += " " + match.group("prep")
            obj = match.group("obj").strip()
        if not subject or not predicate or not obj:
            continue
        if any("|" in part for part in (subject, predicate, obj)):
            continue
        found.append((subject, predicate, obj))
    return found


def _content_tokens(text: str) -> set[str]:
    return {tok for tok in text.lower().split() if tok not in _STOPWORDS}


def _truncate_head(text: str, limit: int) -> str:
    tokens = text.split()
    if len(tokens) <= limit:
        return text
    return " ".join(tokens[:limit])


def _truncate_tail(text: str, limit: int) -> str:
    tokens = text.split()
    if len(tokens) <= limit:
        return text
    return " ".join(tokens[-limit:])


class MockProvider:
    """Deterministic :class:`~memkit.providers.base.Provider` implementation."""

    def __init__(self, seed: int = 0, embed_dim: int = 256):
        if embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        self.seed = seed
        self.embed_dim = embed_dim

    # -- chat ------------------------------------------------------------

    def chat_complete(self, exchange: ChatExchange) -> tuple[str, TokenUsage]:
        system = exchange.system_text.lower()
        if "triplet" in system:
            reply = self._extract(exchange.user_text)
            reply = _truncate_head(reply, exchange.max_output_tokens)
        elif "summar" in system:
            reply = self._summarize(exchange.user_text)
            # Rolling summaries keep the newest sentences when over budget.
            reply = _truncate_tail(reply, exchange.max_output_tokens)
        elif "answer" in system:
            reply = self._answer(exchange.user_text)
            reply = _truncate_head(reply, exchange.max_output_tokens)
        else:
            reply = _truncate_head(f"Acknowledged: {exchange.user_text}", exchange.max_output_tokens)
        usage = TokenUsage.of(
            count_tokens(exchange.system_text) + count_tokens(exchange.user_text),
            count_tokens(reply),
        )
        return reply, usage

    def _extract(self, user_text: str) -> str:
        triplets = extract_triplet_lines(user_text)
        if not triplets:
            return NO_TRIPLETS_MARKER
        return "\n".join(f"{s}|{p}|{o}" for s, p, o in triplets)

    def _summarize(self, user_text: str) -> str:
        prior_match = _PRIOR_RE.search(user_text)
        user_match = _USER_RE.search(user_text)
        assistant_match = _ASSISTANT_RE.search(user_text)
        if not (prior_match and user_match and assistant_match):
            return f"Acknowledged: {user_text}"
        prior = prior_match.group("prior").strip()
        if prior == "(none)":
            prior = ""
        user_snip = " ".join(user_match.group("user").split()[:12])
        assistant_snip = " ".join(assistant_match.group("assistant").split()[:12])
        sentence = f"User said: {user_snip}. Assistant said: {assistant_snip}."
        return f"{prior} {sentence}" if prior else sentence

    def _answer(self, user_text: str) -> str:
        """Answer a question from a rendered memory context.

        Knowledge lines whose tokens share at least one content token with
        the question are candidates; the highest-weight candidate wins,
        ties resolved by context order. Without knowledge lines (or with
        none relevant) the context line with the largest content-token
        overlap is echoed instead.
        """
        match = _CONTEXT_RE.search(user_text)
        if not match:
            return f"Acknowledged: {user_text}"
        context, question = match.group("context"), match.group("question")
        question_tokens = _content_tokens(question)

        candidates: list[tuple[float, int, str]] = []
        for position, line in enumerate(context.splitlines()):
            parsed = _KNOWLEDGE_LINE.match(line)
            if not parsed:
                continue
            statement = f"{parsed.group('s')} {parsed.group('p')} {parsed.group('o')}"
            if question_tokens & _content_tokens(statement):
                candidates.append((float(parsed.group("w")), position, statement))
        if candidates:
            candidates.sort(key=lambda item: (-item[0], item[1]))
            return f"{candidates[0][2]}."

        best_line, best_overlap = "", 0
        for line in context.splitlines():
            if line.startswith("[") or not line.strip():
                continue
            overlap = len(question_tokens & _content_tokens(line))
            if overlap > best_overlap:
                best_line, best_overlap = line.strip(), overlap
        if best_line:
            return f"From our conversation: {best_line}"
        return "I do not have that information."

    # -- embeddings ------------------------------------------------------

    def embed(self, text: str) -> Embedding:
        if not text:
            raise ValueError("cannot embed empty text")
        counts = [0.0] * self.embed_dim
        for token in text.lower().split():
            counts[self._bucket(token)] += 1.0
        norm = sum(c * c for c in counts) ** 0.5
        if norm == 0.0:
            # Whitespace-only input has no tokens to hash.
            raise ValueError("cannot embed text with no tokens")
        return Embedding(tuple(c / norm for c in counts))

    def _bucket(self, token: str) -> int:
        digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.embed_dim
