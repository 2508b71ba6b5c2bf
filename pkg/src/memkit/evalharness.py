"""Replay harness for long-memory benchmark datasets.

Reads a JSON array of instances (the LongMemEval layout: question, ground
truth, dated haystack sessions of role/content turns), replays each
instance's sessions chronologically through the engine, asks the question
against the retrieved context, and scores the answers. Two modes:

* ``memory`` — full pipeline: ingest turns, retrieve weighted context.
* ``full-context`` — baseline that stuffs the entire transcript into the
  prompt; provided for the token/latency comparison shape.

With the mock provider, answers are judged by case-insensitive substring
match of the ground truth; with a live provider an LLM judge is used.
Everything except wall-clock timings is deterministic under the mock
provider; timing fields are excluded from the stable serialization.
"""

from __future__ import annotations

import copy
import json
import logging
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import prompts
from .config import EngineConfig
from .engine import MemoryEngine, TurnRequest
from .providers import ChatExchange, Provider, ProviderError, count_tokens
from .timeutil import ensure_utc

logger = logging.getLogger(__name__)

SUPPORTED_CATEGORIES = ("single_session_user", "knowledge_update")

_DATE_FORMATS = (
    "%Y/%m/%d (%a) %H:%M",
    "%Y/%m/%d %H:%M",
    "%Y/%m/%d",
)


class DatasetError(ValueError):
    """Raised when the dataset file itself cannot be read or parsed."""


@dataclass(frozen=True)
class EvalSession:
    """One dated haystack session: ordered (role, content) turns."""

    date: datetime
    turns: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class EvalInstance:
    """One benchmark question with its conversational haystack."""

    question_id: str
    question_type: str
    question: str
    answer: str
    question_date: datetime
    sessions: tuple[EvalSession, ...]


def parse_date(value: str) -> datetime:
    value = value.strip()
    try:
        return ensure_utc(datetime.fromisoformat(value))
    except ValueError:
        pass
    for fmt in _DATE_FORMATS:
        try:
            return ensure_utc(datetime.strptime(value, fmt))
        except ValueError:
            continue
    raise ValueError(f"unparsable date {value!r}")


def normalize_category(value: str) -> str:
    return value.strip().lower().replace("-", "_")


def _parse_instance(raw: dict[str, Any]) -> EvalInstance:
    question_id = str(raw["question_id"])
    question = str(raw["question"])
    if not question:
        raise ValueError("question is empty")
    answer = str(raw["answer"])
    question_type = normalize_category(str(raw.get("question_type", "")))
    question_date = parse_date(str(raw["question_date"]))
    sessions_raw = raw["haystack_sessions"]
    dates_raw = raw.get("haystack_dates") or []
    if not sessions_raw:
        raise ValueError("instance has no haystack sessions")
    if len(dates_raw) != len(sessions_raw):
        raise ValueError("haystack_dates and haystack_sessions lengths differ")
    sessions = []
    for date_str, turns_raw in zip(dates_raw, sessions_raw):
        turns = tuple(
            (str(turn.get("role", "")), str(turn.get("content", "")))
            for turn in turns_raw
            if isinstance(turn, dict)
        )
        sessions.append(EvalSession(date=parse_date(str(date_str)), turns=turns))
    sessions.sort(key=lambda s: s.date)
    return EvalInstance(
        question_id=question_id,
        question_type=question_type,
        question=question,
        answer=answer,
        question_date=question_date,
        sessions=tuple(sessions),
    )


def load_dataset(path: str | Path) -> tuple[list[EvalInstance], list[dict[str, str]]]:
    """Parse a dataset file; per-instance failures are skipped with reasons."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise DatasetError("dataset root must be a JSON array of instances")
    instances: list[EvalInstance] = []
    skipped: list[dict[str, str]] = []
    for position, item in enumerate(raw):
        try:
            if not isinstance(item, dict):
                raise ValueError("instance is not an object")
            instances.append(_parse_instance(item))
        except (KeyError, ValueError, TypeError) as exc:
            identity = item.get("question_id", f"#{position}") if isinstance(item, dict) else f"#{position}"
            logger.warning("skipping instance %s: %s", identity, exc)
            skipped.append({"question_id": str(identity), "reason": f"parse failure: {exc}"})
    return instances, skipped


# -- replay -------------------------------------------------------------------


def pair_turns(turns: Sequence[tuple[str, str]]) -> list[tuple[int, str, str]]:
    """Pair user turns with the assistant turn that follows each.

    Returns (turn_index, user_text, assistant_text) tuples; dangling or
    out-of-order turns are skipped.
    """
    pairs = []
    i = 0
    while i < len(turns):
        role, content = turns[i]
        if role == "user" and content:
            if i + 1 < len(turns) and turns[i + 1][0] == "assistant" and turns[i + 1][1]:
                pairs.append((i, content, turns[i + 1][1]))
                i += 2
                continue
        i += 1
    return pairs


def render_transcript(sessions: Iterable[EvalSession]) -> str:
    """Flatten all haystack turns into the full-context baseline prompt."""
    lines = []
    for session in sessions:
        for role, content in session.turns:
            speaker = "User" if role == "user" else "Assistant"
            lines.append(f"{speaker}: {content}")
    return "\n".join(lines)


def ingest_instance(engine: MemoryEngine, instance: EvalInstance) -> datetime:
    """Replay the instance's sessions through record_turn, oldest first.

    Turn timestamps are the session date plus one minute per turn, clamped
    so the sequence passed to the engine never decreases.
    """
    last_ts: datetime | None = None
    for session_index, session in enumerate(instance.sessions):
        session_id = f"{instance.question_id}/s{session_index}"
        for turn_index, user_text, assistant_text in pair_turns(session.turns):
            ts = session.date + timedelta(minutes=turn_index)
            if last_ts is not None and ts < last_ts:
                ts = last_ts
            engine.record_turn(
                TurnRequest(
                    user_name=instance.question_id,
                    session_id=session_id,
                    user_text=user_text,
                    timestamp=ts,
                ),
                assistant_text,
            )
            last_ts = ts
    return last_ts if last_ts is not None else instance.sessions[-1].date


def answer_question(provider: Provider, context_text: str, question: str) -> str:
    user_text = prompts.ANSWER_TEMPLATE.format(context=context_text, question=question)
    reply, _ = provider.chat_complete(
        ChatExchange(system_text=prompts.ANSWER_SYSTEM, user_text=user_text, max_output_tokens=256)
    )
    return reply


def judge_answer(provider_kind: str, provider: Provider, question: str, expected: str, answer: str) -> bool:
    """Mock mode: substring match; live mode: one-word LLM verdict."""
    if provider_kind == "mock":
        return expected.casefold() in answer.casefold()
    user_text = prompts.JUDGE_TEMPLATE.format(question=question, expected=expected, answer=answer)
    reply, _ = provider.chat_complete(
        ChatExchange(system_text=prompts.JUDGE_SYSTEM, user_text=user_text, max_output_tokens=8)
    )
    verdict = reply.strip().upper()
    if verdict.startswith("INCORRECT"):
        return False
    return verdict.startswith("CORRECT")


@dataclass
class CategoryScore:
    total: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.total if self.total else None


@dataclass
class EvalReport:
    """Replay outcome: per-category accuracy, token and latency means.

    Wall-clock latency fields are volatile by nature and excluded from
    :meth:`stable_json`, the serialization used for determinism checks.
    """

    mode: str
    provider_kind: str
    config_echo: dict[str, Any]
    categories: dict[str, CategoryScore] = field(default_factory=dict)
    results: list[dict[str, Any]] = field(default_factory=list)
    skipped: list[dict[str, str]] = field(default_factory=list)
    mean_context_tokens: float | None = None
    mean_retrieval_latency_ms: float | None = None
    ablation: dict[str, Any] | None = None

    @property
    def total(self) -> int:
        return sum(score.total for score in self.categories.values())

    @property
    def correct(self) -> int:
        return sum(score.correct for score in self.categories.values())

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.total if self.total else None

    def category_accuracy(self, category: str) -> float | None:
        score = self.categories.get(category)
        return score.accuracy if score else None

    def to_dict(self, include_timings: bool = True) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "mode": self.mode,
            "provider_kind": self.provider_kind,
            "config": self.config_echo,
            "totals": {
                "total": self.total,
                "correct": self.correct,
                "accuracy": self.accuracy if self.accuracy is not None else "n/a",
            },
            "categories": {
                name: {
                    "total": score.total,
                    "correct": score.correct,
                    "accuracy": score.accuracy if score.accuracy is not None else "n/a",
                }
                for name, score in sorted(self.categories.items())
            },
            "mean_context_tokens": self.mean_context_tokens,
            "results": self.results,
            "skipped": self.skipped,
        }
        if self.ablation is not None:
            payload["ablation"] = self.ablation
        if include_timings:
            payload["timings"] = {"mean_retrieval_latency_ms": self.mean_retrieval_latency_ms}
        return payload

    def stable_json(self) -> str:
        """Deterministic serialization (timings stripped), for replay checks."""
        return json.dumps(self.to_dict(include_timings=False), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def table(self) -> str:
        """Human-readable summary for standard output."""
        rows = [f"mode: {self.mode}   provider: {self.provider_kind}"]
        rows.append(f"{'category':<24} {'total':>6} {'correct':>8} {'accuracy':>9}")
        for name, score in sorted(self.categories.items()):
            accuracy = f"{score.accuracy:.3f}" if score.accuracy is not None else "n/a"
            rows.append(f"{name:<24} {score.total:>6} {score.correct:>8} {accuracy:>9}")
        overall = f"{self.accuracy:.3f}" if self.accuracy is not None else "n/a"
        rows.append(f"{'overall':<24} {self.total:>6} {self.correct:>8} {overall:>9}")
        if self.mean_context_tokens is not None:
            rows.append(f"mean context tokens: {self.mean_context_tokens:.1f}")
        if self.mean_retrieval_latency_ms is not None:
            rows.append(f"mean retrieval latency: {self.mean_retrieval_latency_ms:.2f} ms")
        if self.skipped:
            rows.append(f"skipped instances: {len(self.skipped)}")
        if self.ablation is not None:
            rows.append("ablation (decay_rate=0):")
            for name, delta in sorted(self.ablation.get("accuracy_delta", {}).items()):
                rows.append(f"  {name}: accuracy delta {delta:+.3f}")
        return "\n".join(rows)


def _eval_one(
    engine: MemoryEngine,
    instance: EvalInstance,
    mode: str,
) -> tuple[bool, int, float, str]:
    """Run one instance; returns (correct, context_tokens, latency_ms, answer)."""
    provider = engine.provider
    if mode == "full-context":
        start = time.perf_counter()
        context_text = render_transcript(instance.sessions)
        latency_ms = (time.perf_counter() - start) * 1000.0
        context_tokens = count_tokens(context_text)
    else:
        last_ts = ingest_instance(engine, instance)
        question_ts = max(instance.question_date, last_ts)
        start = time.perf_counter()
        context = engine.retrieve_context(
            TurnRequest(
                user_name=instance.question_id,
                session_id=f"{instance.question_id}/question",
                user_text=instance.question,
                timestamp=question_ts,
            )
        )
        latency_ms = (time.perf_counter() - start) * 1000.0
        context_text = context.rendered_context
        context_tokens = context.context_token_count
    try:
        answer = answer_question(provider, context_text, instance.question)
    except ProviderError as exc:
        logger.warning("provider failed answering %s: %s", instance.question_id, exc)
        return False, context_tokens, latency_ms, f"<provider error: {exc}>"
    correct = judge_answer(engine.config.provider.kind, provider, instance.question, instance.answer, answer)
    return correct, context_tokens, latency_ms, answer


def replay_eval(
    dataset_path: str | Path,
    config: EngineConfig,
    *,
    mode: str = "memory",
    categories: Sequence[str] | None = None,
    ablation: bool = False,
    workdir: str | Path | None = None,
) -> EvalReport:
    """Replay a dataset and score it; see the module docstring.

    Each run ingests into a fresh store under ``workdir`` (a temporary
    directory by default), one isolated user namespace per instance.
    With ``ablation=True`` the replay runs a second pass at decay rate 0
    and reports the per-category accuracy delta.
    """
    if mode not in ("memory", "full-context"):
        raise ValueError(f"mode must be 'memory' or 'full-context', got {mode!r}")
    wanted = set(normalize_category(c) for c in (categories or SUPPORTED_CATEGORIES))
    unsupported = wanted - set(SUPPORTED_CATEGORIES)
    if unsupported:
        raise ValueError(f"unsupported categories: {sorted(unsupported)}")

    instances, skipped = load_dataset(dataset_path)
    report = EvalReport(mode=mode, provider_kind=config.provider.kind, config_echo=config.echo())
    report.skipped = list(skipped)

    own_tempdir = workdir is None
    base = Path(tempfile.mkdtemp(prefix="memkit-replay-")) if own_tempdir else Path(workdir)
    base.mkdir(parents=True, exist_ok=True)

    run_config = copy.deepcopy(config)
    run_config.store.path = str(base / "replay.db")
    run_config.index.path = str(base / "replay.idx")
    engine = MemoryEngine.from_config(run_config)
    context_token_counts: list[int] = []
    latencies: list[float] = []
    try:
        for instance in instances:
            if instance.question_type not in wanted:
                report.skipped.append(
                    {"question_id": instance.question_id, "reason": f"category {instance.question_type} not selected"}
                )
                continue
            score = report.categories.setdefault(instance.question_type, CategoryScore())
            correct, tokens, latency_ms, answer = _eval_one(engine, instance, mode)
            score.total += 1
            score.correct += int(correct)
            context_token_counts.append(tokens)
            latencies.append(latency_ms)
            report.results.append(
                {
                    "question_id": instance.question_id,
                    "category": instance.question_type,
                    "correct": correct,
                    "context_tokens": tokens,
                    "answer": answer[:200],
                }
            )
    finally:
        engine.close()

    if context_token_counts:
        report.mean_context_tokens = sum(context_token_counts) / len(context_token_counts)
    if latencies:
        report.mean_retrieval_latency_ms = sum(latencies) / len(latencies)

    if ablation and mode == "memory":
        ablation_config = copy.deepcopy(config)
        ablation_config.retrieval.decay_rate = 0.0
        ablation_report = replay_eval(
            dataset_path,
            ablation_config,
            mode=mode,
            categories=categories,
            ablation=False,
            workdir=base / "ablation",
        )
        deltas = {}
        for name, score in report.categories.items():
            main_acc = score.accuracy
            ablation_acc = ablation_report.category_accuracy(name)
            if main_acc is not None and ablation_acc is not None:
                deltas[name] = main_acc - ablation_acc
        report.ablation = {
            "decay_rate": 0.0,
            "categories": {
                name: {"total": s.total, "correct": s.correct, "accuracy": s.accuracy if s.accuracy is not None else "n/a"}
                for name, s in sorted(ablation_report.categories.items())
            },
            "accuracy_delta": deltas,
        }
    return report
