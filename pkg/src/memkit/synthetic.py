"""Deterministic synthetic datasets in the replay harness's input format.

Two planted families:

* ``single_session_user`` — one session states a personal fact amid noise
  turns; the question asks for that fact and the ground truth is a
  substring of the planted statement.
* ``knowledge_update`` — an earlier session states a fact
  ("I keep my X in the Y"), a later session revises it ("my X is in the
  Z"), and the question asks where the item is. The ground truth appears
  only in the revision, so answering correctly requires preferring the
  newer, higher-weighted fact over the older, more similar one.

Used by the test suite and handy for offline demos; content is fixed, so
replays are byte-reproducible.
"""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any

_BASE_DATE = datetime(2025, 6, 2, 9, 0, tzinfo=timezone.utc)

_NOISE_TURNS = [
    ("the weather looks gloomy today", "It does seem overcast."),
    ("thanks for the help earlier", "Happy to help any time."),
    ("let us talk about something new", "Sure, what would you like to discuss?"),
]

# (fact statement, question, ground truth)
_SINGLE_SESSION_FACTS = [
    ("I completed my degree in 2023", "What year did I complete my degree", "2023"),
    ("my dog is named Biscuit", "What is my dog named", "Biscuit"),
    ("I work at Meridian Labs", "Where do I work", "Meridian Labs"),
    ("my favorite color is teal", "What is my favorite color", "teal"),
    ("I live in Lisbon", "Which city do I live in", "Lisbon"),
    ("my car is a hatchback", "What kind of car do I have", "hatchback"),
    ("my sister is called Maren", "What is my sister called", "Maren"),
    ("I play tennis on Saturdays", "Which sport do I play", "tennis"),
    ("my office is on floor seven", "Which floor is my office on", "seven"),
    ("I studied physics at university", "What did I study at university", "physics"),
]

# (item, old location statement, revision statement, ground truth)
_KNOWLEDGE_UPDATES = [
    ("keys", "I keep my keys in the kitchen drawer", "my keys are in the blue box", "blue box"),
    ("shoes", "I keep my shoes under the bed", "my shoes are in the closet", "closet"),
    ("passport", "I keep my passport in the desk drawer", "my passport is in the safe", "safe"),
    ("bike", "I keep my bike in the garage", "my bike is in the shed", "shed"),
    ("glasses", "I keep my glasses on the nightstand", "my glasses are in the red case", "red case"),
    ("umbrella", "I keep my umbrella near the front door", "my umbrella is in the car trunk", "car trunk"),
    ("charger", "I keep my charger in the top drawer", "my charger is in the laptop bag", "laptop bag"),
    ("notebook", "I keep my notebook on the office desk", "my notebook is in the backpack", "backpack"),
    ("medicine", "I keep my medicine in the bathroom cabinet", "my medicine is on the kitchen shelf", "kitchen shelf"),
    ("tools", "I keep my tools in the basement", "my tools are in the blue cabinet", "blue cabinet"),
]


def _fmt(moment: datetime) -> str:
    return moment.strftime("%Y-%m-%d %H:%M")


def build_synthetic_dataset(
    n_single_session: int = 10,
    n_knowledge_update: int = 10,
    base_date: datetime = _BASE_DATE,
) -> list[dict[str, Any]]:
    """Build ``n_single_session + n_knowledge_update`` planted instances."""
    if not 0 <= n_single_session <= len(_SINGLE_SESSION_FACTS):
        raise ValueError(f"n_single_session must be in [0, {len(_SINGLE_SESSION_FACTS)}]")
    if not 0 <= n_knowledge_update <= len(_KNOWLEDGE_UPDATES):
        raise ValueError(f"n_knowledge_update must be in [0, {len(_KNOWLEDGE_UPDATES)}]")

    instances: list[dict[str, Any]] = []
    for i, (fact, question, truth) in enumerate(_SINGLE_SESSION_FACTS[:n_single_session]):
        session_date = base_date + timedelta(days=i)
        turns = [
            {"role": "user", "content": _NOISE_TURNS[0][0]},
            {"role": "assistant", "content": _NOISE_TURNS[0][1]},
            {"role": "user", "content": fact},
            {"role": "assistant", "content": "Thanks, I will remember that."},
            {"role": "user", "content": _NOISE_TURNS[1][0]},
            {"role": "assistant", "content": _NOISE_TURNS[1][1]},
        ]
        instances.append(
            {
                "question_id": f"su-{i:02d}",
                "question_type": "single-session-user",
                "question": question,
                "answer": truth,
                "question_date": _fmt(session_date + timedelta(hours=2)),
                "haystack_dates": [_fmt(session_date)],
                "haystack_sessions": [turns],
            }
        )

    for i, (item, old_statement, revision, truth) in enumerate(_KNOWLEDGE_UPDATES[:n_knowledge_update]):
        first_date = base_date + timedelta(days=20 + 2 * i)
        revision_date = first_date + timedelta(days=1)
        session_one = [
            {"role": "user", "content": old_statement},
            {"role": "assistant", "content": "Noted."},
        ]
        session_two = [
            {"role": "user", "content": revision},
            {"role": "assistant", "content": "Understood, I have updated that."},
        ]
        instances.append(
            {
                "question_id": f"ku-{i:02d}",
                "question_type": "knowledge-update",
                "question": f"Where do I keep my {item}",
                "answer": truth,
                "question_date": _fmt(revision_date + timedelta(hours=1)),
                "haystack_dates": [_fmt(first_date), _fmt(revision_date)],
                "haystack_sessions": [session_one, session_two],
            }
        )
    return instances


def write_synthetic_dataset(path: str | Path, **kwargs: Any) -> Path:
    """Write the synthetic dataset as JSON; returns the path."""
    path = Path(path)
    path.write_text(json.dumps(build_synthetic_dataset(**kwargs), indent=2) + "\n", encoding="utf-8")
    return path
