"""Recency weighting for retrieved triplets.

Given a batch of retrieved items, each item's age in minutes is min-max
normalized into [0, 1], passed through an exponential decay
``exp(-a * normalized_age)``, and the resulting raw weights are divided
by their sum so the batch forms a distribution. Newer items never weigh
less than older ones, and a batch of identical timestamps degenerates to
uniform weights.

All functions here are pure and stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

from .index import ScoredEntry
from .knowledge import StoredTriplet
from .timeutil import minutes_between


@dataclass(frozen=True)
class AgedItem:
    """A retrieved entry paired with its age at weighting time."""

    item: ScoredEntry
    age_minutes: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.age_minutes) or self.age_minutes < 0:
            raise ValueError("age_minutes must be finite and nonnegative")


@dataclass(frozen=True)
class WeightedTriplet:
    """A retrieved triplet with its recency weight in [0, 1].

    ``weight`` values of one batch sum to 1; ``raw_weight`` is the
    pre-normalization decay value ``exp(-a * normalized_age)``.
    """

    triplet: StoredTriplet
    similarity: float
    normalized_age: float
    raw_weight: float
    weight: float


def normalize_ages(ages: Sequence[float]) -> list[float]:
    """Min-max normalize ages into [0, 1].

    The minimum maps to 0 and the maximum to 1. When all ages are equal
    (including singleton batches) the spread is zero and every normalized
    age is 0, which downstream yields uniform weights.
    """
    if not ages:
        raise ValueError("ages must be non-empty")
    if not all(math.isfinite(age) for age in ages):
        raise ValueError("ages must all be finite")
    lo, hi = min(ages), max(ages)
    if hi == lo:
        return [0.0] * len(ages)
    spread = hi - lo
    return [(age - lo) / spread for age in ages]


def raw_weights(normalized_ages: Sequence[float], a: float) -> list[float]:
    """Exponential decay ``exp(-a * age)`` for each normalized age."""
    if a <= 0:
        raise ValueError("decay rate a must be > 0")
    return [math.exp(-a * age) for age in normalized_ages]


def normalize_weights(raw: Sequence[float]) -> list[float]:
    """Scale positive weights so they sum to 1, preserving order."""
    if not raw:
        raise ValueError("raw weights must be non-empty")
    total = sum(raw)
    return [value / total for value in raw]


def weigh(
    batch: Sequence[tuple[ScoredEntry, StoredTriplet]],
    now: datetime,
    a: float,
) -> list[WeightedTriplet]:
    """Weight one retrieval batch by recency (ages taken at ``now``).

    Composition of :func:`normalize_ages`, :func:`raw_weights`, and
    :func:`normalize_weights` over the batch, with results attached to the
    stored triplets. Input order (the retrieval ranking) is preserved.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    ages = []
    for _, stored in batch:
        age = minutes_between(stored.created_at, now)
        if age < 0:
            raise ValueError(f"triplet {stored.triplet_id} was created after 'now'")
        ages.append(age)
    normalized = normalize_ages(ages)
    raw = raw_weights(normalized, a)
    weights = normalize_weights(raw)
    return [
        WeightedTriplet(
            triplet=stored,
            similarity=scored.similarity,
            normalized_age=normalized[i],
            raw_weight=raw[i],
            weight=weights[i],
        )
        for i, (scored, stored) in enumerate(batch)
    ]


def uniform_weigh(
    batch: Sequence[tuple[ScoredEntry, StoredTriplet]],
    now: datetime,
) -> list[WeightedTriplet]:
    """Ablation path: equal weights 1/N regardless of age.

    Used when the configured decay rate is 0 to measure what recency
    weighting contributes; ages are still computed for inspection.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    share = 1.0 / len(batch)
    out = []
    for scored, stored in batch:
        age = minutes_between(stored.created_at, now)
        if age < 0:
            raise ValueError(f"triplet {stored.triplet_id} was created after 'now'")
        out.append(
            WeightedTriplet(
                triplet=stored,
                similarity=scored.similarity,
                normalized_age=0.0,
                raw_weight=1.0,
                weight=share,
            )
        )
    return out
