"""UTC timestamp helpers.

Timestamps persist as integer milliseconds since the Unix epoch; ages for
the decay math are derived in minutes, as exact reals, at read time.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def ensure_utc(moment: datetime) -> datetime:
    """Interpret naive datetimes as UTC; convert aware ones to UTC."""
    if moment.tzinfo is None:
        return moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


def to_millis(moment: datetime) -> int:
    """Truncate to whole milliseconds since the epoch (exact integer math)."""
    delta = ensure_utc(moment) - _EPOCH
    return delta.days * 86_400_000 + delta.seconds * 1_000 + delta.microseconds // 1_000


def from_millis(millis: int) -> datetime:
    return _EPOCH + timedelta(milliseconds=millis)


def minutes_between(earlier: datetime, later: datetime) -> float:
    """Exact fractional minutes from ``earlier`` to ``later``."""
    return (ensure_utc(later) - ensure_utc(earlier)).total_seconds() / 60.0
