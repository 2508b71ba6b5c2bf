"""Embedded relational store for messages, session summaries, and triplets.

One SQLite file holds four tables (``messages``, ``summaries``,
``triplets``, ``usage``); the full schema is documented in
``docs/schema.md`` and applied as a single migration at startup. A stored
schema version (``PRAGMA user_version``) is checked on every open and a
mismatch is a hard error — no silent in-place upgrades.

Identifiers for messages and triplets are store-assigned sequential
integers, which keeps replaying a transcript into a fresh store fully
deterministic.
"""

from __future__ import annotations

import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path

from .knowledge import StoredTriplet, Triplet
from .providers import TokenUsage
from .timeutil import from_millis, to_millis

SCHEMA_VERSION = 1

_MIGRATION = """
CREATE TABLE messages (
    message_id  INTEGER PRIMARY KEY AUTOINCREMENT,
    user_name   TEXT    NOT NULL,
    session_id  TEXT    NOT NULL,
    role        TEXT    NOT NULL CHECK (role IN ('user', 'assistant')),
    content     TEXT    NOT NULL CHECK (content <> ''),
    created_at  INTEGER NOT NULL
);
CREATE INDEX idx_messages_session ON messages (session_id, created_at);
CREATE INDEX idx_messages_user ON messages (user_name);

CREATE TABLE summaries (
    session_id    TEXT    PRIMARY KEY,
    user_name     TEXT    NOT NULL,
    summary_text  TEXT    NOT NULL CHECK (summary_text <> ''),
    updated_at    INTEGER NOT NULL,
    turns_covered INTEGER NOT NULL CHECK (turns_covered >= 0)
);

CREATE TABLE triplets (
    triplet_id     INTEGER PRIMARY KEY AUTOINCREMENT,
    user_name      TEXT    NOT NULL,
    session_id     TEXT    NOT NULL,
    subject        TEXT    NOT NULL CHECK (subject <> ''),
    predicate      TEXT    NOT NULL CHECK (predicate <> ''),
    object         TEXT    NOT NULL CHECK (object <> ''),
    source_message TEXT    NOT NULL,
    created_at     INTEGER NOT NULL,
    embedding_ref  INTEGER NOT NULL
);
CREATE INDEX idx_triplets_user ON triplets (user_name);

CREATE TABLE usage (
    message_id        INTEGER PRIMARY KEY REFERENCES messages (message_id),
    prompt_tokens     INTEGER NOT NULL CHECK (prompt_tokens >= 0),
    completion_tokens INTEGER NOT NULL CHECK (completion_tokens >= 0),
    total_tokens      INTEGER NOT NULL CHECK (total_tokens = prompt_tokens + completion_tokens)
);
"""


class StorageError(Exception):
    """Raised for any relational-store failure (I/O, constraint, schema)."""


class SchemaVersionError(StorageError):
    """The on-disk schema version does not match this code."""


class Role(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class MessageRecord:
    """One persisted conversational turn (user or assistant side)."""

    user_name: str
    session_id: str
    role: Role
    content: str
    created_at: datetime
    usage: TokenUsage | None = None
    message_id: int | None = None

    def __post_init__(self) -> None:
        if not self.user_name or not self.session_id:
            raise ValueError("user_name and session_id must be non-empty")
        if not self.content:
            raise ValueError("content must be non-empty")


@dataclass(frozen=True)
class SummaryRecord:
    """The single rolling summary row for one session."""

    session_id: str
    user_name: str
    summary_text: str
    updated_at: datetime
    turns_covered: int

    def __post_init__(self) -> None:
        if not self.summary_text:
            raise ValueError("summary_text must be non-empty")
        if self.turns_covered < 0:
            raise ValueError("turns_covered must be nonnegative")


class ConversationStore:
    """Durable, queryable log backed by a single SQLite file.

    All operations are serialized through one internal lock, which makes
    the store safe for concurrent writers to distinct sessions (the engine
    additionally serializes writes per user).
    """

    def __init__(self, path: str | Path):
        self.path = str(path)
        try:
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StorageError(f"cannot open store at {self.path}: {exc}") from exc
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._lock = threading.RLock()
        self._migrate()

    def close(self) -> None:
        self._conn.close()

    def _migrate(self) -> None:
        with self._lock:
            version = self._conn.execute("PRAGMA user_version").fetchone()[0]
            if version == SCHEMA_VERSION:
                return
            if version != 0:
                raise SchemaVersionError(
                    f"store at {self.path} has schema version {version}, expected {SCHEMA_VERSION}"
                )
            has_tables = self._conn.execute(
                "SELECT COUNT(*) FROM sqlite_master WHERE type = 'table'"
            ).fetchone()[0]
            if has_tables:
                raise SchemaVersionError(
                    f"store at {self.path} has tables but no schema version marker"
                )
            try:
                self._conn.executescript(_MIGRATION)
                self._conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
                self._conn.commit()
            except sqlite3.Error as exc:
                raise StorageError(f"migration failed: {exc}") from exc

    # -- messages ----------------------------------------------------------

    def append_message(self, record: MessageRecord) -> int:
        """Persist one message and return its store-assigned id.

        Rejects timestamps that would break the non-decreasing ``created_at``
        order within the session, and explicit duplicate ids.
        """
        created = to_millis(record.created_at)
        with self._lock:
            latest = self._conn.execute(
                "SELECT MAX(created_at) FROM messages WHERE session_id = ?",
                (record.session_id,),
            ).fetchone()[0]
            if latest is not None and created < latest:
                raise StorageError(
                    f"created_at regression in session {record.session_id!r}: {created} < {latest}"
                )
            try:
                if record.message_id is None:
                    cursor = self._conn.execute(
                        "INSERT INTO messages (user_name, session_id, role, content, created_at)"
                        " VALUES (?, ?, ?, ?, ?)",
                        (record.user_name, record.session_id, record.role.value, record.content, created),
                    )
                    message_id = int(cursor.lastrowid)
                else:
                    self._conn.execute(
                        "INSERT INTO messages (message_id, user_name, session_id, role, content, created_at)"
                        " VALUES (?, ?, ?, ?, ?, ?)",
                        (
                            record.message_id,
                            record.user_name,
                            record.session_id,
                            record.role.value,
                            record.content,
                            created,
                        ),
                    )
                    message_id = record.message_id
                if record.usage is not None:
                    self._insert_usage(message_id, record.usage)
                self._conn.commit()
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StorageError(f"append_message failed: {exc}") from exc
            return message_id

    def _insert_usage(self, message_id: int, usage: TokenUsage) -> None:
        self._conn.execute(
            "INSERT OR REPLACE INTO usage (message_id, prompt_tokens, completion_tokens, total_tokens)"
            " VALUES (?, ?, ?, ?)",
            (message_id, usage.prompt_tokens, usage.completion_tokens, usage.total_tokens),
        )

    def record_usage(self, message_id: int, usage: TokenUsage) -> None:
        """Attach (or replace) token accounting for an already-stored message."""
        with self._lock:
            try:
                self._insert_usage(message_id, usage)
                self._conn.commit()
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StorageError(f"record_usage failed: {exc}") from exc

    def get_session_messages(self, session_id: str) -> list[MessageRecord]:
        """All messages of a session, by created_at then insertion order."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT m.message_id, m.user_name, m.session_id, m.role, m.content, m.created_at,"
                "       u.prompt_tokens, u.completion_tokens"
                " FROM messages m LEFT JOIN usage u ON u.message_id = m.message_id"
                " WHERE m.session_id = ? ORDER BY m.created_at, m.message_id",
                (session_id,),
            ).fetchall()
        records = []
        for mid, user, session, role, content, created, prompt, completion in rows:
            usage = None if prompt is None else TokenUsage.of(prompt, completion)
            records.append(
                MessageRecord(
                    message_id=mid,
                    user_name=user,
                    session_id=session,
                    role=Role(role),
                    content=content,
                    created_at=from_millis(created),
                    usage=usage,
                )
            )
        return records

    def count_messages(self, session_id: str | None = None) -> int:
        with self._lock:
            if session_id is None:
                return self._conn.execute("SELECT COUNT(*) FROM messages").fetchone()[0]
            return self._conn.execute(
                "SELECT COUNT(*) FROM messages WHERE session_id = ?", (session_id,)
            ).fetchone()[0]

    # -- summaries -----------------------------------------------------------

    def upsert_summary(self, record: SummaryRecord) -> None:
        """Atomically replace the session's summary (one row per session)."""
        with self._lock:
            try:
                self._conn.execute(
                    "INSERT INTO summaries (session_id, user_name, summary_text, updated_at, turns_covered)"
                    " VALUES (?, ?, ?, ?, ?)"
                    " ON CONFLICT (session_id) DO UPDATE SET"
                    "   user_name = excluded.user_name,"
                    "   summary_text = excluded.summary_text,"
                    "   updated_at = excluded.updated_at,"
                    "   turns_covered = excluded.turns_covered",
                    (
                        record.session_id,
                        record.user_name,
                        record.summary_text,
                        to_millis(record.updated_at),
                        record.turns_covered,
                    ),
                )
                self._conn.commit()
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StorageError(f"upsert_summary failed: {exc}") from exc

    def get_summary(self, session_id: str) -> SummaryRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT session_id, user_name, summary_text, updated_at, turns_covered"
                " FROM summaries WHERE session_id = ?",
                (session_id,),
            ).fetchone()
        if row is None:
            return None
        return SummaryRecord(
            session_id=row[0],
            user_name=row[1],
            summary_text=row[2],
            updated_at=from_millis(row[3]),
            turns_covered=row[4],
        )

    # -- triplets ------------------------------------------------------------

    def insert_triplet(
        self,
        triplet: Triplet,
        user_name: str,
        session_id: str,
        source_message: str,
        created_at: datetime,
        embedding_ref: int | None = None,
    ) -> int:
        """Insert one triplet row and return its id.

        ``embedding_ref=None`` means the index entry shares the triplet's
        own id (the engine's convention); the row is updated to point at
        itself within the same transaction.
        """
        with self._lock:
            try:
                cursor = self._conn.execute(
                    "INSERT INTO triplets (user_name, session_id, subject, predicate, object,"
                    " source_message, created_at, embedding_ref) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        user_name,
                        session_id,
                        triplet.subject,
                        triplet.predicate,
                        triplet.object,
                        source_message,
                        to_millis(created_at),
                        -1 if embedding_ref is None else embedding_ref,
                    ),
                )
                triplet_id = int(cursor.lastrowid)
                if embedding_ref is None:
                    self._conn.execute(
                        "UPDATE triplets SET embedding_ref = ? WHERE triplet_id = ?",
                        (triplet_id, triplet_id),
                    )
                self._conn.commit()
                return triplet_id
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StorageError(f"insert_triplet failed: {exc}") from exc

    def delete_triplet(self, triplet_id: int) -> None:
        with self._lock:
            try:
                self._conn.execute("DELETE FROM triplets WHERE triplet_id = ?", (triplet_id,))
                self._conn.commit()
            except sqlite3.Error as exc:
                self._conn.rollback()
                raise StorageError(f"delete_triplet failed: {exc}") from exc

    @staticmethod
    def _triplet_from_row(row: tuple) -> StoredTriplet:
        return StoredTriplet(
            triplet_id=row[0],
            triplet=Triplet(subject=row[3], predicate=row[4], object=row[5]),
            user_name=row[1],
            session_id=row[2],
            source_message=row[6],
            created_at=from_millis(row[7]),
            embedding_ref=row[8],
        )

    _TRIPLET_COLUMNS = (
        "triplet_id, user_name, session_id, subject, predicate, object,"
        " source_message, created_at, embedding_ref"
    )

    def triplets_for_user(self, user_name: str) -> list[StoredTriplet]:
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {self._TRIPLET_COLUMNS} FROM triplets WHERE user_name = ? ORDER BY triplet_id",
                (user_name,),
            ).fetchall()
        return [self._triplet_from_row(row) for row in rows]

    def get_triplets(self, triplet_ids: list[int]) -> dict[int, StoredTriplet]:
        if not triplet_ids:
            return {}
        placeholders = ",".join("?" for _ in triplet_ids)
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {self._TRIPLET_COLUMNS} FROM triplets WHERE triplet_id IN ({placeholders})",
                triplet_ids,
            ).fetchall()
        return {row[0]: self._triplet_from_row(row) for row in rows}

    def count_triplets(self, user_name: str | None = None) -> int:
        with self._lock:
            if user_name is None:
                return self._conn.execute("SELECT COUNT(*) FROM triplets").fetchone()[0]
            return self._conn.execute(
                "SELECT COUNT(*) FROM triplets WHERE user_name = ?", (user_name,)
            ).fetchone()[0]

    # -- identity ------------------------------------------------------------

    def has_user_history(self, user_name: str) -> bool:
        """True iff any message or triplet exists for the user."""
        with self._lock:
            row = self._conn.execute(
                "SELECT EXISTS (SELECT 1 FROM messages WHERE user_name = ?)"
                " OR EXISTS (SELECT 1 FROM triplets WHERE user_name = ?)",
                (user_name, user_name),
            ).fetchone()
        return bool(row[0])
