"""Exact nearest-neighbor store over triplet embeddings.

Retrieval is a full scan with cosine similarity — per-user triplet counts
are small, and exact scanning keeps ranking tests deterministic. Entries
persist in an append-only binary segment file (magic + version header,
fixed-layout records) and the in-memory maps are rebuilt on startup, so
no external vector service is needed.

Record layout (little-endian), after the 10-byte header
``b"VIDX" + u16 version + u32 dim``::

    u64 entry_id | u16 name_len | name bytes | u64 payload_id
    | i64 created_at_ms | dim * f32 vector
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .providers import Embedding
from .timeutil import from_millis, to_millis

MAGIC = b"VIDX"
VERSION = 1
_HEADER = struct.Struct("<4sHI")
_RECORD_FIXED = struct.Struct("<QH")
_RECORD_TAIL = struct.Struct("<Qq")


class VectorIndexError(Exception):
    """Raised for vector-index failures (format, dimension, duplicate id)."""


@dataclass(frozen=True)
class IndexEntry:
    """One indexed vector plus the metadata needed for filtered retrieval."""

    entry_id: int
    user_name: str
    vector: Embedding
    payload_id: int
    created_at: datetime


@dataclass(frozen=True)
class ScoredEntry:
    entry: IndexEntry
    similarity: float


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (||a|| * ||b||), defined as 0 when either norm is 0."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


class VectorIndex:
    """Single-writer, multi-reader exact-scan index with file persistence.

    Vectors are stored as float32 on disk and scored in float64. Queries
    observe a consistent prefix of appends (entries only ever grow).
    """

    def __init__(self, path: str | Path, dim: int):
        if dim < 1:
            raise VectorIndexError("dimension must be >= 1")
        self.path = Path(path)
        self.dim = dim
        self._lock = threading.Lock()
        self._entries: list[IndexEntry] = []
        self._vectors: list[np.ndarray] = []
        self._ids: set[int] = set()
        self._by_user: dict[str, list[int]] = {}
        if self.path.exists() and self.path.stat().st_size > 0:
            self._load()
        else:
            with open(self.path, "wb") as handle:
                handle.write(_HEADER.pack(MAGIC, VERSION, dim))
        self._appender = open(self.path, "ab")

    def close(self) -> None:
        self._appender.close()

    # -- persistence -------------------------------------------------------

    def _load(self) -> None:
        with open(self.path, "rb") as handle:
            header = handle.read(_HEADER.size)
            if len(header) < _HEADER.size:
                raise VectorIndexError(f"index file {self.path} is truncated")
            magic, version, dim = _HEADER.unpack(header)
            if magic != MAGIC:
                raise VectorIndexError(f"index file {self.path} has bad magic {magic!r}")
            if version != VERSION:
                raise VectorIndexError(f"index file version {version}, expected {VERSION}")
            if dim != self.dim:
                raise VectorIndexError(f"index file dimension {dim}, configured {self.dim}")
            while True:
                fixed = handle.read(_RECORD_FIXED.size)
                if not fixed:
                    break
                if len(fixed) < _RECORD_FIXED.size:
                    raise VectorIndexError(f"index file {self.path} has a truncated record")
                entry_id, name_len = _RECORD_FIXED.unpack(fixed)
                name_bytes = handle.read(name_len)
                tail = handle.read(_RECORD_TAIL.size)
                vector_bytes = handle.read(4 * self.dim)
                if len(name_bytes) < name_len or len(tail) < _RECORD_TAIL.size or len(vector_bytes) < 4 * self.dim:
                    raise VectorIndexError(f"index file {self.path} has a truncated record")
                payload_id, created_ms = _RECORD_TAIL.unpack(tail)
                vector = np.frombuffer(vector_bytes, dtype="<f4").astype(np.float32)
                entry = IndexEntry(
                    entry_id=entry_id,
                    user_name=name_bytes.decode("utf-8"),
                    vector=Embedding(tuple(float(v) for v in vector)),
                    payload_id=payload_id,
                    created_at=from_millis(created_ms),
                )
                self._append_in_memory(entry, vector)

    def _append_in_memory(self, entry: IndexEntry, vector: np.ndarray) -> None:
        if entry.entry_id in self._ids:
            raise VectorIndexError(f"duplicate entry_id {entry.entry_id}")
        position = len(self._entries)
        self._entries.append(entry)
        self._vectors.append(vector)
        self._ids.add(entry.entry_id)
        self._by_user.setdefault(entry.user_name, []).append(position)

    # -- operations ----------------------------------------------------------

    def add(self, entry: IndexEntry) -> None:
        """Append one entry; it becomes immediately retrievable and durable.

        Vectors are quantized to float32 on entry (the storage precision),
        so the entry returned by queries matches what persists on disk.
        """
        if entry.vector.dimension != self.dim:
            raise VectorIndexError(
                f"entry dimension {entry.vector.dimension} does not match index dimension {self.dim}"
            )
        vector = np.asarray(entry.vector.values, dtype=np.float32)
        entry = replace(entry, vector=Embedding(tuple(float(v) for v in vector)))
        with self._lock:
            self._append_in_memory(entry, vector)
            try:
                self._appender.write(_RECORD_FIXED.pack(entry.entry_id, len(entry.user_name.encode("utf-8"))))
                self._appender.write(entry.user_name.encode("utf-8"))
                self._appender.write(_RECORD_TAIL.pack(entry.payload_id, to_millis(entry.created_at)))
                self._appender.write(vector.astype("<f4").tobytes())
                self._appender.flush()
            except OSError as exc:
                raise VectorIndexError(f"index write failed: {exc}") from exc

    def query_top_k(self, query_vector: Embedding, user_name: str, k: int) -> list[ScoredEntry]:
        """Exact top-k cosine matches among the user's entries.

        Sorted by similarity descending; ties broken by newer ``created_at``
        first, then ``entry_id`` ascending.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if query_vector.dimension != self.dim:
            raise VectorIndexError(
                f"query dimension {query_vector.dimension} does not match index dimension {self.dim}"
            )
        with self._lock:
            positions = list(self._by_user.get(user_name, ()))
        if not positions:
            return []
        query = np.asarray(query_vector.values, dtype=np.float64)
        query_norm = float(np.linalg.norm(query))
        scored: list[tuple[float, int, int, int]] = []
        for position in positions:
            vector = self._vectors[position].astype(np.float64)
            norm = float(np.linalg.norm(vector))
            if query_norm == 0.0 or norm == 0.0:
                similarity = 0.0
            else:
                similarity = float(np.dot(vector, query) / (norm * query_norm))
            entry = self._entries[position]
            scored.append((similarity, to_millis(entry.created_at), entry.entry_id, position))
        scored.sort(key=lambda item: (-item[0], -item[1], item[2]))
        return [
            ScoredEntry(entry=self._entries[position], similarity=similarity)
            for similarity, _, _, position in scored[:k]
        ]

    def count(self, user_name: str | None = None) -> int:
        with self._lock:
            if user_name is None:
                return len(self._entries)
            return len(self._by_user.get(user_name, ()))

    def __len__(self) -> int:
        return self.count()
