"""Relational store: round trips, ordering, isolation, schema versioning."""

from __future__ import annotations

import sqlite3
import threading

import pytest

from memkit.knowledge import Triplet
from memkit.providers import TokenUsage
from memkit.store import (
    ConversationStore,
    MessageRecord,
    Role,
    SchemaVersionError,
    StorageError,
    SummaryRecord,
)

from conftest import ts


@pytest.fixture
def store(tmp_path):
    s = ConversationStore(tmp_path / "test.db")
    yield s
    s.close()


def msg(user="u", session="s", role=Role.USER, content="hello there", at=None, usage=None, message_id=None):
    return MessageRecord(
        user_name=user,
        session_id=session,
        role=role,
        content=content,
        created_at=at if at is not None else ts(0),
        usage=usage,
        message_id=message_id,
    )


class TestMessages:
    def test_first_message_reads_back(self, store):
        store.append_message(msg(content="first words", usage=TokenUsage.of(3, 5)))
        records = store.get_session_messages("s")
        assert len(records) == 1
        got = records[0]
        assert got.content == "first words"
        assert got.role is Role.USER
        assert got.created_at == ts(0)
        assert got.usage == TokenUsage.of(3, 5)

    def test_two_turns_ordered_by_created_at(self, store):
        store.append_message(msg(content="later", at=ts(5)))
        with pytest.raises(StorageError):
            # regression within a session is rejected
            store.append_message(msg(content="earlier", at=ts(1)))
        store.append_message(msg(content="even later", at=ts(9)))
        assert [m.content for m in store.get_session_messages("s")] == ["later", "even later"]

    def test_equal_timestamps_keep_insertion_order(self, store):
        for i in range(5):
            store.append_message(msg(content=f"m{i}", at=ts(3)))
        assert [m.content for m in store.get_session_messages("s")] == [f"m{i}" for i in range(5)]

    def test_thousand_appends_counted(self, store):
        for i in range(1000):
            store.append_message(msg(content=f"m{i}", at=ts(i)))
        assert store.count_messages("s") == 1000
        assert store.count_messages() == 1000

    def test_unknown_session_empty(self, store):
        assert store.get_session_messages("nope") == []

    def test_session_isolation(self, store):
        store.append_message(msg(session="a", content="a1", at=ts(0)))
        store.append_message(msg(session="b", content="b1", at=ts(1)))
        store.append_message(msg(session="a", content="a2", at=ts(2)))
        assert [m.content for m in store.get_session_messages("a")] == ["a1", "a2"]
        assert [m.content for m in store.get_session_messages("b")] == ["b1"]

    def test_duplicate_explicit_id_rejected(self, store):
        store.append_message(msg(message_id=77))
        with pytest.raises(StorageError):
            store.append_message(msg(message_id=77, at=ts(1)))

    def test_round_trip_millisecond_resolution(self, store):
        from datetime import timedelta

        at = ts(0) + timedelta(milliseconds=123)
        store.append_message(msg(at=at))
        assert store.get_session_messages("s")[0].created_at == at

    def test_record_usage_after_append(self, store):
        message_id = store.append_message(msg())
        store.record_usage(message_id, TokenUsage.of(10, 2))
        assert store.get_session_messages("s")[0].usage == TokenUsage.of(10, 2)

    def test_invalid_record_rejected(self):
        with pytest.raises(ValueError):
            msg(content="")
        with pytest.raises(ValueError):
            msg(user="")


class TestSummaries:
    def test_upsert_then_get_round_trip(self, store):
        record = SummaryRecord("s", "u", "the summary", ts(1), 1)
        store.upsert_summary(record)
        assert store.get_summary("s") == record

    def test_second_upsert_wins(self, store):
        store.upsert_summary(SummaryRecord("s", "u", "first", ts(1), 1))
        store.upsert_summary(SummaryRecord("s", "u", "second", ts(2), 2))
        got = store.get_summary("s")
        assert got.summary_text == "second"
        assert got.turns_covered == 2
        assert got.updated_at == ts(2)

    def test_absent_summary_none(self, store):
        assert store.get_summary("brand-new") is None

    def test_concurrent_upserts_distinct_sessions(self, store):
        def writer(session: str):
            for i in range(50):
                store.upsert_summary(SummaryRecord(session, "u", f"{session} v{i}", ts(i), i))

        threads = [threading.Thread(target=writer, args=(f"s{n}",)) for n in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for n in range(4):
            got = store.get_summary(f"s{n}")
            assert got.summary_text == f"s{n} v49"
            assert got.turns_covered == 49

    def test_empty_summary_rejected(self):
        with pytest.raises(ValueError):
            SummaryRecord("s", "u", "", ts(0), 0)


class TestTriplets:
    def test_insert_and_self_embedding_ref(self, store):
        triplet_id = store.insert_triplet(Triplet("a", "likes", "b"), "u", "s", "a likes b", ts(0))
        rows = store.triplets_for_user("u")
        assert len(rows) == 1
        assert rows[0].triplet_id == triplet_id
        assert rows[0].embedding_ref == triplet_id
        assert rows[0].triplet == Triplet("a", "likes", "b")

    def test_delete(self, store):
        triplet_id = store.insert_triplet(Triplet("a", "p", "b"), "u", "s", "src", ts(0))
        store.delete_triplet(triplet_id)
        assert store.triplets_for_user("u") == []

    def test_get_by_ids(self, store):
        ids = [store.insert_triplet(Triplet("a", "p", f"b{i}"), "u", "s", "src", ts(i)) for i in range(3)]
        got = store.get_triplets(ids[:2])
        assert sorted(got) == sorted(ids[:2])

    def test_count_by_user(self, store):
        store.insert_triplet(Triplet("a", "p", "b"), "u", "s", "src", ts(0))
        store.insert_triplet(Triplet("c", "p", "d"), "v", "s", "src", ts(0))
        assert store.count_triplets("u") == 1
        assert store.count_triplets() == 2


class TestUserHistory:
    def test_fresh_store_false(self, store):
        assert store.has_user_history("u") is False

    def test_message_counts_as_history(self, store):
        store.append_message(msg(user="u"))
        assert store.has_user_history("u") is True

    def test_triplet_counts_as_history(self, store):
        store.insert_triplet(Triplet("a", "p", "b"), "u", "s", "src", ts(0))
        assert store.has_user_history("u") is True

    def test_other_users_do_not_leak(self, store):
        store.append_message(msg(user="v"))
        assert store.has_user_history("u") is False


class TestSchema:
    def test_reopen_existing_store(self, tmp_path):
        path = tmp_path / "reopen.db"
        first = ConversationStore(path)
        first.append_message(msg())
        first.close()
        second = ConversationStore(path)
        assert second.count_messages() == 1
        second.close()

    def test_version_mismatch_hard_error(self, tmp_path):
        path = tmp_path / "wrong.db"
        ConversationStore(path).close()
        conn = sqlite3.connect(path)
        conn.execute("PRAGMA user_version = 99")
        conn.commit()
        conn.close()
        with pytest.raises(SchemaVersionError):
            ConversationStore(path)

    def test_foreign_tables_without_version_rejected(self, tmp_path):
        path = tmp_path / "foreign.db"
        conn = sqlite3.connect(path)
        conn.execute("CREATE TABLE unrelated (x INTEGER)")
        conn.commit()
        conn.close()
        with pytest.raises(SchemaVersionError):
            ConversationStore(path)
