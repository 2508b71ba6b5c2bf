"""Knowledge graph: extraction, dual-write persistence, persona rebuilding."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from memkit.engine import TurnRequest
from memkit.index import VectorIndexError
from memkit.knowledge import (
    Triplet,
    canonical_label,
    extract_triplets,
    parse_triplet_reply,
)

from conftest import ts


class TestTripletType:
    def test_valid(self):
        t = Triplet("my shoes", "are under", "the bed")
        assert t.rendered() == "my shoes are under the bed"

    def test_empty_field_rejected(self):
        with pytest.raises(ValueError):
            Triplet("", "p", "o")
        with pytest.raises(ValueError):
            Triplet("s", "  ", "o")

    def test_separator_rejected(self):
        with pytest.raises(ValueError):
            Triplet("s|x", "p", "o")


class TestParseReply:
    def test_well_formed_lines(self):
        reply = "a|is|b\nc|likes|d"
        assert parse_triplet_reply(reply) == [Triplet("a", "is", "b"), Triplet("c", "likes", "d")]

    def test_malformed_lines_skipped_not_fatal(self):
        reply = "a|is|b\ngarbage line\nx|y\np|q|r|s\nc|likes|d\n||"
        assert parse_triplet_reply(reply) == [Triplet("a", "is", "b"), Triplet("c", "likes", "d")]

    def test_no_triplets_marker_yields_empty(self):
        assert parse_triplet_reply("NO_TRIPLETS") == []

    def test_fields_trimmed(self):
        assert parse_triplet_reply(" a | is | b ") == [Triplet("a", "is", "b")]


class TestExtraction:
    def test_possessive_statement(self, mock_provider):
        got = extract_triplets("my shoes are under the bed", mock_provider)
        assert got == [Triplet("my shoes", "are under", "the bed")]

    def test_no_pattern_empty_list(self, mock_provider):
        assert extract_triplets("????", mock_provider) == []

    def test_two_sentences_two_triplets(self, mock_provider):
        got = extract_triplets("I live in Paris. My dog is Rex", mock_provider)
        assert got == [Triplet("I", "live in", "Paris"), Triplet("My dog", "is", "Rex")]

    def test_empty_message_rejected(self, mock_provider):
        with pytest.raises(ValueError):
            extract_triplets("", mock_provider)


class TestCanonicalization:
    def test_rules(self):
        assert canonical_label("  My   Dog ") == "my dog"

    @given(st.text(min_size=0, max_size=60))
    def test_idempotent(self, text):
        assert canonical_label(canonical_label(text)) == canonical_label(text)


class TestStoreTriplets:
    def test_single_triplet_graph_counts(self, engine):
        ids = engine.knowledge.store_triplets(
            [Triplet("my shoes", "are under", "the bed")], "u", "s", "src", ts(0)
        )
        assert len(ids) == 1
        graph = engine.knowledge.get_persona("u")
        assert len(graph.nodes) == 2
        assert len(graph.edges) == 1
        assert ("my shoes", "are under", "the bed", ids[0]) in graph.edges

    def test_shared_node_merges_on_canonical_label(self, engine):
        engine.knowledge.store_triplets([Triplet("A", "p", "B")], "u", "s", "src", ts(0))
        engine.knowledge.store_triplets([Triplet("  b ", "q", "C")], "u", "s", "src", ts(1))
        graph = engine.knowledge.get_persona("u")
        assert graph.nodes == {"a", "b", "c"}
        assert len(graph.edges) == 2

    def test_contradictions_both_retained(self, engine):
        engine.knowledge.store_triplets([Triplet("my shoes", "are under", "the bed")], "u", "s", "m1", ts(0))
        engine.knowledge.store_triplets([Triplet("my shoes", "are in", "the closet")], "u", "s", "m2", ts(60))
        graph = engine.knowledge.get_persona("u")
        predicates = {edge[1] for edge in graph.edges}
        assert predicates == {"are under", "are in"}
        assert engine.store.count_triplets("u") == 2

    def test_unknown_user_empty_graph(self, engine):
        graph = engine.knowledge.get_persona("ghost")
        assert graph.nodes == set() and graph.edges == set()

    def test_fifty_triplets_bounded_index(self, engine):
        triplets = [Triplet(f"s{i}", "p", f"o{i}") for i in range(50)]
        engine.knowledge.store_triplets(triplets, "u", "s", "src", ts(0))
        assert engine.index.count("u") == 50
        query = engine.provider.embed("s1 p o1")
        assert len(engine.index.query_top_k(query, "u", k=100)) == 50

    def test_dual_write_counts_match(self, engine):
        for i in range(7):
            engine.knowledge.store_triplets([Triplet(f"s{i}", "p", "o")], "u", "s", "src", ts(i))
        assert engine.store.count_triplets("u") == engine.index.count("u") == 7

    def test_index_failure_removes_row(self, engine, monkeypatch):
        def failing_add(entry):
            raise VectorIndexError("disk full")

        monkeypatch.setattr(engine.index, "add", failing_add)
        with pytest.raises(VectorIndexError):
            engine.knowledge.store_triplets([Triplet("a", "p", "b")], "u", "s", "src", ts(0))
        assert engine.store.count_triplets("u") == 0
        assert engine.index.count("u") == 0

    def test_assistant_text_never_reaches_triplets(self, engine):
        poison = "POISONED assistant reply that must never be stored as a source"
        engine.record_turn(TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), poison)
        engine.record_turn(TurnRequest("u", "s", "I like tea", timestamp=ts(1)), poison)
        for stored in engine.store.triplets_for_user("u"):
            assert "POISONED" not in stored.source_message
            assert "POISONED" not in stored.triplet.rendered()
