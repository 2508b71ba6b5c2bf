"""Engine lifecycle: scenario dispatch, context assembly, staged recording."""

from __future__ import annotations

import logging
import math

import pytest

from memkit.engine import MemoryEngine, Scenario, StoreCorruptionError, TurnRequest, render_context
from memkit.knowledge import Triplet
from memkit.providers import ChatExchange, Embedding, ProviderError, TokenUsage
from memkit.store import StorageError, SummaryRecord

from conftest import ts


class SelectiveFailingProvider:
    """Wraps the mock provider, failing only the selected request kinds."""

    def __init__(self, inner, fail_markers: tuple[str, ...] = (), fail_embed: bool = False):
        self._inner = inner
        self._fail_markers = fail_markers
        self._fail_embed = fail_embed

    def chat_complete(self, exchange: ChatExchange):
        lowered = exchange.system_text.lower()
        if any(marker in lowered for marker in self._fail_markers):
            raise ProviderError("simulated chat failure")
        return self._inner.chat_complete(exchange)

    def embed(self, text: str) -> Embedding:
        if self._fail_embed:
            raise ProviderError("simulated embed failure")
        return self._inner.embed(text)


class TestScenarioDispatch:
    def test_three_scenario_sequence(self, engine):
        first = engine.retrieve_context(TurnRequest("ada", "s1", "my cat is orange", timestamp=ts(0)))
        assert first.scenario is Scenario.NEW_USER_NEW_SESSION
        assert first.session_summary is None
        assert first.weighted_triplets == []

        engine.record_turn(TurnRequest("ada", "s1", "my cat is orange", timestamp=ts(0)), "Nice cat!")

        second = engine.retrieve_context(TurnRequest("ada", "s2", "what do you know", timestamp=ts(10)))
        assert second.scenario is Scenario.REPEAT_USER_NEW_SESSION
        assert second.session_summary is None

        engine.record_turn(TurnRequest("ada", "s2", "I like tea", timestamp=ts(10)), "Noted.")

        third = engine.retrieve_context(TurnRequest("ada", "s2", "what do I like", timestamp=ts(20)))
        assert third.scenario is Scenario.REPEAT_USER_ONGOING_SESSION
        assert third.session_summary is not None

    def test_scenario_two_retrieves_triplets_immediately(self, engine):
        engine.record_turn(TurnRequest("bo", "s1", "my bike is red", timestamp=ts(0)), "Nice.")
        context = engine.retrieve_context(TurnRequest("bo", "s2", "what color is my bike", timestamp=ts(5)))
        assert context.scenario is Scenario.REPEAT_USER_NEW_SESSION
        assert len(context.weighted_triplets) == 1
        assert context.session_summary is None

    def test_corrupt_fourth_state_raises(self, engine):
        engine.store.upsert_summary(SummaryRecord("ghost-session", "ghost", "fabricated", ts(0), 1))
        with pytest.raises(StoreCorruptionError):
            engine.retrieve_context(TurnRequest("ghost", "ghost-session", "hello", timestamp=ts(1)))

    def test_scenario_invariants_hold(self, engine):
        contexts = []
        contexts.append(engine.retrieve_context(TurnRequest("eve", "s1", "hi there", timestamp=ts(0))))
        engine.record_turn(TurnRequest("eve", "s1", "my dog is loud", timestamp=ts(0)), "Okay.")
        contexts.append(engine.retrieve_context(TurnRequest("eve", "s9", "hello again", timestamp=ts(5))))
        contexts.append(engine.retrieve_context(TurnRequest("eve", "s1", "still here", timestamp=ts(6))))
        for context in contexts:
            if context.scenario is Scenario.NEW_USER_NEW_SESSION:
                assert context.session_summary is None and context.weighted_triplets == []
            elif context.scenario is Scenario.REPEAT_USER_NEW_SESSION:
                assert context.session_summary is None
            else:
                assert context.session_summary is not None


class TestRetrieval:
    def test_weights_sum_to_one(self, engine):
        for i, statement in enumerate(["my cat is orange", "my dog is loud", "my bike is red"]):
            engine.record_turn(TurnRequest("u", "s", statement, timestamp=ts(i)), "Okay.")
        context = engine.retrieve_context(TurnRequest("u", "s", "what is my cat", timestamp=ts(10)))
        assert context.weighted_triplets
        assert math.fsum(w.weight for w in context.weighted_triplets) == pytest.approx(1.0, abs=1e-9)

    def test_rendered_template_shape(self, engine):
        engine.record_turn(TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), "Okay.")
        context = engine.retrieve_context(TurnRequest("u", "s", "my cat", timestamp=ts(1)))
        lines = context.rendered_context.splitlines()
        assert lines[0] == "[SESSION SUMMARY]"
        assert lines[1] == context.session_summary
        assert lines[2] == "[USER KNOWLEDGE]"
        assert lines[3] == "(my cat, is, orange) [weight=1.0000]"
        assert context.context_token_count == len(context.rendered_context.split())

    def test_recency_dominates_for_revised_fact(self, engine):
        engine.record_turn(
            TurnRequest("u", "s1", "my shoes are under the bed", timestamp=ts(0)), "Noted."
        )
        engine.record_turn(
            TurnRequest("u", "s2", "my shoes are in the closet", timestamp=ts(60)), "Updated."
        )
        context = engine.retrieve_context(TurnRequest("u", "s3", "where are my shoes", timestamp=ts(120)))
        by_object = {w.triplet.object: w for w in context.weighted_triplets}
        assert set(by_object) == {"the bed", "the closet"}
        assert by_object["the closet"].weight > by_object["the bed"].weight
        assert "(my shoes, are in, the closet)" in context.rendered_context
        assert "(my shoes, are under, the bed)" in context.rendered_context

    def test_k_limits_batch(self, engine_factory):
        engine = engine_factory(**{"retrieval.k": 2})
        for i in range(5):
            engine.record_turn(TurnRequest("u", "s", f"item{i} is thing{i}", timestamp=ts(i)), "Okay.")
        context = engine.retrieve_context(TurnRequest("u", "s", "item0 is", timestamp=ts(10)))
        assert len(context.weighted_triplets) <= 2

    def test_uniform_mode_at_zero_decay(self, engine_factory):
        engine = engine_factory(**{"retrieval.decay_rate": 0.0})
        engine.record_turn(TurnRequest("u", "s1", "my shoes are under the bed", timestamp=ts(0)), "Ok.")
        engine.record_turn(TurnRequest("u", "s2", "my shoes are in the closet", timestamp=ts(60)), "Ok.")
        context = engine.retrieve_context(TurnRequest("u", "s3", "where are my shoes", timestamp=ts(120)))
        assert [w.weight for w in context.weighted_triplets] == [0.5, 0.5]

    def test_retrieve_does_not_mutate(self, engine):
        engine.record_turn(TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), "Okay.")
        before = (
            engine.store.count_messages(),
            engine.store.count_triplets(),
            len(engine.index),
            engine.store.get_summary("s"),
        )
        for _ in range(3):
            engine.retrieve_context(TurnRequest("u", "s", "anything at all", timestamp=ts(5)))
        after = (
            engine.store.count_messages(),
            engine.store.count_triplets(),
            len(engine.index),
            engine.store.get_summary("s"),
        )
        assert before == after

    def test_embed_failure_degrades_to_summary_only(self, engine, caplog):
        engine.record_turn(TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), "Okay.")
        engine.provider = SelectiveFailingProvider(engine.provider, fail_embed=True)
        with caplog.at_level(logging.WARNING, logger="memkit.engine"):
            context = engine.retrieve_context(TurnRequest("u", "s", "my cat", timestamp=ts(5)))
        assert context.scenario is Scenario.REPEAT_USER_ONGOING_SESSION
        assert context.session_summary is not None
        assert context.weighted_triplets == []
        assert any("degrading to summary-only" in record.message for record in caplog.records)


class TestContextBudget:
    def test_drops_lowest_weight_first(self, engine_factory):
        tight = engine_factory(**{"context.max_tokens": 17})
        roomy = engine_factory(**{"context.max_tokens": 4000})
        for engine in (tight, roomy):
            for i in range(4):
                engine.record_turn(
                    TurnRequest("u", f"s{i}", f"gadget{i} is widget{i}", timestamp=ts(i * 30)), "Okay."
                )
        question = TurnRequest("u", "sx", "gadget0 is", timestamp=ts(200))
        full = roomy.retrieve_context(question)
        clipped = tight.retrieve_context(question)
        assert clipped.context_token_count <= 17
        assert len(clipped.weighted_triplets) < len(full.weighted_triplets)
        # survivors are exactly the highest-weight members of the full batch
        full_sorted = sorted(full.weighted_triplets, key=lambda w: -w.weight)
        kept_ids = {w.triplet.triplet_id for w in clipped.weighted_triplets}
        expected = {w.triplet.triplet_id for w in full_sorted[: len(kept_ids)]}
        assert kept_ids == expected

    def test_budget_bound_holds_for_all_inputs(self, engine_factory):
        engine = engine_factory(**{"context.max_tokens": 12, "summary.max_tokens": 64})
        long_text = " ".join(f"word{i}" for i in range(40))
        engine.record_turn(TurnRequest("u", "s", long_text, timestamp=ts(0)), long_text)
        context = engine.retrieve_context(TurnRequest("u", "s", "anything here", timestamp=ts(5)))
        assert context.context_token_count <= 12

    def test_render_context_drop_order_is_weight_then_position(self):
        from conftest import make_scored, make_stored
        from memkit.decay import WeightedTriplet

        def wt(i: int, weight: float) -> WeightedTriplet:
            return WeightedTriplet(
                triplet=make_stored(i, ts(0), subject=f"s{i}", predicate="p", obj=f"o{i}"),
                similarity=1.0 - i / 10,
                normalized_age=0.0,
                raw_weight=1.0,
                weight=weight,
            )

        items = [wt(0, 0.4), wt(1, 0.2), wt(2, 0.2), wt(3, 0.2)]
        # budget allows headers (4 tokens) + summary token + 3 triplet lines (5 tokens each)
        text, kept, count = render_context("sum", items, max_tokens=4 + 1 + 15)
        assert count <= 20
        # the tied lowest weights drop from the back first
        assert [w.triplet.triplet_id for w in kept] == [0, 1, 2]
        text2, kept2, _ = render_context("sum", items, max_tokens=4 + 1 + 10)
        assert [w.triplet.triplet_id for w in kept2] == [0, 1]

    def test_render_context_truncates_summary_as_last_resort(self):
        text, kept, count = render_context("one two three four five six", [], max_tokens=8)
        assert count <= 8
        assert kept == []
        assert text.startswith("[SESSION SUMMARY]\n")
        # newest (trailing) summary tokens survive
        assert "six" in text


class TestRecordTurn:
    def test_receipt_for_new_user(self, engine):
        receipt = engine.record_turn(
            TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), "Nice!"
        )
        assert receipt.user_message_id == 1
        assert receipt.assistant_message_id == 2
        assert receipt.triplet_ids == [1]
        assert receipt.summary_text == "User said: my cat is orange. Assistant said: Nice!."
        assert receipt.turns_covered == 1
        assert receipt.extraction_error is None and receipt.summary_error is None

    def test_no_pattern_turn_still_updates_summary(self, engine):
        receipt = engine.record_turn(TurnRequest("u", "s", "????", timestamp=ts(0)), "Hmm?")
        assert receipt.triplet_ids == []
        assert receipt.extraction_error is None
        assert receipt.turns_covered == 1
        assert engine.store.get_summary("s") is not None

    def test_turns_covered_increments(self, engine):
        for i in range(3):
            receipt = engine.record_turn(
                TurnRequest("u", "s", f"message number {i}", timestamp=ts(i)), "Okay."
            )
        assert receipt.turns_covered == 3
        assert engine.store.get_summary("s").turns_covered == 3

    def test_messages_and_usage_recorded(self, engine):
        engine.record_turn(TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), "Nice!")
        messages = engine.store.get_session_messages("s")
        assert [m.role.value for m in messages] == ["user", "assistant"]
        assert all(m.usage is not None for m in messages)
        assert all(m.usage.total_tokens == m.usage.prompt_tokens + m.usage.completion_tokens for m in messages)

    def test_extraction_failure_reported_summary_still_written(self, engine):
        engine.provider = SelectiveFailingProvider(engine.provider, fail_markers=("triplet",))
        receipt = engine.record_turn(TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), "Hi.")
        assert receipt.extraction_error is not None
        assert receipt.triplet_ids == []
        assert receipt.summary_text is not None
        assert engine.store.count_messages("s") == 2
        assert engine.store.get_summary("s") is not None

    def test_summary_failure_keeps_stale_summary(self, engine):
        engine.record_turn(TurnRequest("u", "s", "my cat is orange", timestamp=ts(0)), "Hi.")
        stale = engine.store.get_summary("s").summary_text
        engine.provider = SelectiveFailingProvider(engine.provider, fail_markers=("summar",))
        receipt = engine.record_turn(TurnRequest("u", "s", "my dog is loud", timestamp=ts(1)), "Ok.")
        assert receipt.summary_error is not None
        assert receipt.summary_text == stale
        assert engine.store.get_summary("s").summary_text == stale
        assert engine.store.get_summary("s").turns_covered == 1
        # the raw log and the knowledge graph still advanced
        assert engine.store.count_messages("s") == 4
        assert receipt.triplet_ids

    def test_empty_assistant_text_rejected(self, engine):
        with pytest.raises(ValueError):
            engine.record_turn(TurnRequest("u", "s", "hello", timestamp=ts(0)), "")


class TestDeterminism:
    TRANSCRIPT = [
        ("s1", "my shoes are under the bed", "Noted.", 0),
        ("s1", "I work at Meridian Labs", "Cool.", 1),
        ("s2", "my shoes are in the closet", "Updated.", 60),
        ("s2", "????", "Pardon?", 61),
    ]

    def replay(self, engine: MemoryEngine):
        receipts = []
        contexts = []
        for session_id, user_text, assistant_text, minute in self.TRANSCRIPT:
            request = TurnRequest("u", session_id, user_text, timestamp=ts(minute))
            contexts.append(engine.retrieve_context(request).to_dict())
            receipts.append(engine.record_turn(request, assistant_text).to_dict())
        final = engine.retrieve_context(TurnRequest("u", "s3", "where are my shoes", timestamp=ts(120)))
        return receipts, contexts, final.to_dict()

    def test_replay_twice_byte_identical(self, engine_factory):
        import json

        first = self.replay(engine_factory())
        second = self.replay(engine_factory())
        assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)


class TestConcurrency:
    def test_parallel_users_dual_write_consistent(self, engine):
        import threading

        def work(user: str):
            for i in range(20):
                engine.record_turn(
                    TurnRequest(user, f"{user}-s", f"my item{i} is thing{i}", timestamp=ts(i)),
                    "Okay.",
                )

        threads = [threading.Thread(target=work, args=(f"user{n}",)) for n in range(5)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        for n in range(5):
            user = f"user{n}"
            assert engine.store.count_triplets(user) == engine.index.count(user) == 20
