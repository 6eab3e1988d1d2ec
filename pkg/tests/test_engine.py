"""Induction sessions replayed against scripted transcripts."""

from __future__ import annotations

import pytest

from taxoduce.engine import (
    EngineError,
    InductionConfig,
    InsufficientDemos,
    Mode,
    Termination,
    generate_zero_shot_demos,
    induce_col,
    induce_hf,
)
from taxoduce.filtering import LexicalScorer
from taxoduce.gateway import ScriptedBackend, ScriptRecord, load_script
from taxoduce.datasets import fixture_path
from taxoduce.metrics import evaluate
from taxoduce.prompts import FREE_FORM_RULES, RootNotInEntityList
from taxoduce.taxonomy import Entity


def scripted(name: str) -> ScriptedBackend:
    return ScriptedBackend(load_script(fixture_path(f"transcripts/{name}.ndjson")))


def inline(*replies: str) -> ScriptedBackend:
    return ScriptedBackend([ScriptRecord(digest=None, reply=r) for r in replies])


class RiggedScorer(LexicalScorer):
    """Lexical scorer with two hand-forced verdicts for the roll query."""

    def score(self, query, anchor):
        if (query.key, anchor.key) == ("roll", "flight maneuvers"):
            return -1000.0
        if (query.key, anchor.key) == ("roll", "bank"):
            return 1000.0
        return super().score(query, anchor)


class TestIterativeReplay:
    def test_golden_session_recovers_gold_tree(self, maneuver):
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(max_iterations=6),
            scripted("maneuver.col"),
        )
        assert report.termination is Termination.POOL_EMPTY
        assert report.taxonomy == maneuver.gold
        assert not report.unplaced and not report.dropped
        scores = evaluate(report.taxonomy, maneuver.gold)
        assert scores.edge.f1 == 1.0
        assert scores.ancestor.f1 == 1.0
        assert scores.node.f1 == 1.0

    def test_session_shape(self, maneuver):
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(max_iterations=6),
            scripted("maneuver.col"),
        )
        assert report.model_calls == 8  # 4 outline turns + 4 checks
        assert [it.level for it in report.iterations] == [1, 2, 3, 4]
        assert [len(it.committed) for it in report.iterations] == [0, 3, 4, 6]
        assert [it.check_answer for it in report.iterations] == [
            "no",
            "no",
            "no",
            "yes",
        ]

    def test_renumbered_siblings_are_ignored_silently(self, maneuver):
        # Turn 4 re-indexes bank and roll; both keep their parent, so no
        # rewrite is reported and nothing is double-committed.
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(max_iterations=6),
            scripted("maneuver.col"),
        )
        final = report.iterations[-1]
        assert "bank" not in final.committed
        assert "roll" not in final.committed
        assert not any("rewrite" in d for d in final.diagnostics)

    def test_pool_is_conserved_every_iteration(self, maneuver):
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(max_iterations=6),
            scripted("maneuver.col"),
        )
        universe = {e.key for e in maneuver.entities}
        for record in report.iterations:
            assert record.placed | record.remaining == universe
            assert not record.placed & record.remaining
            assert not record.dropped

    def test_stalled_session(self, maneuver):
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(max_iterations=6, stall_limit=2),
            scripted("maneuver_stall"),
        )
        assert report.termination is Termination.STALLED
        assert len(report.unplaced) == 13
        assert len(report.iterations) == 3
        assert any(
            "no outline in reply" in d
            for it in report.iterations
            for d in it.diagnostics
        )

    def test_opening_turn_is_exempt_from_stall_guard(self):
        # Root confirmation commits nothing; two commit-free level
        # requests must still follow before the session stalls.
        entities = [Entity(k) for k in ("r", "a", "b")]
        backend = inline(
            "1. r", "Answer: No.", "no tree today", "Answer: No.", "still nothing",
            "Answer: No.",
        )
        report = induce_col(
            entities, Entity("r"), InductionConfig(stall_limit=2), backend
        )
        assert report.termination is Termination.STALLED
        assert len(report.iterations) == 3

    def test_early_yes_is_called_out(self):
        entities = [Entity(k) for k in ("r", "a", "b")]
        backend = inline(
            "1. r\n1.1 a",
            "Answer: Yes.\nThe taxonomy is complete.",
            "1. r\n1.1 a",
            "Answer: Yes.\nThe taxonomy is complete.",
            "1. r\n1.1 a",
            "Answer: Yes.\nThe taxonomy is complete.",
        )
        report = induce_col(
            entities, Entity("r"), InductionConfig(stall_limit=2), backend
        )
        assert report.termination is Termination.MODEL_DECLARED_COMPLETE_EARLY
        assert report.unplaced == frozenset({Entity("b")})

    def test_max_iterations_cap(self):
        entities = [Entity(k) for k in ("r", "a", "b", "c")]
        backend = inline(
            "1. r", "Answer: No.",
            "1. r\n1.1 a", "Answer: No.",
            "1. r\n1.1 a\n1.2 b", "Answer: No.",
        )
        report = induce_col(
            entities, Entity("r"), InductionConfig(max_iterations=3), backend
        )
        assert report.termination is Termination.MAX_ITERATIONS
        assert report.unplaced == frozenset({Entity("c")})

    def test_out_of_set_child_dropped_when_strict(self):
        entities = [Entity(k) for k in ("r", "a")]
        backend = inline(
            "1. r\n1.1 a\n1.2 phantom", "Answer: Yes.\nThe taxonomy is complete."
        )
        report = induce_col(entities, Entity("r"), InductionConfig(), backend)
        assert report.termination is Termination.POOL_EMPTY
        assert Entity("phantom") not in report.taxonomy.nodes
        assert report.dropped == frozenset({Entity("phantom")})
        assert any("dropped" in d for d in report.iterations[0].diagnostics)

    def test_out_of_set_child_kept_when_lenient(self):
        entities = [Entity(k) for k in ("r", "a")]
        backend = inline(
            "1. r\n1.1 a\n1.2 phantom", "Answer: Yes.\nThe taxonomy is complete."
        )
        report = induce_col(
            entities, Entity("r"), InductionConfig(strict_entity_set=False), backend
        )
        assert Entity("phantom") in report.taxonomy.nodes
        assert not report.dropped

    def test_prior_layer_rewrite_is_ignored_with_diagnostic(self):
        entities = [Entity(k) for k in ("r", "a", "b", "c")]
        backend = inline(
            "1. r\n1.1 a\n1.2 b", "Answer: No.",
            "1. r\n1.1 a\n1.1.1 b\n1.2 c",  # tries to move b under a
            "Answer: Yes.\nThe taxonomy is complete.",
        )
        report = induce_col(entities, Entity("r"), InductionConfig(), backend)
        assert report.taxonomy.parent(Entity("b")) == Entity("r")
        assert report.taxonomy.parent(Entity("c")) == Entity("r")
        assert any("rewrite" in d for d in report.iterations[1].diagnostics)

    def test_child_of_unplaced_parent_skipped(self):
        entities = [Entity(k) for k in ("r", "a", "b")]
        backend = inline(
            "1. r\n1.1 ghost\n1.1.1 a\n1.2 b",
            "Answer: No.",
            "1. r\n1.1 ghost\n1.1.1 a\n1.2 b",
            "Answer: No.",
            "1. r\n1.1 ghost\n1.1.1 a\n1.2 b",
            "Answer: No.",
        )
        report = induce_col(entities, Entity("r"), InductionConfig(), backend)
        # ghost is dropped, so a has no placed parent and stays unplaced
        assert Entity("a") in report.unplaced
        assert Entity("b") in report.taxonomy.nodes
        assert report.termination is Termination.STALLED

    def test_backend_failure_yields_partial_report(self, maneuver):
        records = load_script(fixture_path("transcripts/maneuver.col.ndjson"))
        backend = ScriptedBackend(records[:4])  # dies during turn 3
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(max_iterations=6),
            backend,
        )
        assert report.termination is Termination.BACKEND_ERROR
        assert report.error and "script ended" in report.error
        assert Entity("clinch") in report.taxonomy.nodes  # level 2 survived
        assert report.unplaced  # deeper levels never arrived

    def test_filter_requires_scorer(self, maneuver):
        with pytest.raises(EngineError):
            induce_col(
                maneuver.entities,
                maneuver.gold.root,
                InductionConfig(filter_enabled=True),
                scripted("maneuver.col"),
            )

    def test_root_must_be_listed(self):
        with pytest.raises(RootNotInEntityList):
            induce_col(
                [Entity("a")], Entity("r"), InductionConfig(), inline("1. r")
            )


class TestFilterRequeue:
    def test_rejected_edge_returns_to_pool_and_lands_elsewhere(self, aerobatics):
        report = induce_col(
            aerobatics.entities,
            aerobatics.gold.root,
            InductionConfig(filter_enabled=True, max_iterations=6),
            scripted("aerobatics.col"),
            scorer=RiggedScorer(),
        )
        assert report.termination is Termination.POOL_EMPTY
        level3 = report.iterations[2]
        assert "roll" in level3.filtered
        assert "roll" not in level3.committed
        assert "roll" in level3.remaining
        level4 = report.iterations[3]
        assert "roll" in level4.committed
        assert (Entity("bank"), Entity("roll")) in report.taxonomy.edge_set
        removed = [d for r in report.filter_reports for d in r.removed]
        assert [d.child.key for d in removed] == ["roll"]
        assert removed[0].rank > 10

    def test_untouched_run_keeps_gold_edges(self, maneuver):
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(filter_enabled=True, max_iterations=6),
            scripted("maneuver.col"),
            scorer=LexicalScorer(),
        )
        assert report.termination is Termination.POOL_EMPTY
        assert report.taxonomy == maneuver.gold
        assert all(not r.removed for r in report.filter_reports)


class TestOneShotReplay:
    def test_golden_reply(self, maneuver):
        report = induce_hf(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(mode=Mode.ONE_SHOT),
            scripted("maneuver.hf"),
        )
        assert report.termination is Termination.POOL_EMPTY
        assert report.taxonomy == maneuver.gold
        assert report.model_calls == 1

    def test_strict_prune_promotes_grandchildren(self, cutlery):
        report = induce_hf(
            cutlery.entities,
            cutlery.gold.root,
            InductionConfig(mode=Mode.ONE_SHOT),
            scripted("cutlery.hf"),
        )
        assert report.termination is Termination.POOL_EMPTY
        assert report.dropped == frozenset({Entity("knife")})
        assert report.taxonomy == cutlery.gold
        assert evaluate(report.taxonomy, cutlery.gold).node.precision == 1.0

    def test_lenient_keeps_invented_layer(self, cutlery):
        report = induce_hf(
            cutlery.entities,
            cutlery.gold.root,
            InductionConfig(mode=Mode.ONE_SHOT, strict_entity_set=False),
            scripted("cutlery.hf"),
        )
        assert Entity("knife") in report.taxonomy.nodes
        scores = evaluate(report.taxonomy, cutlery.gold)
        assert scores.node.precision == pytest.approx(10 / 11)
        assert scores.node.recall == 1.0

    def test_unusable_reply_is_survivable(self):
        entities = [Entity(k) for k in ("r", "a")]
        report = induce_hf(
            entities, Entity("r"), InductionConfig(mode=Mode.ONE_SHOT), inline("nope")
        )
        assert report.termination is Termination.MODEL_DECLARED_COMPLETE_EARLY
        assert report.taxonomy.nodes == frozenset({Entity("r")})
        assert any("unusable reply" in d for d in report.iterations[0].diagnostics)

    def test_backend_failure(self):
        entities = [Entity(k) for k in ("r", "a")]
        report = induce_hf(
            entities, Entity("r"), InductionConfig(mode=Mode.ONE_SHOT), inline()
        )
        assert report.termination is Termination.BACKEND_ERROR
        assert report.error

    def test_orphaned_in_set_nodes_reattach_to_root(self):
        entities = [Entity(k) for k in ("r", "a", "b")]
        backend = inline("1. r\n1.1 ghost\n1.1.1 a\n1.2 b")
        report = induce_hf(
            entities, Entity("r"), InductionConfig(mode=Mode.ONE_SHOT), backend
        )
        # ghost vanishes and a is promoted to the nearest kept ancestor
        assert report.taxonomy.parent(Entity("a")) == Entity("r")
        assert report.dropped == frozenset({Entity("ghost")})


class TestZeroShotDemos:
    def test_generates_requested_count(self):
        backend = inline("1. x\n1.1 y\n1.2 z", "1. p\n1.1 q")
        demos = generate_zero_shot_demos(
            Entity("science"), 2, InductionConfig(rules=FREE_FORM_RULES), backend
        )
        assert len(demos) == 2
        assert demos[0].dialogue[-1].content.startswith("Answer: Yes.")

    def test_bad_samples_burn_attempts(self):
        backend = inline("just prose", "1. p\n1.1 q")
        demos = generate_zero_shot_demos(
            Entity("science"), 1, InductionConfig(), backend, attempts_per_demo=2
        )
        assert len(demos) == 1

    def test_budget_exhaustion_raises(self):
        backend = inline("prose", "more prose", "yet more prose")
        with pytest.raises(InsufficientDemos):
            generate_zero_shot_demos(
                Entity("science"), 1, InductionConfig(), backend, attempts_per_demo=3
            )

    def test_gateway_errors_propagate(self):
        from taxoduce.gateway import ScriptExhausted

        with pytest.raises(ScriptExhausted):
            generate_zero_shot_demos(
                Entity("science"), 2, InductionConfig(), inline("1. x\n1.1 y")
            )


class TestDemonstrationsInContext:
    def test_demo_turns_precede_the_instruction(self, neuropteron, maneuver):
        from taxoduce.prompts import demonstration_from_taxonomy

        demo = demonstration_from_taxonomy(neuropteron.gold, neuropteron.entities)
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(demonstrations=(demo,), max_iterations=6),
            scripted("maneuver.col"),
        )
        assert report.termination is Termination.POOL_EMPTY
        roles = [m.role for m in report.transcript]
        assert roles[0] == "system"
        assert roles[1] == "user"  # demo instruction
        # demo dialogue sits wholly before the live instruction
        live_index = next(
            i
            for i, m in enumerate(report.transcript)
            if "straight-arm" in m.content
        )
        assert all(r in ("system", "user", "assistant") for r in roles)
        assert live_index > len(demo.dialogue)
