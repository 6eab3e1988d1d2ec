"""Acceptance gate: one test per criterion, one verdict line each.

Every test here re-derives its expectation from first principles (hand
arithmetic, brute-force set algebra, or a frozen fixture) rather than
trusting the code under test.  Budgeted tests time the interesting work
and fail when it overruns.
"""

from __future__ import annotations

import random
import time

import pytest

from taxoduce.engine import (
    InductionConfig,
    Termination,
    induce_col,
    induce_hf,
)
from taxoduce.filtering import (
    DEFAULT_TEMPLATES,
    LexicalScorer,
    TemplateSet,
    ensemble_score,
)
from taxoduce.gateway import ScriptRecord, ScriptedBackend, load_script
from taxoduce.harness import BackendSpec, RunSettings, run_grid
from taxoduce.datasets import fixture_path
from taxoduce.metrics import evaluate
from taxoduce.outline import parse_to_taxonomy, render_outline
from taxoduce.sampling import sample_subtaxonomy
from taxoduce.taxonomy import Entity, ancestor_closure, truncate_to_depth

from conftest import random_tree, tree_from_pairs
from oracles import closure_oracle, prf_oracle, random_parent_array


def _verdict(label: str) -> None:
    # Reached only when every assertion above held.
    print(f"PASS  {label}")


class _Budget:
    """Context manager asserting the block finishes inside ``seconds``."""

    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.started = time.perf_counter()
        return self

    def __exit__(self, kind, value, traceback):
        if kind is None:
            elapsed = time.perf_counter() - self.started
            assert elapsed < self.seconds, (
                f"took {elapsed:.3f}s, budget {self.seconds}s"
            )
        return False


def _scripted(name: str) -> ScriptedBackend:
    return ScriptedBackend(load_script(fixture_path(f"transcripts/{name}.ndjson")))


class _RiggedScorer(LexicalScorer):
    """Adversarial backend: buries the true parent of "roll"."""

    def score(self, query, anchor):
        if (query.key, anchor.key) == ("roll", "flight maneuvers"):
            return -1000.0
        if (query.key, anchor.key) == ("roll", "bank"):
            return 1000.0
        return super().score(query, anchor)


class _TableBackend:
    """Explicit per-template rank tables keyed by candidate."""

    def __init__(self, tables):
        self.tables = tables

    def rank_many(self, query, candidates, templates):
        return {
            template: {c: self.tables[template][c.key] for c in candidates}
            for template in templates
        }


def test_01_golden_replay_recovers_gold(maneuver):
    with _Budget(1.0):
        report = induce_col(
            maneuver.entities,
            maneuver.gold.root,
            InductionConfig(max_iterations=6),
            _scripted("maneuver.col"),
        )
    assert report.termination is Termination.POOL_EMPTY
    assert report.taxonomy == maneuver.gold
    scores = evaluate(report.taxonomy, maneuver.gold)
    assert scores.edge.f1 == 1.0
    assert scores.node.f1 == 1.0
    _verdict("golden replay reproduces the gold taxonomy (filter off)")


def test_02_filter_requeue_readds_roll(aerobatics):
    with _Budget(1.0):
        report = induce_col(
            aerobatics.entities,
            aerobatics.gold.root,
            InductionConfig(filter_enabled=True, max_iterations=6),
            _scripted("aerobatics.col"),
            scorer=_RiggedScorer(),
        )
    assert report.termination is Termination.POOL_EMPTY
    # The edge is removed at the iteration that proposed it ...
    removal_levels = [
        record.level for record in report.iterations if "roll" in record.filtered
    ]
    assert removal_levels, "the filter never removed the roll edge"
    # ... and the entity lands again in a strictly later iteration.
    commit_levels = [
        record.level for record in report.iterations if "roll" in record.committed
    ]
    assert commit_levels and min(commit_levels) > min(removal_levels)
    assert (Entity("bank"), Entity("roll")) in report.taxonomy.edge_set
    removed = [d for r in report.filter_reports for d in r.removed]
    assert [d.child.key for d in removed] == ["roll"]
    assert removed[0].rank > 10
    _verdict("filter re-queue removes the bad edge and re-adds roll later")


def test_03_hallucination_pruning_keeps_precision(cutlery):
    with _Budget(1.0):
        strict = induce_hf(
            cutlery.entities,
            cutlery.gold.root,
            InductionConfig(strict_entity_set=True),
            _scripted("cutlery.hf"),
        )
        lenient = induce_hf(
            cutlery.entities,
            cutlery.gold.root,
            InductionConfig(strict_entity_set=False),
            _scripted("cutlery.hf"),
        )
    assert {entity.key for entity in strict.dropped} == {"knife"}
    assert Entity("knife") not in strict.taxonomy.nodes
    # The pruned node's in-set children survive, reattached above it.
    for child in ("table knife", "fish knife", "butter knife", "steak knife"):
        assert Entity(child) in strict.taxonomy.nodes
    strict_node = evaluate(strict.taxonomy, cutlery.gold).node
    lenient_node = evaluate(lenient.taxonomy, cutlery.gold).node
    assert strict_node.precision == 1.0
    assert lenient_node.precision < strict_node.precision
    _verdict("strict replay drops exactly {knife}; lenient precision is lower")


def test_04_ensemble_rank_arithmetic():
    query = Entity("q")
    candidates = [Entity(k) for k in ("a", "b", "c", "d")]

    # Hand value: ranks 1 and 4 across two templates -> (1/1 + 1/4) / 2.
    pair = TemplateSet(("<query> is a/an <anchor>", "<anchor> such as <query>"))
    first, second = tuple(pair)
    tables = {
        first: {"a": 1, "b": 2, "c": 3, "d": 4},
        second: {"a": 4, "b": 1, "c": 2, "d": 3},
    }
    table = ensemble_score(query, candidates, pair, _TableBackend(tables))
    assert table.scores[Entity("a")] == pytest.approx(0.625, abs=1e-12)

    # Last place in every template -> 1/n.
    for n in range(1, 9):
        field = [Entity(f"c{i}") for i in range(n)]
        loser = field[-1]
        tables = {
            template: {
                entity.key: n if entity == loser else i + 1
                for i, entity in enumerate(field[:-1])
            }
            | {loser.key: n}
            for template in DEFAULT_TEMPLATES
        }
        table = ensemble_score(query, field, DEFAULT_TEMPLATES, _TableBackend(tables))
        assert table.scores[loser] == pytest.approx(1 / n, abs=1e-12)

    # Template order never changes scores or ranks: 100 random tables.
    rng = random.Random(41)
    templates = list(DEFAULT_TEMPLATES)
    for _ in range(100):
        size = rng.randint(2, 8)
        field = [Entity(f"c{i}") for i in range(size)]
        tables = {}
        for template in templates:
            ranks = list(range(1, size + 1))
            rng.shuffle(ranks)
            tables[template] = dict(zip((e.key for e in field), ranks))
        shuffled = templates[:]
        rng.shuffle(shuffled)
        forward = ensemble_score(
            query, field, TemplateSet(tuple(templates)), _TableBackend(tables)
        )
        permuted = ensemble_score(
            query, field, TemplateSet(tuple(shuffled)), _TableBackend(tables)
        )
        assert forward.scores == permuted.scores
        assert forward.ranks == permuted.ranks
    _verdict("ensemble scores match hand arithmetic, permutation invariant")


def test_05_metrics_match_brute_force_oracle():
    rng = random.Random(2024)
    with _Budget(10.0):
        for _ in range(1000):
            predicted = random_tree(rng, 12)
            gold = random_tree(rng, 12)
            report = evaluate(predicted, gold)
            pairs = {
                "edge": (
                    {(p.key, c.key) for p, c in predicted.edges},
                    {(p.key, c.key) for p, c in gold.edges},
                ),
                "ancestor": (
                    closure_oracle([(p.key, c.key) for p, c in predicted.edges]),
                    closure_oracle([(p.key, c.key) for p, c in gold.edges]),
                ),
                "node": (
                    {n.key for n in predicted.nodes},
                    {n.key for n in gold.nodes},
                ),
            }
            for granularity, (pred_set, gold_set) in pairs.items():
                expected = prf_oracle(pred_set, gold_set)
                actual = getattr(report, granularity)
                assert (actual.precision, actual.recall, actual.f1) == expected

            identity = evaluate(gold, gold)
            for granularity in ("edge", "ancestor", "node"):
                prf = getattr(identity, granularity)
                # A single-node tree has no edges; empty-vs-empty scores zero.
                if granularity in ("edge", "ancestor") and not gold.edges:
                    continue
                assert (prf.precision, prf.recall, prf.f1) == (1.0, 1.0, 1.0)
    _verdict("metrics equal the brute-force oracle on 1000 random tree pairs")


def test_06_edge_f1_anchor_19_of_21():
    # Gold: a root, seven mid-level nodes, two leaves under each mid node
    # -> 7 + 14 = 21 edges.  The prediction reparents two leaves, so the
    # trees share 19 of 21 edges and the prediction also has 21.
    gold_pairs = [("m0", f"m{i}") for i in range(1, 8)]
    for i in range(1, 8):
        gold_pairs += [(f"m{i}", f"l{i}a"), (f"m{i}", f"l{i}b")]
    predicted_pairs = [
        ("m2", "l1b") if pair == ("m1", "l1b")
        else ("m4", "l3a") if pair == ("m3", "l3a")
        else pair
        for pair in gold_pairs
    ]
    gold = tree_from_pairs(gold_pairs, root="m0")
    predicted = tree_from_pairs(predicted_pairs, root="m0")
    assert len(gold.edges) == 21 and len(predicted.edges) == 21
    shared = set(gold_pairs) & set(predicted_pairs)
    assert len(shared) == 19

    report = evaluate(predicted, gold)
    assert report.edge.f1 == pytest.approx(0.9048, abs=1e-4)
    oracle = prf_oracle(set(predicted_pairs), set(gold_pairs))
    assert (report.edge.precision, report.edge.recall, report.edge.f1) == oracle
    _verdict("19-of-21 shared edges score edge-F1 0.9048 +/- 0.0001")


def test_07_outline_round_trip():
    rng = random.Random(7)
    with _Budget(5.0):
        for _ in range(1000):
            tree = random_tree(rng, 50, max_depth=6)
            parsed, diagnostics = parse_to_taxonomy(render_outline(tree))
            assert diagnostics == []
            assert parsed == tree
    _verdict("parse(render(t)) = t with zero diagnostics on 1000 trees")


def _randomized_session(seed: int):
    """One scripted induction session over a random in-set reply stream.

    Replies stay inside the declared entity set (mutations are omissions,
    duplicated lines, shuffled tails, refusal prose, and filter removals)
    so the conservation equality is over V itself.
    """
    rng = random.Random(seed)
    stall_session = seed % 7 == 0
    filter_session = seed % 3 == 1
    size = rng.randint(3, 12) if stall_session else rng.randint(1, 12)
    gold = random_tree(rng, size) if not stall_session else random_tree(rng, 12)
    levels = max(gold.depth(node) for node in gold.nodes) + 1
    max_iterations = max(2, levels + rng.randint(0, 2))

    replies = []
    for level in range(1, max_iterations + 1):
        if stall_session and level > 1:
            replies.append("I cannot take this outline any further.")
        elif not stall_session and rng.random() < 0.1:
            replies.append("No structured answer comes to mind here.")
        else:
            outline = render_outline(truncate_to_depth(gold, min(level, levels)))
            lines = outline.splitlines()
            if len(lines) > 2 and rng.random() < 0.35:
                lines.pop(rng.randrange(1, len(lines)))
            if len(lines) > 1 and rng.random() < 0.25:
                lines.append(lines[rng.randrange(1, len(lines))])
            if len(lines) > 2 and rng.random() < 0.25:
                tail = lines[1:]
                rng.shuffle(tail)
                lines = lines[:1] + tail
            replies.append("\n".join(lines))
        if not stall_session and rng.random() < 0.08:
            replies.append("Answer: Yes.\nThe taxonomy is complete.")
        else:
            replies.append("Answer: No.")

    config = InductionConfig(
        max_iterations=max_iterations,
        stall_limit=rng.randint(1, 3) if not stall_session else 2,
        filter_enabled=filter_session,
        top_k=rng.choice([1, 2]) if filter_session else 10,
    )
    backend = ScriptedBackend([ScriptRecord(digest=None, reply=r) for r in replies])
    scorer = LexicalScorer() if filter_session else None
    entities = sorted(gold.nodes, key=lambda entity: entity.key)
    report = induce_col(entities, gold.root, config, backend, scorer=scorer)
    return gold, report


def test_08_pool_conservation_across_sessions():
    terminations = set()
    saw_removal = False
    for seed in range(100):
        gold, report = _randomized_session(seed)
        universe = {entity.key for entity in gold.nodes}
        assert report.iterations, f"seed {seed} produced no iterations"
        for record in report.iterations:
            assert record.placed | record.remaining | record.dropped == universe
            assert not record.placed & record.remaining
            assert record.dropped == frozenset()
        final = report.iterations[-1]
        assert {entity.key for entity in report.unplaced} == set(final.remaining)
        assert {entity.key for entity in report.taxonomy.nodes} == set(final.placed)
        terminations.add(report.termination)
        saw_removal = saw_removal or any(
            decision.rank for r in report.filter_reports for decision in r.removed
        )
    assert Termination.STALLED in terminations
    assert Termination.POOL_EMPTY in terminations
    assert saw_removal, "no session exercised a filter removal"
    _verdict("placed | remaining | dropped == V at every iteration, 100 runs")


def test_09_sampler_validity():
    source = tree_from_pairs(random_parent_array(random.Random(90), 200))
    assert len(source.nodes) == 200
    for size in (20, 40, 80):
        drawn = []
        for seed in range(5):
            sample = sample_subtaxonomy(source, size, seed=seed)
            assert len(sample.nodes) == size
            assert sample.root == source.root
            assert sample.edge_set <= source.edge_set
            closure = ancestor_closure(sample)
            for node in sample.nodes - {sample.root}:
                assert (sample.root, node) in closure
            again = sample_subtaxonomy(source, size, seed=seed)
            assert again.edges == sample.edges
            drawn.append(sample.edge_set)
        assert len(set(drawn)) > 1, "all five seeds drew the same subtree"
    _verdict("samples are connected, root-anchored, sized, deterministic")


def test_10_ablation_grid_parity(demo_pair_records):
    scripts = {
        "maneuver.col": load_script(fixture_path("transcripts/maneuver.col.ndjson")),
        "maneuver.hf": load_script(fixture_path("transcripts/maneuver.hf.ndjson")),
    }
    grid = {"method": ["col", "hf"], "filter_enabled": [False, True]}

    def run_once():
        return run_grid(
            demo_pair_records,
            RunSettings(max_iterations=6),
            grid,
            BackendSpec(kind="scripted"),
            scripts,
            scorer_spec={"kind": "lexical"},
        )

    first = run_once()
    rows = first.manifest["rows"]
    assert len(rows) == 4
    seen = {
        (row["configuration"]["method"], row["configuration"]["filter_enabled"])
        for row in rows
    }
    assert seen == {("col", False), ("col", True), ("hf", False), ("hf", True)}
    for row in rows:
        assert sorted(row["configuration"]) == sorted(grid)
        assert row["per_record"]["maneuver"]["edge_f1"] == 1.0
    header = first.artifacts["grid.tsv"].splitlines()[0].split("\t")
    assert header[: len(grid)] == sorted(grid)

    second = run_once()
    assert second.artifacts == first.artifacts
    assert second.artifacts["grid.json"] == first.artifacts["grid.json"]
    _verdict("four-cell grid rows mirror the config columns, reruns identical")
