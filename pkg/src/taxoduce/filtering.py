"""Ensemble-of-templates edge filter.

Every freshly added edge is audited: the child becomes a query, every
other known entity becomes a candidate anchor, and each hypernymy
template asks a scorer to rank the anchors.  The ensemble score of an
anchor is the mean reciprocal of its per-template ranks; the edge
survives only if its parent sits within the top-k anchors by that score.
Removed children return to the entity pool for a later iteration.

The scorer is pluggable: a lexical overlap scorer keeps everything
offline, and a remote client can defer to a masked-language-model
service.  Scorer outages fail open (the layer passes unfiltered) and are
flagged on the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import httpx

from .taxonomy import Edge, Entity, EntityPool, Taxonomy, remove_edge_and_detach

DEFAULT_TOP_K = 10

_QUERY_SLOT = "<query>"
_ANCHOR_SLOT = "<anchor>"


class FilterError(Exception):
    pass


class InvalidTemplate(FilterError):
    pass


class ScorerUnavailable(FilterError):
    pass


@dataclass(frozen=True)
class TemplateSet:
    """Hypernymy probes with one query slot and one anchor slot each."""

    templates: Tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.templates:
            raise InvalidTemplate("template set is empty")
        for template in self.templates:
            if template.count(_QUERY_SLOT) != 1 or template.count(_ANCHOR_SLOT) != 1:
                raise InvalidTemplate(
                    f"template {template!r} must use {_QUERY_SLOT} and "
                    f"{_ANCHOR_SLOT} exactly once"
                )

    def __iter__(self):
        return iter(self.templates)

    def __len__(self) -> int:
        return len(self.templates)

    def fill(self, template: str, query: Entity, anchor: Entity) -> str:
        return template.replace(_QUERY_SLOT, query.surface).replace(
            _ANCHOR_SLOT, anchor.surface
        )


DEFAULT_TEMPLATES = TemplateSet(
    (
        "<query> is a/an <anchor>",
        "<query> is a kind of <anchor>",
        "<query> is a type of <anchor>",
        "<query> is an example of <anchor>",
        "<anchor> such as <query>",
        "A/An <anchor> such as <query>",
    )
)


class ScorerBackend(Protocol):
    """Produces a total order (rank 1 = best) over candidate anchors."""

    def rank_many(
        self,
        query: Entity,
        candidates: Sequence[Entity],
        templates: Sequence[str],
    ) -> Dict[str, Dict[Entity, int]]: ...


def rank_under_template(
    query: Entity,
    candidates: Sequence[Entity],
    template: str,
    backend: ScorerBackend,
) -> Dict[Entity, int]:
    """Ranks for one template; a bijection onto 1..len(candidates)."""
    if not candidates:
        raise FilterError("no candidates to rank")
    if query in set(candidates):
        raise FilterError(f"query {query.key!r} cannot be its own candidate")
    ranks = backend.rank_many(query, candidates, [template])[template]
    _check_bijection(ranks, candidates)
    return ranks


@dataclass(frozen=True)
class ScoreTable:
    """Per-candidate ensemble scores and the ranks they induce."""

    query: Entity
    scores: Dict[Entity, float]
    ranks: Dict[Entity, int]
    per_template_ranks: Dict[str, Dict[Entity, int]]


def ensemble_score(
    query: Entity,
    candidates: Sequence[Entity],
    templates: TemplateSet,
    backend: ScorerBackend,
) -> ScoreTable:
    """Mean reciprocal rank across templates, then an overall ranking.

    fsum keeps the mean invariant under template permutation.  Ties in
    the ensemble score break lexicographically on the candidate key.
    """
    if not candidates:
        raise FilterError("no candidates to score")
    if query in set(candidates):
        raise FilterError(f"query {query.key!r} cannot be its own candidate")
    per_template = backend.rank_many(query, candidates, list(templates))
    for template in templates:
        _check_bijection(per_template[template], candidates)
    scores: Dict[Entity, float] = {}
    for candidate in candidates:
        reciprocal = [
            1.0 / per_template[template][candidate] for template in templates
        ]
        scores[candidate] = math.fsum(reciprocal) / len(templates)
    ordered = sorted(candidates, key=lambda entity: (-scores[entity], entity.key))
    ranks = {entity: position for position, entity in enumerate(ordered, start=1)}
    return ScoreTable(
        query=query,
        scores=scores,
        ranks=ranks,
        per_template_ranks=per_template,
    )


@dataclass(frozen=True)
class FilterDecision:
    parent: Entity
    child: Entity
    ensemble_score: float
    rank: int
    kept: bool
    reason: str  # "rank-within-top-k" | "rank-exceeds-top-k" | "descendants-kept"


@dataclass
class FilterReport:
    top_k: int
    decisions: List[FilterDecision] = field(default_factory=list)
    skipped: bool = False
    skip_reason: Optional[str] = None

    @property
    def removed(self) -> List[FilterDecision]:
        return [decision for decision in self.decisions if not decision.kept]


def filter_layer(
    taxonomy: Taxonomy,
    new_edges: Sequence[Edge],
    pool: EntityPool,
    templates: TemplateSet,
    backend: ScorerBackend,
    top_k: int = DEFAULT_TOP_K,
    placed_only: bool = False,
) -> Tuple[Taxonomy, EntityPool, FilterReport]:
    """Audit this iteration's edges; detach the implausible ones.

    Edges are processed deepest child first so intra-layer chains are
    judged bottom-up.  An edge whose child keeps surviving children
    cannot be detached and is retained with reason ``descendants-kept``.
    A scorer outage skips the whole layer (fail open) and marks the
    report.  Detached children go back to ``pool``.
    """
    if top_k < 1:
        raise FilterError("top_k must be >= 1")
    report = FilterReport(top_k=top_k)
    missing = [edge for edge in new_edges if edge not in taxonomy.edge_set]
    if missing:
        parent, child = missing[0]
        raise FilterError(f"edge ({parent.key!r}, {child.key!r}) is not in the tree")

    ordered = sorted(
        new_edges,
        key=lambda edge: (-taxonomy.depth(edge[1]), edge[1].key),
    )
    for parent, child in ordered:
        if placed_only:
            candidates = sorted(
                set(taxonomy.nodes) - {child}, key=lambda entity: entity.key
            )
        else:
            candidates = sorted(
                set(pool.universe) - {child}, key=lambda entity: entity.key
            )
        try:
            table = ensemble_score(child, candidates, templates, backend)
        except ScorerUnavailable as error:
            report.skipped = True
            report.skip_reason = str(error)
            return taxonomy, pool, report
        rank = table.ranks[parent]
        score = table.scores[parent]
        if rank <= top_k:
            report.decisions.append(
                FilterDecision(parent, child, score, rank, True, "rank-within-top-k")
            )
            continue
        if not taxonomy.is_leaf(child):
            report.decisions.append(
                FilterDecision(parent, child, score, rank, True, "descendants-kept")
            )
            continue
        taxonomy, detached = remove_edge_and_detach(taxonomy, (parent, child))
        pool.give_back(detached)
        report.decisions.append(
            FilterDecision(parent, child, score, rank, False, "rank-exceeds-top-k")
        )
    return taxonomy, pool, report


class LexicalScorer:
    """Deterministic offline scorer built on surface overlap.

    An anchor matching the query's head (last) token scores 2w; any other
    token or substring containment either way scores w; everything else
    falls back to character-trigram Jaccard in [0, 1).  w = 1.0.
    """

    weight = 1.0

    def score(self, query: Entity, anchor: Entity) -> float:
        query_key, anchor_key = query.key, anchor.key
        if anchor_key == query_key.split()[-1]:
            return 2.0 * self.weight
        if anchor_key in query_key or query_key in anchor_key:
            return self.weight
        return _trigram_jaccard(query_key, anchor_key)

    def rank_many(
        self,
        query: Entity,
        candidates: Sequence[Entity],
        templates: Sequence[str],
    ) -> Dict[str, Dict[Entity, int]]:
        scores = {candidate: self.score(query, candidate) for candidate in candidates}
        ordered = sorted(candidates, key=lambda entity: (-scores[entity], entity.key))
        ranks = {entity: position for position, entity in enumerate(ordered, start=1)}
        return {template: dict(ranks) for template in templates}


class RemoteScorer:
    """Client for a masked-language-model ranking service.

    POSTs {query, candidates, templates} to ``{base_url}/rank`` and reads
    per-template rank tables back.  Entities travel as normalized keys.
    Connection problems or bad payloads raise ``ScorerUnavailable``.
    """

    def __init__(
        self,
        base_url: str = "",
        client: Optional[httpx.Client] = None,
        timeout_seconds: float = 30.0,
    ):
        if client is None and not base_url:
            raise ValueError("need a base_url or an injected client")
        self._client = client or httpx.Client(
            base_url=base_url, timeout=timeout_seconds
        )

    def rank_many(
        self,
        query: Entity,
        candidates: Sequence[Entity],
        templates: Sequence[str],
    ) -> Dict[str, Dict[Entity, int]]:
        by_key = {candidate.key: candidate for candidate in candidates}
        payload = {
            "query": query.key,
            "candidates": sorted(by_key),
            "templates": list(templates),
        }
        try:
            response = self._client.post("/rank", json=payload)
        except httpx.HTTPError as error:
            raise ScorerUnavailable(f"rank service unreachable: {error}") from error
        if response.status_code != 200:
            raise ScorerUnavailable(
                f"rank service returned {response.status_code}: {response.text}"
            )
        try:
            tables = response.json()["per_template_ranks"]
            return {
                template: {
                    by_key[key]: int(rank) for key, rank in tables[template].items()
                }
                for template in templates
            }
        except (KeyError, ValueError, TypeError) as error:
            raise ScorerUnavailable(f"bad rank payload: {error}") from error


def _trigram_jaccard(left: str, right: str) -> float:
    left_grams = _grams(left)
    right_grams = _grams(right)
    union = left_grams | right_grams
    if not union:
        return 0.0
    return len(left_grams & right_grams) / len(union)


def _grams(text: str) -> set:
    if len(text) < 3:
        return {text}
    return {text[i : i + 3] for i in range(len(text) - 2)}


def _check_bijection(ranks: Dict[Entity, int], candidates: Sequence[Entity]) -> None:
    expected = set(range(1, len(candidates) + 1))
    if set(ranks.get(candidate, 0) for candidate in candidates) != expected:
        raise FilterError("ranks are not a bijection onto 1..n")
