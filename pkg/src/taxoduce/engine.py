"""Induction engine: grow a taxonomy from an entity set with a chat model.

Two modes.  One-shot asks for the whole tree in a single reply.
Iterative opens with the same instruction, then requests one level per
exchange ("find all the k-level entities"), re-parsing the model's
running outline after each turn and committing only monotone additions:
a new edge is accepted when the child is still unplaced and the parent is
already in the tree (or was accepted earlier in the same reply at a
shallower level).  Rewrites of earlier layers and renumbered siblings are
ignored with diagnostics, which makes replayed transcripts robust to the
cosmetic drift real models produce.

Strict entity handling prunes out-of-set names and promotes their in-set
children to the nearest surviving ancestor; lenient keeps model output
verbatim.  An optional rank filter audits each committed layer and sends
implausible children back to the pool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from .filtering import (
    DEFAULT_TEMPLATES,
    DEFAULT_TOP_K,
    FilterReport,
    ScorerBackend,
    TemplateSet,
    filter_layer,
)
from .gateway import Backend, ChatRequest, GatewayError
from .outline import EmptyInput, NoRootLine, outline_to_taxonomy, parse_outline
from .prompts import (
    ChatMessage,
    ChatTranscript,
    Demonstration,
    FULL_RULES,
    Rule,
    RootNotInEntityList,
    build_check_prompt,
    build_hf_instruction,
    build_iteration_prompt,
    build_zero_shot_demo_request,
    demonstration_from_taxonomy,
    hf_demonstration_dialogue,
    system_message,
)
from .taxonomy import (
    Entity,
    EntityPool,
    Taxonomy,
    build_taxonomy,
    singleton,
)

logger = logging.getLogger(__name__)


class EngineError(Exception):
    pass


class InsufficientDemos(EngineError):
    pass


class Mode(str, Enum):
    ITERATIVE = "col"
    ONE_SHOT = "hf"


class Termination(str, Enum):
    POOL_EMPTY = "pool-empty"
    MAX_ITERATIONS = "max-iterations"
    STALLED = "stalled"
    MODEL_DECLARED_COMPLETE_EARLY = "model-declared-complete-early"
    BACKEND_ERROR = "backend-error"


@dataclass(frozen=True)
class InductionConfig:
    mode: Mode = Mode.ITERATIVE
    rules: FrozenSet[Rule] = FULL_RULES
    demonstrations: Tuple[Demonstration, ...] = ()
    filter_enabled: bool = False
    top_k: int = DEFAULT_TOP_K
    templates: TemplateSet = DEFAULT_TEMPLATES
    placed_only_candidates: bool = False
    strict_entity_set: bool = True
    max_iterations: int = 10
    stall_limit: int = 2
    model_name: str = "scripted"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    demo_temperature: float = 0.7

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    level: int
    committed: Tuple[str, ...]  # child keys that survived this iteration
    filtered: Tuple[str, ...]  # child keys the filter sent back
    check_answer: Optional[str]  # "yes" | "no" | None when unparseable
    diagnostics: Tuple[str, ...]
    placed: FrozenSet[str]
    remaining: FrozenSet[str]
    dropped: FrozenSet[str]


@dataclass(frozen=True)
class InductionReport:
    taxonomy: Taxonomy
    termination: Termination
    iterations: Tuple[IterationRecord, ...]
    unplaced: FrozenSet[Entity]
    dropped: FrozenSet[Entity]
    filter_reports: Tuple[FilterReport, ...]
    transcript: ChatTranscript
    model_calls: int
    error: Optional[str] = None


def induce_col(
    entities: Sequence[Entity],
    root: Entity,
    config: InductionConfig,
    backend: Backend,
    scorer: Optional[ScorerBackend] = None,
) -> InductionReport:
    """Iterative induction over ``entities`` rooted at ``root``.

    Termination, in priority order: the pool empties; the iteration cap
    is reached; ``stall_limit`` consecutive level requests commit nothing
    (reported as model-declared-complete-early when the model answered
    the completion check affirmatively while entities remained).  The
    opening exchange only confirms the root and never counts toward the
    stall guard.  Gateway errors end the session with a partial report.
    """
    if root not in set(entities):
        raise RootNotInEntityList(f"root {root.key!r} is not in the entity list")
    if config.filter_enabled and scorer is None:
        raise EngineError("filter enabled but no scorer supplied")

    pool = EntityPool.for_induction(entities, root)
    tree = singleton(root)
    session = _Session(config, backend)
    for demo in config.demonstrations:
        session.messages.extend(demo.dialogue)

    iterations: List[IterationRecord] = []
    filter_reports: List[FilterReport] = []
    termination: Optional[Termination] = None
    error: Optional[str] = None
    stall_streak = 0
    early_yes = False

    for level in range(1, config.max_iterations + 1):
        if level == 1:
            prompt = build_hf_instruction(
                root, entities, config.rules, step_by_step=True
            )
        else:
            prompt = build_iteration_prompt(level)
        try:
            reply = session.send(prompt)
        except GatewayError as exc:
            logger.warning("session aborted at level %d: %s", level, exc)
            termination, error = Termination.BACKEND_ERROR, str(exc)
            break

        diagnostics: List[str] = []
        accepted = _accept_monotone(tree, reply, pool, config, diagnostics)
        tree = build_taxonomy(root, tree.edges + tuple(accepted))

        filtered_keys: Tuple[str, ...] = ()
        if config.filter_enabled and accepted:
            tree, pool, report = filter_layer(
                tree,
                accepted,
                pool,
                config.templates,
                scorer,
                top_k=config.top_k,
                placed_only=config.placed_only_candidates,
            )
            filter_reports.append(report)
            filtered_keys = tuple(
                sorted(decision.child.key for decision in report.removed)
            )

        committed = tuple(
            sorted(
                child.key
                for _, child in accepted
                if (child in tree.nodes) and child not in pool.remaining
            )
        )
        if level > 1:
            stall_streak = 0 if committed else stall_streak + 1

        try:
            check_reply = session.send(build_check_prompt())
        except GatewayError as exc:
            termination, error = Termination.BACKEND_ERROR, str(exc)
            iterations.append(
                _snapshot(level, committed, filtered_keys, None, diagnostics, tree, pool)
            )
            break
        answer = _parse_check_answer(check_reply)
        if answer == "yes" and pool.remaining:
            early_yes = True

        iterations.append(
            _snapshot(level, committed, filtered_keys, answer, diagnostics, tree, pool)
        )

        if not pool.remaining:
            termination = Termination.POOL_EMPTY
            break
        if stall_streak >= config.stall_limit:
            termination = (
                Termination.MODEL_DECLARED_COMPLETE_EARLY
                if early_yes
                else Termination.STALLED
            )
            break

    if termination is None:
        termination = Termination.MAX_ITERATIONS

    return InductionReport(
        taxonomy=tree,
        termination=termination,
        iterations=tuple(iterations),
        unplaced=frozenset(pool.remaining),
        dropped=frozenset(pool.dropped),
        filter_reports=tuple(filter_reports),
        transcript=tuple(session.messages),
        model_calls=session.calls,
        error=error,
    )


def induce_hf(
    entities: Sequence[Entity],
    root: Entity,
    config: InductionConfig,
    backend: Backend,
) -> InductionReport:
    """One-shot induction: a single instruction, a single outline reply.

    Strict mode drops out-of-set nodes and promotes their in-set children
    to the nearest surviving ancestor; in-set nodes orphaned entirely are
    re-attached under the requested root with a diagnostic.
    """
    if root not in set(entities):
        raise RootNotInEntityList(f"root {root.key!r} is not in the entity list")

    pool = EntityPool.for_induction(entities, root)
    session = _Session(config, backend)
    for demo in config.demonstrations:
        session.messages.extend(hf_demonstration_dialogue(demo))

    diagnostics: List[str] = []
    tree = singleton(root)
    termination = Termination.MODEL_DECLARED_COMPLETE_EARLY
    error: Optional[str] = None
    try:
        reply = session.send(
            build_hf_instruction(root, entities, config.rules, step_by_step=False)
        )
    except GatewayError as exc:
        termination, error = Termination.BACKEND_ERROR, str(exc)
        reply = None

    if reply is not None:
        try:
            outline, parse_diags = parse_outline(reply)
            raw = outline_to_taxonomy(outline, lenient=True, diagnostics=parse_diags)
            diagnostics.extend(diag.message for diag in parse_diags)
            if config.strict_entity_set:
                tree = _prune_to_entity_set(raw, root, pool, diagnostics)
            else:
                tree = raw
            for node in tree.nodes:
                pool.take(node)
            if not pool.remaining:
                termination = Termination.POOL_EMPTY
        except (EmptyInput, NoRootLine) as exc:
            diagnostics.append(f"unusable reply: {exc}")

    record = _snapshot(
        1,
        tuple(sorted(entity.key for entity in tree.nodes - {root})),
        (),
        None,
        diagnostics,
        tree,
        pool,
    )
    return InductionReport(
        taxonomy=tree,
        termination=termination,
        iterations=(record,),
        unplaced=frozenset(pool.remaining),
        dropped=frozenset(pool.dropped),
        filter_reports=(),
        transcript=tuple(session.messages),
        model_calls=session.calls,
        error=error,
    )


def generate_zero_shot_demos(
    root: Entity,
    count: int,
    config: InductionConfig,
    backend: Backend,
    attempts_per_demo: int = 3,
) -> List[Demonstration]:
    """Bootstrap demonstrations by sampling free-form trees under ``root``.

    Each sample is requested without an entity list (the closed-world
    rule cannot apply), parsed leniently, and unrolled into a layered
    dialogue.  Unusable samples burn an attempt; running out raises
    ``InsufficientDemos``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    demos: List[Demonstration] = []
    failures: List[str] = []
    budget = count * attempts_per_demo
    while len(demos) < count and budget > 0:
        budget -= 1
        request = ChatRequest(
            messages=build_zero_shot_demo_request(root),
            model_name=config.model_name,
            temperature=config.demo_temperature,
            max_output_tokens=config.max_output_tokens,
        )
        try:
            reply = backend.complete(request)
            outline, _ = parse_outline(reply)
            taxonomy = outline_to_taxonomy(outline, lenient=True, diagnostics=[])
            demos.append(
                demonstration_from_taxonomy(taxonomy, tuple(taxonomy.nodes))
            )
        except GatewayError:
            raise
        except Exception as exc:  # malformed sample: burn the attempt
            failures.append(str(exc))
            continue
    if len(demos) < count:
        raise InsufficientDemos(
            f"got {len(demos)} of {count} usable demonstrations; "
            f"failures: {failures[-3:]}"
        )
    return demos


class _Session:
    """Conversation state plus the request plumbing."""

    def __init__(self, config: InductionConfig, backend: Backend):
        self.config = config
        self.backend = backend
        self.messages: List[ChatMessage] = [system_message()]
        self.calls = 0

    def send(self, prompt: ChatMessage) -> str:
        self.messages.append(prompt)
        request = ChatRequest(
            messages=tuple(self.messages),
            model_name=self.config.model_name,
            temperature=self.config.temperature,
            max_output_tokens=self.config.max_output_tokens,
        )
        reply = self.backend.complete(request)
        self.calls += 1
        self.messages.append(ChatMessage(role="assistant", content=reply))
        return reply


def _accept_monotone(
    tree: Taxonomy,
    reply: str,
    pool: EntityPool,
    config: InductionConfig,
    diagnostics: List[str],
) -> List[Tuple[Entity, Entity]]:
    """Edges from ``reply`` that extend ``tree`` without rewriting it."""
    try:
        outline, parse_diags = parse_outline(reply)
    except (EmptyInput, NoRootLine) as exc:
        diagnostics.append(f"no outline in reply: {exc}")
        return []
    diagnostics.extend(diag.message for diag in parse_diags)

    by_index: Dict[Tuple[int, ...], Entity] = {}
    accepted: List[Tuple[Entity, Entity]] = []
    accepted_children: Set[Entity] = set()
    reply_root = Entity(outline.lines[0].surface)
    by_index[outline.lines[0].index] = reply_root
    if reply_root != tree.root:
        diagnostics.append(
            f"reply is rooted at {reply_root.key!r}, not {tree.root.key!r}"
        )

    for line in outline.lines[1:]:
        child = Entity(line.surface)
        by_index[line.index] = child
        parent = by_index.get(line.index[:-1])
        if parent is None:
            diagnostics.append(f"{child.key!r}: parent line missing; skipped")
            continue
        if child in tree.nodes or child == tree.root:
            existing = tree.parent(child)
            if existing is not None and existing != parent:
                diagnostics.append(
                    f"{child.key!r}: rewrite under {parent.key!r} ignored "
                    f"(placed under {existing.key!r})"
                )
            continue
        if child in accepted_children:
            diagnostics.append(f"{child.key!r}: proposed twice; first kept")
            continue
        if child not in pool.universe:
            if config.strict_entity_set:
                pool.drop(child)
                diagnostics.append(f"{child.key!r}: not in the entity set; dropped")
                continue
        elif child not in pool.remaining:
            diagnostics.append(f"{child.key!r}: not available; skipped")
            continue
        parent_placed = (
            parent in tree.nodes
            or parent == tree.root
            or parent in accepted_children
        )
        if not parent_placed:
            diagnostics.append(
                f"{child.key!r}: parent {parent.key!r} is not placed; skipped"
            )
            continue
        accepted.append((parent, child))
        accepted_children.add(child)
        pool.take(child)
    return accepted


def _prune_to_entity_set(
    raw: Taxonomy,
    root: Entity,
    pool: EntityPool,
    diagnostics: List[str],
) -> Taxonomy:
    """Rebuild ``raw`` on in-set nodes only, preserving ancestry."""
    edges: List[Tuple[Entity, Entity]] = []
    orphans: List[Entity] = []

    def walk(node: Entity, nearest: Optional[Entity]) -> None:
        for child in raw.children(node):
            if child in pool.universe:
                if nearest is None:
                    orphans.append(child)
                else:
                    edges.append((nearest, child))
                walk(child, child)
            else:
                pool.drop(child)
                diagnostics.append(
                    f"{child.key!r}: not in the entity set; children promoted"
                )
                walk(child, nearest)

    if raw.root == root:
        walk(raw.root, raw.root)
    elif raw.root in pool.universe:
        # Model rooted the tree at an in-set non-root entity; keep its
        # structure and let the metrics judge it.
        diagnostics.append(f"tree rooted at {raw.root.key!r} instead of {root.key!r}")
        walk(raw.root, raw.root)
        return build_taxonomy(raw.root, edges)
    else:
        pool.drop(raw.root)
        diagnostics.append(
            f"root {raw.root.key!r}: not in the entity set; children promoted"
        )
        walk(raw.root, None)
    for orphan in orphans:
        if orphan != root:
            diagnostics.append(
                f"{orphan.key!r}: every ancestor pruned; re-attached to the root"
            )
            edges.append((root, orphan))
    return build_taxonomy(root, edges)


def _parse_check_answer(reply: str) -> Optional[str]:
    lowered = reply.lower()
    if "answer: yes" in lowered or lowered.strip().startswith("yes"):
        return "yes"
    if "answer: no" in lowered or lowered.strip().startswith("no"):
        return "no"
    return None


def _snapshot(
    level: int,
    committed: Tuple[str, ...],
    filtered: Tuple[str, ...],
    answer: Optional[str],
    diagnostics: List[str],
    tree: Taxonomy,
    pool: EntityPool,
) -> IterationRecord:
    return IterationRecord(
        level=level,
        committed=committed,
        filtered=filtered,
        check_answer=answer,
        diagnostics=tuple(diagnostics),
        placed=frozenset(entity.key for entity in tree.nodes),
        remaining=frozenset(entity.key for entity in pool.remaining),
        dropped=frozenset(entity.key for entity in pool.dropped),
    )
