"""Chat prompt construction for taxonomy induction.

All strings a model sees are assembled here and nowhere else, so tests can
pin them byte-for-byte.  The instruction states the task, the outline
format, and up to three rules: no added commentary, a single root, and the
closed-world rule (use every listed entity, add none).  The free-form
variant used when bootstrapping demonstrations drops the closed-world
rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, List, Sequence, Tuple

from .outline import render_outline
from .taxonomy import Entity, Taxonomy, truncate_to_depth


class PromptError(Exception):
    pass


class RootNotInEntityList(PromptError):
    pass


class Rule(str, Enum):
    """Instruction rules, in the order they are written out."""

    NO_COMMENTS = "no-comments"
    SINGLE_ROOT = "single-root"
    CLOSED_WORLD = "closed-world"


FULL_RULES: FrozenSet[Rule] = frozenset(Rule)
FREE_FORM_RULES: FrozenSet[Rule] = frozenset({Rule.NO_COMMENTS, Rule.SINGLE_ROOT})

SYSTEM_MESSAGE = "You are an expert in constructing a taxonomy from a list of concepts."

_TASK = "Build a taxonomy whose root concept is {root} with the given list of entities."
_FORMAT = (
    "The format of the generated taxonomy is: 1. Parent Concept 1.1 Child Concept. "
    "Do not change any entity names when building the taxonomy."
)
_RULE_TEXT = {
    Rule.NO_COMMENTS: "Do not add any comments.",
    Rule.SINGLE_ROOT: "There should be one and only one root node of the taxonomy.",
    Rule.CLOSED_WORLD: (
        "All entities in the entity list must appear in the taxonomy and "
        "don't add any entities that are not in the entity list."
    ),
}
_STEP_BY_STEP = "Let's do it step by step."
_CURRENT_TAXONOMY = "The current taxonomy is:"

CHECK_PROMPT = "Check: Is the remaining entity list empty?"
ANSWER_NO = "Answer: No."
ANSWER_YES = "Answer: Yes.\nThe taxonomy is complete."


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")


ChatTranscript = Tuple[ChatMessage, ...]


@dataclass(frozen=True)
class Demonstration:
    """A worked example: the gold tree plus the dialogue that builds it."""

    taxonomy: Taxonomy
    dialogue: ChatTranscript


def system_message() -> ChatMessage:
    return ChatMessage(role="system", content=SYSTEM_MESSAGE)


def render_entity_list(entities: Sequence[Entity]) -> str:
    inner = ", ".join(f"'{entity.surface}'" for entity in entities)
    return f"[{inner}]"


def build_hf_instruction(
    root: Entity,
    entities: Sequence[Entity],
    rules: FrozenSet[Rule] = FULL_RULES,
    step_by_step: bool = False,
) -> ChatMessage:
    """The opening instruction; ``step_by_step`` marks the iterative mode."""
    if root not in set(entities):
        raise RootNotInEntityList(f"root {root.key!r} is not in the entity list")
    sentences = [_TASK.format(root=root.surface), _FORMAT]
    for rule in Rule:
        if rule in rules:
            sentences.append(_RULE_TEXT[rule])
    body = " ".join(sentences)
    body += f"\nEntity list: {render_entity_list(entities)}"
    if step_by_step:
        body += f"\n{_STEP_BY_STEP}"
    return ChatMessage(role="user", content=body)


def build_iteration_prompt(level: int) -> ChatMessage:
    """Request the entities of one more level; the root level is given."""
    if level < 2:
        raise ValueError("iteration prompts start at level 2")
    return ChatMessage(
        role="user",
        content=(
            f"Then, let's find all the {level}-level entities "
            "from the remaining entity list."
        ),
    )


def build_check_prompt() -> ChatMessage:
    return ChatMessage(role="user", content=CHECK_PROMPT)


def root_confirmation(root: Entity) -> str:
    """The canonical first assistant turn of an iterative session."""
    return (
        f"First, the entity in the first level of the taxonomy is {root.surface}.\n"
        f"{_CURRENT_TAXONOMY}\n1. {root.surface}"
    )


def outline_reply(taxonomy: Taxonomy) -> str:
    return f"{_CURRENT_TAXONOMY}\n{render_outline(taxonomy)}"


def demonstration_from_taxonomy(
    gold: Taxonomy,
    entities: Sequence[Entity],
) -> Demonstration:
    """Unroll a gold tree into the dialogue that builds it level by level.

    A tree of depth d yields d assistant outline turns and d check
    answers, the last one affirmative.
    """
    if set(entities) != set(gold.nodes):
        raise ValueError("entity list must equal the gold node set")
    deepest = max(gold.depth(node) for node in gold.nodes) + 1

    turns: List[ChatMessage] = [
        build_hf_instruction(gold.root, entities, FULL_RULES, step_by_step=True),
        ChatMessage(role="assistant", content=root_confirmation(gold.root)),
        build_check_prompt(),
    ]
    if deepest == 1:
        turns.append(ChatMessage(role="assistant", content=ANSWER_YES))
        return Demonstration(taxonomy=gold, dialogue=tuple(turns))
    turns.append(ChatMessage(role="assistant", content=ANSWER_NO))

    for level in range(2, deepest + 1):
        turns.append(build_iteration_prompt(level))
        turns.append(
            ChatMessage(
                role="assistant",
                content=outline_reply(truncate_to_depth(gold, level)),
            )
        )
        turns.append(build_check_prompt())
        answer = ANSWER_YES if level == deepest else ANSWER_NO
        turns.append(ChatMessage(role="assistant", content=answer))
    return Demonstration(taxonomy=gold, dialogue=tuple(turns))


def hf_demonstration_dialogue(demo: Demonstration) -> ChatTranscript:
    """One-shot form of a demonstration: instruction in, final outline out."""
    gold = demo.taxonomy
    entities = _entities_in_dialogue_order(gold)
    return (
        build_hf_instruction(gold.root, entities, FULL_RULES, step_by_step=False),
        ChatMessage(role="assistant", content=render_outline(gold)),
    )


def build_zero_shot_demo_request(
    root: Entity,
    rules: FrozenSet[Rule] = FREE_FORM_RULES,
) -> ChatTranscript:
    """Ask the model to invent a taxonomy under ``root`` from nothing.

    No entity list is supplied, so the closed-world rule is meaningless
    here and rejected.
    """
    if Rule.CLOSED_WORLD in rules:
        raise PromptError("free-form generation cannot use the closed-world rule")
    sentences = [f"Build a taxonomy whose root concept is {root.surface}.", _FORMAT]
    for rule in Rule:
        if rule in rules:
            sentences.append(_RULE_TEXT[rule])
    return (system_message(), ChatMessage(role="user", content=" ".join(sentences)))


def _entities_in_dialogue_order(gold: Taxonomy) -> Tuple[Entity, ...]:
    ordered: List[Entity] = [gold.root]
    for parent, child in gold.edges:
        ordered.append(child)
    return tuple(ordered)
