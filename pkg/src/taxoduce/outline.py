"""Numbered-outline codec.

The wire format chat models emit and consume looks like::

    1. maneuver
    1.1 straight-arm
    1.2 flight maneuver
    1.2.1 loop

The root line carries a trailing dot after its single index component;
deeper lines separate components with dots and take none at the end.
Parsing is lenient: prose lines are skipped, and recoverable defects
(level skips, duplicate indices, renumbered siblings) are repaired and
reported as diagnostics.  A parsed :class:`Outline` always satisfies the
structural invariants, so recovery canonicalizes indices; the diagnostic
keeps the raw spelling.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .taxonomy import Entity, Taxonomy, build_taxonomy

_LINE_RE = re.compile(r"^\s*(\d+(?:\.\d+)*)\.?\s+(\S.*?)\s*$")


class OutlineError(Exception):
    pass


class EmptyInput(OutlineError):
    pass


class NoRootLine(OutlineError):
    pass


class DiagnosticKind(str, Enum):
    LEVEL_SKIP = "level-skip"
    DUPLICATE_INDEX = "duplicate-index"
    FOREIGN_ROOT = "foreign-root"
    ORPHAN_LINE = "orphan-line"
    RENUMBERED = "renumbered"
    DUPLICATE_ENTITY = "duplicate-entity"


@dataclass(frozen=True)
class Diagnostic:
    kind: DiagnosticKind
    line_no: int
    message: str


@dataclass(frozen=True)
class OutlineLine:
    index: Tuple[int, ...]
    surface: str


@dataclass(frozen=True)
class Outline:
    """Lines in emission order; every parent prefix precedes its children."""

    lines: Tuple[OutlineLine, ...]

    def __len__(self) -> int:
        return len(self.lines)


def parse_outline(text: str) -> Tuple[Outline, List[Diagnostic]]:
    """Extract the outline embedded in ``text``.

    Raises ``EmptyInput`` on blank text and ``NoRootLine`` when no line
    carries the bare index 1.  Everything else is recovered: a level skip
    attaches to the deepest previously seen prefix, a duplicate index
    keeps its first occurrence, and foreign root families (first component
    != 1) are dropped.
    """
    if not text.strip():
        raise EmptyInput("no text to parse")

    raw: List[Tuple[int, Tuple[int, ...], str]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        match = _LINE_RE.match(line)
        if not match:
            continue
        index = tuple(int(part) for part in match.group(1).split("."))
        raw.append((line_no, index, match.group(2)))

    if not any(index == (1,) for _, index, _ in raw):
        raise NoRootLine("no line with index 1")

    diagnostics: List[Diagnostic] = []
    # raw index -> canonical index, for prefix resolution of later lines
    canonical: Dict[Tuple[int, ...], Tuple[int, ...]] = {}
    child_counts: Dict[Tuple[int, ...], int] = {}
    lines: List[OutlineLine] = []

    for line_no, index, surface in raw:
        if index[0] != 1:
            diagnostics.append(
                Diagnostic(
                    DiagnosticKind.FOREIGN_ROOT,
                    line_no,
                    f"index {_dotted(index)} outside the root family",
                )
            )
            continue
        if index in canonical:
            diagnostics.append(
                Diagnostic(
                    DiagnosticKind.DUPLICATE_INDEX,
                    line_no,
                    f"index {_dotted(index)} repeats; first occurrence kept",
                )
            )
            continue
        if index == (1,):
            canonical[index] = (1,)
            child_counts[(1,)] = 0
            lines.append(OutlineLine(index=(1,), surface=surface))
            continue
        if (1,) not in canonical:
            diagnostics.append(
                Diagnostic(
                    DiagnosticKind.ORPHAN_LINE,
                    line_no,
                    f"index {_dotted(index)} arrived before the root line",
                )
            )
            continue

        # Longest proper prefix already seen is the structural parent.
        parent_raw = index[:-1]
        while parent_raw and parent_raw not in canonical:
            parent_raw = parent_raw[:-1]
        if len(parent_raw) < len(index) - 1:
            diagnostics.append(
                Diagnostic(
                    DiagnosticKind.LEVEL_SKIP,
                    line_no,
                    f"index {_dotted(index)} skips levels; "
                    f"attached under {_dotted(parent_raw)}",
                )
            )
        parent_canonical = canonical[parent_raw]
        ordinal = child_counts[parent_canonical] + 1
        if len(parent_raw) == len(index) - 1 and index[-1] != ordinal:
            diagnostics.append(
                Diagnostic(
                    DiagnosticKind.RENUMBERED,
                    line_no,
                    f"index {_dotted(index)} arrived as sibling #{ordinal}",
                )
            )
        new_index = parent_canonical + (ordinal,)
        child_counts[parent_canonical] = ordinal
        child_counts[new_index] = 0
        canonical[index] = new_index
        lines.append(OutlineLine(index=new_index, surface=surface))

    return Outline(lines=tuple(lines)), diagnostics


def render_outline(taxonomy: Taxonomy) -> str:
    """Depth-first render; children appear in edge insertion order."""
    lines = [f"1. {taxonomy.root.surface}"]

    def walk(entity: Entity, index: Tuple[int, ...]) -> None:
        for position, child in enumerate(taxonomy.children(entity), start=1):
            child_index = index + (position,)
            lines.append(f"{_dotted(child_index)} {child.surface}")
            walk(child, child_index)

    walk(taxonomy.root, (1,))
    return "\n".join(lines)


def outline_to_taxonomy(
    outline: Outline,
    lenient: bool = False,
    diagnostics: Optional[List[Diagnostic]] = None,
) -> Taxonomy:
    """Materialize an outline as a taxonomy.

    When the same entity appears under two parents, strict mode lets the
    structural error propagate (``DuplicateParent``); lenient mode drops
    the second occurrence with a diagnostic, and descendants of the
    dropped line resolve to the surviving entity.
    """
    if not outline.lines:
        raise NoRootLine("empty outline")
    sink = diagnostics if diagnostics is not None else []

    by_index: Dict[Tuple[int, ...], Entity] = {}
    placed: Dict[str, Tuple[int, ...]] = {}
    edges: List[Tuple[Entity, Entity]] = []
    root = Entity(outline.lines[0].surface)
    by_index[(1,)] = root
    placed[root.key] = (1,)

    for position, line in enumerate(outline.lines):
        if position == 0:
            continue
        entity = Entity(line.surface)
        parent = by_index[line.index[:-1]]
        if lenient and entity.key in placed and placed[entity.key] != line.index:
            sink.append(
                Diagnostic(
                    DiagnosticKind.DUPLICATE_ENTITY,
                    position + 1,
                    f"{entity.key!r} already placed; occurrence at "
                    f"{_dotted(line.index)} dropped",
                )
            )
            by_index[line.index] = entity
            continue
        by_index[line.index] = entity
        placed.setdefault(entity.key, line.index)
        edges.append((parent, entity))

    return build_taxonomy(root, edges)


def parse_to_taxonomy(
    text: str,
    lenient: bool = False,
) -> Tuple[Taxonomy, List[Diagnostic]]:
    """Convenience: parse then materialize, pooling diagnostics."""
    outline, diagnostics = parse_outline(text)
    taxonomy = outline_to_taxonomy(outline, lenient=lenient, diagnostics=diagnostics)
    return taxonomy, diagnostics


def _dotted(index: Sequence[int]) -> str:
    if len(index) == 1:
        return f"{index[0]}."
    return ".".join(str(part) for part in index)
