"""Dataset records and their file formats.

A record bundles a name, a root, the declared entity list, the gold tree,
and a split tag.  The JSON form is::

    {"name": "...", "root": "...", "entities": ["..."],
     "edges": [["parent", "child"], ...], "split": "test"}

Files may hold a single record, a bare list, or ``{"records": [...]}``.
A converter ingests plain ``parent<TAB>child`` edge lists.  All loader
errors carry the file, record, and where possible the line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from .taxonomy import Entity, Taxonomy, TaxonomyError, build_taxonomy

SPLITS = ("train", "dev", "test")


class DatasetError(Exception):
    pass


class ParseError(DatasetError):
    pass


class InvariantViolation(DatasetError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    name: str
    root: Entity
    entities: Tuple[Entity, ...]
    gold: Taxonomy
    split: str

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise InvariantViolation(
                f"record {self.name!r}: split {self.split!r} not in {SPLITS}"
            )
        if self.root != self.gold.root:
            raise InvariantViolation(
                f"record {self.name!r}: root {self.root.key!r} does not match "
                f"the gold tree root {self.gold.root.key!r}"
            )
        if set(self.entities) != set(self.gold.nodes):
            raise InvariantViolation(
                f"record {self.name!r}: entity list does not equal the gold node set"
            )


def record_from_dict(payload: Dict, where: str = "record") -> DatasetRecord:
    for key in ("name", "root", "entities", "edges"):
        if key not in payload:
            raise ParseError(f"{where}: missing {key!r}")
    try:
        root = Entity(payload["root"])
        entities = tuple(Entity(surface) for surface in payload["entities"])
        edges = tuple(
            (Entity(parent), Entity(child)) for parent, child in payload["edges"]
        )
    except (TypeError, ValueError) as error:
        raise ParseError(f"{where}: {error}") from error
    try:
        gold = build_taxonomy(root, edges)
    except TaxonomyError as error:
        raise ParseError(f"{where}: bad gold tree: {error}") from error
    return DatasetRecord(
        name=payload["name"],
        root=root,
        entities=entities,
        gold=gold,
        split=payload.get("split", "test"),
    )


def record_to_dict(record: DatasetRecord) -> Dict:
    return {
        "name": record.name,
        "root": record.root.surface,
        "entities": [entity.surface for entity in record.entities],
        "edges": [
            [parent.surface, child.surface] for parent, child in record.gold.edges
        ],
        "split": record.split,
    }


def load_dataset(path: str) -> List[DatasetRecord]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as error:
        raise ParseError(f"{path}: {error}") from error
    except json.JSONDecodeError as error:
        raise ParseError(f"{path}:{error.lineno}: {error.msg}") from error
    return records_from_payload(payload, where=path)


def records_from_payload(payload: object, where: str = "payload") -> List[DatasetRecord]:
    if isinstance(payload, dict) and "records" in payload:
        items = payload["records"]
    elif isinstance(payload, dict):
        items = [payload]
    elif isinstance(payload, list):
        items = payload
    else:
        raise ParseError(f"{where}: expected an object or a list")
    records = []
    for position, item in enumerate(items):
        if not isinstance(item, dict):
            raise ParseError(f"{where}: record {position} is not an object")
        label = item.get("name", position)
        records.append(record_from_dict(item, where=f"{where}: record {label}"))
    names = [record.name for record in records]
    if len(set(names)) != len(names):
        raise ParseError(f"{where}: duplicate record names")
    return records


def save_dataset(records: Sequence[DatasetRecord], path: str) -> None:
    payload = {"records": [record_to_dict(record) for record in records]}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")


def record_from_edge_lines(
    lines: Sequence[str],
    name: str,
    split: str = "test",
    where: str = "edge list",
) -> DatasetRecord:
    """Build a record from ``parent<TAB>child`` lines; the root is inferred."""
    edges: List[Tuple[Entity, Entity]] = []
    entities: List[Entity] = []
    seen = set()

    def note(entity: Entity) -> None:
        if entity not in seen:
            seen.add(entity)
            entities.append(entity)

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise ParseError(f"{where}:{line_no}: expected parent<TAB>child")
        parent, child = Entity(parts[0]), Entity(parts[1])
        note(parent)
        note(child)
        edges.append((parent, child))
    if not edges:
        raise ParseError(f"{where}: no edges")
    children = {child for _, child in edges}
    roots = [entity for entity in entities if entity not in children]
    if len(roots) != 1:
        raise ParseError(
            f"{where}: cannot infer a unique root "
            f"(candidates: {sorted(entity.key for entity in roots)})"
        )
    try:
        gold = build_taxonomy(roots[0], edges)
    except TaxonomyError as error:
        raise ParseError(f"{where}: {error}") from error
    return DatasetRecord(
        name=name, root=roots[0], entities=tuple(entities), gold=gold, split=split
    )


def load_edge_list(path: str, name: Optional[str] = None, split: str = "test") -> DatasetRecord:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as error:
        raise ParseError(f"{path}: {error}") from error
    label = name or path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return record_from_edge_lines(lines, name=label, split=split, where=path)


def fixture_path(relative: str) -> str:
    """Absolute path of a bundled fixture file."""
    return str(resources.files("taxoduce.fixtures").joinpath(relative))
