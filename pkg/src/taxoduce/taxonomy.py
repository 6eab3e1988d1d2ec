"""Canonical in-memory model for taxonomies.

A taxonomy is a rooted tree over entities: every non-root node has exactly
one parent, every node is reachable from the root, and ``|nodes| ==
|edges| + 1``.  Entities compare by a normalized key (lowercased,
whitespace-collapsed) so that surface-form jitter from model output does
not split identities.

``build_taxonomy`` is the only validating constructor; everything else in
the package goes through it.  ``Taxonomy`` instances are immutable and
compare by root plus edge *set* (edge order is preserved separately for
rendering).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Sequence, Set, Tuple


class TaxonomyError(Exception):
    """Base class for structural violations."""


class MultipleRoots(TaxonomyError):
    pass


class CycleDetected(TaxonomyError):
    pass


class DisconnectedNode(TaxonomyError):
    pass


class DuplicateParent(TaxonomyError):
    pass


class NonMonotoneUpdate(TaxonomyError):
    pass


class NotALeaf(TaxonomyError):
    pass


class EdgeNotFound(TaxonomyError):
    pass


def normalize_surface(surface: str) -> str:
    """Collapse internal whitespace, trim, and lowercase."""
    return " ".join(surface.split()).lower()


@dataclass(frozen=True, eq=False)
class Entity:
    """An entity keyed by its normalized surface form.

    Equality and hashing use only ``key``; ``surface`` keeps the first
    spelling seen so renders stay readable.
    """

    surface: str
    key: str = field(init=False, repr=False)

    def __post_init__(self) -> None:
        key = normalize_surface(self.surface)
        if not key:
            raise ValueError("entity surface is empty after normalization")
        object.__setattr__(self, "key", key)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Entity) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"Entity({self.surface!r})"


Edge = Tuple[Entity, Entity]


@dataclass(frozen=True, eq=False)
class Taxonomy:
    """A validated rooted tree.  Construct via :func:`build_taxonomy`.

    ``edges`` keeps insertion order because sibling order matters when the
    tree is rendered back to a numbered outline.  Equality ignores order.
    """

    root: Entity
    edges: Tuple[Edge, ...]

    @cached_property
    def nodes(self) -> FrozenSet[Entity]:
        found: Set[Entity] = {self.root}
        for parent, child in self.edges:
            found.add(parent)
            found.add(child)
        return frozenset(found)

    @cached_property
    def edge_set(self) -> FrozenSet[Edge]:
        return frozenset(self.edges)

    @cached_property
    def parent_map(self) -> Mapping[Entity, Entity]:
        return {child: parent for parent, child in self.edges}

    @cached_property
    def _child_map(self) -> Mapping[Entity, Tuple[Entity, ...]]:
        out: Dict[Entity, List[Entity]] = {}
        for parent, child in self.edges:
            out.setdefault(parent, []).append(child)
        return {parent: tuple(children) for parent, children in out.items()}

    def children(self, entity: Entity) -> Tuple[Entity, ...]:
        return self._child_map.get(entity, ())

    def parent(self, entity: Entity) -> Entity | None:
        return self.parent_map.get(entity)

    def depth(self, entity: Entity) -> int:
        """Edges between ``entity`` and the root (root has depth 0)."""
        if entity not in self.nodes:
            raise EdgeNotFound(f"entity {entity.key!r} is not in the taxonomy")
        steps = 0
        current = entity
        while current != self.root:
            current = self.parent_map[current]
            steps += 1
        return steps

    def is_leaf(self, entity: Entity) -> bool:
        return not self.children(entity)

    def __contains__(self, entity: object) -> bool:
        return entity in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Taxonomy):
            return NotImplemented
        return self.root == other.root and self.edge_set == other.edge_set

    def __hash__(self) -> int:
        return hash((self.root, self.edge_set))

    def __repr__(self) -> str:
        return f"Taxonomy(root={self.root.key!r}, edges={len(self.edges)})"


def singleton(root: Entity) -> Taxonomy:
    return Taxonomy(root=root, edges=())


def build_taxonomy(root: Entity, edges: Iterable[Edge]) -> Taxonomy:
    """Validate ``edges`` as a tree rooted at ``root`` and construct it.

    Exact duplicate pairs are dropped silently.  Violations raise, in this
    order of detection: ``DuplicateParent`` (a child under two different
    parents), ``CycleDetected`` (including self-edges), ``MultipleRoots``
    (any in-degree-zero node besides ``root``, or ``root`` itself having a
    parent), ``DisconnectedNode``.  Error messages name the offending
    entities.
    """
    deduped: List[Edge] = []
    seen_pairs: Set[Tuple[str, str]] = set()
    for parent, child in edges:
        pair = (parent.key, child.key)
        if pair in seen_pairs:
            continue
        seen_pairs.add(pair)
        deduped.append((parent, child))

    parent_of: Dict[Entity, Entity] = {}
    for parent, child in deduped:
        if parent == child:
            raise CycleDetected(f"self-edge on {child.key!r}")
        prior = parent_of.get(child)
        if prior is not None and prior != parent:
            raise DuplicateParent(
                f"{child.key!r} has two parents: {prior.key!r} and {parent.key!r}"
            )
        parent_of[child] = parent

    nodes: Set[Entity] = {root}
    for parent, child in deduped:
        nodes.add(parent)
        nodes.add(child)

    # Walk every parent chain; in-degree <= 1 makes cycles plain loops.
    for start in nodes:
        slow: Set[Entity] = set()
        current = start
        while current in parent_of:
            if current in slow:
                path = ", ".join(sorted(entity.key for entity in slow))
                raise CycleDetected(f"cycle through: {path}")
            slow.add(current)
            current = parent_of[current]

    if root in parent_of:
        raise MultipleRoots(
            f"declared root {root.key!r} has parent {parent_of[root].key!r}"
        )
    orphans = sorted(
        entity.key for entity in nodes if entity not in parent_of and entity != root
    )
    if orphans:
        raise MultipleRoots(
            f"in-degree-zero nodes besides the root: {', '.join(orphans)}"
        )

    reached: Set[Entity] = set()
    stack = [root]
    child_lists: Dict[Entity, List[Entity]] = {}
    for parent, child in deduped:
        child_lists.setdefault(parent, []).append(child)
    while stack:
        current = stack.pop()
        if current in reached:
            continue
        reached.add(current)
        stack.extend(child_lists.get(current, ()))
    stranded = sorted(entity.key for entity in nodes - reached)
    if stranded:
        raise DisconnectedNode(f"unreachable from root: {', '.join(stranded)}")

    return Taxonomy(root=root, edges=tuple(deduped))


def ancestor_closure(taxonomy: Taxonomy) -> FrozenSet[Edge]:
    """All proper (ancestor, descendant) pairs; excludes identity pairs."""
    pairs: Set[Edge] = set()
    for node in taxonomy.nodes:
        current = node
        while current != taxonomy.root:
            parent = taxonomy.parent_map[current]
            pairs.add((parent, node))
            current = parent
    return frozenset(pairs)


def diff_edges(current: Taxonomy, previous: Taxonomy) -> FrozenSet[Edge]:
    """Edges in ``current`` but not ``previous``.

    Raises ``NonMonotoneUpdate`` if ``previous`` holds an edge that
    ``current`` lost: iterative growth may only add.
    """
    lost = previous.edge_set - current.edge_set
    if lost:
        described = ", ".join(
            sorted(f"({parent.key!r}, {child.key!r})" for parent, child in lost)
        )
        raise NonMonotoneUpdate(f"edges vanished between layers: {described}")
    return current.edge_set - previous.edge_set


def remove_edge_and_detach(taxonomy: Taxonomy, edge: Edge) -> Tuple[Taxonomy, Entity]:
    """Remove ``edge`` whose child is a leaf; return the new tree and child.

    Round-trips with re-adding the edge (equality is order-insensitive).
    """
    if edge not in taxonomy.edge_set:
        parent, child = edge
        raise EdgeNotFound(f"no edge ({parent.key!r}, {child.key!r})")
    parent, child = edge
    if not taxonomy.is_leaf(child):
        kept = ", ".join(sorted(entity.key for entity in taxonomy.children(child)))
        raise NotALeaf(f"{child.key!r} still has children: {kept}")
    remaining = tuple(pair for pair in taxonomy.edges if pair != edge)
    return Taxonomy(root=taxonomy.root, edges=remaining), child


def truncate_to_depth(taxonomy: Taxonomy, level: int) -> Taxonomy:
    """The sub-tree of nodes whose level (root = 1) is at most ``level``."""
    if level < 1:
        raise ValueError("level must be >= 1")
    kept = tuple(
        (parent, child)
        for parent, child in taxonomy.edges
        if taxonomy.depth(child) + 1 <= level
    )
    return Taxonomy(root=taxonomy.root, edges=kept)


@dataclass
class EntityPool:
    """Bookkeeping for one induction session.

    ``universe`` is the declared entity set V.  At any instant the placed
    nodes of the working tree plus ``remaining`` partition V, and
    ``dropped`` holds out-of-set strings the model invented (disjoint from
    V by construction).
    """

    universe: FrozenSet[Entity]
    remaining: Set[Entity]
    dropped: Set[Entity] = field(default_factory=set)

    @classmethod
    def for_induction(cls, entities: Sequence[Entity], root: Entity) -> "EntityPool":
        universe = frozenset(entities)
        return cls(universe=universe, remaining=set(universe) - {root})

    def take(self, entity: Entity) -> None:
        """Move an entity out of the pool because it was placed."""
        self.remaining.discard(entity)

    def give_back(self, entity: Entity) -> None:
        """Return a detached in-set entity to the pool."""
        if entity in self.universe:
            self.remaining.add(entity)

    def drop(self, entity: Entity) -> None:
        """Record an out-of-set entity pruned from model output."""
        if entity not in self.universe:
            self.dropped.add(entity)

    def conserves(self, placed: Iterable[Entity]) -> bool:
        """True iff placed and remaining partition the universe exactly."""
        placed_set = set(placed)
        return (
            placed_set | self.remaining == set(self.universe)
            and not placed_set & self.remaining
            and not self.dropped & set(self.universe)
        )
