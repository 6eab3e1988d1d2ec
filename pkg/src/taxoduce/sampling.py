"""Seeded sub-taxonomy sampling for benchmark construction.

Grows a connected, root-anchored subtree by repeatedly picking a uniform
random edge from the frontier (edges leading from sampled nodes to
unsampled children) until the target size is reached.  The same seed
always yields the same subtree.
"""

from __future__ import annotations

import random
from typing import List, Set

from .taxonomy import Edge, Entity, Taxonomy, build_taxonomy


class SamplingError(Exception):
    pass


class TargetTooLarge(SamplingError):
    pass


def sample_subtaxonomy(gold: Taxonomy, target_size: int, seed: int) -> Taxonomy:
    """A random connected subtree of ``gold`` with exactly ``target_size`` nodes."""
    if target_size < 1:
        raise SamplingError("target_size must be >= 1")
    if target_size > len(gold.nodes):
        raise TargetTooLarge(
            f"asked for {target_size} nodes; the source tree has {len(gold.nodes)}"
        )
    rng = random.Random(seed)
    sampled: Set[Entity] = {gold.root}
    frontier: List[Edge] = [(gold.root, child) for child in gold.children(gold.root)]
    while len(sampled) < target_size:
        pick = frontier.pop(rng.randrange(len(frontier)))
        _, child = pick
        sampled.add(child)
        frontier.extend((child, grandchild) for grandchild in gold.children(child))

    kept = tuple(
        (parent, child)
        for parent, child in gold.edges
        if parent in sampled and child in sampled
    )
    return build_taxonomy(gold.root, kept)
