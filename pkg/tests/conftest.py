"""Shared fixtures and strategies for the suite."""

from __future__ import annotations

import random
from typing import List, Tuple

import pytest
from hypothesis import strategies as st

from taxoduce.datasets import DatasetRecord, fixture_path, load_dataset
from taxoduce.taxonomy import Entity, Taxonomy, build_taxonomy

from oracles import random_parent_array


@pytest.fixture(scope="session")
def demo_pair_records() -> List[DatasetRecord]:
    return load_dataset(fixture_path("datasets/demo_pair.json"))


@pytest.fixture(scope="session")
def maneuver(demo_pair_records) -> DatasetRecord:
    return next(record for record in demo_pair_records if record.name == "maneuver")


@pytest.fixture(scope="session")
def neuropteron(demo_pair_records) -> DatasetRecord:
    return next(record for record in demo_pair_records if record.name == "neuropteron")


@pytest.fixture(scope="session")
def aerobatics() -> DatasetRecord:
    return load_dataset(fixture_path("datasets/aerobatics.json"))[0]


@pytest.fixture(scope="session")
def cutlery() -> DatasetRecord:
    return load_dataset(fixture_path("datasets/cutlery.json"))[0]


def tree_from_pairs(pairs: List[Tuple[str, str]], root: str = "n0") -> Taxonomy:
    return build_taxonomy(
        Entity(root), [(Entity(parent), Entity(child)) for parent, child in pairs]
    )


def random_tree(
    rng: random.Random,
    max_nodes: int,
    max_depth: int = 0,
) -> Taxonomy:
    size = rng.randint(1, max_nodes)
    if size == 1:
        return build_taxonomy(Entity("n0"), [])
    return tree_from_pairs(random_parent_array(rng, size, max_depth=max_depth))


@st.composite
def taxonomies(draw, max_nodes: int = 20) -> Taxonomy:
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    return random_tree(random.Random(seed), max_nodes)
