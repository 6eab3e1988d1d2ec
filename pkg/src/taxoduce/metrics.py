"""Precision/recall/F1 over three views of a taxonomy.

Edge metrics compare parent-child pairs, ancestor metrics compare the
proper transitive closure, and node metrics compare entity sets (root
included).  Matching is by normalized entity key throughout.  An empty
predicted set makes precision 0 by convention; the raw set sizes ride
along in ``counts`` so the convention is visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import fmean
from typing import Dict, FrozenSet, List, Sequence, Tuple

from .taxonomy import Taxonomy, ancestor_closure


class MetricsError(Exception):
    pass


class EmptyReportList(MetricsError):
    pass


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> Dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class SetCounts:
    predicted: int
    gold: int
    common: int

    def as_dict(self) -> Dict[str, int]:
        return {"predicted": self.predicted, "gold": self.gold, "common": self.common}


@dataclass(frozen=True)
class MetricsReport:
    ancestor: PRF
    edge: PRF
    node: PRF
    counts: Dict[str, SetCounts]

    def as_dict(self) -> Dict[str, object]:
        return {
            "ancestor": self.ancestor.as_dict(),
            "edge": self.edge.as_dict(),
            "node": self.node.as_dict(),
            "counts": {name: count.as_dict() for name, count in self.counts.items()},
        }


def prf_from_sets(predicted: FrozenSet, gold: FrozenSet) -> Tuple[PRF, SetCounts]:
    common = len(predicted & gold)
    precision = common / len(predicted) if predicted else 0.0
    recall = common / len(gold) if gold else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return PRF(precision, recall, f1), SetCounts(len(predicted), len(gold), common)


def evaluate(predicted: Taxonomy, gold: Taxonomy) -> MetricsReport:
    """Score ``predicted`` against ``gold`` on all three granularities."""
    predicted_edges = frozenset(
        (parent.key, child.key) for parent, child in predicted.edge_set
    )
    gold_edges = frozenset((parent.key, child.key) for parent, child in gold.edge_set)
    predicted_ancestors = frozenset(
        (parent.key, child.key) for parent, child in ancestor_closure(predicted)
    )
    gold_ancestors = frozenset(
        (parent.key, child.key) for parent, child in ancestor_closure(gold)
    )
    predicted_nodes = frozenset(entity.key for entity in predicted.nodes)
    gold_nodes = frozenset(entity.key for entity in gold.nodes)

    ancestor, ancestor_counts = prf_from_sets(predicted_ancestors, gold_ancestors)
    edge, edge_counts = prf_from_sets(predicted_edges, gold_edges)
    node, node_counts = prf_from_sets(predicted_nodes, gold_nodes)
    return MetricsReport(
        ancestor=ancestor,
        edge=edge,
        node=node,
        counts={
            "ancestor": ancestor_counts,
            "edge": edge_counts,
            "node": node_counts,
        },
    )


def aggregate(reports: Sequence[MetricsReport], micro: bool = False) -> MetricsReport:
    """Combine per-record reports.

    Macro (default) averages the nine metric values; micro recomputes
    them from the summed counts.  Counts are summed either way.
    """
    if not reports:
        raise EmptyReportList("nothing to aggregate")

    summed: Dict[str, SetCounts] = {}
    for name in ("ancestor", "edge", "node"):
        summed[name] = SetCounts(
            predicted=sum(report.counts[name].predicted for report in reports),
            gold=sum(report.counts[name].gold for report in reports),
            common=sum(report.counts[name].common for report in reports),
        )

    if micro:
        views = {}
        for name in ("ancestor", "edge", "node"):
            count = summed[name]
            precision = count.common / count.predicted if count.predicted else 0.0
            recall = count.common / count.gold if count.gold else 0.0
            f1 = (
                2 * precision * recall / (precision + recall)
                if precision + recall > 0
                else 0.0
            )
            views[name] = PRF(precision, recall, f1)
    else:
        views = {
            name: PRF(
                precision=fmean(getattr(report, name).precision for report in reports),
                recall=fmean(getattr(report, name).recall for report in reports),
                f1=fmean(getattr(report, name).f1 for report in reports),
            )
            for name in ("ancestor", "edge", "node")
        }

    return MetricsReport(
        ancestor=views["ancestor"],
        edge=views["edge"],
        node=views["node"],
        counts=summed,
    )
