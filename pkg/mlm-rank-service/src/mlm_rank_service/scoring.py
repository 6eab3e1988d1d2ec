"""Anchor scoring with a masked-language-model fill head.

A candidate anchor is scored under a template by substituting the query
into its query slot, replacing the anchor slot with one mask token per
wordpiece of the candidate, and taking the mean log-probability of the
candidate's wordpieces at those masked positions.  Multi-word anchors
therefore cost one forward pass each; ranks do not depend on batching
or device.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import fmean
from typing import Dict, List, Sequence

import torch

QUERY_SLOT = "<query>"
ANCHOR_SLOT = "<anchor>"
SCORING_POLICY = "mean-logprob"


class ScoringError(Exception):
    pass


class BadTemplate(ScoringError):
    pass


def validate_template(template: str) -> None:
    if template.count(QUERY_SLOT) != 1 or template.count(ANCHOR_SLOT) != 1:
        raise BadTemplate(
            f"template {template!r} must use {QUERY_SLOT} and "
            f"{ANCHOR_SLOT} exactly once"
        )


@dataclass(frozen=True)
class RankTables:
    """One rank bijection and one probability table per template."""

    per_template_ranks: Dict[str, Dict[str, int]]
    probabilities: Dict[str, Dict[str, float]]


class MaskedRanker:
    """Deterministic scorer over a shared read-only model.

    The model is put in evaluation mode once; every request runs under
    ``no_grad`` so repeated identical requests produce identical floats.
    """

    def __init__(self, model, tokenizer, model_name: str, device: str = "cpu"):
        self.model = model.to(device)
        self.model.eval()
        self.tokenizer = tokenizer
        self.model_name = model_name
        self.device = device

    @classmethod
    def load(cls, model_name: str, device: str = "cpu") -> "MaskedRanker":
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(model_name)
        model = AutoModelForMaskedLM.from_pretrained(model_name)
        return cls(model, tokenizer, model_name=model_name, device=device)

    def mean_logprob(self, template: str, query: str, candidate: str) -> float:
        """Mean masked log-probability of ``candidate`` in the anchor slot."""
        validate_template(template)
        prefix, suffix = template.replace(QUERY_SLOT, query).split(ANCHOR_SLOT)

        def encode(text: str) -> List[int]:
            return self.tokenizer(text, add_special_tokens=False)["input_ids"]

        pieces = encode(candidate)
        if not pieces:
            raise ScoringError(f"candidate {candidate!r} tokenizes to nothing")
        prefix_ids = encode(prefix)
        ids = (
            [self.tokenizer.cls_token_id]
            + prefix_ids
            + [self.tokenizer.mask_token_id] * len(pieces)
            + encode(suffix)
            + [self.tokenizer.sep_token_id]
        )
        start = 1 + len(prefix_ids)
        with torch.no_grad():
            logits = self.model(
                input_ids=torch.tensor([ids], device=self.device)
            ).logits[0]
        window = torch.log_softmax(logits[start : start + len(pieces)], dim=-1)
        return fmean(float(window[i, piece]) for i, piece in enumerate(pieces))

    def rank(
        self,
        query: str,
        candidates: Sequence[str],
        templates: Sequence[str],
    ) -> RankTables:
        """Score every candidate under every template.

        Ranks sort scores descending, ties broken lexicographically, so
        each table is a bijection onto 1..len(candidates).
        """
        ranks: Dict[str, Dict[str, int]] = {}
        probabilities: Dict[str, Dict[str, float]] = {}
        for template in templates:
            scores = {
                candidate: self.mean_logprob(template, query, candidate)
                for candidate in candidates
            }
            ordered: List[str] = sorted(scores, key=lambda c: (-scores[c], c))
            ranks[template] = {c: i + 1 for i, c in enumerate(ordered)}
            probabilities[template] = {c: math.exp(scores[c]) for c in ordered}
        return RankTables(per_template_ranks=ranks, probabilities=probabilities)
