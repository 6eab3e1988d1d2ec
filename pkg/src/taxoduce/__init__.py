"""taxoduce: taxonomy induction with chat models, plus the tooling to judge it.

The package grows a taxonomy from a flat entity list by prompting a chat
model level by level, optionally auditing every new edge with an ensemble
of hypernymy templates over a ranking scorer, and scores predictions
against gold trees with ancestor, edge, and node F1.  A FastAPI service
exposes the whole pipeline; the bundled CLI is a thin client for it.
"""

from .taxonomy import Entity, Taxonomy, build_taxonomy
from .outline import parse_outline, render_outline
from .metrics import evaluate
from .engine import InductionConfig, induce_col, induce_hf

__all__ = [
    "Entity",
    "Taxonomy",
    "build_taxonomy",
    "parse_outline",
    "render_outline",
    "evaluate",
    "InductionConfig",
    "induce_col",
    "induce_hf",
]
