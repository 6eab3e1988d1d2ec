"""Masked-language-model ranking service.

Given a query entity, candidate anchors, and slotted hypernymy
templates, scores each anchor by fill probability and returns
per-template rank tables for the induction-side filter client.
"""

from __future__ import annotations

import json
from importlib import resources

from .app import create_app
from .config import Settings, settings_from_env
from .scoring import BadTemplate, MaskedRanker, ScoringError

__version__ = "0.1.0"


def response_schema() -> dict:
    """The published JSON schema for /rank responses."""
    text = (
        resources.files("mlm_rank_service")
        .joinpath("schema/rank_response.schema.json")
        .read_text(encoding="utf-8")
    )
    return json.loads(text)


__all__ = [
    "BadTemplate",
    "MaskedRanker",
    "ScoringError",
    "Settings",
    "create_app",
    "response_schema",
    "settings_from_env",
]
