"""Deployment knobs, read from the environment.

None of these affect ranks; the model name picks the weights and the
rest is plumbing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping, Optional

DEFAULT_MODEL = "allenai/scibert_scivocab_uncased"
DEFAULT_PORT = 8601


@dataclass(frozen=True)
class Settings:
    model_name: str = DEFAULT_MODEL
    device: str = "cpu"
    port: int = DEFAULT_PORT


def settings_from_env(environ: Optional[Mapping[str, str]] = None) -> Settings:
    env = os.environ if environ is None else environ
    return Settings(
        model_name=env.get("MLM_RANK_MODEL", DEFAULT_MODEL),
        device=env.get("MLM_RANK_DEVICE", "cpu"),
        port=int(env.get("MLM_RANK_PORT", str(DEFAULT_PORT))),
    )
