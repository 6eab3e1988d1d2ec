"""Entry point: load the configured model, then serve."""

from __future__ import annotations

import uvicorn

from .app import create_app
from .config import settings_from_env
from .scoring import MaskedRanker


def main() -> None:
    settings = settings_from_env()
    ranker = MaskedRanker.load(settings.model_name, device=settings.device)
    uvicorn.run(create_app(ranker), host="0.0.0.0", port=settings.port)


if __name__ == "__main__":
    main()
