"""HTTP surface: a health probe and the /rank endpoint.

Requests are stateless and the model is read-only, so concurrent calls
need no locking.  Until a ranker is attached both endpoints answer 503.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exception_handlers import request_validation_exception_handler
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from .scoring import SCORING_POLICY, MaskedRanker, ScoringError


class RankRequest(BaseModel):
    query: str = Field(min_length=1)
    candidates: List[str] = Field(min_length=1)
    templates: List[str] = Field(min_length=1)

    @field_validator("candidates")
    @classmethod
    def _distinct_nonempty(cls, value: List[str]) -> List[str]:
        if any(not candidate for candidate in value):
            raise ValueError("candidates must be non-empty strings")
        if len(set(value)) != len(value):
            raise ValueError("candidates must be distinct")
        return value

    @field_validator("templates")
    @classmethod
    def _nonempty(cls, value: List[str]) -> List[str]:
        if any(not template for template in value):
            raise ValueError("templates must be non-empty strings")
        return value


class RankResponse(BaseModel):
    scoring: str
    per_template_ranks: Dict[str, Dict[str, int]]
    probabilities: Dict[str, Dict[str, float]]


def create_app(ranker: Optional[MaskedRanker] = None) -> FastAPI:
    """The service; ``ranker=None`` models the not-yet-loaded state."""
    app = FastAPI(title="mlm-rank-service", version="0.1.0")
    app.state.ranker = ranker

    @app.exception_handler(RequestValidationError)
    async def _body_errors(request: Request, exc: RequestValidationError):
        # An unparseable body is a transport problem, not a schema
        # violation; answer 400 and keep 422 for well-formed bad input.
        if any(error.get("type") == "json_invalid" for error in exc.errors()):
            return JSONResponse(
                status_code=400, content={"detail": "malformed JSON body"}
            )
        return await request_validation_exception_handler(request, exc)

    @app.get("/health")
    def health():
        current: Optional[MaskedRanker] = app.state.ranker
        if current is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {"status": "ok", "model_name": current.model_name}

    @app.post("/rank", response_model=RankResponse)
    def rank(request: RankRequest) -> RankResponse:
        current: Optional[MaskedRanker] = app.state.ranker
        if current is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        if request.query in set(request.candidates):
            raise HTTPException(
                status_code=422,
                detail=f"query {request.query!r} cannot be a candidate",
            )
        try:
            tables = current.rank(
                request.query, request.candidates, request.templates
            )
        except ScoringError as error:
            raise HTTPException(status_code=422, detail=str(error)) from error
        return RankResponse(
            scoring=SCORING_POLICY,
            per_template_ranks=tables.per_template_ranks,
            probabilities=tables.probabilities,
        )

    return app
