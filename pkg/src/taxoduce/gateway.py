"""Chat-completion backends.

Two implementations behind one protocol: an HTTP client for
OpenAI-compatible chat endpoints, and a scripted replay backend that
serves canned replies from NDJSON session records.  Replay matches each
request by a digest of the conversation so far; a mismatch falls back to
positional replay with a diagnostic, which keeps recorded sessions usable
after harmless prompt tweaks.

API keys are read from the environment variable named in the config and
never appear in configs or logs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Protocol, Sequence, Tuple

import httpx

from .prompts import ChatMessage

logger = logging.getLogger(__name__)

DIGEST_LENGTH = 16


class GatewayError(Exception):
    pass


class AuthError(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class Timeout(GatewayError):
    pass


class UpstreamError(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


class ScriptExhausted(GatewayError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: Tuple[ChatMessage, ...]
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature outside [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "http" | "scripted"
    endpoint_url: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout_seconds: float = 30.0
    retry_count: int = 3
    transcript_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("http", "scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if not 0 <= self.retry_count <= 5:
            raise ValueError("retry_count outside [0, 5]")
        if self.kind == "http" and not self.endpoint_url:
            raise ValueError("http backend needs endpoint_url")
        if self.kind == "scripted" and not self.transcript_path:
            raise ValueError("scripted backend needs transcript_path")


def request_digest(messages: Sequence[ChatMessage]) -> str:
    """Stable digest over role+content of every message, in order."""
    hasher = hashlib.sha256()
    for message in messages:
        hasher.update(message.role.encode("utf-8"))
        hasher.update(b"\x1f")
        hasher.update(message.content.encode("utf-8"))
        hasher.update(b"\x1e")
    return hasher.hexdigest()[:DIGEST_LENGTH]


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


@dataclass(frozen=True)
class ScriptRecord:
    reply: str
    digest: Optional[str] = None


class ScriptedBackend:
    """Replays recorded replies in order.

    Records carrying a digest are checked against the incoming request;
    on mismatch the reply is still served positionally and the mismatch
    lands in ``diagnostics``.  Running past the end raises
    ``ScriptExhausted``.
    """

    def __init__(self, records: Sequence[ScriptRecord]):
        self._records = list(records)
        self._cursor = 0
        self.diagnostics: List[str] = []
        self.requests_served = 0

    @classmethod
    def from_path(cls, path: str) -> "ScriptedBackend":
        return cls(load_script(path))

    def complete(self, request: ChatRequest) -> str:
        if self._cursor >= len(self._records):
            raise ScriptExhausted(
                f"script ended after {len(self._records)} replies"
            )
        record = self._records[self._cursor]
        digest = request_digest(request.messages)
        if record.digest and record.digest != digest:
            note = (
                f"reply {self._cursor}: digest {digest} != recorded "
                f"{record.digest}; served positionally"
            )
            self.diagnostics.append(note)
            logger.warning(note)
        self._cursor += 1
        self.requests_served += 1
        return record.reply


def load_script(path: str) -> List[ScriptRecord]:
    records: List[ScriptRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as error:
                raise MalformedResponse(
                    f"{path}:{line_no}: bad script line: {error}"
                ) from error
            if "reply" not in payload:
                raise MalformedResponse(f"{path}:{line_no}: missing 'reply'")
            records.append(
                ScriptRecord(reply=payload["reply"], digest=payload.get("digest"))
            )
    return records


def dump_script(records: Iterable[ScriptRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            payload = {"digest": record.digest, "reply": record.reply}
            handle.write(json.dumps(payload, ensure_ascii=False) + "\n")


class SessionRecorder:
    """Wraps a backend; captures (digest, reply) pairs for later replay."""

    def __init__(self, inner: Backend):
        self._inner = inner
        self.records: List[ScriptRecord] = []

    def complete(self, request: ChatRequest) -> str:
        reply = self._inner.complete(request)
        self.records.append(
            ScriptRecord(reply=reply, digest=request_digest(request.messages))
        )
        return reply

    def save(self, path: str) -> None:
        dump_script(self.records, path)


class HttpBackend:
    """Client for OpenAI-compatible ``/chat/completions`` endpoints.

    Retries timeouts, 429s, and 5xx with exponential backoff plus jitter;
    401/403 fail immediately.  ``transport`` and ``sleeper`` exist for
    tests.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleeper: Callable[[float], None] = time.sleep,
        backoff_base: float = 0.5,
    ):
        if config.kind != "http":
            raise ValueError("HttpBackend needs an http config")
        self._config = config
        self._sleeper = sleeper
        self._backoff_base = backoff_base
        headers = {}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if not key:
                raise AuthError(
                    f"environment variable {config.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(
            timeout=config.timeout_seconds,
            transport=transport,
            headers=headers,
        )
        self.requests_served = 0

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": request.model_name,
            "messages": [
                {"role": message.role, "content": message.content}
                for message in request.messages
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        attempts = self._config.retry_count + 1
        last_error: GatewayError = UpstreamError("no attempt made")
        for attempt in range(attempts):
            try:
                response = self._client.post(self._config.endpoint_url, json=payload)
            except httpx.TimeoutException as error:
                last_error = Timeout(str(error))
            except httpx.HTTPError as error:
                last_error = UpstreamError(str(error))
            else:
                if response.status_code in (401, 403):
                    raise AuthError(f"endpoint returned {response.status_code}")
                if response.status_code == 429:
                    last_error = RateLimited("endpoint returned 429")
                elif response.status_code >= 500:
                    last_error = UpstreamError(
                        f"endpoint returned {response.status_code}"
                    )
                else:
                    self.requests_served += 1
                    return _extract_content(response)
            if attempt < attempts - 1:
                delay = self._backoff_base * (2**attempt)
                self._sleeper(delay + random.uniform(0, self._backoff_base))
        raise last_error


def _extract_content(response: httpx.Response) -> str:
    try:
        body = response.json()
        content = body["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as error:
        raise MalformedResponse(f"cannot extract reply: {error}") from error
    if not isinstance(content, str):
        raise MalformedResponse("reply content is not a string")
    return content


def make_backend(
    config: BackendConfig,
    transport: Optional[httpx.BaseTransport] = None,
) -> Backend:
    """Build the backend an endpoint config describes.

    Scripted backends are stateful (a replay cursor), so callers hold on
    to the instance for the whole session.
    """
    if config.kind == "scripted":
        return ScriptedBackend.from_path(config.transcript_path)
    return HttpBackend(config, transport=transport)


def complete(request: ChatRequest, backend: Backend) -> str:
    return backend.complete(request)
