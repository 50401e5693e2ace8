"""Language-model backends behind one ``complete(request)`` interface.

Three implementations ship: an OpenAI-compatible chat-completions client, a
replay backend that serves recorded responses in order, and a scripted mock
for tests.  Transport problems surface as :class:`BackendError`, which the
retry helper treats as transient; :class:`BackendFatal` is never retried.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union

log = logging.getLogger(__name__)

API_KEY_ENV = "PSFORGE_API_KEY"
FALLBACK_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1"

RETRY_ATTEMPTS = 3
RETRY_DELAYS = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class LlmRequest:
    system_text: str
    user_text: str
    max_output_tokens: int = 4096
    temperature: float = 1.0
    model: str = "gpt-4o"


@dataclass(frozen=True)
class LlmResponse:
    text: str
    finish_reason: str = "stop"
    usage: dict = field(default_factory=dict)


class BackendError(Exception):
    """A transient failure (network, timeout, 5xx, rate limit)."""


class BackendFatal(BackendError):
    """A failure that retrying cannot fix (bad config, replay exhausted)."""


class Backend(Protocol):
    name: str

    def complete(self, request: LlmRequest) -> LlmResponse: ...


def resolve_api_key(configured: Optional[str] = None) -> Optional[str]:
    """Environment overrides configuration; the key itself is never logged."""
    return os.environ.get(API_KEY_ENV) or os.environ.get(FALLBACK_KEY_ENV) or configured


class HttpBackend:
    """Client for any OpenAI-compatible ``/chat/completions`` endpoint."""

    name = "http"

    def __init__(self, endpoint: str = DEFAULT_ENDPOINT, api_key: Optional[str] = None,
                 timeout: float = 120.0, client=None):
        import httpx

        self.endpoint = endpoint.rstrip("/")
        self._api_key = resolve_api_key(api_key)
        if not self._api_key:
            raise BackendFatal(
                f"no API key: set {API_KEY_ENV} (or {FALLBACK_KEY_ENV}) or api_key in the config")
        self._httpx = httpx
        self._client = client or httpx.Client(timeout=timeout)

    def __repr__(self) -> str:
        return f"HttpBackend(endpoint={self.endpoint!r}, api_key=***)"

    def complete(self, request: LlmRequest) -> LlmResponse:
        payload = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        try:
            reply = self._client.post(f"{self.endpoint}/chat/completions",
                                      json=payload, headers=headers)
        except self._httpx.HTTPError as exc:
            raise BackendError(f"transport error: {type(exc).__name__}") from None
        if reply.status_code == 429 or reply.status_code >= 500:
            raise BackendError(f"server returned HTTP {reply.status_code}")
        if reply.status_code >= 400:
            raise BackendFatal(f"request rejected with HTTP {reply.status_code}")
        try:
            data = reply.json()
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from None
        return LlmResponse(text, choice.get("finish_reason") or "stop", data.get("usage") or {})


class ReplayBackend:
    """Serves recorded response texts in order; running out is fatal."""

    name = "replay"

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self._next = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ReplayBackend":
        return cls(load_session(path))

    def complete(self, request: LlmRequest) -> LlmResponse:
        with self._lock:
            if self._next >= len(self._responses):
                raise BackendFatal(
                    f"replay exhausted after {len(self._responses)} recorded responses")
            text = self._responses[self._next]
            self._next += 1
        return LlmResponse(text, "stop", {})


Script = Union[Sequence[str], Callable[[LlmRequest, int], str]]


class ScriptedBackend:
    """Test backend: answers from a list (or a function of the call number).

    With ``repeat_last`` the final scripted answer is reused forever; without
    it, an unexpected extra call fails loudly.  Scripted entries that are
    exception instances are raised instead of returned, which lets tests
    simulate transport failures.
    """

    name = "mock"

    def __init__(self, script: Script, repeat_last: bool = True):
        self._script = script
        self.repeat_last = repeat_last
        self.requests: list[LlmRequest] = []

    @property
    def calls(self) -> int:
        return len(self.requests)

    def complete(self, request: LlmRequest) -> LlmResponse:
        n = len(self.requests)
        self.requests.append(request)
        if callable(self._script):
            answer = self._script(request, n)
        else:
            if n >= len(self._script):
                if not self.repeat_last or not self._script:
                    raise BackendFatal(f"unexpected backend call #{n + 1}")
                n = len(self._script) - 1
            answer = self._script[n]
        if isinstance(answer, BaseException):
            raise answer
        return LlmResponse(answer, "stop", {})


def load_session(path: Union[str, Path]) -> list[str]:
    """Read a replay file: a JSON list of response texts (or a session record)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data.get("responses", [])
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise BackendFatal(f"{path}: expected a JSON list of response strings")
    return data


def complete_with_retry(
    backend: Backend,
    request: LlmRequest,
    attempts: int = RETRY_ATTEMPTS,
    delays: Sequence[float] = RETRY_DELAYS,
    sleep: Callable[[float], None] = time.sleep,
) -> LlmResponse:
    """Call the backend, backing off exponentially between transient failures.

    After ``attempts`` consecutive failures the last error is re-raised.
    """
    for attempt in range(attempts):
        try:
            return backend.complete(request)
        except BackendFatal:
            raise
        except BackendError as exc:
            if attempt + 1 == attempts:
                raise
            delay = delays[min(attempt, len(delays) - 1)]
            log.warning("backend call failed (%s); retrying in %.0fs", exc, delay)
            sleep(delay)
    raise AssertionError("unreachable")


def backend_from_spec(spec: str, endpoint: str = DEFAULT_ENDPOINT,
                      api_key: Optional[str] = None) -> Callable[[], Backend]:
    """Factory for ``http``, ``replay:FILE`` or ``mock:FILE`` backend specs.

    Returns a zero-argument constructor so that every trial gets a fresh
    backend (replays restart from the first response).
    """
    kind, _, arg = spec.partition(":")
    if kind == "http":
        HttpBackend(endpoint, api_key)  # fail fast on missing key
        return lambda: HttpBackend(endpoint, api_key)
    if kind in ("replay", "mock"):
        if not arg:
            raise BackendFatal(f"backend '{kind}' needs a file: {kind}:FILE")
        try:
            responses = load_session(arg)
        except (OSError, ValueError) as exc:
            raise BackendFatal(f"cannot read {arg}: {exc}") from None
        if kind == "replay":
            return lambda: ReplayBackend(responses)
        return lambda: ScriptedBackend(responses, repeat_last=True)
    raise BackendFatal(f"unknown backend '{spec}' (use http, replay:FILE or mock:FILE)")
