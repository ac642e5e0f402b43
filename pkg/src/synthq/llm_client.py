"""Chat-completion HTTP client shared by generation and judging.

This is the only module that talks to an LLM endpoint. Wire format (POST to
``endpoint``)::

    request:  {"model": ..., "messages": [{"role": "user", "content": prompt}],
               "temperature": ..., "max_tokens": ...}
    response: {"choices": [{"message": {"content": "<completion>"}}]}

The API key is read from the ``SYNTHQ_LLM_API_KEY`` environment variable and
sent as a bearer token.
"""

from __future__ import annotations

import logging
import os
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "SYNTHQ_LLM_API_KEY"


class LlmError(RuntimeError):
    """Base class for client failures."""


class LlmNetworkError(LlmError):
    pass


class LlmAuthError(LlmError):
    pass


class LlmResponseError(LlmError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    model_name: str = "default"

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    latency_ms: float


@dataclass(frozen=True)
class LlmSettings:
    endpoint: str = "http://127.0.0.1:8089/v1/chat/completions"
    model_name: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    max_retries: int = 3
    max_concurrency: int = 4
    backoff_seconds: float = 0.5
    timeout_seconds: float = 60.0

    @classmethod
    def from_mapping(cls, data: dict | None) -> LlmSettings:
        data = dict(data or {})
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


def credentials_from_env() -> str:
    key = os.environ.get(API_KEY_ENV)
    if not key:
        raise LlmAuthError(f"{API_KEY_ENV} is not set")
    return key


_RETRY_STATUS = {408, 429, 500, 502, 503, 504}


def complete(
    request: LlmRequest,
    endpoint: str,
    credentials: str,
    *,
    max_retries: int = 3,
    backoff_seconds: float = 0.5,
    timeout_seconds: float = 60.0,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> LlmResponse:
    """Send one prompt; transient failures are retried with exponential backoff.

    Authentication failures (401/403) are raised immediately.
    """
    payload = {
        "model": request.model_name,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    }
    headers = {"Authorization": f"Bearer {credentials}"}
    own = client is None
    client = client or httpx.Client(timeout=timeout_seconds)
    try:
        attempt = 0
        while True:
            start = time.perf_counter()
            try:
                resp = client.post(endpoint, json=payload, headers=headers)
            except httpx.TransportError as exc:
                err: LlmError = LlmNetworkError(f"{endpoint}: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise LlmAuthError(f"{endpoint}: HTTP {resp.status_code}")
                if resp.status_code in _RETRY_STATUS:
                    err = LlmNetworkError(f"{endpoint}: HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise LlmResponseError(f"{endpoint}: HTTP {resp.status_code}")
                else:
                    latency = (time.perf_counter() - start) * 1000.0
                    return LlmResponse(_completion_text(resp), latency)
            if attempt >= max_retries:
                raise LlmNetworkError(f"{err} (after {attempt} retries)")
            delay = backoff_seconds * (2 ** attempt)
            logger.info("LLM request failed (%s); retry %d in %.2fs", err, attempt + 1, delay)
            sleep(delay)
            attempt += 1
    finally:
        if own:
            client.close()


def _completion_text(resp: httpx.Response) -> str:
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise LlmResponseError(f"unexpected response shape: {exc!r}") from None


class LlmClient:
    """Settings-bound wrapper with bounded concurrency for batches."""

    def __init__(self, settings: LlmSettings = LlmSettings(), credentials: str | None = None):
        self.settings = settings
        self.credentials = credentials if credentials is not None else credentials_from_env()

    def request(self, prompt: str) -> LlmRequest:
        s = self.settings
        return LlmRequest(prompt, s.temperature, s.max_output_tokens, s.model_name)

    def complete(self, prompt: str) -> LlmResponse:
        s = self.settings
        return complete(self.request(prompt), s.endpoint, self.credentials,
                        max_retries=s.max_retries, backoff_seconds=s.backoff_seconds,
                        timeout_seconds=s.timeout_seconds)

    def complete_many(self, prompts: Sequence[str]) -> list[LlmResponse]:
        """Results in input order; at most ``max_concurrency`` requests in flight."""
        workers = max(1, int(self.settings.max_concurrency))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.complete, prompts))
