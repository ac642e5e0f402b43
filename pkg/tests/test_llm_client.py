import socket
import threading
import time

import httpx
import pytest

from synthq.llm_client import (
    API_KEY_ENV,
    LlmAuthError,
    LlmClient,
    LlmNetworkError,
    LlmRequest,
    LlmResponseError,
    LlmSettings,
    complete,
    credentials_from_env,
)
from synthq.mock_llm import MockLlmServer


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_echo_and_wire_format():
    with MockLlmServer(lambda p: p.upper()) as srv:
        resp = complete(LlmRequest("hello", 0.3, 64, "m1"), srv.url, "secret")
    assert resp.text == "HELLO" and resp.latency_ms >= 0
    req = srv.requests[0]
    assert req["auth"] == "Bearer secret"
    assert req["body"] == {"model": "m1", "messages": [{"role": "user", "content": "hello"}],
                           "temperature": 0.3, "max_tokens": 64}


def test_endpoint_down_retries_then_fails():
    sleeps = []
    url = f"http://127.0.0.1:{_free_port()}/v1/chat/completions"
    with pytest.raises(LlmNetworkError):
        complete(LlmRequest("x"), url, "k", max_retries=3, backoff_seconds=0.1, sleep=sleeps.append)
    assert sleeps == [0.1, 0.2, 0.4]


def test_transient_status_recovers():
    sleeps = []
    with MockLlmServer("ok", status_script=[503, 429]) as srv:
        resp = complete(LlmRequest("x"), srv.url, "k", max_retries=3, sleep=sleeps.append)
    assert resp.text == "ok" and len(srv.requests) == 3 and len(sleeps) == 2


def test_auth_failure_not_retried():
    with MockLlmServer("ok", status_script=[401]) as srv:
        with pytest.raises(LlmAuthError):
            complete(LlmRequest("x"), srv.url, "bad", sleep=lambda s: pytest.fail("retried"))
    assert len(srv.requests) == 1


def test_client_error_not_retried():
    with MockLlmServer("ok", status_script=[400]) as srv:
        with pytest.raises(LlmResponseError):
            complete(LlmRequest("x"), srv.url, "k", sleep=lambda s: pytest.fail("retried"))


def test_bad_response_shape():
    transport = httpx.MockTransport(lambda req: httpx.Response(200, json={"choices": []}))
    with httpx.Client(transport=transport) as c:
        with pytest.raises(LlmResponseError):
            complete(LlmRequest("x"), "http://mock/", "k", client=c)


def test_request_validation():
    with pytest.raises(ValueError):
        LlmRequest("x", temperature=3.0)
    with pytest.raises(ValueError):
        LlmRequest("x", max_output_tokens=0)


def test_credentials_from_env(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(LlmAuthError):
        credentials_from_env()
    monkeypatch.setenv(API_KEY_ENV, "abc")
    assert credentials_from_env() == "abc"
    assert LlmClient(LlmSettings()).credentials == "abc"


def test_complete_many_order_and_concurrency():
    active = 0
    peak = 0
    lock = threading.Lock()

    def slow(prompt):
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        time.sleep(0.05)
        with lock:
            active -= 1
        return prompt[::-1]

    prompts = [f"p{i:02d}" for i in range(12)]
    with MockLlmServer(slow) as srv:
        client = LlmClient(LlmSettings(endpoint=srv.url, max_concurrency=3), credentials="k")
        out = client.complete_many(prompts)
    assert [r.text for r in out] == [p[::-1] for p in prompts]
    assert 1 < peak <= 3


def test_settings_from_mapping():
    s = LlmSettings.from_mapping({"model_name": "x", "max_retries": 1, "other": 5})
    assert s.model_name == "x" and s.max_retries == 1
