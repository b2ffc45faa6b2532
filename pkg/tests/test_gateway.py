import json
import threading
import time

import httpx
import pytest

from spectracast.gateway import (
    BackendConfig,
    ChatGateway,
    ChatMessage,
    ChatRequest,
    DuplicateBackendError,
    GatewayTimeout,
    MalformedResponseError,
    MissingCredentialError,
    TransportFailure,
    UnknownBackendError,
    default_mock_responder,
)


def _mock_gateway(n=1, **kwargs):
    gw = ChatGateway(**kwargs)
    gw.register_mocks(n)
    return gw


def test_mock_determinism():
    gw = _mock_gateway()
    req = ChatRequest(
        backend_id="m1",
        system="Phase 3: Caption Generation (standard_report)",
        messages=(ChatMessage(role="user", content='FACTS: {"direction": "up"}'),),
    )
    a = gw.complete(req)
    b = gw.complete(req)
    assert a.content == b.content
    assert a.backend_id == "m1"


def test_mock_pure_function_of_seed():
    content = {}
    for seed in (1, 2):
        msg = (ChatMessage(role="user", content='FACTS: {"direction": "down"}'),)
        content[seed] = default_mock_responder(
            "Phase 3: Caption Generation (casual)", msg, seed, "none"
        )
    assert content[1] != content[2]


def test_register_duplicate_rejected():
    gw = _mock_gateway()
    with pytest.raises(DuplicateBackendError):
        gw.register_backend(BackendConfig(backend_id="m1", mock=True))


def test_unknown_backend():
    gw = _mock_gateway()
    with pytest.raises(UnknownBackendError):
        gw.complete(ChatRequest(backend_id="nope", system="x"))


def test_request_validation():
    with pytest.raises(Exception):
        ChatRequest(backend_id="m1")  # no system, no messages
    with pytest.raises(Exception):
        ChatRequest(backend_id="m1", system="x", max_tokens=0)


def test_missing_credential_names_variable(monkeypatch):
    monkeypatch.delenv("SPECTRACAST_LIVE1_KEY", raising=False)
    gw = ChatGateway()
    gw.register_backend(
        BackendConfig(backend_id="live1", endpoint="https://example.invalid/v1/chat", model="x")
    )
    with pytest.raises(MissingCredentialError, match="SPECTRACAST_LIVE1_KEY"):
        gw.complete(ChatRequest(backend_id="live1", system="hello"))


def _live_gateway(handler, monkeypatch, backoff_base=0.0):
    monkeypatch.setenv("SPECTRACAST_LIVE1_KEY", "test-key")
    gw = ChatGateway(transport=httpx.MockTransport(handler), backoff_base=backoff_base)
    gw.register_backend(
        BackendConfig(backend_id="live1", endpoint="https://api.test/v1/chat", model="m")
    )
    return gw


def test_live_backend_success(monkeypatch):
    seen = {}

    def handler(request):
        seen["payload"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(
            200, json={"choices": [{"message": {"content": "hi"}, "finish_reason": "stop"}]}
        )

    gw = _live_gateway(handler, monkeypatch)
    resp = gw.complete(
        ChatRequest(backend_id="live1", system="sys", messages=(ChatMessage("user", "q"),))
    )
    assert resp.content == "hi"
    assert not resp.truncated
    assert seen["auth"] == "Bearer test-key"
    assert seen["payload"]["messages"][0] == {"role": "system", "content": "sys"}
    assert seen["payload"]["model"] == "m"


def test_transport_error_retries_then_fails(monkeypatch):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        raise httpx.ConnectError("unreachable")

    gw = _live_gateway(handler, monkeypatch)
    with pytest.raises(TransportFailure):
        gw.complete(ChatRequest(backend_id="live1", system="x", timeout=5.0))
    assert calls["n"] == 3  # max attempts


def test_timeout_error(monkeypatch):
    def handler(request):
        raise httpx.ReadTimeout("slow")

    gw = _live_gateway(handler, monkeypatch)
    with pytest.raises(GatewayTimeout):
        gw.complete(ChatRequest(backend_id="live1", system="x", timeout=0.5))


def test_retry_then_success(monkeypatch):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            return httpx.Response(500, text="oops")
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = _live_gateway(handler, monkeypatch)
    resp = gw.complete(ChatRequest(backend_id="live1", system="x", timeout=5.0))
    assert resp.content == "ok"
    assert calls["n"] == 3


def test_client_error_fails_fast(monkeypatch):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(401, text="denied")

    gw = _live_gateway(handler, monkeypatch)
    with pytest.raises(TransportFailure, match="401"):
        gw.complete(ChatRequest(backend_id="live1", system="x"))
    assert calls["n"] == 1


def test_malformed_body(monkeypatch):
    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {}}]})

    gw = _live_gateway(handler, monkeypatch)
    with pytest.raises(MalformedResponseError):
        gw.complete(ChatRequest(backend_id="live1", system="x"))


def test_concurrent_backends_do_not_serialize(monkeypatch):
    monkeypatch.setenv("SPECTRACAST_A_KEY", "k")
    monkeypatch.setenv("SPECTRACAST_B_KEY", "k")

    def handler(request):
        time.sleep(0.15)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = ChatGateway(transport=httpx.MockTransport(handler))
    gw.register_backend(BackendConfig(backend_id="a", endpoint="https://api.test/a", model="m"))
    gw.register_backend(BackendConfig(backend_id="b", endpoint="https://api.test/b", model="m"))

    results = {}

    def run(bid):
        results[bid] = gw.complete(ChatRequest(backend_id=bid, system="x", timeout=5.0))

    start = time.monotonic()
    threads = [threading.Thread(target=run, args=(b,)) for b in ("a", "b")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.monotonic() - start
    assert results["a"].content == "ok" and results["b"].content == "ok"
    assert elapsed < 0.29  # two 0.15 s calls overlapped


def test_rate_limit_bucket_throttles():
    gw = ChatGateway()
    gw.register_backend(
        BackendConfig(backend_id="m1", mock=True, seed=1, requests_per_second=50.0)
    )
    req = ChatRequest(backend_id="m1", system="generic", messages=(ChatMessage("user", "x"),))
    start = time.monotonic()
    for _ in range(60):
        gw.complete(req)
    # 60 requests at 50 rps with a 50-token initial burst: ~0.2 s minimum
    assert time.monotonic() - start >= 0.15


def test_phase1_mock_script():
    msgs = (ChatMessage(role="user", content="Input series: ..."),)
    out = default_mock_responder("Phase 1: Multi-Tool Reasoning", msgs, 1)
    assert "<tool>call: Trend_Detector(window=24)</tool>" in out
    msgs2 = msgs + (
        ChatMessage(role="assistant", content=out),
        ChatMessage(role="user", content="[System: Tool Output: Trend_Detector -> slope=-0.1]"),
    )
    out2 = default_mock_responder("Phase 1: Multi-Tool Reasoning", msgs2, 1)
    assert "FFT_Analyzer(top_k=3)" in out2
