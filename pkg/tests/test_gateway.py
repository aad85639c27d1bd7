"""Chat gateway: digests, fixtures, replay, caching, and retry behavior."""

import json
import threading
from contextlib import contextmanager
from hashlib import sha256
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from demograph.gateway import (ChatRequest, ChatResponse, FixtureMissingError,
                               GatewayConfig, GatewayConfigError,
                               GatewayError, LLMGateway, Message,
                               RateLimitError, TransportError, request_digest,
                               user_request, write_fixture)


def _req(prompt="hello", model="test-model", temperature=0.7,
         max_tokens=2048):
    return user_request(model, prompt, temperature=temperature,
                        max_tokens=max_tokens)


def _ok_body(text, prompt_tokens=7, completion_tokens=11):
    return json.dumps({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": prompt_tokens,
                  "completion_tokens": completion_tokens},
    })


class _ScriptedHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.server.requests.append(
            (self.path, dict(self.headers),
             json.loads(self.rfile.read(length))))
        if self.server.script:
            status, headers, body = self.server.script.pop(0)
        else:
            status, headers, body = 200, {}, _ok_body("fallback")
        payload = body.encode("utf-8")
        self.send_response(status)
        for key, value in headers.items():
            self.send_header(key, value)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@contextmanager
def scripted_server(script):
    server = HTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    server.script = list(script)
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_port}"
    finally:
        server.shutdown()
        server.server_close()


def _gateway(url, sleeps=None, **kw):
    record = sleeps if sleeps is not None else []
    cfg = GatewayConfig(api_base=url, api_key="sk-test",
                        sleep=record.append, **kw)
    return LLMGateway(cfg)


# ---------------------------------------------------------------- digests

def test_digest_ignores_max_tokens():
    assert request_digest(_req(max_tokens=16)) == \
        request_digest(_req(max_tokens=4096))


def test_digest_sensitive_to_identity_fields():
    base = request_digest(_req())
    assert request_digest(_req(prompt="other")) != base
    assert request_digest(_req(model="other-model")) != base
    assert request_digest(_req(temperature=0.2)) != base


def test_digest_depends_on_message_order():
    a = ChatRequest("m", (Message("system", "s"), Message("user", "u")))
    b = ChatRequest("m", (Message("user", "u"), Message("system", "s")))
    assert request_digest(a) != request_digest(b)


def test_digest_matches_independent_canonical_sha256():
    req = _req(prompt="digest oracle", temperature=0.25)
    payload = {
        "model_name": "test-model",
        "messages": [{"role": "user", "content": "digest oracle"}],
        "sampling_temperature": 0.25,
    }
    expected = sha256(json.dumps(
        payload, sort_keys=True, separators=(",", ":"),
        ensure_ascii=False).encode("utf-8")).hexdigest()
    assert request_digest(req) == expected


def test_digest_golden_value_regression():
    # Frozen once; a change here silently invalidates every recorded
    # fixture directory in the wild.
    req = ChatRequest("gpt-4-0125-preview",
                      (Message("user", "name three graph datasets"),),
                      sampling_temperature=0.7, max_tokens=2048)
    assert request_digest(req) == (
        "c914c2ae9295777c2f076a7dddef3f0cea15db16971a40947f2363af737bdf68")


# ---------------------------------------------------------- request types

def test_message_and_request_validation():
    with pytest.raises(ValueError):
        Message("robot", "hi")
    with pytest.raises(ValueError):
        Message("user", "")
    with pytest.raises(ValueError):
        ChatRequest("m", (Message("system", "only system"),))
    with pytest.raises(ValueError):
        _req(temperature=-0.1)


def test_request_accepts_dict_messages():
    req = ChatRequest("m", ({"role": "user", "content": "hi"},))
    assert req.messages[0] == Message("user", "hi")


def test_request_body_shape():
    body = _req(prompt="p", temperature=0.5, max_tokens=99).body()
    assert body == {
        "model": "test-model",
        "messages": [{"role": "user", "content": "p"}],
        "temperature": 0.5,
        "max_tokens": 99,
    }


# -------------------------------------------------------------- fixtures

def test_write_fixture_schema(tmp_path):
    req = _req()
    path = write_fixture(tmp_path, req, "the reply", timestamp=123.0)
    digest = request_digest(req)
    assert path.name == f"{digest}.json"
    doc = json.loads(path.read_text())
    assert set(doc) == {"request_digest", "request", "response_text",
                        "timestamp"}
    assert doc["request_digest"] == digest
    assert doc["response_text"] == "the reply"
    assert doc["timestamp"] == 123.0
    assert doc["request"]["model_name"] == "test-model"
    assert doc["request"]["messages"] == [
        {"role": "user", "content": "hello"}]
    assert not list(tmp_path.glob("*.tmp")), "atomic write leaves no temp"


def test_replay_round_trip(tmp_path):
    req = _req(prompt="recorded")
    write_fixture(tmp_path, req, "canned answer")
    gw = LLMGateway(GatewayConfig(replay_dir=tmp_path))
    resp = gw.complete(req)
    assert resp.text == "canned answer"
    assert resp.cached is True


def test_replay_miss_names_digest_and_remedy(tmp_path):
    gw = LLMGateway(GatewayConfig(replay_dir=tmp_path))
    req = _req(prompt="never recorded")
    with pytest.raises(FixtureMissingError) as exc_info:
        gw.complete(req)
    assert request_digest(req) in str(exc_info.value)
    assert "LLM_REPLAY_DIR" in str(exc_info.value)


def test_replay_rejects_tampered_fixture(tmp_path):
    req = _req(prompt="tamper target")
    path = write_fixture(tmp_path, req, "original")
    doc = json.loads(path.read_text())
    doc["request_digest"] = "0" * 64
    path.write_text(json.dumps(doc))
    gw = LLMGateway(GatewayConfig(replay_dir=tmp_path))
    with pytest.raises(GatewayError, match="invalid replay fixture"):
        gw.complete(req)


def test_complete_cached_hit_needs_no_endpoint(tmp_path):
    req = _req(prompt="cache hit")
    write_fixture(tmp_path, req, "from disk")
    gw = LLMGateway(GatewayConfig())  # no api_base at all
    resp = gw.complete_cached(req, tmp_path)
    assert resp.text == "from disk" and resp.cached is True


def test_complete_cached_corrupt_entry_regenerates(tmp_path):
    req = _req(prompt="corrupt me")
    path = write_fixture(tmp_path, req, "good")
    path.write_text("{ not json")
    with scripted_server([(200, {}, _ok_body("fresh"))]) as (server, url):
        gw = _gateway(url)
        resp = gw.complete_cached(req, tmp_path)
    assert resp.text == "fresh"
    assert json.loads(path.read_text())["response_text"] == "fresh"


def test_complete_cached_miss_writes_file(tmp_path):
    req = _req(prompt="miss then write")
    with scripted_server([(200, {}, _ok_body("networked"))]) as (server, url):
        gw = _gateway(url)
        resp = gw.complete_cached(req, tmp_path)
        assert resp.text == "networked" and resp.cached is False
        again = gw.complete_cached(req, tmp_path)
        assert again.cached is True and again.text == "networked"
        assert len(server.requests) == 1


# ------------------------------------------------------------- transport

def test_live_call_parses_text_and_usage():
    with scripted_server([(200, {}, _ok_body("live", 3, 5))]) as (srv, url):
        resp = _gateway(url).complete(_req())
    assert resp == ChatResponse(
        "live", usage={"prompt_tokens": 3, "completion_tokens": 5},
        cached=False)
    path, headers, body = srv.requests[0]
    assert path == "/chat/completions"
    assert headers["Authorization"] == "Bearer sk-test"
    assert body["model"] == "test-model"


def test_memoization_issues_one_http_call():
    with scripted_server([(200, {}, _ok_body("once"))]) as (server, url):
        gw = _gateway(url)
        first = gw.complete(_req())
        second = gw.complete(_req())
        assert len(server.requests) == 1
    assert first.cached is False and second.cached is True
    assert second.text == "once"


def test_retries_5xx_with_exponential_backoff():
    script = [(500, {}, "boom"), (503, {}, "boom"),
              (200, {}, _ok_body("recovered"))]
    sleeps = []
    with scripted_server(script) as (server, url):
        gw = _gateway(url, sleeps=sleeps, backoff_base=0.5, backoff_cap=8.0)
        resp = gw.complete(_req())
        assert len(server.requests) == 3
    assert resp.text == "recovered"
    assert sleeps == [0.5, 1.0]


def test_429_honors_retry_after_header():
    script = [(429, {"Retry-After": "2.5"}, "slow down"),
              (200, {}, _ok_body("ok"))]
    sleeps = []
    with scripted_server(script) as (server, url):
        resp = _gateway(url, sleeps=sleeps).complete(_req())
    assert resp.text == "ok"
    assert sleeps == [2.5]


def test_rate_limit_exhaustion_raises():
    script = [(429, {}, "nope")] * 3
    with scripted_server(script) as (server, url):
        gw = _gateway(url, max_attempts=3)
        with pytest.raises(RateLimitError):
            gw.complete(_req())
        assert len(server.requests) == 3


def test_persistent_5xx_raises_transport_error():
    with scripted_server([(500, {}, "x")] * 2) as (server, url):
        gw = _gateway(url, max_attempts=2)
        with pytest.raises(TransportError):
            gw.complete(_req())


def test_client_error_fails_fast():
    with scripted_server([(400, {}, "bad request")]) as (server, url):
        gw = _gateway(url, max_attempts=5)
        with pytest.raises(GatewayError, match="400"):
            gw.complete(_req())
        assert len(server.requests) == 1, "4xx must not retry"


def test_malformed_success_body_is_an_error():
    with scripted_server([(200, {}, json.dumps({"weird": True}))]) as (_, url):
        with pytest.raises(GatewayError, match="malformed"):
            _gateway(url).complete(_req())


def test_no_endpoint_and_no_replay_is_config_error():
    gw = LLMGateway(GatewayConfig())
    with pytest.raises(GatewayConfigError, match="LLM_API_BASE"):
        gw.complete(_req())


# ------------------------------------------------------------------ env

def test_from_env_reads_documented_variables(tmp_path):
    env = {"LLM_API_BASE": "https://api.example.test/v1",
           "LLM_API_KEY": "sk-abc",
           "LLM_REPLAY_DIR": str(tmp_path)}
    cfg = GatewayConfig.from_env(env)
    assert cfg.api_base == "https://api.example.test/v1"
    assert cfg.api_key == "sk-abc"
    assert cfg.replay_dir == tmp_path
    assert cfg.replay_mode is True
    bare = GatewayConfig.from_env({})
    assert bare.api_base is None and bare.replay_mode is False
    override = GatewayConfig.from_env(env, model_name="other")
    assert override.model_name == "other"
