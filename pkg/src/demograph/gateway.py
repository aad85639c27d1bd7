"""Black-box chat-completion gateway with caching and offline replay."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field, replace
from hashlib import sha256
from pathlib import Path
from typing import Callable

import requests

logger = logging.getLogger(__name__)

GENERATION_TEMPERATURE = 0.7
IFT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 2048

ENV_API_BASE = "LLM_API_BASE"
ENV_API_KEY = "LLM_API_KEY"
ENV_REPLAY_DIR = "LLM_REPLAY_DIR"

_ROLES = ("system", "user", "assistant")


class GatewayError(RuntimeError):
    """Base class for gateway failures."""


class GatewayConfigError(GatewayError):
    """No endpoint configured and replay mode not active."""


class TransportError(GatewayError):
    """Network-level failure that persisted through the retry budget."""


class RateLimitError(TransportError):
    """HTTP 429 that persisted through the retry budget."""

    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class FixtureMissingError(GatewayError):
    """Replay mode found no fixture for the request digest."""

    def __init__(self, digest: str):
        super().__init__(
            f"no replay fixture for request digest {digest}; "
            f"record one or unset {ENV_REPLAY_DIR}")
        self.digest = digest


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content:
            raise ValueError("message content is empty")

    def as_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    messages: tuple[Message, ...]
    sampling_temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        msgs = tuple(
            m if isinstance(m, Message) else Message(**m) for m in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not any(m.role == "user" for m in msgs):
            raise ValueError("request needs at least one user message")
        if self.sampling_temperature < 0:
            raise ValueError("sampling_temperature must be >= 0")

    def body(self) -> dict:
        return {
            "model": self.model_name,
            "messages": [m.as_dict() for m in self.messages],
            "temperature": self.sampling_temperature,
            "max_tokens": self.max_tokens,
        }


def user_request(model_name: str, prompt: str, system: str | None = None,
                 temperature: float = GENERATION_TEMPERATURE,
                 max_tokens: int = DEFAULT_MAX_TOKENS) -> ChatRequest:
    messages = []
    if system:
        messages.append(Message("system", system))
    messages.append(Message("user", prompt))
    return ChatRequest(model_name, tuple(messages),
                       sampling_temperature=temperature, max_tokens=max_tokens)


@dataclass
class ChatResponse:
    text: str
    usage: dict[str, int] = field(
        default_factory=lambda: {"prompt_tokens": 0, "completion_tokens": 0})
    cached: bool = False


def request_digest(request: ChatRequest) -> str:
    """Content address of a request: model, messages, and temperature.

    max_tokens is a transport knob and deliberately not part of identity.
    Canonical serialization (sorted keys, fixed separators) keeps the digest
    stable under field reordering.
    """
    payload = {
        "model_name": request.model_name,
        "messages": [m.as_dict() for m in request.messages],
        "sampling_temperature": request.sampling_temperature,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return sha256(canonical.encode("utf-8")).hexdigest()


def _atomic_write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2, ensure_ascii=False)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_fixture(directory: str | Path, request: ChatRequest, response_text: str,
                  timestamp: float | None = None) -> Path:
    """Persist a cache/replay entry for the request; returns the file path."""
    digest = request_digest(request)
    doc = {
        "request_digest": digest,
        "request": {
            "model_name": request.model_name,
            "messages": [m.as_dict() for m in request.messages],
            "sampling_temperature": request.sampling_temperature,
            "max_tokens": request.max_tokens,
        },
        "response_text": response_text,
        "timestamp": time.time() if timestamp is None else timestamp,
    }
    path = Path(directory) / f"{digest}.json"
    _atomic_write_json(path, doc)
    return path


def _load_entry_text(path: Path, digest: str) -> str:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("request_digest") not in (None, digest):
        raise ValueError(
            f"{path}: stored digest {doc.get('request_digest')} != {digest}")
    text = doc["response_text"]
    if not isinstance(text, str):
        raise ValueError(f"{path}: response_text is not a string")
    return text


@dataclass
class GatewayConfig:
    api_base: str | None = None
    api_key: str | None = None
    replay_dir: Path | None = None
    model_name: str = "gpt-4-0125-preview"
    max_attempts: int = 5
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    request_timeout: float = 60.0
    sleep: Callable[[float], None] = time.sleep

    @classmethod
    def from_env(cls, env=os.environ, **overrides) -> "GatewayConfig":
        replay = env.get(ENV_REPLAY_DIR)
        kwargs = {
            "api_base": env.get(ENV_API_BASE),
            "api_key": env.get(ENV_API_KEY),
            "replay_dir": Path(replay) if replay else None,
        }
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def replay_mode(self) -> bool:
        return self.replay_dir is not None


class LLMGateway:
    """Issues chat completions against a remote endpoint or a replay dir.

    Live responses for identical requests are memoized for the lifetime of
    the gateway, so a request is billed at most once per process.
    """

    def __init__(self, config: GatewayConfig):
        self.config = config
        self._memory: dict[str, ChatResponse] = {}
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        if self.config.replay_mode:
            return self._replay(digest)
        with self._lock:
            hit = self._memory.get(digest)
        if hit is not None:
            return replace(hit, cached=True)
        response = self._post_with_retries(request, digest)
        with self._lock:
            self._memory.setdefault(digest, response)
        return response

    def complete_cached(self, request: ChatRequest,
                        cache_dir: str | Path) -> ChatResponse:
        digest = request_digest(request)
        path = Path(cache_dir) / f"{digest}.json"
        if path.exists():
            try:
                return ChatResponse(_load_entry_text(path, digest), cached=True)
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                logger.warning("corrupt cache entry %s (%s); regenerating",
                               path, exc)
        response = self.complete(request)
        write_fixture(Path(cache_dir), request, response.text)
        return response

    def _replay(self, digest: str) -> ChatResponse:
        path = Path(self.config.replay_dir) / f"{digest}.json"
        if not path.exists():
            raise FixtureMissingError(digest)
        try:
            return ChatResponse(_load_entry_text(path, digest), cached=True)
        except (ValueError, KeyError) as exc:
            raise GatewayError(f"invalid replay fixture {path}: {exc}") from exc

    def _post_with_retries(self, request: ChatRequest,
                           digest: str) -> ChatResponse:
        cfg = self.config
        if not cfg.api_base:
            raise GatewayConfigError(
                f"{ENV_API_BASE} is not configured and no replay dir is set")
        url = cfg.api_base.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        last_exc: Exception | None = None
        rate_limited = False
        retry_after: float | None = None
        for attempt in range(cfg.max_attempts):
            if attempt:
                delay = retry_after if retry_after is not None else min(
                    cfg.backoff_cap, cfg.backoff_base * 2 ** (attempt - 1))
                cfg.sleep(delay)
            retry_after = None
            try:
                resp = requests.post(url, json=request.body(), headers=headers,
                                     timeout=cfg.request_timeout)
            except requests.RequestException as exc:
                last_exc = exc
                rate_limited = False
                logger.warning("attempt %d/%d for %s failed: %s",
                               attempt + 1, cfg.max_attempts, digest[:12], exc)
                continue
            if resp.status_code == 429:
                rate_limited = True
                header = resp.headers.get("Retry-After")
                try:
                    retry_after = float(header) if header is not None else None
                except ValueError:
                    retry_after = None
                last_exc = None
                logger.warning("rate limited on attempt %d/%d (retry-after %s)",
                               attempt + 1, cfg.max_attempts, header)
                continue
            if resp.status_code >= 500:
                last_exc = None
                rate_limited = False
                logger.warning("server error %d on attempt %d/%d",
                               resp.status_code, attempt + 1, cfg.max_attempts)
                continue
            if resp.status_code != 200:
                raise GatewayError(
                    f"endpoint returned {resp.status_code}: {resp.text[:200]}")
            return self._parse_body(resp)
        if rate_limited:
            raise RateLimitError(
                f"rate limited after {cfg.max_attempts} attempts",
                retry_after=retry_after)
        raise TransportError(
            f"request failed after {cfg.max_attempts} attempts: {last_exc}")

    @staticmethod
    def _parse_body(resp) -> ChatResponse:
        try:
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed response body: {exc}") from exc
        usage = doc.get("usage") or {}
        return ChatResponse(
            text=text,
            usage={
                "prompt_tokens": int(usage.get("prompt_tokens", 0)),
                "completion_tokens": int(usage.get("completion_tokens", 0)),
            },
            cached=False,
        )
