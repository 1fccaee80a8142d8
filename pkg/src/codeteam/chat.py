"""Chat sessions over OpenAI-compatible endpoints, plus mock and replay.

Three interchangeable backends: HttpChatBackend talks to any
chat-completions HTTP endpoint; MockChatBackend replays scripted
responses deterministically (used throughout the test suite);
ReplayChatBackend replays a cassette recorded from a live run so CI
never touches the network.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass

import requests

from .errors import BackendError, ConfigError, RateLimited

#: Historical default; the model used when these interaction patterns were
#: first measured. Operators should point this at whatever their endpoint
#: serves today.
DEFAULT_MODEL = "gpt-3.5-turbo-0301"
DEFAULT_ENDPOINT = "https://api.openai.com/v1"

_session_counter = itertools.count(1)


@dataclass
class Decoding:
    temperature: float = 0.0
    max_tokens: int | None = None

    def validate(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive when set")


@dataclass
class ChatSession:
    """One role's conversation. history[0] is always the role instruction."""

    session_id: str
    role_instruction: str
    history: list[tuple[str, str]]
    decoding: Decoding
    tag: str = ""


@dataclass
class BackendConfig:
    """Transport settings for the HTTP backend."""

    endpoint: str = DEFAULT_ENDPOINT
    model: str = DEFAULT_MODEL
    auth_env: str = "OPENAI_API_KEY"
    timeout: float = 120.0
    retries: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 30.0
    rate_limit_factor: float = 4.0
    requests_per_minute: float | None = None
    max_prompt_chars: int | None = None
    temperature: float = 0.0
    max_tokens: int | None = None
    seed: int = 0

    def validate(self) -> None:
        if not self.endpoint.startswith(("http://", "https://")):
            raise ConfigError(f"malformed endpoint URL: {self.endpoint!r}")
        if not self.model:
            raise ConfigError("model name must be nonempty")
        if not self.auth_env:
            raise ConfigError("auth_env must name an environment variable")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.retries < 0:
            raise ConfigError("retry budget must be >= 0")
        Decoding(self.temperature, self.max_tokens).validate()


class TokenBucket:
    """Blocking token bucket used for global request-rate limiting."""

    def __init__(self, per_minute: float, burst: float | None = None):
        if per_minute <= 0:
            raise ConfigError("requests_per_minute must be positive")
        self._rate = per_minute / 60.0
        self._capacity = burst if burst is not None else max(1.0, per_minute / 60.0)
        self._tokens = self._capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._updated) * self._rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


def request_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CassetteRecorder:
    """Appends {request_hash, request, response} lines while recording."""

    def __init__(self, path):
        self._path = path
        self._lock = threading.Lock()

    def record(self, payload: dict, response_text: str) -> None:
        line = json.dumps(
            {"request_hash": request_hash(payload), "request": payload, "response": response_text},
            sort_keys=True,
        )
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class ChatBackend:
    """Common session bookkeeping; subclasses provide the transport."""

    def open_session(self, role_instruction: str, tag: str = "") -> ChatSession:
        if not role_instruction or not role_instruction.strip():
            raise ConfigError("role instruction must be nonempty")
        session = ChatSession(
            session_id=f"s{next(_session_counter)}",
            role_instruction=role_instruction,
            history=[("system", role_instruction)],
            decoding=self._decoding(),
            tag=tag,
        )
        self._on_open(session)
        return session

    def send(self, session: ChatSession, message: str) -> str:
        session.decoding.validate()
        reply = self._complete(session, message)
        session.history.append(("user", message))
        session.history.append(("assistant", reply))
        return reply

    def _decoding(self) -> Decoding:
        return Decoding()

    def _on_open(self, session: ChatSession) -> None:
        pass

    def _complete(self, session: ChatSession, message: str) -> str:
        raise NotImplementedError


def build_payload(cfg: BackendConfig, session: ChatSession, message: str) -> dict:
    """Materialize the chat-completions request body for one send."""
    turns = session.history[1:]
    if cfg.max_prompt_chars is not None:
        budget = cfg.max_prompt_chars - len(session.role_instruction) - len(message)
        # Drop oldest user/assistant pairs (never the instruction) until we fit.
        while turns and sum(len(t) for _, t in turns) > max(budget, 0):
            turns = turns[2:]
    messages = [{"role": "system", "content": session.role_instruction}]
    messages += [{"role": speaker, "content": text} for speaker, text in turns]
    messages.append({"role": "user", "content": message})
    payload = {
        "model": cfg.model,
        "messages": messages,
        "temperature": session.decoding.temperature,
    }
    if session.decoding.max_tokens is not None:
        payload["max_tokens"] = session.decoding.max_tokens
    return payload


class HttpChatBackend(ChatBackend):
    """Client for any OpenAI-compatible chat-completions endpoint."""

    def __init__(self, cfg: BackendConfig, recorder: CassetteRecorder | None = None):
        cfg.validate()
        token = os.environ.get(cfg.auth_env, "")
        if not token:
            raise ConfigError(
                f"auth token environment variable {cfg.auth_env!r} is not set"
            )
        self.cfg = cfg
        self._token = token
        self._recorder = recorder
        self._bucket = (
            TokenBucket(cfg.requests_per_minute) if cfg.requests_per_minute else None
        )
        self._rng = random.Random(cfg.seed)
        self._rng_lock = threading.Lock()
        self._url = cfg.endpoint.rstrip("/") + "/chat/completions"

    def _decoding(self) -> Decoding:
        return Decoding(self.cfg.temperature, self.cfg.max_tokens)

    def _jitter(self) -> float:
        with self._rng_lock:
            return self._rng.uniform(0.0, 0.25)

    def _complete(self, session: ChatSession, message: str) -> str:
        payload = build_payload(self.cfg, session, message)
        headers = {
            "Authorization": f"Bearer {self._token}",
            "Content-Type": "application/json",
        }
        attempts = self.cfg.retries + 1
        last_error: str = "no attempt made"
        rate_limited = False
        for attempt in range(attempts):
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                resp = requests.post(
                    self._url, json=payload, headers=headers, timeout=self.cfg.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                rate_limited = False
            else:
                if resp.status_code == 429:
                    last_error = "rate limited (429)"
                    rate_limited = True
                elif resp.status_code >= 500:
                    last_error = f"server error ({resp.status_code})"
                    rate_limited = False
                elif resp.status_code >= 400:
                    raise BackendError(
                        f"request rejected ({resp.status_code}): {resp.text[:200]}"
                    )
                else:
                    reply = self._parse_reply(resp)
                    if self._recorder is not None:
                        self._recorder.record(payload, reply)
                    return reply
            if attempt + 1 < attempts:
                delay = min(
                    self.cfg.backoff_base * (2 ** attempt), self.cfg.backoff_cap
                ) + self._jitter()
                if rate_limited:
                    delay *= self.cfg.rate_limit_factor
                time.sleep(delay)
        if rate_limited:
            raise RateLimited(f"gave up after {attempts} attempts: {last_error}")
        raise BackendError(f"gave up after {attempts} attempts: {last_error}")

    @staticmethod
    def _parse_reply(resp) -> str:
        try:
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc


class ReplayChatBackend(ChatBackend):
    """Serves responses from a cassette; byte-identical, no network."""

    def __init__(self, cassette_path, cfg: BackendConfig | None = None):
        self.cfg = cfg or BackendConfig()
        self._by_hash: dict[str, deque[str]] = {}
        with open(cassette_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._by_hash.setdefault(rec["request_hash"], deque()).append(rec["response"])

    def _decoding(self) -> Decoding:
        return Decoding(self.cfg.temperature, self.cfg.max_tokens)

    def _complete(self, session: ChatSession, message: str) -> str:
        h = request_hash(build_payload(self.cfg, session, message))
        queue = self._by_hash.get(h)
        if not queue:
            raise BackendError(f"cassette has no recorded response for request {h[:12]}")
        return queue.popleft()


class MockChatBackend(ChatBackend):
    """Deterministic scripted backend.

    Scripts map a tag to the sequence of replies its sessions will
    receive. Lookup tries the exact session tag first, then the part
    after the last ':' (so per-task scripts like ``"toy/add:coder"`` and
    shared per-role scripts like ``"coder"`` both work). Every prompt it
    receives, including role instructions, is kept in ``log``.
    """

    def __init__(self, scripts: dict[str, list[str]] | None = None):
        self.scripts = dict(scripts or {})
        self._queues: dict[str, deque[str]] = {}
        self._lock = threading.Lock()
        self.log: list[tuple[str, str]] = []
        self.calls: dict[str, int] = {}

    def _on_open(self, session: ChatSession) -> None:
        with self._lock:
            self.log.append((session.tag, session.role_instruction))

    def _queue_for(self, tag: str) -> deque[str]:
        if tag not in self._queues:
            script = self.scripts.get(tag)
            if script is None:
                script = self.scripts.get(tag.rsplit(":", 1)[-1])
            if script is None:
                raise BackendError(f"mock backend has no script for tag {tag!r}")
            self._queues[tag] = deque(script)
        return self._queues[tag]

    def _complete(self, session: ChatSession, message: str) -> str:
        with self._lock:
            self.log.append((session.tag, message))
            self.calls[session.tag] = self.calls.get(session.tag, 0) + 1
            queue = self._queue_for(session.tag)
            if not queue:
                raise BackendError(f"mock script exhausted for tag {session.tag!r}")
            return queue.popleft()

    def call_count(self, suffix: str) -> int:
        """Total sends across tags ending in ``suffix`` (e.g. a role name)."""
        with self._lock:
            return sum(
                n for tag, n in self.calls.items()
                if tag == suffix or tag.endswith(":" + suffix)
            )
