"""Coder backends: a hosted chat endpoint plus deterministic stand-ins.

Every backend implements ``complete(messages) -> str`` over a list of
``{"role", "content"}`` dicts; :meth:`CoderBackend.send` threads a message
through a :class:`Session` and records both turns.

Deterministic backends (:class:`Replay`, :class:`NoisyReplay`,
:class:`Scripted`) locate the item being coded through the ``Case ID:``
line that every item prompt carries.
"""

from __future__ import annotations

import hashlib
import os
import random
import re
import threading
import time
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import (AuthError, BackendError, BackendUnavailable,
                     MalformedResponse, RetryExhausted, ScriptMismatch)

CASE_ID = re.compile(r"Case ID:\s*(\S+)")

DEFAULT_DIGEST = (
    "Rules of thumb:\n"
    "1. Name the policy issue at the center of the case before choosing a class.\n"
    "2. Prefer the most specific class the summary supports.\n"
    "3. Use the residual class only when no other class explicitly applies."
)


class Session:
    """One logical chat: an ordered message log."""

    def __init__(self, index: int = 0, system: str | None = None):
        self.index = index
        self.messages: list[dict] = []
        if system:
            self.messages.append({"role": "system", "content": system})


class CoderBackend:
    model = "unknown"

    def complete(self, messages: list[dict]) -> str:
        raise NotImplementedError

    def send(self, session: Session, message: str) -> str:
        session.messages.append({"role": "user", "content": message})
        reply = self.complete(list(session.messages))
        session.messages.append({"role": "assistant", "content": reply})
        return reply


def _case_id(messages):
    text = messages[-1]["content"] if messages else ""
    found = CASE_ID.findall(text)
    return found[-1] if found else None


class Replay(CoderBackend):
    """Answers every item with its gold label."""

    model = "replay"

    def __init__(self, gold: dict[str, str], digest: str = DEFAULT_DIGEST):
        self.gold = dict(gold)
        self.digest = digest

    def label_for(self, record_id: str) -> str:
        try:
            return self.gold[record_id]
        except KeyError:
            raise BackendError(f"no gold label for case {record_id!r}") from None

    def complete(self, messages):
        rid = _case_id(messages)
        if rid is None:
            return self.digest
        return f"Rationale: replayed coding for case {rid}.\nLabel: {self.label_for(rid)}"


class NoisyReplay(Replay):
    """Gold labels corrupted at rate ``epsilon``.

    Each record gets its own generator seeded from ``(seed, md5(id))``, so a
    record's answer does not depend on call order and raising ``epsilon``
    only ever adds errors (the uniform draw deciding an error is shared
    across epsilons). Wrong answers follow ``confusion[gold]`` (weights over
    other classes), or are uniform over the other ``classes``.
    """

    model = "noisy-replay"

    def __init__(self, gold, epsilon: float, classes, confusion=None, seed: int = 0,
                 digest: str = DEFAULT_DIGEST):
        super().__init__(gold, digest)
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        self.epsilon = float(epsilon)
        self.classes = sorted(classes)
        self.confusion = confusion or {}
        self.seed = int(seed)

    def _draws(self, record_id):
        h = int(hashlib.md5(record_id.encode("utf-8")).hexdigest()[:16], 16)
        rng = np.random.default_rng([self.seed, h])
        return rng.random(), rng.random()

    def label_for(self, record_id):
        gold = super().label_for(record_id)
        u, v = self._draws(record_id)
        if u >= self.epsilon:
            return gold
        weights = self.confusion.get(gold)
        if weights:
            options = sorted(k for k, w in weights.items() if k != gold and w > 0)
            w = np.array([weights[k] for k in options], dtype=float)
        else:
            options = [c for c in self.classes if c != gold]
            w = np.ones(len(options))
        if not options:
            return gold
        cum = np.cumsum(w / w.sum())
        return options[min(int(np.searchsorted(cum, v, side="right")), len(options) - 1)]


class Scripted(CoderBackend):
    """Replays a recorded transcript, checking each user turn against it."""

    model = "scripted"

    def __init__(self, transcript: list[dict]):
        self.turns = []
        pending = None
        for msg in transcript:
            if msg["role"] == "user":
                pending = msg["content"]
            elif msg["role"] == "assistant":
                self.turns.append((pending, msg["content"]))
                pending = None
        self.position = 0

    def complete(self, messages):
        if self.position >= len(self.turns):
            raise ScriptMismatch("transcript exhausted")
        expected, reply = self.turns[self.position]
        got = messages[-1]["content"]
        if expected is not None and got != expected:
            raise ScriptMismatch(f"turn {self.position}: unexpected message {got[:60]!r}")
        self.position += 1
        return reply


# hosted chat endpoint -------------------------------------------------------

@dataclass(frozen=True)
class HttpChatConfig:
    endpoint: str
    model: str
    temperature: float = 0.0
    api_key_env: str = "CODER_API_KEY"
    max_retries: int = 5
    backoff_base_ms: float = 500.0
    timeout: float = 60.0
    requests_per_minute: float | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class TokenBucket:
    """Blocking token bucket; ``rate`` tokens per second, burst ``capacity``."""

    def __init__(self, rate: float, capacity: float = 1.0, clock=time.monotonic,
                 sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity
        self.tokens = capacity
        self.clock = clock
        self.sleep = sleep
        self.stamp = clock()
        self.lock = threading.Lock()

    def acquire(self):
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            self.sleep(wait)


def _retryable(status):
    return status == 429 or 500 <= status <= 599


def api_key(config: HttpChatConfig) -> str:
    key = os.environ.get(config.api_key_env)
    if not key:
        raise AuthError(f"environment variable {config.api_key_env} is not set")
    return key


def http_send(config: HttpChatConfig, messages: list[dict], *, client=None,
              sleep=time.sleep, rng=None, limiter: TokenBucket | None = None) -> str:
    """POST a chat-completion request and return the first choice's content.

    429 and 5xx responses (and transport errors) are retried up to
    ``max_retries`` times, sleeping ``uniform(0, base * 2**attempt)`` between
    attempts. 401/403 fail at once.
    """
    key = api_key(config)
    rng = rng or random.Random()
    payload = {"model": config.model, "messages": messages,
               "temperature": config.temperature}
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    own_client = client is None
    client = client or httpx.Client(timeout=config.timeout)
    status = None
    responded = False
    try:
        for attempt in range(config.max_retries + 1):
            if limiter is not None:
                limiter.acquire()
            try:
                resp = client.post(config.endpoint, json=payload, headers=headers)
                status = resp.status_code
                responded = True
            except httpx.TransportError as exc:
                resp, status = None, f"transport error: {exc.__class__.__name__}"
            if resp is not None and status == 200:
                try:
                    content = resp.json()["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError):
                    raise MalformedResponse(f"unexpected response body: {resp.text[:200]}") from None
                if not isinstance(content, str):
                    raise MalformedResponse("message content is not text")
                return content
            if status in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {status})")
            if resp is not None and not _retryable(status):
                raise BackendError(f"HTTP {status}: {resp.text[:200]}")
            if attempt < config.max_retries:
                sleep(rng.uniform(0, config.backoff_base_ms * 2 ** attempt) / 1000.0)
        if not responded:
            raise BackendUnavailable(f"{config.endpoint} unreachable ({status})")
        raise RetryExhausted(config.max_retries + 1, status)
    finally:
        if own_client:
            client.close()


class HttpChat(CoderBackend):
    """Vendor-neutral chat-completion endpoint.

    Credentials are checked on construction so a missing key fails before
    any request is made.
    """

    def __init__(self, config: HttpChatConfig, client=None, sleep=time.sleep, rng=None):
        api_key(config)
        self.config = config
        self.model = config.model
        self.client = client
        self.sleep = sleep
        self.rng = rng or random.Random()
        self.limiter = (TokenBucket(config.requests_per_minute / 60.0)
                        if config.requests_per_minute else None)

    def complete(self, messages):
        return http_send(self.config, messages, client=self.client, sleep=self.sleep,
                         rng=self.rng, limiter=self.limiter)
