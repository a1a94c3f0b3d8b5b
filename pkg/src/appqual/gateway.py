"""Uniform client for chat-completion and embedding providers.

Every model call in the pipeline goes through :class:`Gateway`.  A call names
a role (annotator, judge, ...) and the gateway attaches that role's
registered decoding profile, so no caller can send a judge request with the
wrong temperature.  Providers are pluggable transports: :class:`HttpTransport`
speaks the usual chat-completion JSON convention and :class:`MockProvider`
answers offline and deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import httpx

from appqual.errors import (
    DimensionMismatch,
    EmptyInput,
    ProviderRejected,
    RetriesExhausted,
    TimeoutExceeded,
    TransportError,
    ZeroVector,
)

logger = logging.getLogger(__name__)


class Role(str, Enum):
    ANNOTATOR = "annotator"
    METRIC_GENERATOR = "metric_generator"
    TASK_GENERATOR = "task_generator"
    COMPLEXITY_CHECKER = "complexity_checker"
    JUDGE = "judge"


@dataclass(frozen=True)
class DecodingParams:
    temperature: float
    frequency_penalty: float
    max_tokens: int

    def __post_init__(self) -> None:
        if self.temperature is None or self.frequency_penalty is None or self.max_tokens is None:
            raise ValueError("decoding parameters must all be set")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not isinstance(self.max_tokens, int) or self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be a positive integer, got {self.max_tokens}")


@dataclass(frozen=True)
class RoleProfile:
    decoding: DecodingParams
    timeout_s: float


JUDGE_PROFILE = RoleProfile(
    DecodingParams(temperature=0.0, frequency_penalty=0.5, max_tokens=5000), timeout_s=60.0
)
GENERATION_PROFILE = RoleProfile(
    DecodingParams(temperature=0.7, frequency_penalty=0.0, max_tokens=2000), timeout_s=60.0
)

# The judge profile is fixed; only generation roles accept overrides.
FIXED_ROLES = frozenset({Role.JUDGE, Role.COMPLEXITY_CHECKER})

DEFAULT_PROFILES: dict[Role, RoleProfile] = {
    Role.ANNOTATOR: GENERATION_PROFILE,
    Role.METRIC_GENERATOR: GENERATION_PROFILE,
    Role.TASK_GENERATOR: GENERATION_PROFILE,
    Role.COMPLEXITY_CHECKER: JUDGE_PROFILE,
    Role.JUDGE: JUDGE_PROFILE,
}


@dataclass(frozen=True)
class ChatRequest:
    role_profile: Role
    messages: tuple[tuple[str, str], ...]
    decoding: DecodingParams
    timeout_s: float

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if not self.timeout_s > 0:
            raise ValueError(f"timeout_s must be > 0, got {self.timeout_s}")
        object.__setattr__(self, "role_profile", Role(self.role_profile))
        object.__setattr__(self, "messages", tuple((s, t) for s, t in self.messages))


@dataclass(frozen=True)
class ChatResult:
    text: str
    token_count: int
    elapsed_s: float
    provider_reported_tokens: int | None = None


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("embedding must have positive dimension")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("embedding values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def dimension(self) -> int:
        return len(self.values)


def estimate_tokens(text: str) -> int:
    """Whitespace-delimited token estimate, used when a provider omits usage."""
    return len(text.split())


def cosine_similarity(a: EmbeddingVector | Sequence[float], b: EmbeddingVector | Sequence[float]) -> float:
    va = a.values if isinstance(a, EmbeddingVector) else tuple(float(x) for x in a)
    vb = b.values if isinstance(b, EmbeddingVector) else tuple(float(x) for x in b)
    if len(va) != len(vb):
        raise DimensionMismatch(f"dimensions differ: {len(va)} vs {len(vb)}")
    na = math.sqrt(math.fsum(x * x for x in va))
    nb = math.sqrt(math.fsum(y * y for y in vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for an all-zero vector")
    sim = math.fsum(x * y for x, y in zip(va, vb)) / (na * nb)
    return max(-1.0, min(1.0, sim))


# --- clocks ---------------------------------------------------------------

class MonotonicClock:
    def now(self) -> float:
        return time.perf_counter()


class VirtualClock:
    """Manually advanced clock for offline runs; elapsed times become exact."""

    def __init__(self, start: float = 0.0) -> None:
        self._t = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._t

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot move a clock backwards")
        with self._lock:
            self._t += seconds


# --- retry and rate limiting ---------------------------------------------

@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay_s: float = 1.0
    jitter: float = 0.25
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int) -> float:
        """Backoff before retry number ``attempt`` (1-based)."""
        base = self.base_delay_s * 2 ** (attempt - 1)
        return base * (1.0 + random.random() * self.jitter)


class RateLimiter:
    """Caps in-flight requests and requests per rolling minute."""

    def __init__(self, rpm_limit: int | None = None, max_in_flight: int | None = None) -> None:
        self.rpm_limit = rpm_limit
        self._slots = threading.BoundedSemaphore(max_in_flight) if max_in_flight else None
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def __enter__(self) -> "RateLimiter":
        if self._slots is not None:
            self._slots.acquire()
        if self.rpm_limit:
            self._wait_for_window()
        return self

    def __exit__(self, *exc: object) -> None:
        if self._slots is not None:
            self._slots.release()

    def _wait_for_window(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.rpm_limit:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            time.sleep(max(wait, 0.01))


# --- providers -----------------------------------------------------------

@dataclass(frozen=True)
class ProviderConfig:
    name: str
    base_url: str
    api_key_env_var: str | None = None
    chat_path: str = "/v1/chat/completions"
    embed_path: str = "/v1/embeddings"
    rpm_limit: int | None = None
    max_in_flight: int | None = None
    model: str = ""
    embed_model: str = ""
    embed_dimension: int | None = None

    def api_key(self) -> str | None:
        if not self.api_key_env_var:
            return None
        return os.environ.get(self.api_key_env_var)

    def public_dict(self) -> dict[str, Any]:
        """Config as recorded in run artifacts; the key itself never appears."""
        return {
            "name": self.name,
            "base_url": self.base_url,
            "chat_path": self.chat_path,
            "embed_path": self.embed_path,
            "model": self.model,
            "embed_model": self.embed_model,
        }


def load_provider_configs(path: str | Path) -> dict[str, ProviderConfig]:
    """Read a provider file: ``{"providers": {"<key>": {...}}}``."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = raw.get("providers", raw)
    out = {}
    for key, cfg in entries.items():
        cfg = dict(cfg)
        cfg.setdefault("name", key)
        out[key] = ProviderConfig(**cfg)
    return out


class Transport(Protocol):
    name: str

    def post_chat(self, body: dict[str, Any], timeout_s: float, role: Role) -> dict[str, Any]: ...

    def post_embed(self, body: dict[str, Any], timeout_s: float) -> dict[str, Any]: ...


class HttpTransport:
    """Chat-completion style HTTP adapter.

    Connection-level failures raise :class:`TransportError` (retryable).  Any
    received response that is not 2xx raises :class:`ProviderRejected`, since
    a response body has already been delivered.
    """

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None) -> None:
        self.config = config
        self.name = config.name
        self._client = client or httpx.Client(base_url=config.base_url)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = self.config.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, body: dict[str, Any], timeout_s: float) -> dict[str, Any]:
        try:
            resp = self._client.post(path, json=body, headers=self._headers(), timeout=timeout_s)
        except (httpx.ConnectError, httpx.ConnectTimeout, httpx.RemoteProtocolError) as exc:
            raise TransportError(str(exc)) from exc
        except httpx.TimeoutException as exc:
            raise TimeoutExceeded(timeout_s, timeout_s) from exc
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code // 100 != 2:
            raise ProviderRejected(
                f"{self.name} answered {resp.status_code}: {resp.text[:200]}", status=resp.status_code
            )
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderRejected(f"{self.name} returned non-JSON body") from exc

    def post_chat(self, body: dict[str, Any], timeout_s: float, role: Role) -> dict[str, Any]:
        body = {"model": self.config.model, **body} if self.config.model else body
        return self._post(self.config.chat_path, body, timeout_s)

    def post_embed(self, body: dict[str, Any], timeout_s: float) -> dict[str, Any]:
        body = {"model": self.config.embed_model, **body} if self.config.embed_model else body
        return self._post(self.config.embed_path, body, timeout_s)


def _digest(*parts: str) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x1f")
    return h.digest()


def hashed_embedding(text: str, dimension: int = 64) -> list[float]:
    """Signed feature-hashing bag of words; stable across processes."""
    vec = [0.0] * dimension
    tokens = text.lower().split() or [text]
    for tok in tokens:
        d = _digest("tok", tok)
        idx = int.from_bytes(d[:4], "big") % dimension
        vec[idx] += 1.0 if d[4] & 1 else -1.0
    if not any(vec):
        vec[int.from_bytes(_digest("all", text)[:4], "big") % dimension] = 1.0
    return vec


Responder = Callable[[list[dict[str, str]]], str]


@dataclass
class CapturedRequest:
    role: Role | None
    body: dict[str, Any]
    timeout_s: float


class MockProvider:
    """Offline provider.

    Chat requests are answered by a per-role responder, or echo the last user
    message when the role has none.  ``latency_s`` is simulated: with a
    :class:`VirtualClock` the clock is advanced, otherwise nothing waits.
    ``failures`` makes the first N calls raise a transient transport error.
    Every request body is kept in ``captured``.
    """

    name = "mock"

    def __init__(
        self,
        responders: dict[Role, Responder] | None = None,
        embedder: Callable[[str], Sequence[float]] | None = None,
        latency_s: float | Callable[[Role | None, dict[str, Any]], float] = 0.01,
        clock: VirtualClock | None = None,
        failures: int = 0,
        reported_usage: bool = False,
        dimension: int = 64,
    ) -> None:
        self.responders = {Role(k): v for k, v in (responders or {}).items()}
        self.embedder = embedder or (lambda text: hashed_embedding(text, dimension))
        self.latency_s = latency_s
        self.clock = clock
        self.failures = failures
        self.reported_usage = reported_usage
        self.captured: list[CapturedRequest] = []
        self._lock = threading.Lock()

    def _simulate(self, role: Role | None, body: dict[str, Any], timeout_s: float) -> None:
        with self._lock:
            self.captured.append(CapturedRequest(role, json.loads(json.dumps(body)), timeout_s))
            if self.failures > 0:
                self.failures -= 1
                raise TransportError("mock transient failure")
        latency = self.latency_s(role, body) if callable(self.latency_s) else self.latency_s
        if self.clock is not None and latency:
            self.clock.advance(latency)

    def post_chat(self, body: dict[str, Any], timeout_s: float, role: Role) -> dict[str, Any]:
        self._simulate(role, body, timeout_s)
        messages = body["messages"]
        responder = self.responders.get(role)
        if responder is None:
            users = [m["content"] for m in messages if m["role"] == "user"]
            text = users[-1] if users else messages[-1]["content"]
        else:
            text = responder(messages)
        out: dict[str, Any] = {"choices": [{"message": {"role": "assistant", "content": text}}]}
        if self.reported_usage:
            out["usage"] = {"completion_tokens": estimate_tokens(text)}
        return out

    def post_embed(self, body: dict[str, Any], timeout_s: float) -> dict[str, Any]:
        self._simulate(None, body, timeout_s)
        return {"data": [{"embedding": list(self.embedder(body["input"]))}]}


# --- gateway -------------------------------------------------------------

class Gateway:
    """Role-aware front door to one provider transport."""

    def __init__(
        self,
        transport: Transport,
        profiles: dict[Role, RoleProfile] | None = None,
        retry: RetryPolicy | None = None,
        limiter: RateLimiter | None = None,
        clock: MonotonicClock | VirtualClock | None = None,
        embed_timeout_s: float = 30.0,
        embed_dimension: int | None = None,
    ) -> None:
        self.transport = transport
        self.profiles = dict(DEFAULT_PROFILES)
        for role, prof in (profiles or {}).items():
            role = Role(role)
            if role in FIXED_ROLES and prof != DEFAULT_PROFILES[role]:
                raise ValueError(f"decoding profile for {role.value} is fixed and cannot be overridden")
            self.profiles[role] = prof
        self.retry = retry or RetryPolicy()
        self.limiter = limiter or RateLimiter()
        self.clock = clock or MonotonicClock()
        self.embed_timeout_s = embed_timeout_s
        self.embed_dimension = embed_dimension

    @classmethod
    def from_config(cls, config: ProviderConfig, **kwargs: Any) -> "Gateway":
        return cls(
            HttpTransport(config),
            limiter=RateLimiter(config.rpm_limit, config.max_in_flight),
            embed_dimension=config.embed_dimension,
            **kwargs,
        )

    @property
    def provider_name(self) -> str:
        return getattr(self.transport, "name", type(self.transport).__name__)

    def request(self, role: Role | str, messages: Sequence[tuple[str, str]]) -> ChatRequest:
        """Build a request carrying the role's registered profile."""
        role = Role(role)
        prof = self.profiles[role]
        return ChatRequest(role, tuple(messages), prof.decoding, prof.timeout_s)

    def chat(self, role: Role | str, messages: Sequence[tuple[str, str]]) -> ChatResult:
        return self.complete_chat(self.request(role, messages))

    def _with_retries(self, call: Callable[[], Any]) -> Any:
        last: Exception | None = None
        for attempt in range(1, self.retry.attempts + 1):
            try:
                with self.limiter:
                    return call()
            except TransportError as exc:
                last = exc
                logger.warning("transient provider failure (attempt %d/%d): %s",
                               attempt, self.retry.attempts, exc)
                if attempt < self.retry.attempts:
                    self.retry.sleep(self.retry.delay(attempt))
        raise RetriesExhausted(self.retry.attempts, last)

    def complete_chat(self, req: ChatRequest) -> ChatResult:
        if self.profiles[req.role_profile] != RoleProfile(req.decoding, req.timeout_s):
            raise ValueError(f"request decoding does not match the {req.role_profile.value} profile")
        body = {
            "messages": [{"role": s, "content": t} for s, t in req.messages],
            "temperature": req.decoding.temperature,
            "frequency_penalty": req.decoding.frequency_penalty,
            "max_tokens": req.decoding.max_tokens,
        }
        start = self.clock.now()
        payload = self._with_retries(
            lambda: self.transport.post_chat(body, req.timeout_s, req.role_profile)
        )
        elapsed = self.clock.now() - start
        if elapsed > req.timeout_s:
            raise TimeoutExceeded(elapsed, req.timeout_s)
        try:
            text = payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderRejected("chat response lacks choices[0].message.content") from exc
        usage = payload.get("usage") or {}
        reported = usage.get("completion_tokens")
        tokens = int(reported) if reported is not None else estimate_tokens(text)
        return ChatResult(text=text, token_count=tokens, elapsed_s=elapsed,
                          provider_reported_tokens=None if reported is None else int(reported))

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise EmptyInput("cannot embed empty text")
        payload = self._with_retries(
            lambda: self.transport.post_embed({"input": text}, self.embed_timeout_s)
        )
        try:
            values = payload["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderRejected("embedding response lacks data[0].embedding") from exc
        vec = EmbeddingVector(tuple(values))
        if self.embed_dimension is not None and vec.dimension != self.embed_dimension:
            raise ProviderRejected(
                f"expected {self.embed_dimension}-dim embedding, got {vec.dimension}"
            )
        return vec


def with_profile_overrides(overrides: dict[str, dict[str, Any]]) -> dict[Role, RoleProfile]:
    """Turn ``{"annotator": {"temperature": 0.3}}`` style config into profiles."""
    out = {}
    for role_name, fields in overrides.items():
        role = Role(role_name)
        base = DEFAULT_PROFILES[role]
        fields = dict(fields)
        timeout = fields.pop("timeout_s", base.timeout_s)
        out[role] = RoleProfile(replace(base.decoding, **fields), timeout)
    return out
