"""Running tasks against apps, rubric judging, and composite scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from statistics import fmean
from typing import Any, Callable, Protocol, Sequence

import httpx

from appqual.errors import (
    AppUnreachable,
    EmptyInputs,
    GatewayError,
    InvalidWeights,
    ParseFailure,
    TimeoutExceeded,
    ZeroElapsed,
)
from appqual.gateway import Gateway, MonotonicClock, Role, VirtualClock, estimate_tokens
from appqual.prompting import extract_block, render_named
from appqual.screening import AppRecord
from appqual.synthesis import EvalTask, RubricMetric

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.8
# (lower bound in tokens/sec, level); first match wins
EFFICIENCY_BANDS = ((25.0, 5), (20.0, 4), (15.0, 3), (10.0, 2))


# --- app adapters --------------------------------------------------------

@dataclass(frozen=True)
class AppReply:
    text: str
    tokens: int | None = None


class AppAdapter(Protocol):
    def send(self, endpoint: str, prompt: str, timeout_s: float) -> AppReply: ...


class HttpAppAdapter:
    """Talks to an app exposed through a chat-completion style endpoint."""

    def __init__(self, client: httpx.Client | None = None) -> None:
        self._client = client or httpx.Client()

    def send(self, endpoint: str, prompt: str, timeout_s: float) -> AppReply:
        try:
            resp = self._client.post(endpoint, json={"messages": [{"role": "user", "content": prompt}]},
                                     timeout=timeout_s)
        except httpx.TimeoutException as exc:
            raise TimeoutExceeded(timeout_s, timeout_s) from exc
        except httpx.TransportError as exc:
            raise AppUnreachable(f"{endpoint}: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise AppUnreachable(f"{endpoint} answered {resp.status_code}")
        data = resp.json()
        text = data["choices"][0]["message"]["content"] or ""
        usage = data.get("usage") or {}
        return AppReply(text, usage.get("completion_tokens"))


ScriptEntry = tuple[str, float]


class ScriptedApp:
    """Offline app: returns scripted ``(response_text, delay_s)`` per prompt.

    Unscripted prompts go to ``default`` (a callable of the prompt) when set.
    The delay advances ``clock`` instead of sleeping.
    """

    def __init__(self, clock: VirtualClock, script: dict[str, ScriptEntry] | None = None,
                 default: Callable[[str], ScriptEntry] | None = None,
                 report_tokens: bool = False) -> None:
        self.clock = clock
        self.script = dict(script or {})
        self.default = default
        self.report_tokens = report_tokens

    def send(self, endpoint: str, prompt: str, timeout_s: float) -> AppReply:
        if prompt in self.script:
            text, delay = self.script[prompt]
        elif self.default is not None:
            text, delay = self.default(prompt)
        else:
            raise AppUnreachable(f"{endpoint}: no scripted reply")
        self.clock.advance(delay)
        return AppReply(text, estimate_tokens(text) if self.report_tokens else None)


class AppRouter:
    """Resolves an app's opaque endpoint key to an adapter by its scheme prefix."""

    def __init__(self, adapters: dict[str, AppAdapter], clock: MonotonicClock | VirtualClock | None = None,
                 timeout_s: float = 60.0) -> None:
        self.adapters = dict(adapters)
        self.clock = clock or MonotonicClock()
        self.timeout_s = timeout_s

    def adapter_for(self, endpoint: str) -> AppAdapter:
        scheme = endpoint.split(":", 1)[0] if ":" in endpoint else ""
        if scheme in ("http", "https") and scheme not in self.adapters:
            scheme = "http"
        try:
            return self.adapters[scheme]
        except KeyError:
            raise AppUnreachable(f"no adapter for endpoint {endpoint!r}") from None


# --- records -------------------------------------------------------------

@dataclass(frozen=True)
class TaskRun:
    task_id: str
    metric_name: str
    response_text: str
    tokens: int
    r_time_s: float
    empty: bool

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class JudgeVerdict:
    task_ref: str
    metric_name: str
    score: int
    strengths: tuple[str, ...] = ()
    weaknesses: tuple[str, ...] = ()
    suggestions: tuple[str, ...] = ()
    raw_text: str = ""
    attempts: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.score <= 5:
            raise ValueError(f"score must be in [1, 5], got {self.score}")

    def to_dict(self) -> dict[str, Any]:
        return {"task_ref": self.task_ref, "metric_name": self.metric_name, "score": self.score,
                "strengths": list(self.strengths), "weaknesses": list(self.weaknesses),
                "suggestions": list(self.suggestions), "raw_text": self.raw_text,
                "attempts": self.attempts}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "JudgeVerdict":
        return cls(d["task_ref"], d["metric_name"], int(d["score"]), tuple(d.get("strengths", ())),
                   tuple(d.get("weaknesses", ())), tuple(d.get("suggestions", ())),
                   d.get("raw_text", ""), int(d.get("attempts", 1)))


@dataclass(frozen=True)
class PerformanceSample:
    task_ref: str
    tokens: int
    r_time_s: float
    eta: float
    level_score: int

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PerformanceSample":
        return cls(d["task_ref"], int(d["tokens"]), float(d["r_time_s"]), float(d["eta"]),
                   int(d["level_score"]))


@dataclass(frozen=True)
class CompositeScore:
    s_cq: float
    s_rp: float
    alpha: float
    beta_w: float
    score: float

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class AppScore:
    composite: CompositeScore
    per_metric: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {**self.composite.to_dict(), "per_metric": dict(self.per_metric)}


# --- operations ----------------------------------------------------------

def run_task(app: AppRecord, task: EvalTask, router: AppRouter) -> TaskRun:
    """Send a task to the app and time it from submission to the final token."""
    adapter = router.adapter_for(app.endpoint)
    start = router.clock.now()
    reply = adapter.send(app.endpoint, task.prompt_text, router.timeout_s)
    elapsed = router.clock.now() - start
    if elapsed > router.timeout_s:
        raise TimeoutExceeded(elapsed, router.timeout_s)
    text = reply.text or ""
    tokens = reply.tokens if reply.tokens is not None else estimate_tokens(text)
    return TaskRun(task.task_id, task.metric_name, text, tokens, elapsed, empty=not text.strip())


def response_efficiency(tokens: int, r_time_s: float) -> float:
    if tokens < 0:
        raise ValueError("token count must be non-negative")
    if r_time_s <= 0:
        raise ZeroElapsed(f"response time must be positive, got {r_time_s}")
    return tokens / r_time_s


def efficiency_score(eta: float) -> int:
    if eta < 0:
        raise ValueError("efficiency must be non-negative")
    for lower, level in EFFICIENCY_BANDS:
        if eta >= lower:
            return level
    return 1


def performance_sample(run: TaskRun) -> PerformanceSample:
    eta = response_efficiency(run.tokens, run.r_time_s)
    return PerformanceSample(run.task_id, run.tokens, run.r_time_s, eta, efficiency_score(eta))


def _parse_judgement(obj: Any) -> dict[str, Any]:
    score = obj["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)) or score != int(score):
        raise ValueError(f"score is not an integer: {score!r}")
    score = int(score)
    if not 1 <= score <= 5:
        raise ValueError(f"score out of range: {score}")
    out: dict[str, Any] = {"score": score}
    for key in ("strengths", "weaknesses", "suggestions"):
        items = obj.get(key, [])
        if isinstance(items, str):
            items = [items]
        if not isinstance(items, list):
            raise ValueError(f"{key} must be a list")
        out[key] = tuple(str(i) for i in items)
    return out


def judge_content(task: EvalTask, response_text: str, metric: RubricMetric, gateway: Gateway,
                  max_attempts: int = 3) -> JudgeVerdict:
    """Score one response against the metric rubric using the judge profile.

    Unparseable or out-of-range answers are reprompted, never clamped.
    """
    response = response_text if response_text.strip() else "[empty response: the app returned no content]"
    prompt = render_named("judge", metric_name=metric.name, rubric=metric.rubric_text(),
                          task=task.prompt_text, response=response)
    messages = [("user", prompt)]
    reply = ""
    for attempt in range(1, max_attempts + 1):
        try:
            reply = gateway.chat(Role.JUDGE, messages).text
        except TimeoutExceeded:
            raise
        except GatewayError as exc:
            raise ParseFailure(f"judge call failed for {task.task_id}: {exc}", attempt) from exc
        parsed = extract_block(reply, "judgement", _parse_judgement)
        if parsed is not None:
            return JudgeVerdict(task.task_id, task.metric_name, raw_text=reply, attempts=attempt, **parsed)
        messages = messages + [
            ("assistant", reply),
            ("user", "Answer only with the fenced judgement block; score must be an integer from 1 to 5."),
        ]
    raise ParseFailure(f"judge produced no valid verdict for {task.task_id}", max_attempts, reply)


def composite_score(s_cq: float, s_rp: float, alpha: float = DEFAULT_ALPHA) -> CompositeScore:
    if not 0.5 < alpha < 1.0:
        raise InvalidWeights(f"content weight must satisfy 0.5 < alpha < 1, got {alpha}")
    for name, v in (("s_cq", s_cq), ("s_rp", s_rp)):
        if not 1.0 <= v <= 5.0:
            raise ValueError(f"{name} must be in [1, 5], got {v}")
    beta_w = 1.0 - alpha
    return CompositeScore(s_cq, s_rp, alpha, beta_w, alpha * s_cq + beta_w * s_rp)


def aggregate_app_score(verdicts: Sequence[JudgeVerdict], samples: Sequence[PerformanceSample],
                        alpha: float = DEFAULT_ALPHA) -> AppScore:
    """Equal-weight means over tasks: S_CQ from verdicts, S_RP from per-task levels."""
    if not verdicts or not samples:
        raise EmptyInputs("need at least one verdict and one performance sample")
    s_cq = fmean(v.score for v in verdicts)
    s_rp = fmean(s.level_score for s in samples)
    by_metric: dict[str, list[int]] = {}
    for v in verdicts:
        by_metric.setdefault(v.metric_name, []).append(v.score)
    per_metric = {k: fmean(vals) for k, vals in sorted(by_metric.items())}
    return AppScore(composite_score(s_cq, s_rp, alpha), per_metric)
