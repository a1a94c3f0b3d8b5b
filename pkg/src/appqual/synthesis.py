"""Scenario-adaptive metric generation and filtered evaluation-task synthesis."""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any

from appqual.errors import GatewayError, GenerationFailed, ParseFailure, SuiteIncomplete
from appqual.gateway import Gateway, Role
from appqual.prompting import extract_block, render_named
from appqual.taxonomy import normalize

logger = logging.getLogger(__name__)

LEVELS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class RubricMetric:
    name: str
    definition: str
    rubric: dict[int, str]

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("metric name is empty")
        rubric = {int(k): str(v) for k, v in self.rubric.items()}
        if sorted(rubric) != list(LEVELS):
            raise ValueError(f"rubric for {self.name!r} must define levels 1-5 exactly")
        if any(not v.strip() for v in rubric.values()):
            raise ValueError(f"rubric for {self.name!r} has an empty level descriptor")
        object.__setattr__(self, "rubric", rubric)

    def rubric_text(self) -> str:
        return "\n".join(f"{lvl}: {self.rubric[lvl]}" for lvl in LEVELS)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "definition": self.definition,
                "rubric": {str(k): v for k, v in sorted(self.rubric.items())}}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RubricMetric":
        return cls(str(d["name"]).strip(), str(d.get("definition", "")).strip(), dict(d["rubric"]))


class TaskStatus(str, Enum):
    CANDIDATE = "candidate"
    ACCEPTED = "accepted"
    REJECTED_SYNTACTIC = "rejected_syntactic"
    REJECTED_COMPLEXITY = "rejected_complexity"


@dataclass(frozen=True)
class EvalTask:
    task_id: str
    metric_name: str
    prompt_text: str
    constraints: tuple[str, ...] = ()
    status: TaskStatus = TaskStatus.CANDIDATE
    attempts: int = 1
    rejection_reasons: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"task_id": self.task_id, "metric_name": self.metric_name,
                "prompt_text": self.prompt_text, "constraints": list(self.constraints),
                "status": self.status.value, "attempts": self.attempts,
                "rejection_reasons": list(self.rejection_reasons)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalTask":
        return cls(d["task_id"], d["metric_name"], d["prompt_text"], tuple(d.get("constraints", ())),
                   TaskStatus(d.get("status", "candidate")), int(d.get("attempts", 1)),
                   tuple(d.get("rejection_reasons", ())))


@dataclass(frozen=True)
class SynthesisConfig:
    metrics_per_label: int = 3
    tasks_per_metric: int = 3
    max_attempts: int = 3
    min_task_chars: int = 20
    max_task_chars: int = 1000

    def __post_init__(self) -> None:
        if self.metrics_per_label < 1 or self.tasks_per_metric < 1 or self.max_attempts < 1:
            raise ValueError("synthesis counts must be positive")
        if not 0 <= self.min_task_chars <= self.max_task_chars:
            raise ValueError("task length bounds must be ordered")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthesisConfig":
        return cls(**d)


@dataclass(frozen=True)
class Check:
    passed: bool
    reasons: tuple[str, ...] = ()
    attempts: int = 1


# --- metrics -------------------------------------------------------------

def _parse_metrics(obj: Any) -> list[RubricMetric]:
    items = obj["metrics"] if isinstance(obj, dict) else obj
    if not isinstance(items, list):
        raise ValueError("metrics must be a list")
    out: list[RubricMetric] = []
    seen: set[str] = set()
    for item in items:
        metric = RubricMetric.from_dict(item)
        key = normalize(metric.name)
        if key in seen:
            continue
        seen.add(key)
        out.append(metric)
    if not out:
        raise ValueError("no metrics")
    return out


def generate_metrics(label: str, gateway: Gateway, cfg: SynthesisConfig | None = None) -> list[RubricMetric]:
    """Ask for ``metrics_per_label`` rubric metrics for ``label``.

    Extra metrics are trimmed; too few or malformed output triggers a
    reprompt, up to ``max_attempts`` calls.
    """
    cfg = cfg or SynthesisConfig()
    if not label.strip():
        raise ValueError("label is empty")
    want = cfg.metrics_per_label
    messages = [("user", render_named("metric_generator", label=label, metric_count=want))]
    reply = ""
    for attempt in range(1, cfg.max_attempts + 1):
        try:
            reply = gateway.chat(Role.METRIC_GENERATOR, messages).text
        except GatewayError as exc:
            raise GenerationFailed(f"metric generation failed for {label!r}: {exc}") from exc
        metrics = extract_block(reply, "metrics", _parse_metrics)
        if metrics is not None and len(metrics) >= want:
            return metrics[:want]
        got = 0 if metrics is None else len(metrics)
        logger.info("metric generation attempt %d for %r yielded %d usable metrics", attempt, label, got)
        messages = messages + [
            ("assistant", reply),
            ("user", f"Your answer contained {got} valid metrics with complete 1-5 rubrics; "
                     f"exactly {want} are required. Answer again in the required format."),
        ]
    raise ParseFailure(f"no valid set of {want} metrics for {label!r}", cfg.max_attempts, reply)


# --- tasks ---------------------------------------------------------------

def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-") or "metric"


def _parse_tasks(obj: Any) -> list[tuple[str, tuple[str, ...]]]:
    items = obj["tasks"] if isinstance(obj, dict) else obj
    if not isinstance(items, list):
        raise ValueError("tasks must be a list")
    out = []
    for item in items:
        if isinstance(item, str):
            prompt, constraints = item, ()
        else:
            prompt = item["prompt"]
            constraints = tuple(str(c) for c in item.get("constraints", ()))
        if not isinstance(prompt, str):
            raise ValueError("task prompt must be a string")
        out.append((prompt.strip(), constraints))
    return out


def generate_tasks(metric: RubricMetric, label: str, gateway: Gateway, cfg: SynthesisConfig | None = None,
                   count: int | None = None, rejection_reason: str | None = None,
                   first_index: int = 1) -> list[EvalTask]:
    cfg = cfg or SynthesisConfig()
    count = count or cfg.tasks_per_metric
    prompt = render_named("task_generator", label=label, metric_name=metric.name,
                          metric_definition=metric.definition, task_count=count,
                          rejection_reason=rejection_reason or "none")
    try:
        reply = gateway.chat(Role.TASK_GENERATOR, [("user", prompt)]).text
    except GatewayError as exc:
        raise GenerationFailed(f"task generation failed for {metric.name!r}: {exc}") from exc
    parsed = extract_block(reply, "tasks", _parse_tasks)
    if not parsed:
        raise GenerationFailed(f"task generator returned no tasks for {metric.name!r}")
    slug = _slug(metric.name)
    return [EvalTask(f"{slug}-{first_index + i}", metric.name, text, constraints)
            for i, (text, constraints) in enumerate(parsed[:count])]


_PLACEHOLDER_RE = re.compile(r"\{[^{}]*\}|\[[A-Z][A-Z0-9_ ]*\]|<[A-Za-z_]+>|\bTODO\b|\bXXX\b")
_TRUNCATION_RE = re.compile(r"(\.\.\.|…|\[truncated\]|\[\.\.\.\])\s*$", re.IGNORECASE)
_TERMINAL = ".?!。？！"
_QUOTES = "\"'“”‘’「」"
_PAIRS = {"(": ")", "[": "]", "{": "}"}


def syntactic_check(task: EvalTask, cfg: SynthesisConfig | None = None) -> Check:
    """Rule-based structural screen; no model involved."""
    cfg = cfg or SynthesisConfig()
    text = task.prompt_text.strip()
    core = text.strip(_QUOTES).strip()
    reasons = []
    if len(core) < cfg.min_task_chars:
        reasons.append("too_short")
    if len(core) > cfg.max_task_chars:
        reasons.append("too_long")
    if _PLACEHOLDER_RE.search(core):
        reasons.append("placeholder")
    if _TRUNCATION_RE.search(core):
        reasons.append("truncated")
    elif not core or core[-1] not in _TERMINAL:
        reasons.append("no_terminal_punctuation")
    stack = []
    for ch in core:
        if ch in _PAIRS:
            stack.append(_PAIRS[ch])
        elif ch in _PAIRS.values():
            if not stack or stack.pop() != ch:
                stack.append("!")
                break
    if stack:
        reasons.append("unbalanced_brackets")
    return Check(not reasons, tuple(reasons))


def _parse_verdict(obj: Any) -> tuple[bool, str]:
    verdict = str(obj["verdict"]).strip().lower()
    if verdict not in ("sufficient", "insufficient"):
        raise ValueError(f"unknown verdict {verdict!r}")
    return verdict == "sufficient", str(obj.get("reason", "")).strip()


def complexity_check(task: EvalTask, metric: RubricMetric, gateway: Gateway, max_attempts: int = 3) -> Check:
    messages = [("user", render_named("complexity_checker", metric_name=metric.name,
                                      metric_definition=metric.definition, task=task.prompt_text))]
    reply = ""
    for attempt in range(1, max_attempts + 1):
        try:
            reply = gateway.chat(Role.COMPLEXITY_CHECKER, messages).text
        except GatewayError as exc:
            raise GenerationFailed(f"complexity check failed for {task.task_id}: {exc}") from exc
        parsed = extract_block(reply, "verdict", _parse_verdict)
        if parsed is not None:
            ok, reason = parsed
            return Check(ok, () if ok else (reason or "insufficient",), attempt)
        messages = messages + [
            ("assistant", reply),
            ("user", 'Answer only with the fenced verdict block: {"verdict": "sufficient" | "insufficient", "reason": "..."}'),
        ]
    raise ParseFailure(f"complexity checker gave no verdict for {task.task_id}", max_attempts, reply)


# --- suites --------------------------------------------------------------

@dataclass
class Suite:
    label: str
    metrics: list[RubricMetric]
    tasks: dict[str, list[EvalTask]] = field(default_factory=dict)
    rejected: list[EvalTask] = field(default_factory=list)
    shortfall: dict[str, int] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not any(self.shortfall.values())

    def accepted(self) -> list[EvalTask]:
        return [t for m in self.metrics for t in self.tasks.get(m.name, [])]

    def metric(self, name: str) -> RubricMetric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "metrics": [m.to_dict() for m in self.metrics],
            "tasks": {m.name: [t.to_dict() for t in self.tasks.get(m.name, [])] for m in self.metrics},
            "rejected": [t.to_dict() for t in self.rejected],
            "shortfall": dict(self.shortfall),
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Suite":
        return cls(
            d["label"],
            [RubricMetric.from_dict(m) for m in d["metrics"]],
            {k: [EvalTask.from_dict(t) for t in v] for k, v in d["tasks"].items()},
            [EvalTask.from_dict(t) for t in d.get("rejected", [])],
            dict(d.get("shortfall", {})),
        )


def _fill_metric(metric: RubricMetric, label: str, gateway: Gateway, cfg: SynthesisConfig,
                 suite: Suite) -> None:
    want = cfg.tasks_per_metric
    try:
        batch = generate_tasks(metric, label, gateway, cfg)
    except GenerationFailed as exc:
        logger.warning("initial task batch failed for %r: %s", metric.name, exc)
        batch = []
    accepted: list[EvalTask] = []
    # duplicates are checked across the whole suite, not just this metric
    seen = {normalize(t.prompt_text) for t in suite.accepted()}
    slug = _slug(metric.name)
    for slot in range(want):
        task = batch[slot] if slot < len(batch) else None
        attempts = 1
        reasons: list[str] = []
        while True:
            reason = None
            if task is None:
                reason = "generation_failed"
            else:
                task = replace(task, task_id=f"{slug}-{slot + 1}", attempts=attempts,
                               rejection_reasons=tuple(reasons))
                syn = syntactic_check(task, cfg)
                if syn.passed and normalize(task.prompt_text) in seen:
                    syn = Check(False, ("duplicate",))
                if not syn.passed:
                    reason = ",".join(syn.reasons)
                    suite.rejected.append(replace(task, status=TaskStatus.REJECTED_SYNTACTIC,
                                                  rejection_reasons=tuple(reasons + [reason])))
                else:
                    cx = complexity_check(task, metric, gateway)
                    if cx.passed:
                        task = replace(task, status=TaskStatus.ACCEPTED)
                        accepted.append(task)
                        seen.add(normalize(task.prompt_text))
                        break
                    reason = "; ".join(cx.reasons)
                    suite.rejected.append(replace(task, status=TaskStatus.REJECTED_COMPLEXITY,
                                                  rejection_reasons=tuple(reasons + [reason])))
            reasons.append(reason)
            if attempts >= cfg.max_attempts:
                break
            attempts += 1
            feedback = f"a previous task was rejected ({reason}): {task.prompt_text if task else ''}".strip()
            try:
                fresh = generate_tasks(metric, label, gateway, cfg, count=1,
                                       rejection_reason=feedback, first_index=slot + 1)
                task = fresh[0]
            except GenerationFailed:
                task = None
    suite.tasks[metric.name] = accepted
    suite.shortfall[metric.name] = want - len(accepted)


def synthesize_suite(label: str, gateway: Gateway, cfg: SynthesisConfig | None = None) -> Suite:
    """Build metrics and accepted tasks for ``label``.

    Raises :class:`SuiteIncomplete` (carrying the partial suite) when any
    metric ends short of ``tasks_per_metric`` accepted tasks.
    """
    cfg = cfg or SynthesisConfig()
    suite = Suite(label, generate_metrics(label, gateway, cfg))
    for metric in suite.metrics:
        _fill_metric(metric, label, gateway, cfg, suite)
    if not suite.complete:
        raise SuiteIncomplete({k: v for k, v in suite.shortfall.items() if v}, suite)
    return suite
