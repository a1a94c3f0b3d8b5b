"""Label generation with an embedding-similarity feedback loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any

from appqual.errors import GatewayError, GenerationFailed, LengthRuleUnsatisfiable
from appqual.gateway import Gateway, Role, cosine_similarity
from appqual.prompting import extract_block, render_named
from appqual.screening import AppRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LengthRule:
    unit: str = "words"
    min: int = 2
    max: int = 6

    def __post_init__(self) -> None:
        if self.unit not in ("words", "characters"):
            raise ValueError(f"unit must be 'words' or 'characters', got {self.unit!r}")
        if not 1 <= self.min <= self.max:
            raise ValueError("length rule needs 1 <= min <= max")

    def measure(self, label: str) -> int:
        if self.unit == "words":
            return len(label.split())
        return len("".join(label.split()))

    def allows(self, label: str) -> bool:
        return self.min <= self.measure(label) <= self.max

    def describe(self) -> str:
        return f"between {self.min} and {self.max} {self.unit}"


@dataclass(frozen=True)
class LabelerConfig:
    similarity_threshold: float = 0.7
    max_iterations: int = 5
    length_rule: LengthRule = field(default_factory=LengthRule)

    def __post_init__(self) -> None:
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LabelerConfig":
        d = dict(d)
        if "length_rule" in d:
            d["length_rule"] = LengthRule(**d["length_rule"])
        return cls(**d)


@dataclass(frozen=True)
class LabelResult:
    label: str
    similarity: float
    iterations_used: int
    accepted: bool
    low_confidence: bool
    candidates: tuple[tuple[str, float], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "similarity": self.similarity,
            "iterations_used": self.iterations_used,
            "accepted": self.accepted,
            "low_confidence": self.low_confidence,
            "candidates": [list(c) for c in self.candidates],
        }


def _clean(label: str) -> str:
    label = " ".join(label.split())
    return label.strip("\"'`“”‘’.,;:!?。，").strip()


def _parse_label(text: str) -> str:
    def check(obj: Any) -> str:
        value = obj["label"]
        if not isinstance(value, str) or not value.strip():
            raise ValueError("empty label")
        return value

    found = extract_block(text, "label", check)
    if found is None:
        # plain-text answers: first non-empty line
        lines = [ln for ln in (text or "").splitlines() if ln.strip() and not ln.strip().startswith("```")]
        found = lines[0] if lines else ""
    return _clean(found)


def generate_label(app: AppRecord, gateway: Gateway, cfg: LabelerConfig | None = None,
                   previous: tuple[str, float] | None = None) -> str:
    """Ask the annotator for a label obeying the length rule.

    One corrective reprompt is made when the first answer has the wrong
    length.  ``previous`` switches to the refinement prompt, which shows the
    rejected label and its similarity.
    """
    cfg = cfg or LabelerConfig()
    if not app.description or not app.description.strip():
        raise ValueError(f"app {app.id} has no description to label")
    rule = cfg.length_rule
    values = {"app_name": app.name, "app_description": app.description.strip(),
              "length_rule": rule.describe()}
    if previous is None:
        prompt = render_named("annotator", **values)
    else:
        prompt = render_named("annotator_refine", **values, previous_label=previous[0],
                              previous_similarity=f"{previous[1]:.3f}",
                              threshold=f"{cfg.similarity_threshold:.2f}")
    messages = [("user", prompt)]
    for attempt in range(2):
        try:
            reply = gateway.chat(Role.ANNOTATOR, messages).text
        except GatewayError as exc:
            raise GenerationFailed(f"annotator call failed for {app.id}: {exc}") from exc
        label = _parse_label(reply)
        if label and rule.allows(label):
            return label
        messages = messages + [
            ("assistant", reply),
            ("user", f"The label {label!r} has {rule.measure(label)} {rule.unit}; "
                     f"it must be {rule.describe()}. Answer again in the same format."),
        ]
    raise LengthRuleUnsatisfiable(f"annotator could not meet '{rule.describe()}' for {app.id}")


def verify_and_refine(app: AppRecord, cfg: LabelerConfig, gateway: Gateway) -> LabelResult:
    if not app.description or not app.description.strip():
        raise ValueError(f"app {app.id} has no description to label")
    desc_vec = gateway.embed_text(app.description)
    candidates: list[tuple[str, float]] = []
    errors: list[Exception] = []
    previous: tuple[str, float] | None = None
    for i in range(1, cfg.max_iterations + 1):
        try:
            label = generate_label(app, gateway, cfg, previous)
            sim = cosine_similarity(gateway.embed_text(label), desc_vec)
        except (GenerationFailed, GatewayError) as exc:
            logger.warning("labeling iteration %d failed for %s: %s", i, app.id, exc)
            errors.append(exc)
            continue
        candidates.append((label, sim))
        if sim >= cfg.similarity_threshold:
            return LabelResult(label, sim, i, True, False, tuple(candidates))
        previous = (label, sim)
    if not candidates:
        raise GenerationFailed(f"every labeling iteration failed for {app.id}: {errors[-1]}")
    # first maximum wins on ties
    best = max(candidates, key=lambda c: c[1])
    return LabelResult(best[0], best[1], cfg.max_iterations, False, True, tuple(candidates))
