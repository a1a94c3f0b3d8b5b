"""Time-decay weighted engagement and category admission thresholds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from appqual.errors import (
    InvalidBeta,
    InvalidCounts,
    MissingCategoryThresholds,
    NegativeAge,
    ParseError,
)
from appqual.taxonomy import DEFAULT_CATEGORY, TaxonomyAssignment

ENGAGEMENT = ("views", "interactions", "favorites", "copies")
CAPABILITY = ("plugins", "knowledge_bases", "built_in_models")
DEFAULT_BETA = 0.99


@dataclass(frozen=True)
class AppRecord:
    id: str
    name: str
    description: str
    release_date: date
    views: int = 0
    interactions: int = 0
    favorites: int = 0
    copies: int = 0
    plugins: int = 0
    knowledge_bases: int = 0
    built_in_models: int = 0
    endpoint: str = ""
    extras: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        for name in ENGAGEMENT + CAPABILITY:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"{self.id}: {name} must be a non-negative integer, got {value!r}")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "name": self.name, "description": self.description,
                             "release_date": self.release_date.isoformat()}
        for name in ENGAGEMENT + CAPABILITY:
            d[name] = getattr(self, name)
        d["endpoint"] = self.endpoint
        if self.extras:
            d["extras"] = dict(self.extras)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AppRecord":
        counters = {k: int(d.get(k, 0)) for k in ENGAGEMENT + CAPABILITY}
        return cls(id=str(d["id"]), name=d["name"], description=d["description"],
                   release_date=date.fromisoformat(d["release_date"]), endpoint=d.get("endpoint", ""),
                   extras=dict(d.get("extras", {})), **counters)


def months_between(start: date, end: date) -> int:
    """Whole calendar months from ``start`` to ``end``, truncated by day of month."""
    if end < start:
        raise NegativeAge(f"as-of date {end} precedes release date {start}")
    months = (end.year - start.year) * 12 + (end.month - start.month)
    if end.day < start.day:
        months -= 1
    return months


def operating_quarters(months: int) -> int:
    if months < 0:
        raise NegativeAge(f"months must be >= 0, got {months}")
    return max(1, months // 3)


def decay_coefficient(quarters: int, beta: float = DEFAULT_BETA) -> float:
    if quarters < 1:
        raise ValueError(f"quarters must be >= 1, got {quarters}")
    if not 0.0 < beta <= 1.0:
        raise InvalidBeta(f"decay base must lie in (0, 1], got {beta}")
    return beta ** (quarters - 1)


def weight_indicator(x_total: float, quarters: int, omega: float) -> float:
    if x_total < 0:
        raise ValueError("indicator totals are non-negative")
    if quarters < 1:
        raise ValueError(f"quarters must be >= 1, got {quarters}")
    if not 0.0 < omega <= 1.0:
        raise ValueError(f"decay coefficient must lie in (0, 1], got {omega}")
    return (x_total / quarters) * omega


@dataclass(frozen=True)
class TimeWeightedEngagement:
    months: int
    quarters: int
    omega: float
    weighted: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {"months": self.months, "quarters": self.quarters, "omega": self.omega,
                "weighted": dict(self.weighted)}


def time_weighted_engagement(app: AppRecord, as_of: date, beta: float = DEFAULT_BETA) -> TimeWeightedEngagement:
    m = months_between(app.release_date, as_of)
    q = operating_quarters(m)
    omega = decay_coefficient(q, beta)
    weighted = {name: weight_indicator(getattr(app, name), q, omega) for name in ENGAGEMENT}
    return TimeWeightedEngagement(m, q, omega, weighted)


# --- thresholds ----------------------------------------------------------

@dataclass(frozen=True)
class CategoryThresholds:
    engagement_min: dict[str, float]
    capability_min: dict[str, int]
    engagement_policy: str = "any"
    capability_policy: str = "all"

    def __post_init__(self) -> None:
        _check_policy(self.engagement_policy, allow_k=True)
        _check_policy(self.capability_policy, allow_k=False)
        unknown = (set(self.engagement_min) - set(ENGAGEMENT)) | (set(self.capability_min) - set(CAPABILITY))
        if unknown:
            raise ParseError(f"unknown indicators in thresholds: {sorted(unknown)}")

    def to_dict(self) -> dict[str, Any]:
        return {"engagement_min": dict(self.engagement_min), "capability_min": dict(self.capability_min),
                "engagement_policy": self.engagement_policy, "capability_policy": self.capability_policy}


def _check_policy(policy: str, allow_k: bool) -> None:
    if policy in ("any", "all"):
        return
    if allow_k and policy.startswith("k_of_n:"):
        try:
            k = int(policy.split(":", 1)[1])
        except ValueError:
            pass
        else:
            if k >= 1:
                return
    raise ParseError(f"unsupported policy {policy!r}")


def _policy_holds(policy: str, verdicts: Sequence[bool]) -> bool:
    if not verdicts:
        return True
    if policy == "any":
        return any(verdicts)
    if policy == "all":
        return all(verdicts)
    k = int(policy.split(":", 1)[1])
    return sum(verdicts) >= k


@dataclass(frozen=True)
class ThresholdTable:
    categories: dict[str, CategoryThresholds]

    def for_category(self, category: str) -> CategoryThresholds:
        if category in self.categories:
            return self.categories[category]
        if DEFAULT_CATEGORY in self.categories:
            return self.categories[DEFAULT_CATEGORY]
        raise MissingCategoryThresholds(f"no thresholds for {category!r} and no {DEFAULT_CATEGORY!r} fallback")

    def with_policies(self, engagement_policy: str | None = None,
                      capability_policy: str | None = None) -> "ThresholdTable":
        out = {}
        for name, ct in self.categories.items():
            out[name] = CategoryThresholds(
                ct.engagement_min, ct.capability_min,
                engagement_policy or ct.engagement_policy,
                capability_policy or ct.capability_policy,
            )
        return ThresholdTable(out)

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": 1,
                "categories": {k: v.to_dict() for k, v in self.categories.items()}}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ThresholdTable":
        try:
            cats = {
                name: CategoryThresholds(
                    {k: float(v) for k, v in entry.get("engagement_min", {}).items()},
                    {k: int(v) for k, v in entry.get("capability_min", {}).items()},
                    entry.get("engagement_policy", "any"),
                    entry.get("capability_policy", "all"),
                )
                for name, entry in data["categories"].items()
            }
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"malformed threshold table: {exc}") from exc
        return cls(cats)


def load_thresholds(source: str | Path | None = None) -> ThresholdTable:
    if source is None:
        text = resources.files("appqual.data").joinpath("thresholds.json").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        return ThresholdTable.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"threshold file is not valid JSON: {exc}") from exc


# --- screening -----------------------------------------------------------

@dataclass(frozen=True)
class IndicatorVerdict:
    indicator: str
    kind: str
    value: float
    minimum: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {"indicator": self.indicator, "kind": self.kind, "value": self.value,
                "minimum": self.minimum, "passed": self.passed}


@dataclass(frozen=True)
class ScreeningDecision:
    app_id: str
    category: str
    weighted: TimeWeightedEngagement
    engagement_pass: bool
    capability_pass: bool
    reasons: tuple[IndicatorVerdict, ...]

    @property
    def admitted(self) -> bool:
        return self.engagement_pass and self.capability_pass

    def to_dict(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "category": self.category,
            "weighted": self.weighted.to_dict(),
            "engagement_pass": self.engagement_pass,
            "capability_pass": self.capability_pass,
            "admitted": self.admitted,
            "reasons": [r.to_dict() for r in self.reasons],
        }


@dataclass(frozen=True)
class ReductionStat:
    before: int
    after: int
    reduction_percent: float

    def to_dict(self) -> dict[str, Any]:
        return {"before": self.before, "after": self.after, "reduction_percent": self.reduction_percent}


def reduction_rate(before: int, after: int) -> float:
    """Share of a pool removed by screening, in percent rounded to 2 decimals."""
    if before <= 0 or after < 0 or after > before:
        raise InvalidCounts(f"need 0 <= after <= before and before > 0, got {before} -> {after}")
    return round(100.0 * (before - after) / before, 2)


def screen_app(app: AppRecord, assignment: TaxonomyAssignment, thresholds: ThresholdTable,
               as_of: date, beta: float = DEFAULT_BETA) -> ScreeningDecision:
    rules = thresholds.for_category(assignment.category)
    tw = time_weighted_engagement(app, as_of, beta)
    reasons: list[IndicatorVerdict] = []
    eng = []
    for name, minimum in rules.engagement_min.items():
        value = tw.weighted[name]
        ok = value >= minimum
        eng.append(ok)
        reasons.append(IndicatorVerdict(name, "engagement", value, minimum, ok))
    cap = []
    for name, minimum in rules.capability_min.items():
        value = getattr(app, name)
        ok = value >= minimum
        cap.append(ok)
        reasons.append(IndicatorVerdict(name, "capability", value, minimum, ok))
    return ScreeningDecision(
        app_id=app.id,
        category=assignment.category,
        weighted=tw,
        engagement_pass=_policy_holds(rules.engagement_policy, eng),
        capability_pass=_policy_holds(rules.capability_policy, cap),
        reasons=tuple(reasons),
    )


def screen_catalog(apps: Iterable[AppRecord], assignments: dict[str, TaxonomyAssignment],
                   thresholds: ThresholdTable, as_of: date,
                   beta: float = DEFAULT_BETA) -> tuple[list[ScreeningDecision], ReductionStat]:
    apps = list(apps)
    missing = [a.id for a in apps if a.id not in assignments]
    if missing:
        raise KeyError(f"no taxonomy assignment for apps: {missing}")
    decisions = [screen_app(a, assignments[a.id], thresholds, as_of, beta) for a in apps]
    after = sum(d.admitted for d in decisions)
    before = len(decisions)
    pct = reduction_rate(before, after) if before else 0.0
    return decisions, ReductionStat(before, after, pct)
