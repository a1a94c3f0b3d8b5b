"""Rank-correlation validation against human ratings and pool statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import islice, permutations
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats

from appqual.errors import (
    DegenerateSeries,
    InsufficientN,
    MismatchedItems,
    ParseError,
    PerfectCorrelation,
)
from appqual.screening import ReductionStat, reduction_rate

__all__ = [
    "RatingSeries", "CorrelationReport", "average_ranks", "spearman_rho", "spearman_p_value",
    "exact_p_value", "consistency_report", "load_human_ratings", "reduction_rate", "ReductionStat",
]


@dataclass(frozen=True)
class RatingSeries:
    items: tuple[tuple[str, float], ...]
    label: str = ""

    def __post_init__(self) -> None:
        items = tuple((str(k), float(v)) for k, v in self.items)
        ids = [k for k, _ in items]
        if len(set(ids)) != len(ids):
            raise ValueError(f"series {self.label!r} has duplicate item ids")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_mapping(cls, values: dict[str, float], label: str = "") -> "RatingSeries":
        return cls(tuple(sorted(values.items())), label)

    def as_dict(self) -> dict[str, float]:
        return dict(self.items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class CorrelationReport:
    rho: float
    n: int
    p_value: float
    method: str = "spearman-t-approx"
    perfect: bool = False

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _pearson(a: Sequence[float], b: Sequence[float]) -> float:
    ma, mb = fmean(a), fmean(b)
    da = [x - ma for x in a]
    db = [y - mb for y in b]
    num = math.fsum(x * y for x, y in zip(da, db))
    den = math.sqrt(math.fsum(x * x for x in da) * math.fsum(y * y for y in db))
    return max(-1.0, min(1.0, num / den))


def _aligned(x: RatingSeries, y: RatingSeries) -> tuple[list[float], list[float]]:
    dx, dy = x.as_dict(), y.as_dict()
    if set(dx) != set(dy):
        only_x = sorted(set(dx) - set(dy))
        only_y = sorted(set(dy) - set(dx))
        raise MismatchedItems(f"item ids differ: only in {x.label or 'x'}: {only_x}; "
                              f"only in {y.label or 'y'}: {only_y}")
    keys = sorted(dx)
    return [dx[k] for k in keys], [dy[k] for k in keys]


def spearman_rho(x: RatingSeries, y: RatingSeries) -> float:
    xs, ys = _aligned(x, y)
    if len(xs) < 3:
        raise InsufficientN(f"need at least 3 items, got {len(xs)}")
    for s, series in ((xs, x), (ys, y)):
        if len(set(s)) == 1:
            raise DegenerateSeries(f"all values in {series.label or 'series'} are equal")
    return _pearson(average_ranks(xs), average_ranks(ys))


def spearman_p_value(rho: float, n: int) -> float:
    """Two-sided p-value via t = rho * sqrt((n - 2) / (1 - rho^2)) with n - 2 dof."""
    if n < 4:
        raise InsufficientN(f"need n >= 4 for a p-value, got {n}")
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    if abs(rho) >= 1.0:
        raise PerfectCorrelation("p-value is 0 for a perfect rank correlation")
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


@lru_cache(maxsize=None)
def _null_rhos(n: int) -> np.ndarray:
    """rho for every permutation of n untied ranks."""
    base = np.arange(1, n + 1, dtype=np.int64)
    perms = permutations(range(1, n + 1))
    chunks = []
    while True:
        block = np.array(list(islice(perms, 200_000)), dtype=np.int64)
        if block.size == 0:
            break
        chunks.append(((block - base) ** 2).sum(axis=1))
    d2 = np.concatenate(chunks)
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def exact_p_value(rho: float, n: int) -> float:
    """Two-sided permutation p-value over all n! rankings (no ties, n <= 10)."""
    if n < 4:
        raise InsufficientN(f"need n >= 4 for a p-value, got {n}")
    if n > 10:
        raise ValueError("exact enumeration is limited to n <= 10")
    null = _null_rhos(n)
    return float(np.mean(np.abs(null) >= abs(rho) - 1e-12))


def consistency_report(auto: RatingSeries, human: RatingSeries, method: str = "t") -> CorrelationReport:
    rho = spearman_rho(auto, human)
    n = len(auto)
    name = "spearman-t-approx" if method == "t" else "spearman-exact-permutation"
    perfect = abs(rho) >= 1.0 - 1e-12
    if perfect and method == "t":
        # the t statistic is infinite; report the limit instead of raising
        return CorrelationReport(rho, n, 0.0, name, perfect=True)
    if method == "t":
        p = spearman_p_value(rho, n)
    elif method == "exact":
        p = exact_p_value(rho, n)
    else:
        raise ValueError(f"unknown significance method {method!r}")
    return CorrelationReport(rho, n, p, name, perfect=perfect)


def item_key(app_id: str, metric_name: str) -> str:
    return f"{app_id}::{metric_name}"


def load_human_ratings(path: str | Path) -> RatingSeries:
    """Average a ``rater_id,app_id,metric_name,score`` CSV into one value per item."""
    scores: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"rater_id", "app_id", "metric_name", "score"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ParseError(f"human ratings need columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                score = float(row["score"])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"line {lineno}: bad score {row['score']!r}") from exc
            if not 1.0 <= score <= 5.0:
                raise ParseError(f"line {lineno}: score {score} outside 1-5")
            scores.setdefault(item_key(row["app_id"], row["metric_name"]), []).append(score)
    return RatingSeries.from_mapping({k: fmean(v) for k, v in scores.items()}, "human")


def auto_series(per_app_metric: Iterable[tuple[str, str, float]]) -> RatingSeries:
    return RatingSeries.from_mapping({item_key(a, m): s for a, m, s in per_app_metric}, "auto")
