"""Stage orchestration over a run manifest.

Each stage reads what earlier stages recorded in the manifest and appends its
own records, so stages can run in one process (``run_all``) or one CLI call
at a time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

from appqual.analytics import auto_series, consistency_report, load_human_ratings
from appqual.catalog import Catalog
from appqual.errors import (
    AppQualError,
    GatewayError,
    GenerationFailed,
    IncompleteRun,
    ParseFailure,
    SuiteIncomplete,
)
from appqual.gateway import Gateway
from appqual.judge import (
    DEFAULT_ALPHA,
    AppRouter,
    JudgeVerdict,
    PerformanceSample,
    aggregate_app_score,
    judge_content,
    performance_sample,
    run_task,
)
from appqual.labeler import LabelerConfig, verify_and_refine
from appqual.manifest import RunManifest, StageRecord, persist_stage
from appqual.screening import DEFAULT_BETA, ThresholdTable, screen_catalog
from appqual.synthesis import Suite, SynthesisConfig, synthesize_suite
from appqual.taxonomy import DEFAULT_CATEGORY, Taxonomy, TaxonomyAssignment, match_label

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    beta: float = DEFAULT_BETA
    alpha: float = DEFAULT_ALPHA
    as_of: date | None = None
    seed: int = 0
    mock: bool = False
    provider: str = "mock"
    labeler: LabelerConfig = field(default_factory=LabelerConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)

    def snapshot(self, thresholds: ThresholdTable, taxonomy_source: str) -> dict[str, Any]:
        return {
            "beta": self.beta,
            "alpha": self.alpha,
            "beta_w": 1.0 - self.alpha,
            "as_of": self.as_of.isoformat() if self.as_of else None,
            "seed": self.seed,
            "mock": self.mock,
            "provider": self.provider,
            "labeler": self.labeler.to_dict(),
            "synthesis": self.synthesis.to_dict(),
            "thresholds": thresholds.to_dict(),
            "taxonomy": taxonomy_source,
        }


@dataclass
class Context:
    gateway: Gateway
    router: AppRouter
    taxonomy: Taxonomy
    thresholds: ThresholdTable
    config: RunConfig


def catalog_of(manifest: RunManifest) -> Catalog:
    ingest = manifest.latest("ingest")
    if None not in ingest:
        raise IncompleteRun("run has no ingested catalog")
    return Catalog.from_dict(ingest[None]["catalog"])


def _require(manifest: RunManifest, stage: str) -> dict[str | None, dict[str, Any]]:
    records = manifest.latest(stage)
    if not records:
        raise IncompleteRun(f"stage {stage!r} has not run yet")
    return records


def stage_ingest(manifest: RunManifest, catalog: Catalog) -> None:
    persist_stage(manifest, StageRecord("ingest", {"catalog": catalog.to_dict()}))


def stage_classify(manifest: RunManifest, ctx: Context) -> None:
    for app in catalog_of(manifest).apps:
        payload: dict[str, Any]
        try:
            result = verify_and_refine(app, ctx.config.labeler, ctx.gateway)
            assignment = match_label(result.label, ctx.taxonomy)
            payload = {"label": result.to_dict(), "assignment": assignment.to_dict()}
        except (AppQualError, ValueError) as exc:
            logger.warning("labeling failed for %s: %s", app.id, exc)
            fallback = TaxonomyAssignment(label="", category=DEFAULT_CATEGORY)
            payload = {"label": None, "assignment": fallback.to_dict(), "error": str(exc)}
        persist_stage(manifest, StageRecord("classify", payload, key=app.id))


def stage_screen(manifest: RunManifest, ctx: Context) -> None:
    catalog = catalog_of(manifest)
    classified = _require(manifest, "classify")
    assignments = {k: TaxonomyAssignment.from_dict(v["assignment"]) for k, v in classified.items()}
    as_of = ctx.config.as_of or catalog.snapshot_date
    decisions, stat = screen_catalog(catalog.apps, assignments, ctx.thresholds, as_of, ctx.config.beta)
    for d in decisions:
        persist_stage(manifest, StageRecord("screen", d.to_dict(), key=d.app_id))
    persist_stage(manifest, StageRecord("screen_summary", {"as_of": as_of.isoformat(), **stat.to_dict()}))


def admitted_ids(manifest: RunManifest) -> list[str]:
    screened = _require(manifest, "screen")
    order = [a.id for a in catalog_of(manifest).apps]
    return [i for i in order if screened.get(i, {}).get("admitted")]


def _label_of(manifest: RunManifest, app_id: str) -> str:
    rec = manifest.latest("classify").get(app_id) or {}
    return (rec.get("label") or {}).get("label", "")


def stage_synthesize(manifest: RunManifest, ctx: Context) -> None:
    labels: list[str] = []
    for app_id in admitted_ids(manifest):
        label = _label_of(manifest, app_id)
        if label and label not in labels:
            labels.append(label)
    for label in labels:
        try:
            suite = synthesize_suite(label, ctx.gateway, ctx.config.synthesis)
            payload = suite.to_dict()
        except SuiteIncomplete as exc:
            logger.warning("partial suite for %r: %s", label, exc)
            payload = exc.suite.to_dict() if exc.suite is not None else {"label": label, "error": str(exc)}
        except (GenerationFailed, ParseFailure, GatewayError) as exc:
            logger.warning("no suite for %r: %s", label, exc)
            payload = {"label": label, "error": str(exc)}
        persist_stage(manifest, StageRecord("synthesize", payload, key=label))


def _suites(manifest: RunManifest) -> dict[str, Suite]:
    return {k: Suite.from_dict(v) for k, v in manifest.latest("synthesize").items() if "metrics" in v}


def stage_evaluate(manifest: RunManifest, ctx: Context) -> None:
    catalog = catalog_of(manifest).by_id()
    suites = _suites(manifest)
    for app_id in admitted_ids(manifest):
        app = catalog[app_id]
        suite = suites.get(_label_of(manifest, app_id))
        if suite is None or not suite.accepted():
            persist_stage(manifest, StageRecord("evaluate", {"error": "no evaluation suite"}, key=app_id))
            continue
        runs, verdicts, samples, errors = [], [], [], []
        for task in suite.accepted():
            try:
                run = run_task(app, task, ctx.router)
                runs.append(run.to_dict())
                samples.append(performance_sample(run).to_dict())
                verdict = judge_content(task, run.response_text, suite.metric(task.metric_name), ctx.gateway)
                verdicts.append(verdict.to_dict())
            except (AppQualError, ValueError) as exc:
                logger.warning("task %s failed for %s: %s", task.task_id, app_id, exc)
                errors.append({"task_id": task.task_id, "error": f"{type(exc).__name__}: {exc}"})
        payload = {"label": suite.label, "runs": runs, "verdicts": verdicts, "samples": samples,
                   "errors": errors, "suite_complete": suite.complete}
        persist_stage(manifest, StageRecord("evaluate", payload, key=app_id))


def stage_score(manifest: RunManifest, ctx: Context) -> None:
    # an empty pool (nothing admitted) leaves nothing to score, which is fine
    for app_id, rec in manifest.latest("evaluate").items():
        verdicts = [JudgeVerdict.from_dict(v) for v in rec.get("verdicts", [])]
        samples = [PerformanceSample.from_dict(s) for s in rec.get("samples", [])]
        if not verdicts or not samples:
            persist_stage(manifest, StageRecord("score", {"error": "nothing to score"}, key=app_id))
            continue
        score = aggregate_app_score(verdicts, samples, ctx.config.alpha)
        persist_stage(manifest, StageRecord("score", score.to_dict(), key=app_id))


def auto_scores(manifest: RunManifest) -> list[tuple[str, str, float]]:
    out = []
    for app_id, rec in sorted(_require(manifest, "score").items()):
        for metric, value in sorted((rec.get("per_metric") or {}).items()):
            out.append((app_id, metric, value))
    return out


def stage_validate(manifest: RunManifest, ratings_path: str | Path, method: str = "t") -> dict[str, Any]:
    human = load_human_ratings(ratings_path)
    report = consistency_report(auto_series(auto_scores(manifest)), human, method)
    payload = {"ratings_file": Path(ratings_path).name, **report.to_dict()}
    persist_stage(manifest, StageRecord("validate", payload))
    return payload


def run_all(manifest: RunManifest, catalog: Catalog, ctx: Context,
            human_ratings: str | Path | None = None) -> RunManifest:
    stage_ingest(manifest, catalog)
    stage_classify(manifest, ctx)
    stage_screen(manifest, ctx)
    stage_synthesize(manifest, ctx)
    stage_evaluate(manifest, ctx)
    stage_score(manifest, ctx)
    if human_ratings is not None:
        stage_validate(manifest, human_ratings)
    return manifest
