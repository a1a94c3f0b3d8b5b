"""Report assembly from a run manifest (JSON and Markdown)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from appqual.errors import IncompleteRun
from appqual.manifest import RunManifest, atomic_write, dumps

NOT_RUN = "not run"


def _catalog(manifest: RunManifest) -> dict[str, Any]:
    ingest = manifest.latest("ingest").get(None)
    return ingest["catalog"] if ingest else {"apps": [], "source": "", "snapshot_date": None}


def _superseded(manifest: RunManifest) -> list[dict[str, Any]]:
    """Records replaced by a later record for the same stage and key.

    They stay in the manifest; the report lists them so nothing disappears
    silently.
    """
    last: dict[tuple[str, str | None], int] = {}
    for rec in manifest.records:
        last[(rec["stage"], rec["key"])] = rec["seq"]
    return [{"seq": r["seq"], "stage": r["stage"], "key": r["key"], "reason": "superseded"}
            for r in manifest.records if last[(r["stage"], r["key"])] != r["seq"]]


def build_report(manifest: RunManifest) -> dict[str, Any]:
    """Derive the report model; every value is JSON-native so a reparsed
    ``report.json`` compares equal to this output."""
    if not manifest.has("screen"):
        raise IncompleteRun("report needs at least the screening stage")
    catalog = _catalog(manifest)
    classify = manifest.latest("classify")
    screen = manifest.latest("screen")
    evaluate = manifest.latest("evaluate")
    score = manifest.latest("score")
    suites = manifest.latest("synthesize")
    summary = manifest.latest("screen_summary").get(None)
    validate = manifest.latest("validate").get(None)
    cfg = manifest.config
    dynamic_ran = manifest.has("synthesize") or (summary is not None and summary["after"] == 0)

    apps = []
    for app in catalog["apps"]:
        aid = app["id"]
        cls = classify.get(aid) or {}
        scr = screen.get(aid)
        entry: dict[str, Any] = {
            "app_id": aid,
            "name": app["name"],
            "label": cls.get("label") if cls else NOT_RUN,
            "assignment": cls.get("assignment") if cls else NOT_RUN,
            "screening": scr if scr is not None else NOT_RUN,
        }
        if cls.get("error"):
            entry["label_error"] = cls["error"]
        if scr is None or not scr["admitted"]:
            entry["dynamic"] = "not admitted" if scr is not None else NOT_RUN
        elif aid not in evaluate:
            entry["dynamic"] = NOT_RUN
        else:
            ev = evaluate[aid]
            sc = score.get(aid)
            entry["dynamic"] = {
                "label": ev.get("label"),
                "suite_complete": ev.get("suite_complete"),
                "runs": ev.get("runs", []),
                "verdicts": ev.get("verdicts", []),
                "samples": ev.get("samples", []),
                "errors": ev.get("errors", []) + ([{"error": ev["error"]}] if "error" in ev else []),
                "score": sc if sc is not None else NOT_RUN,
            }
        apps.append(entry)

    suite_view = {}
    for label, s in suites.items():
        suite_view[label] = {
            "complete": s.get("complete", False),
            "shortfall": s.get("shortfall", {}),
            "metrics": s.get("metrics", []),
            "tasks": s.get("tasks", {}),
            "rejected": s.get("rejected", []),
            **({"error": s["error"]} if "error" in s else {}),
        }

    ranking = sorted(
        ((a["app_id"], a["dynamic"]["score"]["score"]) for a in apps
         if isinstance(a["dynamic"], dict) and isinstance(a["dynamic"]["score"], dict)
         and "score" in a["dynamic"]["score"]),
        key=lambda x: (-x[1], x[0]),
    )
    return {
        "schema_version": 1,
        "omitted": _superseded(manifest),
        "run_id": manifest.run_id,
        "created_at": manifest.created_at,
        "weights": {"alpha": cfg.get("alpha"), "beta_w": cfg.get("beta_w"), "decay_beta": cfg.get("beta")},
        "catalog": {"source": catalog.get("source"), "snapshot_date": catalog.get("snapshot_date"),
                    "screening": summary if summary is not None else NOT_RUN},
        "suites": suite_view if dynamic_ran else NOT_RUN,
        "ranking": [{"app_id": a, "score": s} for a, s in ranking],
        "consistency": validate if validate is not None else NOT_RUN,
        "apps": apps,
    }


def _fmt(x: Any, nd: int = 2) -> str:
    return f"{x:.{nd}f}" if isinstance(x, (int, float)) and not isinstance(x, bool) else str(x)


def render_markdown(report: dict[str, Any]) -> str:
    w = report["weights"]
    alpha, beta_w = w["alpha"], w["beta_w"]
    lines = [
        f"# App quality report (run {report['run_id']})",
        "",
        f"Composite score = {_fmt(alpha, 1)} x S_CQ + {_fmt(beta_w, 1)} x S_RP "
        f"(alpha = {_fmt(alpha, 1)}). Engagement decay base beta = {_fmt(w['decay_beta'])}.",
        "",
        "## Catalog",
        "",
        f"- Source: {report['catalog']['source']}",
        f"- Snapshot date: {report['catalog']['snapshot_date']}",
    ]
    scr = report["catalog"]["screening"]
    if isinstance(scr, dict):
        lines.append(f"- Static screening: {scr['before']} -> {scr['after']} apps "
                     f"({_fmt(scr['reduction_percent'])}% reduction, as of {scr['as_of']})")
    else:
        lines.append(f"- Static screening: {scr}")
    cons = report["consistency"]
    if isinstance(cons, dict):
        flag = " (perfect rank agreement)" if cons.get("perfect") else ""
        lines.append(f"- Human consistency: Spearman rho = {_fmt(cons['rho'], 3)}, n = {cons['n']}, "
                     f"p = {_fmt(cons['p_value'], 4)} [{cons['method']}]{flag}")
    else:
        lines.append(f"- Human consistency: {cons}")

    if report["ranking"]:
        lines += ["", "## Ranking", "", "| Rank | App | Score |", "|---|---|---|"]
        for i, r in enumerate(report["ranking"], 1):
            lines.append(f"| {i} | {r['app_id']} | {_fmt(r['score'])} |")

    suites = report["suites"]
    lines += ["", "## Evaluation suites", ""]
    if isinstance(suites, dict):
        for label, s in suites.items():
            state = "complete" if s["complete"] else f"incomplete {s['shortfall']}"
            lines.append(f"### {label} ({state})")
            if "error" in s:
                lines.append(f"Error: {s['error']}")
            for m in s["metrics"]:
                lines.append(f"- **{m['name']}**: {m['definition']}")
                for lvl in sorted(m["rubric"], key=int):
                    lines.append(f"  - {lvl}: {m['rubric'][lvl]}")
                for t in s["tasks"].get(m["name"], []):
                    lines.append(f"  - task `{t['task_id']}` (attempts {t['attempts']}): {t['prompt_text']}")
            if s["rejected"]:
                lines.append(f"- {len(s['rejected'])} rejected candidate task(s)")
            lines.append("")
    else:
        lines.append(f"Dynamic evaluation: {suites}")

    lines += ["", "## Apps", ""]
    for a in report["apps"]:
        lines.append(f"### {a['app_id']}: {a['name']}")
        label = a["label"]
        if isinstance(label, dict):
            conf = " (low confidence)" if label.get("low_confidence") else ""
            lines.append(f"- Label: {label['label']} (similarity {_fmt(label['similarity'], 3)}, "
                         f"{label['iterations_used']} iteration(s)){conf}")
        else:
            lines.append(f"- Label: {label if label is not None else 'failed'}")
        if a.get("label_error"):
            lines.append(f"- Labeling error: {a['label_error']}")
        asg = a["assignment"]
        if isinstance(asg, dict):
            path = " / ".join(x for x in (asg["category"], asg["subcategory"], asg["tag"]) if x)
            lines.append(f"- Taxonomy: {path} (matched at {asg['match_level']} level)")
        scr = a["screening"]
        if isinstance(scr, dict):
            wt = scr["weighted"]
            verdict = "admitted" if scr["admitted"] else "rejected"
            lines.append(f"- Screening: {verdict} as {scr['category']} (Q = {wt['quarters']}, "
                         f"omega = {_fmt(wt['omega'], 4)})")
            for r in scr["reasons"]:
                mark = "pass" if r["passed"] else "FAIL"
                lines.append(f"  - {r['indicator']} ({r['kind']}): {_fmt(r['value'])} >= "
                             f"{_fmt(r['minimum'], 0)} {mark}")
        else:
            lines.append(f"- Screening: {scr}")
        dyn = a["dynamic"]
        if not isinstance(dyn, dict):
            lines.append(f"- Dynamic evaluation: {dyn}")
            lines.append("")
            continue
        sc = dyn["score"]
        if isinstance(sc, dict) and "score" in sc:
            lines.append(f"- S_CQ = {_fmt(sc['s_cq'])}, S_RP = {_fmt(sc['s_rp'])}, "
                         f"Score = {_fmt(sc['score'])}")
            for metric, value in sc["per_metric"].items():
                lines.append(f"  - {metric}: {_fmt(value)}")
        else:
            lines.append(f"- Score: {sc if not isinstance(sc, dict) else sc.get('error')}")
        for v in dyn["verdicts"]:
            lines.append(f"- `{v['task_ref']}` scored {v['score']}")
            for key in ("strengths", "weaknesses", "suggestions"):
                if v[key]:
                    lines.append(f"  - {key}: " + "; ".join(v[key]))
        for s in dyn["samples"]:
            lines.append(f"- `{s['task_ref']}`: {s['tokens']} tokens in {_fmt(s['r_time_s'])} s "
                         f"= {_fmt(s['eta'])} tokens/s, level {s['level_score']}")
        for e in dyn["errors"]:
            lines.append(f"- error: {e}")
        lines.append("")
    if report["omitted"]:
        lines += ["## Omitted records", ""]
        for o in report["omitted"]:
            lines.append(f"- #{o['seq']} {o['stage']} {o['key'] or ''}: {o['reason']}")
    return "\n".join(lines).rstrip() + "\n"


def emit_report(manifest: RunManifest, formats: tuple[str, ...] = ("json", "markdown"),
                out_dir: str | Path | None = None) -> list[Path]:
    report = build_report(manifest)
    out = Path(out_dir) if out_dir else manifest.path.parent
    written = []
    for fmt in formats:
        if fmt == "json":
            path = out / "report.json"
            atomic_write(path, dumps(report))
        elif fmt == "markdown":
            path = out / "report.md"
            atomic_write(path, render_markdown(report))
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        written.append(path)
    return written


def load_report(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
