"""Command-line entry point.

Each subcommand runs one stage against a run directory; ``run-all`` runs the
whole pipeline.  Exit status: 0 success, 1 usage error, 2 run error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Any, Sequence

from appqual.catalog import ingest_catalog, resolve_catalog_path
from appqual.errors import AppQualError
from appqual.gateway import Gateway, load_provider_configs, with_profile_overrides
from appqual.judge import AppRouter, HttpAppAdapter
from appqual.labeler import LabelerConfig
from appqual.manifest import RunManifest, init_run, load_manifest
from appqual.mock import build_mock
from appqual.pipeline import (
    Context,
    RunConfig,
    run_all,
    stage_classify,
    stage_evaluate,
    stage_ingest,
    stage_score,
    stage_screen,
    stage_synthesize,
    stage_validate,
)
from appqual.report import emit_report
from appqual.screening import load_thresholds
from appqual.synthesis import SynthesisConfig
from appqual.taxonomy import load_taxonomy

logger = logging.getLogger("appqual")

EXIT_OK, EXIT_USAGE, EXIT_RUN = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad input; usage errors here are 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--provider", help="provider key from the providers file")
    common.add_argument("--mock", action="store_true", help="use the offline mock provider and app fleet")
    common.add_argument("--as-of", type=_iso_date, help="screening date (default: catalog snapshot date)")
    common.add_argument("--beta", type=float, help="engagement decay base (default 0.99)")
    common.add_argument("--alpha", type=float, help="content quality weight (default 0.8)")
    common.add_argument("--seed", type=int, help="mock seed")
    common.add_argument("--run-dir", type=Path, default=Path("run"), help="run directory (default ./run)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="appqual", description="Quality screening and evaluation of LLM apps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="start a run from a catalog file")
    p.add_argument("catalog", help="catalog path, or fixture:legal / fixture:travel")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--snapshot-date", type=_iso_date)
    for name, help_text in (("classify", "label apps and map labels to the taxonomy"),
                            ("screen", "apply static threshold screening"),
                            ("synthesize", "generate metrics and tasks per label"),
                            ("evaluate", "run tasks against admitted apps and judge the answers"),
                            ("score", "compute composite scores")):
        sub.add_parser(name, parents=[common], help=help_text)
    p = sub.add_parser("report", parents=[common], help="write report.json and report.md")
    p.add_argument("--format", choices=("json", "markdown", "both"), default="both")
    p = sub.add_parser("validate", parents=[common], help="correlate automated and human scores")
    p.add_argument("--human-ratings", type=Path, required=True)
    p.add_argument("--method", choices=("t", "exact"), default="t")
    p = sub.add_parser("run-all", parents=[common], help="run every stage and write the report")
    p.add_argument("catalog", help="catalog path, or fixture:legal / fixture:travel")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--snapshot-date", type=_iso_date)
    p.add_argument("--human-ratings", type=Path)
    return parser


def _file_config(args: argparse.Namespace) -> dict[str, Any]:
    if args.config is None:
        return {}
    try:
        return json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AppQualError(f"cannot read config {args.config}: {exc}") from exc


def _run_config(args: argparse.Namespace, file_cfg: dict[str, Any], stored: dict[str, Any] | None) -> RunConfig:
    """Flags beat the config file, which beats what the run recorded earlier."""
    base = dict(stored or {})
    base.update({k: v for k, v in file_cfg.items() if k in ("beta", "alpha", "as_of", "seed", "mock", "provider",
                                                          "labeler", "synthesis")})
    for key in ("beta", "alpha", "seed", "provider"):
        if getattr(args, key) is not None:
            base[key] = getattr(args, key)
    if args.as_of is not None:
        base["as_of"] = args.as_of.isoformat()
    if args.mock:
        base["mock"] = True
    mock = bool(base.get("mock", False))
    as_of = base.get("as_of")
    cfg = RunConfig(
        beta=float(base.get("beta", 0.99)),
        alpha=float(base.get("alpha", 0.8)),
        as_of=date.fromisoformat(as_of) if as_of else None,
        seed=int(base.get("seed", 0)),
        mock=mock,
        provider=base.get("provider") or ("mock" if mock else ""),
        labeler=LabelerConfig.from_dict(base["labeler"]) if base.get("labeler") else LabelerConfig(),
        synthesis=SynthesisConfig.from_dict(base["synthesis"]) if base.get("synthesis") else SynthesisConfig(),
    )
    if not 0.5 < cfg.alpha < 1:
        raise UsageError(f"--alpha must lie strictly between 0.5 and 1, got {cfg.alpha}")
    if not 0 < cfg.beta <= 1:
        raise UsageError(f"--beta must lie in (0, 1], got {cfg.beta}")
    return cfg


def _context(cfg: RunConfig, file_cfg: dict[str, Any]) -> Context:
    taxonomy = load_taxonomy(file_cfg.get("taxonomy"))
    thresholds = load_thresholds(file_cfg.get("thresholds"))
    policies = file_cfg.get("policies") or {}
    if policies:
        thresholds = thresholds.with_policies(policies.get("engagement"), policies.get("capability"))
    profiles = with_profile_overrides(file_cfg.get("profiles") or {})
    if cfg.mock:
        provider, fleet, clock = build_mock(cfg.seed)
        gateway = Gateway(provider, profiles=profiles, clock=clock)
        router = AppRouter({"mock": fleet}, clock)
    else:
        providers_file = file_cfg.get("providers")
        if not providers_file:
            raise UsageError("a live run needs a config with a 'providers' file (or pass --mock)")
        providers = load_provider_configs(providers_file)
        if cfg.provider not in providers:
            raise UsageError(f"--provider must be one of {sorted(providers)}, got {cfg.provider!r}")
        gateway = Gateway.from_config(providers[cfg.provider], profiles=profiles)
        http = HttpAppAdapter()
        router = AppRouter({"http": http, "https": http})
    return Context(gateway, router, taxonomy, thresholds, cfg)


def _snapshot(ctx: Context, file_cfg: dict[str, Any]) -> dict[str, Any]:
    snap = ctx.config.snapshot(ctx.thresholds, str(file_cfg.get("taxonomy") or "builtin"))
    if "policies" in file_cfg:
        snap["policies"] = file_cfg["policies"]
    return snap


def _start_run(args: argparse.Namespace, ctx: Context, file_cfg: dict[str, Any]) -> RunManifest:
    if (args.run_dir / "manifest.json").exists():
        raise UsageError(f"{args.run_dir} already holds a run; choose another --run-dir")
    return init_run(args.run_dir, _snapshot(ctx, file_cfg))


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_cfg = _file_config(args)
        starts_run = args.command in ("ingest", "run-all")
        manifest = None if starts_run else load_manifest(args.run_dir)
        cfg = _run_config(args, file_cfg, None if manifest is None else manifest.config)
        ctx = _context(cfg, file_cfg)

        if starts_run:
            catalog = ingest_catalog(resolve_catalog_path(args.catalog), args.format, args.snapshot_date)
            manifest = _start_run(args, ctx, file_cfg)
            if args.command == "ingest":
                stage_ingest(manifest, catalog)
                print(f"ingested {len(catalog.apps)} apps into {args.run_dir}")
                return EXIT_OK
            run_all(manifest, catalog, ctx, args.human_ratings)
            paths = emit_report(manifest)
            summary = manifest.latest("screen_summary")[None]
            print(f"screened {summary['before']} -> {summary['after']} apps "
                  f"({summary['reduction_percent']:.2f}% reduction)")
            print("wrote " + ", ".join(str(p) for p in paths))
            return EXIT_OK

        assert manifest is not None
        if args.command == "classify":
            stage_classify(manifest, ctx)
        elif args.command == "screen":
            stage_screen(manifest, ctx)
            s = manifest.latest("screen_summary")[None]
            print(f"screened {s['before']} -> {s['after']} apps ({s['reduction_percent']:.2f}% reduction)")
        elif args.command == "synthesize":
            stage_synthesize(manifest, ctx)
        elif args.command == "evaluate":
            stage_evaluate(manifest, ctx)
        elif args.command == "score":
            stage_score(manifest, ctx)
        elif args.command == "validate":
            result = stage_validate(manifest, args.human_ratings, args.method)
            print(f"rho = {result['rho']:.3f}, n = {result['n']}, p = {result['p_value']:.4g}")
        elif args.command == "report":
            formats = ("json", "markdown") if args.format == "both" else (args.format,)
            for path in emit_report(manifest, formats):
                print(f"wrote {path}")
        return EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"appqual: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"appqual: error: {exc}", file=sys.stderr)
        return EXIT_RUN
    except (AppQualError, ValueError, KeyError) as exc:
        print(f"appqual: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
