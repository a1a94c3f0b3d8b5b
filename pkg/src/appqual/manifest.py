"""Append-only run manifest persisted with atomic replace.

Run directory layout::

    <run_dir>/manifest.json        header, config snapshot and every stage record
    <run_dir>/stages/NNNN_<stage>[_<key>].json   one file per record
    <run_dir>/report.json, report.md
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from appqual.errors import ParseError, StorageFailure

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


def dumps(obj: Any) -> str:
    """Canonical JSON: identical content always gives identical bytes."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        if isinstance(exc, Exception):
            raise StorageFailure(f"could not write {path}: {exc}") from exc
        raise


@dataclass
class StageRecord:
    stage: str
    payload: dict[str, Any]
    key: str | None = None


@dataclass
class RunManifest:
    run_id: str
    created_at: str
    config: dict[str, Any]
    records: list[dict[str, Any]] = field(default_factory=list)
    path: Path | None = field(default=None, compare=False)
    clock: Callable[[], str] = field(default=utc_now, compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "run_id": self.run_id, "created_at": self.created_at,
                "config": self.config, "records": self.records}

    def latest(self, stage: str) -> dict[str | None, dict[str, Any]]:
        """Most recent payload of ``stage`` per key."""
        out: dict[str | None, dict[str, Any]] = {}
        for rec in self.records:
            if rec["stage"] == stage:
                out[rec["key"]] = rec["payload"]
        return out

    def has(self, stage: str) -> bool:
        return any(r["stage"] == stage for r in self.records)


def init_run(run_dir: str | Path, config: dict[str, Any], run_id: str | None = None,
             clock: Callable[[], str] = utc_now) -> RunManifest:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(run_id or uuid.uuid4().hex[:12], clock(), config,
                           path=run_dir / MANIFEST_NAME, clock=clock)
    atomic_write(manifest.path, dumps(manifest.to_dict()))
    return manifest


def load_manifest(run_dir: str | Path, clock: Callable[[], str] = utc_now) -> RunManifest:
    path = Path(run_dir) / MANIFEST_NAME
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"unreadable manifest {path}: {exc}") from exc
    return RunManifest(doc["run_id"], doc["created_at"], doc["config"], doc.get("records", []),
                       path=path, clock=clock)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-")[:60]


def persist_stage(manifest: RunManifest, record: StageRecord) -> RunManifest:
    """Append ``record`` and rewrite the manifest atomically.

    The in-memory manifest only changes once the new file is in place, so a
    failed write leaves both the file and the object as they were.
    """
    if manifest.path is None:
        raise StorageFailure("manifest has no run directory")
    entry = {
        "run_id": manifest.run_id,
        "seq": len(manifest.records) + 1,
        "stage": record.stage,
        "key": record.key,
        "recorded_at": manifest.clock(),
        "payload": record.payload,
    }
    json.dumps(entry, allow_nan=False)  # reject non-JSON payloads before touching disk
    doc = manifest.to_dict()
    doc["records"] = manifest.records + [entry]
    name = f"{entry['seq']:04d}_{record.stage}" + (f"_{_slug(record.key)}" if record.key else "")
    atomic_write(manifest.path.parent / "stages" / f"{name}.json", dumps(entry))
    atomic_write(manifest.path, dumps(doc))
    manifest.records.append(entry)
    return manifest
