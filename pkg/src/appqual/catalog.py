"""Catalog files: JSON or CSV app listings captured from a store."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Any

from appqual.errors import DuplicateId, MissingField, ParseError
from appqual.screening import CAPABILITY, ENGAGEMENT, AppRecord

SCHEMA_VERSION = 1
REQUIRED = ("id", "name", "description", "release_date") + ENGAGEMENT + CAPABILITY
KNOWN = REQUIRED + ("endpoint",)
FIXTURES = {"legal": "legal_catalog.json", "travel": "travel_catalog.json"}


@dataclass(frozen=True)
class Catalog:
    apps: tuple[AppRecord, ...]
    source: str
    snapshot_date: date

    def __post_init__(self) -> None:
        ids = [a.id for a in self.apps]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise DuplicateId(f"duplicate app ids: {dupes}")

    def by_id(self) -> dict[str, AppRecord]:
        return {a.id: a for a in self.apps}

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": SCHEMA_VERSION, "source": self.source,
                "snapshot_date": self.snapshot_date.isoformat(),
                "apps": [a.to_dict() for a in self.apps]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Catalog":
        return cls(tuple(AppRecord.from_dict(a) for a in d["apps"]), d["source"],
                   date.fromisoformat(d["snapshot_date"]))


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture catalog (``legal`` or ``travel``)."""
    return Path(str(resources.files("appqual.data").joinpath(FIXTURES[name])))


def resolve_catalog_path(ref: str) -> Path:
    if ref.startswith("fixture:"):
        return fixture_path(ref.split(":", 1)[1])
    return Path(ref)


def _record(row: dict[str, Any], rownum: int) -> AppRecord:
    for name in REQUIRED:
        value = row.get(name)
        if value is None or (isinstance(value, str) and not value.strip() and name != "description"):
            raise MissingField(name, rownum)
    counters = {}
    for name in ENGAGEMENT + CAPABILITY:
        raw = row[name]
        try:
            counters[name] = int(str(raw).replace(",", "").strip()) if isinstance(raw, str) else int(raw)
        except ValueError as exc:
            raise ParseError(f"row {rownum}: {name} is not an integer: {raw!r}") from exc
    try:
        released = date.fromisoformat(str(row["release_date"]).strip())
    except ValueError as exc:
        raise ParseError(f"row {rownum}: bad release_date {row['release_date']!r}") from exc
    extras = {k: v for k, v in row.items() if k not in KNOWN and k != "extras"}
    extras.update(row.get("extras") or {})
    try:
        return AppRecord(id=str(row["id"]).strip(), name=str(row["name"]), description=str(row["description"]),
                         release_date=released, endpoint=str(row.get("endpoint") or ""), extras=extras,
                         **counters)
    except ValueError as exc:
        raise ParseError(f"row {rownum}: {exc}") from exc


def ingest_catalog(path: str | Path, format: str | None = None, snapshot_date: date | None = None) -> Catalog:
    """Read and validate a catalog.

    CSV files carry no header metadata, so their ``snapshot_date`` comes from
    the argument.  For JSON the argument overrides the file's value.
    """
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read catalog {path}: {exc}") from exc
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        if isinstance(doc, list):
            doc = {"apps": doc}
        rows = doc.get("apps")
        if not isinstance(rows, list):
            raise ParseError(f"{path}: expected an 'apps' list")
        source = doc.get("source", path.name)
        snap = snapshot_date or (date.fromisoformat(doc["snapshot_date"]) if doc.get("snapshot_date") else None)
    elif fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        source, snap = path.name, snapshot_date
    else:
        raise ParseError(f"unsupported catalog format {fmt!r}")
    if snap is None:
        raise MissingField("snapshot_date")
    apps = [_record(r, i) for i, r in enumerate(rows, start=1)]
    return Catalog(tuple(apps), source, snap)


def serialize_catalog(catalog: Catalog, path: str | Path, format: str | None = None) -> Path:
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    if fmt == "json":
        path.write_text(json.dumps(catalog.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    elif fmt == "csv":
        extra_cols = sorted({k for a in catalog.apps for k in a.extras})
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(KNOWN) + extra_cols)
            writer.writeheader()
            for app in catalog.apps:
                row = app.to_dict()
                row.pop("extras", None)
                row.update({k: app.extras.get(k, "") for k in extra_cols})
                writer.writerow(row)
    else:
        raise ParseError(f"unsupported catalog format {fmt!r}")
    return path
