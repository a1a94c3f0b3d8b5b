"""Three-level functional taxonomy and fine-to-coarse label matching."""

from __future__ import annotations

import json
import string
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

from appqual.errors import DuplicateKeyword, EmptyLabel, OrphanNode, ParseError

DEFAULT_CATEGORY = "General"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Category:
    name: str
    description: str = ""


@dataclass(frozen=True)
class Subcategory:
    name: str
    parent_category: str


@dataclass(frozen=True)
class Tag:
    keyword: str
    parent_subcategory: str


class MatchLevel(str, Enum):
    TAG = "tag"
    SUBCATEGORY = "subcategory"
    DEFAULT = "default"


@dataclass(frozen=True)
class TaxonomyAssignment:
    label: str
    category: str
    subcategory: str | None = None
    tag: str | None = None
    match_level: MatchLevel = MatchLevel.DEFAULT
    matched_keyword: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "category": self.category,
            "subcategory": self.subcategory,
            "tag": self.tag,
            "match_level": self.match_level.value,
            "matched_keyword": self.matched_keyword,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TaxonomyAssignment":
        return cls(d["label"], d["category"], d.get("subcategory"), d.get("tag"),
                   MatchLevel(d["match_level"]), d.get("matched_keyword"))


def _is_punct(ch: str) -> bool:
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def normalize(text: str) -> str:
    """Lowercase, collapse whitespace, strip punctuation off token edges.

    >>> normalize("  Legal   Consultation! ")
    'legal consultation'
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return " ".join(tokens)


def _tokens(text: str) -> tuple[str, ...]:
    return tuple(normalize(text).split())


def _contains(haystack: tuple[str, ...], needle: tuple[str, ...]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    return any(haystack[i:i + n] == needle for i in range(len(haystack) - n + 1))


@dataclass(frozen=True)
class Taxonomy:
    categories: tuple[Category, ...]
    subcategories: tuple[Subcategory, ...]
    tags: tuple[Tag, ...]
    _sub_parent: dict[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        cat_names = [c.name for c in self.categories]
        if len(set(cat_names)) != len(cat_names):
            raise ParseError("category names must be unique")
        general = [c for c in self.categories if c.name == DEFAULT_CATEGORY]
        if len(general) != 1:
            raise ParseError(f"taxonomy needs exactly one {DEFAULT_CATEGORY!r} category")
        sub_names = [s.name for s in self.subcategories]
        if len(set(sub_names)) != len(sub_names):
            raise ParseError("subcategory names must be unique")
        for sub in self.subcategories:
            if sub.parent_category not in cat_names:
                raise OrphanNode(f"subcategory {sub.name!r} has unknown parent {sub.parent_category!r}")
            if sub.parent_category == DEFAULT_CATEGORY:
                raise ParseError(f"{DEFAULT_CATEGORY!r} must not have subcategories")
        seen: dict[str, str] = {}
        for tag in self.tags:
            if tag.parent_subcategory not in sub_names:
                raise OrphanNode(f"tag {tag.keyword!r} has unknown parent {tag.parent_subcategory!r}")
            key = normalize(tag.keyword)
            if not key:
                raise ParseError("tag keyword is empty after normalization")
            if key in seen:
                raise DuplicateKeyword(f"tag keyword {tag.keyword!r} duplicates {seen[key]!r}")
            seen[key] = tag.keyword
        object.__setattr__(self, "_sub_parent", {s.name: s.parent_category for s in self.subcategories})

    def parent_of(self, subcategory: str) -> str:
        return self._sub_parent[subcategory]

    def category_names(self) -> list[str]:
        return [c.name for c in self.categories]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "categories": [{"name": c.name, "description": c.description} for c in self.categories],
            "subcategories": [{"name": s.name, "category": s.parent_category} for s in self.subcategories],
            "tags": [{"keyword": t.keyword, "subcategory": t.parent_subcategory} for t in self.tags],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Taxonomy":
        try:
            return cls(
                tuple(Category(c["name"], c.get("description", "")) for c in data["categories"]),
                tuple(Subcategory(s["name"], s["category"]) for s in data["subcategories"]),
                tuple(Tag(t["keyword"], t["subcategory"]) for t in data["tags"]),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed taxonomy document: {exc}") from exc


def load_taxonomy(source: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy JSON document, or the built-in default when ``source`` is None."""
    if source is None:
        text = resources.files("appqual.data").joinpath("taxonomy.json").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"taxonomy file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("taxonomy document must be a JSON object")
    return Taxonomy.from_dict(data)


def serialize_taxonomy(tax: Taxonomy) -> str:
    return json.dumps(tax.to_dict(), indent=2, ensure_ascii=False) + "\n"


def match_label(label: str, tax: Taxonomy) -> TaxonomyAssignment:
    """Resolve ``label`` to the most specific taxonomy node it mentions.

    Tags are tried before subcategory names.  Matching is by whole normalized
    tokens.  Among several hits the keyword with the most tokens wins, then
    the one declared first.
    """
    toks = _tokens(label)
    if not toks:
        raise EmptyLabel("label is empty")

    best: tuple[int, int, Tag] | None = None
    for order, tag in enumerate(tax.tags):
        kw = _tokens(tag.keyword)
        if _contains(toks, kw):
            rank = (-len(kw), order)
            if best is None or rank < best[:2]:
                best = (*rank, tag)
    if best is not None:
        tag = best[2]
        return TaxonomyAssignment(
            label=label,
            category=tax.parent_of(tag.parent_subcategory),
            subcategory=tag.parent_subcategory,
            tag=tag.keyword,
            match_level=MatchLevel.TAG,
            matched_keyword=normalize(tag.keyword),
        )

    best_sub: tuple[int, int, Subcategory] | None = None
    for order, sub in enumerate(tax.subcategories):
        kw = _tokens(sub.name)
        if _contains(toks, kw):
            rank = (-len(kw), order)
            if best_sub is None or rank < best_sub[:2]:
                best_sub = (*rank, sub)
    if best_sub is not None:
        sub = best_sub[2]
        return TaxonomyAssignment(
            label=label,
            category=sub.parent_category,
            subcategory=sub.name,
            match_level=MatchLevel.SUBCATEGORY,
            matched_keyword=normalize(sub.name),
        )

    return TaxonomyAssignment(label=label, category=DEFAULT_CATEGORY)
