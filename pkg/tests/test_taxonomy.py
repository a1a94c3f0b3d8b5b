from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from appqual.errors import DuplicateKeyword, EmptyLabel, OrphanNode, ParseError
from appqual.taxonomy import (
    MatchLevel,
    Taxonomy,
    load_taxonomy,
    match_label,
    normalize,
    serialize_taxonomy,
)


def test_builtin_shape(taxonomy):
    assert taxonomy.category_names() == ["Professional Q&A", "Tool-type", "General"]
    assert len(taxonomy.subcategories) == 10
    assert taxonomy.parent_of("Legal Consultation") == "Professional Q&A"
    assert taxonomy.parent_of("Planning Tools") == "Tool-type"


def _doc(taxonomy):
    return json.loads(serialize_taxonomy(taxonomy))


def test_orphan_tag(tmp_path, taxonomy):
    doc = _doc(taxonomy)
    doc["tags"].append({"keyword": "Aviation", "subcategory": "Flight Tools"})
    path = tmp_path / "tax.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(OrphanNode):
        load_taxonomy(path)


def test_orphan_subcategory(taxonomy):
    doc = _doc(taxonomy)
    doc["subcategories"].append({"name": "Games", "category": "Entertainment"})
    with pytest.raises(OrphanNode):
        Taxonomy.from_dict(doc)


def test_duplicate_keyword(tmp_path, taxonomy):
    doc = _doc(taxonomy)
    doc["tags"].append({"keyword": "Laws", "subcategory": "Legal Consultation"})
    path = tmp_path / "tax.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(DuplicateKeyword):
        load_taxonomy(path)


def test_duplicate_keyword_after_normalization(taxonomy):
    doc = _doc(taxonomy)
    doc["tags"].append({"keyword": " LAWS! ", "subcategory": "Education"})
    with pytest.raises(DuplicateKeyword):
        Taxonomy.from_dict(doc)


def test_general_must_exist(taxonomy):
    doc = _doc(taxonomy)
    doc["categories"] = [c for c in doc["categories"] if c["name"] != "General"]
    with pytest.raises(ParseError):
        Taxonomy.from_dict(doc)


def test_round_trip(taxonomy):
    assert Taxonomy.from_dict(_doc(taxonomy)) == taxonomy


@pytest.mark.parametrize("raw,expected", [
    ("  Legal   Consultation! ", "legal consultation"),
    ("laws", "laws"),
    ("Front-end, (Python)", "front-end python"),
    ("「翻译」", "翻译"),
])
def test_normalize(raw, expected):
    assert normalize(raw) == expected


@given(st.text())
def test_normalize_idempotent(text):
    assert normalize(normalize(text)) == normalize(text)


@pytest.mark.parametrize("label,path", [
    ("laws consulting analysis", ("Professional Q&A", "Legal Consultation", "Laws")),
    ("travel itinerary planning", ("Tool-type", "Planning Tools", "Planning")),
    ("daily chat companion", ("General", None, None)),
])
def test_match_examples(taxonomy, label, path):
    a = match_label(label, taxonomy)
    assert (a.category, a.subcategory, a.tag) == path


def test_whole_token_not_substring(taxonomy):
    # "code" is a tag but "codec" must not hit it
    assert match_label("codec settings helper", taxonomy).match_level == MatchLevel.DEFAULT


def test_multi_token_keyword_beats_single(taxonomy):
    a = match_label("statistical analysis of sales", taxonomy)
    assert a.tag == "Statistical Analysis"
    b = match_label("planning design studio", taxonomy)
    assert b.tag == "Planning Design"


def test_subcategory_level_match():
    tax = Taxonomy.from_dict({
        "categories": [{"name": "Tool-type"}, {"name": "General"}],
        "subcategories": [{"name": "Design Tools", "category": "Tool-type"}],
        "tags": [{"keyword": "Branding", "subcategory": "Design Tools"}],
    })
    a = match_label("handy design tools kit", tax)
    assert a.match_level == MatchLevel.SUBCATEGORY
    assert (a.category, a.subcategory, a.tag) == ("Tool-type", "Design Tools", None)


def test_empty_label(taxonomy):
    with pytest.raises(EmptyLabel):
        match_label("  ... ", taxonomy)


FILLER = st.lists(st.sampled_from(["daily", "helper", "smart", "quick", "my", "friendly", "bot", "the"]),
                  max_size=5)


@given(st.data())
def test_single_injected_tag_resolves_at_tag_level(data):
    tax = load_taxonomy()
    tag = data.draw(st.sampled_from(tax.tags))
    before, after = data.draw(FILLER), data.draw(FILLER)
    label = " ".join(before + [tag.keyword] + after)
    a = match_label(label, tax)
    assert a.match_level == MatchLevel.TAG
    assert a.tag == tag.keyword
    assert a.subcategory == tag.parent_subcategory
    assert a.category == tax.parent_of(tag.parent_subcategory)


@given(st.sampled_from(["laws consulting analysis", "Python debugging", "daily chat"]),
       st.sampled_from([str.upper, str.lower, str.title]), st.text(" \t\n", max_size=3))
def test_case_and_whitespace_invariance(label, case, pad):
    tax = load_taxonomy()
    base = match_label(label, tax)
    other = match_label(pad + case(label) + pad, tax)
    assert (other.category, other.subcategory, other.tag) == (base.category, base.subcategory, base.tag)


@given(st.text(min_size=1).filter(lambda s: normalize(s)))
def test_match_is_total(label):
    tax = load_taxonomy()
    a = match_label(label, tax)
    assert a.category in tax.category_names()
    assert match_label(label, tax) == a
