from __future__ import annotations

import math
import re

import pytest
from conftest import app, make_gateway
from hypothesis import given, settings
from hypothesis import strategies as st

from appqual.errors import GenerationFailed, LengthRuleUnsatisfiable
from appqual.gateway import MockProvider, Role, VirtualClock
from appqual.labeler import LabelerConfig, LengthRule, generate_label, verify_and_refine
from appqual.mock import build_mock
from appqual.prompting import fenced

DESC = "Answers labor law questions about dismissal and contracts."


def _vec(sim: float) -> tuple[float, ...]:
    if sim == 0.7:
        return (7.0, 1.0, 5.0, 5.0)  # norm 10, so the cosine is exactly 0.7
    return (sim, math.sqrt(max(0.0, 1 - sim * sim)), 0.0, 0.0)


class Scripted:
    """Annotator emits 'candidate label N'; the embedder gives it similarity sims[N-1]."""

    def __init__(self, sims, labels=None):
        self.sims = list(sims)
        self.labels = labels
        self.calls = 0
        self.prompts = []

    def annotator(self, messages):
        self.prompts.append(messages[-1]["content"])
        self.calls += 1
        label = self.labels[self.calls - 1] if self.labels else f"candidate label {self.calls}"
        return fenced("label", {"label": label})

    def embed(self, text):
        if text == DESC:
            return (10.0, 0.0, 0.0, 0.0)
        m = re.search(r"(\d+)$", text)
        return _vec(self.sims[int(m.group(1)) - 1])

    def gateway(self):
        clock = VirtualClock()
        provider = MockProvider({Role.ANNOTATOR: self.annotator}, embedder=self.embed, clock=clock)
        return make_gateway(provider, clock)


def test_accepts_first_candidate_above_threshold():
    s = Scripted([0.82])
    r = verify_and_refine(app(description=DESC), LabelerConfig(), s.gateway())
    assert r.accepted and not r.low_confidence
    assert r.iterations_used == 1
    assert r.similarity == pytest.approx(0.82)


def test_exhaustion_returns_best_so_far():
    s = Scripted([0.5, 0.5, 0.5, 0.5, 0.5])
    r = verify_and_refine(app(description=DESC), LabelerConfig(max_iterations=5), s.gateway())
    assert r.low_confidence and not r.accepted
    assert r.iterations_used == 5
    assert r.label == "candidate label 1"


def test_best_candidate_is_the_maximum():
    s = Scripted([0.3, 0.6, 0.4])
    r = verify_and_refine(app(description=DESC), LabelerConfig(max_iterations=3), s.gateway())
    assert r.label == "candidate label 2"
    assert r.similarity == max(c[1] for c in r.candidates)


def test_threshold_is_inclusive():
    s = Scripted([0.7])
    r = verify_and_refine(app(description=DESC), LabelerConfig(), s.gateway())
    assert r.similarity == 0.7
    assert r.accepted and r.iterations_used == 1


def test_refinement_prompt_carries_previous_label_and_similarity():
    s = Scripted([0.4, 0.9])
    verify_and_refine(app(description=DESC), LabelerConfig(), s.gateway())
    assert "candidate label 1" in s.prompts[1]
    assert "0.400" in s.prompts[1]
    assert "candidate label 1" not in s.prompts[0]


def test_length_rule_gets_one_corrective_reprompt():
    s = Scripted([0.9], labels=["law", "labor law assistant 1"])
    r = verify_and_refine(app(description=DESC), LabelerConfig(), s.gateway())
    assert r.label == "labor law assistant 1"
    assert s.calls == 2


def test_length_rule_unsatisfiable():
    s = Scripted([0.9], labels=["law", "law"])
    with pytest.raises(LengthRuleUnsatisfiable):
        generate_label(app(description=DESC), s.gateway())


def test_every_iteration_failing_raises():
    s = Scripted([0.9], labels=["x"] * 10)
    with pytest.raises(GenerationFailed):
        verify_and_refine(app(description=DESC), LabelerConfig(max_iterations=3), s.gateway())


def test_character_length_rule():
    rule = LengthRule(unit="characters", min=6, max=9)
    assert rule.allows("法律咨询分析助") and not rule.allows("法律")


def test_empty_description_is_rejected():
    s = Scripted([0.9])
    with pytest.raises(ValueError):
        generate_label(app(description="  "), s.gateway())
    with pytest.raises(ValueError):
        verify_and_refine(app(description=""), LabelerConfig(), s.gateway())


@pytest.mark.parametrize("kind,expected", [("legal", "laws consulting analysis"),
                                           ("travel", "travel itinerary planning")])
def test_mock_fixture_labels(kind, expected, legal_catalog, travel_catalog):
    catalog = legal_catalog if kind == "legal" else travel_catalog
    provider, _, clock = build_mock(7)
    gw = make_gateway(provider, clock)
    first = catalog.apps[0]
    assert generate_label(first, gw) == expected
    r = verify_and_refine(first, LabelerConfig(), gw)
    assert r.label == expected and r.accepted


def test_deterministic_end_to_end(legal_catalog):
    results = []
    for _ in range(2):
        provider, _, clock = build_mock(3)
        results.append(verify_and_refine(legal_catalog.apps[1], LabelerConfig(), make_gateway(provider, clock)))
    assert results[0] == results[1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.integers(1, 6),
       st.floats(0.05, 1.0))
def test_properties_over_random_schedules(sims, max_iter, threshold):
    s = Scripted(sims + [0.0] * 8)
    cfg = LabelerConfig(similarity_threshold=threshold, max_iterations=max_iter)
    r = verify_and_refine(app(description=DESC), cfg, s.gateway())
    assert r.iterations_used <= max_iter
    if r.accepted:
        assert r.similarity >= threshold
    else:
        assert r.low_confidence
        assert r.similarity == max(c[1] for c in r.candidates)
