from __future__ import annotations

from fractions import Fraction

import pytest
from conftest import app, make_gateway
from hypothesis import given
from hypothesis import strategies as st
from oracles import band_oracle, composite_fraction

from appqual.errors import AppUnreachable, EmptyInputs, InvalidWeights, ParseFailure, TimeoutExceeded, ZeroElapsed
from appqual.gateway import MockProvider, Role, VirtualClock
from appqual.judge import (
    AppRouter,
    JudgeVerdict,
    PerformanceSample,
    ScriptedApp,
    aggregate_app_score,
    composite_score,
    efficiency_score,
    judge_content,
    performance_sample,
    response_efficiency,
    run_task,
)
from appqual.mock import MockResponders
from appqual.prompting import fenced
from appqual.synthesis import EvalTask, RubricMetric

METRIC = RubricMetric("Legal Citation Accuracy", "Are citations accurate?",
                      {i: f"level {i}" for i in range(1, 6)})
TASK = EvalTask("legal-citation-accuracy-1", METRIC.name,
                "If an employee is dismissed without notice, which labor law articles apply?")


def judge_gw(reply):
    clock = VirtualClock()
    provider = MockProvider({Role.JUDGE: reply}, clock=clock)
    return make_gateway(provider, clock), provider


def verdict_block(score):
    return fenced("judgement", {"score": score, "strengths": ["clear"], "weaknesses": ["short"],
                                "suggestions": ["cite articles"]})


# --- run_task ------------------------------------------------------------

def test_scripted_timing():
    clock = VirtualClock()
    text = " ".join(["word"] * 50)
    router = AppRouter({"mock": ScriptedApp(clock, {TASK.prompt_text: (text, 2.0)})}, clock)
    run = run_task(app("A1"), TASK, router)
    assert run.tokens == 50 and run.r_time_s == 2.0 and not run.empty
    s = performance_sample(run)
    assert s.eta == 25.0 and s.level_score == 5


def test_unreachable_endpoint():
    clock = VirtualClock()
    router = AppRouter({"mock": ScriptedApp(clock)}, clock)
    with pytest.raises(AppUnreachable):
        run_task(app("A1", endpoint="ftp:nowhere"), TASK, router)
    with pytest.raises(AppUnreachable):
        run_task(app("A1"), TASK, router)  # nothing scripted


def test_empty_response_is_flagged():
    clock = VirtualClock()
    router = AppRouter({"mock": ScriptedApp(clock, default=lambda p: ("", 1.5))}, clock)
    run = run_task(app("A1"), TASK, router)
    assert run.tokens == 0 and run.empty
    seen = []
    gw, _ = judge_gw(lambda msgs: seen.append(msgs[-1]["content"]) or verdict_block(1))
    judge_content(TASK, run.response_text, METRIC, gw)
    assert "[empty response" in seen[0]


def test_app_timeout():
    clock = VirtualClock()
    router = AppRouter({"mock": ScriptedApp(clock, default=lambda p: ("late", 61.0))}, clock)
    with pytest.raises(TimeoutExceeded):
        run_task(app("A1"), TASK, router)


# --- judge_content ---------------------------------------------------------

def test_passthrough_score():
    gw, provider = judge_gw(lambda msgs: verdict_block(4))
    v = judge_content(TASK, "Article 39 applies.", METRIC, gw)
    assert v.score == 4 and v.attempts == 1
    assert v.strengths == ("clear",) and v.suggestions == ("cite articles",)
    assert v.task_ref == TASK.task_id
    body = provider.captured[0].body
    assert (body["temperature"], body["frequency_penalty"], body["max_tokens"]) == (0, 0.5, 5000)
    assert provider.captured[0].timeout_s == 60


def test_out_of_range_is_malformed():
    gw, provider = judge_gw(lambda msgs: verdict_block(6))
    with pytest.raises(ParseFailure):
        judge_content(TASK, "answer", METRIC, gw)
    assert len(provider.captured) == 3


def test_out_of_range_then_valid():
    replies = iter([verdict_block(6), verdict_block(5)])
    gw, _ = judge_gw(lambda msgs: next(replies))
    assert judge_content(TASK, "answer", METRIC, gw).score == 5


def test_prose_then_valid():
    replies = iter(["The answer seems decent, maybe a 4.", verdict_block(4)])
    gw, _ = judge_gw(lambda msgs: next(replies))
    v = judge_content(TASK, "answer", METRIC, gw)
    assert v.score == 4 and v.attempts == 2


def test_prompt_contains_rubric_task_and_response():
    seen = []
    gw, _ = judge_gw(lambda msgs: seen.append(msgs[-1]["content"]) or verdict_block(3))
    judge_content(TASK, "Article 39 applies.", METRIC, gw)
    assert "level 5" in seen[0] and TASK.prompt_text in seen[0] and "Article 39 applies." in seen[0]


def test_mock_judge_is_deterministic():
    r = MockResponders(7)
    gw1, _ = judge_gw(r.judge)
    gw2, _ = judge_gw(r.judge)
    assert judge_content(TASK, "same answer", METRIC, gw1) == judge_content(TASK, "same answer", METRIC, gw2)


# --- efficiency --------------------------------------------------------------

def test_efficiency_examples():
    assert response_efficiency(100, 4.0) == 25.0
    assert response_efficiency(0, 3.0) == 0.0
    with pytest.raises(ZeroElapsed):
        response_efficiency(50, 0)


@pytest.mark.parametrize("eta,level", [(25.0, 5), (24.99, 4), (20.0, 4), (19.99, 3), (15.0, 3),
                                       (14.99, 2), (10.0, 2), (9.99, 1), (0.0, 1), (1e6, 5)])
def test_bands(eta, level):
    assert efficiency_score(eta) == level == band_oracle(eta)


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=30))
def test_bands_non_decreasing(etas):
    levels = [efficiency_score(e) for e in sorted(etas)]
    assert levels == sorted(levels)
    assert all(efficiency_score(e) == band_oracle(e) for e in etas)


# --- composite ---------------------------------------------------------------

@pytest.mark.parametrize("cq,rp,score", [(5, 5, 5.0), (4, 2, 3.6), (1, 5, 1.8)])
def test_composite_examples(cq, rp, score):
    c = composite_score(cq, rp)
    assert c.score == pytest.approx(score, abs=1e-12)
    assert c.alpha == 0.8 and c.beta_w == pytest.approx(0.2)


def test_composite_grid_matches_fractions():
    for cq in range(1, 6):
        for rp in range(1, 6):
            assert composite_score(cq, rp).score == pytest.approx(float(composite_fraction(cq, rp)), abs=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 0.3, 1.2])
def test_invalid_weights(alpha):
    with pytest.raises(InvalidWeights):
        composite_score(3, 3, alpha)


scores = st.floats(1.0, 5.0)


@given(scores, scores, st.floats(0, 1), st.floats(0.51, 0.99))
def test_composite_monotone_and_bounded(cq, rp, bump, alpha):
    base = composite_score(cq, rp, alpha).score
    assert 1.0 - 1e-12 <= base <= 5.0 + 1e-12
    assert composite_score(min(5.0, cq + bump), rp, alpha).score >= base - 1e-12
    assert composite_score(cq, min(5.0, rp + bump), alpha).score >= base - 1e-12


@given(st.floats(1.0, 4.0), st.floats(1.0, 4.0))
def test_content_weighs_four_times_performance(cq, rp):
    base = composite_score(cq, rp).score
    d_cq = composite_score(cq + 1, rp).score - base
    d_rp = composite_score(cq, rp + 1).score - base
    assert d_cq / d_rp == pytest.approx(4.0, rel=1e-9)
    assert Fraction(4, 5) / Fraction(1, 5) == 4


# --- aggregation ---------------------------------------------------------------

def _v(i, score, metric="M"):
    return JudgeVerdict(f"t{i}", metric, score)


def _s(i, level):
    return PerformanceSample(f"t{i}", 10, 1.0, 10.0, level)


def test_aggregate_examples():
    out = aggregate_app_score([_v(i, 4) for i in range(3)], [_s(i, 5) for i in range(3)])
    assert (out.composite.s_cq, out.composite.s_rp) == (4.0, 5.0)
    assert out.composite.score == pytest.approx(4.2)
    single = aggregate_app_score([_v(0, 3)], [_s(0, 3)])
    assert single.composite.score == pytest.approx(3.0)


def test_aggregate_empty():
    with pytest.raises(EmptyInputs):
        aggregate_app_score([], [_s(0, 3)])


def test_per_metric_breakdown():
    out = aggregate_app_score([_v(0, 4, "A"), _v(1, 2, "A"), _v(2, 5, "B")], [_s(0, 3)])
    assert out.per_metric == {"A": 3.0, "B": 5.0}


@given(st.lists(st.integers(1, 5), min_size=1, max_size=12), st.lists(st.integers(1, 5), min_size=1, max_size=12),
       st.randoms())
def test_aggregate_permutation_invariant(vs, ls, rnd):
    verdicts = [_v(i, s, "M" + str(i % 3)) for i, s in enumerate(vs)]
    samples = [_s(i, lv) for i, lv in enumerate(ls)]
    a = aggregate_app_score(verdicts, samples)
    rnd.shuffle(verdicts)
    rnd.shuffle(samples)
    b = aggregate_app_score(verdicts, samples)
    assert a.composite.score == pytest.approx(b.composite.score, abs=1e-12)
    assert a.per_metric == pytest.approx(b.per_metric)


def test_verdict_round_trip():
    v = JudgeVerdict("t", "M", 4, ("a",), ("b",), ("c",), "raw", 2)
    assert JudgeVerdict.from_dict(v.to_dict()) == v
