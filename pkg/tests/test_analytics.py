from __future__ import annotations

import math
import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_spearman

from appqual.analytics import (
    RatingSeries,
    average_ranks,
    consistency_report,
    exact_p_value,
    load_human_ratings,
    spearman_p_value,
    spearman_rho,
)
from appqual.errors import DegenerateSeries, InsufficientN, MismatchedItems, ParseError, PerfectCorrelation


def series(values, label=""):
    return RatingSeries(tuple((f"i{k:02d}", v) for k, v in enumerate(values)), label)


def rho(x, y):
    return spearman_rho(series(x), series(y))


def test_perfect_monotone():
    assert rho([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert rho([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)


def test_random_six_against_oracle():
    rnd = random.Random(11)
    x = [rnd.random() for _ in range(6)]
    y = [rnd.random() for _ in range(6)]
    assert abs(rho(x, y) - brute_spearman(x, y)) <= 1e-12


def test_average_ranks_with_ties():
    assert average_ranks([10, 20, 20, 30]) == [1.0, 2.5, 2.5, 4.0]


def test_errors():
    with pytest.raises(MismatchedItems):
        spearman_rho(RatingSeries((("a", 1), ("b", 2), ("c", 3))), RatingSeries((("a", 1), ("b", 2), ("d", 3))))
    with pytest.raises(InsufficientN):
        rho([1, 2], [2, 1])
    with pytest.raises(DegenerateSeries):
        rho([1, 1, 1], [1, 2, 3])


def test_items_aligned_by_id_not_position():
    x = RatingSeries((("a", 1), ("b", 2), ("c", 3), ("d", 4)))
    y = RatingSeries((("d", 4), ("c", 3), ("b", 2), ("a", 1)))
    assert spearman_rho(x, y) == pytest.approx(1.0)


@pytest.mark.parametrize("r,lo,hi", [(0.621, 0.0055, 0.0065), (0.595, 0.0085, 0.0095)])
def test_published_p_values(r, lo, hi):
    assert lo <= spearman_p_value(r, 18) <= hi


def test_null_p_value():
    assert spearman_p_value(0.0, 18) == pytest.approx(1.0)


def test_p_value_errors():
    with pytest.raises(PerfectCorrelation):
        spearman_p_value(1.0, 10)
    with pytest.raises(InsufficientN):
        spearman_p_value(0.5, 3)


@given(st.floats(0.01, 0.98), st.floats(0.001, 0.01), st.integers(5, 200))
def test_p_decreasing_in_rho(r, dr, n):
    assert spearman_p_value(min(0.999, r + dr), n) < spearman_p_value(r, n)
    assert spearman_p_value(-r, n) == pytest.approx(spearman_p_value(r, n))


@given(st.floats(0.05, 0.95), st.integers(4, 300))
def test_p_decreasing_in_n(r, n):
    assert spearman_p_value(r, n + 1) < spearman_p_value(r, n)


def test_exact_p_matches_enumeration_small_n():
    # n = 4: all 24 permutations enumerated by hand-written loop
    from itertools import permutations
    n, r = 4, 0.8
    rhos = [1 - 6 * sum((i + 1 - p) ** 2 for i, p in enumerate(perm)) / (n * (n * n - 1))
            for perm in permutations(range(1, n + 1))]
    expected = sum(abs(v) >= r - 1e-12 for v in rhos) / len(rhos)
    assert exact_p_value(r, n) == pytest.approx(expected)
    with pytest.raises(ValueError):
        exact_p_value(0.5, 11)


def _with_rank_correlation(target, n, seed=0):
    """Search permutations of 1..n (by pairwise swaps) for one whose rho is target."""
    rnd = random.Random(seed)
    x = list(range(1, n + 1))
    # sum of squared rank differences is always even for a permutation
    needed_d2 = 2 * round((1 - target) * n * (n * n - 1) / 12)
    y = x[:]
    for _ in range(100_000):
        d2 = sum((a - b) ** 2 for a, b in zip(x, y))
        if d2 == needed_d2:
            return x, y
        i, j = rnd.sample(range(n), 2)
        y2 = y[:]
        y2[i], y2[j] = y2[j], y2[i]
        d2b = sum((a - b) ** 2 for a, b in zip(x, y2))
        if abs(d2b - needed_d2) <= abs(d2 - needed_d2) or rnd.random() < 0.1:
            y = y2
    raise AssertionError("no permutation found")


def test_constructed_series_reproduces_reported_pair():
    x, y = _with_rank_correlation(0.621, 18)
    report = consistency_report(series(x, "auto"), series(y, "human"))
    assert report.rho == pytest.approx(0.621, abs=0.002)
    assert 0.0055 <= report.p_value <= 0.0065


def test_monotone_mapping_flags_perfect():
    report = consistency_report(series([1, 2, 3, 4, 5]), series([2, 4, 8, 16, 32]))
    assert report.perfect and report.rho == pytest.approx(1.0) and report.p_value == 0.0


def test_shuffled_series_average_to_null():
    rnd = random.Random(3)
    auto = [rnd.uniform(1, 5) for _ in range(18)]
    rhos, ps = [], []
    for _ in range(300):
        human = auto[:]
        rnd.shuffle(human)
        rep = consistency_report(series(auto), series(human))
        rhos.append(rep.rho)
        ps.append(rep.p_value)
    assert abs(statistics.fmean(rhos)) < 0.05
    # p is uniform under the null, so its mean sits near 0.5
    assert 0.4 < statistics.fmean(ps) < 0.6


def test_exact_method_flag():
    rep = consistency_report(series([1, 2, 3, 4, 5, 6]), series([2, 1, 4, 3, 6, 5]), method="exact")
    assert rep.method == "spearman-exact-permutation"
    assert 0 < rep.p_value < 1


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(st.integers(4, 12).flatmap(lambda n: st.tuples(st.lists(finite, min_size=n, max_size=n),
                                                       st.lists(finite, min_size=n, max_size=n))))
def test_rho_matches_oracle_and_is_symmetric(xy):
    x, y = xy
    if len(set(x)) == 1 or len(set(y)) == 1:
        return
    r = rho(x, y)
    assert abs(r - brute_spearman(x, y)) <= 1e-12
    assert r == pytest.approx(rho(y, x), abs=1e-15)


MONOTONE = [lambda v: v ** 3, lambda v: math.atan(v), lambda v: 2 * v + 7, lambda v: math.exp(v / 1e5)]


@settings(max_examples=50)
@given(st.lists(finite, min_size=4, max_size=10, unique=True), st.lists(finite, min_size=10, max_size=10),
       st.sampled_from(MONOTONE))
def test_invariant_under_monotone_transform(x, y, f):
    y = y[: len(x)]
    if len(set(y)) == 1:
        return
    # strict monotone maps keep ranks as long as distinct inputs stay distinct
    fx = [f(v) for v in x]
    if len(set(fx)) != len(fx):
        return
    assert rho(fx, y) == pytest.approx(rho(x, y), abs=1e-12)


@given(st.lists(st.integers(1, 5), min_size=5, max_size=12), st.lists(st.integers(1, 5), min_size=12, max_size=12),
       st.data())
def test_duplicated_values_match_oracle(x, y, data):
    y = y[: len(x)]
    i, j = data.draw(st.sampled_from([(a, b) for a in range(len(x)) for b in range(len(x)) if a != b]))
    x = list(x)
    x[j] = x[i]
    if len(set(x)) == 1 or len(set(y)) == 1:
        return
    assert rho(x, y) == pytest.approx(brute_spearman(x, y), abs=1e-12)


def test_human_ratings_are_averaged(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("rater_id,app_id,metric_name,score\n"
                    "r1,La1,Accuracy,4\nr2,La1,Accuracy,5\nr1,La2,Accuracy,2\n")
    s = load_human_ratings(path)
    assert s.as_dict() == {"La1::Accuracy": 4.5, "La2::Accuracy": 2.0}


def test_human_ratings_bad_score(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("rater_id,app_id,metric_name,score\nr1,La1,Accuracy,7\n")
    with pytest.raises(ParseError):
        load_human_ratings(path)
