import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinchi import DomainError, ResourceError, ValidationError
from steinchi.distribution import (chisq_expectation, compositions, exact_friedman_distribution,
                                   exact_friedman_distributions, exact_multinomial_distribution, fit_rate,
                                   mc_estimate, rank_w_covariance_exact, smooth_distance)
from steinchi.moments import TrialModel, friedman_covariance
from steinchi.smoothness import make_test_function
from steinchi.statcore import RankMatrix, friedman

HALF = make_test_function("sine", a=0.5)


def _law(dist):
    return {round(float(v), 9): float(p) for v, p in zip(dist.values, dist.probs)}


def test_friedman_small_laws():
    assert _law(exact_friedman_distribution(2, 1)) == {1.0: 1.0}
    assert _law(exact_friedman_distribution(2, 2)) == {0.0: 0.5, 2.0: 0.5}


@pytest.mark.parametrize("r,n", [(3, 2), (3, 3), (4, 2)])
def test_friedman_law_matches_brute_force(r, n):
    perms = list(itertools.permutations(range(1, r + 1)))
    counts = {}
    for rows in itertools.product(perms, repeat=n):
        v = round(friedman(RankMatrix.from_rows(rows)), 9)
        counts[v] = counts.get(v, 0) + 1
    total = len(perms) ** n
    got = _law(exact_friedman_distribution(r, n))
    assert got.keys() == counts.keys()
    for v, c in counts.items():
        assert got[v] == pytest.approx(c / total, abs=1e-15)


@pytest.mark.parametrize("r", [2, 3])
def test_exact_laws_sum_to_one_and_mean(r):
    for n, dist in exact_friedman_distributions(r, (1, 4, 9)).items():
        assert dist.is_exact
        assert sum(dist.exact_probs, Fraction(0)) == 1
        assert dist.exact_mean() == r - 1


def test_float_mode_mean():
    dist = exact_friedman_distribution(4, 20)
    assert dist.mean() == pytest.approx(3.0, abs=1e-10)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_covariance_from_exact_law(r):
    want = friedman_covariance(r).exact
    for n in (1, 5):
        assert rank_w_covariance_exact(r, n) == want


def test_multinomial_examples():
    assert _law(exact_multinomial_distribution([0.5, 0.5], 2, "pearson")) == {0.0: 0.5, 2.0: 0.5}
    assert sum(1 for _ in compositions(5, 3)) == math.comb(7, 2)
    p = [0.2, 0.3, 0.5]
    for n in (1, 3, 10):
        assert exact_multinomial_distribution(p, n, "pearson").mean() == pytest.approx(2.0, abs=1e-12)


def test_multinomial_diverged_mass():
    dist = exact_multinomial_distribution([0.5, 0.5], 3, -2.0)
    assert dist.diverged_mass == pytest.approx(0.25)
    with pytest.raises(DomainError):
        dist.expect(np.cos)


def test_resource_cap():
    with pytest.raises(ResourceError):
        exact_friedman_distribution(5, 512)


def test_chisq_reference():
    assert chisq_expectation(make_test_function("constant", c=1.0), 3) == pytest.approx(1.0, abs=1e-10)
    assert chisq_expectation(lambda y: math.exp(-y / 2), 1) == pytest.approx(2**-0.5, abs=1e-10)
    assert chisq_expectation(math.sin, 2) == pytest.approx(0.4, abs=1e-10)


def test_mc_constant_and_determinism():
    model = TrialModel.rank(3)
    assert mc_estimate(model, "friedman", make_test_function("constant", c=2.5), 10, 500, 1) == (2.5, 0.0)
    a = mc_estimate(model, "friedman", HALF, 10, 25_000, 7)
    b = mc_estimate(model, "friedman", HALF, 10, 25_000, 7, workers=3)
    assert a == b


@pytest.mark.parametrize("model,statistic", [(TrialModel.rank(3), "friedman"),
                                             (TrialModel.pearson([0.2, 0.3, 0.5]), "pearson"),
                                             (TrialModel.pearson([0.2, 0.3, 0.5]), 2.0)])
def test_mc_agrees_with_exact(model, statistic):
    n = 12
    exact = smooth_distance(model, statistic, HALF, n).expectation
    hits = 0
    for seed in range(5):
        mean, se = mc_estimate(model, statistic, HALF, n, 20_000, seed)
        hits += abs(mean - exact) <= 4 * se
    assert hits >= 4


def test_smooth_distance_reproducible():
    model = TrialModel.rank(3)
    a = smooth_distance(model, "friedman", HALF, 40)
    b = smooth_distance(model, "friedman", HALF, 40)
    assert a == b


def test_distance_decreases():
    model = TrialModel.rank(3)
    assert smooth_distance(model, "friedman", HALF, 256).delta < smooth_distance(model, "friedman", HALF, 16).delta


def test_fit_rate_synthetic():
    ns = [8, 16, 32, 64, 128]
    assert fit_rate([(n, 7 / n) for n in ns]).beta == pytest.approx(1.0, abs=1e-9)
    assert fit_rate([(n, 3 / math.sqrt(n)) for n in ns]).beta == pytest.approx(0.5, abs=1e-9)
    with pytest.warns(RuntimeWarning):
        fit = fit_rate([(n, 7 / n) for n in ns] + [(256, 0.0)])
    assert fit.beta == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValidationError):
        fit_rate([(8, 1.0), (16, 0.5)])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(1e-3, 1e3))
def test_fit_rate_recovers_power(beta, c):
    ns = [10, 20, 40, 80, 160]
    assert fit_rate([(n, c * n**-beta) for n in ns]).beta == pytest.approx(beta, abs=1e-9)
