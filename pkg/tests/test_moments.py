import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinchi import ResourceError
from steinchi.moments import (TrialModel, closed_form_moments, friedman_covariance, gaussian_abs_moment,
                              matrix_sqrt, mixed_abs_moment, mixed_abs_moment_exact, pearson_covariance,
                              rank_moment_exact, w4_moment_exact, w_abs_moment, w_even_moment)


def test_friedman_covariance_examples():
    c3 = friedman_covariance(3)
    assert c3.exact[0][0] == Fraction(2, 3) and c3.exact[0][1] == Fraction(-1, 3)
    c2 = friedman_covariance(2)
    np.testing.assert_allclose(c2.entries, [[0.5, -0.5], [-0.5, 0.5]])
    assert np.linalg.matrix_rank(c2.entries) == 1


@pytest.mark.parametrize("r", range(2, 11))
def test_friedman_covariance_row_sums_and_trace(r):
    c = friedman_covariance(r)
    assert all(sum(row) == 0 for row in c.exact)
    assert sum(c.exact[j][j] for j in range(r)) == r - 1


def test_pearson_covariance_examples():
    np.testing.assert_allclose(pearson_covariance([0.5, 0.5]).entries, [[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(pearson_covariance([1 / 3] * 3).entries, friedman_covariance(3).entries, atol=1e-15)


def test_rank_moment_examples():
    for r in range(2, 11):
        assert rank_moment_exact(r, 2) == Fraction(r - 1, r)
    assert rank_moment_exact(2, 4) == Fraction(1, 4)
    assert rank_moment_exact(3, 4) == Fraction(2, 3)
    assert rank_moment_exact(5, 2) == Fraction(4, 5)


@pytest.mark.parametrize("r", range(2, 13))
def test_closed_form_matches_enumeration(r):
    table = closed_form_moments(r)
    for m in (2, 4, 6, 8):
        assert table[m] == rank_moment_exact(r, m)


def test_mixed_moments():
    model = TrialModel.rank(3)
    assert mixed_abs_moment_exact(model, (1, 1, 0), signed=True) == Fraction(-1, 3)
    for powers in itertools.product(range(4), repeat=3):
        if sum(powers) % 2 == 1:
            assert mixed_abs_moment(model, powers, signed=True) == pytest.approx(0.0, abs=1e-14)
    p = np.array([0.2, 0.3, 0.5])
    pm = TrialModel.pearson(p)
    for j, k in itertools.combinations(range(3), 2):
        powers = [0, 0, 0]
        powers[j] = powers[k] = 1
        assert mixed_abs_moment(pm, powers, signed=True) == pytest.approx(-math.sqrt(p[j] * p[k]), abs=1e-14)


def test_rank_enumeration_cap():
    with pytest.raises(ResourceError):
        TrialModel.rank(9)


def _w4_by_enumeration(r, n):
    model = TrialModel.rank(r)
    x = model.outcomes[:, 0]
    total = 0.0
    for combo in itertools.product(range(len(x)), repeat=n):
        total += (sum(x[i] for i in combo) / math.sqrt(n)) ** 4
    return total / len(x) ** n


def test_w4_moment():
    assert w4_moment_exact(3, 1) == rank_moment_exact(3, 4)
    # E W^4 = E X^4 / n + 3 (n - 1)/n (E X^2)^2; at r=3, n=2: 1/3 + 2/3 = 1
    assert w4_moment_exact(3, 2) == 1
    assert float(w4_moment_exact(3, 2)) == pytest.approx(_w4_by_enumeration(3, 2), abs=1e-12)
    assert float(w4_moment_exact(4, 3)) == pytest.approx(_w4_by_enumeration(4, 3), abs=1e-12)


def test_gaussian_abs_moment():
    assert gaussian_abs_moment(1.0, 2) == pytest.approx(1.0)
    assert gaussian_abs_moment(1.0, 1) == pytest.approx(math.sqrt(2 / math.pi))
    for r in (2, 3, 7):
        s2 = (r - 1) / r
        assert gaussian_abs_moment(s2, 4) == pytest.approx(3 * s2**2)


def test_matrix_sqrt():
    np.testing.assert_allclose(matrix_sqrt(np.eye(3)), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(matrix_sqrt(friedman_covariance(2)), friedman_covariance(2).entries, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(1, 40), st.sampled_from([2, 4, 6]))
def test_w_moments_even_agree(r, n, q):
    model = TrialModel.rank(r)
    assert w_abs_moment(model, 0, q, n) == pytest.approx(w_even_moment(model, 0, q, n), rel=1e-9)
