import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinchi import DomainError, ValidationError
from steinchi.statcore import (CellCounts, LimitMode, PdIndex, RankMatrix, WVector, friedman, friedman_from_sums,
                               pd_remainder, pd_series_coefficients, pd_series_remainder, pearson,
                               power_divergence, standardize_counts, standardize_ranks, w_vector)


def rank_matrices(r_max=6, n_max=12):
    @st.composite
    def build(draw):
        r = draw(st.integers(2, r_max))
        n = draw(st.integers(1, n_max))
        rows = [draw(st.permutations(range(1, r + 1))) for _ in range(n)]
        return RankMatrix.from_rows(rows)

    return build()


@st.composite
def cell_counts(draw, positive=False):
    r = draw(st.integers(2, 5))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=r, max_size=r))
    p = np.array(raw) / sum(raw)
    lo = 1 if positive else 0
    counts = draw(st.lists(st.integers(lo, 30), min_size=r, max_size=r))
    if sum(counts) == 0:
        counts[0] = 1
    return CellCounts(np.array(counts), p)


def test_standardize_examples():
    x = standardize_ranks(RankMatrix.from_rows([[1, 2, 3]])).x
    np.testing.assert_allclose(x[0], [-1, 0, 1])
    x = standardize_ranks(RankMatrix.from_rows([[2, 1]])).x
    np.testing.assert_allclose(x[0], [1 / math.sqrt(2), -1 / math.sqrt(2)])


def test_w_vector_examples():
    row = [3, 1, 2]
    w1 = w_vector(standardize_ranks(RankMatrix.from_rows([row])))
    np.testing.assert_allclose(w1.w, standardize_ranks(RankMatrix.from_rows([row])).x[0])
    w2 = w_vector(standardize_ranks(RankMatrix.from_rows([row, row])))
    np.testing.assert_allclose(w2.w, math.sqrt(2) * w1.w)
    w3 = w_vector(standardize_ranks(RankMatrix.from_rows([[1, 2, 3], [3, 2, 1]])))
    np.testing.assert_allclose(w3.w, 0, atol=1e-15)


@pytest.mark.parametrize("rows,want", [
    ([[1, 2, 3]], 2.0),
    ([[1, 2, 3], [3, 2, 1]], 0.0),
    ([[1, 2], [1, 2]], 2.0),
])
def test_friedman_examples(rows, want):
    assert friedman(RankMatrix.from_rows(rows)) == pytest.approx(want, abs=1e-12)


def test_friedman_from_sums_matches():
    rm = RankMatrix.from_rows([[1, 2, 3], [2, 1, 3], [3, 1, 2], [1, 3, 2]])
    assert friedman_from_sums(rm.ranks.sum(axis=0), rm.n, rm.r) == pytest.approx(friedman(rm), abs=1e-12)


def test_rank_matrix_rejects_non_permutation():
    with pytest.raises(ValidationError) as exc:
        RankMatrix.from_rows([[1, 2, 3], [1, 1, 3]])
    assert exc.value.row == 1


def test_counts_examples():
    np.testing.assert_allclose(standardize_counts(CellCounts(np.array([2, 2]), np.array([0.5, 0.5]))).w, 0)
    cc = CellCounts(np.array([3, 1]), np.array([0.5, 0.5]))
    np.testing.assert_allclose(standardize_counts(cc).w, [1 / math.sqrt(2), -1 / math.sqrt(2)])
    cc3 = CellCounts(np.array([5, 2, 2]), np.full(3, 1 / 3))
    np.testing.assert_allclose(standardize_counts(cc3).w, [2 / math.sqrt(3), -1 / math.sqrt(3), -1 / math.sqrt(3)])
    assert pearson(cc) == pytest.approx(1.0)


def test_power_divergence_examples():
    cc = CellCounts(np.array([3, 1]), np.array([0.5, 0.5]))
    assert power_divergence(cc, 1.0) == pytest.approx(pearson(cc), abs=1e-12)
    want = 2 * (3 * math.log(1.5) + math.log(0.5))
    assert power_divergence(cc, 0.0) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(1.04649, abs=1e-5)
    for lam in (1e-6, -1e-6):
        assert power_divergence(cc, lam) == pytest.approx(want, rel=1e-5)
    balanced = CellCounts(np.array([3, 6, 9]), np.array([1, 2, 3]) / 6)
    for lam in (-2.0, -1.0, -0.5, 0.0, 2 / 3, 1.0, 3.5):
        assert power_divergence(balanced, lam) == pytest.approx(0.0, abs=1e-12)


def test_limit_modes():
    assert PdIndex(0.0).limit_mode is LimitMode.LIMIT_ZERO
    assert PdIndex(-1.0 + 5e-5).limit_mode is LimitMode.LIMIT_MINUS_ONE
    assert PdIndex(0.5).limit_mode is LimitMode.EXACT


def test_zero_counts_convention():
    cc = CellCounts(np.array([4, 0]), np.array([0.5, 0.5]))
    assert math.isfinite(power_divergence(cc, -0.5))
    with pytest.raises(DomainError):
        power_divergence(cc, -1.0)
    assert power_divergence(cc, -2.0) == math.inf


def test_remainder_examples():
    p = np.array([0.2, 0.3, 0.5])
    w0 = WVector(np.zeros(3), 10, p)
    assert pd_remainder(w0, p, 2.0) == 0.0
    assert pd_series_remainder(w0, p, 2.0) == 0.0
    w = WVector(np.array([1.0, -1.0, 0.0]) * np.array([math.sqrt(0.3), math.sqrt(0.2), 0]) * 0.3, 10, p)
    assert pd_remainder(w, p, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_series_coefficients_terminate_for_integer_lambda():
    c = pd_series_coefficients(3.0, 8)
    assert all(v == 0 for v in c[5:])
    assert c[3] != 0


@settings(max_examples=60, deadline=None)
@given(rank_matrices())
def test_friedman_equals_sum_of_squares(rm):
    w = w_vector(standardize_ranks(rm))
    assert friedman(rm) == pytest.approx(float(np.sum(w.w**2)), abs=1e-12 * max(1, friedman(rm)))


@settings(max_examples=80, deadline=None)
@given(cell_counts())
def test_pearson_is_lambda_one(cc):
    assert pearson(cc) == pytest.approx(power_divergence(cc, 1.0), abs=1e-10 * max(1, pearson(cc)))


@settings(max_examples=80, deadline=None)
@given(cell_counts(positive=True), st.sampled_from([0.0, -1.0]))
def test_continuity_at_poles(cc, pole):
    limit = power_divergence(cc, pole)
    for eps in (1e-6, -1e-6):
        assert abs(power_divergence(cc, pole + eps) - limit) <= 1e-4 * (1 + abs(limit))


@settings(max_examples=80, deadline=None)
@given(cell_counts(positive=True), st.sampled_from([-2.0, -0.5, 0.0, 1 / 3, 2 / 3, 1.0, 2.0, 4.5]))
def test_remainder_identity_and_nonnegativity(cc, lam):
    t = power_divergence(cc, lam)
    assert t >= -1e-12
    w = standardize_counts(cc)
    assert pd_remainder(w, cc.probs, lam) + float(np.sum(w.w**2)) == pytest.approx(t, abs=1e-9 * max(1, t))
