import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinchi import PreconditionError, ValidationError
from steinchi.smoothness import (DominatingFunction, dominating_quadratic_g, h_m, h_tilde_m, make_test_function,
                                 parse_test_function, pd_b_derivs, pd_dominating_functions, product_grid,
                                 stirling2, stirling2_recurrence, sum_squares_derivs, verify_domination,
                                 verify_q_domination)


def test_stirling_examples():
    assert stirling2(4, 2) == 7
    assert stirling2(6, 3) == 90
    assert [stirling2(4, j) for j in range(1, 5)] == [1, 7, 6, 1]


@pytest.mark.parametrize("m", range(0, 13))
def test_stirling_formula_matches_recurrence(m):
    for j in range(0, m + 1):
        assert stirling2(m, j) == stirling2_recurrence(m, j)


def test_h_m_examples():
    sine = make_test_function("sine", a=1.0)
    assert h_m(sine, 4) == 15
    assert h_tilde_m(sine, 3) == 45
    assert h_m(make_test_function("sine", a=2.0), 2) == pytest.approx(6.0)
    const = make_test_function("constant", c=3.0)
    assert h_m(const, 4) == 0 and h_tilde_m(const, 6) == 0
    for tf in (sine, make_test_function("logistic", a=2.0), make_test_function("gauss_bump", c=1.0, s=0.5)):
        assert h_m(tf, 1) == tf.norm(1)


def test_gauss_bump_first_norm():
    tf = make_test_function("gauss_bump", c=4.0, s=1.0)
    assert tf.norm(1) >= math.exp(-0.5)
    assert tf.norm(1) <= 1.05 * math.exp(-0.5) * 1.0001


@pytest.mark.parametrize("text", ["sine:a=0.5", "cosine:a=1.5", "gauss_bump:c=4,s=1", "logistic:a=2,c=1",
                                  "gauss_bump:c=-2,s=0.3"])
def test_certified_norms_dominate_samples(text):
    tf = parse_test_function(text)
    x = np.linspace(-50, 50, 10_000)
    for j in range(8):
        assert np.max(np.abs(tf.deriv(j, x))) <= tf.norm(j) * (1 + 1e-12)


def test_exp_decay_norms_on_half_line():
    tf = parse_test_function("exp_decay:b=0.5")
    x = np.linspace(0, 50, 10_000)
    for j in range(8):
        assert np.max(np.abs(tf.deriv(j, x))) <= tf.norm(j) * (1 + 1e-12)
    assert tf.domain == "nonneg"


def test_parse_errors():
    with pytest.raises(ValidationError):
        parse_test_function("nonsense:a=1")
    with pytest.raises(ValidationError):
        parse_test_function("sine:a")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=8, max_size=8), st.integers(0, 7), st.floats(0, 5),
       st.integers(1, 6))
def test_h_m_monotone_in_norms(norms, j, bump, m):
    base = make_test_function("constant", c=0.0)
    lo = type(base)("lo", base.derivative, tuple(norms))
    raised = list(norms)
    raised[j] += bump
    hi = type(base)("hi", base.derivative, tuple(raised))
    assert h_m(hi, m) >= h_m(lo, m)
    if m <= 6:
        assert h_tilde_m(hi, m) >= h_tilde_m(lo, m)


def test_quadratic_dominating_function():
    P = dominating_quadratic_g("order3", 3)
    assert P.A == 4 and P.B == (16.0,) * 3 and P.r == (4.0,) * 3
    grid = product_grid(-10, 10, 81, 2)
    assert verify_domination(sum_squares_derivs, dominating_quadratic_g("order3", 2), 3, grid).passed
    assert verify_domination(sum_squares_derivs, dominating_quadratic_g("order6", 2), 6, grid).passed
    bad = DominatingFunction(4.0, (0.0, 0.0), (4.0, 4.0))
    rep = verify_domination(sum_squares_derivs, bad, 3, grid)
    assert not rep.passed and np.max(np.abs(rep.worst_point)) > 1


def _statistic_derivs(lam, p, n):
    b = pd_b_derivs(lam, p, n)

    def derivs(k, W):
        a = sum_squares_derivs(k, W)
        bk = b(k, W) / math.sqrt(n)
        return a + bk if a.shape == bk.shape else bk

    return derivs


def _a_derivs(k, W):
    return sum_squares_derivs(k, W)


@pytest.mark.parametrize("lam", [1.0, 2.0, 3.0, 5.0, 6.5])
@pytest.mark.parametrize("n", [1, 5, 50])
def test_power_divergence_domination(lam, n):
    p = np.array([0.3, 0.7])
    dom = pd_dominating_functions(lam, p, m=6)
    grid = product_grid(-math.sqrt(n * p.min()), 3 * math.sqrt(n) + 5, 60, 2)
    grid = grid[np.all(grid >= -np.sqrt(n * p), axis=1)]
    assert verify_domination(_statistic_derivs(lam, p, n), dom.P, 6, grid).passed
    assert verify_q_domination(_a_derivs, pd_b_derivs(lam, p, n), dom.Q, 6, grid).passed


def test_pd_b_vanishes_at_lambda_one():
    W = product_grid(-0.5, 2, 7, 3)
    np.testing.assert_allclose(pd_b_derivs(1.0, [0.2, 0.3, 0.5], 10)(0, W), 0, atol=1e-12)


@pytest.mark.parametrize("lam", [0.5, 2 / 3, 4.5, -0.5, 0.0])
def test_inadmissible_lambda(lam):
    with pytest.raises(PreconditionError):
        pd_dominating_functions(lam, [0.5, 0.5])
