"""The ten acceptance criteria as plain functions, shared by the test suite and ``verify``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import bounds, distribution, moments, smoothness, statcore, stein
from .errors import PreconditionError


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    @property
    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.title} ({self.seconds:.2f}s / {self.budget:g}s): {self.detail}"


def _timed(number, title, budget):
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            ok, detail = fn()
            dt = time.perf_counter() - t0
            if dt > budget:
                ok = False
                detail += f"; runtime {dt:.2f}s exceeds {budget:g}s"
            return CriterionResult(number, title, bool(ok), detail, dt, budget)

        run.number = number
        run.title = title
        return run

    return wrap


@_timed(1, "covariance of W from the exact rank DP", 5)
def covariance():
    bad = []
    for r in (2, 3, 4):
        want = moments.friedman_covariance(r).exact
        for n in (1, 5):
            got = distribution.rank_w_covariance_exact(r, n)
            if got != want:
                bad.append((r, n))
    return not bad, "exact match for r in {2,3,4}, n in {1,5}" if not bad else f"mismatch at {bad}"


@_timed(2, "closed-form rank moments and crude bounds", 5)
def moment_checks():
    caps = {2: Fraction(1), 4: Fraction(9, 5), 6: Fraction(27, 7), 8: Fraction(9)}
    bad = []
    for r in range(2, 13):
        table = moments.closed_form_moments(r)
        for m in (2, 4, 6, 8):
            exact = moments.rank_moment_exact(r, m)
            if table[m] != exact:
                bad.append(f"closed form r={r} m={m}")
            if exact > caps[m]:
                bad.append(f"E X^{m} > {caps[m]} at r={r}")
        for n in (1, 2, 3, 5, 10, 100, 1000):
            if moments.w4_moment_exact(r, n) > Fraction(24, 5):
                bad.append(f"E W^4 > 24/5 at r={r} n={n}")
    return not bad, "r = 2..12, m in {2,4,6,8} exact; all crude bounds hold" if not bad else "; ".join(bad)


FRIEDMAN_GRID = (8, 16, 32, 64, 128)
PD_GRID = (16, 32, 64, 128, 256)


@_timed(3, "Friedman rate and closed-form bound", 60)
def friedman_rate():
    tf = smoothness.make_test_function("sine", a=0.5)
    ds = distribution.exact_distances(moments.TrialModel.rank(3), "friedman", tf, FRIEDMAN_GRID)
    fit = distribution.fit_rate([(d.n, d.delta) for d in ds])
    over = [d.n for d in ds if d.delta > bounds.friedman_bound(3, d.n, tf).value]
    ok = 0.8 <= fit.beta <= 1.2 and not over
    detail = f"beta={fit.beta:.4f}; deltas=" + ",".join(f"{d.delta:.3e}" for d in ds)
    if over:
        detail += f"; bound violated at n={over}"
    return ok, detail


@_timed(4, "power divergence rate", 120)
def pd_rate():
    tf = smoothness.make_test_function("sine", a=0.5)
    model = moments.TrialModel.pearson([1 / 3] * 3)
    parts = []
    ok = True
    for lam in (1.0, 2.0):
        ds = distribution.exact_distances(model, lam, tf, PD_GRID)
        beta = distribution.fit_rate([(d.n, d.delta) for d in ds]).beta
        ok &= 0.75 <= beta <= 1.25
        parts.append(f"lambda={lam:g}: beta={beta:.4f}")
    for lam in (2 / 3, -0.5):
        ds = distribution.exact_distances(model, lam, tf, PD_GRID)
        beta = distribution.fit_rate([(d.n, d.delta) for d in ds]).beta
        parts.append(f"exploratory lambda={lam:.4g}: beta={beta:.4f}")
    return ok, "; ".join(parts)


@_timed(5, "re-derivation of the Friedman constant", 1)
def constant():
    rep = bounds.verify_thm1_constant(10, exact_r_max=0)
    worst = max(row.bracket / row.claimed for row in rep.rows)
    return rep.passed, f"r = 2..10 at n=1; max bracket / claimed = {worst:.6f}"


SERIES_LAMBDAS = (-0.5, 1 / 3, 2.0, 5.5)


def _series_points(rng, probs, n, count):
    p = np.asarray(probs)
    s = np.sqrt(p)
    scale = np.sqrt(n * p)
    out = []
    while len(out) < count:
        w = rng.uniform(-0.5, 0.5, p.size) * scale
        w -= (s @ w) * s
        ratio = np.max(np.abs(w) / scale)
        if ratio > 0.5:
            w *= 0.5 / ratio
        out.append(statcore.WVector(w, n, p))
    return out


@_timed(6, "series expansion of the remainder", 5)
def series():
    rng = np.random.Generator(np.random.PCG64(20240601))
    probs = np.array([0.2, 0.3, 0.5])
    pts = _series_points(rng, probs, 40, 100)
    worst = 0.0
    for lam in SERIES_LAMBDAS:
        for w in pts:
            diff = abs(statcore.pd_remainder(w, probs, lam) - statcore.pd_series_remainder(w, probs, lam, 40))
            worst = max(worst, diff)
    worst_exact = 0.0
    for lam in (1, 2, 3):
        for w in pts:
            a = statcore.pd_remainder(w, probs, float(lam))
            b = statcore.pd_series_remainder(w, probs, float(lam), lam + 1)
            worst_exact = max(worst_exact, abs(a - b) / max(1.0, abs(a)))
    ok = worst <= 1e-8 and worst_exact <= 1e-12
    return ok, f"max |closed - series(K=40)| = {worst:.3e}; terminating cases max rel diff = {worst_exact:.3e}"


STEIN_POINTS_1D = (-2.0, -1.5, -1.0, -0.5, -0.2, 0.0, 0.3, 0.7, 1.2, 2.0)


def _pearson2_problem():
    p = np.array([0.4, 0.6])
    tf = smoothness.make_test_function("sine", a=0.5)
    sp = stein.quadratic_problem(tf, moments.pearson_covariance(p))
    direction = np.array([math.sqrt(p[1]), -math.sqrt(p[0])])
    return sp, [a * direction for a in STEIN_POINTS_1D]


@_timed(7, "Stein equation residual", 120)
def stein_residual():
    tf = smoothness.make_test_function("sine", a=0.5)
    sp1 = stein.quadratic_problem(tf, [[1.0]])
    r1 = max(abs(stein.stein_residual(sp1, [w])) for w in STEIN_POINTS_1D)
    sp2, pts = _pearson2_problem()
    r2 = max(abs(stein.stein_residual(sp2, w)) for w in pts)
    return max(r1, r2) <= 1e-3, f"max |residual|: d=1 {r1:.3e}, Pearson r=2 {r2:.3e}"


@_timed(8, "derivative bounds of the Stein solution", 120)
def derivative_bounds():
    tf = smoothness.make_test_function("sine", a=0.5)
    sp1 = stein.quadratic_problem(tf, [[1.0]])
    P1 = smoothness.dominating_quadratic_g("order3", 2)
    P1 = smoothness.DominatingFunction(P1.A, P1.B[:1], P1.r[:1])
    sp2, pts2 = _pearson2_problem()
    P2 = smoothness.dominating_quadratic_g("order3", 2)
    ok = True
    parts = []
    for label, sp, P, pts in (("d=1", sp1, P1, [[w] for w in STEIN_POINTS_1D]),
                              ("Pearson r=2", sp2, P2, pts2)):
        for m in (1, 2, 3):
            rep = stein.check_derivative_bounds(sp, P, m, pts)
            ok &= rep.passed
            parts.append(f"{label} m={m} margin={rep.min_margin:.4g}")
    return ok, "; ".join(parts)


@_timed(9, "theorem-hypothesis gates", 1)
def gates():
    tf = smoothness.make_test_function("sine", a=1.0)
    problems = []

    def expect_reject(label, fn):
        try:
            fn()
        except PreconditionError:
            return
        problems.append(f"{label} accepted")

    def expect_accept(label, fn):
        try:
            fn()
        except PreconditionError as exc:
            problems.append(f"{label} rejected: {exc}")

    expect_reject("Pearson p=(1/4,3/4)",
                  lambda: bounds.bound_zero_third_moment(bounds.pearson_inputs([0.25, 0.75], 10, tf, "order3")))
    for r in (2, 3, 4, 5):
        expect_accept(f"rank r={r}", lambda r=r: bounds.bound_zero_third_moment(bounds.rank_inputs(r, 10, tf)))
    third = [1 / 3] * 3
    expect_reject("lambda=4.5", lambda: bounds.bound_relaxed_even(
        bounds.BoundInputs(moments.TrialModel.pearson(third), 10, smoothness.dominating_quadratic_g("order6", 3), tf,
                           "power_divergence", 4.5)))
    expect_reject("lambda=4.5 dominating function", lambda: bounds.power_divergence_inputs(third, 10, tf, 4.5))
    for lam in (1, 2, 3, 5.5):
        expect_accept(f"lambda={lam}",
                      lambda lam=lam: bounds.bound_relaxed_even(bounds.power_divergence_inputs(third, 10, tf, lam)))
    return not problems, "all gates behave" if not problems else "; ".join(problems)


@_timed(10, "chi-square quadrature oracle", 1)
def quadrature():
    worst = 0.0
    for df in (1, 2, 5):
        a = distribution.chisq_expectation(lambda y: math.exp(-y / 2), df)
        b = distribution.chisq_expectation(math.sin, df)
        worst = max(worst, abs(a - 2 ** (-df / 2)), abs(b - ((1 - 2j) ** (-df / 2)).imag))
    return worst <= 1e-9, f"max error {worst:.3e} over df in {{1,2,5}}"


CRITERIA = (covariance, moment_checks, friedman_rate, pd_rate, constant, series, stein_residual,
            derivative_bounds, gates, quadrature)

SUITES = {
    "covariance": (1,),
    "moments": (2,),
    "rates": (3, 4),
    "bounds": (3, 5, 9),
    "series": (6,),
    "stein": (7, 8),
    "quadrature": (10,),
    "all": tuple(range(1, 11)),
}


def run(numbers=None):
    numbers = SUITES["all"] if numbers is None else tuple(numbers)
    return [c() for c in CRITERIA if c.number in numbers]
