"""Explicit distributional-distance bounds for statistics of the form ``g(W)``.

Every expectation over a single trial is computed exactly from the trial
model. Trials are i.i.d., so each ``sum_{i=1}^n`` collapses to a factor ``n``.
Sums over index tuples factor through ``a = sum_j |X_j|``: for example
``sum_{j,k,l,m} E|X_j X_k X_l X_m| = E a**4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import moments as mom
from .errors import PreconditionError, ValidationError
from .moments import TrialModel
from .smoothness import (
    DominatingFunction,
    TestFunction,
    dominating_quadratic_g,
    h_m,
    h_tilde_m,
    pd_admissible,
    pd_dominating_functions,
)

#: Numerical constant of the closed-form Friedman bound ``C r**5 h_4 / n``.
FRIEDMAN_CONSTANT = 10797
#: Signed third moments below this are treated as zero.
THIRD_MOMENT_TOL = 1e-12

# Crude single-trial constants used by the Hoelder-chain reproduction for Friedman's statistic.
CRUDE_X2 = 1.0
CRUDE_X4_ROOT = (9 / 5) ** 0.25
CRUDE_X6_ROOT = (27 / 7) ** (1 / 6)
CRUDE_X8_ROOT = 9 ** (1 / 8)
CRUDE_W4 = 24 / 5
CRUDE_Z4 = 3.0


@dataclass(frozen=True, eq=False)
class BoundInputs:
    """Everything a bound evaluator needs.

    ``statistic`` is ``"sum_squares"`` (``g = sum w**2``) or ``"power_divergence"``
    with index ``lam``; it decides whether ``g`` is even.
    """

    model: TrialModel
    n: int
    P: DominatingFunction
    tf: TestFunction
    statistic: str = "sum_squares"
    lam: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError("n must be a positive integer")
        if self.P.d != self.model.d:
            raise ValidationError(f"dominating function has {self.P.d} coordinates, model has {self.model.d}")
        if self.statistic not in ("sum_squares", "power_divergence"):
            raise ValidationError(f"unknown statistic {self.statistic!r}")
        if self.statistic == "power_divergence" and self.lam is None:
            raise ValidationError("power divergence inputs need lam")

    @property
    def g_is_even(self):
        return self.statistic == "sum_squares" or float(self.lam) == 1.0

    def echo(self):
        return {
            "model": self.model.kind,
            "d": self.model.d,
            "n": int(self.n),
            "A": self.P.A,
            "B": list(self.P.B),
            "r": list(self.P.r),
            "h": self.tf.name,
            "statistic": self.statistic,
            "lam": self.lam,
        }


@dataclass(frozen=True)
class BoundReport:
    value: float
    decomposition: tuple
    regime: str
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        total = math.fsum(v for _, v in self.decomposition)
        if abs(total - self.value) > 1e-9 * max(1.0, abs(total)):
            raise ValidationError("bound value must equal the sum of its decomposition")
        if not self.value >= 0:
            raise ValidationError(f"bound must be non-negative, got {self.value}")

    def terms(self):
        return dict(self.decomposition)

    def to_text(self):
        lines = [f"regime: {self.regime}", f"value: {self.value:.17g}"]
        lines += [f"  {name}: {v:.17g}" for name, v in self.decomposition]
        return "\n".join(lines)

    def csv_header(self):
        return ["regime", "value"] + [name for name, _ in self.decomposition]

    def csv_row(self):
        return [self.regime, repr(self.value)] + [repr(v) for _, v in self.decomposition]


def _report(terms, regime, inputs):
    terms = tuple((name, float(v)) for name, v in terms)
    return BoundReport(math.fsum(v for _, v in terms), terms, regime, inputs.echo() if inputs else {})


# --------------------------------------------------------------------------
# closed-form Friedman bound


def friedman_bound(r, n, tf: TestFunction) -> BoundReport:
    """``C r**5 h_4 / n`` with ``C = FRIEDMAN_CONSTANT``."""
    if r < 2 or n < 1:
        raise ValidationError("need r >= 2 and n >= 1")
    value = FRIEDMAN_CONSTANT * r**5 * h_m(tf, 4) / n
    return BoundReport(float(value), (("closed_form", float(value)),), "friedman_closed_form",
                       {"r": r, "n": n, "h": tf.name})


def friedman_crude_bracket(r, n, h4=1.0) -> float:
    """The zero-third-moment bound for Friedman's statistic with every expectation replaced by
    its crude Hoelder constant, for ``P = 4 + 16 sum w**4``."""
    c4, c6, c8 = CRUDE_X4_ROOT, CRUDE_X6_ROOT, CRUDE_X8_ROOT
    first = 4 * c4 + 2**8 * r * (16 * c4 * CRUDE_W4 + 16 * c8 / n**2 + CRUDE_Z4 * c4)
    second = 9 * (4 + 2**8 * r * (16 * CRUDE_X2 * CRUDE_W4 + 16 * c6 / n**2 + CRUDE_Z4))
    return r**4 * h4 / (24 * n) * (first + second)


@dataclass(frozen=True)
class ConstantCheck:
    r: int
    bracket: float  # crude bracket at n = 1, h_4 = 1
    bracket_limit: float  # n -> infinity value of n * bracket
    claimed: float  # FRIEDMAN_CONSTANT * r**5
    exact: float | None  # zero-third-moment bound with exact moments at n = 1, h_4 = 1
    passed: bool
    exact_passed: bool | None


@dataclass(frozen=True)
class ConstantReport:
    constant: float
    rows: tuple
    passed: bool
    findings: tuple

    def to_text(self):
        lines = [f"constant {self.constant}: {'PASS' if self.passed else 'FAIL'}"]
        for row in self.rows:
            exact = "n/a" if row.exact is None else f"{row.exact:.6g}"
            lines.append(f"  r={row.r}: bracket={row.bracket:.6f} <= {row.claimed:.6f} "
                         f"[{'ok' if row.passed else 'violated'}]; exact-moment bound={exact}")
        lines += [f"  finding: {f}" for f in self.findings]
        return "\n".join(lines)


def verify_thm1_constant(r_max, exact_r_max=6) -> ConstantReport:
    """Re-derive the Friedman constant from the crude bracket at the worst case ``n = 1``.

    Failures are reported, not raised. For ``r <= exact_r_max`` the bound is
    also assembled from exact single-trial moments as an independent check.
    """
    if r_max < 2:
        raise ValidationError("r_max must be at least 2")
    from .smoothness import make_test_function

    unit = make_test_function("constant", c=0.0)
    # h_4 = 1 surrogate: a test function whose h_4 is 1
    h4_unit = TestFunction("h4_unit", unit.derivative, (0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    constant = FRIEDMAN_CONSTANT
    rows = []
    findings = []
    for r in range(2, r_max + 1):
        bracket = friedman_crude_bracket(r, 1)
        limit = friedman_crude_bracket(r, 10**12) * 10**12
        claimed = constant * r**5
        exact = exact_ok = None
        if r <= exact_r_max:
            inputs = BoundInputs(TrialModel.rank(r), 1, dominating_quadratic_g("order3", r), h4_unit)
            exact = bound_zero_third_moment(inputs).value
            exact_ok = exact <= claimed
            if not exact_ok:
                findings.append(f"r={r}: exact-moment bound {exact:.6g} exceeds {claimed:.6g}")
        ok = bracket <= claimed
        if not ok:
            findings.append(f"r={r}: crude bracket {bracket:.6f} exceeds {claimed:.6f}")
        rows.append(ConstantCheck(r, bracket, limit, claimed, exact, ok, exact_ok))
    return ConstantReport(constant, tuple(rows), all(row.passed for row in rows), tuple(findings))


# --------------------------------------------------------------------------
# term assembly


class _Terms:
    """Single-trial ingredients shared by the plug-in theorems."""

    def __init__(self, inputs: BoundInputs):
        self.inputs = inputs
        model, n, P = inputs.model, inputs.n, inputs.P
        self.n = n
        self.A = P.A
        self.B = np.asarray(P.B)
        self.r = np.asarray(P.r)
        self.abs_x = np.abs(model.outcomes)
        self.a = self.abs_x.sum(axis=1)
        cov = model.covariance().entries
        self.cov = cov
        sig = np.diag(cov)
        d = model.d
        self.EW = np.array([mom.w_abs_moment(model, t, self.r[t], n) if self.B[t] else 0.0 for t in range(d)])
        self.EZ = np.array([mom.gaussian_abs_moment(sig[t], self.r[t]) for t in range(d)])
        self.EZ1 = np.array([mom.gaussian_abs_moment(sig[t], self.r[t] + 1) for t in range(d)])
        self.Xr = self.abs_x ** self.r  # |X_t|^{r_t} per outcome
        self.C2 = float(np.abs(cov).sum())
        self.third = model.third_moments()
        self.C3 = float(np.abs(self.third).sum())

    def E(self, values):
        return self.inputs.model.expect(values)

    def block(self, u, base=2.0, z=None, extra=None):
        """``A E u + sum_t base^{r_t} B_t (2^{r_t} E u E|W_t|^{r_t} + 2^{r_t} n^{-r_t/2} E[u |X_t|^{r_t}] + z_t E u)``.

        ``extra`` overrides ``E[u |X_t|^{r_t}]`` (used for the block printed without ``u``).
        """
        Eu = self.E(u)
        z = self.EZ if z is None else z
        uxr = np.array([self.E(u * self.Xr[:, t]) for t in range(len(self.B))]) if extra is None else extra
        two = 2.0**self.r
        inner = two * Eu * self.EW + two * uxr / self.n ** (self.r / 2) + z * Eu
        return self.A * Eu + float(np.sum(base**self.r * self.B * inner))


def _zero_third_terms(t: _Terms, tf):
    n = t.n
    pre = h_m(tf, 4) / (24 * n**2) * n
    return [
        ("h4_fourth_moment", pre * t.block(t.a**4)),
        ("h4_covariance", pre * 9 * t.C2 * t.block(t.a**2)),
    ]


def _even_M_terms(t: _Terms, tf):
    n = t.n
    terms = _zero_third_terms(t, tf)
    pre4 = h_m(tf, 4) / (24 * n**2) * n
    # third block as printed: E|X_t^{r_t}| without the |X_m| factor, so summing over m gives d copies
    d = t.abs_x.shape[1]
    xr_only = d * np.array([t.E(t.Xr[:, s]) for s in range(d)])
    terms.append(("h4_third_moment", pre4 * 3 * t.C3 * t.block(t.a, extra=xr_only)))
    pre6 = h_m(tf, 6) / (72 * n**3) * n * t.C3 * n
    z = 2.0 * t.EZ1
    terms.append(("h6_third_moment", pre6 * t.block(t.a**3, base=3.0, z=z)))
    terms.append(("h6_covariance", pre6 * 2 * t.C2 * t.block(t.a, base=3.0, z=z)))
    return terms


def _first_offending_third(third):
    idx = np.argwhere(np.abs(third) > THIRD_MOMENT_TOL)
    return None if idx.size == 0 else tuple(int(v) for v in idx[0])


# --------------------------------------------------------------------------
# plug-in theorems


def bound_general_halfrate(inputs: BoundInputs) -> BoundReport:
    """Order ``n**-1/2`` bound for non-negative definite ``Sigma``, ``g`` in ``C_P^3``, ``h`` in ``C_b^3``."""
    t = _Terms(inputs)
    n = t.n
    pre = h_m(inputs.tf, 3) / (6 * n**1.5) * n
    terms = [
        ("h3_third_moment", pre * t.block(t.a**3)),
        ("h3_covariance", pre * 2 * t.C2 * t.block(t.a)),
    ]
    return _report(terms, "halfrate_nnd", inputs)


def _abs_normal_mean(mu, s):
    # E|N(mu, s^2)|
    if s == 0:
        return np.abs(mu)
    return s * math.sqrt(2 / math.pi) * np.exp(-0.5 * (mu / s) ** 2) + mu * (1 - 2 * stats.norm.cdf(-mu / s))


def _mixed_gaussian(var_u, var_v, cov_uv, q):
    """``E|U| |V|**q`` for a centred bivariate normal, by one-dimensional quadrature."""
    sv = math.sqrt(var_v)
    beta = cov_uv / var_v
    s = math.sqrt(max(var_u - beta * cov_uv, 0.0))

    def integrand(v):
        return abs(v) ** q * _abs_normal_mean(beta * v, s) * stats.norm.pdf(v, scale=sv)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-11)
    return val


def bound_general_halfrate_pd(inputs: BoundInputs) -> BoundReport:
    """Order ``n**-1/2`` bound for positive definite ``Sigma``, ``g`` in ``C_P^2``, ``h`` in ``C_b^2``."""
    cov = inputs.model.covariance().entries
    eig = np.linalg.eigvalsh(cov)
    if eig.min() <= mom.ACTIVE_EIG:
        raise PreconditionError(
            f"covariance matrix is singular (smallest eigenvalue {eig.min():.3e}); positive definite Sigma required"
        )
    t = _Terms(inputs)
    inv = np.linalg.inv(cov)
    # (Sigma^{-1/2} Z)_s has variance (Sigma^{-1})_ss; its covariance with Z_t = (Sigma^{1/2} Z)_t is delta_st
    s = int(np.argmin(np.diag(inv)))
    e_abs = math.sqrt(2 / math.pi) * math.sqrt(inv[s, s])
    d = cov.shape[0]
    ratio = np.array([
        _mixed_gaussian(inv[s, s], cov[u, u], 1.0 if u == s else 0.0, t.r[u]) / e_abs for u in range(d)
    ])
    n = t.n
    pre = h_m(inputs.tf, 2) / (2 * n**1.5) * e_abs * n
    terms = [
        ("h2_third_moment", pre * t.block(t.a**3, z=ratio)),
        ("h2_covariance", pre * 2 * t.C2 * t.block(t.a, z=ratio)),
    ]
    return _report(terms, "halfrate_pd", inputs)


def bound_even_M(inputs: BoundInputs) -> BoundReport:
    """Order ``n**-1`` bound ``M`` for even ``g`` in ``C_P^6`` and ``h`` in ``C_b^6``."""
    if not inputs.g_is_even:
        raise PreconditionError(f"g is not even (power divergence with lambda = {inputs.lam})")
    return _report(_even_M_terms(_Terms(inputs), inputs.tf), "even_M", inputs)


def bound_zero_third_moment(inputs: BoundInputs, crude=False) -> BoundReport:
    """Order ``n**-1`` bound when all signed third moments ``E X_j X_k X_l`` vanish.

    ``crude=True`` (rank model with ``P = 4 + 16 sum w**4`` only) replaces each
    expectation by its crude Hoelder constant instead of the exact value.
    """
    third = inputs.model.third_moments()
    bad = _first_offending_third(third)
    if bad is not None:
        raise PreconditionError(f"third moment E X_j X_k X_l is nonzero at (j, k, l) = {bad}: {third[bad]:.6g}")
    if crude:
        P = inputs.P
        r = inputs.model.d
        if inputs.model.kind != "rank" or P != dominating_quadratic_g("order3", r):
            raise ValidationError("crude mode reproduces the rank model with P = 4 + 16 sum w**4 only")
        value = friedman_crude_bracket(r, inputs.n, h_m(inputs.tf, 4))
        return _report([("crude_bracket", value)], "zero_third_crude", inputs)
    return _report(_zero_third_terms(_Terms(inputs), inputs.tf), "zero_third", inputs)


def bound_relaxed_even(inputs: BoundInputs) -> BoundReport:
    """``M`` plus the correction for ``g = a + n**-1/2 b`` in ``C_{Q, n^{-1/2}}^6``; ``inputs.P`` plays ``Q``."""
    if inputs.statistic == "power_divergence" and not pd_admissible(inputs.lam):
        raise PreconditionError(
            f"lambda = {inputs.lam}: the perturbed-even class needs a positive integer lambda or lambda >= 5"
        )
    t = _Terms(inputs)
    terms = _even_M_terms(t, inputs.tf)
    n = t.n
    corr = h_tilde_m(inputs.tf, 3) / (6 * n**2) * n * t.C3 * (t.A + float(np.sum(2.0 ** (t.r + 1) * t.B * t.EZ)))
    terms.append(("h3_tilde_correction", corr))
    return _report(terms, "relaxed_even", inputs)


# --------------------------------------------------------------------------
# input builders


def rank_inputs(r, n, tf, order="order3") -> BoundInputs:
    return BoundInputs(TrialModel.rank(r), n, dominating_quadratic_g(order, r), tf)


def pearson_inputs(probs, n, tf, order="order6") -> BoundInputs:
    model = TrialModel.pearson(probs)
    return BoundInputs(model, n, dominating_quadratic_g(order, model.d), tf)


def power_divergence_inputs(probs, n, tf, lam) -> BoundInputs:
    """Inputs for ``T_lambda`` with the polynomial ``Q`` of the perturbed-even class."""
    model = TrialModel.pearson(probs)
    Q = pd_dominating_functions(lam, model.probs).Q
    return BoundInputs(model, n, Q, tf, "power_divergence", float(lam))
