"""Covariances and moments consumed by the bound formulas.

Single-trial expectations are computed by exact enumeration of one trial:
all ``r!`` rankings for the rank model, the ``r`` class outcomes for the
Pearson model. Where the rank model gives rational answers they are kept as
:class:`fractions.Fraction` and converted to floats only at the API boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import DomainError, ResourceError, ValidationError
from .statcore import check_probs, rank_scale

#: Largest r for which the rank model enumerates its r! single-trial outcomes.
MAX_ENUM_R = 8
#: Eigenvalues above -EIG_CLAMP are treated as zero when taking square roots.
EIG_CLAMP = 1e-10
#: Eigenvalues above this count as active directions of a singular covariance.
ACTIVE_EIG = 1e-10
#: Largest n for which E|W_t|^q with non-even q is taken from the exact lattice law.
MAX_EXACT_W_N = 4000


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric non-negative definite ``r x r`` matrix.

    ``exact`` optionally holds the same entries as nested tuples of fractions.
    """

    entries: np.ndarray
    exact: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.exact is not None:
            exact = tuple(tuple(Fraction(v) for v in row) for row in self.exact)
            object.__setattr__(self, "exact", exact)
            a = np.array([[float(v) for v in row] for row in exact])
        else:
            a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"covariance must be square, got shape {a.shape}")
        if not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise ValidationError("covariance must be symmetric")
        if np.linalg.eigvalsh(a).min(initial=0.0) < -EIG_CLAMP:
            raise ValidationError("covariance is not non-negative definite")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def r(self):
        return self.entries.shape[0]

    @classmethod
    def from_fractions(cls, rows):
        return cls(entries=None, exact=rows)


def friedman_covariance(r) -> CovarianceMatrix:
    if r < 2:
        raise ValidationError("r must be at least 2")
    diag = Fraction(r - 1, r)
    off = Fraction(-1, r)
    rows = [[diag if j == k else off for k in range(r)] for j in range(r)]
    return CovarianceMatrix.from_fractions(rows)


def pearson_covariance(probs) -> CovarianceMatrix:
    p = check_probs(probs)
    s = np.sqrt(p)
    return CovarianceMatrix(np.eye(p.size) - np.outer(s, s))


# --------------------------------------------------------------------------
# univariate rank moments


def _centred_power_sum(r, m):
    # sum_j (j - (r+1)/2)**m as an exact fraction
    return sum(Fraction(2 * j - r - 1, 2) ** m for j in range(1, r + 1))


@lru_cache(maxsize=None)
def rank_moment_exact(r, m) -> Fraction:
    """``E X**m`` for the standardized rank variable, by direct summation."""
    if r < 2 or m < 0:
        raise ValidationError("need r >= 2 and m >= 0")
    if m % 2:
        return Fraction(0)
    return Fraction(12, r * (r + 1)) ** (m // 2) * _centred_power_sum(r, m) / r


def rank_moment(r, m) -> float:
    return float(rank_moment_exact(r, m))


@dataclass(frozen=True)
class MomentTable:
    """Closed-form even moments ``E X**m`` (m = 2, 4, 6, 8) of the rank variable."""

    r: int
    values: dict

    def __getitem__(self, m):
        return self.values[m]

    def as_floats(self):
        return {m: float(v) for m, v in self.values.items()}

    def mixed_abs(self, powers, signed=False):
        return mixed_abs_moment_exact(TrialModel.rank(self.r), tuple(powers), signed)


def closed_form_moments(r) -> MomentTable:
    if r < 2:
        raise ValidationError("r must be at least 2")
    r = Fraction(r)
    q = r * r - 1
    ex2 = (r - 1) / r
    ex4 = Fraction(144) / (r**2 * (r + 1) ** 2) * q * (3 * r**2 - 7) / 240
    ex6 = Fraction(12**3) / (r**3 * (r + 1) ** 3) * q * (3 * r**4 - 18 * r**2 + 31) / 1344
    ex8 = Fraction(12**4) / (r**4 * (r + 1) ** 4) * q * (5 * r**6 - 55 * r**4 + 239 * r**2 - 381) / 11520
    return MomentTable(int(r), {2: ex2, 4: ex4, 6: ex6, 8: ex8})


def w4_moment_exact(r, n) -> Fraction:
    """``E W_j**4 = 3 (n-1)/n (E X**2)**2 + E X**4 / n`` for the rank model."""
    if r < 2 or n < 1:
        raise ValidationError("need r >= 2 and n >= 1")
    ex2 = rank_moment_exact(r, 2)
    ex4 = rank_moment_exact(r, 4)
    return Fraction(3 * (n - 1), n) * ex2 * ex2 + ex4 / n


def w4_moment(r, n) -> float:
    return float(w4_moment_exact(r, n))


# --------------------------------------------------------------------------
# single-trial models


@dataclass(frozen=True, eq=False)
class TrialModel:
    """Law of one trial's vector ``X_i = (X_i1..X_id)`` as weighted outcomes."""

    kind: str
    outcomes: np.ndarray
    weights: np.ndarray
    r: int
    probs: np.ndarray | None = None
    int_outcomes: np.ndarray | None = None  # rank model: 2 pi - (r + 1)

    @classmethod
    @lru_cache(maxsize=None)
    def rank(cls, r):
        if r < 2:
            raise ValidationError("r must be at least 2")
        if r > MAX_ENUM_R:
            raise ResourceError(f"rank enumeration over r! outcomes is capped at r <= {MAX_ENUM_R}")
        perms = np.array(list(itertools.permutations(range(1, r + 1))), dtype=np.int64)
        c = 2 * perms - (r + 1)
        x = rank_scale(r) * c / 2.0
        w = np.full(len(perms), 1.0 / len(perms))
        for a in (x, w, c):
            a.setflags(write=False)
        return cls("rank", x, w, r, None, c)

    @classmethod
    def pearson(cls, probs):
        p = check_probs(probs)
        eye = np.eye(p.size)
        x = (eye - p) / np.sqrt(p)
        x.setflags(write=False)
        return cls("pearson", x, p, p.size, p)

    @classmethod
    def synthetic(cls, outcomes, weights):
        x = np.array(outcomes, dtype=float)
        w = np.array(weights, dtype=float)
        if x.ndim != 2 or w.shape != (x.shape[0],):
            raise ValidationError("outcomes must be K x d and weights length K")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValidationError("weights must be a probability vector")
        if np.any(np.abs(w @ x) > 1e-12):
            raise ValidationError("synthetic trial vectors must have mean zero")
        x.setflags(write=False)
        w.setflags(write=False)
        return cls("synthetic", x, w, x.shape[1])

    @property
    def d(self):
        return self.outcomes.shape[1]

    def expect(self, values):
        """Expectation of a per-outcome array over one trial."""
        return float(np.dot(self.weights, values))

    def covariance(self) -> CovarianceMatrix:
        if self.kind == "rank":
            return friedman_covariance(self.r)
        if self.kind == "pearson":
            return pearson_covariance(self.probs)
        x = self.outcomes
        return CovarianceMatrix((x * self.weights[:, None]).T @ x)

    def third_moments(self):
        """Signed ``E X_j X_k X_l`` as a ``d x d x d`` array."""
        x = self.outcomes
        return np.einsum("a,aj,ak,al->jkl", self.weights, x, x, x)


def _check_powers(model, powers):
    powers = tuple(powers)
    if len(powers) > model.d:
        raise ValidationError(f"at most {model.d} powers allowed")
    if any(a < 0 for a in powers):
        raise ValidationError("powers must be non-negative")
    return powers + (0,) * (model.d - len(powers))


def mixed_abs_moment(model: TrialModel, powers, signed=False) -> float:
    """``E prod_j |X_1j|**a_j`` (or the signed product when ``signed``) by enumeration."""
    powers = _check_powers(model, powers)
    if model.kind == "rank" and all(float(a).is_integer() for a in powers):
        total = sum(int(a) for a in powers)
        if total % 2 == 0:
            return float(mixed_abs_moment_exact(model, powers, signed))
    x = model.outcomes
    base = x if signed else np.abs(x)
    prod = np.ones(x.shape[0])
    for j, a in enumerate(powers):
        if a:
            prod = prod * base[:, j] ** a
    return model.expect(prod)


def mixed_abs_moment_exact(model: TrialModel, powers, signed=False) -> Fraction:
    """Rational rank-model mixed moment; requires integer powers of even total degree."""
    if model.kind != "rank":
        raise ValidationError("exact mixed moments are available for the rank model only")
    powers = tuple(int(a) for a in _check_powers(model, powers))
    total = sum(powers)
    if total % 2:
        raise DomainError("odd total degree gives an irrational moment")
    c = model.int_outcomes
    acc = 0
    for row in c:
        term = 1
        for v, a in zip(row.tolist(), powers):
            if a:
                term *= (v if signed else abs(v)) ** a
        acc += term
    scale_sq = Fraction(12, model.r * (model.r + 1))
    # X = sqrt(scale_sq) * c / 2
    return Fraction(acc, len(c)) * scale_sq ** (total // 2) / 2**total


# --------------------------------------------------------------------------
# Gaussian moments and matrix square roots


def gaussian_abs_moment(sigma2, p) -> float:
    """``E|Z|**p`` for ``Z ~ N(0, sigma2)``."""
    if sigma2 < 0 or p < 0:
        raise ValidationError("sigma2 and p must be non-negative")
    if sigma2 == 0:
        return 1.0 if p == 0 else 0.0
    return math.exp(0.5 * p * math.log(2 * sigma2) + gammaln((p + 1) / 2) - 0.5 * math.log(math.pi))


def _eig(cov):
    a = cov.entries if isinstance(cov, CovarianceMatrix) else np.asarray(cov, dtype=float)
    vals, vecs = np.linalg.eigh(a)
    if vals.min(initial=0.0) < -EIG_CLAMP:
        raise ValidationError(f"matrix is not positive semi-definite (eigenvalue {vals.min():.3e})")
    return np.clip(vals, 0.0, None), vecs


def matrix_sqrt(cov) -> np.ndarray:
    """Symmetric PSD square root via the eigendecomposition."""
    vals, vecs = _eig(cov)
    return (vecs * np.sqrt(vals)) @ vecs.T


def reduced_factor(cov) -> np.ndarray:
    """``d x k`` factor ``L`` with ``L L^T = cov`` over the ``k`` active eigen-directions."""
    vals, vecs = _eig(cov)
    keep = vals > ACTIVE_EIG
    return vecs[:, keep] * np.sqrt(vals[keep])


# --------------------------------------------------------------------------
# moments of W_t = n^{-1/2} sum_i X_it


def _moments_from_cumulants(kappa, order):
    # raw moments m_0..m_order from cumulants kappa[1..order]
    m = [1.0] + [0.0] * order
    for k in range(1, order + 1):
        m[k] = sum(math.comb(k - 1, j - 1) * kappa[j] * m[k - j] for j in range(1, k + 1))
    return m


def _cumulants_from_moments(mu, order):
    kappa = [0.0] * (order + 1)
    for k in range(1, order + 1):
        kappa[k] = mu[k] - sum(math.comb(k - 1, j - 1) * kappa[j] * mu[k - j] for j in range(1, k))
    return kappa


def w_even_moment(model: TrialModel, t, q, n) -> float:
    """``E W_t**q`` for even integer ``q`` via additivity of cumulants."""
    q = int(q)
    col = model.outcomes[:, t]
    mu = [model.expect(col**k) for k in range(q + 1)]
    kappa = _cumulants_from_moments(mu, q)
    # cumulants of W_t: n * kappa_k / n^{k/2}
    kw = [0.0] + [n * kappa[k] / n ** (k / 2) for k in range(1, q + 1)]
    return _moments_from_cumulants(kw, q)[q]


def _w_lattice_law(model: TrialModel, t, n):
    """Exact law of ``W_t`` as (values, probabilities) for rank and Pearson models."""
    if model.kind == "pearson":
        p = float(model.probs[t])
        k = np.arange(n + 1)
        return (k - n * p) / math.sqrt(n * p), stats.binom.pmf(k, n, p)
    if model.kind == "rank":
        r = model.r
        pmf = np.ones(1)
        step = np.full(r, 1.0 / r)
        for _ in range(n):
            pmf = np.convolve(pmf, step)
        s = np.arange(n, n * r + 1)
        return rank_scale(r) * (s - n * (r + 1) / 2.0) / math.sqrt(n), pmf
    raise ValidationError("lattice law is only available for rank and Pearson models")


@lru_cache(maxsize=4096)
def _w_abs_moment_cached(model, t, q, n):
    if float(q).is_integer() and int(q) % 2 == 0:
        return w_even_moment(model, t, int(q), n)
    if model.kind in ("rank", "pearson") and n <= MAX_EXACT_W_N:
        vals, probs = _w_lattice_law(model, t, n)
        return float(np.dot(probs, np.abs(vals) ** q))
    # Hoelder/Lyapunov: E|W|^q <= (E W^{2k})^{q / 2k} with 2k the next even integer
    k2 = 2 * math.ceil(q / 2) if q > 0 else 2
    return w_even_moment(model, t, k2, n) ** (q / k2)


def w_abs_moment(model: TrialModel, t, q, n) -> float:
    """``E|W_t|**q``: exact for even integer q, exact lattice law or a Lyapunov upper bound otherwise."""
    if q == 0:
        return 1.0
    return _w_abs_moment_cached(model, int(t), float(q), int(n))
