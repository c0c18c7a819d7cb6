"""Complete-block-design data and the chi-square type statistics built on it.

Two data models are supported:

* rank model: ``n`` trials each ranking ``r`` treatments (:class:`RankMatrix`);
* Pearson model: ``n`` multinomial trials over ``r`` classes (:class:`CellCounts`).

Both are reduced to a standardized vector ``W`` (:class:`WVector`) whose squared
norm is the Friedman or Pearson statistic. The power divergence family is
evaluated either directly from cell counts or through the decomposition
``T = sum(W**2) + R(W)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, ValidationError

#: Distance to the poles 0 and -1 below which the closed-form limit statistic is used.
LAMBDA_SWITCH = 1e-4
#: Number of series terms used by default in :func:`pd_series_remainder`.
SERIES_TERMS = 40

_PROB_TOL = 1e-12
_W_TOL = 1e-9


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def check_probs(probs):
    """Validate a probability vector and return it as a read-only float array."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValidationError(f"probs must be a vector of length >= 2, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise ValidationError("probs must be strictly positive and finite")
    if abs(p.sum() - 1.0) > _PROB_TOL:
        raise ValidationError(f"probs must sum to 1 (got {p.sum()!r})")
    return _readonly(p)


@dataclass(frozen=True)
class RankMatrix:
    """Rankings of ``r`` treatments over ``n`` trials; row ``i`` is ``pi_i(1..r)``."""

    ranks: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.ranks)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 2:
            raise ValidationError(f"ranks must be an n x r grid with n >= 1, r >= 2; got shape {a.shape}")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(np.equal(np.mod(a, 1), 0)):
                raise ValidationError("ranks must be integers")
            a = a.astype(np.int64)
        r = a.shape[1]
        target = np.arange(1, r + 1)
        for i, row in enumerate(a):
            if not np.array_equal(np.sort(row), target):
                raise ValidationError(f"row {i} is not a permutation of 1..{r}: {row.tolist()}", row=i)
        object.__setattr__(self, "ranks", _readonly(a.astype(np.int64)))

    @classmethod
    def from_rows(cls, rows):
        return cls(np.asarray(rows))

    @property
    def n(self):
        return self.ranks.shape[0]

    @property
    def r(self):
        return self.ranks.shape[1]


@dataclass(frozen=True)
class CellCounts:
    """Observed class counts ``U_1..U_r`` together with the null probabilities."""

    counts: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.counts)
        if u.ndim != 1 or u.size < 2:
            raise ValidationError(f"counts must be a vector of length >= 2, got shape {u.shape}")
        if not np.issubdtype(u.dtype, np.integer):
            if not np.all(np.equal(np.mod(u, 1), 0)):
                raise ValidationError("counts must be integers")
            u = u.astype(np.int64)
        if np.any(u < 0):
            raise ValidationError("counts must be non-negative")
        if u.sum() < 1:
            raise ValidationError("at least one trial is required")
        p = check_probs(self.probs)
        if p.size != u.size:
            raise ValidationError(f"counts has {u.size} classes but probs has {p.size}")
        object.__setattr__(self, "counts", _readonly(u.astype(np.int64)))
        object.__setattr__(self, "probs", p)

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def r(self):
        return self.counts.size

    @property
    def expected(self):
        return self.n * self.probs


@dataclass(frozen=True)
class StandardizedSample:
    """Standardized per-trial values ``X_ij`` (an ``n x r`` grid)."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.asarray(self.x, dtype=float)))


@dataclass(frozen=True)
class WVector:
    """Normalized column sums ``W_j = n**-0.5 * sum_i X_ij``.

    ``probs`` is ``None`` for the rank model; for the Pearson model it holds the
    class probabilities and the constraint is ``sum(sqrt(p) * w) == 0``.
    """

    w: np.ndarray
    n: int
    probs: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise ValidationError("w must be a vector")
        if self.n < 1:
            raise ValidationError("n must be positive")
        scale = max(1.0, float(np.abs(w).max(initial=0.0)))
        if self.probs is None:
            resid = w.sum()
        else:
            p = check_probs(self.probs)
            object.__setattr__(self, "probs", p)
            resid = np.sqrt(p) @ w
        if abs(resid) > _W_TOL * scale * w.size:
            raise ValidationError(f"w violates its linear constraint (residual {resid:.3e})")
        object.__setattr__(self, "w", _readonly(w))

    @property
    def r(self):
        return self.w.size


class LimitMode(enum.Enum):
    EXACT = "exact"
    LIMIT_ZERO = "limit_zero"
    LIMIT_MINUS_ONE = "limit_minus_one"


@dataclass(frozen=True)
class PdIndex:
    """Power divergence index; the limit mode is derived from ``lam``."""

    lam: float
    limit_mode: LimitMode = field(init=False)

    def __post_init__(self):
        lam = float(self.lam)
        if not math.isfinite(lam):
            raise ValidationError("lambda must be finite")
        object.__setattr__(self, "lam", lam)
        if abs(lam) < LAMBDA_SWITCH:
            mode = LimitMode.LIMIT_ZERO
        elif abs(lam + 1.0) < LAMBDA_SWITCH:
            mode = LimitMode.LIMIT_MINUS_ONE
        else:
            mode = LimitMode.EXACT
        object.__setattr__(self, "limit_mode", mode)


def as_index(idx):
    return idx if isinstance(idx, PdIndex) else PdIndex(idx)


# --------------------------------------------------------------------------
# rank model


def rank_scale(r):
    """Factor ``sqrt(12 / (r (r + 1)))`` turning centred ranks into ``X_ij``."""
    return math.sqrt(12.0 / (r * (r + 1)))


def standardize_ranks(rm: RankMatrix) -> StandardizedSample:
    r = rm.r
    x = rank_scale(r) * (rm.ranks - (r + 1) / 2.0)
    return StandardizedSample(x)


def w_vector(xs: StandardizedSample, probs=None) -> WVector:
    n = xs.x.shape[0]
    return WVector(xs.x.sum(axis=0) / math.sqrt(n), n, probs)


def friedman(rm: RankMatrix) -> float:
    w = w_vector(standardize_ranks(rm)).w
    return float(w @ w)


def friedman_from_sums(sums, n, r):
    """Friedman statistic from rank column sums ``S_j`` (vectorized over leading axes)."""
    s = np.asarray(sums, dtype=float)
    dev = 2.0 * s - n * (r + 1)
    return 3.0 * np.sum(dev * dev, axis=-1) / (r * (r + 1) * n)


# --------------------------------------------------------------------------
# Pearson model and power divergence


def standardize_counts(cc: CellCounts) -> WVector:
    e = cc.expected
    return WVector((cc.counts - e) / np.sqrt(e), cc.n, cc.probs)


def pearson(cc: CellCounts) -> float:
    return float(pearson_from_counts(cc.counts, cc.probs))


def pearson_from_counts(counts, probs):
    """Vectorized Pearson statistic over the last axis of ``counts``."""
    u = np.asarray(counts, dtype=float)
    n = u.sum(axis=-1, keepdims=True)
    e = n * np.asarray(probs, dtype=float)
    return np.sum((u - e) ** 2 / e, axis=-1)


def pd_from_counts(counts, probs, idx):
    """Vectorized power divergence over the last axis of ``counts``.

    Zero cells are handled by continuity: for ``lam > -1`` they contribute 0;
    for ``lam <= -1`` the statistic is ``+inf``.
    """
    idx = as_index(idx)
    lam = idx.lam
    u = np.asarray(counts, dtype=float)
    n = u.sum(axis=-1, keepdims=True)
    e = n * np.asarray(probs, dtype=float)
    zero = u == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        if idx.limit_mode is LimitMode.LIMIT_ZERO:
            return 2.0 * np.sum(xlogy(u, u / e), axis=-1)
        if idx.limit_mode is LimitMode.LIMIT_MINUS_ONE:
            t = 2.0 * np.sum(e * np.log(e / np.where(zero, 1.0, u)), axis=-1)
            return np.where(zero.any(axis=-1), np.inf, t)
        ratio = np.where(zero, 1.0, u / e)
        terms = np.where(zero, 0.0, u * np.expm1(lam * np.log(ratio)))
        t = 2.0 / (lam * (lam + 1.0)) * np.sum(terms, axis=-1)
    if lam < -1.0:
        t = np.where(zero.any(axis=-1), np.inf, t)
    return t


def power_divergence(cc: CellCounts, idx) -> float:
    """Cressie-Read power divergence statistic ``T_lambda``.

    Returns ``inf`` when ``lam < -1`` and some count is zero; raises
    :class:`DomainError` in the ``lam -> -1`` limit mode with a zero count.
    """
    idx = as_index(idx)
    if idx.limit_mode is LimitMode.LIMIT_MINUS_ONE and np.any(cc.counts == 0):
        raise DomainError("lambda = -1 statistic diverges when a cell count is zero")
    return float(pd_from_counts(cc.counts, cc.probs, idx))


def _remainder_parts(w: WVector, probs):
    p = check_probs(w.probs if probs is None else probs)
    if p.size != w.r:
        raise ValidationError("probs and w have different lengths")
    e = w.n * p
    x = w.w / np.sqrt(e)
    return e, x


def pd_remainder(w: WVector, probs=None, idx=1.0) -> float:
    """``R(w) = T_lambda(w) - sum(w**2)`` from its own closed form (no subtraction of T)."""
    idx = as_index(idx)
    e, x = _remainder_parts(w, probs)
    base = 1.0 + x
    if idx.limit_mode is LimitMode.LIMIT_ZERO:
        if np.any(base < 0):
            raise DomainError("1 + w_j / sqrt(n p_j) must be non-negative")
        phi = xlogy(base, base) - x - 0.5 * x * x
        return float(2.0 * np.sum(e * phi))
    if idx.limit_mode is LimitMode.LIMIT_MINUS_ONE:
        if np.any(base <= 0):
            raise DomainError("1 + w_j / sqrt(n p_j) must be positive for lambda = -1")
        phi = -np.log1p(x) + x - 0.5 * x * x
        return float(2.0 * np.sum(e * phi))

    lam = idx.lam
    alpha = lam + 1.0
    integral = float(alpha).is_integer()
    if not integral and np.any(base < 0):
        raise DomainError("fractional power of a negative base: need 1 + w_j / sqrt(n p_j) >= 0")
    if alpha <= 0 and np.any(base == 0):
        raise DomainError("non-positive power of zero: statistic diverges")
    pos = base > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        pm1 = np.where(pos, np.expm1(alpha * np.log1p(np.where(pos, x, 0.0))), 0.0)
    neg = ~pos
    if np.any(neg):
        pm1 = np.where(neg, np.power(base, alpha) - 1.0, pm1)
    phi = pm1 - alpha * x - 0.5 * alpha * lam * x * x
    return float(2.0 / (lam * alpha) * np.sum(e * phi))


def pd_series_coefficients(lam, k_max):
    """Coefficients ``c_k`` (k = 0..k_max) with ``R = 2 sum_j n p_j sum_{k>=3} c_k x_j**k``.

    ``c_k = (-lam-1)_k (-1)**k / (k! lam (lam+1)) = prod_{i=1}^{k-2} (lam - i) / k!``,
    which stays finite at ``lam`` in {0, -1}.
    """
    c = np.zeros(k_max + 1)
    if k_max >= 3:
        acc = 1.0 / 6.0  # k = 3: (lam - 1) / 3!
        acc *= lam - 1.0
        c[3] = acc
        for k in range(4, k_max + 1):
            acc *= (lam - (k - 2)) / k
            c[k] = acc
    return c


def pd_series_remainder(w: WVector, probs=None, lam=1.0, K=SERIES_TERMS) -> float:
    """Partial sum (terms ``k = 3..K``) of the binomial series for ``R(w)``."""
    if K < 3:
        return 0.0
    e, x = _remainder_parts(w, probs)
    if np.any(np.abs(x) >= 1.0):
        raise DomainError("binomial series requires |w_j| < sqrt(n p_j) for all j")
    c = pd_series_coefficients(float(lam), int(K))
    # Horner in x over k = 3..K, then multiply by x**3
    acc = np.zeros_like(x)
    for k in range(int(K), 2, -1):
        acc = acc * x + c[k]
    return float(2.0 * np.sum(e * acc * x**3))
