"""Exact and simulated null distributions, the smooth distance and rate fitting.

Rank model: a dynamic program over trials whose state is the vector of column
sums ``S_1..S_{r-1}`` (``S_r`` follows from ``sum_j S_j = n r (r+1) / 2``).
Pearson and power divergence: enumeration of all cell-count compositions.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError, NumericError, ResourceError, ValidationError
from .moments import TrialModel
from .statcore import as_index, check_probs, friedman_from_sums, pd_from_counts, pearson_from_counts

MAX_FRIEDMAN_R = 5
MAX_N = 512
#: Cap on DP lattice states (product of the state-array dimensions).
MAX_STATES = 20_000_000
#: Cap on the number of enumerated cell-count compositions.
MAX_COMPOSITIONS = 5_000_000
#: Rank model: exact rational probabilities by default when r <= EXACT_R_DEFAULT and n <= EXACT_N_DEFAULT.
EXACT_R_DEFAULT = 3
EXACT_N_DEFAULT = 128
#: Chi-square tail mass beyond the quadrature cut-off.
TAIL_MASS = 1e-14
QUAD_TOL = 1e-10
#: Replicates per Monte Carlo block; block b draws from SeedSequence(seed, spawn_key=(b,)).
MC_BLOCK = 10_000


# --------------------------------------------------------------------------
# lattice distributions


@dataclass(frozen=True, eq=False)
class LatticeDistribution:
    """Finite law on sorted ``values``; ``diverged_mass`` sits at ``+inf``."""

    values: np.ndarray
    probs: np.ndarray
    statistic: str
    exact_probs: tuple | None = None
    diverged_mass: float = 0.0
    exact_values: tuple | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1:
            raise ValidationError("values and probs must be 1-d arrays of equal length")
        if not np.all(np.isfinite(v)):
            raise ValidationError("support values must be finite")
        if np.any(p < 0):
            raise ValidationError("probabilities must be non-negative")
        total = math.fsum(p.tolist()) + self.diverged_mass
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")
        if self.exact_probs is not None and sum(self.exact_probs, Fraction(0)) != 1 - Fraction(self.diverged_mass):
            raise ValidationError("exact probabilities do not sum to 1")
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def is_exact(self):
        return self.exact_probs is not None

    def expect(self, fn):
        """``E fn(T)`` with compensated summation; requires no diverged mass."""
        if self.diverged_mass > 0:
            raise DomainError(f"statistic is +inf with probability {self.diverged_mass:.3g}")
        return math.fsum((self.probs * np.asarray(fn(self.values), dtype=float)).tolist())

    def mean(self):
        return self.expect(lambda v: v)

    def exact_mean(self) -> Fraction:
        """Rational mean; needs exact probabilities and exact support values."""
        if not self.is_exact or self.exact_values is None:
            raise ValidationError("distribution has no exact probabilities and values")
        return sum((q * v for q, v in zip(self.exact_probs, self.exact_values)), Fraction(0))

    def rows(self):
        out = [(float(v), float(p)) for v, p in zip(self.values, self.probs)]
        if self.diverged_mass:
            out.append((math.inf, float(self.diverged_mass)))
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["value", "probability"])
            for v, p in self.rows():
                w.writerow([f"{v:.17g}", f"{p:.17g}"])


def _merge(values, probs, rel=1e-12):
    """Sort and merge support points that agree to relative precision ``rel``."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    p = probs[order]
    new = np.ones(len(v), dtype=bool)
    if len(v) > 1:
        new[1:] = np.abs(np.diff(v)) > rel * np.maximum(1.0, np.abs(v[1:]))
    group = np.cumsum(new) - 1
    mv = v[new]
    mp = np.zeros(len(mv))
    np.add.at(mp, group, p)
    return mv, mp


# --------------------------------------------------------------------------
# rank model


def _check_friedman_size(r, n):
    if r < 2 or r > MAX_FRIEDMAN_R:
        raise ResourceError(f"exact rank-model DP supports 2 <= r <= {MAX_FRIEDMAN_R}; use Monte Carlo (mc_estimate)")
    if n < 1 or n > MAX_N:
        raise ResourceError(f"exact DP supports 1 <= n <= {MAX_N}; use Monte Carlo (mc_estimate)")
    states = (1 + (r - 1) * n) ** (r - 1)
    if states > MAX_STATES:
        raise ResourceError(
            f"r={r}, n={n} needs {states} DP states (cap {MAX_STATES}); use Monte Carlo (mc_estimate)"
        )


def friedman_dp(r, ns, exact=None):
    """Column-sum counts after each ``n`` in ``ns``.

    Returns ``{n: array}`` indexed by offsets ``S_j - n`` for ``j < r``. In exact
    mode entries are Python integers counting permutation sequences (total
    ``(r!)**n``); otherwise they are float probabilities.
    """
    ns = sorted(set(int(n) for n in ns))
    if not ns:
        raise ValidationError("need at least one n")
    _check_friedman_size(r, ns[-1])
    if exact is None:
        exact = r <= EXACT_R_DEFAULT and ns[-1] <= EXACT_N_DEFAULT
    perms = np.array(list(itertools.permutations(range(r))))[:, : r - 1]
    dtype = object if exact else float
    scale = 1 if exact else 1.0 / len(perms)
    cur = np.ones((1,) * (r - 1), dtype=dtype)
    if not exact:
        cur[...] = 1.0
    out = {}
    want = set(ns)
    for i in range(1, ns[-1] + 1):
        new = np.zeros(tuple(s + r - 1 for s in cur.shape), dtype=dtype)
        if exact:
            new[...] = 0
        for p in perms:
            new[tuple(slice(p[j], p[j] + cur.shape[j]) for j in range(r - 1))] += cur
        cur = new if exact else new * scale
        if i in want:
            out[i] = cur.copy()
    return out


def _column_sums(r, n, shape):
    idx = np.indices(shape).reshape(r - 1, -1).T + n
    last = n * r * (r + 1) // 2 - idx.sum(axis=1)
    return np.column_stack([idx, last])


def _friedman_law(r, n, counts):
    exact = counts.dtype == object
    flat = counts.reshape(-1)
    keep = np.array([c != 0 for c in flat]) if exact else flat > 0
    sums = _column_sums(r, n, counts.shape)[keep]
    # F = 3 sum (2 S_j - n (r+1))^2 / (r (r+1) n); group on the integer numerator
    q = ((2 * sums - n * (r + 1)) ** 2).sum(axis=1)
    uq, inv = np.unique(q, return_inverse=True)
    values = 3.0 * uq / (r * (r + 1) * n)
    if exact:
        total = math.factorial(r) ** n
        acc = [0] * len(uq)
        for g, c in zip(inv.tolist(), flat[keep].tolist()):
            acc[g] += c
        ex = tuple(Fraction(c, total) for c in acc)
        exv = tuple(Fraction(3 * int(v), r * (r + 1) * n) for v in uq)
        return LatticeDistribution(values, np.array([float(x) for x in ex]), "friedman", ex, 0.0, exv)
    probs = np.zeros(len(uq))
    np.add.at(probs, inv, flat[keep].astype(float))
    probs /= math.fsum(probs.tolist())
    return LatticeDistribution(values, probs, "friedman")


def exact_friedman_distributions(r, ns, exact=None):
    """Exact laws of Friedman's statistic for every ``n`` in ``ns`` from one DP pass."""
    return {n: _friedman_law(r, n, c) for n, c in friedman_dp(r, ns, exact).items()}


def exact_friedman_distribution(r, n, exact=None) -> LatticeDistribution:
    return exact_friedman_distributions(r, [n], exact)[n]


def rank_w_covariance_exact(r, n):
    """``E W_j W_k`` from the exact rank-model DP, as nested tuples of Fractions."""
    counts = friedman_dp(r, [n], exact=True)[n]
    flat = counts.reshape(-1)
    c = 2 * _column_sums(r, n, counts.shape) - n * (r + 1)
    total = math.factorial(r) ** n
    weights = flat.tolist()
    cols = c.T.tolist()
    scale = Fraction(12, r * (r + 1)) / (4 * n)
    cov = [[Fraction(0)] * r for _ in range(r)]
    for j in range(r):
        for k in range(j, r):
            s = sum(w * a * b for w, a, b in zip(weights, cols[j], cols[k]) if w)
            cov[j][k] = cov[k][j] = scale * Fraction(s, total)
    return tuple(tuple(row) for row in cov)


# --------------------------------------------------------------------------
# multinomial enumeration


def compositions(n, r):
    """All ``(U_1..U_r)`` with non-negative entries summing to ``n``, as an ``(N, r)`` int array."""
    total = math.comb(n + r - 1, r - 1)
    if total > MAX_COMPOSITIONS:
        raise ResourceError(f"{total} compositions exceed the cap {MAX_COMPOSITIONS}; use Monte Carlo (mc_estimate)")
    rows = np.zeros((1, 0), dtype=np.int64)
    for _ in range(r - 1):
        rem = n - rows.sum(axis=1)
        reps = rem + 1
        base = np.repeat(rows, reps, axis=0)
        starts = np.repeat(np.cumsum(reps) - reps, reps)
        col = np.arange(reps.sum()) - starts
        rows = np.column_stack([base, col])
    return np.column_stack([rows, n - rows.sum(axis=1)])


def _statistic_name(statistic):
    if statistic in ("pearson", "friedman"):
        return statistic
    return f"power_divergence(lambda={as_index(statistic).lam:g})"


def _counts_statistic(counts, probs, statistic):
    if statistic == "pearson":
        return pearson_from_counts(counts, probs)
    return pd_from_counts(counts, probs, as_index(statistic))


def exact_multinomial_distribution(probs, n, statistic="pearson") -> LatticeDistribution:
    """Exact law of Pearson's statistic or ``T_lambda`` under multinomial(n, p).

    ``statistic`` is ``"pearson"`` or a power divergence index (float or
    :class:`PdIndex`). Infinite values are collected in ``diverged_mass``.
    """
    p = check_probs(probs)
    if n < 1 or n > MAX_N:
        raise ResourceError(f"exact enumeration supports 1 <= n <= {MAX_N}; use Monte Carlo (mc_estimate)")
    U = compositions(int(n), p.size)
    logpmf = special.gammaln(n + 1) - special.gammaln(U + 1).sum(axis=1) + special.xlogy(U, p).sum(axis=1)
    pmf = np.exp(logpmf)
    vals = _counts_statistic(U, p, statistic)
    finite = np.isfinite(vals)
    diverged = math.fsum(pmf[~finite].tolist())
    mv, mp = _merge(vals[finite], pmf[finite])
    return LatticeDistribution(mv, mp, _statistic_name(statistic), None, diverged)


# --------------------------------------------------------------------------
# chi-square reference


@dataclass(frozen=True)
class ChiSquareRef:
    """``E h(Y)`` for ``Y ~ chi^2_df`` by adaptive quadrature after ``y = u**2``."""

    df: int
    tol: float = QUAD_TOL
    tail_mass: float = TAIL_MASS

    def __post_init__(self):
        if self.df < 1:
            raise ValidationError("df must be at least 1")

    def expect(self, h, sup_norm=1.0):
        df = self.df
        logc = -0.5 * df * math.log(2.0) - special.gammaln(0.5 * df) + math.log(2.0)
        upper = math.sqrt(stats.chi2.isf(self.tail_mass, df))

        def integrand(u):
            # chi^2 density at u^2 times the Jacobian 2u, on the log scale
            if u == 0.0:
                return float(h(0.0)) * math.exp(logc) if df == 1 else 0.0
            return float(h(u * u)) * math.exp(logc + (df - 1) * math.log(u) - 0.5 * u * u)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            value, err = integrate.quad(integrand, 0.0, upper, epsabs=self.tol / 10, epsrel=1e-13, limit=1000)
        achieved = err + sup_norm * self.tail_mass
        if achieved > self.tol:
            raise NumericError(f"chi-square quadrature reached {achieved:.3g} > {self.tol:.3g}",
                               estimate=value, achieved=achieved)
        return value


def chisq_expectation(tf, df, tol=QUAD_TOL) -> float:
    """``E h(Y)``, ``Y ~ chi^2_df``; ``tf`` is a :class:`TestFunction` or a bounded callable."""
    sup = tf.norm(0) if hasattr(tf, "norm") else 1.0
    return ChiSquareRef(int(df), tol).expect(tf, sup)


# --------------------------------------------------------------------------
# Monte Carlo


def _block_statistics(model: TrialModel, statistic, n, size, rng):
    if model.kind == "rank":
        r = model.r
        perms = np.array(list(itertools.permutations(range(1, r + 1))), dtype=np.int64)
        sums = np.zeros((size, r), dtype=np.int64)
        for _ in range(n):
            sums += perms[rng.integers(0, len(perms), size=size)]
        return friedman_from_sums(sums, n, r)
    if model.kind == "pearson":
        counts = rng.multinomial(n, model.probs, size=size)
        return _counts_statistic(counts, model.probs, statistic)
    raise ValidationError("Monte Carlo supports rank and Pearson models")


def mc_estimate(model: TrialModel, statistic, tf, n, reps, seed, workers=1):
    """Mean and standard error of ``h(statistic)`` over ``reps`` simulated experiments.

    Replicates are split into blocks of ``MC_BLOCK``; block ``b`` uses the
    stream ``SeedSequence(seed, spawn_key=(b,))``, so the result does not
    depend on ``workers``.
    """
    if reps < 100:
        raise ValidationError("reps must be at least 100")
    nblocks = -(-int(reps) // MC_BLOCK)

    def run(b):
        size = min(MC_BLOCK, reps - b * MC_BLOCK)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))
        return np.asarray(tf(_block_statistics(model, statistic, int(n), size, rng)), dtype=float)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(nblocks)))
    else:
        parts = [run(b) for b in range(nblocks)]
    vals = np.concatenate(parts)
    mean = math.fsum(vals.tolist()) / len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    return mean, se


# --------------------------------------------------------------------------
# smooth distance and rate fitting


@dataclass(frozen=True)
class DistanceEstimate:
    n: int
    delta: float
    stderr: float
    expectation: float
    reference: float


def _degrees_of_freedom(model):
    return model.d - 1


def exact_law(model: TrialModel, statistic, n):
    if model.kind == "rank":
        return exact_friedman_distribution(model.r, n)
    if model.kind == "pearson":
        return exact_multinomial_distribution(model.probs, n, statistic)
    raise ValidationError("exact laws exist for rank and Pearson models only")


def smooth_distance(model: TrialModel, statistic, tf, n, mode="exact", reps=100_000, seed=0) -> DistanceEstimate:
    """``|E h(T_n) - E h(Y)|`` with ``Y ~ chi^2_{d-1}``; ``mode`` is ``"exact"`` or ``"mc"``."""
    ref = chisq_expectation(tf, _degrees_of_freedom(model))
    if mode == "exact":
        e = exact_law(model, statistic, n).expect(tf)
        return DistanceEstimate(int(n), abs(e - ref), 0.0, e, ref)
    if mode == "mc":
        e, se = mc_estimate(model, statistic, tf, n, reps, seed)
        return DistanceEstimate(int(n), abs(e - ref), se, e, ref)
    raise ValidationError(f"unknown mode {mode!r}")


def exact_distances(model: TrialModel, statistic, tf, ns):
    """Exact ``Delta_n`` over a grid; the rank model shares one DP pass across the grid."""
    ref = chisq_expectation(tf, _degrees_of_freedom(model))
    if model.kind == "rank":
        laws = exact_friedman_distributions(model.r, ns)
    else:
        laws = {n: exact_law(model, statistic, n) for n in ns}
    out = []
    for n in sorted(laws):
        e = laws[n].expect(tf)
        out.append(DistanceEstimate(n, abs(e - ref), 0.0, e, ref))
    return out


@dataclass(frozen=True)
class RateEstimate:
    beta: float
    intercept: float
    residuals: np.ndarray
    ns: np.ndarray
    deltas: np.ndarray
    errors: np.ndarray
    beta_se: float
    ci95: tuple


def fit_rate(pairs) -> RateEstimate:
    """Weighted least squares of ``log Delta_n = c - beta log n``.

    ``pairs`` holds ``(n, delta)`` or ``(n, delta, stderr)``. Weights are
    ``(delta / stderr)**2`` when every point has a positive error bar, and unit
    otherwise. Non-positive deltas are dropped with a warning.
    """
    rows = [tuple(p) + (0.0,) * (3 - len(p)) for p in pairs]
    kept = [row for row in rows if row[1] > 0]
    if len(kept) < len(rows):
        warnings.warn(f"dropped {len(rows) - len(kept)} non-positive Delta_n point(s)", RuntimeWarning, stacklevel=2)
    if len(kept) < 3:
        raise ValidationError("rate fitting needs at least 3 points with positive Delta_n")
    n, delta, err = (np.array(c, dtype=float) for c in zip(*kept))
    x = np.log(n)
    y = np.log(delta)
    w = (delta / err) ** 2 if np.all(err > 0) else np.ones_like(x)
    sw = np.sqrt(w)
    design = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    resid = y - design @ coef
    dof = len(x) - 2
    if dof > 0:
        s2 = float(np.sum(w * resid**2) / dof)
        cov = s2 * np.linalg.inv((design * w[:, None]).T @ design)
        se = math.sqrt(max(cov[1, 1], 0.0))
        half = stats.t.ppf(0.975, dof) * se
    else:
        se, half = 0.0, 0.0
    beta = float(coef[1])
    return RateEstimate(beta, float(coef[0]), resid, n, delta, err, se, (beta - half, beta + half))
