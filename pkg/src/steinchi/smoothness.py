"""Smooth bounded test functions, Stirling-number constants and dominating functions.

A :class:`TestFunction` carries upper bounds on the sup-norms of its first
seven derivatives. For the trigonometric families these are exact; for the
other families they come from a numerical global maximization inflated by
``SAFETY``. Any upper bound keeps the downstream inequalities valid.

A :class:`DominatingFunction` is the polynomial envelope
``P(w) = A + sum_i B_i |w_i|**r_i`` used to control derivatives of ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite_e
from scipy import optimize

from .errors import PreconditionError, ValidationError
from .statcore import check_probs

#: Multiplicative inflation applied to numerically maximized norms.
SAFETY = 1.05
#: Number of derivative orders (0..NORM_ORDERS-1) carried by every test function.
NORM_ORDERS = 8
STIRLING_MAX = 12


# --------------------------------------------------------------------------
# Stirling numbers


def _stirling2_sum(m, j):
    return sum((-1) ** (j - i) * math.comb(j, i) * i**m for i in range(j + 1)) // math.factorial(j)


@lru_cache(maxsize=None)
def _stirling_table():
    return tuple(tuple(_stirling2_sum(m, j) for j in range(m + 1)) for m in range(STIRLING_MAX + 1))


def stirling2(m, j) -> int:
    """Stirling number of the second kind from the alternating-sum formula."""
    if not (0 <= j <= m <= STIRLING_MAX):
        raise ValidationError(f"stirling2 needs 0 <= j <= m <= {STIRLING_MAX}, got ({m}, {j})")
    return _stirling_table()[m][j]


def stirling2_recurrence(m, j) -> int:
    """Independent evaluation via ``S(m, j) = j S(m-1, j) + S(m-1, j-1)``."""
    row = [1]
    for k in range(1, m + 1):
        new = [0] * (k + 1)
        for i in range(1, k + 1):
            new[i] = i * (row[i] if i < len(row) else 0) + row[i - 1]
        row = new
    return row[j] if j < len(row) else 0


# --------------------------------------------------------------------------
# test functions


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Bounded smooth ``h`` with certified sup-norms ``norms[j] >= ||h^(j)||``.

    ``domain`` is ``"real"`` when the norms hold on the whole line and
    ``"nonneg"`` when they hold on ``[0, inf)`` only (enough for statistics,
    which are non-negative).
    """

    __test__ = False  # not a pytest class

    name: str
    derivative: Callable[[int, np.ndarray], np.ndarray]
    norms: tuple
    domain: str = "real"

    def __call__(self, x):
        return self.deriv(0, x)

    def deriv(self, k, x):
        if not 0 <= k < NORM_ORDERS:
            raise ValidationError(f"derivative order must be in 0..{NORM_ORDERS - 1}")
        x = np.asarray(x, dtype=float)
        return self.derivative(k, x)

    def norm(self, j):
        if j >= len(self.norms):
            raise ValidationError(f"no certified norm for derivative order {j}")
        return self.norms[j]

    def combine(self, a, other: "TestFunction", b) -> "TestFunction":
        """``a * self + b * other``, with norms bounded by the triangle inequality."""

        def derivative(k, x):
            return a * self.derivative(k, x) + b * other.derivative(k, x)

        norms = tuple(abs(a) * u + abs(b) * v for u, v in zip(self.norms, other.norms))
        domain = "real" if self.domain == other.domain == "real" else "nonneg"
        return TestFunction(f"{a}*{self.name}+{b}*{other.name}", derivative, norms, domain)


def _maximize_abs(fn, lo, hi, num=20001):
    """Global max of |fn| on [lo, hi]: dense grid then bounded local refinement."""
    x = np.linspace(lo, hi, num)
    v = np.abs(fn(x))
    i = int(np.argmax(v))
    best = float(v[i])
    a, b = x[max(i - 1, 0)], x[min(i + 1, num - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda t: -abs(float(fn(np.array(t)))), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def _sine(a, phase):
    def derivative(k, x):
        return a**k * np.sin(a * x + phase + k * math.pi / 2)

    return derivative


def _gauss_bump(c, s):
    def derivative(k, x):
        u = (x - c) / s
        coef = np.zeros(k + 1)
        coef[k] = 1.0
        return (-1) ** k * hermite_e.hermeval(u, coef) * np.exp(-0.5 * u * u) / s**k

    return derivative


@lru_cache(maxsize=None)
def _logistic_polys():
    # d^k sigma / dt^k = P_k(sigma)
    s = Polynomial([0.0, 1.0])
    ds = s * (1 - s)
    polys = [s]
    for _ in range(1, NORM_ORDERS):
        polys.append(polys[-1].deriv() * ds)
    return tuple(polys)


def _logistic(a, c):
    polys = _logistic_polys()

    def derivative(k, x):
        sig = 0.5 * (1.0 + np.tanh(0.5 * a * (x - c)))
        return a**k * polys[k](sig)

    return derivative


def make_test_function(kind, **params) -> TestFunction:
    """Build a test function of one of the supported families.

    ``sine(a)``, ``cosine(a)``: exact norms ``a**j``.
    ``gauss_bump(c, s)``: ``exp(-(x-c)**2 / (2 s**2))``.
    ``logistic(a, c)``: ``1 / (1 + exp(-a (x - c)))``.
    ``exp_decay(b)``: ``exp(-b x)``, norms ``b**j`` on ``[0, inf)``.
    ``constant(c)``: all derivative norms zero.
    """
    if kind in ("sine", "cosine"):
        a = float(params.get("a", 1.0))
        if a <= 0:
            raise ValidationError("a must be positive")
        phase = 0.0 if kind == "sine" else math.pi / 2
        norms = tuple(a**j for j in range(NORM_ORDERS))
        return TestFunction(f"{kind}:a={a:g}", _sine(a, phase), norms)
    if kind == "gauss_bump":
        c = float(params.get("c", 0.0))
        s = float(params.get("s", 1.0))
        if s <= 0:
            raise ValidationError("s must be positive")
        deriv = _gauss_bump(c, s)
        norms = (1.0,) + tuple(
            SAFETY * _maximize_abs(lambda x, k=k: deriv(k, x), c - 14 * s, c + 14 * s) for k in range(1, NORM_ORDERS)
        )
        return TestFunction(f"gauss_bump:c={c:g},s={s:g}", deriv, norms)
    if kind == "logistic":
        a = float(params.get("a", 1.0))
        c = float(params.get("c", 0.0))
        if a <= 0:
            raise ValidationError("a must be positive")
        polys = _logistic_polys()
        norms = (1.0,) + tuple(SAFETY * a**k * _maximize_abs(polys[k], 0.0, 1.0) for k in range(1, NORM_ORDERS))
        return TestFunction(f"logistic:a={a:g},c={c:g}", _logistic(a, c), norms)
    if kind == "exp_decay":
        b = float(params.get("b", 0.5))
        if b <= 0:
            raise ValidationError("b must be positive")

        def derivative(k, x):
            return (-b) ** k * np.exp(-b * x)

        return TestFunction(f"exp_decay:b={b:g}", derivative, tuple(b**j for j in range(NORM_ORDERS)), "nonneg")
    if kind == "constant":
        c = float(params.get("c", 1.0))

        def derivative(k, x):
            return np.full(np.shape(x), c if k == 0 else 0.0)

        return TestFunction(f"constant:c={c:g}", derivative, (abs(c),) + (0.0,) * (NORM_ORDERS - 1))
    raise ValidationError(f"unknown test function kind {kind!r}")


def parse_test_function(text) -> TestFunction:
    """Parse a CLI description such as ``"sine:a=0.5"`` or ``"gauss_bump:c=4,s=1"``."""
    kind, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValidationError(f"bad parameter {item!r} in test function {text!r}")
        params[key.strip()] = float(value)
    return make_test_function(kind, **params)


def h_m(tf: TestFunction, m) -> float:
    """``sum_{j=1}^m S(m, j) ||h^(j)||``."""
    if m < 0:
        raise ValidationError("m must be non-negative")
    return math.fsum(stirling2(m, j) * tf.norm(j) for j in range(1, m + 1))


def h_tilde_m(tf: TestFunction, m) -> float:
    """``sum_{k=1}^m S(m, k) (2**m ||h^(k)|| + ||h^(k+1)||)``."""
    if m < 0:
        raise ValidationError("m must be non-negative")
    return math.fsum(stirling2(m, k) * (2**m * tf.norm(k) + tf.norm(k + 1)) for k in range(1, m + 1))


# --------------------------------------------------------------------------
# dominating functions


@dataclass(frozen=True)
class DominatingFunction:
    """``P(w) = A + sum_i B_i |w_i|**r_i``."""

    A: float
    B: tuple
    r: tuple

    def __post_init__(self):
        B = tuple(float(b) for b in self.B)
        r = tuple(float(e) for e in self.r)
        if self.A < 0 or any(b < 0 for b in B) or any(e < 0 for e in r):
            raise ValidationError("A, B_i and r_i must be non-negative")
        if len(B) != len(r):
            raise ValidationError("B and r must have the same length")
        object.__setattr__(self, "A", float(self.A))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "r", r)

    @classmethod
    def uniform(cls, A, B, r, d):
        return cls(A, (B,) * d, (r,) * d)

    @property
    def d(self):
        return len(self.B)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return self.A + np.sum(np.asarray(self.B) * np.abs(w) ** np.asarray(self.r), axis=-1)


def dominating_quadratic_g(mode, r) -> DominatingFunction:
    """Dominating function for ``g(w) = sum(w**2)``.

    ``order3``: ``4 + 16 sum w**4`` (valid in the classes of order 3 and 4);
    ``order6``: ``8 + 64 sum w**6``.
    """
    if r < 2:
        raise ValidationError("r must be at least 2")
    if mode == "order3":
        return DominatingFunction.uniform(4.0, 16.0, 4.0, r)
    if mode == "order6":
        return DominatingFunction.uniform(8.0, 64.0, 6.0, r)
    raise ValidationError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class DominationReport:
    max_excess: float
    worst_point: np.ndarray
    worst_order: int
    passed: bool


def _report(excess_by_order, grid):
    best = (-math.inf, None, 0)
    for k, ex in excess_by_order:
        i = int(np.argmax(ex))
        if ex[i] > best[0]:
            best = (float(ex[i]), grid[i], k)
    return DominationReport(best[0], best[1], best[2], best[0] <= 0.0)


def verify_domination(g_derivs, P: DominatingFunction, m, grid) -> DominationReport:
    """Sweep ``max_k |d^k g|**(m/k) - P(w)`` over a grid of points.

    ``g_derivs(k, W)`` receives an ``(N, d)`` array and returns an ``(N, ...)``
    array holding the k-th order partial derivatives at each point (entries
    that vanish identically may be omitted).
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    pw = P(grid)
    excess = []
    for k in range(1, m + 1):
        dk = np.asarray(g_derivs(k, grid), dtype=float).reshape(len(grid), -1)
        mag = np.abs(dk).max(axis=1, initial=0.0) ** (m / k)
        excess.append((k, mag - pw))
    return _report(excess, grid)


def verify_q_domination(a_derivs, b_derivs, Q: DominatingFunction, m, grid) -> DominationReport:
    """Sweep the three quantity families defining the class ``C_{Q,delta}^m``.

    ``b_derivs(0, W)`` must return ``b`` itself.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    qw = Q(grid)
    b0 = np.abs(np.asarray(b_derivs(0, grid), dtype=float).reshape(len(grid)))
    excess = []
    for k in range(1, m + 1):
        ak = np.abs(np.asarray(a_derivs(k, grid), dtype=float).reshape(len(grid), -1)).max(axis=1, initial=0.0)
        bk = np.abs(np.asarray(b_derivs(k, grid), dtype=float).reshape(len(grid), -1)).max(axis=1, initial=0.0)
        worst = np.maximum(np.maximum(ak ** (m / k), bk ** (m / k)), b0 * ak ** (m / k))
        excess.append((k, worst - qw))
    return _report(excess, grid)


def product_grid(lo, hi, num, d):
    """All points of a ``num**d`` tensor grid on ``[lo, hi]**d`` as an ``(N, d)`` array."""
    axes = [np.linspace(lo, hi, num)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def sum_squares_derivs(k, W):
    """Partial derivatives of ``sum(w**2)``: 2w (k=1), the diagonal 2's (k=2), none beyond."""
    W = np.asarray(W, dtype=float)
    if k == 0:
        return np.sum(W * W, axis=1)
    if k == 1:
        return 2.0 * W
    if k == 2:
        return np.full_like(W, 2.0)
    return np.zeros((len(W), 0))


# --------------------------------------------------------------------------
# dominating functions for the power divergence statistic


def _falling(x, k):
    out = 1.0
    for i in range(k):
        out *= x - i
    return out


def pd_b_derivs(lam, probs, n):
    """Pure partials of ``b(w) = sqrt(n) (T_lambda(w) - sum(w**2))``; ``k = 0`` gives ``b``.

    Mixed partials vanish, so the returned ``(N, d)`` array lists ``d^k b / dw_j^k``.
    """
    p = check_probs(probs)
    lam = float(lam)
    alpha = lam + 1.0
    e = n * p
    pref = 2.0 * math.sqrt(n) / (lam * alpha)
    integral = alpha.is_integer()

    def power(base, expo):
        if integral and float(expo).is_integer():
            return base**expo
        return np.where(base > 0, np.abs(base) ** expo, 0.0 if expo > 0 else np.inf)

    def derivs(k, W):
        x = np.asarray(W, dtype=float) / np.sqrt(e)
        base = 1.0 + x
        if k == 0:
            phi = power(base, alpha) - 1.0 - alpha * x - 0.5 * alpha * lam * x * x
        elif k == 1:
            phi = alpha * power(base, lam) - alpha - alpha * lam * x
        elif k == 2:
            phi = alpha * lam * (power(base, lam - 1.0) - 1.0)
        elif integral and k > alpha:
            phi = np.zeros_like(x)
        else:
            phi = _falling(alpha, k) * power(base, alpha - k)
        vals = pref * e ** (1.0 - k / 2.0) * phi
        return vals.sum(axis=1) if k == 0 else vals

    return derivs


def _b_envelope(lam, p, k):
    """Per-coordinate monomial envelope ``{exponent: coeffs over j}`` of ``|d^k b|``, valid for n >= 1."""
    env = {}

    def add(expo, coef):
        env[float(expo)] = env.get(float(expo), 0.0) + np.asarray(coef, dtype=float) * np.ones_like(p)

    alpha = lam + 1.0
    if float(lam).is_integer() and lam >= 1:
        # finite polynomial: b = sum_j sum_{kk=3}^{alpha} 2 c_kk n^{(3-kk)/2} p_j^{1-kk/2} w_j^kk
        for kk in range(max(3, k), int(alpha) + 1):
            c = _falling(lam - 1.0, kk - 2) / math.factorial(kk)
            if c:
                add(kk - k, 2.0 * abs(c) * p ** (1.0 - kk / 2.0) * math.factorial(kk) / math.factorial(kk - k))
        return env
    # lam >= 5: bounds from (1+x)^a - Taylor_j(x) <= 2^a (|x|^{j+1} + |x|^a), valid for x >= -1
    if k == 0:
        pre = 2.0 ** (lam + 2) / (lam * alpha)
        add(3, pre * p**-0.5)
        add(alpha, pre * p ** ((1.0 - lam) / 2))
    elif k == 1:
        pre = 2.0 ** (lam + 1) / lam
        add(2, pre * p**-0.5)
        add(lam, pre * p ** ((1.0 - lam) / 2))
    elif k == 2:
        pre = 2.0**lam
        add(1, pre * p**-0.5)
        add(lam - 1.0, pre * p ** ((1.0 - lam) / 2))
    else:
        beta = alpha - k
        pre = 2.0 ** (lam + 2 - k) * abs(_falling(lam - 1.0, k - 2))
        add(0, pre * p ** (1.0 - k / 2.0))
        add(beta, pre * p ** (1.0 - k / 2.0 - beta / 2.0))
    return env


def _a_envelope(k, d):
    # derivatives of sum(w**2)
    if k == 1:
        return {1.0: np.full(d, 2.0)}
    if k == 2:
        return {0.0: np.full(d, 2.0)}
    return {}


def _env_add(*envs):
    out = {}
    for env in envs:
        for e, c in env.items():
            out[e] = out.get(e, 0.0) + c
    return out


def _env_max(*envs):
    out = {}
    for env in envs:
        for e, c in env.items():
            out[e] = np.maximum(out.get(e, 0.0), c)
    return out


def _env_power(env, q):
    # (sum_i c_i |w|^{e_i})^q <= N^{q-1} sum_i c_i^q |w|^{q e_i}, coordinate-wise
    terms = [(e, c) for e, c in env.items() if np.any(c)]
    if not terms:
        return {}
    scale = len(terms) ** (q - 1.0)
    return {q * e: scale * c**q for e, c in terms}


def _env_times_coordinate(env, term_env):
    """Envelope of ``(sum_j sum_e c_je |w_j|^e) * (K_k |w_k|^f)``, uniformly in k.

    Cross terms use ``|u|^e |v|^f <= (e |u|^{e+f} + f |v|^{e+f}) / (e + f)``.
    """
    out = {}
    for f, kk in term_env.items():
        for e, c in env.items():
            tot = e + f
            if tot == 0:
                out[0.0] = out.get(0.0, 0.0) + np.full_like(c, c.sum()) * kk
                continue
            # j == k contribution plus cross terms, collected per coordinate
            same = c * kk
            cross_into_j = (e / tot) * c * np.max(kk)
            cross_into_k = (f / tot) * (c.sum() - c) * kk
            out[tot] = out.get(tot, 0.0) + same + cross_into_j + cross_into_k
    return out


def _collapse(env, d):
    """Reduce a monomial envelope to ``A + sum_j B_j |w_j|**R`` with a common ``R``."""
    exps = [e for e, c in env.items() if np.any(c)]
    if not exps:
        return DominatingFunction.uniform(0.0, 0.0, 0.0, d)
    R = max(exps)
    A = 0.0
    B = np.zeros(d)
    for e, c in env.items():
        if e == 0 or R == 0:
            A += float(np.sum(c))
        else:
            # |w|^e <= (1 - e/R) + (e/R) |w|^R
            A += float(np.sum(c)) * (1.0 - e / R)
            B += c * (e / R)
    return DominatingFunction(A, tuple(B), (R,) * d)


@dataclass(frozen=True)
class PdDomination:
    """Dominating functions for ``T_lambda = sum(w**2) + n**-0.5 b(w)``.

    ``P`` dominates the derivatives of ``T_lambda`` itself (order ``m``);
    ``Q`` dominates the quantities defining the perturbed-even class.
    """

    lam: float
    P: DominatingFunction
    Q: DominatingFunction
    m: int


def pd_admissible(lam) -> bool:
    lam = float(lam)
    return (lam.is_integer() and lam >= 1) or lam >= 5.0


def pd_dominating_functions(lam, probs, m=6) -> PdDomination:
    """Polynomial ``P`` and ``Q`` for ``T_lambda``, valid for all ``n >= 1`` on ``w_j >= -sqrt(n p_j)``.

    Only positive integer ``lam`` or ``lam >= 5`` admit such polynomials; other
    values raise :class:`PreconditionError`.
    """
    p = check_probs(probs)
    if not pd_admissible(lam):
        raise PreconditionError(
            f"lambda = {lam}: a polynomial dominating function exists only for positive integer lambda or lambda >= 5"
        )
    d = p.size
    lam = float(lam)
    b_env = {k: _b_envelope(lam, p, k) for k in range(m + 1)}
    a_env = {k: _a_envelope(k, d) for k in range(1, m + 1)}
    q_parts = []
    p_parts = []
    for k in range(1, m + 1):
        q = m / k
        ak_q = _env_power(a_env[k], q)
        q_parts.append(ak_q)
        q_parts.append(_env_power(b_env[k], q))
        q_parts.append(_env_times_coordinate(b_env[0], ak_q))
        p_parts.append(_env_power(_env_add(a_env[k], b_env[k]), q))
    return PdDomination(lam, _collapse(_env_max(*p_parts), d), _collapse(_env_max(*q_parts), d), m)
