"""Generalised coupon collector's brotherhood.

Two sampling problems are covered:

* ``T(rho, m)``: draws until coupon ``i`` has at least ``m[i]`` copies for
  every ``i``, coupons sampled with probabilities ``rho``;
* ``U(m, k)``: uniform sampling over ``n`` coupons, draws until, for every
  threshold ``j``, at least ``k[j]`` coupons hold ``m[j]`` copies or more.

Moments come from Poissonised integral representations evaluated with
:func:`gencode.quad.integrate_halfline`.  ``mc_collect`` is an independent
Monte-Carlo check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln

from .quad import DEFAULT, QuadConfig, integrate_halfline

EULER_GAMMA = 0.5772156649015329


class InfeasibleSpec(ValueError):
    """A coupon with zero sampling probability must be collected."""


@dataclass(frozen=True)
class QuotaVector:
    rho: tuple[float, ...]
    m: tuple[int, ...]

    def __init__(self, rho: Sequence[float], m: Sequence[int]):
        rho = tuple(float(r) for r in rho)
        m = tuple(int(v) for v in m)
        if len(rho) != len(m) or not rho:
            raise ValueError("rho and m must be non-empty and of equal length")
        if any(r < 0 for r in rho) or abs(sum(rho) - 1.0) > 1e-12:
            raise ValueError("rho must be a probability vector")
        if any(v < 0 for v in m):
            raise ValueError("quotas must be non-negative")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "m", m)

    @classmethod
    def uniform(cls, n: int, m: int) -> "QuotaVector":
        return cls([1.0 / n] * n, [m] * n)

    @property
    def n(self) -> int:
        return len(self.m)

    def check_feasible(self):
        if not any(self.m):
            raise ValueError("at least one quota must be positive")
        for r, v in zip(self.rho, self.m):
            if r == 0 and v > 0:
                raise InfeasibleSpec("coupon with rho=0 has a positive quota; expectation is infinite")

    def groups(self):
        """Distinct (rho, m) pairs with multiplicities; coupons with m=0 drop out."""
        out: dict[tuple[float, int], int] = {}
        for r, v in zip(self.rho, self.m):
            if v > 0:
                out[(r, v)] = out.get((r, v), 0) + 1
        return [(r, v, c) for (r, v), c in out.items()]


@dataclass(frozen=True)
class ThresholdSpec:
    n: int
    m: tuple[int, ...]
    k: tuple[int, ...]

    def __init__(self, n: int, m: Sequence[int], k: Sequence[int]):
        m = tuple(int(v) for v in m)
        k = tuple(int(v) for v in k)
        if not m or len(m) != len(k):
            raise ValueError("m and k must be non-empty and of equal length")
        if any(a <= b for a, b in zip(m, m[1:])) or m[-1] < 1:
            raise ValueError("m must be strictly decreasing positive integers (collapse equal runs first)")
        if any(a >= b for a, b in zip(k, k[1:])) or k[0] < 1 or k[-1] > n:
            raise ValueError("k must be strictly increasing within [1, n]")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "k", k)

    @property
    def A(self) -> int:
        return len(self.m)


@dataclass(frozen=True)
class MomentResult:
    mean: float
    variance: float
    second_moment: float

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))


def s_poly(m, x: float) -> float:
    """Truncated exponential series ``sum_{j<m} x^j/j!``; ``m`` may be ``math.inf``."""
    if m == math.inf:
        return math.exp(x)
    if m <= 0:
        return 0.0
    term, total = 1.0, 1.0
    for j in range(1, int(m)):
        term *= x / j
        total += term
    return total


# Poisson(x) tails in regularised-gamma form:
#   S_m(x) e^{-x} = Q(m, x) = P[Pois(x) < m],   1 - S_m(x) e^{-x} = P(m, x).
def poisson_below(m, x):
    """``S_m(x) e^{-x}``, vectorised in ``x``."""
    x = np.asarray(x, dtype=float)
    if m <= 0:
        return np.zeros_like(x)
    return gammaincc(m, x)


def poisson_at_least(m, x):
    """``1 - S_m(x) e^{-x}``, computed without cancellation."""
    x = np.asarray(x, dtype=float)
    if m <= 0:
        return np.ones_like(x)
    return gammainc(m, x)


def log1m(below, at_least):
    """``log(1 - a)`` given both ``a`` and ``1 - a`` from independent evaluations."""
    with np.errstate(divide="ignore"):
        return np.where(below < 0.5, np.log1p(-np.minimum(below, 0.5)), np.log(at_least))


def _t_integrand(groups):
    def f(x):
        x = np.asarray(x, dtype=float)
        s = np.zeros_like(x)
        for r, v, c in groups:
            s += c * log1m(poisson_below(v, r * x), poisson_at_least(v, r * x))
        return -np.expm1(s)

    return f


def expected_T(spec: QuotaVector, cfg: QuadConfig = DEFAULT) -> float:
    """E[T(rho, m)] = int_0^inf 1 - prod_i (1 - S_{m_i}(rho_i x) e^{-rho_i x}) dx."""
    spec.check_feasible()
    groups = spec.groups()
    if _is_single_draw(groups):
        return 1.0
    return integrate_halfline(_t_integrand(groups), cfg)


def _is_single_draw(groups):
    # T = 1 identically; the integrand is then e^{-x}, which integrates fine,
    # but this keeps the trivial case exact
    return len(groups) == 1 and groups[0][0] == 1.0 and groups[0][1] == 1 and groups[0][2] == 1


def variance_T(spec: QuotaVector, cfg: QuadConfig = DEFAULT) -> MomentResult:
    """Mean, variance and second moment of ``T(rho, m)``.

    E[T^2] = 2 phi'(1) + phi(1) with
    phi'(1) = int x (1 - sum_i rho_i (1 - b_i) prod_{j != i} (1 - a_j)) dx,
    a_i = S_{m_i}(rho_i x) e^{-rho_i x},  b_i = S_{m_i - 1}(rho_i x) e^{-rho_i x}.
    Writing the ratio in the textbook form as a product over j != i avoids the
    0/0 at x -> 0.
    """
    spec.check_feasible()
    mean = expected_T(spec, cfg)
    groups = spec.groups()
    if _is_single_draw(groups):
        return MomentResult(1.0, 0.0, 1.0)
    # coupons with m_i = 0 have a_i = b_i = 0 and only contribute their rho
    rho_free = 1.0 - sum(r * c for r, _, c in groups)

    def f(x):
        x = np.asarray(x, dtype=float)
        logs = []
        for r, v, c in groups:
            la = log1m(poisson_below(v, r * x), poisson_at_least(v, r * x))
            lb = log1m(poisson_below(v - 1, r * x), poisson_at_least(v - 1, r * x))
            logs.append((r, c, la, lb))
        return x * _second_moment_sum(logs, rho_free)

    phi_prime = integrate_halfline(f, cfg)
    second = 2.0 * phi_prime + mean
    return MomentResult(mean, second - mean * mean, second)


def _second_moment_sum(logs, rho_free):
    """1 - sum_i rho_i (1 - b_i) prod_{j != i} (1 - a_j) over coupon groups.

    ``logs`` holds (rho, count, log(1-a), log(1-b)) per group.  The product
    over j != i is summed directly, since log(1-a_i) may be -inf.
    """
    def weighted(skip):
        out = 0.0
        for idx, (_, c, la, _) in enumerate(logs):
            k = c - (idx == skip)
            if k:
                out = out + k * la
        return out

    acc = rho_free * -np.expm1(weighted(-1))
    for idx, (r, c, _, lb) in enumerate(logs):
        acc = acc + r * c * -np.expm1(weighted(idx) + lb)
    return acc


def _threshold_d(spec: ThresholdSpec, x):
    """d_j(x) = (S_{m_j}(x) - S_{m_{j+1}}(x)) e^{-x} for j = 0..A, with m_0 = inf, m_{A+1} = 0."""
    m = spec.m
    A = spec.A
    d = np.empty((A + 1,) + x.shape)
    d[0] = poisson_at_least(m[0], x)
    d[A] = poisson_below(m[A - 1], x)
    if A > 1:
        # interior bands from explicit Poisson pmf sums (no Q-Q cancellation)
        i = np.arange(m[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            logx = np.log(x)[..., None]
            logp = np.where(i == 0, 0.0, i * logx) - x[..., None] - gammaln(i + 1)
        pmf = np.exp(logp)
        for j in range(1, A):
            d[j] = pmf[..., m[j] : m[j - 1]].sum(axis=-1)
    return np.clip(d, 0.0, 1.0)


def _log_binom_table(n):
    k = np.arange(n + 1)
    lg = gammaln(k + 1)
    kk, ww = np.meshgrid(k, k, indexing="ij")
    with np.errstate(invalid="ignore"):
        lc = np.where(ww <= kk, lg[kk] - lg[ww] - lg[np.maximum(kk - ww, 0)], -np.inf)
    return lc


def phi_threshold(spec: ThresholdSpec, x, chunk: int = 256):
    """``phi_{A,n}(x)`` from the level-by-level recursion, vectorised over ``x``.

    Level ``j`` folds in the coupons whose count lies in ``[m_{j+1}, m_j)``:
    phi_{j,k} = sum_{w=k_j}^{k} C(k,w) d_j^{k-w} phi_{j-1,w}.  Binomials and
    powers are combined in log space.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    n, A = spec.n, spec.A
    ks = list(spec.k) + [n]
    lc = _log_binom_table(n)
    kidx = np.arange(n + 1)
    diff = np.maximum(kidx[:, None] - kidx[None, :], 0)  # entries with w > k are -inf in lc
    for start in range(0, x.size, chunk):
        xs = x[start : start + chunk]
        d = _threshold_d(spec, xs)
        with np.errstate(divide="ignore"):
            logd = np.log(d)
        phi = np.where(kidx[None, :] >= ks[0], d[0][:, None] ** kidx[None, :], 0.0)
        for j in range(1, A + 1):
            kj, knext = ks[j - 1], ks[j]
            with np.errstate(invalid="ignore"):
                expo = np.where(diff[None] == 0, 0.0, diff[None] * logd[j][:, None, None])
            kern = np.exp(lc[None] + expo)  # 0^0 = 1 on the diagonal
            kern[:, :, :kj] = 0.0
            kern[:, :knext, :] = 0.0
            phi = np.einsum("xkw,xw->xk", kern, phi)
        out[start : start + chunk] = phi[:, n]
    return np.clip(out, 0.0, 1.0)


def expected_U(spec: ThresholdSpec, cfg: QuadConfig = DEFAULT) -> float:
    """E[U(m, k)] = n int_0^inf (1 - phi_{A,n}(x)) dx."""
    n = spec.n
    return n * integrate_halfline(lambda x: 1.0 - phi_threshold(spec, x), cfg)


def asymptotic_T(n: int, m: int, large_m: bool = False) -> float:
    """Leading terms n log n + (m-1) n log log n + (gamma - log (m-1)!) n.

    With ``large_m`` the m >> 1 regime estimate ``n*m`` is returned instead.
    The o(n) remainder is not modelled.
    """
    if large_m:
        return float(n * m)
    if n < 3:
        raise ValueError("asymptotic_T needs n >= 3 so that log log n is defined")
    if m < 1:
        raise ValueError("m must be >= 1")
    return n * math.log(n) + (m - 1) * n * math.log(math.log(n)) + (EULER_GAMMA - math.lgamma(m)) * n


def limit_law_cdf(y: float, m: int) -> float:
    """Limit CDF of (T_n(m) - n log n - (m-1) n log log n)/n."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.exp(-math.exp(-y - math.lgamma(m)))


@dataclass(frozen=True)
class SampleStats:
    mean: float
    variance: float
    half_width: float  # 99% normal-approximation confidence half-width of the mean
    trials: int

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return abs(self.mean - value) <= self.half_width + slack


Z99 = 2.5758293035489004
_CHUNK = 65536


def _draws_until(spec, rng, size):
    """Vectorised draw counts for ``size`` independent collectors."""
    if isinstance(spec, ThresholdSpec):
        n = spec.n
        p = np.full(n, 1.0 / n)
        need = None
    else:
        spec.check_feasible()
        n = spec.n
        p = np.asarray(spec.rho)
        need = np.asarray(spec.m)
    counts = np.zeros((size, n), dtype=np.int64)
    result = np.zeros(size, dtype=np.int64)
    active = np.arange(size)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    t = 0
    while active.size:
        t += 1
        pick = np.searchsorted(cdf, rng.random(active.size), side="right")
        counts[active, pick] += 1
        c = counts[active]
        if need is not None:
            done = np.all(c >= need, axis=1)
        else:
            done = np.ones(active.size, dtype=bool)
            for mj, kj in zip(spec.m, spec.k):
                done &= (c >= mj).sum(axis=1) >= kj
        result[active[done]] = t
        active = active[~done]
    return result


def mc_collect(spec, trials: int, seed: int) -> SampleStats:
    """Monte-Carlo draw counts for a QuotaVector or ThresholdSpec.

    Trials are split in fixed-size chunks, chunk ``c`` drawing from the stream
    seeded by ``(seed, c)``, so the result does not depend on how chunks are
    scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    samples = []
    for c, start in enumerate(range(0, trials, _CHUNK)):
        rng = np.random.default_rng([seed, c])
        samples.append(_draws_until(spec, rng, min(_CHUNK, trials - start)))
    x = np.concatenate(samples).astype(float)
    var = float(x.var(ddof=1)) if trials > 1 else 0.0
    return SampleStats(float(x.mean()), var, Z99 * math.sqrt(var / trials), trials)
