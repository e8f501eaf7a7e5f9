"""Decoding-latency analytics for generation-based coding.

``M(g, x)`` is the number of coded packets a size-``g`` generation must
receive to yield ``x`` independent equations.  For disjoint generations the
overall latency ``W`` is a collector's brotherhood problem with random quotas
``M_i = M(g_i, g_i)``; its moments are integrals of

    a_i(x) = e^{-y} E[S_{M_i}(y)] = sum_j Pois(y; j) P[M_i > j],   y = rho_i x,

which are evaluated here as a finite sum: ``P[M_i > j] = 1`` below ``g_i``
and the rank tail above it decays like ``q^{-(j-g_i)}``, so it is cut once
it drops below double precision.  Both ``a_i`` and ``1 - a_i`` are formed as
sums of non-negative terms.

The random-annex estimate maps expected overlaps to per-generation quotas
and evaluates the uniform threshold collector :func:`collector.expected_U`.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .collector import (
    MomentResult,
    QuotaVector,
    ThresholdSpec,
    _second_moment_sum,
    expected_T,
    expected_U,
    log1m,
    poisson_at_least,
    poisson_below,
)
from .layout import omega
from .quad import DEFAULT, QuadConfig, integrate_halfline

_TAIL_CUTOFF = 1e-18


@dataclass(frozen=True)
class LatencyEstimate:
    mean: float
    lower_bound: float
    upper_bound: float | None = None
    variance: float | None = None
    second_moment: float | None = None
    channel_eps: float = 0.0

    @property
    def std(self) -> float | None:
        return None if self.variance is None else math.sqrt(max(self.variance, 0.0))


@dataclass(frozen=True)
class AnnexPlan:
    quotas_raw: tuple[int, ...]
    collapsed: ThresholdSpec
    omegas: tuple[float, ...]
    estimate: float


# ---------------------------------------------------------------------------
# single generation


def _check_field(q):
    if q < 2:
        raise ValueError(f"field size must be >= 2, got {q}")


def expected_M(g: int, x: int, q: int) -> float:
    """E[M(g, x)] = sum_{j<x} 1 / (1 - q^{j-g})."""
    _check_field(q)
    if not 0 <= x <= g:
        raise ValueError(f"need 0 <= x <= g, got x={x}, g={g}")
    j = np.arange(x)
    return float(np.sum(1.0 / -np.expm1((j - g) * math.log(q))))


def eta(g: int, x: float, q: int) -> float:
    """Smooth estimate of E[M(g, x)], defined for real ``x`` in [0, g]."""
    _check_field(q)
    if not 0 <= x <= g:
        raise ValueError(f"need 0 <= x <= g, got x={x}, g={g}")
    lq = math.log(q)
    u = q ** (x - 1 - g)
    return x + u / (1.0 - u) + (math.log1p(-(q ** -g)) - math.log1p(-u)) / lq


def alpha(q: int, g: int) -> float:
    """alpha_{q,g} = -sum_{k<g} ln(1 - q^{k-g}) = -ln P[M(g,g) = g]."""
    _check_field(q)
    if g < 1:
        raise ValueError("need g >= 1")
    k = np.arange(g)
    return float(-np.sum(np.log1p(-np.exp((k - g) * math.log(q)))))


def _log_success(g, s, q):
    """ln P[rank of s uniform g-vectors = g] for an array of s >= g."""
    s = np.asarray(s, dtype=float)
    k = np.arange(g)
    return np.log1p(-np.exp((k[None, :] - s[:, None]) * math.log(q))).sum(axis=1)


def rank_tail_exact(g: int, s: int, q: int) -> float:
    """P[M(g, g) > s] = 1 - prod_{k<g} (1 - q^{k-s}); equals 1 when s < g."""
    _check_field(q)
    if g < 1:
        raise ValueError("need g >= 1")
    if s < g:
        return 1.0
    return float(-np.expm1(_log_success(g, [s], q))[0])


def _tail_terms(g, q):
    """P[M > j] and P[M <= j] for j = g .. g+J-1, with the tail beyond J below cutoff."""
    a = alpha(q, g)
    J = max(1, math.ceil(math.log(a / _TAIL_CUTOFF) / math.log(q)) + 1)
    js = g + np.arange(J)
    ls = _log_success(g, js, q)
    return js, -np.expm1(ls), np.exp(ls)


def _poisson_pmf(y, js):
    with np.errstate(divide="ignore", invalid="ignore"):
        ly = np.log(y)[:, None]
        lp = np.where(js[None, :] == 0, 0.0, js[None, :] * ly) - y[:, None] - gammaln(js + 1)[None, :]
    return np.exp(lp)


class _RandomQuota:
    """Pre-computed tail of M(g, g) over GF(q) for evaluating a_i, b_i."""

    def __init__(self, g, q):
        self.g = g
        self.js, self.tail, self.succ = _tail_terms(g, q)
        self.J = len(self.js)

    def a(self, y, shift=0):
        """(e^{-y} E[S_{M-shift}(y)], 1 - same) for shift in {0, 1}."""
        g = self.g - shift
        pm = _poisson_pmf(y, self.js - shift)
        a = poisson_below(g, y) + pm @ self.tail
        one_minus = poisson_at_least(g + self.J, y) + pm @ self.succ
        return np.clip(a, 0.0, 1.0), np.clip(one_minus, 0.0, 1.0)


def _groups(rho, sizes):
    rho = tuple(float(r) for r in rho)
    sizes = tuple(int(g) for g in sizes)
    if len(rho) != len(sizes) or not rho:
        raise ValueError("rho and g_sizes must be non-empty and of equal length")
    if any(r <= 0 for r in rho):
        raise ValueError("every generation needs a positive scheduling probability")
    if abs(sum(rho) - 1.0) > 1e-9:
        raise ValueError("rho must sum to 1")
    if any(g < 1 for g in sizes):
        raise ValueError("generation sizes must be >= 1")
    return sorted(Counter(zip(rho, sizes)).items())


def _w_mean_integrand(groups, q):
    quotas = [(r, c, _RandomQuota(g, q)) for (r, g), c in groups]

    def f(x):
        x = np.asarray(x, dtype=float)
        s = np.zeros_like(x)
        for r, c, rq in quotas:
            a, one_minus = rq.a(r * x)
            s += c * log1m(a, one_minus)
        return -np.expm1(s)

    return f


def _w_upper_integrand(groups, q):
    parts = []
    for (r, g), c in groups:
        parts.append((r, g, c, math.log(alpha(q, g)) + g * math.log(q)))

    def f(x):
        x = np.asarray(x, dtype=float)
        s = np.zeros_like(x)
        for r, g, c, lc in parts:
            y = r * x
            with np.errstate(divide="ignore"):
                extra = np.exp(lc - y * (1.0 - 1.0 / q) + np.log(poisson_at_least(g, y / q)))
            a = np.minimum(poisson_below(g, y) + extra, 1.0)
            one_minus = np.maximum(poisson_at_least(g, y) - extra, 0.0)
            s += c * log1m(a, one_minus)
        return -np.expm1(s)

    return f


def expected_W(rho: Sequence[float], g_sizes: Sequence[int], q: int, cfg: QuadConfig = DEFAULT) -> LatencyEstimate:
    """Mean latency for disjoint generations, with the finite-field upper bound
    and the infinite-field (collector) lower bound."""
    _check_field(q)
    groups = _groups(rho, g_sizes)
    mean = integrate_halfline(_w_mean_integrand(groups, q), cfg)
    upper = integrate_halfline(_w_upper_integrand(groups, q), cfg)
    lower = expected_T(QuotaVector(rho, g_sizes), cfg)
    return LatencyEstimate(mean=mean, lower_bound=lower, upper_bound=upper)


def second_moment_W(rho: Sequence[float], g_sizes: Sequence[int], q: int, cfg: QuadConfig = DEFAULT) -> MomentResult:
    """E[W^2] = 2 int x (1 - sum_i rho_i (1 - b_i) prod_{j != i} (1 - a_j)) dx + E[W]."""
    _check_field(q)
    groups = _groups(rho, g_sizes)
    mean = integrate_halfline(_w_mean_integrand(groups, q), cfg)
    quotas = [(r, c, _RandomQuota(g, q)) for (r, g), c in groups]

    def f(x):
        x = np.asarray(x, dtype=float)
        logs = []
        for r, c, rq in quotas:
            y = r * x
            logs.append((r, c, log1m(*rq.a(y, 0)), log1m(*rq.a(y, 1))))
        return x * _second_moment_sum(logs, rho_free=0.0)

    second = 2.0 * integrate_halfline(f, cfg) + mean
    return MomentResult(mean, second - mean * mean, second)


def latency_estimate(rho, g_sizes, q, cfg: QuadConfig = DEFAULT) -> LatencyEstimate:
    """:func:`expected_W` together with the second moment and variance."""
    est = expected_W(rho, g_sizes, q, cfg)
    mom = second_moment_W(rho, g_sizes, q, cfg)
    return replace(est, variance=mom.variance, second_moment=mom.second_moment)


def bec_scale(est: LatencyEstimate, eps: float, variance_form: str = "compound") -> LatencyEstimate:
    """Latency over an erasure channel: every useful packet costs Geometric(1-eps) sends.

    The mean scales by 1/(1-eps).  For the variance, ``"compound"`` uses the
    exact law of a geometric sum, (Var[W] + eps E[W]) / (1-eps)^2.
    ``"second_moment"`` gives (Var[W] + eps E[W^2]) / (1-eps)^2 for
    comparison; it overstates the variance seen in simulation.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1), got {eps}")
    if variance_form not in ("compound", "second_moment"):
        raise ValueError("variance_form must be 'compound' or 'second_moment'")
    if est.channel_eps != 0.0:
        raise ValueError("estimate is already scaled for a lossy channel")
    k = 1.0 / (1.0 - eps)
    variance = second = None
    if est.variance is not None:
        if variance_form == "compound":
            variance = (est.variance + eps * est.mean) * k * k
        else:
            if est.second_moment is None:
                raise ValueError("this variance form needs the second moment")
            variance = (est.variance + eps * est.second_moment) * k * k
        second = variance + (est.mean * k) ** 2
    up = None if est.upper_bound is None else est.upper_bound * k
    return LatencyEstimate(est.mean * k, est.lower_bound * k, up, variance, second, eps)


# ---------------------------------------------------------------------------
# failure probability (limit law, asymptotic)


def failure_prob_lower(n: int, g: int, t: float) -> float:
    """Asymptotic lower bound on P[decoding fails after t received packets].

    1 - exp(-n (log n)^{g-1} e^{-t/n} / (g-1)!).  The O(log log n / log n)
    correction is dropped, so this is only a limit-law value.
    """
    if n < 3 or g < 1:
        raise ValueError("need n >= 3 and g >= 1")
    ln = math.log(n)
    z = ln + (g - 1) * math.log(ln) - math.lgamma(g) - t / n
    return float(-math.expm1(-math.exp(z)))


def packets_for_failure(n: int, g: int, delta: float, cfg: QuadConfig = DEFAULT) -> float:
    """Packets needed for failure probability below ``delta``:
    E[T_n(g)] - n ln ln(1/(1-delta))."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    et = expected_T(QuotaVector.uniform(n, g), cfg)
    return et - n * math.log(-math.log1p(-delta))


def packets_for_failure_power(n: int, g: int, c: float, cfg: QuadConfig = DEFAULT) -> float:
    """Variant for delta = N^{-c} with N = n g: E[T_n(g)] + c n ln(n g)."""
    if c <= 0:
        raise ValueError("c must be positive")
    return expected_T(QuotaVector.uniform(n, g), cfg) + c * n * math.log(n * g)


# ---------------------------------------------------------------------------
# random annex


_ROUNDING = {"ceil": math.ceil, "nearest": lambda v: math.floor(v + 0.5)}


def annex_quotas(N: int, h: int, l: int, q: int, rounding: str = "ceil") -> tuple[tuple[int, ...], tuple[float, ...]]:
    """m'_s = ceil(eta_g(g - Omega(s-1))) for s = 1..n, and the Omega values used.

    ``rounding="nearest"`` is offered for comparison only.
    """
    if rounding not in _ROUNDING:
        raise ValueError(f"rounding must be one of {sorted(_ROUNDING)}")
    rnd = _ROUNDING[rounding]
    n = -(-N // h)
    g = h + l
    omegas = tuple(omega(s, N, h, l) for s in range(n))
    raw = tuple(int(rnd(eta(g, max(g - w, 0.0), q))) for w in omegas)
    return raw, omegas


def collapse_quotas(raw: Sequence[int]) -> ThresholdSpec:
    """Runs of equal non-increasing quotas -> (m_j, k_j) with cumulative k_j.

    Zero quotas impose nothing and are dropped.
    """
    if any(b > a for a, b in zip(raw, raw[1:])):
        raise ValueError("quotas must be non-increasing")
    ms, ks = [], []
    for s, v in enumerate(raw, start=1):
        if v <= 0:
            break
        if ms and ms[-1] == v:
            ks[-1] = s
        else:
            ms.append(v)
            ks.append(s)
    return ThresholdSpec(len(raw), ms, ks)


def annex_expected_latency(
    N: int, h: int, l: int, q: int, cfg: QuadConfig = DEFAULT, rounding: str = "ceil"
) -> AnnexPlan:
    """Heuristic mean latency of the random annex code (uniform scheduling)."""
    if h < 1 or l < 0 or h > N:
        raise ValueError("need 1 <= h <= N and l >= 0")
    raw, omegas = annex_quotas(N, h, l, q, rounding)
    spec = collapse_quotas(raw)
    return AnnexPlan(raw, spec, omegas, expected_U(spec, cfg))
