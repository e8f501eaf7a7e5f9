"""Half-line quadrature and series summation.

All integrands handled here are smooth on [0, inf) and decay at least
exponentially.  Callables must accept and return numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss


class ConvergenceError(ArithmeticError):
    """Quadrature or series did not reach tolerance.  ``estimates`` holds the last two values."""

    def __init__(self, msg, estimates=()):
        super().__init__(msg)
        self.estimates = tuple(estimates)


@dataclass(frozen=True)
class QuadConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_refinements: int = 12

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.abs_tol < 0:
            raise ValueError("abs_tol must be non-negative")
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be >= 1")

    def tol(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


DEFAULT = QuadConfig()

_LAGUERRE_MAX_NODES = 128  # node weights * e^x overflow past ~170 nodes
_PANEL_NODES = 16


@lru_cache(maxsize=None)
def _laguerre(n):
    x, w = laggauss(n)
    return x, w * np.exp(x)


@lru_cache(maxsize=None)
def _legendre(n):
    return leggauss(n)


def _panel_rule(f, a, b, n):
    """Gauss-Legendre with ``n`` nodes on each panel [a_i, b_i] (vectorised)."""
    t, w = _legendre(n)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * t[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    return (fx * w[None, :]).sum(axis=1) * half


def _locate_support(f, cfg):
    """Return (X_cut, decay_rate, rough_integral) from a dyadic scan."""
    xs = np.ldexp(1.0, np.arange(-6, 64))
    fx = np.abs(np.asarray(f(xs), dtype=float))
    if not np.all(np.isfinite(fx)):
        raise ConvergenceError("integrand is not finite on the scan grid")
    if fx[-1] * xs[-1] > 1e-12 * float(np.max(fx * xs)):
        raise ConvergenceError("integrand does not decay on [0, 2^63]")
    # trapezoid on the dyadic grid is good enough to set the stopping threshold
    rough = float(np.sum(0.5 * (fx[1:] + fx[:-1]) * np.diff(xs))) + fx[0] * xs[0]
    target = 1e-3 * cfg.tol(rough)
    peak = int(np.argmax(fx))
    for i in range(max(peak, 1), len(xs) - 1):
        if fx[i] * xs[i] < target and fx[i + 1] <= fx[i]:
            x_cut = xs[i]
            f_half = float(np.abs(f(np.array([0.5 * x_cut])))[0])
            if fx[i] > 0 and f_half > fx[i]:
                rate = math.log(f_half / fx[i]) / (0.5 * x_cut)
            else:
                rate = math.inf
            return x_cut, rate, rough
    raise ConvergenceError("integrand does not decay on [0, 2^63]")


def _gauss_laguerre(f, cfg, scale):
    prev = None
    n = 8
    while n <= _LAGUERRE_MAX_NODES:
        x, w = _laguerre(n)
        est = scale * float(np.dot(w, f(scale * x)))
        if prev is not None and abs(est - prev) <= cfg.tol(est):
            return est
        prev = est
        n *= 2
    return None


def _adaptive_panels(f, x_cut, cfg):
    edges = np.linspace(0.0, x_cut, 9)
    a, b = edges[:-1], edges[1:]
    done = 0.0
    done_err = 0.0
    last = (math.nan, math.nan)
    for _ in range(cfg.max_refinements):
        hi = _panel_rule(f, a, b, _PANEL_NODES)
        lo = _panel_rule(f, a, b, _PANEL_NODES // 2)
        err = np.abs(hi - lo)
        total = done + float(hi.sum())
        last = (last[1], total)
        tol = cfg.tol(total)
        if done_err + err.sum() <= tol:
            return total
        # accept panels that are locally converged, split the rest
        share = tol * (b - a) / x_cut
        ok = err <= 0.5 * share
        done += float(hi[ok].sum())
        done_err += float(err[ok].sum())
        a, b = a[~ok], b[~ok]
        mid = 0.5 * (a + b)
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        order = np.argsort(a)
        a, b = a[order], b[order]
    raise ConvergenceError(
        f"adaptive quadrature did not converge in {cfg.max_refinements} refinements", last
    )


def integrate_halfline(f: Callable[[np.ndarray], np.ndarray], cfg: QuadConfig = DEFAULT) -> float:
    """Integral of ``f`` over [0, inf).

    Scaled Gauss-Laguerre is tried first with node doubling; integrands with a
    plateau followed by a sharp drop (the collector integrands) fall through
    to adaptive Gauss-Legendre panels on [0, X_cut] plus an exponential tail
    estimate.
    """
    x_cut, rate, _ = _locate_support(f, cfg)
    if math.isfinite(rate) and rate > 0:
        gl = _gauss_laguerre(f, cfg, 1.0 / rate)
        if gl is not None and _agrees_with_panels(f, gl, x_cut, cfg):
            return gl
    tail = 0.0
    if math.isfinite(rate) and rate > 0:
        tail = float(abs(f(np.array([x_cut]))[0])) / rate
    return _adaptive_panels(f, x_cut, cfg) + tail


def _agrees_with_panels(f, est, x_cut, cfg):
    # cheap guard against Laguerre "converging" to a wrong value on
    # plateau-shaped integrands: one coarse panel pass must agree
    edges = np.linspace(0.0, x_cut, 33)
    coarse = float(_panel_rule(f, edges[:-1], edges[1:], _PANEL_NODES).sum())
    return abs(coarse - est) <= max(1e3 * cfg.tol(est), 1e-6 * abs(est))


def sum_series(
    term: Callable[[int], float | np.ndarray],
    cfg: QuadConfig = DEFAULT,
    start: int = 0,
    window: int = 3,
    max_terms: int = 100_000,
):
    """Sum ``term(start) + term(start+1) + ...``.

    Stops once ``window`` consecutive terms are each below
    ``max(abs_tol, rel_tol*|partial|)``.  Array-valued terms are summed
    elementwise and the test must hold for every element.
    """
    partial = None
    prev = None
    small_run = 0
    for j in range(start, start + max_terms):
        t = term(j)
        prev = partial
        partial = t if partial is None else partial + t
        mag = np.abs(t)
        if np.all(mag <= np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(partial))):
            small_run += 1
            if small_run >= window:
                return partial
        else:
            small_run = 0
    raise ConvergenceError(f"series did not converge within {max_terms} terms", (prev, partial))
