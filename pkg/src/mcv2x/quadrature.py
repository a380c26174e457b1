"""Adaptive Gauss-Kronrod quadrature and distance-sampling expectations.

The integrators are batched: ``f`` receives a 1-D array of abscissae and may
return either an array of the same length (one integrand) or an array of
shape ``(batch, len(x))`` (several integrands sharing one subdivision).  The
tolerance contract ``error <= max(rel_tol*|value|, abs_tol)`` is enforced for
every batch member.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sampling import DISTANCES, OrderedDistances, sample_ordered_distances, stream

# 15-point Kronrod nodes on [-1, 1]; the odd-indexed ones are the 7-point Gauss nodes
_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
_GAUSS = np.zeros(15)
_GAUSS[[1, 3, 5]] = _WG[:3]
_GAUSS[7] = _WG[3]
_GAUSS[[13, 11, 9]] = _WG[:3]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureResult:
    value: float | np.ndarray
    error_bound: float | np.ndarray
    evaluations: int


@dataclass(frozen=True)
class MetricEstimate:
    value: float | np.ndarray
    std_error_or_bound: float | np.ndarray
    method: str  # "quadrature", "distance-sampling" or "full-simulation"
    samples: int
    seed: int | None = None


class ConvergenceError(RuntimeError):
    """Quadrature budget exhausted; ``partial`` holds the best estimate so far."""

    def __init__(self, message: str, partial: QuadratureResult):
        super().__init__(message)
        self.partial = partial


class EvaluationError(ValueError):
    """A functional produced a non-finite value."""


def _gk15(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = (c[:, None] + h[:, None] * _NODES[None, :]).ravel()
    y = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(y)):
        raise EvaluationError("integrand returned a non-finite value")
    y = y.reshape(y.shape[:-1] + (a.size, 15))
    kron = h * (y @ _KRONROD)
    gauss = h * (y @ _GAUSS)
    resabs = h * (np.abs(y) @ _KRONROD)
    err = np.maximum(np.abs(kron - gauss), 50.0 * _EPS * resabs)
    return np.atleast_2d(kron), np.atleast_2d(err), y.ndim == 2


def integrate_finite(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                     rel_tol: float = 1e-6, abs_tol: float = 1e-10,
                     max_intervals: int = 4000, initial_intervals: int = 1) -> QuadratureResult:
    """Globally adaptive G7-K15 quadrature of ``f`` over [a, b]."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a!r}, b={b!r}")
    edges = np.linspace(a, b, initial_intervals + 1)
    lo, hi = edges[:-1], edges[1:]
    vals, errs, scalar = _gk15(f, lo, hi)
    evaluations = 15 * lo.size
    span = b - a

    def result(v, e):
        if scalar:
            return QuadratureResult(float(v[0]), float(e[0]), evaluations)
        return QuadratureResult(v, e, evaluations)

    while True:
        total = vals.sum(axis=1)
        err = errs.sum(axis=1)
        tol = np.maximum(rel_tol * np.abs(total), abs_tol)
        bad = err > tol
        if not bad.any():
            return result(total, err)
        if lo.size >= max_intervals:
            raise ConvergenceError(
                f"no convergence with {lo.size} subintervals "
                f"(error {err.max():.3g} > tolerance)", result(total, err))
        # split every interval whose error exceeds its proportional share
        score = (errs[bad] / tol[bad, None]).max(axis=0)
        share = (hi - lo) / span
        split = score > share
        split[np.argmax(score - share)] = True
        idx = np.flatnonzero(split)
        room = max_intervals - lo.size
        if idx.size > room:
            idx = idx[np.argsort(score[idx])[::-1][:room]]
            idx.sort()
        mid = 0.5 * (lo[idx] + hi[idx])
        new_lo = np.concatenate([lo[idx], mid])
        new_hi = np.concatenate([mid, hi[idx]])
        nv, ne, _ = _gk15(f, new_lo, new_hi)
        evaluations += 15 * new_lo.size
        keep = np.ones(lo.size, dtype=bool)
        keep[idx] = False
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        vals = np.concatenate([vals[:, keep], nv], axis=1)
        errs = np.concatenate([errs[:, keep], ne], axis=1)


def integrate_semi_infinite(f: Callable[[np.ndarray], np.ndarray], lower: float,
                            rel_tol: float = 1e-6, abs_tol: float = 1e-10,
                            scale: float = 1.0, max_intervals: int = 4000) -> QuadratureResult:
    """Integrate ``f`` over [lower, inf) after mapping onto (0, 1].

    For ``lower > 0`` the map is x = lower/u; otherwise x = lower + scale*(1-u)/u,
    where ``scale`` should be near the length over which ``f`` decays.
    No cutoff is applied to the tail.
    """
    if lower > 0:
        def g(u):
            return f(lower / u) * (lower / (u * u))
    else:
        if not scale > 0:
            raise ValueError("scale must be positive")

        def g(u):
            return f(lower + scale * (1.0 - u) / u) * (scale / (u * u))
    return integrate_finite(g, 0.0, 1.0, rel_tol, abs_tol, max_intervals,
                            initial_intervals=4)


def expect_over_ordered_distances(m: int, lambda_D: float, functional: Callable,
                                  samples: int, seed: int,
                                  vectorized: bool = False) -> MetricEstimate:
    """Monte Carlo expectation of ``functional`` under the joint density of
    the m nearest distances.

    With ``vectorized=True`` the functional receives the whole ``(samples, m)``
    array and returns ``(samples,)`` or ``(samples, k)``; otherwise it is called
    with one :class:`OrderedDistances` at a time.
    """
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ValueError(f"m must be an integer >= 1, got {m!r}")
    if not (isinstance(samples, (int, np.integer)) and samples >= 1):
        raise ValueError(f"samples must be an integer >= 1, got {samples!r}")
    xs = sample_ordered_distances(lambda_D, m, stream(seed, DISTANCES), size=samples)
    if vectorized:
        vals = np.asarray(functional(xs), dtype=float)
    else:
        vals = np.array([functional(OrderedDistances(tuple(row))) for row in xs], dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        row = np.flatnonzero(bad.reshape(samples, -1).any(axis=1))[0]
        raise EvaluationError(f"functional is not finite at distances {tuple(xs[row])}")
    return summarize_samples(vals, "distance-sampling", seed)


def summarize_samples(vals: np.ndarray, method: str, seed: int | None) -> MetricEstimate:
    n = vals.shape[0]
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    if np.ndim(mean) == 0:
        mean, se = float(mean), float(se)
    return MetricEstimate(mean, se, method, int(n), seed)
