"""Closed-form distance densities for the n nearest points of a 1-D PPP.

Lengths and intensities only need to be in consistent units (km with
nodes/km, or metres with nodes/m).  Densities are formed in log space.
"""
from __future__ import annotations

import math

import numpy as np


def _check_rate(lam):
    if not lam > 0:
        raise ValueError(f"intensity must be positive, got {lam!r}")


def log_joint_distance_pdf(xs, lambda_D: float, strict: bool = True) -> float:
    _check_rate(lambda_D)
    x = np.asarray(tuple(xs), dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("xs must be a non-empty sequence of distances")
    ordered = x[0] > 0 and bool(np.all(np.diff(x) > 0))
    if not ordered:
        if strict:
            raise ValueError(f"distances must be positive and strictly increasing: {x}")
        return -math.inf
    n = x.size
    return n * math.log(2.0 * lambda_D) - 2.0 * lambda_D * x[-1]


def joint_distance_pdf(xs, lambda_D: float, strict: bool = True) -> float:
    """Joint density of (x_1, ..., x_n): (2*lambda)**n * exp(-2*lambda*x_n).

    Non-increasing input raises unless ``strict=False``, in which case the
    density is 0 (used when binning samples on a grid).
    """
    return math.exp(log_joint_distance_pdf(xs, lambda_D, strict))


def nth_distance_pdf(x, n: int, lam: float):
    """Density of the n-th nearest distance, (2*lam*x)**n / (x*Gamma(n)) * exp(-2*lam*x)."""
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValueError(f"n must be an integer >= 1, got {n!r}")
    _check_rate(lam)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    logf = n * np.log(2.0 * lam * x) - np.log(x) - math.lgamma(n) - 2.0 * lam * x
    out = np.exp(logf)
    return float(out) if out.ndim == 0 else out


def nearest_distance_ccdf(x, lam: float):
    """P(no point within distance x of the origin) = exp(-2*lam*x)."""
    _check_rate(lam)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = np.exp(-2.0 * lam * x)
    return float(out) if out.ndim == 0 else out


def nearest_distance_cdf(x, lam: float):
    nearest_distance_ccdf(x, lam)  # argument checks
    out = -np.expm1(-2.0 * lam * np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out
