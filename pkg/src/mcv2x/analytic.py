"""Analytic coverage probability and spectral efficiency.

Conditioned on the cooperating distances x_1 < ... < x_m, a vehicle is covered
at threshold t with probability

    exp(-mu*t*noise/S) * zeta(mu*t/S),     S = sum_i P * x_i**-alpha,

where zeta is the Laplace transform of the interference from the remaining
stations (a PPP beyond x_m).  The unconditional metrics average this over the
joint density of the ordered distances.  Spectral efficiency (nats/s/Hz) is
the integral of the coverage probability at threshold e**u - 1 over u > 0.

Engines work in metres and watts; see :class:`mcv2x.config.LinkBudget`.
Antenna height is ignored here: the derivation uses ground distances.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .config import M_PER_KM, SolverConfig, SystemConfig
from .quadrature import (
    MetricEstimate,
    expect_over_ordered_distances,
    integrate_finite,
    integrate_semi_infinite,
)

CUTOFF_LEVEL = 1e-10  # integrand level at which the threshold integral is truncated
_JACOBI_NODES = 20
_MAX_CUTOFF = 4096.0
_SE_BLOCK = 2048


@lru_cache(maxsize=64)
def _jacobi_rules(alpha: float):
    """Gauss-Jacobi rules on [0, 1] for weights r**(1/alpha - 1) and r**(-1/alpha)."""
    out = []
    for beta in (1.0 / alpha - 1.0, -1.0 / alpha):
        x, w = roots_jacobi(_JACOBI_NODES, 0.0, beta)
        out.append(((x + 1.0) / 2.0, w / 2.0 ** (beta + 1.0)))
    (r1, w1), (r2, w2) = out
    total = (np.sum(w1 / (1.0 + r1)) + np.sum(w2 / (1.0 + r2))) / alpha
    return r1, w1, r2, w2, total


def tail_integral(c, alpha: float) -> np.ndarray:
    """F(c) = integral over u in [1, inf) of du / (1 + c*u**alpha), vectorised.

    Substituting r = u**-alpha (c >= 1) or splitting off the full-line integral
    (c < 1) leaves integrands with algebraic end-point weights and a pole at
    r <= -1, which a fixed Gauss-Jacobi rule resolves to rounding error.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    c = np.asarray(c, dtype=float)
    r1, w1, r2, w2, total = _jacobi_rules(float(alpha))
    out = np.empty(c.shape)
    big = c >= 1.0
    cb = c[big]
    out[big] = np.where(np.isinf(cb), 0.0,
                        (w2 / (cb[..., None] + r2)).sum(axis=-1) / alpha)
    cs = c[~big]
    with np.errstate(divide="ignore"):
        head = (w1 / (1.0 + cs[..., None] * r1)).sum(axis=-1) / alpha
        out[~big] = np.where(cs > 0, total * cs ** (-1.0 / alpha) - head, np.inf)
    return out


def interference_integral(j, x_m, p_d: float, alpha: float, mu: float,
                          method: str = "jacobi", solver: SolverConfig | None = None):
    """Integral over x > x_m of j*P*x**-a / (j*P*x**-a + mu) dx.

    ``method="adaptive"`` evaluates the same integral with
    :func:`integrate_semi_infinite`; it is much slower and exists as a cross-check.
    """
    j, x_m = np.broadcast_arrays(np.asarray(j, dtype=float), np.asarray(x_m, dtype=float))
    with np.errstate(divide="ignore"):
        log_c = math.log(mu) + alpha * np.log(x_m) - np.log(j) - math.log(p_d)
    c = np.exp(np.minimum(log_c, 700.0))
    c = np.where(log_c > 700.0, np.inf, c)
    if method == "jacobi":
        return x_m * tail_integral(c, alpha)
    if method != "adaptive":
        raise ValueError(f"unknown method {method!r}")
    solver = solver or SolverConfig()
    flat = c.ravel()
    finite = np.isfinite(flat)
    vals = np.zeros(flat.shape)
    if finite.any():
        cf = flat[finite]
        res = integrate_semi_infinite(
            lambda u: 1.0 / (1.0 + cf[:, None] * u[None, :] ** alpha), 1.0,
            rel_tol=min(solver.rel_tol, 1e-10), abs_tol=0.0)
        vals[finite] = res.value
    return x_m * vals.reshape(c.shape)


def laplace_interference(j, x_m, lambda_D: float, p_d: float, alpha: float, mu: float,
                         solver: SolverConfig | None = None, method: str = "jacobi",
                         strict: bool = True):
    """Laplace transform of the interference from a PPP beyond ``x_m``, at ``j``.

    Consistent units are required: ``lambda_D`` per unit length of ``x_m``.
    ``strict=False`` relaxes the requirement alpha > 2 to alpha > 1.
    """
    if alpha <= (2.0 if strict else 1.0):
        raise ValueError(f"pathloss exponent must exceed {2 if strict else 1}, got {alpha!r}")
    j_arr = np.asarray(j, dtype=float)
    if np.any(j_arr < 0) or np.any(np.asarray(x_m) <= 0):
        raise ValueError("need j >= 0 and x_m > 0")
    out = np.exp(-2.0 * lambda_D * interference_integral(j_arr, x_m, p_d, alpha, mu,
                                                         method, solver))
    return float(out) if out.ndim == 0 else out


def _conditional_coverage(xs: np.ndarray, t, p_d, alpha, mu, noise, lam, method="jacobi"):
    """Vectorised core: ``xs`` of shape (n, m) in metres, thresholds ``t`` of
    shape (k,); returns (n, k)."""
    xs = np.atleast_2d(xs)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xm = xs[:, -1]
    # S / P and c = sum_i (x_m/x_i)**alpha / t, formed without overflow
    ratio_sum = np.sum((xm[:, None] / xs) ** alpha, axis=1)
    log_s = math.log(p_d) + np.log(ratio_sum) - alpha * np.log(xm)
    with np.errstate(divide="ignore", over="ignore"):
        log_c = np.log(ratio_sum)[:, None] - np.log(t)[None, :]
        c = np.where(log_c > 700.0, np.inf, np.exp(np.minimum(log_c, 700.0)))
        noise_term = mu * noise * t[None, :] * np.exp(-log_s)[:, None]
    tail = tail_integral(c, alpha) if method == "jacobi" else _adaptive_tail(c, alpha)
    return np.exp(-noise_term - 2.0 * lam * xm[:, None] * tail)


def _adaptive_tail(c, alpha):
    with np.errstate(divide="ignore"):
        return interference_integral(1.0 / c, 1.0, 1.0, alpha, 1.0, method="adaptive")


def conditional_coverage(xs, cfg: SystemConfig, t_linear, solver: SolverConfig | None = None):
    """P(SINR > t | cooperating distances ``xs`` in km)."""
    link = cfg.link
    x = np.asarray(tuple(xs), dtype=float) * M_PER_KM
    if x.ndim != 1 or x[0] <= 0 or np.any(np.diff(x) <= 0):
        raise ValueError("xs must be positive and strictly increasing")
    t = np.asarray(t_linear, dtype=float)
    if np.any(t <= 0):
        raise ValueError("threshold must be positive")
    val = _conditional_coverage(x[None, :], t.ravel(), link.p_tx, link.alpha, link.mu,
                                link.noise, link.lambda_D)[0]
    return float(val[0]) if t.ndim == 0 else val.reshape(t.shape)


def _solver(solver):
    return solver if solver is not None else SolverConfig()


def _check_thresholds(t_linear):
    t = np.atleast_1d(np.asarray(t_linear, dtype=float))
    if np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise ValueError("thresholds must be positive and finite")
    return t


def _pack(value, err, method, samples, seed, scalar):
    if scalar:
        return MetricEstimate(float(np.ravel(value)[0]), float(np.ravel(err)[0]), method,
                              samples, seed)
    return MetricEstimate(np.asarray(value), np.asarray(err), method, samples, seed)


def coverage_probability(cfg: SystemConfig, t_linear, solver: SolverConfig | None = None,
                         seed: int = 0) -> MetricEstimate:
    """Coverage probability of order ``cfg.connectivity_order``.

    Order 1 (and order 2 with ``expectation_method="quadrature"``) is
    evaluated by nested quadrature; higher orders average the conditional
    coverage over sampled distances.  ``t_linear`` may be an array.
    """
    solver = _solver(solver)
    scalar = np.ndim(t_linear) == 0
    t = _check_thresholds(t_linear)
    link = cfg.link
    m = cfg.connectivity_order
    lam = link.lambda_D
    args = (link.p_tx, link.alpha, link.mu, link.noise, lam)

    if m == 1 or (m == 2 and solver.expectation_method == "quadrature"):
        res = _expect_by_quadrature(m, lam, lambda xs: _conditional_coverage(xs, t, *args),
                                    t.size, solver)
        value = np.clip(res.value, 0.0, 1.0)
        return _pack(value, res.error_bound, "quadrature", res.evaluations, None, scalar)
    if solver.expectation_method == "quadrature":
        raise ValueError("nested quadrature is only available for orders 1 and 2")
    est = expect_over_ordered_distances(
        m, lam, lambda xs: _conditional_coverage(xs, t, *args), solver.distance_samples,
        seed, vectorized=True)
    return _pack(est.value, est.std_error_or_bound, est.method, est.samples, seed, scalar)


def _expect_by_quadrature(m, lam, cond, k, solver):
    """Integrate ``cond`` ((n, m) distances -> (n, k)) against the joint
    distance density for m = 1 or 2, batched over the k columns."""
    rel, abs_ = solver.rel_tol, solver.abs_tol
    scale = 0.5 / lam

    if m == 1:
        def outer(x):
            w = 2.0 * lam * np.exp(-2.0 * lam * x)
            live = w > 0
            out = np.zeros((k, x.size))
            if live.any():
                out[:, live] = (w[live, None] * cond(x[live, None])).T
            return out
        return integrate_semi_infinite(outer, 0.0, rel, abs_, scale=scale)

    def outer(x2):
        w = (2.0 * lam) ** 2 * np.exp(-2.0 * lam * x2)
        live = np.flatnonzero(w > 0)
        out = np.zeros((k, x2.size))
        if live.size == 0:
            return out
        xl = x2[live]

        def inner(s):
            x1 = xl[:, None] * s[None, :]
            xs = np.stack([x1.ravel(), np.repeat(xl, s.size)], axis=1)
            vals = cond(xs).reshape(xl.size, s.size, k)
            return (xl[:, None, None] * vals).transpose(0, 2, 1).reshape(xl.size * k, s.size)

        r = integrate_finite(inner, 0.0, 1.0, rel * 0.1, abs_ * 0.1)
        out[:, live] = (w[live, None] * np.asarray(r.value).reshape(xl.size, k)).T
        return out
    return integrate_semi_infinite(outer, 0.0, rel, abs_, scale=scale)


def threshold_integral(cover, batch: int, solver: SolverConfig):
    """Integrate u -> cover(e**u - 1) over u > 0 for ``batch`` integrands.

    ``cover`` maps thresholds (k,) to (batch, k).  The upper limit doubles
    until every integrand has dropped below ``CUTOFF_LEVEL`` there and the last
    doubling moved the result by less than ``rel_tol``.
    """
    rel, abs_ = solver.rel_tol, solver.abs_tol

    def f(u):
        return cover(np.expm1(u))

    policy = solver.t_integral_cutoff_policy
    if policy != "adaptive":
        res = integrate_finite(f, 0.0, float(policy), rel, abs_, initial_intervals=4)
        return np.asarray(res.value), np.asarray(res.error_bound)

    upper = 4.0
    while np.max(f(np.array([upper]))) >= CUTOFF_LEVEL:
        upper *= 2.0
        if upper > _MAX_CUTOFF:
            raise ValueError("threshold integrand does not decay; is the signal zero?")
    res = integrate_finite(f, 0.0, upper, rel, abs_, initial_intervals=4)
    value, err = np.asarray(res.value), np.asarray(res.error_bound)
    while True:
        more = integrate_finite(f, upper, 2.0 * upper, rel, abs_)
        value = value + more.value
        err = err + more.error_bound
        upper *= 2.0
        if np.all(np.abs(more.value) <= rel * np.abs(value)) or upper > _MAX_CUTOFF:
            return value, err


def spectral_efficiency(cfg: SystemConfig, solver: SolverConfig | None = None,
                        seed: int = 0) -> MetricEstimate:
    """Mean of ln(1 + SINR) in nats/s/Hz for order ``cfg.connectivity_order``."""
    solver = _solver(solver)
    link = cfg.link
    m = cfg.connectivity_order
    lam = link.lambda_D
    args = (link.p_tx, link.alpha, link.mu, link.noise, lam)

    if m == 1 or (m == 2 and solver.expectation_method == "quadrature"):
        def per_distance(xs):
            v, _ = threshold_integral(lambda t: _conditional_coverage(xs, t, *args),
                                      xs.shape[0], _inner(solver))
            return np.atleast_1d(v)[:, None]
        res = _expect_by_quadrature(m, lam, per_distance, 1, solver)
        return MetricEstimate(float(res.value[0]), float(res.error_bound[0]), "quadrature",
                              res.evaluations, None)
    if solver.expectation_method == "quadrature":
        raise ValueError("nested quadrature is only available for orders 1 and 2")

    def functional(xs):
        out = np.empty(xs.shape[0])
        for start in range(0, xs.shape[0], _SE_BLOCK):
            block = xs[start:start + _SE_BLOCK]
            v, _ = threshold_integral(lambda t: _conditional_coverage(block, t, *args),
                                      block.shape[0], solver)
            out[start:start + _SE_BLOCK] = v
        return out
    return expect_over_ordered_distances(m, lam, functional, solver.distance_samples, seed,
                                         vectorized=True)


def _inner(solver):
    # inner integrals of a nested rule get a tighter budget than the outer one
    from dataclasses import replace
    return replace(solver, rel_tol=solver.rel_tol * 0.1, abs_tol=solver.abs_tol * 0.1)


def single_coverage(cfg: SystemConfig, t_linear, solver: SolverConfig | None = None) -> MetricEstimate:
    """Coverage of single connectivity to the strongest cellular station.

    Integrates 2*lam_C*exp(-2*lam_C*x) * exp(-mu*t*noise*x**a/P) * zeta(mu*t*x**a/P)
    over the serving distance x, with the cellular tier's displaced intensity.
    """
    solver = _solver(solver)
    scalar = np.ndim(t_linear) == 0
    t = _check_thresholds(t_linear)
    link = cfg.link
    lam, p, a, mu, noise = link.lambda_C, link.p_tx, link.alpha, link.mu, link.noise

    def f(x):
        w = 2.0 * lam * np.exp(-2.0 * lam * x)
        live = w > 0
        out = np.zeros((t.size, x.size))
        xl = x[live]
        j = mu * t[:, None] * xl[None, :] ** a / p
        with np.errstate(over="ignore"):
            noise_term = j * noise
        zeta = laplace_interference(j, xl[None, :], lam, p, a, mu)
        out[:, live] = w[live] * np.exp(-noise_term) * zeta
        return out

    res = integrate_semi_infinite(f, 0.0, solver.rel_tol, solver.abs_tol, scale=0.5 / lam)
    value = np.clip(res.value, 0.0, 1.0)
    return _pack(value, res.error_bound, "quadrature", res.evaluations, None, scalar)


def single_spectral_efficiency(cfg: SystemConfig, solver: SolverConfig | None = None) -> MetricEstimate:
    """Spectral efficiency (nats/s/Hz) of single connectivity: serving distance
    outer, threshold inner."""
    solver = _solver(solver)
    link = cfg.link
    lam, p, a, mu, noise = link.lambda_C, link.p_tx, link.alpha, link.mu, link.noise
    inner_solver = _inner(solver)

    def f(x):
        w = 2.0 * lam * np.exp(-2.0 * lam * x)
        live = w > 0
        out = np.zeros(x.size)
        xl = x[live]
        if xl.size == 0:
            return out

        def cover(t):
            j = mu * t[None, :] * xl[:, None] ** a / p
            with np.errstate(over="ignore"):
                noise_term = j * noise
            return np.exp(-noise_term) * laplace_interference(j, xl[:, None], lam, p, a, mu)

        v, _ = threshold_integral(cover, xl.size, inner_solver)
        out[live] = w[live] * v
        return out

    res = integrate_semi_infinite(f, 0.0, solver.rel_tol, solver.abs_tol, scale=0.5 / lam)
    return MetricEstimate(float(res.value), float(res.error_bound), "quadrature",
                          res.evaluations, None)


def bits(nats: float) -> float:
    """Convert nats/s/Hz to bits/s/Hz."""
    return nats / math.log(2.0)
