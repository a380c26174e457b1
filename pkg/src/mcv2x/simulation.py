"""Full-system Monte Carlo simulation of downlink multi-connectivity on a road.

Each iteration drops DBSs and vehicles as 1-D PPPs on [-l/2, l/2].  Every
vehicle (outside an optional guard band at the road ends) joins the m
stations with the largest long-term received power and the SINR is formed
with all other stations on the road as interferers.  Coverage and spectral
efficiency are averaged over the vehicles of an iteration, then over
iterations; standard errors come from the spread of the iteration means.

Cooperating stations transmit the same signal.  With ``combining="coherent"``
(the default) their complex Rayleigh amplitudes add before detection, so the
combined signal power is exponential with mean sum_i P*chi_i*x_i**-alpha / mu.
``combining="power-sum"`` adds independently faded powers instead.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import M_PER_KM, ConfigError, SystemConfig, displaced_intensity, validate
from .sampling import DEPLOYMENT, FADING, SHADOWING, draw_shadow_gain, sample_ppp_interval, stream

THREADS_ENV = "MCV2X_THREADS"
RESAMPLE_BUDGET = 200

_VARIANTS = {
    "physical": "physical", "physical-shadowing": "physical",
    "displaced": "displaced", "displaced-intensity": "displaced",
}


class AssociationError(RuntimeError):
    """Fewer stations on the road than the requested connectivity order."""


@dataclass(frozen=True)
class SimulationSpec:
    cfg: SystemConfig
    iterations: int = 10_000
    master_seed: int = 0
    variant: str = "physical"
    guard_band_km: float = 0.0
    connectivity_orders: tuple[int, ...] = (1, 2, 3)
    # thresholds evaluated on the same draws; defaults to cfg.threshold_db
    thresholds_db: tuple[float, ...] | None = None
    combining: str = "coherent"
    trace_path: str | None = None
    trace_row_cap: int = 100_000

    def thresholds(self) -> tuple[float, ...]:
        if self.thresholds_db is None:
            return (float(self.cfg.threshold_db),)
        return tuple(float(t) for t in self.thresholds_db)

    def problems(self) -> list[str]:
        out = [str(v) for v in validate(self.cfg)]
        if not (isinstance(self.iterations, int) and self.iterations >= 1):
            out.append("iterations: must be an integer >= 1")
        if self.variant not in _VARIANTS:
            out.append(f"variant: unknown variant {self.variant!r}")
        if not 0 <= self.guard_band_km < self.cfg.road_length_km / 2:
            out.append("guard_band_km: must satisfy 0 <= guard < road_length_km / 2")
        if not self.connectivity_orders or any(
                not isinstance(m, int) or m < 1 for m in self.connectivity_orders):
            out.append("connectivity_orders: must be a non-empty list of integers >= 1")
        if self.combining not in ("coherent", "power-sum"):
            out.append(f"combining: unknown mode {self.combining!r}")
        if not all(math.isfinite(t) for t in self.thresholds()):
            out.append("thresholds_db: must be finite")
        return out


@dataclass
class SimulationResult:
    orders: tuple[int, ...]
    thresholds_db: tuple[float, ...]
    coverage: np.ndarray  # (orders, thresholds)
    coverage_stderr: np.ndarray
    spectral_efficiency: np.ndarray  # (orders,), nats/s/Hz
    spectral_efficiency_stderr: np.ndarray
    iterations_used: int
    seed: int
    resamples: int = 0
    iteration_coverage: np.ndarray | None = field(default=None, repr=False)

    def coverage_at(self, m: int, threshold_db: float | None = None) -> tuple[float, float]:
        i = self.orders.index(m)
        k = 0 if threshold_db is None else self.thresholds_db.index(float(threshold_db))
        return float(self.coverage[i, k]), float(self.coverage_stderr[i, k])

    def se_at(self, m: int) -> tuple[float, float]:
        i = self.orders.index(m)
        return float(self.spectral_efficiency[i]), float(self.spectral_efficiency_stderr[i])


def link_distance_m(r_km, height_m: float):
    """3-D link length in metres from the along-road offset in km."""
    r = np.asarray(r_km, dtype=float) * M_PER_KM
    return np.sqrt(r * r + height_m * height_m)


def associate(vehicle_pos: float, dbs_positions, shadow_gains, cfg: SystemConfig, m: int):
    """Pick the m stations with the largest long-term received power.

    Returns ``(indices, displaced_distances_km)`` in decreasing-power order.
    The ranking key y = chi**(-1/alpha) * x is the displaced distance; fast
    fading is not used.
    """
    dbs = np.asarray(dbs_positions, dtype=float)
    if dbs.size < m:
        raise AssociationError(f"{dbs.size} stations on the road, need {m}")
    chi = np.ones(dbs.size) if shadow_gains is None else np.asarray(shadow_gains, dtype=float)
    x = link_distance_m(dbs - vehicle_pos, cfg.antenna_height_m) / M_PER_KM
    y = chi ** (-1.0 / cfg.pathloss_exponent) * x
    idx = np.argsort(y, kind="stable")[:m]
    return idx, y[idx]


def sinr_for_vehicle(vehicle_pos: float, serving, dbs_positions, gains, shadows,
                     cfg: SystemConfig) -> float:
    """SINR of one vehicle served by the stations in ``serving``.

    Real ``gains`` are fading power gains and the serving powers add; complex
    ``gains`` are fading amplitudes and the serving signals add coherently.
    """
    link = cfg.link
    dbs = np.asarray(dbs_positions, dtype=float)
    chi = np.ones(dbs.size) if shadows is None else np.asarray(shadows, dtype=float)
    x = link_distance_m(dbs - vehicle_pos, link.height)
    mean_power = link.p_tx * chi * x ** (-link.alpha)
    gains = np.asarray(gains)
    power_gain = np.abs(gains) ** 2 if np.iscomplexobj(gains) else gains.astype(float)
    serving = np.asarray(serving, dtype=int)
    others = np.setdiff1d(np.arange(dbs.size), serving)
    interference = float(np.sum(power_gain[others] * mean_power[others]))
    if np.iscomplexobj(gains):
        signal = abs(np.sum(gains[serving] * np.sqrt(mean_power[serving]))) ** 2
    else:
        signal = float(np.sum(power_gain[serving] * mean_power[serving]))
    return signal / (interference + link.noise)


class _Plan:
    """Per-simulation constants shared by every iteration."""

    def __init__(self, spec: SimulationSpec):
        cfg = spec.cfg
        self.spec = spec
        self.link = cfg.link
        self.variant = _VARIANTS[spec.variant]
        self.orders = tuple(spec.connectivity_orders)
        self.k_max = max(self.orders)
        self.half = 0.5 * cfg.road_length_km
        self.eval_half = self.half - spec.guard_band_km
        if self.variant == "displaced":
            self.dbs_density = displaced_intensity(cfg.dbs_density_per_km, cfg.pathloss_exponent,
                                                   cfg.shadow_mean_db, cfg.shadow_std_db)
        else:
            self.dbs_density = cfg.dbs_density_per_km
        self.thresholds = np.array([10.0 ** (t / 10.0) for t in spec.thresholds()])


def iteration_sinr(plan: _Plan, iteration: int):
    """Draw one deployment and return ``(vehicle_positions_km, sinr, resamples)``
    with ``sinr`` of shape (len(orders), vehicles)."""
    spec, cfg, link = plan.spec, plan.spec.cfg, plan.link
    for attempt in range(RESAMPLE_BUDGET):
        rng = stream(spec.master_seed, iteration, attempt, DEPLOYMENT)
        dbs = sample_ppp_interval(plan.dbs_density, cfg.road_length_km, rng)
        veh = sample_ppp_interval(cfg.vehicle_density_per_km, cfg.road_length_km, rng)
        veh = veh[np.abs(veh) <= plan.eval_half]
        if veh.size and dbs.size >= plan.k_max:
            break
    else:
        raise ConfigError(
            f"iteration {iteration}: no usable deployment after {RESAMPLE_BUDGET} draws "
            "(too few stations or no vehicles in the evaluation region)")

    shape = (veh.size, dbs.size)
    x = link_distance_m(veh[:, None] - dbs[None, :], link.height)
    mean_power = link.p_tx * x ** (-link.alpha)
    if plan.variant == "physical":
        rng = stream(spec.master_seed, iteration, attempt, SHADOWING)
        mean_power *= draw_shadow_gain(cfg.shadow_mean_db, cfg.shadow_std_db, rng, size=shape)

    k = plan.k_max
    top = np.argpartition(-mean_power, k - 1, axis=1)[:, :k]
    top_power = np.take_along_axis(mean_power, top, axis=1)
    order = np.argsort(-top_power, axis=1, kind="stable")
    top = np.take_along_axis(top, order, axis=1)
    top_power = np.take_along_axis(top_power, order, axis=1)

    rng = stream(spec.master_seed, iteration, attempt, FADING)
    amp = rng.normal(0.0, math.sqrt(0.5 / link.mu), size=(2,) + shape)
    fading = amp[0] * amp[0] + amp[1] * amp[1]
    received = fading * mean_power
    top_received = np.take_along_axis(received, top, axis=1)
    np.put_along_axis(received, top, 0.0, axis=1)
    rest = received.sum(axis=1)

    sinr = np.empty((len(plan.orders), veh.size))
    if spec.combining == "coherent":
        top_re = np.take_along_axis(amp[0], top, axis=1) * np.sqrt(top_power)
        top_im = np.take_along_axis(amp[1], top, axis=1) * np.sqrt(top_power)
    for i, m in enumerate(plan.orders):
        interference = rest + top_received[:, m:].sum(axis=1)
        if spec.combining == "coherent":
            signal = top_re[:, :m].sum(axis=1) ** 2 + top_im[:, :m].sum(axis=1) ** 2
        else:
            signal = top_received[:, :m].sum(axis=1)
        sinr[i] = signal / (interference + link.noise)
    return veh, sinr, attempt


def _run_block(plan: _Plan, start: int, stop: int, cov, se, resamples, traces):
    for it in range(start, stop):
        veh, sinr, extra = iteration_sinr(plan, it)
        cov[it] = (sinr[:, :, None] > plan.thresholds[None, None, :]).mean(axis=1)
        se[it] = np.log1p(sinr).mean(axis=1)
        resamples[it] = extra
        if traces is not None:
            traces[it] = _trace_rows(plan, it, veh, sinr)


def _trace_rows(plan, it, veh, sinr):
    rows = []
    t0 = plan.thresholds[0]
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(sinr)
    for i, m in enumerate(plan.orders):
        for v, s, s_db in zip(veh, sinr[i], sinr_db[i]):
            rows.append((it, repr(float(v)), m, repr(float(s_db)), int(s > t0)))
            if len(rows) >= plan.spec.trace_row_cap:
                return rows
    return rows


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def simulate(spec: SimulationSpec, threads: int | None = None) -> SimulationResult:
    """Run the simulation; results depend only on ``spec``, not on ``threads``."""
    problems = spec.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    plan = _Plan(spec)
    n = spec.iterations
    n_thr = plan.thresholds.size
    cov = np.empty((n, len(plan.orders), n_thr))
    se = np.empty((n, len(plan.orders)))
    resamples = np.zeros(n, dtype=int)
    traces = [None] * n if spec.trace_path else None

    threads = threads or thread_count()
    if threads <= 1 or n < 2:
        _run_block(plan, 0, n, cov, se, resamples, traces)
    else:
        edges = np.linspace(0, n, min(n, 4 * threads) + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            futures = [pool.submit(_run_block, plan, a, b, cov, se, resamples, traces)
                       for a, b in zip(edges[:-1], edges[1:]) if b > a]
            for f in futures:
                f.result()

    if traces is not None:
        _write_trace(spec, traces)
    denom = math.sqrt(n) if n > 1 else 1.0
    ddof = 1 if n > 1 else 0
    return SimulationResult(
        orders=plan.orders,
        thresholds_db=spec.thresholds(),
        coverage=cov.mean(axis=0),
        coverage_stderr=cov.std(axis=0, ddof=ddof) / denom,
        spectral_efficiency=se.mean(axis=0),
        spectral_efficiency_stderr=se.std(axis=0, ddof=ddof) / denom,
        iterations_used=n,
        seed=spec.master_seed,
        resamples=int(resamples.sum()),
        iteration_coverage=cov,
    )


def _write_trace(spec: SimulationSpec, traces) -> None:
    path = Path(spec.trace_path)
    written = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "vehicle_pos_km", "m", "sinr_db", "covered_flag"])
        for rows in traces:
            for row in rows:
                if written >= spec.trace_row_cap:
                    return
                w.writerow(row)
                written += 1
