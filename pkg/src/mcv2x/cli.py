"""Command-line sweeps comparing the analytic and simulation engines.

Example::

    mcv2x --mode compare --config configs/defaults.json \\
          --sweep threshold_db=0:40:21 --orders 1,2,3 --out threshold_sweep.csv

Every run writes a JSON manifest next to the CSV; ``--replay MANIFEST``
re-runs it with identical settings.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy

from . import __version__
from .analytic import coverage_probability, spectral_efficiency
from .config import (
    ConfigError,
    SolverConfig,
    SystemConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .simulation import SimulationSpec, simulate, thread_count

log = logging.getLogger("mcv2x")

COLUMNS = ["parameter_value", "order_m", "metric_name", "analytic_value", "analytic_err",
           "simulated_value", "simulated_stderr", "iterations", "seed"]
SWEEP_PARAMETERS = ("threshold_db", "pathloss_exponent", "dbs_density_per_km")
METRICS = ("coverage", "spectral_efficiency")
EXIT_CONFIG = 2
EXIT_ENGINE = 1


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    steps: int
    connectivity_orders: tuple[int, ...] = (1, 2, 3)
    engines: frozenset[str] = frozenset({"analytic", "simulation"})

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep: unknown parameter {self.parameter!r} "
                              f"(expected one of {', '.join(SWEEP_PARAMETERS)})", "sweep")
        if not (math.isfinite(self.start) and math.isfinite(self.stop) and self.start < self.stop):
            raise ConfigError("sweep: need finite start < stop", "sweep")
        if self.steps < 2:
            raise ConfigError("sweep: steps must be >= 2", "sweep")
        if not self.connectivity_orders:
            raise ConfigError("orders: at least one order is required", "orders")

    @classmethod
    def parse(cls, text: str, orders, engines) -> SweepSpec:
        try:
            name, rng = text.split("=", 1)
            start, stop, steps = rng.split(":")
            return cls(name.strip(), float(start), float(stop), int(steps), tuple(orders),
                       frozenset(engines))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"sweep: expected PARAM=START:STOP:STEPS, got {text!r}",
                              "sweep") from exc

    def values(self) -> np.ndarray:
        # rounded so grid labels read 2.3 rather than 2.3000000000000003
        return np.array([float(f"{v:.12g}") for v in np.linspace(self.start, self.stop, self.steps)])


@dataclass
class SweepResult:
    rows: list[list] = field(default_factory=list)


@dataclass(frozen=True)
class RunOptions:
    mode: str
    cfg: SystemConfig
    solver: SolverConfig
    sweep: SweepSpec | None
    orders: tuple[int, ...]
    iterations: int
    seed: int
    guard_band_km: float = 0.0
    variant: str = "physical"
    single_tier: str = "cbs"
    metrics: tuple[str, ...] = METRICS
    combining: str = "coherent"

    @property
    def engines(self) -> set[str]:
        return {"analytic": {"analytic"}, "simulate": {"simulation"},
                "compare": {"analytic", "simulation"}}[self.mode]

    def manifest(self) -> dict:
        return {
            "mode": self.mode,
            "config": config_to_dict(self.cfg, self.solver),
            "sweep": None if self.sweep is None else {
                "parameter": self.sweep.parameter, "start": self.sweep.start,
                "stop": self.sweep.stop, "steps": self.sweep.steps},
            "orders": list(self.orders),
            "iterations": self.iterations,
            "seed": self.seed,
            "guard_band_km": self.guard_band_km,
            "variant": self.variant,
            "single_tier": self.single_tier,
            "metrics": list(self.metrics),
            "combining": self.combining,
            "versions": {"mcv2x": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
        }

    @classmethod
    def from_manifest(cls, data: Mapping) -> RunOptions:
        try:
            cfg, solver = config_from_dict(dict(data["config"]))
            orders = tuple(int(m) for m in data["orders"])
            sweep = data["sweep"]
            spec = None if sweep is None else SweepSpec(
                sweep["parameter"], float(sweep["start"]), float(sweep["stop"]),
                int(sweep["steps"]), orders)
            return cls(data["mode"], cfg, solver, spec, orders, int(data["iterations"]),
                       int(data["seed"]), float(data["guard_band_km"]), data["variant"],
                       data["single_tier"], tuple(data["metrics"]), data["combining"])
        except KeyError as exc:
            raise ConfigError(f"manifest: missing required field: {exc.args[0]}",
                              exc.args[0]) from exc


def derive_seed(seed: int, index: int) -> int:
    """Per-point seed from (master seed, point index)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint32)[0])


def tier_config(cfg: SystemConfig, m: int, single_tier: str) -> SystemConfig:
    """Order-1 results use the CBS tier unless ``single_tier == "dbs"``."""
    cfg = cfg.replace(connectivity_order=m)
    if m == 1 and single_tier == "cbs":
        cfg = cfg.replace(dbs_density_per_km=cfg.cbs_density_per_km)
    return cfg


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _simulate_tiers(opts: RunOptions, cfg: SystemConfig, seed: int, thresholds_db,
                    threads: int) -> dict[int, tuple]:
    """Run one simulation per tier; returns {m: (coverage[k], cov_se[k], se, se_se)}."""
    groups: dict[str, list[int]] = {}
    for m in opts.orders:
        tier = "cbs" if m == 1 and opts.single_tier == "cbs" else "dbs"
        groups.setdefault(tier, []).append(m)
    out = {}
    for tier, orders in groups.items():
        tcfg = tier_config(cfg, 1 if tier == "cbs" else max(orders), opts.single_tier)
        spec = SimulationSpec(tcfg, iterations=opts.iterations, master_seed=seed,
                              variant=opts.variant, guard_band_km=opts.guard_band_km,
                              connectivity_orders=tuple(orders),
                              thresholds_db=tuple(thresholds_db), combining=opts.combining)
        res = simulate(spec, threads=threads)
        for i, m in enumerate(res.orders):
            out[m] = (res.coverage[i], res.coverage_stderr[i],
                      res.spectral_efficiency[i], res.spectral_efficiency_stderr[i])
    return out


def _point_rows(opts: RunOptions, value: float | None, index: int, threads: int) -> list[list]:
    """Rows for one non-threshold sweep point (or the single point of a plain run)."""
    cfg = opts.cfg if value is None else opts.cfg.replace(**{opts.sweep.parameter: float(value)})
    seed = derive_seed(opts.seed, index)
    t_db = cfg.threshold_db
    t_lin = 10.0 ** (t_db / 10.0)
    sim = (_simulate_tiers(opts, cfg, seed, (t_db,), threads)
           if "simulation" in opts.engines else {})
    label = t_db if value is None else value
    rows = []
    for m in opts.orders:
        mcfg = tier_config(cfg, m, opts.single_tier)
        for metric in opts.metrics:
            a_val = a_err = s_val = s_err = None
            if "analytic" in opts.engines:
                est = (coverage_probability(mcfg, t_lin, opts.solver, seed=seed)
                       if metric == "coverage" else spectral_efficiency(mcfg, opts.solver, seed))
                a_val, a_err = est.value, est.std_error_or_bound
            if m in sim:
                cov, cov_se, se, se_se = sim[m]
                s_val, s_err = ((cov[0], cov_se[0]) if metric == "coverage" else (se, se_se))
            rows.append(_row(label, m, metric, a_val, a_err, s_val, s_err, opts, seed))
    return rows


def _row(value, m, metric, a_val, a_err, s_val, s_err, opts, seed):
    sim = "simulation" in opts.engines
    return [_fmt(value), m, metric, _fmt(a_val), _fmt(a_err), _fmt(s_val), _fmt(s_err),
            opts.iterations if sim else "", seed]


def _threshold_rows(opts: RunOptions, threads: int) -> list[list]:
    """A threshold sweep evaluates coverage at every threshold from shared draws."""
    values = opts.sweep.values()
    seed = derive_seed(opts.seed, 0)
    sim = (_simulate_tiers(opts, opts.cfg, seed, values, threads)
           if "simulation" in opts.engines else {})
    analytic = {}
    if "analytic" in opts.engines:
        for m in opts.orders:
            est = coverage_probability(tier_config(opts.cfg, m, opts.single_tier),
                                       10.0 ** (values / 10.0), opts.solver, seed=seed)
            analytic[m] = est
    rows = []
    for k, v in enumerate(values):
        for m in opts.orders:
            a_val = a_err = s_val = s_err = None
            if m in analytic:
                a_val = analytic[m].value[k]
                a_err = analytic[m].std_error_or_bound[k]
            if m in sim:
                s_val, s_err = sim[m][0][k], sim[m][1][k]
            rows.append(_row(v, m, "coverage", a_val, a_err, s_val, s_err, opts, seed))
    return rows


def run_sweep(opts: RunOptions, writer=None) -> SweepResult:
    """Evaluate every point; rows are emitted in grid order as points finish.

    On an engine failure the rows of all earlier points have already been
    passed to ``writer`` before the exception propagates.
    """
    result = SweepResult()

    def emit(rows):
        result.rows.extend(rows)
        if writer is not None:
            writer(rows)

    if opts.sweep is not None and opts.sweep.parameter == "threshold_db":
        emit(_threshold_rows(opts, thread_count()))
        return result
    if opts.sweep is None:
        emit(_point_rows(opts, None, 0, thread_count()))
        return result

    values = opts.sweep.values()
    workers = min(thread_count(), values.size)
    if workers <= 1:
        for i, v in enumerate(values):
            emit(_point_rows(opts, v, i, 1))
        return result
    with ThreadPoolExecutor(workers) as pool:
        futures = [pool.submit(_point_rows, opts, v, i, 1) for i, v in enumerate(values)]
        try:
            for fut in futures:
                emit(fut.result())
        finally:
            for fut in futures:
                fut.cancel()
    return result


def gain_report(baseline: Mapping[float, float],
                multi: Mapping[int, Mapping[float, float]]) -> list[tuple[float, int, float]]:
    """Percentage SE gain of each order over single connectivity.

    ``baseline`` maps parameter value -> SE_1 and ``multi`` maps order ->
    {parameter value -> SE_m}.  Grids must match exactly.
    """
    rows = []
    for m, series in sorted(multi.items()):
        missing = sorted(set(baseline) ^ set(series))
        if missing:
            raise ValueError(f"order {m}: parameter grids differ at {missing}")
        for v in sorted(series):
            rows.append((v, m, 100.0 * (series[v] - baseline[v]) / baseline[v]))
    return rows


def gains_from_rows(rows: Sequence[Sequence], column: str = "analytic_value"):
    """Gain table from SE rows of a sweep CSV (orders > 1 against order 1)."""
    idx = COLUMNS.index(column)
    baseline, multi = {}, {}
    for r in rows:
        if r[2] != "spectral_efficiency" or r[idx] in ("", None):
            continue
        v, m = float(r[0]), int(r[1])
        if m == 1:
            baseline[v] = float(r[idx])
        else:
            multi.setdefault(m, {})[v] = float(r[idx])
    return gain_report(baseline, multi)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcv2x", description=__doc__.splitlines()[0])
    p.add_argument("--mode", choices=("analytic", "simulate", "compare"), default="compare")
    p.add_argument("--config", type=Path, help="JSON system config (all fields required)")
    p.add_argument("--replay", type=Path, metavar="MANIFEST",
                   help="re-run the settings stored in a manifest")
    p.add_argument("--sweep", metavar="PARAM=START:STOP:STEPS")
    p.add_argument("--orders", default="1,2,3")
    p.add_argument("--iterations", type=int, help="simulation iterations (default: solver.mc_iterations)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--guard-band", type=float, default=0.0, metavar="KM")
    p.add_argument("--variant", choices=("physical", "displaced"), default="physical")
    p.add_argument("--single-tier", choices=("cbs", "dbs"), default="cbs",
                   help="tier used for order 1 (default: the CBS tier)")
    p.add_argument("--metrics", default=None,
                   help="comma list from coverage,spectral_efficiency")
    p.add_argument("--combining", choices=("coherent", "power-sum"), default="coherent")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--manifest", type=Path, help="manifest path (default: OUT.manifest.json)")
    p.add_argument("--gains", type=Path, help="also write an SE gain table here")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _parse_list(text: str, kind, name: str):
    try:
        return tuple(kind(s.strip()) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}", name) from exc


def options_from_args(args) -> RunOptions:
    if args.replay is not None:
        try:
            data = json.loads(args.replay.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"manifest: {exc}", "replay") from exc
        return RunOptions.from_manifest(data)

    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file not found: {args.config}", "config")
        cfg, solver = load_config(args.config)
    else:
        cfg, solver = SystemConfig(), SolverConfig()
    orders = _parse_list(args.orders, int, "orders")
    if not orders or any(m < 1 for m in orders):
        raise ConfigError("orders: need a non-empty list of integers >= 1", "orders")
    engines = {"analytic": ("analytic",), "simulate": ("simulation",),
               "compare": ("analytic", "simulation")}[args.mode]
    sweep = None if args.sweep is None else SweepSpec.parse(args.sweep, orders, engines)
    if args.metrics is not None:
        metrics = _parse_list(args.metrics, str, "metrics")
    elif sweep is not None and sweep.parameter == "threshold_db":
        metrics = ("coverage",)
    else:
        metrics = METRICS
    bad = [x for x in metrics if x not in METRICS]
    if bad or not metrics:
        raise ConfigError(f"metrics: unknown metric {bad[0] if bad else ''!r}", "metrics")
    if sweep is not None and sweep.parameter == "threshold_db" and metrics != ("coverage",):
        raise ConfigError("metrics: a threshold sweep only reports coverage", "metrics")
    iterations = solver.mc_iterations if args.iterations is None else args.iterations
    if iterations < 1:
        raise ConfigError("iterations: must be >= 1", "iterations")
    if not 0 <= args.guard_band < cfg.road_length_km / 2:
        raise ConfigError("guard-band: must satisfy 0 <= guard < road_length_km / 2", "guard-band")
    return RunOptions(args.mode, cfg, solver, sweep, orders, iterations, args.seed,
                      args.guard_band, args.variant, args.single_tier, metrics, args.combining)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        opts = options_from_args(args)
    except ConfigError as exc:
        print(f"mcv2x: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if "analytic" in opts.engines and opts.cfg.antenna_height_m > 0:
        print("mcv2x: warning: the analytic engine ignores antenna_height_m "
              f"({opts.cfg.antenna_height_m} m); only the simulator uses it", file=sys.stderr)
    out = args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest_path = args.manifest or out.with_name(out.name + ".manifest.json")
    manifest_path.write_text(json.dumps(opts.manifest(), indent=2, sort_keys=True) + "\n")

    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)

        def write(rows):
            w.writerows(rows)
            fh.flush()

        try:
            result = run_sweep(opts, write)
        except Exception as exc:  # engine failure: keep the rows written so far
            print(f"mcv2x: engine failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_ENGINE

    if args.gains is not None:
        column = "analytic_value" if "analytic" in opts.engines else "simulated_value"
        try:
            gains = gains_from_rows(result.rows, column)
        except ValueError as exc:
            print(f"mcv2x: gain report: {exc}", file=sys.stderr)
            return EXIT_ENGINE
        with open(args.gains, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parameter_value", "order_m", "gain_percent"])
            w.writerows([_fmt(v), m, _fmt(g)] for v, m, g in gains)
    log.info("wrote %d rows to %s", len(result.rows), out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
