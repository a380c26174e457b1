"""System parameters, unit conversions and config-file loading.

User-facing quantities are in engineering units (dBm, dB, nodes/km, km).  Engines work in SI linear units; :class:`LinkBudget` is the
single place where that conversion happens.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, NamedTuple

M_PER_KM = 1000.0


class ConfigError(ValueError):
    """Raised when a configuration file or object is malformed."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def _require_finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def dbm_to_watts(p: float) -> float:
    p = _require_finite(p, "power")
    return 10.0 ** ((p - 30.0) / 10.0)


def db_to_linear(v: float) -> float:
    v = _require_finite(v, "level")
    return 10.0 ** (v / 10.0)


def linear_to_db(v: float) -> float:
    if not v > 0:
        raise ValueError(f"linear value must be positive, got {v!r}")
    return 10.0 * math.log10(v)


def displaced_intensity(density: float, alpha: float, shadow_mean_db: float,
                        shadow_std_db: float) -> float:
    """Intensity of the 1-D PPP after absorbing log-normal shadowing.

    Each point x is moved to chi**(-1/alpha) * x, which leaves a homogeneous
    PPP with intensity density * E[chi**(1/alpha)].  For 10*log10(chi) ~
    N(mean, std**2) that expectation is exp(mean*k + (std*k)**2 / 2) with
    k = ln(10) / (10 * alpha).
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if not density > 0:
        raise ValueError(f"density must be positive, got {density!r}")
    k = math.log(10.0) / (10.0 * alpha)
    return density * math.exp(shadow_mean_db * k + 0.5 * (shadow_std_db * k) ** 2)


class Violation(NamedTuple):
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    distance_samples: int = 100_000
    mc_iterations: int = 10_000
    # "adaptive", or a number giving a fixed upper limit (nats) for the
    # spectral-efficiency threshold integral
    t_integral_cutoff_policy: str | float = "adaptive"
    # how m >= 2 expectations over the ordered distances are evaluated
    expectation_method: str = "sampling"

    def violations(self) -> list[Violation]:
        out = []
        if not self.rel_tol > 0:
            out.append(Violation("solver.rel_tol", "must be > 0"))
        if not self.abs_tol >= 0:
            out.append(Violation("solver.abs_tol", "must be >= 0"))
        if not (isinstance(self.distance_samples, int) and self.distance_samples >= 1):
            out.append(Violation("solver.distance_samples", "must be an integer >= 1"))
        if not (isinstance(self.mc_iterations, int) and self.mc_iterations >= 1):
            out.append(Violation("solver.mc_iterations", "must be an integer >= 1"))
        policy = self.t_integral_cutoff_policy
        if isinstance(policy, str):
            if policy != "adaptive":
                out.append(Violation("solver.t_integral_cutoff_policy",
                                     "must be 'adaptive' or a positive number"))
        elif not (isinstance(policy, (int, float)) and policy > 0):
            out.append(Violation("solver.t_integral_cutoff_policy",
                                 "must be 'adaptive' or a positive number"))
        if self.expectation_method not in ("sampling", "quadrature"):
            out.append(Violation("solver.expectation_method",
                                 "must be 'sampling' or 'quadrature'"))
        return out


@dataclass(frozen=True)
class SystemConfig:
    """Physical and deployment parameters in engineering units."""

    tx_power_dbm: float = 23.0
    pathloss_exponent: float = 4.0
    noise_power_dbm: float = -96.0
    fading_rate: float = 1.0
    shadow_mean_db: float = 0.0
    shadow_std_db: float = 2.0
    antenna_height_m: float = 0.0
    dbs_density_per_km: float = 3.0
    cbs_density_per_km: float = 6.0
    vehicle_density_per_km: float = 20.0
    road_length_km: float = 30.0
    connectivity_order: int = 2
    threshold_db: float = 0.0

    def replace(self, **changes: Any) -> SystemConfig:
        return dataclasses.replace(self, **changes)

    @cached_property
    def link(self) -> LinkBudget:
        return LinkBudget.from_config(self)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class LinkBudget:
    """Linear-unit view of a :class:`SystemConfig` (watts, metres)."""

    p_tx: float
    noise: float
    alpha: float
    mu: float
    height: float
    lambda_d: float  # DBS intensity, per metre
    lambda_c: float
    lambda_D: float  # displaced DBS intensity, per metre
    lambda_C: float
    lambda_v: float
    road_length: float  # metres

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> LinkBudget:
        a = cfg.pathloss_exponent
        disp = lambda d: displaced_intensity(d, a, cfg.shadow_mean_db, cfg.shadow_std_db)
        return cls(
            p_tx=dbm_to_watts(cfg.tx_power_dbm),
            noise=dbm_to_watts(cfg.noise_power_dbm),
            alpha=a,
            mu=cfg.fading_rate,
            height=cfg.antenna_height_m,
            lambda_d=cfg.dbs_density_per_km / M_PER_KM,
            lambda_c=cfg.cbs_density_per_km / M_PER_KM,
            lambda_D=disp(cfg.dbs_density_per_km) / M_PER_KM,
            lambda_C=disp(cfg.cbs_density_per_km) / M_PER_KM,
            lambda_v=cfg.vehicle_density_per_km / M_PER_KM,
            road_length=cfg.road_length_km * M_PER_KM,
        )


def validate(cfg: SystemConfig) -> list[Violation]:
    """Return every violated invariant of ``cfg``; an empty list means valid."""
    out: list[Violation] = []
    values = cfg.to_dict()
    for name, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            out.append(Violation(name, f"must be a number, got {value!r}"))
        elif not math.isfinite(value):
            out.append(Violation(name, "must be finite"))
    if out:
        return out
    if not cfg.pathloss_exponent > 2:
        out.append(Violation("pathloss_exponent", "must be > 2"))
    for name in ("dbs_density_per_km", "cbs_density_per_km", "vehicle_density_per_km",
                 "road_length_km", "fading_rate"):
        if not values[name] > 0:
            out.append(Violation(name, "must be > 0"))
    for name in ("shadow_std_db", "antenna_height_m"):
        if not values[name] >= 0:
            out.append(Violation(name, "must be >= 0"))
    m = cfg.connectivity_order
    if not (isinstance(m, int) and m >= 1):
        out.append(Violation("connectivity_order", "must be an integer >= 1"))
    return out


SYSTEM_FIELDS = tuple(f.name for f in dataclasses.fields(SystemConfig))
SOLVER_FIELDS = tuple(f.name for f in dataclasses.fields(SolverConfig))


def config_from_dict(data: dict[str, Any]) -> tuple[SystemConfig, SolverConfig]:
    """Strict schema: every system field is required, unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(SYSTEM_FIELDS) - {"solver"})
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}", unknown[0])
    for name in SYSTEM_FIELDS:
        if name not in data:
            raise ConfigError(f"missing required field: {name}", name)
    solver_data = data.get("solver", {})
    if not isinstance(solver_data, dict):
        raise ConfigError("solver block must be a JSON object", "solver")
    unknown = sorted(set(solver_data) - set(SOLVER_FIELDS))
    if unknown:
        raise ConfigError(f"unknown solver key: {unknown[0]}", f"solver.{unknown[0]}")

    cfg = SystemConfig(**{k: data[k] for k in SYSTEM_FIELDS})
    solver = SolverConfig(**solver_data)
    problems = validate(cfg) + solver.violations()
    if problems:
        raise ConfigError("; ".join(map(str, problems)), problems[0].field)
    return cfg, solver


def load_config(path: str | Path) -> tuple[SystemConfig, SolverConfig]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def config_to_dict(cfg: SystemConfig, solver: SolverConfig | None = None) -> dict[str, Any]:
    out = cfg.to_dict()
    out["solver"] = dataclasses.asdict(solver or SolverConfig())
    return out
