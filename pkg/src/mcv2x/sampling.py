"""1-D Poisson point processes, ordered distances and shadowing draws.

Random numbers come from Philox, a counter-based generator.  A stream is
identified by a master seed plus an integer key path such as
``(iteration, purpose)``; streams never depend on the order in which work is
scheduled.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# stream purposes
DEPLOYMENT = 0
SHADOWING = 1
FADING = 2
DISTANCES = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class OrderedDistances:
    """Distances x_1 < ... < x_m from the typical vehicle to its cooperating stations."""

    distances: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(x) for x in self.distances)
        object.__setattr__(self, "distances", d)
        if not d:
            raise ValueError("at least one distance is required")
        if d[0] <= 0 or any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError(f"distances must be positive and strictly increasing: {d}")

    def __len__(self) -> int:
        return len(self.distances)

    def __iter__(self):
        return iter(self.distances)

    @property
    def farthest(self) -> float:
        return self.distances[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.distances)


@dataclass
class NetworkSnapshot:
    """One realised deployment on the road [-l/2, l/2] (positions in km)."""

    dbs_positions: np.ndarray
    vehicle_positions: np.ndarray
    shadow_gains: np.ndarray | None = None  # (vehicle, DBS), linear

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["entity_type", "position_km"])
            for x in self.dbs_positions:
                w.writerow(["dbs", repr(float(x))])
            for x in self.vehicle_positions:
                w.writerow(["vehicle", repr(float(x))])


def sample_ppp_interval(density: float, length: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted realisation of a homogeneous PPP on [-length/2, length/2]."""
    if not density > 0:
        raise ValueError(f"density must be positive, got {density!r}")
    if not length > 0:
        raise ValueError(f"length must be positive, got {length!r}")
    n = rng.poisson(density * length)
    return np.sort(rng.uniform(-0.5 * length, 0.5 * length, size=n))


def sample_ordered_distances(effective_rate: float, m: int, rng: np.random.Generator,
                             size: int | None = None) -> OrderedDistances | np.ndarray:
    """Distances to the m nearest points of a 1-D PPP seen from the origin.

    Points on both sides of the origin make the distances a Poisson arrival
    process of rate ``2 * effective_rate``, so the gaps are exponential.  With
    ``size`` given, returns an array of shape ``(size, m)`` instead of a
    single :class:`OrderedDistances`.
    """
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ValueError(f"m must be an integer >= 1, got {m!r}")
    if not effective_rate > 0:
        raise ValueError(f"effective_rate must be positive, got {effective_rate!r}")
    scale = 0.5 / effective_rate
    if size is None:
        gaps = _positive_exponential(rng, scale, (m,))
        return OrderedDistances(tuple(np.cumsum(gaps)))
    gaps = _positive_exponential(rng, scale, (size, m))
    return np.cumsum(gaps, axis=1)


def _positive_exponential(rng, scale, shape):
    gaps = rng.exponential(scale, size=shape)
    # an exact zero gap would break strict ordering
    return np.where(gaps > 0, gaps, np.finfo(float).tiny)


def apply_displacement(distance, shadow_gain, alpha):
    """Map a distance to its shadowing-equivalent ``shadow_gain**(-1/alpha) * distance``."""
    distance = np.asarray(distance, dtype=float)
    shadow_gain = np.asarray(shadow_gain, dtype=float)
    if np.any(distance <= 0) or np.any(shadow_gain <= 0) or not alpha > 0:
        raise ValueError("distance, shadow_gain and alpha must all be positive")
    out = shadow_gain ** (-1.0 / alpha) * distance
    return float(out) if out.ndim == 0 else out


def draw_shadow_gain(shadow_mean_db: float, shadow_std_db: float, rng: np.random.Generator,
                     size: int | Sequence[int] | None = None):
    """Log-normal shadowing: 10*log10(chi) ~ N(mean, std**2)."""
    if not shadow_std_db >= 0:
        raise ValueError(f"shadow std must be >= 0, got {shadow_std_db!r}")
    if shadow_std_db == 0:
        level = np.full(() if size is None else size, float(shadow_mean_db))
    else:
        level = rng.normal(shadow_mean_db, shadow_std_db, size=size)
    out = 10.0 ** (level / 10.0)
    return float(out) if np.ndim(out) == 0 else out


def sample_snapshot(dbs_density: float, vehicle_density: float, road_length: float,
                    rng: np.random.Generator, shadow_mean_db: float = 0.0,
                    shadow_std_db: float = 0.0) -> NetworkSnapshot:
    """Draw DBS and vehicle positions (km) plus per-link shadowing."""
    dbs = sample_ppp_interval(dbs_density, road_length, rng)
    veh = sample_ppp_interval(vehicle_density, road_length, rng)
    shadows = draw_shadow_gain(shadow_mean_db, shadow_std_db, rng, size=(veh.size, dbs.size))
    return NetworkSnapshot(dbs, veh, np.asarray(shadows))
