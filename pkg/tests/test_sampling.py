import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from mcv2x.config import displaced_intensity
from mcv2x.sampling import (
    NetworkSnapshot,
    OrderedDistances,
    apply_displacement,
    draw_shadow_gain,
    sample_ordered_distances,
    sample_ppp_interval,
    sample_snapshot,
    stream,
)


def test_ppp_count_mean():
    rng = stream(7, 0)
    counts = np.array([sample_ppp_interval(20, 30, rng).size for _ in range(2000)])
    se = math.sqrt(600 / counts.size)
    assert abs(counts.mean() - 600) < 3 * se


def test_ppp_sorted_and_in_window(rng):
    x = sample_ppp_interval(3, 30, rng)
    assert np.all(np.diff(x) >= 0)
    assert np.all(np.abs(x) <= 15)


def test_ppp_vanishing_window(rng):
    assert all(sample_ppp_interval(3, 1e-9, rng).size == 0 for _ in range(100))


def test_ppp_deterministic():
    a = sample_ppp_interval(3, 30, stream(99, 1, 2))
    b = sample_ppp_interval(3, 30, stream(99, 1, 2))
    c = sample_ppp_interval(3, 30, stream(99, 1, 3))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("density, length", [(0, 1), (-1, 1), (1, 0)])
def test_ppp_rejects_bad_args(rng, density, length):
    with pytest.raises(ValueError):
        sample_ppp_interval(density, length, rng)


def test_nearest_distance_mean():
    x1 = sample_ordered_distances(3, 1, stream(1, 3), size=1_000_000)[:, 0]
    se = x1.std(ddof=1) / math.sqrt(x1.size)
    assert abs(x1.mean() - 1 / 6) < 3 * se


def test_second_distance_chi_square():
    # Erlang(2, 2*lambda) is the n=2 distance law; equal-probability bins
    x2 = sample_ordered_distances(3, 2, stream(2, 3), size=100_000)[:, 1]
    law = stats.gamma(a=2, scale=1 / 6)
    edges = law.ppf(np.linspace(0, 1, 51))
    observed = np.histogram(x2, edges)[0]
    assert stats.chisquare(observed).pvalue > 0.01


@given(st.integers(1, 6), st.floats(0.01, 50), st.integers(0, 2**32))
def test_draws_strictly_increasing(m, rate, seed):
    d = sample_ordered_distances(rate, m, stream(seed))
    assert isinstance(d, OrderedDistances)
    assert len(d) == m
    assert all(b > a for a, b in zip(d, list(d)[1:]))
    assert d.farthest == d.distances[-1]


def test_ordered_distances_validation():
    with pytest.raises(ValueError):
        OrderedDistances((0.2, 0.1))
    with pytest.raises(ValueError):
        OrderedDistances((0.0, 0.1))
    with pytest.raises(ValueError):
        OrderedDistances(())


def test_apply_displacement_examples():
    assert apply_displacement(0.7, 1.0, 4.0) == 0.7
    assert apply_displacement(2.0, 10 ** 0.4, 4.0) == pytest.approx(1.58865646944856300413, rel=1e-13)


@given(st.floats(0.01, 10), st.floats(0.01, 100), st.floats(0.01, 100), st.floats(2.1, 6))
def test_displacement_monotone(x, g1, g2, alpha):
    lo, hi = sorted((g1, g2))
    assert apply_displacement(x, hi, alpha) <= apply_displacement(x, lo, alpha)


def test_shadow_degenerate(rng):
    assert draw_shadow_gain(0, 0, rng) == 1.0
    assert np.all(draw_shadow_gain(0, 0, rng, size=5) == 1.0)


def test_shadow_moments():
    level = 10 * np.log10(draw_shadow_gain(0, 2, stream(5, 1), size=1_000_000))
    se = level.std(ddof=1) / math.sqrt(level.size)
    assert abs(level.mean()) < 3 * se
    assert level.std(ddof=1) == pytest.approx(2.0, rel=0.01)


def test_null_probability_law():
    lam = 3.0
    rng = stream(11, 0)
    snaps = [sample_ppp_interval(lam, 2.0, rng) for _ in range(100_000)]
    nearest = np.array([np.min(np.abs(s)) if s.size else np.inf for s in snaps])
    for x in (0.05, 0.1, 0.2):
        empirical = np.mean(nearest > x)
        p = math.exp(-2 * lam * x)
        assert abs(empirical - p) < 4 * math.sqrt(p * (1 - p) / nearest.size)


def test_displaced_process_ks():
    # physical: PPP with i.i.d. shadowing, then displaced; nearest displaced distance
    lam, alpha, std = 3.0, 4.0, 2.0
    rng = stream(21, 0)
    nearest = []
    for _ in range(20_000):
        pts = np.abs(sample_ppp_interval(lam, 20.0, rng))
        if pts.size == 0:
            continue
        chi = draw_shadow_gain(0, std, rng, size=pts.size)
        nearest.append(np.min(apply_displacement(pts, chi, alpha)))
    lam_D = displaced_intensity(lam, alpha, 0, std)
    ref = sample_ordered_distances(lam_D, 1, stream(21, 1), size=20_000)[:, 0]
    assert stats.ks_2samp(nearest, ref).pvalue > 0.01


def test_snapshot(tmp_path):
    snap = sample_snapshot(3, 20, 30, stream(3), shadow_std_db=2)
    assert snap.shadow_gains.shape == (snap.vehicle_positions.size, snap.dbs_positions.size)
    assert np.all(snap.shadow_gains > 0)
    again = sample_snapshot(3, 20, 30, stream(3), shadow_std_db=2)
    assert np.array_equal(snap.dbs_positions, again.dbs_positions)
    path = tmp_path / "snap.csv"
    snap.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "entity_type,position_km"
    assert len(lines) == 1 + snap.dbs_positions.size + snap.vehicle_positions.size
    assert isinstance(NetworkSnapshot(np.zeros(0), np.zeros(0)), NetworkSnapshot)
