import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from mcv2x.distances import (
    joint_distance_pdf,
    log_joint_distance_pdf,
    nearest_distance_ccdf,
    nearest_distance_cdf,
    nth_distance_pdf,
)
from mcv2x.quadrature import integrate_semi_infinite
from mcv2x.sampling import sample_ordered_distances, stream


def test_joint_example():
    # mpmath: 36 exp(-1.2)
    assert joint_distance_pdf((0.1, 0.2), 3) == pytest.approx(10.842991628839275479, rel=1e-13)


@given(st.floats(1e-3, 5), st.floats(0.01, 10))
def test_joint_single_is_nearest_pdf(x, lam):
    assert joint_distance_pdf((x,), lam) == pytest.approx(2 * lam * math.exp(-2 * lam * x), rel=1e-12)
    assert nth_distance_pdf(x, 1, lam) == pytest.approx(2 * lam * math.exp(-2 * lam * x), rel=1e-12)


def test_joint_depends_only_on_last():
    assert joint_distance_pdf((0.05, 0.2), 3) == joint_distance_pdf((0.15, 0.2), 3)


def test_joint_strict_and_lenient():
    with pytest.raises(ValueError):
        joint_distance_pdf((0.2, 0.1), 3)
    with pytest.raises(ValueError):
        joint_distance_pdf((0.1, 0.1), 3)
    assert joint_distance_pdf((0.2, 0.1), 3, strict=False) == 0.0
    with pytest.raises(ValueError):
        joint_distance_pdf((0.1,), 0)


def test_log_space_avoids_underflow():
    # exp(-2*5.7*100) underflows; the log density stays finite
    assert log_joint_distance_pdf((50.0, 100.0), 5.7) == pytest.approx(2 * math.log(11.4) - 1140)
    assert nth_distance_pdf(200.0, 3, 5.7) == 0.0


def test_nth_example():
    # (1.2)^2/0.2 * exp(-1.2), evaluated with mpmath
    assert nth_distance_pdf(0.2, 2, 3) == pytest.approx(2.168598325767855096, rel=1e-13)


def test_nth_normalised():
    res = integrate_semi_infinite(lambda x: nth_distance_pdf(x + 1e-300, 3, 3), 0.0,
                                  rel_tol=1e-10, abs_tol=1e-12, scale=1 / 6)
    assert res.value == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_nth_matches_erlang(n):
    x = np.linspace(0.01, 3, 40)
    assert np.allclose(nth_distance_pdf(x, n, 2.5), stats.gamma(a=n, scale=1 / 5).pdf(x), rtol=1e-12)


def test_nth_rejects():
    with pytest.raises(ValueError):
        nth_distance_pdf(0.1, 0, 3)
    with pytest.raises(ValueError):
        nth_distance_pdf(-0.1, 1, 3)


def test_ccdf_examples():
    assert nearest_distance_ccdf(0, 3) == 1.0
    assert nearest_distance_ccdf(0.2, 3) == pytest.approx(0.301194211912202097, rel=1e-13)
    assert nearest_distance_cdf(0.2, 3) == pytest.approx(1 - 0.301194211912202097, rel=1e-13)
    x = np.linspace(0, 2, 50)
    assert np.all(np.diff(nearest_distance_ccdf(x, 3)) <= 0)
    with pytest.raises(ValueError):
        nearest_distance_cdf(-1.0, 3)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("xn", [0.05, 0.3, 1.2])
def test_marginalisation(n, xn):
    lam = 3.0
    if n == 2:
        val, _ = integrate.quad(lambda x1: joint_distance_pdf((x1, xn), lam), 0, xn,
                                epsabs=0, epsrel=1e-12)
    else:
        val, _ = integrate.dblquad(lambda x2, x1: joint_distance_pdf((x1, x2, xn), lam,
                                                                     strict=False),
                                   0, xn, lambda x1: x1, lambda x1: xn, epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(nth_distance_pdf(xn, n, lam), rel=1e-6)


@given(st.floats(0.01, 2), st.floats(0.001, 2), st.floats(0.1, 8))
def test_conditional_structure(x1, gap, lam):
    ratio = joint_distance_pdf((x1, x1 + gap), lam) / joint_distance_pdf((x1,), lam)
    assert ratio == pytest.approx(2 * lam * math.exp(-2 * lam * gap), rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sampling_matches_nth_pdf(n):
    xs = sample_ordered_distances(3, n, stream(40 + n, 3), size=100_000)[:, -1]
    hi = np.quantile(xs, 0.999)
    edges = np.linspace(0, hi, 51)
    observed, _ = np.histogram(xs, edges)
    cdf = [integrate.quad(nth_distance_pdf, max(a, 1e-12), b, args=(n, 3.0))[0]
           for a, b in zip(edges[:-1], edges[1:])]
    expected = np.array(cdf) * xs.size
    expected *= observed.sum() / expected.sum()
    assert stats.chisquare(observed, expected).pvalue > 0.01
