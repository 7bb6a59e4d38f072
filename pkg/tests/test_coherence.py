from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qloss.coherence import (
    DecayFit,
    DecaySeries,
    dephasing_advisory,
    fit_exponential_decay,
    fit_ramsey,
    fit_series,
    kde,
    sample_stats,
    silverman_bandwidth,
    synthetic_series,
)
from qloss.errors import NoDecayError


def _exp(t, T, A=1.0, B=0.0):
    return A * np.exp(-t / T) + B


def _ramsey(t, T, delta, phi=0.0, A=0.5, B=0.5):
    return A * np.exp(-t / T) * np.cos(2 * np.pi * delta * t + phi) + B


def test_exact_exponential():
    t = np.arange(0, 251, 10.0)
    fit = fit_exponential_decay(DecaySeries(t, _exp(t, 50.0)))
    assert fit.T == pytest.approx(50.0, abs=1e-8)
    assert fit.A == pytest.approx(1.0, abs=1e-8)
    assert fit.B == pytest.approx(0.0, abs=1e-8)


def test_exact_exponential_with_offset():
    t = np.arange(0, 501, 10.0)
    fit = fit_exponential_decay(DecaySeries(t, _exp(t, 104.3, 0.9, 0.05)))
    assert fit.T == pytest.approx(104.3, rel=1e-8)
    assert fit.A == pytest.approx(0.9, rel=1e-8)


def test_flat_series_has_no_decay():
    with pytest.raises(NoDecayError):
        fit_exponential_decay(DecaySeries(np.arange(10.0), np.full(10, 0.5)))


def test_exact_ramsey():
    t = np.linspace(0, 200, 101)
    fit = fit_ramsey(DecaySeries(t, _ramsey(t, 63.8, 0.1, 0.3)))
    assert fit.flags == ()
    assert fit.T == pytest.approx(63.8, rel=1e-6)
    assert fit.detuning_mhz == pytest.approx(0.1, rel=1e-6)
    assert fit.phase == pytest.approx(0.3, abs=1e-6)
    assert fit.A == pytest.approx(0.5, rel=1e-6)


def test_zero_detuning_falls_back():
    t = np.linspace(0, 200, 101)
    fit = fit_ramsey(DecaySeries(t, _ramsey(t, 63.8, 0.0)))
    assert "no_oscillation" in fit.flags
    assert fit.detuning_mhz == 0.0
    assert fit.T == pytest.approx(63.8, rel=1e-6)


def test_noisy_ramsey_mostly_within_five_percent():
    t = np.linspace(0, 200, 60)
    hits = 0
    for seed in range(100):
        s = synthetic_series("Ramsey", 63.8, t, A=0.5, B=0.5, detuning_mhz=0.1, phase=0.3,
                             noise=0.02, seed=seed)
        hits += abs(fit_ramsey(s).T / 63.8 - 1) < 0.05
    # 2% noise gives a Cramer-Rao SD of about 3.4% on T here
    assert hits >= 75


def _crlb_sd_T(t, T, A, B, sigma):
    """Cramer-Rao bound on SD(T) for the exponential model with additive noise."""
    e = np.exp(-t / T)
    J = np.column_stack([e, A * t / T**2 * e, np.ones_like(t)])
    return math.sqrt(np.linalg.inv(J.T @ J / sigma**2)[1, 1])


def test_exponential_fit_is_efficient():
    t = np.linspace(0, 250, 60)
    T, sigma = 50.0, 0.05
    rng = np.random.default_rng(11)
    est = [fit_exponential_decay(DecaySeries(t, np.clip(_exp(t, T) + sigma * rng.standard_normal(t.size),
                                                        -0.1, 1.1))).T for _ in range(300)]
    bound = _crlb_sd_T(t, T, 1.0, 0.0, sigma)
    assert np.std(est, ddof=1) == pytest.approx(bound, rel=0.25)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.floats(20, 120), noise=st.floats(0.0, 0.05))
def test_fit_never_worse_than_start(seed, T, noise):
    t = np.linspace(0, 300, 40)
    s = synthetic_series("T1", T, t, noise=noise, seed=seed)
    fit = fit_exponential_decay(s)
    assert fit.cost <= fit.initial_cost * (1 + 1e-12)


@pytest.mark.parametrize("k", [0.01, 3.0, 250.0])
def test_time_rescaling(k):
    t = np.linspace(0, 200, 81)
    y = _ramsey(t, 63.8, 0.1, 0.3) + 0.01 * np.random.default_rng(0).standard_normal(t.size)
    a = fit_ramsey(DecaySeries(t, y))
    b = fit_ramsey(DecaySeries(k * t, y))
    assert b.T == pytest.approx(k * a.T, rel=1e-7)
    assert b.detuning_mhz == pytest.approx(a.detuning_mhz / k, rel=1e-7)
    assert b.A == pytest.approx(a.A, rel=1e-7)
    assert b.B == pytest.approx(a.B, rel=1e-7)
    z = synthetic_series("T1", 50.0, t, noise=0.01, seed=1).populations
    e1 = fit_exponential_decay(DecaySeries(t, z))
    e2 = fit_exponential_decay(DecaySeries(k * t, z))
    assert e2.T == pytest.approx(k * e1.T, rel=1e-7)
    assert e2.A == pytest.approx(e1.A, rel=1e-7)


def test_sd_shrinks_with_averaging():
    t = np.linspace(0, 250, 60)
    rng = np.random.default_rng(7)
    sds = {}
    for m in (1, 4, 16):
        noise = 0.05 * rng.standard_normal((m, t.size)).mean(axis=0)
        sds[m] = fit_exponential_decay(DecaySeries(t, _exp(t, 50.0) + noise)).sd["T"]
    for m in (4, 16):
        assert sds[1] / sds[m] == pytest.approx(math.sqrt(m), rel=0.30)


def test_dephasing_advisory():
    t1 = DecayFit("T1", 50.0, 1, 0)
    assert dephasing_advisory(t1, DecayFit("Ramsey", 90.0, 1, 0)) is None
    msg = dephasing_advisory(t1, DecayFit("Echo", 120.0, 1, 0))
    assert msg and "exceeds" in msg


def test_series_validation():
    with pytest.raises(ValueError, match="increasing"):
        DecaySeries([0, 2, 1, 3], [1, 0.8, 0.7, 0.6])
    with pytest.raises(ValueError, match="at least 4"):
        DecaySeries([0, 1, 2], [1, 0.8, 0.7])
    with pytest.raises(ValueError):
        fit_series(DecaySeries([0, 1, 2, 3], [1, 0.8, 0.7, 0.6]), "Rabi")


def test_sample_stats_examples():
    s = sample_stats([58, 58, 58])
    assert (s.mean, s.sd) == (58.0, 0.0)
    s = sample_stats([90, 100, 110])
    assert s.mean == 100.0 and s.sd == pytest.approx(10.0) and s.rsd == pytest.approx(0.10)
    assert (s.q1, s.median, s.q3) == (95.0, 100.0, 105.0)
    with pytest.raises(ValueError):
        sample_stats([])


def test_sample_stats_normal_draws():
    x = np.random.default_rng(218).normal(58.0, 13.2, 218)
    s = sample_stats(x)
    assert abs(s.mean - 58.0) <= 3 * 13.2 / math.sqrt(218)
    assert s.n == 218


def test_kde_single_kernel():
    c = kde([40.0], bandwidth=2.0, grid=np.linspace(30, 50, 201))
    k = int(np.argmax(c.density))
    assert c.x[k] == pytest.approx(40.0)
    assert c.density[k] == pytest.approx(1 / (2.0 * math.sqrt(2 * math.pi)), rel=1e-12)
    twice = kde([40.0, 40.0], bandwidth=2.0, grid=c.x)
    np.testing.assert_allclose(twice.density, c.density, rtol=1e-14)


def test_kde_matches_smoothed_mixture():
    # a single 500-sample estimate scatters by ~7% of the peak, so the
    # ensemble mean is compared against the kernel-smoothed mixture
    w, mus, sds = 0.4, (40.0, 70.0), (6.0, 10.0)
    grid = np.linspace(0, 110, 441)
    rng = np.random.default_rng(500)
    curves = []
    for _ in range(40):
        comp = rng.random(500) < w
        x = np.where(comp, rng.normal(mus[0], sds[0], 500), rng.normal(mus[1], sds[1], 500))
        c = kde(x, bandwidth=4.0, grid=grid)
        assert c.integral() == pytest.approx(1.0, abs=1e-3)
        curves.append(c.density)
    h = 4.0
    exact = (w * stats.norm.pdf(grid, mus[0], math.hypot(sds[0], h))
             + (1 - w) * stats.norm.pdf(grid, mus[1], math.hypot(sds[1], h)))
    assert np.max(np.abs(np.mean(curves, axis=0) - exact)) <= 0.03 * exact.max()


def test_kde_bandwidth_rules():
    x = np.array([1.0, 2.0, 4.0, 7.0, 11.0])
    iqr = 7.0 - 2.0
    assert silverman_bandwidth(x) == pytest.approx(0.9 * min(x.std(ddof=1), iqr / 1.34) * 5 ** -0.2)
    with pytest.raises(ValueError):
        kde(x, bandwidth=0.0)
