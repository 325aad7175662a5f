import numpy as np
import pytest

from kcsm.rng import map_chunks, resolve_threads, stream
from kcsm.stats import Curve, InsufficientData, fit_exponential_rate, wilson_interval


def test_exact_exponential():
    t = np.linspace(0, 3, 30)
    fit = fit_exponential_rate(Curve(t, np.exp(-2 * t)))
    assert fit.rate == pytest.approx(2.0, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.window == (0.0, 3.0)


def test_noisy_exponential_within_three_se(rng):
    t = np.linspace(0.1, 4, 40)
    n = 20000
    F = rng.binomial(n, np.exp(-0.8 * t)) / n
    fit = fit_exponential_rate(Curve(t, F, n))
    assert abs(fit.rate - 0.8) < 3 * fit.stderr
    assert 0 <= fit.r2 <= 1


def test_power_law_is_poor_fit():
    t = np.geomspace(0.05, 500, 40)
    fit = fit_exponential_rate(Curve(t, 1 / (1 + t)))
    assert fit.r2 < 0.9 and fit.poor


def test_insufficient_points():
    with pytest.raises(InsufficientData):
        fit_exponential_rate(Curve(np.arange(3.0), np.exp(-np.arange(3.0))))
    # noise floor 10/sqrt(n) = 0.1 drops the tail
    t = np.arange(10.0)
    with pytest.raises(InsufficientData):
        fit_exponential_rate(Curve(t, np.exp(-t), 10000))


def test_window_restriction():
    t = np.linspace(0, 10, 101)
    y = np.where(t < 5, np.exp(-t), np.exp(-5) * np.exp(-3 * (t - 5)))
    assert fit_exponential_rate(Curve(t, y), window=(0, 4.9)).rate == pytest.approx(1.0)
    assert fit_exponential_rate(Curve(t, y), window=(5.1, 10)).rate == pytest.approx(3.0)


def test_wilson_interval_edges():
    assert wilson_interval(0, 100)[0] == 0.0
    assert wilson_interval(100, 100)[1] == 1.0
    lo, hi = wilson_interval(30, 100)
    assert lo < 0.3 < hi


def test_streams_are_keyed():
    a = stream(7, 3).random(4)
    assert np.array_equal(a, stream(7, 3).random(4))
    assert not np.array_equal(a, stream(7, 4).random(4))
    assert not np.array_equal(a, stream(8, 3).random(4))
    assert not np.array_equal(a, stream(7, 3, salt=1).random(4))


def test_map_chunks_order(monkeypatch):
    out = map_chunks(lambda a, b: list(range(a, b)), 10, threads=3, chunk=3)
    assert out == [[0, 1, 2], [3, 4, 5], [6, 7, 8], [9]]
    monkeypatch.setenv("KCSM_THREADS", "4")
    assert resolve_threads() == 4
    assert resolve_threads(2) == 2
