"""Small statistical helpers shared by the Monte Carlo modules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return max(0.0, float(ci.low)), min(1.0, float(ci.high))


def wilson_intervals(k, n: int, confidence: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    bounds = np.array([wilson_interval(int(ki), n, confidence) for ki in np.ravel(k)])
    return bounds[:, 0], bounds[:, 1]


@dataclass(frozen=True)
class Curve:
    """Sampled decay curve ``value(t)``; ``n_samples`` enables binomial weights."""

    t: np.ndarray
    value: np.ndarray
    n_samples: int | None = None


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    window: tuple[float, float]
    r2: float
    stderr: float
    n_points: int

    @property
    def poor(self) -> bool:
        return self.r2 < 0.9


class InsufficientData(ValueError):
    pass


def fit_exponential_rate(curve: Curve, window=None, value_window=None, min_points: int = 5) -> RateFit:
    """Weighted least squares of ``log value = a - rate * t``.

    ``window`` restricts by time, ``value_window`` by value. Points at or below
    the noise floor ``10/sqrt(n)`` are dropped when ``n_samples`` is known; the
    weights are then the delta-method inverse variances ``n F / (1 - F)``.
    """
    t = np.asarray(curve.t, dtype=float)
    y = np.asarray(curve.value, dtype=float)
    keep = y > 0
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    if value_window is not None:
        keep &= (y >= value_window[0]) & (y <= value_window[1])
    n = curve.n_samples
    if n:
        keep &= y > 10.0 / np.sqrt(n)
    if keep.sum() < min_points:
        raise InsufficientData(f"only {int(keep.sum())} usable points, need {min_points}")
    t, y = t[keep], y[keep]
    if n:
        w = n * y / np.maximum(1.0 - y, 1.0 / n)
    else:
        w = np.ones_like(y)
    X = np.column_stack([np.ones_like(t), -t])
    ly = np.log(y)
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], ly * sw, rcond=None)
    resid = ly - X @ beta
    ss_res = float(np.sum(w * resid**2))
    mean = np.sum(w * ly) / np.sum(w)
    ss_tot = float(np.sum(w * (ly - mean) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(1, len(t) - 2)
    cov = np.linalg.inv((X * w[:, None]).T @ X) * (ss_res / dof)
    return RateFit(
        rate=float(beta[1]),
        intercept=float(beta[0]),
        window=(float(t[0]), float(t[-1])),
        r2=float(min(1.0, max(0.0, r2))),
        stderr=float(np.sqrt(max(cov[1, 1], 0.0))),
        n_points=int(len(t)),
    )
