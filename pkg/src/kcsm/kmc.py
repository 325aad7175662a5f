"""
Continuous-time Glauber dynamics by kinetic Monte Carlo, persistence and
autocorrelation estimates, and the FA-1f test-function probe.

The simulation is uniformized: a global clock of rate ``N`` rings, a uniform
site is picked and, if its constraint holds, its spin is resampled from
Bernoulli(p). This has the same law as ``N`` independent unit-rate clocks.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from ._kernels import constraint_ok
from .lattice import (
    RESTRICTED,
    BoundaryCondition,
    DensityParams,
    LatticeError,
    ModelSpec,
    Region,
    SpinConfig,
    compile_rules,
)
from .rng import map_chunks, stream
from .stats import Curve, RateFit, fit_exponential_rate, wilson_intervals

GRID_FACTOR = 1.25


def geometric_grid(t_max: float, t_min: float = 0.05, factor: float = GRID_FACTOR) -> np.ndarray:
    """``0`` followed by ``t_min * factor**k`` up to and including ``t_max``."""
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    if t_max == 0:
        return np.zeros(1)
    n = int(math.floor(math.log(t_max / t_min) / math.log(factor) + 1e-12)) + 1 if t_max >= t_min else 0
    pts = t_min * factor ** np.arange(n)
    pts = pts[pts < t_max]
    return np.concatenate([[0.0], pts, [t_max]])


# --------------------------------------------------------------------------- #
# Kernels
# --------------------------------------------------------------------------- #

@njit(cache=True, nogil=True)
def _trajectory(state, nbr, valid, p, t_max, rng, grid, tracked, init, surv, corr, occ):
    n = state.size
    first = np.full(n, np.inf)
    t = 0.0
    g = 0
    events = 0
    while True:
        t_next = t + rng.exponential(1.0 / n)
        while g < grid.size and grid[g] < t_next and grid[g] <= t_max:
            for k in range(tracked.size):
                corr[g] += init[k] * state[tracked[k]]
                occ[g] += state[tracked[k]]
            g += 1
        if t_next > t_max:
            break
        t = t_next
        events += 1
        x = rng.integers(0, n)
        if constraint_ok(state, nbr, valid, x):
            new = 1 if rng.random() < p else 0
            if new != state[x]:
                state[x] = new
                if first[x] == np.inf:
                    first[x] = t
    for g in range(grid.size):
        for k in range(tracked.size):
            if first[tracked[k]] > grid[g]:
                surv[g] += 1
    return events


@njit(cache=True, nogil=True)
def _first_change(state, nbr, valid, p, t_max, rng, origin):
    n = state.size
    t = 0.0
    while True:
        t += rng.exponential(1.0 / n)
        if t > t_max:
            return np.inf
        x = rng.integers(0, n)
        if constraint_ok(state, nbr, valid, x):
            new = 1 if rng.random() < p else 0
            if new != state[x]:
                if x == origin:
                    return t
                state[x] = new


def _rules(model, region, bc):
    if bc.mode == RESTRICTED:
        raise LatticeError("kinetic Monte Carlo needs a frozen-halo or minimal-empty boundary")
    return compile_rules(model, region, bc)


def _initial(rng, n, p, initial: SpinConfig | None):
    if initial is not None:
        return initial.to_array()
    return (rng.random(n) < p).astype(np.uint8)


def centre(region: Region) -> tuple[int, ...]:
    return tuple(o + s // 2 for o, s in zip(region.origin, region.sides))


def _site_list(region: Region, sites) -> np.ndarray:
    if sites is None or sites == "all":
        return np.arange(region.n_sites, dtype=np.int64)
    return np.array([region.index(tuple(s)) for s in sites], dtype=np.int64)


# --------------------------------------------------------------------------- #
# Single trajectories
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class TrajectoryObservables:
    """Per-trajectory accumulators on the time grid.

    ``survival[g]`` counts tracked sites whose value has not changed by
    ``t_grid[g]``; ``autocorr[g]`` sums ``eta_x(0) eta_x(t_grid[g])`` over the
    tracked sites.
    """

    t_grid: np.ndarray
    survival: np.ndarray
    autocorr: np.ndarray
    n_tracked: int
    events: int
    final_hash: str
    seed: int
    final: SpinConfig = field(repr=False)
    initial: SpinConfig = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryObservables):
            return NotImplemented
        return (
            np.array_equal(self.t_grid, other.t_grid)
            and np.array_equal(self.survival, other.survival)
            and np.array_equal(self.autocorr, other.autocorr)
            and (self.n_tracked, self.events, self.final_hash, self.seed)
            == (other.n_tracked, other.events, other.final_hash, other.seed)
        )


def config_hash(bits: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(bits, dtype=np.uint8).tobytes()).hexdigest()[:16]


def kmc_run(
    model: ModelSpec,
    region: Region,
    bc: BoundaryCondition,
    params: DensityParams,
    t_max: float,
    seed: int,
    tracked=None,
    t_grid=None,
    initial: SpinConfig | None = None,
    index: int = 0,
) -> TrajectoryObservables:
    """Simulate one trajectory on ``[0, t_max]``.

    The initial configuration is drawn from the product measure unless
    ``initial`` is given. ``tracked`` lists site coordinates (default: all
    sites). ``index`` selects the random stream, so independent trajectories
    of one experiment use ``index = 0, 1, ...``.
    """
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    rules = _rules(model, region, bc)
    grid = geometric_grid(t_max) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(grid > t_max) or np.any(np.diff(grid) < 0):
        raise ValueError("time grid must be sorted and within [0, t_max]")
    rng = stream(seed, index)
    state = _initial(rng, region.n_sites, params.p, initial)
    start = SpinConfig.from_array(region, state)
    sites = _site_list(region, tracked)
    init = state[sites].astype(np.float64)
    surv = np.zeros(grid.size, dtype=np.int64)
    corr = np.zeros(grid.size)
    occ = np.zeros(grid.size)
    events = _trajectory(state, rules.nbr, rules.valid, params.p, float(t_max), rng, grid, sites, init, surv, corr, occ)
    return TrajectoryObservables(
        grid, surv, corr, len(sites), int(events), config_hash(state), seed, SpinConfig.from_array(region, state), start
    )


# --------------------------------------------------------------------------- #
# Persistence
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class PersistenceCurve:
    t: np.ndarray
    counts: np.ndarray
    n_samples: int
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    seed: int

    @property
    def F(self) -> np.ndarray:
        return self.counts / self.n_samples

    @property
    def sigma(self) -> np.ndarray:
        F = self.F
        return np.sqrt(F * (1 - F) / self.n_samples)

    def curve(self) -> Curve:
        return Curve(self.t, self.F, self.n_samples)

    def rows(self) -> list[list]:
        return [[float(t), float(f), float(lo), float(hi)] for t, f, lo, hi in zip(self.t, self.F, self.ci_lo, self.ci_hi)]


def persistence_times(
    model: ModelSpec,
    region: Region,
    bc: BoundaryCondition,
    params: DensityParams,
    t_max: float,
    n_samples: int,
    seed: int,
    origin=None,
    threads: int | None = None,
) -> np.ndarray:
    """First time the origin spin changes value, per equilibrium trajectory.

    ``inf`` marks trajectories where it never changes before ``t_max``.
    """
    rules = _rules(model, region, bc)
    o = region.index(centre(region) if origin is None else tuple(origin))
    n, p = region.n_sites, params.p

    def work(a, b):
        out = np.empty(b - a)
        for i in range(a, b):
            rng = stream(seed, i)
            state = _initial(rng, n, p, None)
            out[i - a] = _first_change(state, rules.nbr, rules.valid, p, float(t_max), rng, o)
        return out

    return np.concatenate(map_chunks(work, n_samples, threads))


def persistence_curve(
    model: ModelSpec,
    region: Region,
    bc: BoundaryCondition,
    params: DensityParams,
    t_grid,
    n_samples: int,
    seed: int,
    origin=None,
    threads: int | None = None,
) -> PersistenceCurve:
    """``F(t)``: fraction of trajectories whose origin spin kept its value up to ``t``."""
    grid = np.asarray(t_grid, dtype=float)
    tau = persistence_times(model, region, bc, params, float(grid[-1]), n_samples, seed, origin, threads)
    counts = np.array([int(np.sum(tau > t)) for t in grid], dtype=np.int64)
    lo, hi = wilson_intervals(counts, n_samples)
    return PersistenceCurve(grid, counts, n_samples, lo, hi, seed)


# --------------------------------------------------------------------------- #
# Autocorrelation
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class Autocorrelation:
    """Normalized equilibrium autocorrelation ``C(t) / pq`` of one site.

    ``batches`` holds the raw sums of each sample batch so that resampling
    error estimates can be formed.
    """

    t: np.ndarray
    value: np.ndarray
    n_samples: int
    pq: float
    batches: list = field(default_factory=list, repr=False)

    def curve(self) -> Curve:
        return Curve(self.t, self.value, self.n_samples)

    def leave_one_out(self):
        """Curves with one batch removed at a time."""
        total = [sum(b[k] for b in self.batches) for k in range(4)]
        for b in self.batches:
            rest = [total[k] - b[k] for k in range(4)]
            yield Curve(self.t, _normalized(*rest, self.pq), None)


def _normalized(corr, occ, start, count, pq):
    return (corr / count - (start / count) * (occ / count)) / pq


def autocorrelation_curve(
    model: ModelSpec,
    region: Region,
    bc: BoundaryCondition,
    params: DensityParams,
    t_max: float,
    n_samples: int,
    seed: int,
    site=None,
    t_grid=None,
    n_batches: int = 20,
    threads: int | None = None,
) -> Autocorrelation:
    """``Cov(eta_x(0), eta_x(t)) / (pq)`` estimated over equilibrium trajectories.

    The covariance uses the empirical means at both times, which removes the
    constant offset that subtracting the exact ``p^2`` leaves at finite ``n``.
    """
    q = params.q
    if q <= 0 or q >= 1:
        raise ValueError("autocorrelation is degenerate for q in {0, 1}")
    rules = _rules(model, region, bc)
    grid = geometric_grid(t_max, t_min=0.02) if t_grid is None else np.asarray(t_grid, dtype=float)
    x = np.array([region.index(centre(region) if site is None else tuple(site))], dtype=np.int64)
    n, p = region.n_sites, params.p

    def work(a, b):
        corr = np.zeros(grid.size)
        occ = np.zeros(grid.size)
        surv = np.zeros(grid.size, dtype=np.int64)
        start = 0.0
        for i in range(a, b):
            rng = stream(seed, i)
            state = _initial(rng, n, p, None)
            init = state[x].astype(np.float64)
            start += init[0]
            _trajectory(state, rules.nbr, rules.valid, p, float(t_max), rng, grid, x, init, surv, corr, occ)
        return corr, occ, start, b - a

    chunk = max(1, -(-n_samples // n_batches))
    batches = map_chunks(work, n_samples, threads, chunk=chunk)
    total = [sum(b[k] for b in batches) for k in range(4)]
    return Autocorrelation(grid, _normalized(*total, p * q), n_samples, p * q, batches)


def autocorrelation_rate(
    model: ModelSpec,
    region: Region,
    bc: BoundaryCondition,
    params: DensityParams,
    t_max: float,
    n_samples: int,
    seed: int,
    site=None,
    value_window=(0.05, 0.9),
    threads: int | None = None,
) -> RateFit:
    """Exponential decay rate of the normalized autocorrelation on ``value_window``.

    Values at different times come from the same trajectories, so the
    regression error understates the uncertainty; the reported standard
    error is a jackknife over sample batches instead.
    """
    ac = autocorrelation_curve(model, region, bc, params, t_max, n_samples, seed, site, threads=threads)
    fit = fit_exponential_rate(ac.curve(), value_window=value_window)
    lo, hi = fit.window
    rates = np.array([fit_exponential_rate(c, window=(lo, hi)).rate for c in ac.leave_one_out()])
    B = len(rates)
    se = float(np.sqrt((B - 1) / B * np.sum((rates - rates.mean()) ** 2))) if B > 1 else fit.stderr
    return replace(fit, stderr=se)


# --------------------------------------------------------------------------- #
# FA-1f test-function probe
# --------------------------------------------------------------------------- #

def xi_scale(q: float, d: int, lam0: float = 1.0) -> float:
    """``l_q = lam0 (-1 / log(1 - q))^{1/d}``, about ``lam0 q^{-1/d}`` for small ``q``."""
    return lam0 * (-1.0 / math.log1p(-q)) ** (1.0 / d)


def xi_distribution(q: float, d: int, side: int) -> np.ndarray:
    """``mu(xi = k)`` for ``k = 0..side`` in a box of the given side.

    ``xi`` is the side of the largest fully occupied corner cube, so
    ``mu(xi = k) = p^{k^d} - p^{(k+1)^d}`` below ``side`` and ``p^{side^d}`` at it.
    """
    p = 1.0 - q
    k = np.arange(side + 1, dtype=float)
    out = p ** (k**d) - p ** ((k + 1) ** d)
    out[side] = p ** (side**d)
    return out


def _bump(a):
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    inside = (a > 0.25) & (a < 0.75)
    u = a[inside]
    out[inside] = np.exp(-1.0 / ((u - 0.25) * (0.75 - u) * 16.0))
    return out


def make_profile(ell: float, d: int, side: int):
    """Profile ``g`` sampled at ``k / ell`` for ``k = 0..side``.

    ``g(a) = s * bump(a) * (a - m)`` with support in ``[1/4, 3/4]``; ``m`` and
    ``s`` make the quadratures ``sum_k w_k g_k = 0`` and ``sum_k w_k g_k^2 = 1``
    hold with ``w_k = a^{d-1} e^{-a^d} / ell`` and ``a = k / ell``.
    """
    a = np.arange(side + 1) / ell
    w = a ** (d - 1) * np.exp(-(a**d)) / ell
    b = _bump(a)
    if np.count_nonzero(b) < 2:
        raise ValueError("l_q too small: the profile needs two lattice points in [1/4, 3/4]")
    m = np.sum(w * b * a) / np.sum(w * b)
    g = b * (a - m)
    g /= math.sqrt(np.sum(w * g * g))
    return a, w, g


@njit(cache=True, nogil=True)
def _probe_sample(state, nbr, valid, layer, gv, side):
    n = state.size
    cnt = np.zeros(side + 1, dtype=np.int64)
    last = np.full(side + 1, -1, dtype=np.int64)
    for x in range(n):
        if state[x] == 0:
            cnt[layer[x]] += 1
            last[layer[x]] = x
    xi = side
    for k in range(side):
        if cnt[k] > 0:
            xi = k
            break
    total = 0.0
    for x in range(n):
        if state[x] == 1 and layer[x] < xi and constraint_ok(state, nbr, valid, x):
            diff = gv[layer[x]] - gv[xi]
            total += diff * diff
    if xi < side and cnt[xi] == 1:
        x = last[xi]
        if constraint_ok(state, nbr, valid, x):
            nxt = side
            for k in range(xi + 1, side):
                if cnt[k] > 0:
                    nxt = k
                    break
            diff = gv[nxt] - gv[xi]
            total += diff * diff
    return xi, total


@dataclass(frozen=True, eq=False)
class TestFunctionProbe:
    """Variational upper bound ``D(f) / Var(f)`` for ``f = g(xi / l_q)``."""

    __test__ = False

    d: int
    q: float
    ell: float
    side: int
    alpha: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    variance: float
    dirichlet: float
    dirichlet_se: float
    xi_counts: np.ndarray
    n_samples: int
    seed: int

    @property
    def value(self) -> float:
        return self.dirichlet / self.variance

    @property
    def value_se(self) -> float:
        return self.dirichlet_se / self.variance

    @property
    def normalizations(self) -> tuple[float, float]:
        return float(np.sum(self.weights * self.g)), float(np.sum(self.weights * self.g**2))


def fa1f_bound_probe(
    d: int,
    q: float,
    n_samples: int,
    seed: int,
    side: int | None = None,
    lam0: float = 1.0,
    threads: int | None = None,
) -> TestFunctionProbe:
    """Test-function bound on the FA-1f gap at vacancy density ``q``.

    Works in the box ``{0..side-1}^d`` with every outside site occupied
    except the minimal-boundary empty site at the far face. ``xi`` is the
    side of the largest occupied corner cube. ``Var(f)`` follows exactly
    from the ``xi`` law; ``D(f)`` is a Monte Carlo average of
    ``sum_x c_x pq (f(sigma^x) - f(sigma))^2`` over equilibrium samples, so
    the returned value bounds the finite-box gap from above up to sampling
    error. The default side is ``ceil(4 l_q)``.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    ell = xi_scale(q, d, lam0)
    side = int(math.ceil(4 * ell)) if side is None else int(side)
    if side < 2 * ell:
        raise ValueError(f"box side {side} smaller than 2 l_q = {2 * ell:.2f}")
    region = Region.cube(side, d)
    rules = compile_rules(ModelSpec.fa(1, d), region, BoundaryCondition.minimal())
    layer = region.coords.max(axis=1).astype(np.int64)
    alpha, w, g = make_profile(ell, d, side)

    law = xi_distribution(q, d, side)
    mean = law @ g
    variance = float(law @ (g - mean) ** 2)

    p = 1.0 - q
    n = region.n_sites

    def work(a, b):
        vals = np.empty(b - a)
        xis = np.zeros(side + 1, dtype=np.int64)
        for i in range(a, b):
            state = (stream(seed, i).random(n) < p).astype(np.uint8)
            xi, total = _probe_sample(state, rules.nbr, rules.valid, layer, g, side)
            vals[i - a] = total
            xis[xi] += 1
        return vals, xis

    parts = map_chunks(work, n_samples, threads)
    vals = np.concatenate([v for v, _ in parts]) * p * q
    xi_counts = np.sum([c for _, c in parts], axis=0)
    se = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf
    return TestFunctionProbe(d, q, ell, side, alpha, g, w, variance, float(vals.mean()), se, xi_counts, n_samples, seed)
