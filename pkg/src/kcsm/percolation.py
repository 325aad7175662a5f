"""
North-East oriented site percolation: clusters, ranges, depth-L survival
and crossing-based brackets for the critical density.

A NE path moves by ``+e1`` or ``+e2`` through occupied sites. Random
quadrants are generated layer by layer: layer ``m`` (sites at l1 distance
``m`` from the origin, ordered by first coordinate) consumes ``m + 1``
uniforms from the sample stream and a site is occupied iff its uniform is
below ``p``. The same seed therefore couples samples monotonically in both
``p`` and ``L``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .lattice import LatticeError, SpinConfig
from .rng import map_chunks, stream
from .stats import Curve, RateFit, fit_exponential_rate, wilson_interval

DEFAULT_CAP = 2**12


@dataclass(frozen=True)
class OrientedCluster:
    """Sites reachable from ``root`` by occupied NE paths.

    ``range`` is ``0`` for an empty cluster and ``1 + max |y - root|_1``
    otherwise. ``censored`` is set when exploration stopped at the cap or
    the cluster left the region through an occupied exterior (``escaped``).
    """

    root: tuple[int, int]
    members: frozenset = field(repr=False)
    range: int
    censored: bool = False
    escaped: bool = False

    @property
    def size(self) -> int:
        return len(self.members)


def ne_cluster(config: SpinConfig, root, cap: int = DEFAULT_CAP, exterior: int = 0) -> OrientedCluster:
    """Breadth-first search over ``+e1``/``+e2`` steps through occupied sites.

    Sites outside the configuration's region read as ``exterior``; with
    ``exterior=1`` a path that leaves the region is infinite and the cluster
    is flagged as escaped. Exploration stops at l1 distance ``cap - 1``.
    """
    region = config.region
    if region.d != 2:
        raise LatticeError("NE clusters live in two dimensions")
    root = tuple(int(c) for c in root)
    if not region.contains(root):
        raise LatticeError(f"root {root} outside the region")
    if not config[root]:
        return OrientedCluster(root, frozenset(), 0)
    seen = {root}
    todo = deque([root])
    far = 0
    censored = escaped = False
    while todo:
        y = todo.popleft()
        dist = (y[0] - root[0]) + (y[1] - root[1])
        far = max(far, dist)
        for z in ((y[0] + 1, y[1]), (y[0], y[1] + 1)):
            if not region.contains(z):
                if exterior:
                    escaped = censored = True
                continue
            if z in seen or not config[z]:
                continue
            if dist + 1 >= cap:
                censored = True
                continue
            seen.add(z)
            todo.append(z)
    return OrientedCluster(root, frozenset(seen), 1 + far, censored, escaped)


def cluster_range(config: SpinConfig, root, cap: int = DEFAULT_CAP, exterior: int = 0) -> tuple[int, bool]:
    """Range ``A_x`` of the NE cluster and whether it is censored."""
    c = ne_cluster(config, root, cap, exterior)
    return c.range, c.censored


# --------------------------------------------------------------------------- #
# Random quadrants
# --------------------------------------------------------------------------- #

@njit(cache=True, nogil=True)
def _quadrant(rng, p, L):
    """Grow the NE cluster of the origin in a random quadrant up to depth ``L``.

    Returns ``(depth, left, right)``: the deepest nonempty layer (``-1`` if
    the origin is empty) and the extreme first coordinates on layer ``L``
    (``-1`` when the layer is empty).
    """
    cur = np.zeros(L + 1, dtype=np.uint8)
    nxt = np.zeros(L + 1, dtype=np.uint8)
    if not rng.random() < p:
        return -1, -1, -1
    cur[0] = 1
    depth = 0
    for m in range(1, L + 1):
        alive = False
        for a in range(m + 1):
            occ = rng.random() < p
            reach = (a > 0 and cur[a - 1] == 1) or (a < m and cur[a] == 1)
            nxt[a] = 1 if (occ and reach) else 0
            if nxt[a]:
                alive = True
        if not alive:
            return depth, -1, -1
        depth = m
        for a in range(m + 1):
            cur[a] = nxt[a]
    left = -1
    right = -1
    for a in range(L + 1):
        if cur[a]:
            if left < 0:
                left = a
            right = a
    return depth, left, right


@dataclass(frozen=True)
class SliceRecord:
    """Depth-``L`` slice of the origin cluster in one sample."""

    L: int
    projection: frozenset
    right: int
    left: int

    @property
    def survived(self) -> bool:
        return bool(self.projection)


def slice_record(config: SpinConfig, L: int) -> SliceRecord:
    """Projection ``xi_0^(L)`` of an explicit configuration on ``{x1, x2 >= 0}``."""
    origin = config.region.origin
    cluster = ne_cluster(config, origin, cap=L + 1)
    proj = frozenset(y[0] - origin[0] for y in cluster.members if (y[0] - origin[0]) + (y[1] - origin[1]) == L)
    if not proj:
        return SliceRecord(L, proj, -1, -1)
    return SliceRecord(L, proj, max(proj), min(proj))


@dataclass(frozen=True, eq=False)
class SurvivalEstimate:
    p: float
    L: int
    n: int
    k: int
    ci: tuple[float, float]
    seed: int
    depth: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    @property
    def estimate(self) -> float:
        return self.k / self.n

    @property
    def sigma(self) -> float:
        e = self.estimate
        return float(np.sqrt(e * (1 - e) / self.n))

    @property
    def r_mean(self) -> float:
        r = self.right[self.right >= 0]
        return float(r.mean()) if r.size else float("nan")

    @property
    def l_mean(self) -> float:
        l = self.left[self.left >= 0]
        return float(l.mean()) if l.size else float("nan")

    @property
    def ranges(self) -> np.ndarray:
        """``A_0 = 1 + depth`` per sample (``0`` for an empty origin), capped at ``L + 1``."""
        return self.depth + 1

    def narrow_fraction(self, a: float) -> float:
        """Frequency of ``{survived and r_L <= a L}``."""
        return float(np.mean((self.right >= 0) & (self.right <= a * self.L)))

    def csv_row(self) -> list:
        return [self.p, self.L, self.n, self.k, self.estimate, self.ci[0], self.ci[1], self.r_mean, self.l_mean, self.seed]


SURVIVAL_HEADER = ["p", "L", "n", "survived", "estimate", "ci_lo", "ci_hi", "r_mean", "l_mean", "seed"]


def survival_probability(p: float, L: int, n_samples: int, seed: int, threads: int | None = None) -> SurvivalEstimate:
    """Monte Carlo estimate of ``mu(xi_0^(L) nonempty)`` with edge records."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if L < 0 or n_samples < 1:
        raise ValueError("need L >= 0 and n_samples >= 1")

    def work(a, b):
        out = np.empty((b - a, 3), dtype=np.int64)
        for i in range(a, b):
            out[i - a] = _quadrant(stream(seed, i), p, L)
        return out

    rec = np.concatenate(map_chunks(work, n_samples, threads))
    k = int(np.sum(rec[:, 2] >= 0))
    return SurvivalEstimate(p, L, n_samples, k, wilson_interval(k, n_samples), seed, rec[:, 0], rec[:, 1], rec[:, 2])


def range_tail(p: float, cap: int, n_samples: int, seed: int, threads: int | None = None) -> Curve:
    """Empirical ``mu(A_0 >= m)`` for ``m = 1..cap``."""
    est = survival_probability(p, cap - 1, n_samples, seed, threads)
    A = est.ranges
    m = np.arange(1, cap + 1)
    return Curve(m.astype(float), np.array([np.mean(A >= k) for k in m]), n_samples)


def range_tail_rate(p: float, cap: int, n_samples: int, seed: int, threads: int | None = None) -> RateFit:
    """Exponential rate of the ``A_0`` tail, fitted above the noise floor."""
    return fit_exponential_rate(range_tail(p, cap, n_samples, seed, threads), value_window=(0.0, 0.5))


# --------------------------------------------------------------------------- #
# Critical density brackets
# --------------------------------------------------------------------------- #

class NoCrossing(ValueError):
    pass


@dataclass(frozen=True)
class PcEstimate:
    """Crossing densities of depth-``L`` survival through ``level``.

    ``crossings[i]`` is the bisected density at ``L[i]``; ``grid_brackets[i]``
    the grid cell that contained it. The crossings grow with ``L`` towards
    the density where the infinite-depth survival equals ``level``, which
    lies above the critical density.
    """

    L: tuple[int, ...]
    crossings: tuple[float, ...]
    grid_brackets: tuple[tuple[float, float], ...]
    level: float
    estimates: dict = field(repr=False, default_factory=dict)

    @property
    def bracket(self) -> tuple[float, float]:
        return min(self.crossings), max(self.crossings)


def pc_estimate(
    Ls: Sequence[int],
    p_grid: Sequence[float],
    n_samples: int,
    seed: int,
    level: float = 0.5,
    iterations: int = 12,
    threads: int | None = None,
) -> PcEstimate:
    """Bisect, for each depth, the density where survival crosses ``level``.

    With a common seed the survival estimate is nondecreasing in ``p``
    sample by sample, so the bisection is well defined.
    """
    Ls = [int(L) for L in Ls]
    if any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L list must be increasing")
    grid = sorted(float(p) for p in p_grid)
    estimates = {}
    crossings, brackets = [], []
    for L in Ls:
        vals = []
        for p in grid:
            est = survival_probability(p, L, n_samples, seed, threads)
            estimates[(p, L)] = est
            vals.append(est.estimate)
        hi_idx = next((i for i, v in enumerate(vals) if v >= level), None)
        if hi_idx is None or hi_idx == 0:
            raise NoCrossing(f"grid does not bracket survival = {level} at L={L}")
        lo, hi = grid[hi_idx - 1], grid[hi_idx]
        brackets.append((lo, hi))
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if survival_probability(mid, L, n_samples, seed, threads).estimate >= level:
                hi = mid
            else:
                lo = mid
        crossings.append(0.5 * (lo + hi))
    return PcEstimate(tuple(Ls), tuple(crossings), tuple(brackets), level, estimates)
