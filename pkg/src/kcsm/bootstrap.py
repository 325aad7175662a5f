"""
Bootstrap map, closure, internal spanning and spanning-probability scans.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import (
    BoundaryCondition,
    ModelSpec,
    Region,
    SpinConfig,
    compile_rules,
)
from .rng import map_chunks, stream
from .stats import wilson_interval


@dataclass(frozen=True)
class ClosureResult:
    config: SpinConfig
    steps: int

    @property
    def emptied(self) -> bool:
        return self.config.bits == 0


@dataclass(frozen=True)
class SpanningEstimate:
    model: str
    d: int
    L: int
    q: float
    n: int
    k: int
    ci: tuple[float, float]
    seed: int

    @property
    def estimate(self) -> float:
        return self.k / self.n

    @property
    def sigma(self) -> float:
        """Binomial standard error of the estimate."""
        e = self.estimate
        return float(np.sqrt(e * (1 - e) / self.n))

    def csv_row(self) -> list:
        return [self.model, self.d, self.L, self.q, self.n, self.k, self.estimate, self.ci[0], self.ci[1], self.seed]


SPANNING_HEADER = ["model", "d", "L", "q", "n", "k", "estimate", "ci_lo", "ci_hi", "seed"]


class NotFound(LookupError):
    pass


@dataclass(frozen=True)
class CriticalLength:
    L: int
    lower: SpanningEstimate | None
    upper: SpanningEstimate
    estimates: dict = field(default_factory=dict)


def bootstrap_step(model: ModelSpec, config: SpinConfig, bc: BoundaryCondition) -> SpinConfig:
    """One parallel application of ``T``: a site empties if its constraint holds."""
    rules = compile_rules(model, config.region, bc)
    bits = config.bits
    out = bits
    for i in range(config.region.n_sites):
        if (bits >> i) & 1 and rules.satisfied(bits, i):
            out &= ~(1 << i)
    return SpinConfig(config.region, out)


def bootstrap_closure(model: ModelSpec, config: SpinConfig, bc: BoundaryCondition) -> ClosureResult:
    """Iterate the bootstrap map to its fixed point, counting effective steps."""
    steps = 0
    while True:
        nxt = bootstrap_step(model, config, bc)
        if nxt == config:
            return ClosureResult(config, steps)
        config = nxt
        steps += 1


def _occupied_rules(model: ModelSpec, region: Region):
    rules = compile_rules(model, region, BoundaryCondition.occupied())
    ptr, idx = _kernels.dependents_csr(rules)
    return rules, ptr, idx


def is_internally_spanned(model: ModelSpec, region: Region, config: SpinConfig) -> bool:
    """True iff the closure with an occupied exterior empties ``region``.

    For increasing constraints this is the same as reaching the empty
    configuration by legal moves inside the region (see
    :func:`spanned_by_moves`).
    """
    if config.region.sides != region.sides:
        raise ValueError("configuration does not live on the region")
    rules, ptr, idx = _occupied_rules(model, region)
    state = config.to_array()
    return _kernels.closure_inplace(state, rules.nbr, rules.valid, ptr, idx) == region.n_sites


def is_spanned_with_empty_surroundings(model: ModelSpec, region: Region, config: SpinConfig) -> bool:
    """True iff the closure empties ``region`` when every outside site is empty.

    This is the weaker notion used when a block is surrounded by good blocks;
    every internally spanned configuration also satisfies it.
    """
    rules = compile_rules(model, region, BoundaryCondition.empty())
    ptr, idx = _kernels.dependents_csr(rules)
    state = config.to_array()
    return _kernels.closure_inplace(state, rules.nbr, rules.valid, ptr, idx) == region.n_sites


def spanned_by_moves(model: ModelSpec, region: Region, config: SpinConfig) -> bool:
    """Breadth-first search over legal moves with an occupied exterior.

    Literal reading of internal spanning; exponential in the worst case and
    meant as an oracle on small regions.
    """
    rules = compile_rules(model, region, BoundaryCondition.occupied())
    start = config.bits
    if start == 0:
        return True
    seen = {start}
    todo = deque([start])
    n = region.n_sites
    while todo:
        s = todo.popleft()
        for i in range(n):
            if rules.satisfied(s, i):
                t = s ^ (1 << i)
                if t == 0:
                    return True
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
    return False


def move_reachable_from_empty(model: ModelSpec, region: Region) -> set[int]:
    """All packed states connected to the empty state by legal moves."""
    rules = compile_rules(model, region, BoundaryCondition.occupied())
    seen = {0}
    todo = deque([0])
    while todo:
        s = todo.popleft()
        for i in range(region.n_sites):
            if rules.satisfied(s, i):
                t = s ^ (1 << i)
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
    return seen


def spanning_probability(
    model: ModelSpec,
    L: int,
    q: float,
    n_samples: int,
    seed: int,
    threads: int | None = None,
    exterior: int = 1,
) -> SpanningEstimate:
    """Monte Carlo estimate of ``mu(Q^d(L) is internally spanned)``.

    Sample ``i`` reads uniforms from ``stream(seed, i)`` and a site is occupied
    iff its uniform is below ``p``. Using the same seed across densities
    therefore couples the samples monotonically in ``q``.

    ``exterior=0`` instead counts configurations emptied when the surrounding
    sites are all empty (see :func:`is_spanned_with_empty_surroundings`).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    region = Region.cube(L, model.d)
    rules = compile_rules(model, region, BoundaryCondition.frozen(exterior))
    ptr, idx = _kernels.dependents_csr(rules)
    n = region.n_sites
    p = 1.0 - q

    def work(a, b):
        hits = 0
        for i in range(a, b):
            state = (stream(seed, i).random(n) < p).astype(np.uint8)
            if _kernels.closure_inplace(state, rules.nbr, rules.valid, ptr, idx) == n:
                hits += 1
        return hits

    k = sum(map_chunks(work, n_samples, threads))
    return SpanningEstimate(model.name, model.d, L, q, n_samples, k, wilson_interval(k, n_samples), seed)


def critical_length(
    model: ModelSpec,
    q: float,
    target: float,
    L_max: int,
    n_samples: int,
    seed: int,
    threads: int | None = None,
) -> CriticalLength:
    """Smallest ``L <= L_max`` whose estimated spanning probability reaches ``target``.

    Bisection assumes the spanning probability is nondecreasing in ``L``;
    all evaluated estimates are returned for inspection.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    cache: dict[int, SpanningEstimate] = {}

    def est(L):
        if L not in cache:
            cache[L] = spanning_probability(model, L, q, n_samples, seed, threads)
        return cache[L]

    if est(L_max).estimate < target:
        raise NotFound(f"I(L_max={L_max}, q={q}) = {cache[L_max].estimate:.4f} < {target}")
    lo, hi = 0, L_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if est(mid).estimate >= target:
            hi = mid
        else:
            lo = mid
    return CriticalLength(hi, cache.get(lo), cache[hi], dict(sorted(cache.items())))
