"""
Exact finite-volume generators, ergodic decomposition, spectral gaps,
variational ratios, the two-block chain and closed-form bound evaluators.

States are packed integers (bit ``i`` = site ``i``) so a region with ``N``
sites has at most ``2**N`` states. The generator is reversible with respect
to the product Bernoulli measure, and every spectral computation works on
the symmetrized matrix ``S = D^{1/2} L D^{-1/2}`` with ``D = diag(mu)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pyamg
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import lobpcg

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

MAX_SITES = 26
DENSE_MAX = 2**12
DENSE_LIMIT = 2**14


class NonErgodic(RuntimeError):
    """The chain has more than one ergodic component."""


class DegenerateInput(ValueError):
    pass


# --------------------------------------------------------------------------- #
# Generator
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Off-diagonal rates of ``L`` on an enumerated state set.

    ``rows[k] -> cols[k]`` at rate ``rates[k]``, and ``sites[k]`` is the
    flipped site. ``states`` maps state index to packed configuration and
    ``mu`` holds the stationary weights renormalized to the state set.
    """

    model: ModelSpec
    region: Region
    bc: BoundaryCondition
    params: DensityParams
    states: np.ndarray
    mu: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    rates: np.ndarray
    sites: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    def config(self, index: int) -> SpinConfig:
        return SpinConfig(self.region, int(self.states[index]))

    def index_of(self, config: SpinConfig) -> int:
        k = int(np.searchsorted(self.states, config.bits))
        if k >= self.n_states or self.states[k] != config.bits:
            raise KeyError("configuration not in the enumerated state set")
        return k

    def rate(self, i: int, j: int) -> float:
        hit = (self.rows == i) & (self.cols == j)
        return float(self.rates[hit].sum())

    def to_sparse(self) -> sp.csr_matrix:
        """``L`` as a CSR matrix with the diagonal filled in (rows sum to 0)."""
        n = self.n_states
        off = sp.csr_matrix((self.rates, (self.rows, self.cols)), shape=(n, n))
        out = np.asarray(off.sum(axis=1)).ravel()
        return (off - sp.diags(out)).tocsr()

    def symmetrized(self) -> sp.csr_matrix:
        """``S = D^{1/2} L D^{-1/2}``; ``-S`` is positive semidefinite."""
        if np.any(self.mu <= 0):
            raise DegenerateInput("stationary weights vanish; need 0 < q < 1")
        n = self.n_states
        log_mu = np.log(self.mu)
        vals = self.rates * np.exp(0.5 * (log_mu[self.rows] - log_mu[self.cols]))
        off = sp.csr_matrix((vals, (self.rows, self.cols)), shape=(n, n))
        out = np.zeros(n)
        np.add.at(out, self.rows, self.rates)
        return (off - sp.diags(out)).tocsr()

    def adjacency(self) -> sp.csr_matrix:
        n = self.n_states
        return sp.csr_matrix((np.ones(len(self.rows), dtype=np.int8), (self.rows, self.cols)), shape=(n, n))


def _product_weights(states: np.ndarray, n_sites: int, q: float) -> np.ndarray:
    ones = np.zeros(len(states), dtype=np.int64)
    for i in range(n_sites):
        ones += (states >> i) & 1
    p = 1.0 - q
    with np.errstate(divide="ignore"):
        w = np.exp(ones * np.log(p) + (n_sites - ones) * np.log(q)) if 0 < q < 1 else (
            np.where(ones == n_sites, 1.0, 0.0) if q == 0 else np.where(ones == 0, 1.0, 0.0)
        )
    return w


def _legal_edges(rules, states: np.ndarray):
    """Yield ``(site, source_mask)`` for every site; mask marks legal flips."""
    for i in range(rules.region.n_sites):
        yield i, rules.satisfied_many(states, i)


def build_generator(model: ModelSpec, region: Region, bc: BoundaryCondition, params: DensityParams) -> GeneratorMatrix:
    """Enumerate the state space of ``(model, region, bc)`` and its rates.

    A flip at ``x`` is present iff ``c_x`` holds; its rate is ``q`` when the
    site is occupied (it empties) and ``p`` when it is empty.
    """
    n = region.n_sites
    if n > MAX_SITES:
        raise LatticeError(f"{n} sites exceed the exact-enumeration limit of {MAX_SITES}")
    restricted = bc.mode == RESTRICTED
    rules = compile_rules(model, region, BoundaryCondition.occupied() if restricted else bc)
    states = np.arange(1 << n, dtype=np.int64)

    rows, cols, sites = [], [], []
    for i, ok in _legal_edges(rules, states):
        src = states[ok]
        rows.append(src)
        cols.append(src ^ (1 << i))
        sites.append(np.full(len(src), i, dtype=np.int64))
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    sites = np.concatenate(sites) if sites else np.zeros(0, dtype=np.int64)

    if restricted:
        adj = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(states), len(states)))
        _, labels = connected_components(adj, directed=False)
        keep = labels == labels[0]
        if keep.sum() < 2:
            raise LatticeError("the ergodic component of the empty configuration is trivial")
        new_index = np.full(len(states), -1, dtype=np.int64)
        new_index[keep] = np.arange(int(keep.sum()))
        edge_keep = keep[rows]
        rows, cols, sites = new_index[rows[edge_keep]], new_index[cols[edge_keep]], sites[edge_keep]
        states = states[keep]

    occupied = (states[rows] >> sites) & 1
    rates = np.where(occupied == 1, params.q, params.p)
    present = rates > 0
    rows, cols, sites, rates = rows[present], cols[present], sites[present], rates[present]

    mu = _product_weights(states, n, params.q)
    mu = mu / mu.sum()
    return GeneratorMatrix(model, region, bc, params, states, mu, rows, cols, rates.astype(float), sites)


# --------------------------------------------------------------------------- #
# Ergodic components
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Component:
    size: int
    representative: SpinConfig
    indices: np.ndarray = field(repr=False)


def _components_of(gen: GeneratorMatrix) -> list[Component]:
    n_comp, labels = connected_components(gen.adjacency(), directed=False)
    sizes = np.bincount(labels, minlength=n_comp)
    members = np.split(np.argsort(labels, kind="stable"), np.cumsum(sizes)[:-1])
    order = sorted(range(n_comp), key=lambda c: (-sizes[c], members[c][0]))
    return [Component(int(sizes[c]), gen.config(int(members[c][0])), members[c]) for c in order]


def ergodic_components(model: ModelSpec, region: Region, bc: BoundaryCondition) -> list[Component]:
    """Connected components of the legal-move graph, largest first.

    Legality does not depend on the flipped spin, so the move graph is
    undirected. Ties in size are broken by the smallest packed state.
    """
    return _components_of(build_generator(model, region, bc, DensityParams(0.5)))


# --------------------------------------------------------------------------- #
# Spectral gap
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class GapResult:
    """Spectral gap of ``-L`` on the largest ergodic component.

    ``eigenvector`` is the gap eigenfunction ``f`` (not the symmetrized
    vector) on the states listed in ``indices``, normalized so that
    ``Var_mu(f) = 1`` on the component. A component with a single state has
    no nonzero eigenvalue; its gap is reported as ``0``.
    """

    gap: float
    multiplicity: int
    ergodic: bool
    residual: float
    eigenvector: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    component_size: int = 0
    method: str = "dense"

    def full_eigenvector(self, n_states: int) -> np.ndarray:
        f = np.zeros(n_states)
        f[self.indices] = self.eigenvector
        return f


def _restrict(S: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    return S[idx][:, idx]


def _dense_gap(A: np.ndarray):
    vals, vecs = scipy.linalg.eigh(A, subset_by_index=[0, 1])
    return float(vals[1]), vecs[:, 1]


def _iterative_gap(A: sp.csr_matrix, v0: np.ndarray, tol: float, seed: int = 0, block: int = 4):
    # Block solver restricted to the complement of the known stationary
    # vector, preconditioned by algebraic multigrid. The smallest eigenvalues
    # of slow kinetically constrained chains are tightly clustered relative
    # to the spectral width, which stalls unpreconditioned Lanczos.
    n = A.shape[0]
    ml = pyamg.smoothed_aggregation_solver(A, B=v0[:, None], symmetry="symmetric")
    X = np.random.default_rng(seed).standard_normal((n, min(block, n - 1)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs = lobpcg(
            A, X, M=ml.aspreconditioner(cycle="V"), Y=v0[:, None], largest=False, tol=tol, maxiter=2000
        )
    k = int(np.argmin(vals))
    return float(vals[k]), vecs[:, k]


def exact_gap(gen: GeneratorMatrix, mode: str = "auto", tol: float = 1e-10, strict: bool = False) -> GapResult:
    """Smallest nonzero eigenvalue of ``-L``.

    The multiplicity of the zero eigenvalue is taken from the number of
    connected components of the move graph, and the gap is that of the
    largest component. With ``strict=True`` a non-ergodic chain raises
    :class:`NonErgodic` instead.

    ``mode`` is ``"dense"`` (full symmetric eigensolver), ``"iterative"``
    (preconditioned block solver with the stationary vector deflated) or ``"auto"``, which
    goes dense for components of at most ``DENSE_MAX`` states.
    """
    comps = _components_of(gen)
    multiplicity = len(comps)
    ergodic = multiplicity == 1
    if strict and not ergodic:
        raise NonErgodic(f"{multiplicity} ergodic components")
    comp = comps[0]
    idx = comp.indices
    if comp.size == 1:
        return GapResult(0.0, multiplicity, False, 0.0, np.zeros(1), idx, 1, "trivial")

    A = -_restrict(gen.symmetrized(), idx)
    mu = gen.mu[idx] / gen.mu[idx].sum()
    v0 = np.sqrt(mu)
    if mode == "auto":
        mode = "dense" if comp.size <= DENSE_MAX else "iterative"
    if mode == "dense":
        if comp.size > DENSE_LIMIT:
            raise LatticeError(f"dense path limited to {DENSE_LIMIT} states")
        lam, v = _dense_gap(A.toarray())
    elif mode == "iterative":
        lam, v = _iterative_gap(A, v0, tol)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    v = v - v0 * (v0 @ v)
    v /= np.linalg.norm(v)
    residual = float(np.linalg.norm(A @ v - lam * v))
    f = v / v0
    if f[np.argmax(np.abs(f))] < 0:
        f = -f
    return GapResult(lam, multiplicity, ergodic, residual, f, idx, comp.size, mode)


def numeric_zero_multiplicity(gen: GeneratorMatrix, tol: float = 1e-8) -> int:
    """Count eigenvalues of ``-L`` below ``tol`` with a full dense solve.

    Independent of the component search used by :func:`exact_gap`.
    """
    if gen.n_states > DENSE_LIMIT:
        raise LatticeError("numeric multiplicity needs a dense solve")
    vals = scipy.linalg.eigvalsh(-gen.symmetrized().toarray())
    return int(np.sum(np.abs(vals) < tol))


# --------------------------------------------------------------------------- #
# Variational characterization
# --------------------------------------------------------------------------- #

def variance(gen: GeneratorMatrix, f) -> float:
    f = np.asarray(f, dtype=float)
    m = gen.mu @ f
    return float(gen.mu @ (f - m) ** 2)


def dirichlet_form(gen: GeneratorMatrix, f) -> float:
    """``D(f) = 1/2 sum_{i,j} mu_i r_ij (f_j - f_i)^2`` from the rate list."""
    f = np.asarray(f, dtype=float)
    diff = f[gen.cols] - f[gen.rows]
    return float(0.5 * np.sum(gen.mu[gen.rows] * gen.rates * diff**2))


def local_dirichlet_form(gen: GeneratorMatrix, f) -> float:
    """``D(f) = sum_x mu(c_x Var_x f)`` evaluated site by site.

    ``Var_x f(eta) = pq (f(eta^x) - f(eta))^2`` is the variance of ``f`` under
    a refresh of site ``x``. This route reads the constraint table directly
    rather than the generator entries.
    """
    f = np.asarray(f, dtype=float)
    rules = compile_rules(gen.model, gen.region, BoundaryCondition.occupied() if gen.bc.mode == RESTRICTED else gen.bc)
    pq = gen.params.p * gen.params.q
    total = 0.0
    for i in range(gen.region.n_sites):
        c = rules.satisfied_many(gen.states, i)
        flipped = np.searchsorted(gen.states, gen.states ^ (1 << i))
        flipped = np.minimum(flipped, gen.n_states - 1)
        present = c & (gen.states[flipped] == (gen.states ^ (1 << i)))
        total += float(np.sum(gen.mu[present] * pq * (f[flipped[present]] - f[present]) ** 2))
    return total


def variational_ratio(gen: GeneratorMatrix, f) -> float:
    """``D(f) / Var(f)``; never below the gap of an ergodic chain."""
    var = variance(gen, f)
    if var <= 1e-300 or not np.isfinite(var):
        raise DegenerateInput("f is constant under mu")
    return dirichlet_form(gen, f) / var


# --------------------------------------------------------------------------- #
# Finite-size series
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class GapSeries:
    L: tuple[int, ...]
    gaps: tuple[float, ...]

    def diagnostic(self, L: int | None = None) -> float:
        """``|gap(L) - gap(L-2)| / gap(L)`` at ``L`` (default: the largest)."""
        L = self.L[-1] if L is None else L
        g = dict(zip(self.L, self.gaps))
        if L - 2 not in g:
            raise KeyError(f"series lacks L={L - 2}")
        return abs(g[L] - g[L - 2]) / g[L]

    @property
    def last(self) -> float:
        return self.gaps[-1]


def gap_series(
    model: ModelSpec,
    Ls: Sequence[int],
    q: float,
    bc: BoundaryCondition | Callable[[Region], BoundaryCondition],
    mode: str = "auto",
) -> GapSeries:
    """Exact gaps on cubes of side ``L`` for each ``L`` in ``Ls``.

    ``bc`` may depend on the region, e.g. ``BoundaryCondition.upper_empty``.
    """
    gaps = []
    for L in Ls:
        region = Region.cube(L, model.d)
        b = bc(region) if callable(bc) else bc
        gaps.append(exact_gap(build_generator(model, region, b, DensityParams(q)), mode).gap)
    return GapSeries(tuple(Ls), tuple(gaps))


# --------------------------------------------------------------------------- #
# Two-block chain
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BlockChainSpec:
    """Two blocks of ``n1`` and ``n2`` spins at vacancy density ``q``.

    ``c1`` is a boolean array over the ``2**n2`` packed configurations of the
    second block: the first block may refresh only where it is true.
    """

    n1: int
    n2: int
    c1: np.ndarray
    q: float

    def __post_init__(self):
        c1 = np.asarray(self.c1, dtype=bool).ravel()
        if c1.size != 2**self.n2:
            raise ValueError("c1 must list one value per configuration of the second block")
        object.__setattr__(self, "c1", c1)
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")

    @classmethod
    def from_predicate(cls, n1: int, n2: int, predicate: Callable[[int], bool], q: float) -> "BlockChainSpec":
        return cls(n1, n2, np.array([bool(predicate(b)) for b in range(2**n2)]), q)

    def block_weights(self, n: int) -> np.ndarray:
        states = np.arange(2**n, dtype=np.int64)
        return _product_weights(states, n, self.q)

    @property
    def mu_c1(self) -> float:
        return float(self.block_weights(self.n2) @ self.c1)


@dataclass(frozen=True)
class BlockGap:
    mu_c1: float
    formula: float
    diagonalized: float

    @property
    def abs_diff(self) -> float:
        return abs(self.formula - self.diagonalized)


def block_generator(spec: BlockChainSpec) -> np.ndarray:
    """Dense ``L_block = c1 (pi2 - I) + (pi1 - I)`` on ``B1 x B2``.

    ``pi2`` refreshes the first block and ``pi1`` the second; the state
    ``(b1, b2)`` has index ``b1 * 2**n2 + b2``.
    """
    mu1, mu2 = spec.block_weights(spec.n1), spec.block_weights(spec.n2)
    n1, n2 = len(mu1), len(mu2)
    I1, I2 = np.eye(n1), np.eye(n2)
    pi2 = np.kron(np.outer(np.ones(n1), mu1), I2)
    pi1 = np.kron(I1, np.outer(np.ones(n2), mu2))
    c = np.tile(spec.c1.astype(float), n1)
    return c[:, None] * (pi2 - np.eye(n1 * n2)) + pi1 - np.eye(n1 * n2)


def block_gap_verify(spec: BlockChainSpec) -> BlockGap:
    """Closed form ``1 - sqrt(1 - mu(c1))`` against a dense diagonalization."""
    if 2 ** (spec.n1 + spec.n2) > DENSE_LIMIT:
        raise ValueError("block chain too large for a dense solve")
    m = spec.mu_c1
    if m <= 0:
        raise NonErgodic("mu(c1) = 0: the first block never refreshes")
    L = block_generator(spec)
    w = np.kron(spec.block_weights(spec.n1), spec.block_weights(spec.n2))
    s = np.sqrt(w)
    S = (s[:, None] * L) / s[None, :]
    S = 0.5 * (S + S.T)
    vals = np.sort(scipy.linalg.eigvalsh(-S))
    return BlockGap(m, 1.0 - math.sqrt(max(0.0, 1.0 - m)), float(vals[1]))


# --------------------------------------------------------------------------- #
# Domination
# --------------------------------------------------------------------------- #

def domination_check(model_a: ModelSpec, model_b: ModelSpec, window_size: int) -> bool:
    """True iff ``c^a_0 <= c^b_0`` on every configuration of the window.

    The window is the cube ``[-w, w]^d`` with ``w = window_size``; it must
    contain both supports. The constraints only read their supports, so the
    enumeration runs over the union of supports, which is equivalent to
    enumerating the whole window.
    """
    if model_a.d != model_b.d:
        raise LatticeError("models differ in dimension")
    support = sorted(model_a.support | model_b.support)
    if any(max(abs(c) for c in a) > window_size for a in support):
        raise LatticeError(f"window radius {window_size} does not cover both supports")
    pos = {a: k for k, a in enumerate(support)}
    masks_a = [sum(1 << pos[a] for a in A) for A in model_a.offset_sets]
    masks_b = [sum(1 << pos[a] for a in A) for A in model_b.offset_sets]
    for eta in range(1 << len(support)):
        ca = any(eta & m == 0 for m in masks_a)
        cb = any(eta & m == 0 for m in masks_b)
        if ca and not cb:
            return False
    return True


# --------------------------------------------------------------------------- #
# Closed-form bounds
# --------------------------------------------------------------------------- #

SHARP_THRESHOLD = {"fa2f": math.pi**2 / 18, "mb": math.pi**2 / 6}


@dataclass(frozen=True)
class BoundValues:
    model: str
    q: float
    lower: float | None
    upper: float | None
    limit_target: float | None = None
    log_base: float | None = None


class MissingConstant(KeyError):
    pass


def _need(constants: dict, *names):
    missing = [k for k in names if k not in constants]
    if missing:
        raise MissingConstant(f"missing constants: {', '.join(missing)}")
    return [float(constants[k]) for k in names]


def _iterated_exp(x: float, n: int) -> float:
    for _ in range(n):
        x = math.exp(x) if x < 709 else math.inf
    return x


def east_limit_target(log_base: float = math.e) -> float:
    """Limit of ``log(1/gap) / log(1/q)**2`` with both logs in ``log_base``.

    Natural logs give ``1/(2 ln 2) = 0.7213``; base-2 logs give ``1/2``.
    """
    return math.log(log_base) / (2 * math.log(2))


def bound_evaluate(
    model: str, q: float, constants: dict | None = None, d: int = 1, L: int | None = None, log_base: float = math.e
) -> BoundValues:
    """Evaluate published functional forms of gap bounds at ``q``.

    Constants the forms leave unspecified must be passed in ``constants``:

    * ``east``: ``C`` and optional ``delta`` (default 0) for
      ``C q^{log2(1/q)/(2-delta)}``; no upper form.
    * ``fa1f``: ``C`` for the ``C^{-1} g_low(q) <= gap <= C g_up(q)`` table.
    * ``fa2f`` / ``mb`` (``d >= 2``): ``c`` and optional ``lam`` (defaults to
      the sharp threshold) and ``eps``.
    * ``ne``: ``c1``, ``c2`` and the side ``L``.
    """
    constants = dict(constants or {})
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    lq = math.log(1 / q)
    if model == "east":
        (C,) = _need(constants, "C")
        delta = float(constants.get("delta", 0.0))
        lower = C * q ** (math.log2(1 / q) / (2 - delta))
        return BoundValues(model, q, lower, None, east_limit_target(log_base), log_base)
    if model == "fa1f":
        (C,) = _need(constants, "C")
        if d == 1:
            lo, up = q**3, q**3
        elif d == 2:
            lo, up = q**2 / lq, q**2
        else:
            lo, up = q**2, q ** (1 + 2 / d)
        return BoundValues(model, q, lo / C, C * up)
    if model in SHARP_THRESHOLD:
        if d < 2:
            raise ValueError(f"{model} bounds need d >= 2")
        (c,) = _need(constants, "c")
        lam = float(constants.get("lam", SHARP_THRESHOLD[model]))
        eps = float(constants.get("eps", 0.0))
        if d == 2:
            return BoundValues(model, q, math.exp(-c / q**5), math.exp(-(lam - eps) / q))
        return BoundValues(model, q, 1 / _iterated_exp(c / q**2, d - 1), 1 / _iterated_exp((lam - eps) / q, d - 1))
    if model == "ne":
        c1, c2 = _need(constants, "c1", "c2")
        if L is None:
            raise MissingConstant("N-E bounds need the side L")
        return BoundValues(model, q, math.exp(-c1 * L), math.exp(-c2 * L))
    raise ValueError(f"no bound forms for model {model!r}")
