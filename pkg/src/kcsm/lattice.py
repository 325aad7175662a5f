"""
Finite rectangular regions, packed 0/1 configurations, boundary conditions
and the constraint indicator of kinetically constrained spin models.

Conventions
-----------
* ``1`` is an occupied site, ``0`` an empty one. Empty is the good state.
* Sites are enumerated row-major with the last axis fastest; site index ``i``
  is bit ``i`` of the packed integer held by :class:`SpinConfig`.
* Coordinates are absolute lattice coordinates (region origin included).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 4

FROZEN = "frozen-halo"
MINIMAL = "minimal-empty"
RESTRICTED = "restricted-component"
BC_MODES = (FROZEN, MINIMAL, RESTRICTED)


class LatticeError(ValueError):
    """Invalid site, region, model or boundary specification."""


# --------------------------------------------------------------------------- #
# Regions and configurations
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Region:
    """Rectangle ``[o_1, o_1+L_1-1] x ... x [o_d, o_d+L_d-1]``."""

    sides: tuple[int, ...]
    origin: tuple[int, ...] | None = None

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        if not 1 <= len(sides) <= MAX_DIM:
            raise LatticeError(f"dimension must be in 1..{MAX_DIM}, got {len(sides)}")
        if any(s < 1 for s in sides):
            raise LatticeError(f"side lengths must be positive, got {sides}")
        origin = (0,) * len(sides) if self.origin is None else tuple(int(o) for o in self.origin)
        if len(origin) != len(sides):
            raise LatticeError("origin and sides differ in dimension")
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def cube(cls, L: int, d: int = 1, origin=None) -> "Region":
        return cls((L,) * d, origin)

    @property
    def d(self) -> int:
        return len(self.sides)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.sides))

    @cached_property
    def strides(self) -> tuple[int, ...]:
        strides = [1] * self.d
        for i in range(self.d - 2, -1, -1):
            strides[i] = strides[i + 1] * self.sides[i + 1]
        return tuple(strides)

    def contains(self, coord: Sequence[int]) -> bool:
        return len(coord) == self.d and all(
            o <= c < o + s for c, o, s in zip(coord, self.origin, self.sides)
        )

    def index(self, coord: Sequence[int]) -> int:
        if not self.contains(coord):
            raise LatticeError(f"site {tuple(coord)} outside region {self}")
        return int(sum((int(c) - o) * st for c, o, st in zip(coord, self.origin, self.strides)))

    def coord(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.n_sites:
            raise LatticeError(f"site index {index} outside region")
        out = []
        for o, st, s in zip(self.origin, self.strides, self.sides):
            out.append(o + (index // st) % s)
        return tuple(out)

    @cached_property
    def coords(self) -> np.ndarray:
        """``(n_sites, d)`` array of absolute coordinates in site order."""
        grids = np.indices(self.sides).reshape(self.d, -1).T
        return grids + np.asarray(self.origin)

    def shifted(self, v: Sequence[int]) -> "Region":
        return Region(self.sides, tuple(o + int(x) for o, x in zip(self.origin, v)))

    def distance_l1(self, coord: Sequence[int]) -> int:
        """l1 distance from ``coord`` to the region (0 inside)."""
        dist = 0
        for c, o, s in zip(coord, self.origin, self.sides):
            if c < o:
                dist += o - c
            elif c > o + s - 1:
                dist += c - (o + s - 1)
        return dist

    def distance_linf(self, coord: Sequence[int]) -> int:
        dist = 0
        for c, o, s in zip(coord, self.origin, self.sides):
            dist = max(dist, o - c, c - (o + s - 1))
        return dist

    def upper_boundary(self) -> frozenset[tuple[int, ...]]:
        """Sites ``x + e_i`` outside the region (the oriented boundary)."""
        out = set()
        for x in map(tuple, self.coords):
            for i in range(self.d):
                y = list(x)
                y[i] += 1
                if not self.contains(y):
                    out.add(tuple(y))
        return frozenset(out)


@dataclass(frozen=True)
class SpinConfig:
    """Packed occupation variables on a region; bit ``i`` is site ``i``."""

    region: Region
    bits: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.region.n_sites:
            raise LatticeError("bit vector longer than the region")

    @classmethod
    def from_array(cls, region: Region, values) -> "SpinConfig":
        arr = np.asarray(values, dtype=np.int64).ravel()
        if arr.size != region.n_sites:
            raise LatticeError(f"expected {region.n_sites} values, got {arr.size}")
        if np.any((arr != 0) & (arr != 1)):
            raise LatticeError("occupation variables must be 0 or 1")
        return cls(region, pack(arr))

    @classmethod
    def full(cls, region: Region, value: int = 1) -> "SpinConfig":
        return cls(region, (1 << region.n_sites) - 1 if value else 0)

    @classmethod
    def from_empty_sites(cls, region: Region, empty: Iterable[Sequence[int]]) -> "SpinConfig":
        bits = (1 << region.n_sites) - 1
        for c in empty:
            bits &= ~(1 << region.index(tuple(c)))
        return cls(region, bits)

    def __getitem__(self, site) -> int:
        return (self.bits >> _site_index(self.region, site)) & 1

    def to_array(self) -> np.ndarray:
        return unpack(self.bits, self.region.n_sites)

    def grid(self) -> np.ndarray:
        return self.to_array().reshape(self.region.sides)

    @property
    def n_occupied(self) -> int:
        return bin(self.bits).count("1")

    @property
    def n_empty(self) -> int:
        return self.region.n_sites - self.n_occupied

    def shifted(self, v: Sequence[int]) -> "SpinConfig":
        return SpinConfig(self.region.shifted(v), self.bits)

    def __str__(self):
        return "".join(str(b) for b in self.to_array())


def pack(values) -> int:
    bits = 0
    for i, b in enumerate(np.asarray(values).ravel()):
        if b:
            bits |= 1 << i
    return bits


def unpack(bits: int, n: int) -> np.ndarray:
    return np.array([(bits >> i) & 1 for i in range(n)], dtype=np.uint8)


def _site_index(region: Region, site) -> int:
    if isinstance(site, (int, np.integer)):
        if region.d != 1:
            raise LatticeError("integer sites are only accepted in d=1")
        site = (int(site),)
    return region.index(tuple(int(c) for c in site))


# --------------------------------------------------------------------------- #
# Models
# --------------------------------------------------------------------------- #

Offset = tuple[int, ...]


@dataclass(frozen=True)
class ModelSpec:
    """Translation invariant influence class ``C_0`` given as offset sets.

    The constraint at ``x`` holds iff some set ``A`` in ``C_0`` has every site
    of ``x + A`` empty. An empty offset set makes the model unconstrained.
    """

    d: int
    offset_sets: tuple[frozenset[Offset], ...]
    name: str = "custom"
    cooperative: bool | None = None

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIM:
            raise LatticeError(f"dimension must be in 1..{MAX_DIM}")
        sets = []
        for A in self.offset_sets:
            A = frozenset(tuple(int(c) for c in a) for a in A)
            for a in A:
                if len(a) != self.d:
                    raise LatticeError(f"offset {a} has wrong dimension")
                if not any(a):
                    raise LatticeError("an influence set may not contain the site itself")
            sets.append(A)
        if not sets:
            raise LatticeError("influence class must contain at least one set")
        # canonical order keeps equality and hashing independent of input order
        sets = sorted(set(sets), key=lambda A: (len(A), sorted(A)))
        object.__setattr__(self, "offset_sets", tuple(sets))

    @property
    def range(self) -> int:
        return max((sum(abs(c) for c in a) for A in self.offset_sets for a in A), default=0)

    @property
    def support(self) -> frozenset[Offset]:
        return frozenset().union(*self.offset_sets)

    # built-in models

    @classmethod
    def east(cls) -> "ModelSpec":
        return cls(1, (frozenset({(1,)}),), "east", True)

    @classmethod
    def fa(cls, j: int, d: int) -> "ModelSpec":
        if not 1 <= j <= 2 * d:
            raise LatticeError(f"FA-{j}f needs 1 <= j <= 2d")
        sets = tuple(frozenset(A) for A in itertools.combinations(_neighbours(d), j))
        return cls(d, sets, f"fa{j}f", j >= 2)

    @classmethod
    def mb(cls, d: int) -> "ModelSpec":
        per_axis = [(_unit(d, i, -1), _unit(d, i, 1)) for i in range(d)]
        sets = tuple(frozenset(choice) for choice in itertools.product(*per_axis))
        return cls(d, sets, "mb", d >= 2)

    @classmethod
    def ne(cls) -> "ModelSpec":
        return cls(2, (frozenset({(1, 0), (0, 1)}),), "ne", True)

    @classmethod
    def unconstrained(cls, d: int = 1) -> "ModelSpec":
        return cls(d, (frozenset(),), "free", False)

    @classmethod
    def custom(cls, d: int, offset_sets, name: str = "custom") -> "ModelSpec":
        return cls(d, tuple(frozenset(map(tuple, A)) for A in offset_sets), name, None)


def _unit(d: int, i: int, sign: int = 1) -> Offset:
    e = [0] * d
    e[i] = sign
    return tuple(e)


def _neighbours(d: int) -> list[Offset]:
    out = []
    for i in range(d):
        out.extend([_unit(d, i, -1), _unit(d, i, 1)])
    return out


@dataclass(frozen=True)
class DensityParams:
    """Vacancy density ``q``; the particle density ``p = 1 - q`` is derived."""

    q: float

    def __post_init__(self):
        q = float(self.q)
        if not 0.0 <= q <= 1.0:
            raise LatticeError(f"q must lie in [0, 1], got {q}")
        object.__setattr__(self, "q", q)

    @property
    def p(self) -> float:
        return 1.0 - self.q


# --------------------------------------------------------------------------- #
# Boundary conditions
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BoundaryCondition:
    """How sites outside the region are read by the constraints.

    ``frozen-halo``
        Outside sites are frozen to ``fill`` except the coordinates listed in
        ``flipped`` which carry the other value. ``width`` (default: the model
        range) is the declared halo width.
    ``minimal-empty``
        Every outside site is occupied except ``site``, which must lie on the
        outer boundary. ``None`` selects the site just beyond the far corner
        of the first-axis face.
    ``restricted-component``
        Outside sites read as occupied and the chain is restricted to the
        ergodic component of the empty configuration.
    """

    mode: str = FROZEN
    fill: int = 1
    flipped: frozenset[tuple[int, ...]] = field(default_factory=frozenset)
    width: int | None = None
    site: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode not in BC_MODES:
            raise LatticeError(f"unknown boundary mode {self.mode!r}")
        if self.fill not in (0, 1):
            raise LatticeError("fill must be 0 or 1")
        object.__setattr__(self, "flipped", frozenset(tuple(int(c) for c in y) for y in self.flipped))
        if self.site is not None:
            object.__setattr__(self, "site", tuple(int(c) for c in self.site))

    @classmethod
    def occupied(cls) -> "BoundaryCondition":
        return cls(FROZEN, 1)

    @classmethod
    def empty(cls) -> "BoundaryCondition":
        return cls(FROZEN, 0)

    @classmethod
    def frozen(cls, fill: int = 1, flipped=(), width: int | None = None) -> "BoundaryCondition":
        return cls(FROZEN, fill, frozenset(map(tuple, flipped)), width)

    @classmethod
    def upper_empty(cls, region: Region) -> "BoundaryCondition":
        """Empty sites on the oriented boundary ``x + e_i``, occupied elsewhere."""
        return cls(FROZEN, 1, region.upper_boundary())

    @classmethod
    def minimal(cls, site=None) -> "BoundaryCondition":
        return cls(MINIMAL, site=site)

    @classmethod
    def restricted(cls) -> "BoundaryCondition":
        return cls(RESTRICTED)

    def resolved_site(self, region: Region) -> tuple[int, ...]:
        if self.site is not None:
            return self.site
        o, s = region.origin, region.sides
        return (o[0] + s[0],) + tuple(oi + si - 1 for oi, si in zip(o[1:], s[1:]))

    def outside_value(self, region: Region, y: Sequence[int]) -> int:
        if self.mode == RESTRICTED:
            return 1
        if self.mode == MINIMAL:
            return 0 if tuple(y) == self.resolved_site(region) else 1
        return 1 - self.fill if tuple(y) in self.flipped else self.fill

    def shifted(self, v: Sequence[int]) -> "BoundaryCondition":
        move = lambda y: tuple(c + int(x) for c, x in zip(y, v))
        return BoundaryCondition(
            self.mode,
            self.fill,
            frozenset(move(y) for y in self.flipped),
            self.width,
            None if self.site is None else move(self.site),
        )

    def describe(self) -> str:
        if self.mode == FROZEN:
            tag = "occupied" if self.fill else "empty"
            return f"{FROZEN}:{tag}" + (f"+{len(self.flipped)}" if self.flipped else "")
        if self.mode == MINIMAL and self.site is not None:
            return f"{MINIMAL}:{','.join(map(str, self.site))}"
        return self.mode


# --------------------------------------------------------------------------- #
# Compiled constraint tables
# --------------------------------------------------------------------------- #

class Rules:
    """Constraint table of ``(model, region, bc)``.

    For each site, ``masks[i]`` lists bitmasks of the in-region sites that
    must be empty, one per influence set whose outside part is empty under the
    boundary condition. ``nbr``/``valid`` hold the same data as padded arrays
    for compiled kernels.
    """

    def __init__(self, model: ModelSpec, region: Region, bc: BoundaryCondition):
        if model.d != region.d:
            raise LatticeError(f"model is {model.d}-dimensional, region {region.d}-dimensional")
        if bc.mode == FROZEN:
            # the outer shell is always addressable, even for range-0 models
            width = max(model.range, 1) if bc.width is None else bc.width
            if width < model.range:
                raise LatticeError(f"halo width {width} narrower than model range {model.range}")
            for y in bc.flipped:
                if region.contains(y) or region.distance_linf(y) > width:
                    raise LatticeError(f"halo site {y} outside the halo of width {width}")
        elif bc.mode == MINIMAL:
            y = bc.resolved_site(region)
            if region.distance_l1(y) != 1:
                raise LatticeError(f"minimal-empty site {y} is not on the outer boundary")
        self.model, self.region, self.bc = model, region, bc

        n = region.n_sites
        n_sets = len(model.offset_sets)
        width = max(1, max(len(A) for A in model.offset_sets))
        nbr = np.full((n, n_sets, width), -1, dtype=np.int64)
        valid = np.zeros((n, n_sets), dtype=np.bool_)
        for i, x in enumerate(region.coords.tolist()):
            for a, A in enumerate(model.offset_sets):
                ok, k = True, 0
                for off in sorted(A):
                    y = tuple(c + o for c, o in zip(x, off))
                    if region.contains(y):
                        nbr[i, a, k] = region.index(y)
                        k += 1
                    elif bc.outside_value(region, y) == 1:
                        ok = False
                valid[i, a] = ok
        self.nbr = nbr
        self.valid = valid

    @cached_property
    def masks(self) -> tuple[tuple[int, ...], ...]:
        """Per-site bitmasks of in-region sites that must be empty, one per usable influence set."""
        out = []
        for i in range(self.region.n_sites):
            site = set()
            for a in np.flatnonzero(self.valid[i]):
                mask = 0
                for j in self.nbr[i, a]:
                    if j >= 0:
                        mask |= 1 << int(j)
                site.add(mask)
            out.append(tuple(sorted(site)))
        return tuple(out)

    @cached_property
    def dependents(self) -> tuple[tuple[int, ...], ...]:
        """Sites whose constraint reads site ``j``."""
        out = [set() for _ in range(self.region.n_sites)]
        for i, a, k in zip(*np.nonzero(self.nbr >= 0)):
            if self.valid[i, a]:
                out[int(self.nbr[i, a, k])].add(int(i))
        return tuple(tuple(sorted(s)) for s in out)

    def satisfied(self, bits: int, i: int) -> bool:
        return any(bits & m == 0 for m in self.masks[i])

    def satisfied_many(self, states: np.ndarray, i: int) -> np.ndarray:
        """Vectorised constraint at site ``i`` over an array of packed states."""
        out = np.zeros(states.shape, dtype=bool)
        for m in self.masks[i]:
            out |= (states & np.int64(m)) == 0
        return out


@lru_cache(maxsize=256)
def compile_rules(model: ModelSpec, region: Region, bc: BoundaryCondition) -> Rules:
    return Rules(model, region, bc)


# --------------------------------------------------------------------------- #
# Operations
# --------------------------------------------------------------------------- #

def constraint_satisfied(model: ModelSpec, config: SpinConfig, bc: BoundaryCondition, site) -> bool:
    """Constraint indicator ``c_x`` at ``site`` for ``config`` extended by ``bc``."""
    rules = compile_rules(model, config.region, bc)
    return rules.satisfied(config.bits, _site_index(config.region, site))


def legal_moves(model: ModelSpec, config: SpinConfig, bc: BoundaryCondition) -> list[tuple[int, ...]]:
    """Sites where a flip is currently allowed, in ascending site order."""
    rules = compile_rules(model, config.region, bc)
    region = config.region
    return [region.coord(i) for i in range(region.n_sites) if rules.satisfied(config.bits, i)]


def apply_flip(config: SpinConfig, site) -> SpinConfig:
    return SpinConfig(config.region, config.bits ^ (1 << _site_index(config.region, site)))


def measure_weight(config: SpinConfig, params: DensityParams) -> float:
    """Bernoulli product weight ``p^{#1} q^{#0}``."""
    return params.p ** config.n_occupied * params.q ** config.n_empty


# --------------------------------------------------------------------------- #
# JSON model documents
# --------------------------------------------------------------------------- #

def model_from_json(doc: dict) -> ModelSpec:
    kind = doc.get("model")
    d = int(doc.get("d", len(doc.get("sides", [])) or 1))
    if kind == "east":
        return ModelSpec.east()
    if kind == "fa":
        return ModelSpec.fa(int(doc.get("j", 1)), d)
    if kind == "mb":
        return ModelSpec.mb(d)
    if kind == "ne":
        return ModelSpec.ne()
    if kind == "free":
        return ModelSpec.unconstrained(d)
    if kind == "custom":
        sets = doc.get("offset_sets")
        if not sets:
            raise LatticeError("custom model needs 'offset_sets'")
        return ModelSpec.custom(d, sets, doc.get("name", "custom"))
    raise LatticeError(f"unknown model {kind!r}")


def bc_from_json(doc: dict | None, region: Region) -> BoundaryCondition:
    if doc is None:
        return BoundaryCondition.occupied()
    mode = doc.get("mode", FROZEN)
    if mode == FROZEN:
        preset = doc.get("preset")
        if preset == "upper-empty":
            return BoundaryCondition.upper_empty(region)
        fill = {"occupied": 1, "empty": 0, None: int(doc.get("fill", 1))}.get(preset)
        if fill is None:
            raise LatticeError(f"unknown halo preset {preset!r}")
        return BoundaryCondition.frozen(fill, [tuple(y) for y in doc.get("flipped", [])], doc.get("width"))
    if mode == MINIMAL:
        site = doc.get("site")
        return BoundaryCondition.minimal(None if site is None else tuple(site))
    if mode == RESTRICTED:
        return BoundaryCondition.restricted()
    raise LatticeError(f"unknown boundary mode {mode!r}")


def system_from_json(doc: dict):
    """Parse ``{"model", "j", "d", "sides", "bc", "q", ...}``.

    Returns ``(model, region, bc, params)``; ``params`` is ``None`` when the
    document has no ``q``.
    """
    model = model_from_json(doc)
    sides = doc.get("sides")
    region = Region(tuple(sides)) if sides else None
    if region is not None and region.d != model.d:
        raise LatticeError("sides do not match the model dimension")
    bc = bc_from_json(doc.get("bc"), region) if region is not None else None
    params = DensityParams(doc["q"]) if "q" in doc else None
    return model, region, bc, params
