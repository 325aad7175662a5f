import numpy as np
import pytest
from hypothesis import given, strategies as st

from kcsm.bootstrap import bootstrap_closure
from kcsm.lattice import BoundaryCondition, LatticeError, ModelSpec, Region, SpinConfig
from kcsm.percolation import (
    SURVIVAL_HEADER,
    NoCrossing,
    cluster_range,
    ne_cluster,
    pc_estimate,
    range_tail_rate,
    slice_record,
    survival_probability,
)
from kcsm.rng import stream


def grid_config(a):
    a = np.asarray(a)
    return SpinConfig.from_array(Region(a.shape), a)


def test_cluster_examples():
    empty = SpinConfig.full(Region((4, 4)), 0)
    c = ne_cluster(empty, (0, 0))
    assert c.size == 0 and c.range == 0
    a = np.zeros((4, 4), dtype=int)
    a[1, 1] = 1
    c = ne_cluster(grid_config(a), (1, 1))
    assert c.members == {(1, 1)} and c.range == 1
    a[2, 1] = a[2, 2] = 1
    assert cluster_range(grid_config(a), (1, 1)) == (3, False)


def test_cluster_moves_only_north_east():
    a = np.zeros((3, 3), dtype=int)
    a[1, 1] = a[0, 1] = a[1, 0] = 1
    assert ne_cluster(grid_config(a), (1, 1)).members == {(1, 1)}


def test_full_quadrant_is_censored():
    full = SpinConfig.full(Region((8, 8)))
    A, censored = cluster_range(full, (0, 0), cap=5)
    assert censored and A == 5
    c = ne_cluster(full, (0, 0), exterior=1)
    assert c.escaped and c.censored
    assert ne_cluster(full, (0, 0)).range == 15


def test_cluster_errors():
    with pytest.raises(LatticeError):
        ne_cluster(SpinConfig.full(Region((3,))), (0,))
    with pytest.raises(LatticeError):
        ne_cluster(SpinConfig.full(Region((3, 3))), (3, 0))


@given(st.integers(0, 2**36 - 1), st.integers(0, 5), st.integers(0, 5))
def test_cluster_members_reachable_and_range(bits, x, y):
    config = SpinConfig(Region((6, 6)), bits)
    c = ne_cluster(config, (x, y))
    assert (c.size > 0) == bool(config[(x, y)])
    for m in c.members:
        assert config[m] == 1
        if m != (x, y):
            assert (m[0] - 1, m[1]) in c.members or (m[0], m[1] - 1) in c.members
    if c.size:
        assert c.range == 1 + max(m[0] - x + m[1] - y for m in c.members)


def test_closure_empties_exactly_the_finite_clusters():
    region = Region((6, 6))
    model = ModelSpec.ne()
    occ = BoundaryCondition.occupied()
    for i in range(300):
        config = SpinConfig.from_array(region, (stream(17, i).random(36) < 0.5).astype(int))
        final = bootstrap_closure(model, config, occ).config
        for x in map(tuple, region.coords):
            if config[x]:
                assert (final[x] == 0) == (not ne_cluster(config, x, exterior=1).escaped)


def test_slice_record():
    a = np.zeros((5, 5), dtype=int)
    a[0, 0] = a[1, 0] = a[1, 1] = a[2, 1] = a[1, 2] = 1
    s = slice_record(grid_config(a), 3)
    assert s.survived and s.projection == {1, 2} and s.left == 1 and s.right == 2
    assert not slice_record(grid_config(a), 4).survived


def test_survival_degenerate():
    assert survival_probability(0.0, 10, 100, seed=1).estimate == 0.0
    one = survival_probability(1.0, 10, 100, seed=1)
    assert one.estimate == 1.0
    assert np.all(one.right == 10) and np.all(one.left == 0)
    assert len(one.csv_row()) == len(SURVIVAL_HEADER)
    with pytest.raises(ValueError):
        survival_probability(1.2, 3, 10, seed=0)


def test_survival_quadrant_matches_explicit_slice():
    # the layer generator and the explicit BFS agree on the same occupation pattern
    L = 6
    p = 0.7
    for i in range(200):
        rng = stream(3, i)
        a = np.zeros((L + 1, L + 1), dtype=int)
        a[0, 0] = rng.random() < p
        if a[0, 0]:
            for m in range(1, L + 1):
                u = rng.random(m + 1)  # same draw order as the layer kernel
                for k in range(m + 1):
                    a[k, m - k] = u[k] < p
        est = survival_probability(p, L, i + 1, seed=3)
        s = slice_record(grid_config(a), L)
        assert est.right[i] == s.right and est.left[i] == s.left


def test_survival_strictly_between_and_monotone():
    est = survival_probability(0.5, 32, 4000, seed=7)
    assert 0 <= est.estimate < 1
    theta = [survival_probability(p, 32, 4000, seed=7).k for p in (0.6, 0.65, 0.7, 0.75, 0.8)]
    assert theta == sorted(theta)
    assert survival_probability(0.7, 32, 3000, seed=7, threads=2).k == survival_probability(0.7, 32, 3000, seed=7).k


def test_pc_bracket_inside_unit_interval():
    pc = pc_estimate([8, 16, 32], np.linspace(0.55, 0.85, 7), 3000, seed=5)
    lo, hi = pc.bracket
    assert 0 < lo <= hi < 1
    assert all(b >= a - 0.01 for a, b in zip(pc.crossings, pc.crossings[1:]))
    with pytest.raises(NoCrossing):
        pc_estimate([8], [0.1, 0.2], 500, seed=5)
    with pytest.raises(ValueError):
        pc_estimate([16, 8], [0.5, 0.9], 100, seed=5)


def test_range_tail_decays_exponentially():
    fit = range_tail_rate(0.3, 40, 200000, seed=2)
    assert fit.rate > 0


def test_narrow_slices_decay_above_crossing():
    fr = [survival_probability(0.8, L, 4000, seed=1).narrow_fraction(0.1) for L in (10, 20, 40)]
    assert fr[0] >= fr[1] >= fr[2]
