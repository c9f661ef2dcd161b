import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_frontiers, union_find_components
from voxplore.frontier import FrontierCell, FrontierCluster, cluster_frontiers, detect_frontiers, representative
from voxplore.octree import new_map


def random_map(seed, depth):
    rng = random.Random(seed)
    m = new_map(1.0, depth)
    n = m.size
    for _ in range(rng.randint(1, 4 * n * n)):
        key = (rng.randrange(n), rng.randrange(n), rng.randrange(n))
        m.update_voxel(key, rng.random() < 0.3)
    if rng.random() < 0.5:
        m.prune()
    return m


def cells(*keys):
    return [FrontierCell(k, 1) for k in keys]


def test_single_free_voxel_is_frontier():
    m = new_map(1.0, 3)
    m.update_voxel((1, 1, 1), False)
    assert detect_frontiers(m) == [FrontierCell((1, 1, 1), 6)]


def test_closed_box_has_no_frontier():
    m = new_map(1.0, 2)
    for x in range(4):
        for y in range(4):
            for z in range(4):
                edge = 0 in (x, y, z) or 3 in (x, y, z)
                m.update_voxel((x, y, z), edge)
    assert detect_frontiers(m) == []


def test_cube_edge_counts_as_known_by_default():
    m = new_map(1.0, 1)
    for x in range(2):
        for y in range(2):
            for z in range(2):
                m.update_voxel((x, y, z), False)
    assert detect_frontiers(m) == []
    assert len(detect_frontiers(m, outside_is_unknown=True)) == 8


def test_bounds_restrict_output():
    m = new_map(1.0, 3)
    m.update_voxel((1, 1, 1), False)
    m.update_voxel((6, 6, 6), False)
    got = detect_frontiers(m, bounds=((4, 4, 4), (8, 8, 8)))
    assert [c.key for c in got] == [(6, 6, 6)]
    with pytest.raises(ValueError):
        detect_frontiers(m, bounds=((0, 0, 0), (9, 8, 8)))


@pytest.mark.parametrize("seed", range(25))
def test_detect_matches_exhaustive_scan(seed):
    m = random_map(seed, 2 + seed % 3)
    states = np.array([[[int(m.state_of((x, y, z))) for z in range(m.size)] for y in range(m.size)] for x in range(m.size)])
    expected = brute_frontiers(states)
    got = {c.key: c.unknown_neighbors for c in detect_frontiers(m)}
    assert got == expected


def test_diagonal_cells_cluster_together():
    out = cluster_frontiers(cells((1, 1, 1), (2, 2, 2)), min_cluster_size=1)
    assert len(out) == 1 and out[0].size == 2


def test_distant_cells_split_and_filter():
    out = cluster_frontiers(cells((1, 1, 1), (5, 5, 5)), min_cluster_size=1)
    assert len(out) == 2
    assert cluster_frontiers(cells((1, 1, 1), (5, 5, 5)), min_cluster_size=2) == []


def test_cluster_order_is_size_then_key():
    cs = cells((9, 9, 9), (0, 0, 0), (0, 0, 1), (5, 5, 5), (5, 5, 6))
    out = cluster_frontiers(cs, min_cluster_size=1)
    assert [c.cells[0].key for c in out] == [(0, 0, 0), (5, 5, 5), (9, 9, 9)]


def test_min_cluster_size_validated():
    with pytest.raises(ValueError):
        cluster_frontiers(cells((0, 0, 0)), min_cluster_size=0)
    assert cluster_frontiers([], 3) == []


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(*[st.integers(0, 9)] * 3), min_size=1, max_size=100, unique=True))
def test_clusters_match_union_find(keys):
    out = cluster_frontiers(cells(*keys), min_cluster_size=1)
    assert sorted(map(sorted, (set(c.keys) for c in out))) == sorted(map(sorted, union_find_components(keys)))


def test_representative_cases():
    one = cluster_frontiers(cells((3, 4, 5)), 1)[0]
    assert representative(one) == (3, 4, 5)
    two = cluster_frontiers(cells((2, 2, 2), (3, 2, 2)), 1)[0]
    assert representative(two) == (2, 2, 2)


def test_l_shaped_representative_by_enumeration():
    keys = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 1, 0), (0, 2, 0)]
    cl = cluster_frontiers(cells(*keys), 1)[0]
    c = [sum(k[i] for k in keys) / 5 for i in range(3)]
    expected = min(keys, key=lambda k: (sum((k[i] - c[i]) ** 2 for i in range(3)), k))
    assert representative(cl) == expected
    assert cl.centroid == pytest.approx(tuple(v + 0.5 for v in c))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(*[st.integers(0, 5)] * 3), min_size=1, max_size=40, unique=True))
def test_representative_is_nearest_member(keys):
    for cl in cluster_frontiers(cells(*keys), 1):
        ks = list(cl.keys)
        n = len(ks)
        s = [sum(k[i] for k in ks) for i in range(3)]
        d2 = lambda k: sum((n * k[i] - s[i]) ** 2 for i in range(3))
        best = min(d2(k) for k in ks)
        assert representative(cl) == min(k for k in ks if d2(k) == best)
        assert isinstance(cl, FrontierCluster)
