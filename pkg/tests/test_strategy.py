import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_assignment_total, lattice_ball
from voxplore.frontier import FrontierCell, cluster_frontiers
from voxplore.octree import new_map
from voxplore.strategy import (
    Coordination,
    ScoreTable,
    StrategyConfig,
    StrategyKind,
    assign,
    assign_greedy,
    assign_hungarian,
    assign_independent,
    benefit,
    best_target,
    max_benefit_assignment,
    score_candidates,
    select_nearest_frontier,
    solve_greedy,
    solve_hungarian,
    solve_independent,
    solve_min_cost,
    utility,
)
from voxplore.world import Pose, SensorConfig


def cluster(*keys):
    return cluster_frontiers([FrontierCell(k, 1) for k in keys], 1)


def free_map(depth, skip=()):
    m = new_map(1.0, depth)
    skip = set(skip)
    n = m.size
    for x in range(n):
        for y in range(n):
            for z in range(n):
                if (x, y, z) not in skip:
                    m.update_voxel((x, y, z), False)
    return m


def table(utilities, costs, targets=None, positions=None):
    costs = np.asarray(costs, dtype=float)
    k = costs.shape[1]
    targets = targets or [(i, 0, 0) for i in range(k)]
    pos = np.array(positions if positions is not None else targets, dtype=float) + 0.5
    return ScoreTable(list(targets), np.asarray(utilities, dtype=float), costs, pos.reshape(-1, 3))


CU = StrategyConfig(lam=1.0)


# ---------------------------------------------------------------- utility / benefit


def test_utility_counts_lattice_ball():
    m = new_map(1.0, 5)
    sensor = SensorConfig(max_range=2.0)
    assert utility(m, (16, 16, 16), sensor) == 33 == lattice_ball(2.0)
    assert utility(m, (16, 16, 16), SensorConfig(max_range=3.5)) == lattice_ball(3.5)


def test_utility_zero_when_explored():
    assert utility(free_map(2), (1, 1, 1), SensorConfig(max_range=2.0)) == 0


def test_utility_clips_at_cube_edge():
    m = new_map(1.0, 4)
    octant = sum(1 for x in range(3) for y in range(3) for z in range(3) if x * x + y * y + z * z <= 4)
    assert utility(m, (0, 0, 0), SensorConfig(max_range=2.0)) == octant == 11


@pytest.mark.parametrize("u,c,lam,b", [(12, 4, 0.5, 10), (12, 4, 0.0, 12), (0, 7, 1.0, -7)])
def test_benefit_examples(u, c, lam, b):
    assert benefit(u, c, lam) == b


@given(st.integers(0, 10_000), st.floats(0, 1e4), st.floats(0, 1e3))
def test_benefit_is_linear_combination(u, c, lam):
    assert benefit(u, c, lam) == u - lam * c


# ---------------------------------------------------------------- single robot


def test_nearest_frontier_picks_shorter_path():
    m = free_map(4)
    clusters = cluster((2, 0, 0)) + cluster((12, 0, 0))
    assert select_nearest_frontier(clusters, (5, 0, 0), m) == (2, 0, 0)
    assert select_nearest_frontier(clusters, Pose((5.5, 0.5, 0.5)), m) == (2, 0, 0)
    assert select_nearest_frontier([], (5, 0, 0), m) is None


def test_nearest_frontier_skips_unreachable():
    m = new_map(1.0, 3)
    for x in range(3):
        m.update_voxel((x, 0, 0), False)
    m.update_voxel((3, 0, 0), True)
    m.update_voxel((6, 0, 0), False)
    assert select_nearest_frontier(cluster((6, 0, 0)), (0, 0, 0), m) is None


def test_score_single_candidate():
    unknown = [(8, 12, 8), (8, 11, 8), (8, 10, 9), (9, 10, 8), (10, 10, 8), (8, 8, 5), (5, 8, 9), (11, 9, 8), (9, 9, 11), (8, 5, 8)]
    m = free_map(4, skip=unknown)
    out = score_candidates(cluster((8, 8, 8)), (6, 8, 8), m, SensorConfig(max_range=4.0), CU)
    assert len(out) == 1
    c = out[0]
    assert (c.target, c.utility, c.cost, c.benefit) == ((8, 8, 8), 10, 2.0, 8.0)


def test_score_omits_unreachable():
    m = free_map(3, skip=[(6, y, z) for y in range(8) for z in range(8)])
    cs = cluster((7, 1, 1)) + cluster((2, 1, 1))
    out = score_candidates(cs, (0, 1, 1), m, SensorConfig(), CU)
    assert [c.target for c in out] == [(2, 1, 1)]


def test_equal_utility_prefers_cheaper():
    t = table([5, 5], [[2, 5]])
    assert solve_independent(t, CU, [0]).pairs == [(0, (0, 0, 0))]


def test_best_target_ties_and_empty():
    assert best_target([(3, 0, 0), (1, 0, 0)], [4.0, 4.0]) == 1
    assert best_target([(3, 0, 0)], [-math.inf]) is None


# ---------------------------------------------------------------- Hungarian


def test_hungarian_two_by_two():
    b = np.array([[4.0, 1.0], [2.0, 3.0]])
    pairs = max_benefit_assignment(b)
    assert sorted(pairs) == [(0, 0), (1, 1)]
    assert sum(b[r, c] for r, c in pairs) == 7 == best_assignment_total(b)


def test_hungarian_more_robots_than_clusters():
    t = table([5, 5], [[1, 9], [9, 1], [2, 2]])
    out = solve_hungarian(t, CU, [0, 1, 2])
    assert len(out.pairs) == 2 and out.idle == [2]


@pytest.mark.parametrize("solver", [solve_hungarian, solve_greedy, solve_independent])
def test_one_robot_one_cluster(solver):
    out = solver(table([3], [[4]]), CU, [7])
    assert out.pairs == [(7, (0, 0, 0))] and out.idle == []


def test_hungarian_leaves_unreachable_robot_idle():
    t = table([5, 5], [[1, 2], [math.inf, math.inf]])
    out = solve_hungarian(t, CU, [0, 1])
    assert out.pairs == [(0, (0, 0, 0))] and out.idle == [1]


def test_min_cost_rejects_tall_matrix():
    with pytest.raises(ValueError):
        solve_min_cost(np.zeros((3, 2)))


matrices = st.integers(1, 6).flatmap(
    lambda r: st.integers(1, 6).flatmap(
        lambda c: st.lists(st.lists(st.integers(-50, 50), min_size=c, max_size=c), min_size=r, max_size=r)
    )
)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_hungarian_matches_brute_force(rows):
    b = np.array(rows, dtype=float)
    pairs = max_benefit_assignment(b)
    assert len(pairs) == min(b.shape)
    assert len({r for r, _ in pairs}) == len(pairs) == len({c for _, c in pairs})
    assert sum(b[r, c] for r, c in pairs) == best_assignment_total(b)


# ---------------------------------------------------------------- greedy


def test_greedy_far_clusters_go_to_nearer_robot():
    t = table([10, 10], [[1, 30], [30, 1]], targets=[(0, 0, 0), (40, 0, 0)])
    out = solve_greedy(t, StrategyConfig(discount_radius=4.0), [0, 1])
    assert out.pairs == [(0, (0, 0, 0)), (1, (40, 0, 0))]


def test_greedy_discount_pushes_second_robot_away():
    # A, B one voxel apart; C far. Benefits before discount:
    #   r0: A 10-1=9, B 10-2=8, C 8-9=-1
    #   r1: A 10-2=8, B 10-1=9, C 8-3=5
    # r0 takes A (tie on 9 broken by smaller target key); B's utility halves to 5,
    # so r1 sees B 5-1=4 < C 5 and takes the far cluster.
    A, B, C = (0, 0, 0), (1, 0, 0), (20, 0, 0)
    t = table([10, 10, 8], [[1, 2, 9], [2, 1, 3]], targets=[A, B, C])
    cfg = StrategyConfig(lam=1.0, coordination=Coordination.Greedy, discount_radius=2.0)
    assert solve_greedy(t, cfg, [0, 1]).pairs == [(0, A), (1, C)]
    # with no discount overlap r1 keeps B
    assert solve_greedy(t, StrategyConfig(discount_radius=0.5), [0, 1]).pairs == [(0, A), (1, B)]


def test_greedy_single_robot_is_argmax():
    unknown = [(2, 2, 2), (2, 3, 2), (6, 6, 6)]
    m = free_map(3, skip=unknown)
    cs = cluster((3, 2, 2)) + cluster((5, 6, 6)) + cluster((0, 0, 0))
    sensor = SensorConfig(max_range=2.0)
    cands = score_candidates(cs, (4, 4, 4), m, sensor, CU)
    best = cands[best_target([c.target for c in cands], [c.benefit for c in cands])]
    assert assign_greedy([(4, 4, 4)], cs, m, sensor, CU).pairs == [(0, best.target)]


# ---------------------------------------------------------------- properties


instances = st.integers(1, 8).flatmap(
    lambda k: st.tuples(
        st.lists(st.integers(0, 100), min_size=k, max_size=k),
        st.lists(st.integers(1, 60), min_size=k, max_size=k, unique=True),
    )
)


@settings(max_examples=100, deadline=None)
@given(instances)
def test_large_lambda_matches_nearest_frontier(inst):
    utils, costs = inst
    t = table(utils, [costs])
    near = solve_independent(t, StrategyConfig(kind=StrategyKind.NearestFrontier), [0]).pairs
    cu = solve_independent(t, StrategyConfig(lam=1e6), [0]).pairs
    assert near == cu == [(0, t.targets[int(np.argmin(costs))])]


@settings(max_examples=60, deadline=None)
@given(instances, st.integers(-50, 50))
def test_utility_shift_keeps_choice(inst, shift):
    utils, costs = inst
    a = solve_independent(table(utils, [costs]), CU, [0]).pairs
    b = solve_independent(table([u + shift for u in utils], [costs]), CU, [0]).pairs
    assert a == b


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 4),
    st.integers(1, 5),
    st.integers(0, 2**31 - 1),
    st.sampled_from(list(Coordination)),
)
def test_assignments_are_valid(n_robots, n_targets, seed, coord):
    rng = np.random.default_rng(seed)
    costs = rng.integers(1, 20, (n_robots, n_targets)).astype(float)
    costs[rng.random(costs.shape) < 0.2] = math.inf
    targets = [(int(i) * 3, 0, 0) for i in range(n_targets)]
    t = table(rng.integers(0, 30, n_targets), costs, targets=targets)
    cfg = StrategyConfig(coordination=coord)
    out = assign(t, cfg, list(range(n_robots)))
    assert sorted([r for r, _ in out.pairs] + out.idle) == list(range(n_robots))
    for r, tgt in out.pairs:
        assert math.isfinite(costs[r, targets.index(tgt)])
    if coord is not Coordination.Independent:
        chosen = [tgt for _, tgt in out.pairs]
        assert len(set(chosen)) == len(chosen)


def test_wrappers_agree_with_solvers():
    m = free_map(3, skip=[(7, 7, 7), (7, 6, 7)])
    cs = cluster((6, 6, 6)) + cluster((1, 1, 1))
    sensor = SensorConfig(max_range=2.0)
    robots = [(0, 0, 0), (5, 5, 5)]
    for fn in (assign_hungarian, assign_greedy, assign_independent):
        out = fn(robots, cs, m, sensor, CU)
        assert len(out.pairs) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        StrategyConfig(lam=-1)
    with pytest.raises(ValueError):
        StrategyConfig(lam=math.inf)
    with pytest.raises(ValueError):
        StrategyConfig(replan_interval=0)
    assert StrategyConfig(kind="nearest_frontier").kind is StrategyKind.NearestFrontier
