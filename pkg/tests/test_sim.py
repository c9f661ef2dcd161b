import numpy as np
import pytest

from oracles import flood_fill
from voxplore.octree import VoxelState, new_map
from voxplore.planner import EllipseSpec, ellipse_targets
from voxplore.sim import FrameMismatch, Simulation, SimulationOver, coverage
from voxplore.strategy import Coordination, StrategyConfig, StrategyKind
from voxplore.world import SensorConfig, WorldGrid, generate_world

NF = StrategyConfig(kind=StrategyKind.NearestFrontier, discount_radius=8.0)


def assert_never_inside_obstacle(sim, max_ticks):
    while not sim.terminated and sim.tick < max_ticks:
        sim.step()
        for r in sim.robots:
            assert not sim.world.is_occupied(sim.robot_key(r)), (sim.tick, r.id)


def test_empty_box_fully_explored():
    w = generate_world("empty_box", (8, 8, 4), 1)
    sim = Simulation(w, [(1, 1, 1)], strategy=NF)
    m = sim.run(500)
    assert m.completed and m.coverage == 1.0
    reach = flood_fill(~w.occupied, (1, 1, 1))
    free = sim.map.state_grid()[:8, :8, :4] == VoxelState.Free
    assert reach <= {tuple(int(v) for v in k) for k in np.argwhere(free)}
    assert m.detections == []


def test_zero_ticks_returns_immediately():
    w = generate_world("empty_box", (8, 8, 4), 1, 1)
    m = Simulation(w, [(1, 1, 1)]).run(0)
    assert (m.ticks, m.coverage, m.detections, m.completed) == (0, 0.0, [], False)
    assert len(m.series) == 1


def test_single_fire_detected_once():
    w = generate_world("empty_box", (8, 8, 4), 3, 1)
    sim = Simulation(w, [(3, 3, 1)], strategy=NF)
    m = sim.run(500)
    assert m.completed
    assert [d.voxel for d in m.detections] == w.fire_voxels()
    assert 1 <= m.detections[0].tick <= m.ticks


def test_runs_are_deterministic():
    w = generate_world("rooms_and_corridors", (16, 16, 5), 2, 2)
    a = Simulation(w, [(1, 1, 1), (2, 1, 1)], seed=4).run(800)
    b = Simulation(w, [(1, 1, 1), (2, 1, 1)], seed=4).run(800)
    assert a == b


def test_series_invariants():
    w = generate_world("rooms_and_corridors", (16, 16, 5), 5)
    m = Simulation(w, [(1, 1, 1), (14, 14, 3)], strategy=StrategyConfig(coordination=Coordination.Greedy)).run(800)
    assert m.completed and m.coverage == 1.0
    assert len(m.series) == m.ticks + 1
    assert [r.tick for r in m.series] == list(range(m.ticks + 1))
    covs = [r.coverage for r in m.series]
    assert covs == sorted(covs)
    for a, b in zip(m.series, m.series[1:]):
        assert all(x <= y for x, y in zip(a.distances, b.distances))
    assert m.total_distance == pytest.approx(sum(m.series[-1].distances))
    assert m.map_nodes > 0


def test_sealed_chamber_is_not_counted():
    occ = np.ones((12, 6, 5), dtype=bool)
    occ[1:5, 1:5, 1:4] = False
    occ[7:11, 1:5, 1:4] = False
    w = WorldGrid((12, 6, 5), 1.0, occ, np.zeros_like(occ))
    sim = Simulation(w, [(2, 2, 2)], strategy=NF)
    m = sim.run(300)
    assert m.completed and m.coverage == 1.0
    free = sim.map.state_grid()[:12, :6, :5] == VoxelState.Free
    assert int((free & ~occ).sum()) == int((~occ).sum()) // 2


@pytest.mark.parametrize("coord", list(Coordination))
def test_never_enters_obstacles(coord):
    w = generate_world("rooms_and_corridors", (16, 16, 5), 9)
    sim = Simulation(w, [(1, 1, 1), (1, 2, 1), (2, 1, 1)], strategy=StrategyConfig(coordination=coord))
    assert_never_inside_obstacle(sim, 800)
    assert sim.terminated and sim.coverage() == 1.0


def test_dynamic_obstacle_inserted_and_avoided():
    w = generate_world("empty_box", (12, 8, 4), 1)
    drop = [(3, (5, 4, 1)), (3, (5, 3, 1)), (6, (1, 1, 1))]
    sim = Simulation(w, [(1, 1, 1)], strategy=NF, dynamic_obstacles=drop)
    assert_never_inside_obstacle(sim, 800)
    kinds = [(e.tick, e.kind, e.detail) for e in sim.events if e.kind.startswith("obstacle")]
    assert (3, "obstacle", ((5, 4, 1),)) in kinds
    assert sim.world.is_occupied((5, 3, 1))
    assert sim.terminated and sim.coverage() == 1.0


def test_obstacle_on_robot_is_skipped():
    w = generate_world("empty_box", (8, 8, 4), 1)
    sim = Simulation(w, [(1, 1, 1)], dynamic_obstacles=[(1, (1, 1, 1))])
    events = sim.step()
    assert any(e.kind == "obstacle_skipped" for e in events)
    assert not sim.world.is_occupied((1, 1, 1))


def test_step_after_completion_raises():
    w = generate_world("empty_box", (6, 6, 4), 1)
    sim = Simulation(w, [(1, 1, 1)])
    sim.run(500)
    assert sim.terminated
    with pytest.raises(SimulationOver):
        sim.step()
    assert sim.robots[0].status.value == "done"


def test_bad_start_rejected():
    w = generate_world("empty_box", (6, 6, 4), 1)
    with pytest.raises(ValueError):
        Simulation(w, [(0, 0, 0)])


def test_coverage_frame_checks():
    w = generate_world("empty_box", (6, 6, 4), 1)
    with pytest.raises(FrameMismatch):
        coverage(new_map(0.5, 4), w, ~w.occupied)
    with pytest.raises(FrameMismatch):
        coverage(new_map(1.0, 2), w, ~w.occupied)


def test_ellipse_waypoints_taken_in_order():
    w = generate_world("building_shell", (20, 20, 6), 2)
    cx, cy = w.building_center
    spec = EllipseSpec((cx, cy), 7.5, 7.5, 1.5, 8)
    sim = Simulation(w, [(1, 1, 1)], ellipse=spec, sensor=SensorConfig(max_range=5.0))
    sim.run(3000)
    order = [sim.map.key_of(p) for p in ellipse_targets(spec)]
    perim = [e.detail[0] for e in sim.events if e.kind == "perimeter"]
    assert perim
    it = iter(order)
    assert all(any(t == k for k in it) for t in perim)
    assert sim.terminated and sim.coverage() == 1.0


def test_noisy_sensing_still_seeded():
    w = generate_world("empty_box", (8, 8, 4), 1)
    cfg = SensorConfig(range_noise=0.05)
    a = Simulation(w, [(1, 1, 1)], sensor=cfg, seed=3).run(60)
    b = Simulation(w, [(1, 1, 1)], sensor=cfg, seed=3).run(60)
    assert a == b
