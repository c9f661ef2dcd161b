"""Tick-driven multi-robot exploration engine.

One tick runs, for each robot in id order: sense, integrate into the shared
map, record new fire sightings, and decide whether to replan. Then frontiers
are recomputed once, every replanning robot gets a target in one
coordination pass, paths are planned and corrected, and each moving robot
advances one waypoint.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import seeding
from .frontier import FrontierCluster, cluster_frontiers, detect_frontiers
from .octree import LogOddsParams, OccupancyOctree, VoxelState, depth_for
from .planner import (
    CorrectionFailed,
    EllipseSpec,
    Path,
    PlanError,
    PotentialFieldConfig,
    distance_field,
    ellipse_targets,
    plan_path,
    validate_and_correct,
)
from .strategy import Coordination, StrategyConfig, assign, build_table
from .world import Key, Pose, SensorConfig, WorldGrid, reachable_from, sense


class FrameMismatch(ValueError):
    pass


class SimulationOver(RuntimeError):
    pass


class RobotStatus(str, enum.Enum):
    Idle = "idle"
    Moving = "moving"
    Replanning = "replanning"
    Done = "done"


@dataclass
class RobotState:
    id: int
    pose: Pose
    target: Key | None = None
    path: Path | None = None
    progress: int = 0
    distance_traveled: float = 0.0
    status: RobotStatus = RobotStatus.Idle
    assigned_tick: int = 0
    rejected: set[Key] = field(default_factory=set)


@dataclass(frozen=True)
class FireDetection:
    voxel: Key
    tick: int
    robot_id: int


@dataclass(frozen=True)
class Event:
    tick: int
    robot_id: int
    kind: str
    detail: tuple = ()


@dataclass(frozen=True)
class TickRecord:
    tick: int
    coverage: float
    frontier_cells: int
    distances: tuple[float, ...]


@dataclass
class Metrics:
    series: list[TickRecord]
    ticks: int
    total_distance: float
    coverage: float
    detections: list[FireDetection]
    map_nodes: int
    completed: bool

    @property
    def detection_latencies(self) -> list[int]:
        return [d.tick for d in self.detections]


def coverage(m: OccupancyOctree, world: WorldGrid, reachable: np.ndarray) -> float:
    """Share of ``reachable`` ground-truth voxels that the map holds as Free."""
    if m.resolution != world.resolution or any(o != 0.0 for o in world.origin):
        raise FrameMismatch("map and world must share resolution and origin")
    nx, ny, nz = world.dims
    if max(world.dims) > m.size:
        raise FrameMismatch(f"world dims {world.dims} exceed the map cube {m.size}")
    total = int(np.count_nonzero(reachable))
    if total == 0:
        return 0.0
    free = m.state_grid()[:nx, :ny, :nz] == VoxelState.Free
    return int(np.count_nonzero(free & reachable)) / total


def _adjacent_or_same(a: Key, b: Key) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) + abs(a[2] - b[2]) <= 1


class Simulation:
    def __init__(
        self,
        world: WorldGrid,
        starts: Sequence[Key],
        sensor: SensorConfig | None = None,
        strategy: StrategyConfig | None = None,
        potential_field: PotentialFieldConfig | None = None,
        log_odds: LogOddsParams | None = None,
        max_depth: int | None = None,
        seed: int = 0,
        ellipse: EllipseSpec | None = None,
        dynamic_obstacles: Sequence[tuple[int, Key]] = (),
    ) -> None:
        self.world = world
        self.sensor = sensor or SensorConfig()
        self.strategy = strategy or StrategyConfig(discount_radius=2 * self.sensor.max_range)
        self.potential_field = potential_field or PotentialFieldConfig.for_resolution(world.resolution)
        self.map = OccupancyOctree(world.resolution, max_depth or depth_for(world.dims), log_odds)
        self.seed = seed
        self.rng = seeding.stream(seed, "sensor")
        self.tick = 0
        self.robots = [RobotState(i, Pose(world.center_of(k))) for i, k in enumerate(starts)]
        for r, k in zip(self.robots, starts):
            if not world.in_bounds(k) or world.is_occupied(k):
                raise ValueError(f"robot {r.id} starts in a non-traversable voxel {tuple(k)}")
        self.starts = [tuple(int(v) for v in k) for k in starts]
        self.detections: list[FireDetection] = []
        self._detected: set[Key] = set()
        self.events: list[Event] = []
        self.terminated = False
        self.frontier_cells = 0
        self.ellipse_queue: list[tuple[float, float, float]] = ellipse_targets(ellipse) if ellipse else []
        self._dynamic = sorted((int(t), tuple(int(v) for v in k)) for t, k in dynamic_obstacles)
        self._reachable = reachable_from(world.traversable, self.starts)
        self.series: list[TickRecord] = []
        self._record()

    @classmethod
    def from_scenario(cls, sc) -> "Simulation":
        return cls(
            sc.build_world(),
            sc.robots,
            sensor=sc.sensor,
            strategy=sc.strategy,
            potential_field=sc.potential_field,
            log_odds=sc.log_odds,
            max_depth=sc.max_depth,
            seed=sc.seed,
            ellipse=sc.ellipse,
            dynamic_obstacles=[(d.tick, d.voxel) for d in sc.dynamic_obstacles],
        )

    # ------------------------------------------------------------------ helpers

    def robot_key(self, r: RobotState) -> Key:
        return self.world.key_of(r.pose.position)

    def coverage(self) -> float:
        return coverage(self.map, self.world, self._reachable)

    def _record(self) -> None:
        self.series.append(
            TickRecord(self.tick, self.coverage(), self.frontier_cells, tuple(r.distance_traveled for r in self.robots))
        )

    def _emit(self, events: list[Event], tick: int, robot: int, kind: str, *detail) -> None:
        ev = Event(tick, robot, kind, tuple(detail))
        events.append(ev)
        self.events.append(ev)

    # ------------------------------------------------------------------ tick

    def step(self) -> list[Event]:
        if self.terminated:
            raise SimulationOver("exploration already complete")
        tick = self.tick + 1
        events: list[Event] = []
        self._apply_dynamic(tick, events)

        for r in self.robots:
            scan = sense(self.world, r.pose, self.sensor, self.rng)
            self.map.integrate_scan(scan)
            for v in scan.fire_observations:
                if v not in self._detected:
                    self._detected.add(v)
                    self.detections.append(FireDetection(v, tick, r.id))
                    self._emit(events, tick, r.id, "fire", v)
        states = self.map.state_grid()
        for r in self.robots:
            if self._needs_replan(r, tick, states):
                r.status = RobotStatus.Replanning

        cells = detect_frontiers(self.map)
        self.frontier_cells = len(cells)
        clusters = cluster_frontiers(cells, self.strategy.min_cluster_size, self.map.resolution)
        if not clusters and cells:
            # only sub-threshold fragments remain; finish them rather than stop short
            clusters = cluster_frontiers(cells, 1, self.map.resolution)

        if not clusters:
            self.terminated = True
            for r in self.robots:
                r.status, r.path, r.target = RobotStatus.Done, None, None
            self._emit(events, tick, -1, "complete")
        else:
            self._coordinate(tick, clusters, events)
            self._move(tick, events)

        self.tick = tick
        self._record()
        return events

    def _apply_dynamic(self, tick: int, events: list[Event]) -> None:
        changed = False
        occupied_by_robots = {self.robot_key(r) for r in self.robots}
        while self._dynamic and self._dynamic[0][0] <= tick:
            _, key = self._dynamic.pop(0)
            if key in occupied_by_robots or self.world.is_occupied(key):
                self._emit(events, tick, -1, "obstacle_skipped", key)
                continue
            self.world = self.world.with_obstacle(key)
            changed = True
            self._emit(events, tick, -1, "obstacle", key)
        if changed:
            self._reachable = reachable_from(self.world.traversable, [self.robot_key(r) for r in self.robots])

    def _needs_replan(self, r: RobotState, tick: int, states: np.ndarray) -> bool:
        if r.status is not RobotStatus.Moving or r.path is None or r.target is None:
            return True
        key = self.robot_key(r)
        if _adjacent_or_same(key, r.target):
            return True
        if r.progress >= len(r.path) - 1:
            return True
        nxt = r.path.keys[r.progress + 1]
        if states[nxt] != VoxelState.Free:
            return True
        return tick - r.assigned_tick >= self.strategy.replan_interval

    def _coordinate(self, tick: int, clusters: list[FrontierCluster], events: list[Event]) -> None:
        replanning = [r for r in self.robots if r.status is RobotStatus.Replanning]
        if not replanning:
            return
        if self.ellipse_queue:
            replanning = [r for r in replanning if not self._take_ellipse_target(r, tick, events)]
            if not replanning:
                return

        available = clusters
        if self.strategy.coordination is not Coordination.Independent:
            taken = {r.target for r in self.robots if r.status is RobotStatus.Moving and r.target is not None}
            available = [c for c in clusters if not taken.intersection(c.keys)]

        keys = [self.robot_key(r) for r in replanning]
        table = build_table(keys, available, self.map, self.sensor, self.strategy)
        for i, r in enumerate(replanning):
            for j, t in enumerate(table.targets):
                if t in r.rejected or t == keys[i]:
                    table.costs[i, j] = math.inf
        result = assign(table, self.strategy, [r.id for r in replanning])
        targets = dict(result.pairs)
        for r in replanning:
            t = targets.get(r.id)
            if t is None:
                r.status, r.path, r.target = RobotStatus.Idle, None, None
                self._emit(events, tick, r.id, "idle")
            else:
                self._start_path(r, t, tick, events)

    def _take_ellipse_target(self, r: RobotState, tick: int, events: list[Event]) -> bool:
        states = self.map.state_grid()
        while self.ellipse_queue:
            key = self.map.key_of(self.ellipse_queue[0])
            if not self.world.in_bounds(key) or states[key] == VoxelState.Occupied:
                self.ellipse_queue.pop(0)
                continue
            if states[key] != VoxelState.Free:
                return False
            if distance_field(self.map, self.robot_key(r))[key] < 0:
                return False
            self.ellipse_queue.pop(0)
            self._start_path(r, key, tick, events, kind="perimeter")
            return r.status is RobotStatus.Moving
        return False

    def _start_path(self, r: RobotState, target: Key, tick: int, events: list[Event], kind: str = "assign") -> None:
        start = self.robot_key(r)
        try:
            planned = plan_path(self.map, start, target)
            path = validate_and_correct(planned, self.map, self.potential_field)
        except CorrectionFailed as exc:
            r.rejected.add(target)
            r.status, r.path, r.target = RobotStatus.Idle, None, None
            self._emit(events, tick, r.id, "correction_failed", target, exc.index)
            return
        except PlanError as exc:
            r.rejected.add(target)
            r.status, r.path, r.target = RobotStatus.Idle, None, None
            self._emit(events, tick, r.id, "no_path", target, type(exc).__name__)
            return
        if len(path) < 2:
            r.rejected.add(target)
            r.status, r.path, r.target = RobotStatus.Idle, None, None
            self._emit(events, tick, r.id, "idle")
            return
        r.target, r.path, r.progress = target, path, 0
        r.status, r.assigned_tick = RobotStatus.Moving, tick
        self._emit(events, tick, r.id, kind, target, len(path) - 1)
        moved = tuple(i for i, (a, b) in enumerate(zip(planned.waypoints, path.waypoints)) if a != b)
        if moved:
            self._emit(events, tick, r.id, "corrected", target, moved)

    def _move(self, tick: int, events: list[Event]) -> None:
        states = self.map.state_grid()
        for r in self.robots:
            if r.status is not RobotStatus.Moving or r.path is None:
                continue
            nxt = r.progress + 1
            planned = r.path.keys[nxt]
            pos = r.path.waypoints[nxt]
            k = self.world.key_of(pos)
            # corrected waypoints are used only when they stay in known-free, traversable space
            if not self.world.in_bounds(k) or states[k] != VoxelState.Free or self.world.is_occupied(k):
                pos = self.world.center_of(planned)
                k = planned
            if self.world.is_occupied(k):
                r.status, r.path, r.target = RobotStatus.Idle, None, None
                self._emit(events, tick, r.id, "blocked", k)
                continue
            old = r.pose.position
            r.distance_traveled += math.dist(old, pos)
            r.pose = Pose(pos, r.pose.yaw)
            r.progress = nxt
            if nxt >= len(r.path) - 1:
                r.status, r.path, r.target = RobotStatus.Idle, None, None
                self._emit(events, tick, r.id, "arrived", k)

    # ------------------------------------------------------------------ run

    def metrics(self) -> Metrics:
        return Metrics(
            series=list(self.series),
            ticks=self.tick,
            total_distance=sum(r.distance_traveled for r in self.robots),
            coverage=self.series[-1].coverage,
            detections=list(self.detections),
            map_nodes=self.map.node_count(),
            completed=self.terminated,
        )

    def run(self, max_ticks: int) -> Metrics:
        while not self.terminated and self.tick < max_ticks:
            self.step()
        return self.metrics()


def simulate(scenario) -> Simulation:
    sim = Simulation.from_scenario(scenario)
    sim.run(scenario.max_ticks)
    return sim


def run(scenario) -> Metrics:
    return simulate(scenario).metrics()
