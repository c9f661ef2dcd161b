"""Target selection and multi-robot coordination.

Two scoring rules are supported. ``NearestFrontier`` ranks targets by path
cost alone. ``CostUtility`` ranks them by ``benefit = utility - lam * cost``,
where utility counts Unknown voxels within sensor range of the target and cost
is the planned path length in meters.

Coordination decides how replanning robots share targets: ``Independent``
(each robot takes its own best, duplicates allowed), ``Greedy`` (repeatedly
take the best remaining robot/target pair and halve the utility of targets
near the one just taken) and ``Hungarian`` (jointly optimal one-to-one
assignment).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .frontier import FrontierCluster
from .octree import OccupancyOctree, VoxelState
from .planner import distance_field
from .world import Key, Pose, SensorConfig

GREEDY_DISCOUNT = 0.5


class StrategyKind(str, enum.Enum):
    NearestFrontier = "nearest_frontier"
    CostUtility = "cost_utility"


class Coordination(str, enum.Enum):
    Independent = "independent"
    Greedy = "greedy"
    Hungarian = "hungarian"


@dataclass(frozen=True)
class StrategyConfig:
    kind: StrategyKind = StrategyKind.CostUtility
    lam: float = 1.0
    coordination: Coordination = Coordination.Hungarian
    discount_radius: float = 8.0
    replan_interval: int = 25
    min_cluster_size: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "coordination", Coordination(self.coordination))
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lam must be finite and >= 0")
        if not self.discount_radius >= 0:
            raise ValueError("discount_radius must be >= 0")
        if self.replan_interval < 1:
            raise ValueError("replan_interval must be >= 1")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")


@dataclass(frozen=True)
class Candidate:
    target: Key
    utility: float
    cost: float
    benefit: float


@dataclass
class Assignment:
    pairs: list[tuple[int, Key]] = field(default_factory=list)
    idle: list[int] = field(default_factory=list)

    def target_of(self, robot: int) -> Key | None:
        for r, t in self.pairs:
            if r == robot:
                return t
        return None


def benefit(utility: float, cost: float, lam: float) -> float:
    return utility - lam * cost


# ---------------------------------------------------------------------- utility


@lru_cache(maxsize=32)
def _sphere_offsets(radius_voxels: float) -> np.ndarray:
    r = int(math.floor(radius_voxels + 1e-9))
    ax = np.arange(-r, r + 1)
    dx, dy, dz = np.meshgrid(ax, ax, ax, indexing="ij")
    keep = dx * dx + dy * dy + dz * dz <= radius_voxels * radius_voxels + 1e-9
    off = np.stack([dx[keep], dy[keep], dz[keep]], axis=1)
    off.flags.writeable = False
    return off


def utility(m: OccupancyOctree, target: Sequence[int], sensor: SensorConfig) -> int:
    """Unknown voxels whose centres lie within ``sensor.max_range`` of the target centre."""
    if not m.in_range(target):
        raise ValueError(f"target {tuple(target)} outside the map cube")
    off = _sphere_offsets(sensor.max_range / m.resolution)
    pts = off + np.asarray(target, dtype=np.int64)
    n = m.size
    inside = np.all((pts >= 0) & (pts < n), axis=1)
    pts = pts[inside]
    grid = m.state_grid()
    return int(np.count_nonzero(grid[pts[:, 0], pts[:, 1], pts[:, 2]] == VoxelState.Unknown))


# ---------------------------------------------------------------------- score tables


@dataclass
class ScoreTable:
    """Per-cluster utilities and per-(robot, cluster) path costs in meters
    (``inf`` when unreachable)."""

    targets: list[Key]
    utilities: np.ndarray
    costs: np.ndarray
    positions: np.ndarray  # target centres, meters


def build_table(
    robot_keys: Sequence[Key],
    clusters: Sequence[FrontierCluster],
    m: OccupancyOctree,
    sensor: SensorConfig,
    cfg: StrategyConfig,
) -> ScoreTable:
    targets = [c.representative for c in clusters]
    if cfg.kind is StrategyKind.CostUtility:
        utils = np.array([utility(m, t, sensor) for t in targets], dtype=np.float64)
    else:
        utils = np.zeros(len(targets), dtype=np.float64)
    costs = np.full((len(robot_keys), len(targets)), math.inf)
    if targets:
        tk = np.array(targets, dtype=np.int64)
        for r, key in enumerate(robot_keys):
            dist = distance_field(m, key)
            d = dist[tk[:, 0], tk[:, 1], tk[:, 2]]
            costs[r] = np.where(d >= 0, d * m.resolution, math.inf)
    positions = (np.array(targets, dtype=np.float64).reshape(-1, 3) + 0.5) * m.resolution
    return ScoreTable(targets, utils, costs, positions)


def _benefits(table: ScoreTable, cfg: StrategyConfig, utilities: np.ndarray | None = None) -> np.ndarray:
    u = table.utilities if utilities is None else utilities
    if cfg.kind is StrategyKind.NearestFrontier:
        return -table.costs
    return u[None, :] - cfg.lam * table.costs


def _robot_key(m: OccupancyOctree, pose: Pose | Key) -> Key:
    if isinstance(pose, Pose):
        return m.key_of(pose.position)
    return tuple(int(v) for v in pose)  # type: ignore[return-value]


# ---------------------------------------------------------------------- single-robot selection


def best_target(targets: Sequence[Key], benefits: Sequence[float]) -> int | None:
    """Index of the largest finite benefit; smallest target key on ties."""
    best = None
    for i, (t, b) in enumerate(zip(targets, benefits)):
        if not math.isfinite(b):
            continue
        if best is None or b > best[0] or (b == best[0] and t < targets[best[1]]):
            best = (b, i)
    return None if best is None else best[1]


def select_nearest_frontier(clusters: Sequence[FrontierCluster], robot: Pose | Key, m: OccupancyOctree) -> Key | None:
    """Representative of the cluster with the shortest path from the robot."""
    if not clusters:
        return None
    table = build_table([_robot_key(m, robot)], clusters, m, SensorConfig(), StrategyConfig(kind=StrategyKind.NearestFrontier))
    i = best_target(table.targets, -table.costs[0])
    return None if i is None else table.targets[i]


def score_candidates(
    clusters: Sequence[FrontierCluster],
    robot: Pose | Key,
    m: OccupancyOctree,
    sensor: SensorConfig,
    cfg: StrategyConfig,
) -> list[Candidate]:
    """One Candidate per reachable cluster, in cluster order."""
    table = build_table([_robot_key(m, robot)], clusters, m, sensor, cfg)
    out = []
    for j, t in enumerate(table.targets):
        c = float(table.costs[0, j])
        if math.isfinite(c):
            u = float(table.utilities[j])
            out.append(Candidate(t, u, c, benefit(u, c, cfg.lam)))
    return out


# ---------------------------------------------------------------------- Hungarian


def solve_min_cost(cost: np.ndarray) -> list[int]:
    """Optimal assignment of every row to a distinct column (rows <= cols).

    Shortest augmenting path with dual potentials, O(rows^2 * cols).
    Returns the column chosen for each row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n > m:
        raise ValueError("solve_min_cost needs rows <= cols")
    if n == 0:
        return []
    c = cost.tolist()
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    # p[j]: row (1-based) matched to column j; column 0 is the virtual root
    p = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [math.inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = math.inf
            j1 = -1
            row = c[i0 - 1]
            ui0 = u[i0]
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            col_of[p[j] - 1] = j - 1
    return col_of


def max_benefit_assignment(benefit_matrix: np.ndarray, sentinel: float | None = None) -> list[tuple[int, int]]:
    """Rows matched to columns maximising total benefit.

    The matrix is padded to square with ``sentinel`` (default: strictly below
    every entry) and solved as min-cost on negated benefits. Pairs landing on
    padding or on entries equal to the sentinel are dropped.
    """
    b = np.asarray(benefit_matrix, dtype=np.float64)
    rows, cols = b.shape
    if rows == 0 or cols == 0:
        return []
    if sentinel is None:
        sentinel = float(b.min()) - (float(b.max()) - float(b.min())) - 1.0
    n = max(rows, cols)
    padded = np.full((n, n), sentinel)
    padded[:rows, :cols] = b
    col_of = solve_min_cost(-padded)
    pairs = []
    for r in range(rows):
        j = col_of[r]
        if j < cols and b[r, j] != sentinel:
            pairs.append((r, j))
    return pairs


def _sentinel(table: ScoreTable, cfg: StrategyConfig) -> float:
    finite = np.isfinite(table.costs)
    c_max = float(table.costs[finite].max()) if finite.any() else 0.0
    if cfg.kind is StrategyKind.NearestFrontier:
        return -(c_max + 1.0)
    u_max = float(table.utilities.max()) if table.utilities.size else 0.0
    return -(u_max + cfg.lam * c_max + 1.0)


def solve_hungarian(table: ScoreTable, cfg: StrategyConfig, robot_ids: Sequence[int]) -> Assignment:
    b = _benefits(table, cfg)
    s = _sentinel(table, cfg)
    b = np.where(np.isfinite(table.costs), b, s)
    pairs = max_benefit_assignment(b, s) if b.size else []
    assigned = {r: table.targets[j] for r, j in pairs}
    out = Assignment()
    for r, rid in enumerate(robot_ids):
        if r in assigned:
            out.pairs.append((rid, assigned[r]))
        else:
            out.idle.append(rid)
    return out


def assign_hungarian(
    robots: Sequence[Pose | Key],
    clusters: Sequence[FrontierCluster],
    m: OccupancyOctree,
    sensor: SensorConfig,
    cfg: StrategyConfig,
) -> Assignment:
    table = build_table([_robot_key(m, r) for r in robots], clusters, m, sensor, cfg)
    return solve_hungarian(table, cfg, list(range(len(robots))))


# ---------------------------------------------------------------------- greedy bidding


def solve_greedy(table: ScoreTable, cfg: StrategyConfig, robot_ids: Sequence[int]) -> Assignment:
    utils = table.utilities.astype(np.float64).copy()
    free_robots = list(range(len(robot_ids)))
    free_targets = list(range(len(table.targets)))
    out = Assignment()
    while free_robots and free_targets:
        b = _benefits(table, cfg, utils)
        best = None
        for j in free_targets:
            for r in free_robots:
                if not math.isfinite(table.costs[r, j]):
                    continue
                val = float(b[r, j])
                rank = (-val, table.targets[j], robot_ids[r])
                if best is None or rank < best[0]:
                    best = (rank, r, j)
        if best is None:
            break
        _, r, j = best
        out.pairs.append((robot_ids[r], table.targets[j]))
        free_robots.remove(r)
        free_targets.remove(j)
        picked = table.positions[j]
        for k in free_targets:
            if np.linalg.norm(table.positions[k] - picked) <= cfg.discount_radius:
                utils[k] *= GREEDY_DISCOUNT
    out.idle.extend(robot_ids[r] for r in free_robots)
    out.pairs.sort()
    out.idle.sort()
    return out


def assign_greedy(
    robots: Sequence[Pose | Key],
    clusters: Sequence[FrontierCluster],
    m: OccupancyOctree,
    sensor: SensorConfig,
    cfg: StrategyConfig,
) -> Assignment:
    table = build_table([_robot_key(m, r) for r in robots], clusters, m, sensor, cfg)
    return solve_greedy(table, cfg, list(range(len(robots))))


# ---------------------------------------------------------------------- independent


def solve_independent(table: ScoreTable, cfg: StrategyConfig, robot_ids: Sequence[int]) -> Assignment:
    b = _benefits(table, cfg)
    out = Assignment()
    for r, rid in enumerate(robot_ids):
        row = np.where(np.isfinite(table.costs[r]), b[r], -math.inf) if len(table.targets) else []
        i = best_target(table.targets, list(row))
        if i is None:
            out.idle.append(rid)
        else:
            out.pairs.append((rid, table.targets[i]))
    return out


def assign_independent(
    robots: Sequence[Pose | Key],
    clusters: Sequence[FrontierCluster],
    m: OccupancyOctree,
    sensor: SensorConfig,
    cfg: StrategyConfig,
) -> Assignment:
    table = build_table([_robot_key(m, r) for r in robots], clusters, m, sensor, cfg)
    return solve_independent(table, cfg, list(range(len(robots))))


SOLVERS = {
    Coordination.Independent: solve_independent,
    Coordination.Greedy: solve_greedy,
    Coordination.Hungarian: solve_hungarian,
}


def assign(table: ScoreTable, cfg: StrategyConfig, robot_ids: Sequence[int]) -> Assignment:
    return SOLVERS[cfg.coordination](table, cfg, robot_ids)
