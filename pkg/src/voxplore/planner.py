"""Grid path planning over mapped free space, ellipse waypoints, and
potential-field correction of planned waypoints."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .octree import OccupancyOctree, VoxelState
from .world import Key

# neighbour expansion order: +x, -x, +y, -y, +z, -z
NEIGHBORS: tuple[Key, ...] = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


class PlanError(Exception):
    pass


class NoPath(PlanError):
    pass


class StartNotFree(PlanError):
    pass


class GoalNotFree(PlanError):
    pass


class DegenerateDistance(PlanError):
    pass


class CorrectionFailed(PlanError):
    def __init__(self, index: int, iterations: int) -> None:
        super().__init__(f"waypoint {index} still violates clearance after {iterations} iterations")
        self.index = index
        self.iterations = iterations


@dataclass(frozen=True)
class Path:
    """Planned route. ``keys`` are the lattice voxels; ``waypoints`` start as
    their centres and may be displaced by :func:`validate_and_correct`."""

    waypoints: tuple[tuple[float, float, float], ...]
    length: float
    keys: tuple[Key, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.waypoints)


@dataclass(frozen=True)
class PotentialFieldConfig:
    eta: float = 1.0
    d0: float = 2.0
    attract_gain: float = 1.0
    step: float = 0.25
    max_iters: int = 50
    clearance: float = 1.0

    def __post_init__(self) -> None:
        for name in ("eta", "d0", "attract_gain", "step", "clearance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.clearance < self.d0:
            raise ValueError("clearance must be smaller than d0")

    @classmethod
    def for_resolution(cls, resolution: float, **overrides) -> "PotentialFieldConfig":
        base = dict(d0=2.0 * resolution, step=0.25 * resolution, clearance=1.0 * resolution)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple[float, float]
    a: float
    b: float
    altitude: float
    count: int

    def __post_init__(self) -> None:
        if not (self.a >= self.b > 0):
            raise ValueError("ellipse needs a >= b > 0")
        if self.count < 3:
            raise ValueError("ellipse needs at least 3 waypoints")


# ---------------------------------------------------------------------- search


def _free_flat(m: OccupancyOctree) -> np.ndarray:
    return (m.state_grid() == VoxelState.Free).ravel()


def plan_path(m: OccupancyOctree, start: Sequence[int], goal: Sequence[int]) -> Path:
    """Fewest-move 6-connected path through Free voxels (A*, Manhattan heuristic)."""
    n = m.size
    start, goal = tuple(int(v) for v in start), tuple(int(v) for v in goal)
    free = _free_flat(m)
    if not m.in_range(start) or not free[_flat(start, n)]:
        raise StartNotFree(f"start {start} is not a Free voxel")
    if not m.in_range(goal) or not free[_flat(goal, n)]:
        raise GoalNotFree(f"goal {goal} is not a Free voxel")
    s, g = _flat(start, n), _flat(goal, n)
    gx, gy, gz = goal
    nn = n * n
    steps = (nn, -nn, n, -n, 1, -1)
    came = {s: -1}
    cost = {s: 0}
    counter = 0
    heap = [(abs(start[0] - gx) + abs(start[1] - gy) + abs(start[2] - gz), 0, s)]
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur == g:
            break
        if cur in closed:
            continue
        closed.add(cur)
        cx, rem = divmod(cur, nn)
        cy, cz = divmod(rem, n)
        coords = (cx, cy, cz)
        gc = cost[cur] + 1
        for axis_dir, delta in enumerate(steps):
            axis, sign = divmod(axis_dir, 2)
            c = coords[axis] + (1 if sign == 0 else -1)
            if c < 0 or c >= n:
                continue
            nb = cur + delta
            if not free[nb] or nb in closed:
                continue
            if gc < cost.get(nb, math.inf):
                cost[nb] = gc
                came[nb] = cur
                bx, brem = divmod(nb, nn)
                by, bz = divmod(brem, n)
                counter += 1
                heapq.heappush(heap, (gc + abs(bx - gx) + abs(by - gy) + abs(bz - gz), counter, nb))
    else:
        raise NoPath(f"no Free path from {start} to {goal}")
    chain = []
    cur = g
    while cur != -1:
        chain.append(_unflat(cur, n))
        cur = came[cur]
    chain.reverse()
    return path_from_keys(m, chain)


def path_from_keys(m: OccupancyOctree, keys: Sequence[Key]) -> Path:
    keys = tuple(tuple(int(v) for v in k) for k in keys)
    return Path(tuple(m.center_of(k) for k in keys), (len(keys) - 1) * m.resolution, keys)  # type: ignore[arg-type]


def distance_field(m: OccupancyOctree, start: Sequence[int]) -> np.ndarray:
    """Move counts from ``start`` to every voxel through Free space (-1 if unreachable)."""
    n = m.size
    free = _free_flat(m)
    dist = np.full(n * n * n, -1, dtype=np.int64)
    s = _flat(start, n)
    if not m.in_range(start) or not free[s]:
        return dist.reshape(n, n, n)
    nn = n * n
    dist[s] = 0
    queue = deque([s])
    free_l = free.tolist()
    dist_l = dist.tolist()
    while queue:
        cur = queue.popleft()
        d = dist_l[cur] + 1
        cx, rem = divmod(cur, nn)
        cy, cz = divmod(rem, n)
        if cx + 1 < n and free_l[cur + nn] and dist_l[cur + nn] < 0:
            dist_l[cur + nn] = d
            queue.append(cur + nn)
        if cx > 0 and free_l[cur - nn] and dist_l[cur - nn] < 0:
            dist_l[cur - nn] = d
            queue.append(cur - nn)
        if cy + 1 < n and free_l[cur + n] and dist_l[cur + n] < 0:
            dist_l[cur + n] = d
            queue.append(cur + n)
        if cy > 0 and free_l[cur - n] and dist_l[cur - n] < 0:
            dist_l[cur - n] = d
            queue.append(cur - n)
        if cz + 1 < n and free_l[cur + 1] and dist_l[cur + 1] < 0:
            dist_l[cur + 1] = d
            queue.append(cur + 1)
        if cz > 0 and free_l[cur - 1] and dist_l[cur - 1] < 0:
            dist_l[cur - 1] = d
            queue.append(cur - 1)
    return np.array(dist_l, dtype=np.int64).reshape(n, n, n)


def _flat(key: Sequence[int], n: int) -> int:
    return (int(key[0]) * n + int(key[1])) * n + int(key[2])


def _unflat(i: int, n: int) -> Key:
    x, rem = divmod(i, n * n)
    y, z = divmod(rem, n)
    return (x, y, z)


# ---------------------------------------------------------------------- ellipse


def ellipse_targets(spec: EllipseSpec) -> list[tuple[float, float, float]]:
    """``count`` points counter-clockwise from angle 0 around the ellipse."""
    cx, cy = spec.center
    out = []
    for k in range(spec.count):
        theta = 2 * math.pi * k / spec.count
        out.append((cx + spec.a * math.cos(theta), cy + spec.b * math.sin(theta), float(spec.altitude)))
    return out


# ---------------------------------------------------------------------- potential field


def _occupied_near(m: OccupancyOctree, point: Sequence[float], radius: float) -> list[tuple[float, float, float]]:
    """Centres of Occupied voxels whose centre lies within ``radius`` of ``point``."""
    grid = m.state_grid()
    r = m.resolution
    n = m.size
    lo = [max(0, int(math.floor((point[i] - radius) / r - 0.5))) for i in range(3)]
    hi = [min(n - 1, int(math.floor((point[i] + radius) / r + 0.5))) for i in range(3)]
    if any(lo[i] > hi[i] for i in range(3)):
        return []
    sub = grid[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
    out = []
    r2 = radius * radius
    for x, y, z in np.argwhere(sub == VoxelState.Occupied):
        c = ((x + lo[0] + 0.5) * r, (y + lo[1] + 0.5) * r, (z + lo[2] + 0.5) * r)
        d2 = (point[0] - c[0]) ** 2 + (point[1] - c[1]) ** 2 + (point[2] - c[2]) ** 2
        if d2 < r2:
            out.append(c)
    return out


def repulsive_force(point: Sequence[float], m: OccupancyOctree, cfg: PotentialFieldConfig) -> tuple[float, float, float]:
    """Sum of eta*(1/d - 1/d0)/d^2 along the unit vector away from each
    Occupied voxel centre closer than d0."""
    fx = fy = fz = 0.0
    for o in _occupied_near(m, point, cfg.d0):
        vx, vy, vz = point[0] - o[0], point[1] - o[1], point[2] - o[2]
        d = math.sqrt(vx * vx + vy * vy + vz * vz)
        if d < 1e-9:
            raise DegenerateDistance(f"point {tuple(point)} coincides with an obstacle centre")
        mag = cfg.eta * (1.0 / d - 1.0 / cfg.d0) / (d * d)
        fx += mag * vx / d
        fy += mag * vy / d
        fz += mag * vz / d
    return (fx, fy, fz)


def violates_clearance(point: Sequence[float], m: OccupancyOctree, clearance: float) -> bool:
    return bool(_occupied_near(m, point, clearance))


def validate_and_correct(path: Path, m: OccupancyOctree, cfg: PotentialFieldConfig) -> Path:
    """Push interior waypoints that sit closer than ``cfg.clearance`` to an
    Occupied voxel centre along the combined repulsive/attractive field.

    Endpoints never move. Raises :class:`CorrectionFailed` when a waypoint
    still violates clearance after ``cfg.max_iters`` steps.
    """
    if not path.waypoints:
        raise ValueError("path must be non-empty")
    wps = list(path.waypoints)
    changed = False
    for i in range(1, len(wps) - 1):
        orig = wps[i]
        if not violates_clearance(orig, m, cfg.clearance):
            continue
        cur = orig
        ok = False
        for _ in range(cfg.max_iters):
            rep = repulsive_force(cur, m, cfg)
            f = [rep[k] + cfg.attract_gain * (orig[k] - cur[k]) for k in range(3)]
            norm = math.sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2])
            if norm > 0:
                cur = tuple(cur[k] + cfg.step * f[k] / norm for k in range(3))  # type: ignore[assignment]
            if not violates_clearance(cur, m, cfg.clearance):
                ok = True
                break
        if not ok:
            raise CorrectionFailed(i, cfg.max_iters)
        wps[i] = cur
        changed = True
    if not changed:
        return path
    return replace(path, waypoints=tuple(wps))
