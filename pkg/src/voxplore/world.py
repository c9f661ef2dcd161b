"""Ground-truth voxel worlds, voxel ray traversal and simulated range sensing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from . import seeding

Key = tuple[int, int, int]

FACE_OFFSETS: tuple[Key, ...] = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))

WORLD_KINDS = ("empty_box", "rooms_and_corridors", "building_shell", "two_corridor")

# origin shift applied before traversal; breaks rays that start exactly on a voxel face
_TIE_EPS = 1e-9


class WorldError(ValueError):
    pass


class InvalidDims(WorldError):
    pass


class FirePlacementError(WorldError):
    pass


class WorldFormatError(WorldError):
    pass


class OriginOutOfBounds(WorldError):
    pass


class PoseInsideObstacle(WorldError):
    pass


FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True, eq=False)
class WorldGrid:
    """Dense ground truth. Arrays are made read-only on construction."""

    dims: Key
    resolution: float
    occupied: np.ndarray
    fire: np.ndarray
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    building_center: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise InvalidDims(f"dims must be three positive integers, got {self.dims}")
        if not self.resolution > 0:
            raise WorldError(f"resolution must be positive, got {self.resolution}")
        occ = np.array(self.occupied, dtype=bool)
        fire = np.array(self.fire, dtype=bool)
        if occ.shape != dims or fire.shape != dims:
            raise WorldError("occupied/fire arrays must match dims")
        if np.any(fire & ~occ):
            raise WorldError("fire voxels must be occupied (they are observed as beam hits)")
        exposed = _face_exposed(occ)
        if np.any(fire & ~exposed):
            bad = tuple(int(v) for v in np.argwhere(fire & ~exposed)[0])
            raise WorldError(f"fire voxel {bad} has no traversable face neighbour")
        occ.flags.writeable = False
        fire.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "fire", fire)
        if self.building_center is None:
            object.__setattr__(
                self,
                "building_center",
                (self.origin[0] + dims[0] * self.resolution / 2, self.origin[1] + dims[1] * self.resolution / 2),
            )

    def in_bounds(self, key: Sequence[int]) -> bool:
        return all(0 <= int(key[i]) < self.dims[i] for i in range(3))

    def is_occupied(self, key: Sequence[int]) -> bool:
        return bool(self.occupied[key[0], key[1], key[2]])

    def key_of(self, point: Sequence[float]) -> Key:
        r = self.resolution
        return tuple(int(math.floor((point[i] - self.origin[i]) / r)) for i in range(3))  # type: ignore[return-value]

    def center_of(self, key: Sequence[int]) -> tuple[float, float, float]:
        r = self.resolution
        return tuple(self.origin[i] + (key[i] + 0.5) * r for i in range(3))  # type: ignore[return-value]

    @property
    def traversable(self) -> np.ndarray:
        return ~self.occupied

    def fire_voxels(self) -> list[Key]:
        return [tuple(int(v) for v in k) for k in np.argwhere(self.fire)]  # type: ignore[misc]

    def with_obstacle(self, key: Sequence[int]) -> "WorldGrid":
        occ = self.occupied.copy()
        occ[key[0], key[1], key[2]] = True
        return WorldGrid(self.dims, self.resolution, occ, self.fire.copy(), self.origin, self.building_center)

    def same_as(self, other: "WorldGrid") -> bool:
        return (
            self.dims == other.dims
            and self.resolution == other.resolution
            and self.origin == other.origin
            and np.array_equal(self.occupied, other.occupied)
            and np.array_equal(self.fire, other.fire)
        )


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "yaw", float(self.yaw) % (2 * math.pi))


@dataclass(frozen=True)
class SensorConfig:
    max_range: float = 4.0
    horizontal_rays: int = 24
    vertical_rays: int = 7
    vertical_fov: float = math.pi
    fire_detect_range: float | None = None
    range_noise: float = 0.0

    def __post_init__(self) -> None:
        if self.fire_detect_range is None:
            object.__setattr__(self, "fire_detect_range", self.max_range)
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.horizontal_rays < 1 or self.vertical_rays < 1:
            raise ValueError("ray counts must be >= 1")
        if not 0 <= self.vertical_fov <= math.pi:
            raise ValueError("vertical_fov must lie in [0, pi]")
        if not 0 < self.fire_detect_range <= self.max_range:  # type: ignore[operator]
            raise ValueError("fire_detect_range must lie in (0, max_range]")
        if self.range_noise < 0:
            raise ValueError("range_noise must be >= 0")


@dataclass(frozen=True)
class Beam:
    direction: tuple[float, float, float]
    range: float
    hit: bool
    # the struck voxel when the sensor knows it exactly; resolves edge grazes
    voxel: Key | None = None


@dataclass
class Scan:
    origin: Pose
    beams: list[Beam] = field(default_factory=list)
    fire_observations: list[Key] = field(default_factory=list)


# --------------------------------------------------------------------------
# traversal


def traverse(
    origin: Sequence[float],
    direction: Sequence[float],
    resolution: float,
    max_range: float,
    dims: Sequence[int],
    grid_origin: Sequence[float] = (0.0, 0.0, 0.0),
) -> Iterator[tuple[Key, float, float]]:
    """Yield ``(voxel, t_entry, t_exit)`` for every voxel the ray enters with
    ``t_entry <= max_range``, in crossing order, stopping at the grid bounds.

    Exact parametric stepping: at each step the axis whose boundary is crossed
    first advances. Simultaneous crossings advance x before y before z, which
    keeps consecutive voxels face-adjacent; the skipped-over voxel is then
    yielded with zero length (``t_entry == t_exit``).
    """
    eps = _TIE_EPS * resolution
    o = [float(origin[i]) - float(grid_origin[i]) + eps for i in range(3)]
    d = [float(direction[i]) for i in range(3)]
    if d[0] == 0.0 and d[1] == 0.0 and d[2] == 0.0:
        raise ValueError("direction must be non-zero")
    nx, ny, nz = int(dims[0]), int(dims[1]), int(dims[2])
    idx = [int(math.floor(o[i] / resolution)) for i in range(3)]
    if not (0 <= idx[0] < nx and 0 <= idx[1] < ny and 0 <= idx[2] < nz):
        raise OriginOutOfBounds(f"ray origin {tuple(origin)} outside grid")
    step = [0, 0, 0]
    t_max = [math.inf] * 3
    t_delta = [math.inf] * 3
    for i in range(3):
        if d[i] > 0:
            step[i] = 1
            t_max[i] = ((idx[i] + 1) * resolution - o[i]) / d[i]
            t_delta[i] = resolution / d[i]
        elif d[i] < 0:
            step[i] = -1
            t_max[i] = (idx[i] * resolution - o[i]) / d[i]
            t_delta[i] = -resolution / d[i]
    ix, iy, iz = idx
    t = 0.0
    while True:
        tx, ty, tz = t_max
        if tx <= ty and tx <= tz:
            axis, t_exit = 0, tx
        elif ty <= tz:
            axis, t_exit = 1, ty
        else:
            axis, t_exit = 2, tz
        yield (ix, iy, iz), t, t_exit
        if t_exit > max_range or t_exit == math.inf:
            return
        t = t_exit
        t_max[axis] += t_delta[axis]
        if axis == 0:
            ix += step[0]
            if not 0 <= ix < nx:
                return
        elif axis == 1:
            iy += step[1]
            if not 0 <= iy < ny:
                return
        else:
            iz += step[2]
            if not 0 <= iz < nz:
                return


def _unit(direction: Sequence[float]) -> tuple[float, float, float]:
    n = math.sqrt(sum(float(c) * float(c) for c in direction))
    if n == 0.0:
        raise ValueError("direction must be non-zero")
    return (direction[0] / n, direction[1] / n, direction[2] / n)


def cast_ray(
    world: WorldGrid,
    origin: Sequence[float],
    direction: Sequence[float],
    max_range: float,
) -> tuple[list[Key], Key | None]:
    """Voxels crossed from ``origin`` until the first occupied voxel or ``max_range``."""
    visited, hit, _ = _cast(world, origin, _unit(direction), max_range)
    return visited, hit


def _cast(world: WorldGrid, origin, direction, max_range) -> tuple[list[Key], Key | None, float]:
    occ = world.occupied
    visited: list[Key] = []
    for key, t_entry, _ in traverse(origin, direction, world.resolution, max_range, world.dims, world.origin):
        visited.append(key)
        if occ[key]:
            return visited, key, t_entry
    return visited, None, max_range


@lru_cache(maxsize=64)
def beam_directions(cfg: SensorConfig, yaw: float = 0.0) -> tuple[tuple[float, float, float], ...]:
    """Azimuths evenly spaced over [0, 2pi) from ``yaw``; elevations evenly
    spaced over the vertical fov (inclusive ends), or level for one row."""
    if cfg.vertical_rays == 1:
        elevations = [0.0]
    else:
        half = cfg.vertical_fov / 2
        elevations = [-half + j * cfg.vertical_fov / (cfg.vertical_rays - 1) for j in range(cfg.vertical_rays)]
    out = []
    for i in range(cfg.horizontal_rays):
        az = yaw + 2 * math.pi * i / cfg.horizontal_rays
        for el in elevations:
            v = [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
            # snap float residue (cos(pi/2) ~ 6e-17) so axis beams stay on axis
            v = [0.0 if abs(c) < 1e-12 else c for c in v]
            out.append(_unit(v))
    return tuple(out)


def sense(world: WorldGrid, pose: Pose, cfg: SensorConfig, rng: np.random.Generator | None = None) -> Scan:
    key = world.key_of(pose.position)
    if not world.in_bounds(key):
        raise OriginOutOfBounds(f"pose {pose.position} outside world")
    if world.is_occupied(key):
        raise PoseInsideObstacle(f"pose {pose.position} lies in occupied voxel {key}")
    beams: list[Beam] = []
    fires: list[Key] = []
    seen: set[Key] = set()
    for direction in beam_directions(cfg, pose.yaw):
        _, hit, rng_m = _cast(world, pose.position, direction, cfg.max_range)
        if hit is not None:
            if world.fire[hit] and rng_m <= cfg.fire_detect_range and hit not in seen:  # type: ignore[operator]
                seen.add(hit)
                fires.append(hit)
            if cfg.range_noise > 0 and rng is not None:
                rng_m = min(max(rng_m + rng.normal(0.0, cfg.range_noise), 1e-6 * world.resolution), cfg.max_range)
                beams.append(Beam(direction, rng_m, True))
            else:
                beams.append(Beam(direction, rng_m, True, hit))
        else:
            beams.append(Beam(direction, cfg.max_range, False))
    return Scan(pose, beams, sorted(fires))


# --------------------------------------------------------------------------
# connectivity helpers


def _face_exposed(occ: np.ndarray) -> np.ndarray:
    """Occupied voxels with at least one in-bounds traversable face neighbour."""
    free = ~occ
    exposed = np.zeros_like(occ)
    for axis in range(3):
        for shift in (1, -1):
            nb = np.zeros_like(occ)
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if shift == 1:
                src[axis], dst[axis] = slice(1, None), slice(None, -1)
            else:
                src[axis], dst[axis] = slice(None, -1), slice(1, None)
            nb[tuple(dst)] = free[tuple(src)]
            exposed |= nb
    return exposed & occ


def reachable_from(traversable: np.ndarray, starts: Sequence[Sequence[int]]) -> np.ndarray:
    """Boolean mask of voxels 6-connected to any start through ``traversable``."""
    labels, _ = ndimage.label(traversable, structure=FACE_STRUCTURE)
    ids = {int(labels[tuple(s)]) for s in starts if traversable[tuple(s)]}
    ids.discard(0)
    if not ids:
        return np.zeros_like(traversable, dtype=bool)
    return np.isin(labels, sorted(ids))


def component_count(traversable: np.ndarray) -> int:
    return int(ndimage.label(traversable, structure=FACE_STRUCTURE)[1])


# --------------------------------------------------------------------------
# generation


def generate_world(
    kind: str,
    dims: Sequence[int],
    seed: int,
    fire_count: int = 0,
    resolution: float = 1.0,
) -> WorldGrid:
    """Procedural world; a pure function of its arguments.

    Every kind has watertight outer walls and one connected traversable region.
    Fire voxels are wall voxels with an exposed face.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 4:
        raise InvalidDims(f"every axis needs at least 4 voxels, got {dims}")
    if fire_count < 0:
        raise FirePlacementError("fire_count must be >= 0")
    if kind not in WORLD_KINDS:
        raise WorldError(f"unknown world kind {kind!r}; expected one of {', '.join(WORLD_KINDS)}")
    rng = seeding.stream(seed, "world")
    occ = np.ones(dims, dtype=bool)
    occ[1:-1, 1:-1, 1:-1] = False
    center = None
    if kind == "rooms_and_corridors":
        _carve_rooms(occ, rng)
    elif kind == "building_shell":
        center = _carve_building(occ, rng, resolution)
    elif kind == "two_corridor":
        _carve_two_corridor(occ, rng)
    fire = _place_fires(occ, fire_count, rng)
    return WorldGrid(dims, resolution, occ, fire, building_center=center)


def _wall_positions(lo: int, hi: int, rng: np.random.Generator, min_room: int = 3) -> list[int]:
    """Interior partition walls between lo..hi (inclusive interior), rooms >= min_room wide."""
    walls = []
    start = lo
    while True:
        earliest = start + min_room
        latest = hi - min_room
        if earliest > latest:
            break
        span = min(latest, earliest + min_room + 2)
        w = int(rng.integers(earliest, span + 1))
        walls.append(w)
        start = w + 1
    return walls


def _carve_rooms(occ: np.ndarray, rng: np.random.Generator) -> None:
    nx, ny, _ = occ.shape
    # central corridor band two voxels wide, walled on both sides
    if ny - 2 < 2 + 2 + 2 or nx - 2 < 3:
        return
    cy = (ny - 2) // 2
    lower_wall, upper_wall = cy - 1, cy + 2
    occ[1:-1, lower_wall, 1:-1] = True
    occ[1:-1, upper_wall, 1:-1] = True
    for y_lo, y_hi, wall_y in ((1, lower_wall - 1, lower_wall), (upper_wall + 1, ny - 2, upper_wall)):
        xs = _wall_positions(1, nx - 2, rng)
        for x in xs:
            occ[x, y_lo : y_hi + 1, 1:-1] = True
        bounds = [1] + [x + 1 for x in xs]
        ends = [x - 1 for x in xs] + [nx - 2]
        for i, (a, b) in enumerate(zip(bounds, ends)):
            door_x = int(rng.integers(a, b + 1))
            occ[door_x, wall_y, 1:-1] = False
            # occasional connecting door to the next room along the row
            if i + 1 < len(bounds) and rng.random() < 0.5:
                door_y = int(rng.integers(y_lo, y_hi + 1))
                occ[xs[i], door_y, 1:-1] = False


def _carve_building(occ: np.ndarray, rng: np.random.Generator, resolution: float) -> tuple[float, float]:
    nx, ny, nz = occ.shape
    x0, x1 = nx // 4, nx - 1 - nx // 4
    y0, y1 = ny // 4, ny - 1 - ny // 4
    center = ((x0 + x1 + 1) / 2 * resolution, (y0 + y1 + 1) / 2 * resolution)
    if x1 - x0 < 3 or y1 - y0 < 3:
        return center
    top = nz - 2
    roof = top - 1 if nz >= 6 else None
    zt = roof if roof is not None else top
    occ[x0 : x1 + 1, y0, 1 : zt + 1] = True
    occ[x0 : x1 + 1, y1, 1 : zt + 1] = True
    occ[x0, y0 : y1 + 1, 1 : zt + 1] = True
    occ[x1, y0 : y1 + 1, 1 : zt + 1] = True
    if roof is not None:
        occ[x0 : x1 + 1, y0 : y1 + 1, roof] = True
    door_h = max(1, min(2, zt - 1)) if roof is not None else zt
    # one door per side chosen at random, at least one guaranteed
    sides = [s for s in range(4) if rng.random() < 0.5] or [int(rng.integers(0, 4))]
    for s in sides:
        if s in (0, 1):
            x = int(rng.integers(x0 + 1, x1))
            y = y0 if s == 0 else y1
        else:
            y = int(rng.integers(y0 + 1, y1))
            x = x0 if s == 2 else x1
        occ[x, y, 1 : 1 + door_h] = False
    return center


def _carve_two_corridor(occ: np.ndarray, rng: np.random.Generator) -> None:
    nx, ny, _ = occ.shape
    if nx < 10 or ny < 9:
        return
    # start hall x in [1, 3]; corridors y in [1, 2] and [ny-3, ny-2]; solid core between
    core = (slice(4, nx - 1), slice(3, ny - 3), slice(1, -1))
    occ[core] = True
    for y_open, direction in ((3, 1), (ny - 4, -1)):
        n_pockets = int(rng.integers(1, 3))
        for _ in range(n_pockets):
            x = int(rng.integers(5, max(6, nx - 3)))
            depth = int(rng.integers(1, max(2, (ny - 6) // 2)))
            for k in range(depth):
                occ[x : x + 2, y_open + direction * k, 1:-1] = False


def _place_fires(occ: np.ndarray, fire_count: int, rng: np.random.Generator) -> np.ndarray:
    fire = np.zeros_like(occ)
    if fire_count == 0:
        return fire
    candidates = np.argwhere(_face_exposed(occ))
    if fire_count > len(candidates):
        raise FirePlacementError(f"fire_count {fire_count} exceeds {len(candidates)} placeable wall faces")
    pick = rng.choice(len(candidates), size=fire_count, replace=False)
    for i in sorted(int(p) for p in pick):
        fire[tuple(candidates[i])] = True
    return fire


def interior_traversable_count(world: WorldGrid) -> int:
    return int(np.count_nonzero(~world.occupied))


# --------------------------------------------------------------------------
# text format


WORLD_HEADER = "voxplore-world v1"


def world_to_text(world: WorldGrid) -> str:
    nx, ny, nz = world.dims
    lines = [f"{WORLD_HEADER} {nx} {ny} {nz} {world.resolution!r}"]
    for x, y, z in np.argwhere(world.occupied):
        tag = "fire" if world.fire[x, y, z] else "occupied"
        lines.append(f"{x} {y} {z} {tag}")
    return "\n".join(lines) + "\n"


def world_from_text(text: str) -> WorldGrid:
    lines = text.splitlines()
    if not lines:
        raise WorldFormatError("empty world file")
    head = lines[0].split()
    if len(head) != 6 or " ".join(head[:2]) != WORLD_HEADER:
        raise WorldFormatError(f"line 1: expected '{WORLD_HEADER} nx ny nz resolution'")
    try:
        dims = tuple(int(v) for v in head[2:5])
        res = float(head[5])
    except ValueError as exc:
        raise WorldFormatError(f"line 1: {exc}") from None
    if min(dims) <= 0 or not res > 0:
        raise WorldFormatError("line 1: dims and resolution must be positive")
    occ = np.zeros(dims, dtype=bool)
    fire = np.zeros(dims, dtype=bool)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 or parts[3] not in ("occupied", "fire"):
            raise WorldFormatError(f"line {lineno}: expected 'x y z occupied|fire'")
        try:
            x, y, z = (int(v) for v in parts[:3])
        except ValueError:
            raise WorldFormatError(f"line {lineno}: voxel indices must be integers") from None
        if not (0 <= x < dims[0] and 0 <= y < dims[1] and 0 <= z < dims[2]):
            raise WorldFormatError(f"line {lineno}: voxel {(x, y, z)} out of bounds")
        occ[x, y, z] = True
        if parts[3] == "fire":
            fire[x, y, z] = True
    try:
        return WorldGrid(dims, res, occ, fire)
    except WorldError as exc:
        raise WorldFormatError(str(exc)) from None


def save_world(world: WorldGrid, path: str | Path) -> None:
    Path(path).write_text(world_to_text(world))


def load_world(path: str | Path) -> WorldGrid:
    return world_from_text(Path(path).read_text())
