"""Probabilistic occupancy octree with log-odds updates and lossless pruning.

Unknown space is never stored: a voxel is Unknown exactly when no node covers
it. Leaves may sit above the deepest level after pruning; such a leaf stands
for a uniform cube of ``2**(max_depth - depth)`` voxels per side and is split
again on the next update that lands inside it.

``memory_stats`` reports ``node_count * NODE_BYTES`` as its byte estimate,
with ``NODE_BYTES = 40`` (one float payload, a child-array pointer and
allocator overhead on a 64-bit build).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .world import Key, Scan, traverse

NODE_BYTES = 40
MAX_DEPTH_LIMIT = 16
# dense views are refused beyond this depth (2**(3*8) cells = 16M)
DENSE_DEPTH_LIMIT = 8


class MapError(ValueError):
    pass


class InvalidParams(MapError):
    pass


class KeyOutOfRange(MapError):
    pass


class ScanOutOfBounds(MapError):
    pass


class MapFormatError(MapError):
    pass


class VoxelState(enum.IntEnum):
    Unknown = 0
    Free = 1
    Occupied = 2


@dataclass(frozen=True)
class LogOddsParams:
    l_hit: float = 0.85
    l_miss: float = -0.4
    l_min: float = -2.0
    l_max: float = 3.5
    occ_threshold: float = 0.0

    def __post_init__(self) -> None:
        if not (self.l_min < 0 < self.l_max):
            raise InvalidParams("need l_min < 0 < l_max")
        if not self.l_hit > 0:
            raise InvalidParams("l_hit must be positive")
        if not self.l_miss < 0:
            raise InvalidParams("l_miss must be negative")
        if not self.l_min <= self.occ_threshold <= self.l_max:
            raise InvalidParams("occ_threshold must lie within the clamp bounds")


def logistic(l: float) -> float:
    return 1.0 / (1.0 + math.exp(-l))


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


class Leaf(NamedTuple):
    key: Key  # min corner of the cube
    size: int  # edge length in voxels
    logodds: float
    state: VoxelState


class _Node:
    __slots__ = ("children", "value")

    def __init__(self, value: float | None = None) -> None:
        self.children: list[_Node | None] | None = None
        self.value = value


class OccupancyOctree:
    def __init__(self, resolution: float, max_depth: int, params: LogOddsParams | None = None) -> None:
        if not resolution > 0:
            raise InvalidParams(f"resolution must be positive, got {resolution}")
        if not (isinstance(max_depth, (int, np.integer)) and 1 <= max_depth <= MAX_DEPTH_LIMIT):
            raise InvalidParams(f"max_depth must be an integer in [1, {MAX_DEPTH_LIMIT}], got {max_depth}")
        self.resolution = float(resolution)
        self.max_depth = int(max_depth)
        self.params = params or LogOddsParams()
        self.root: _Node | None = None
        self.version = 0
        self._dense_lo: np.ndarray | None = None
        self._dense_known: np.ndarray | None = None
        self._state_cache: tuple[int, np.ndarray] | None = None

    @property
    def size(self) -> int:
        """Voxels per axis of the addressable cube."""
        return 1 << self.max_depth

    def key_of(self, point: Sequence[float]) -> Key:
        r = self.resolution
        return (int(math.floor(point[0] / r)), int(math.floor(point[1] / r)), int(math.floor(point[2] / r)))

    def center_of(self, key: Sequence[int]) -> tuple[float, float, float]:
        r = self.resolution
        return ((key[0] + 0.5) * r, (key[1] + 0.5) * r, (key[2] + 0.5) * r)

    def in_range(self, key: Sequence[int]) -> bool:
        n = self.size
        return 0 <= key[0] < n and 0 <= key[1] < n and 0 <= key[2] < n

    def _check(self, key: Sequence[int]) -> None:
        if not self.in_range(key):
            raise KeyOutOfRange(f"key {tuple(key)} outside [0, {self.size})^3")

    # ------------------------------------------------------------------ writes

    def update_voxel(self, key: Sequence[int], hit: bool) -> float:
        """Add ``l_hit`` or ``l_miss`` to one voxel (clamped) and return the new value."""
        self._check(key)
        p = self.params
        x, y, z = int(key[0]), int(key[1]), int(key[2])
        if self.root is None:
            self.root = _Node()
        node = self.root
        for level in range(self.max_depth - 1, -1, -1):
            if node.children is None:
                node.children = [None] * 8
                if node.value is not None:
                    # pruned leaf: split into 8 copies before descending
                    v = node.value
                    node.children = [_Node(v) for _ in range(8)]
                    node.value = None
            i = ((x >> level) & 1) | (((y >> level) & 1) << 1) | (((z >> level) & 1) << 2)
            child = node.children[i]
            if child is None:
                child = node.children[i] = _Node()
            node = child
        old = node.value if node.value is not None else 0.0
        new = old + (p.l_hit if hit else p.l_miss)
        if new > p.l_max:
            new = p.l_max
        elif new < p.l_min:
            new = p.l_min
        node.value = new
        self.version += 1
        if self._dense_lo is not None:
            self._dense_lo[x, y, z] = new
            self._dense_known[x, y, z] = True  # type: ignore[index]
        return new

    def integrate_scan(self, scan: Scan) -> tuple[int, int]:
        """Apply one scan; returns ``(miss_updates, hit_updates)``.

        Each voxel touched by the scan is updated once; a hit from any beam
        wins over misses from others. A hit beam ends at ``beam.voxel`` when
        given, otherwise at the voxel containing the endpoint (a point on a
        face belongs to the voxel beyond it). Beam segments outside the cube
        are dropped.
        """
        origin = scan.origin.position
        if not self.in_range(self.key_of(origin)):
            raise ScanOutOfBounds(f"scan origin {origin} outside the map cube")
        cube = (self.size,) * 3
        marks: dict[Key, bool] = {}
        for beam in scan.beams:
            r = beam.range
            for key, _, t_exit in traverse(origin, beam.direction, self.resolution, r, cube):
                # endpoint: the reported voxel, else the one the range ends inside
                if beam.hit and (key == beam.voxel or t_exit > r):
                    marks[key] = True
                    break
                if key not in marks:
                    marks[key] = False
        misses = hits = 0
        for key in sorted(marks):
            hit = marks[key]
            self.update_voxel(key, hit)
            if hit:
                hits += 1
            else:
                misses += 1
        return misses, hits

    def prune(self) -> int:
        """Collapse every full set of 8 equal-valued sibling leaves into the
        parent, bottom-up to a fixpoint. Returns the number of nodes removed."""
        if self.root is None:
            return 0
        removed = _prune(self.root)
        if removed:
            self.version += 1
        return removed

    # ------------------------------------------------------------------ reads

    def logodds(self, key: Sequence[int]) -> float | None:
        self._check(key)
        node = self.root
        x, y, z = int(key[0]), int(key[1]), int(key[2])
        for level in range(self.max_depth - 1, -1, -1):
            if node is None:
                return None
            if node.children is None:
                return node.value
            i = ((x >> level) & 1) | (((y >> level) & 1) << 1) | (((z >> level) & 1) << 2)
            node = node.children[i]
        return None if node is None else node.value

    def state_of(self, key: Sequence[int]) -> VoxelState:
        l = self.logodds(key)
        if l is None:
            return VoxelState.Unknown
        return VoxelState.Occupied if l > self.params.occ_threshold else VoxelState.Free

    def classify(self, l: float) -> VoxelState:
        return VoxelState.Occupied if l > self.params.occ_threshold else VoxelState.Free

    def leaf_iter(self) -> Iterator[Leaf]:
        """Leaves in depth-first child order; cubes partition the observed region."""
        if self.root is None:
            return
        stack: list[tuple[_Node, int, int, int, int]] = [(self.root, 0, 0, 0, self.size)]
        while stack:
            node, x, y, z, size = stack.pop()
            if node.children is None:
                if node.value is not None:
                    yield Leaf((x, y, z), size, node.value, self.classify(node.value))
                continue
            half = size >> 1
            for i in range(7, -1, -1):
                child = node.children[i]
                if child is not None:
                    stack.append((child, x + (i & 1) * half, y + ((i >> 1) & 1) * half, z + ((i >> 2) & 1) * half, half))

    def memory_stats(self) -> tuple[int, int, int]:
        """``(node_count, leaf_count, estimated_bytes)``."""
        if self.root is None:
            return 0, 0, 0
        nodes = leaves = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            nodes += 1
            if node.children is None:
                leaves += 1
            else:
                stack.extend(c for c in node.children if c is not None)
        return nodes, leaves, nodes * NODE_BYTES

    def node_count(self) -> int:
        return self.memory_stats()[0]

    # ------------------------------------------------------------------ dense views

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """``(known, logodds)`` arrays over the whole cube.

        Built on first use, then kept current by every update. Callers must
        treat them as read-only.
        """
        if self._dense_lo is None:
            if self.max_depth > DENSE_DEPTH_LIMIT:
                raise MapError(f"dense view refused for max_depth > {DENSE_DEPTH_LIMIT}")
            n = self.size
            lo = np.zeros((n, n, n), dtype=np.float64)
            known = np.zeros((n, n, n), dtype=bool)
            for leaf in self.leaf_iter():
                x, y, z = leaf.key
                s = leaf.size
                lo[x : x + s, y : y + s, z : z + s] = leaf.logodds
                known[x : x + s, y : y + s, z : z + s] = True
            self._dense_lo, self._dense_known = lo, known
        return self._dense_known, self._dense_lo  # type: ignore[return-value]

    def state_grid(self) -> np.ndarray:
        """``VoxelState`` codes for every voxel of the cube (int8)."""
        if self._state_cache is not None and self._state_cache[0] == self.version:
            return self._state_cache[1]
        known, lo = self.dense()
        grid = np.zeros(known.shape, dtype=np.int8)
        grid[known] = VoxelState.Free
        grid[known & (lo > self.params.occ_threshold)] = VoxelState.Occupied
        grid.flags.writeable = False
        self._state_cache = (self.version, grid)
        return grid

    def copy(self) -> "OccupancyOctree":
        other = OccupancyOctree(self.resolution, self.max_depth, self.params)
        other.root = _copy(self.root)
        return other


def _copy(node: _Node | None) -> _Node | None:
    if node is None:
        return None
    out = _Node(node.value)
    if node.children is not None:
        out.children = [_copy(c) for c in node.children]
    return out


def _prune(node: _Node) -> int:
    if node.children is None:
        return 0
    removed = 0
    for c in node.children:
        if c is not None:
            removed += _prune(c)
    first = node.children[0]
    if first is None or first.children is not None:
        return removed
    v = first.value
    for c in node.children[1:]:
        if c is None or c.children is not None or c.value != v:
            return removed
    node.children = None
    node.value = v
    return removed + 8


def new_map(resolution: float, max_depth: int, params: LogOddsParams | None = None) -> OccupancyOctree:
    return OccupancyOctree(resolution, max_depth, params)


def depth_for(dims: Sequence[int]) -> int:
    """Smallest depth whose cube holds ``dims`` voxels per axis."""
    n = max(int(d) for d in dims)
    return max(1, (n - 1).bit_length())


# ---------------------------------------------------------------------- text format

MAP_HEADER = "voxplore-map v1"


def map_to_text(m: OccupancyOctree) -> str:
    lines = [f"{MAP_HEADER} {m.resolution!r} {m.max_depth}"]
    for leaf in sorted(m.leaf_iter()):
        x, y, z = leaf.key
        lines.append(f"{x} {y} {z} {leaf.size} {leaf.logodds!r}")
    return "\n".join(lines) + "\n"


def map_from_text(text: str, params: LogOddsParams | None = None) -> OccupancyOctree:
    lines = text.splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 4 or " ".join(head[:2]) != MAP_HEADER:
        raise MapFormatError(f"line 1: expected '{MAP_HEADER} resolution max_depth'")
    try:
        m = OccupancyOctree(float(head[2]), int(head[3]), params)
    except (ValueError, InvalidParams) as exc:
        raise MapFormatError(f"line 1: {exc}") from None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            x, y, z, size = (int(v) for v in parts[:4])
            value = float(parts[4])
            if len(parts) != 5:
                raise ValueError
        except (ValueError, IndexError):
            raise MapFormatError(f"line {lineno}: expected 'ix iy iz size logodds'") from None
        _insert_cube(m, (x, y, z), size, value, lineno)
    return m


def _insert_cube(m: OccupancyOctree, key: Key, size: int, value: float, lineno: int) -> None:
    if size < 1 or size & (size - 1) or size > m.size:
        raise MapFormatError(f"line {lineno}: cube size must be a power of two <= {m.size}")
    if any(k % size for k in key) or not m.in_range(key):
        raise MapFormatError(f"line {lineno}: cube corner {key} not aligned or out of range")
    level_stop = size.bit_length() - 1
    if m.root is None:
        m.root = _Node()
    node = m.root
    x, y, z = key
    for level in range(m.max_depth - 1, level_stop - 1, -1):
        if node.children is None:
            if node.value is not None:
                raise MapFormatError(f"line {lineno}: cube overlaps an earlier cube")
            node.children = [None] * 8
        i = ((x >> level) & 1) | (((y >> level) & 1) << 1) | (((z >> level) & 1) << 2)
        child = node.children[i]
        if child is None:
            child = node.children[i] = _Node()
        node = child
    if node.children is not None or node.value is not None:
        raise MapFormatError(f"line {lineno}: cube overlaps an earlier cube")
    node.value = value
    m.version += 1


def save_map(m: OccupancyOctree, path: str | Path) -> None:
    Path(path).write_text(map_to_text(m))


def load_map(path: str | Path, params: LogOddsParams | None = None) -> OccupancyOctree:
    return map_from_text(Path(path).read_text(), params)
