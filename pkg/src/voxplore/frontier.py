"""Frontier cells (known-free voxels touching unknown space) and their clusters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .octree import OccupancyOctree, VoxelState
from .world import Key

DEFAULT_MIN_CLUSTER_SIZE = 3

_CLUSTER_STRUCTURE = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True, order=True)
class FrontierCell:
    key: Key
    unknown_neighbors: int


@dataclass(frozen=True)
class FrontierCluster:
    cells: tuple[FrontierCell, ...]
    centroid: tuple[float, float, float]
    representative: Key

    @property
    def size(self) -> int:
        return len(self.cells)

    @property
    def keys(self) -> tuple[Key, ...]:
        return tuple(c.key for c in self.cells)


def detect_frontiers(
    m: OccupancyOctree,
    bounds: tuple[Sequence[int], Sequence[int]] | None = None,
    outside_is_unknown: bool = False,
) -> list[FrontierCell]:
    """Free voxels inside ``bounds`` (``(lo, hi)``, hi exclusive; default the
    whole cube) with at least one Unknown face neighbour, sorted by key.

    Neighbours outside ``bounds`` are ignored unless ``outside_is_unknown``.
    Pruned free leaves are examined voxel by voxel through the dense view.
    """
    grid = m.state_grid()
    n = m.size
    lo, hi = (0, 0, 0), (n, n, n)
    if bounds is not None:
        lo, hi = tuple(int(v) for v in bounds[0]), tuple(int(v) for v in bounds[1])
        if any(lo[i] < 0 or hi[i] > n or lo[i] >= hi[i] for i in range(3)):
            raise ValueError(f"bounds {bounds} not within the map cube")
    sub = grid[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    free = sub == VoxelState.Free
    unknown = sub == VoxelState.Unknown
    padded = np.pad(unknown, 1, constant_values=outside_is_unknown)
    count = np.zeros(sub.shape, dtype=np.int8)
    sx, sy, sz = sub.shape
    for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
        count += padded[1 + dx : 1 + dx + sx, 1 + dy : 1 + dy + sy, 1 + dz : 1 + dz + sz]
    mask = free & (count > 0)
    idx = np.argwhere(mask)
    return [
        FrontierCell((int(x) + lo[0], int(y) + lo[1], int(z) + lo[2]), int(count[x, y, z])) for x, y, z in idx
    ]


def cluster_frontiers(
    cells: Iterable[FrontierCell],
    min_cluster_size: int = DEFAULT_MIN_CLUSTER_SIZE,
    resolution: float = 1.0,
) -> list[FrontierCluster]:
    """26-connected components of ``cells`` with at least ``min_cluster_size``
    members, largest first, ties broken by smallest member key."""
    if min_cluster_size < 1:
        raise ValueError("min_cluster_size must be >= 1")
    cells = sorted(set(cells))
    if not cells:
        return []
    keys = np.array([c.key for c in cells], dtype=np.int64)
    lo = keys.min(axis=0)
    shape = tuple(keys.max(axis=0) - lo + 1)
    mask = np.zeros(shape, dtype=bool)
    local = keys - lo
    mask[local[:, 0], local[:, 1], local[:, 2]] = True
    labels, count = ndimage.label(mask, structure=_CLUSTER_STRUCTURE)
    groups: dict[int, list[FrontierCell]] = {}
    for cell, (x, y, z) in zip(cells, local):
        groups.setdefault(int(labels[x, y, z]), []).append(cell)
    clusters = [_make_cluster(g, resolution) for g in groups.values() if len(g) >= min_cluster_size]
    clusters.sort(key=lambda c: (-c.size, c.cells[0].key))
    return clusters


def _make_cluster(members: list[FrontierCell], resolution: float) -> FrontierCluster:
    members = sorted(members)
    k = np.array([c.key for c in members], dtype=np.int64)
    centroid = tuple(float(v) for v in ((k.mean(axis=0) + 0.5) * resolution))
    return FrontierCluster(tuple(members), centroid, _nearest_to_mean(members))  # type: ignore[arg-type]


def _nearest_to_mean(members: Sequence[FrontierCell]) -> Key:
    # compare n^2 * squared distance in integers so ties are exact
    n = len(members)
    sums = [sum(c.key[i] for c in members) for i in range(3)]
    best = None
    for c in members:
        d2 = sum((n * c.key[i] - sums[i]) ** 2 for i in range(3))
        if best is None or (d2, c.key) < best:
            best = (d2, c.key)
    return best[1]  # type: ignore[index]


def representative(cluster: FrontierCluster) -> Key:
    """Member cell nearest the centroid; lexicographically smallest on ties."""
    return _nearest_to_mean(cluster.cells)
