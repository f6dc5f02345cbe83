"""Geodesic distance oracle over the clearance surface z = h(x, y) + H_safety.

Edge cost between 8-connected neighbours is the 3D length between their cell
centres at clearance altitude; diagonal steps may not cut obstacle corners.
Path lengths are summed with ``math.fsum`` along the returned waypoints, so any
two optimal paths built from the same multiset of steps report the same
float.

Distance-cache dump format::

    uavroute-distcache 1
    <x1> <y1> <x2> <y2> <length> <degraded 0/1>
    ...
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _astar_kernels as kernels
from .terrain import Position, TerrainGrid

CACHE_FORMAT = "uavroute-distcache"
CACHE_VERSION = 1


class Unreachable(Exception):
    def __init__(self, a: Position, b: Position, reason: str = "no path"):
        super().__init__(f"{a} -> {b}: {reason}")
        self.a = a
        self.b = b


@dataclass(frozen=True, eq=False)
class GeodesicResult:
    length: float
    waypoints: np.ndarray  # (M, 3) array of (x, y, z); x, y in cell units

    @property
    def cells(self) -> List[Position]:
        return [(int(x), int(y)) for x, y in self.waypoints[:, :2]]


def _surface(terrain: TerrainGrid) -> np.ndarray:
    # cached on the (frozen) terrain object; plain attribute set via object.__setattr__
    z = terrain.__dict__.get("_clearance")
    if z is None:
        z = np.ascontiguousarray(terrain.elevations + terrain.safety_altitude)
        object.__setattr__(terrain, "_clearance", z)
    return z


def edge_cost(terrain: TerrainGrid, a: Position, b: Position) -> float:
    z = _surface(terrain)
    dx, dy = b[0] - a[0], b[1] - a[1]
    dz = z[b[1], b[0]] - z[a[1], a[0]]
    cs = terrain.cell_size
    return math.sqrt((dx * cs) ** 2 + (dy * cs) ** 2 + dz * dz)


def straight_line(terrain: TerrainGrid, a: Position, b: Position) -> float:
    """3D distance between the clearance points of two cells (the A* heuristic)."""
    pa, pb = terrain.point3d(a), terrain.point3d(b)
    return math.dist(pa, pb)


def path_length(terrain: TerrainGrid, cells: Sequence[Position]) -> float:
    return math.fsum(edge_cost(terrain, cells[i], cells[i + 1]) for i in range(len(cells) - 1))


def _check(terrain: TerrainGrid, p: Position):
    if not terrain.inside(p):
        raise ValueError(f"{p} lies outside the grid")
    if terrain.blocked(p):
        raise ValueError(f"{p} lies on a blocked cell")


def _waypoints(terrain: TerrainGrid, cells: Sequence[Position]) -> np.ndarray:
    z = _surface(terrain)
    out = np.empty((len(cells), 3))
    for i, (x, y) in enumerate(cells):
        out[i] = (x, y, z[y, x])
    return out


def geodesic(terrain: TerrainGrid, a: Position, b: Position, max_expansions: int = 0,
             backend: Optional[str] = None) -> GeodesicResult:
    """Shortest 8-connected path from ``a`` to ``b``.

    Raises :class:`Unreachable` when no path exists, or when ``max_expansions``
    (0 means unlimited) runs out first.
    """
    a = (int(a[0]), int(a[1]))
    b = (int(b[0]), int(b[1]))
    _check(terrain, a)
    _check(terrain, b)
    if a == b:
        return GeodesicResult(0.0, _waypoints(terrain, [a]))
    status, path, _ = kernels.astar(_surface(terrain), terrain.obstacle_mask,
                                    terrain.cell_size, a[0], a[1], b[0], b[1],
                                    max_expansions, backend)
    if status == kernels.UNREACHABLE:
        raise Unreachable(a, b)
    if status == kernels.BUDGET:
        raise Unreachable(a, b, "expansion budget exhausted")
    W = terrain.width
    cells = [(int(i % W), int(i // W)) for i in path]
    return GeodesicResult(path_length(terrain, cells), _waypoints(terrain, cells))


def _key(a: Position, b: Position) -> Tuple[Position, Position]:
    a = (int(a[0]), int(a[1]))
    b = (int(b[0]), int(b[1]))
    return (a, b) if a <= b else (b, a)


@dataclass
class DistanceCache:
    """Symmetric pair -> length map shared by everything planning on one terrain.

    Inserts are idempotent (a key always maps to the same length), so
    concurrent readers only need the insertion lock to avoid torn updates.
    """

    entries: Dict[Tuple[Position, Position], float] = field(default_factory=dict)
    degraded: set = field(default_factory=set)
    hits: int = 0
    misses: int = 0
    max_expansions: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def lookup(self, a: Position, b: Position) -> Optional[float]:
        if a == b:
            return 0.0
        return self.entries.get(_key(a, b))

    def insert(self, a: Position, b: Position, length: float, degraded: bool = False):
        k = _key(a, b)
        with self._lock:
            self.entries[k] = length
            if degraded:
                self.degraded.add(k)
            else:
                self.degraded.discard(k)

    def is_degraded(self, a: Position, b: Position) -> bool:
        return _key(a, b) in self.degraded

    def __len__(self):
        return len(self.entries)

    def dump(self, path) -> None:
        lines = [f"{CACHE_FORMAT} {CACHE_VERSION}"]
        for (a, b) in sorted(self.entries):
            flag = 1 if (a, b) in self.degraded else 0
            lines.append(f"{a[0]} {a[1]} {b[0]} {b[1]} {self.entries[(a, b)]!r} {flag}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DistanceCache":
        text = Path(path).read_text(encoding="utf-8").splitlines()
        if not text or text[0].split() != [CACHE_FORMAT, str(CACHE_VERSION)]:
            raise ValueError(f"{path}: not a {CACHE_FORMAT} v{CACHE_VERSION} file")
        cache = cls()
        for lineno, ln in enumerate(text[1:], start=2):
            if not ln.strip():
                continue
            tok = ln.split()
            if len(tok) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields")
            x1, y1, x2, y2 = (int(t) for t in tok[:4])
            cache.insert((x1, y1), (x2, y2), float(tok[4]), tok[5] == "1")
        return cache


def oracle_distance(cache: DistanceCache, terrain: TerrainGrid, a: Position,
                    b: Position) -> float:
    """Cached geodesic length; unreachable pairs fall back to 3D straight-line
    distance and are flagged degraded until :func:`refresh_degraded` fixes them."""
    a = (int(a[0]), int(a[1]))
    b = (int(b[0]), int(b[1]))
    hit = cache.lookup(a, b)
    if hit is not None:
        cache.hits += 1
        return hit
    cache.misses += 1
    try:
        length = geodesic(terrain, a, b, cache.max_expansions).length
        degraded = False
    except Unreachable:
        length = straight_line(terrain, a, b)
        degraded = True
    cache.insert(a, b, length, degraded)
    return length


def refresh_degraded(cache: DistanceCache, terrain: TerrainGrid) -> List[Tuple[Position, Position]]:
    """Retry degraded pairs without an expansion budget; returns the pairs repaired."""
    fixed = []
    for a, b in sorted(cache.degraded):
        try:
            length = geodesic(terrain, a, b).length
        except Unreachable:
            continue
        cache.insert(a, b, length, False)
        fixed.append((a, b))
    return fixed


def pairwise_matrix(terrain: TerrainGrid, anchors: Sequence[Position],
                    cache: Optional[DistanceCache] = None) -> np.ndarray:
    if cache is None:
        cache = DistanceCache()
    n = len(anchors)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = oracle_distance(cache, terrain, anchors[i], anchors[j])
            m[i, j] = m[j, i] = d
    return m


@dataclass(frozen=True, eq=False)
class Trajectory:
    waypoints: np.ndarray  # (M, 3)
    segment_lengths: Tuple[float, ...]

    @property
    def length(self) -> float:
        return math.fsum(self.segment_lengths)


def stitch_route(terrain: TerrainGrid, start: Position,
                 ordered_tasks: Sequence[Position]) -> Trajectory:
    """Concatenate geodesics start -> task_1 -> ... -> task_n.

    No fallback: raises :class:`Unreachable` if any leg has no path.
    """
    pieces = [_waypoints(terrain, [tuple(start)])]
    seg = []
    prev = tuple(start)
    for t in ordered_tasks:
        g = geodesic(terrain, prev, t)
        seg.append(g.length)
        pieces.append(g.waypoints[1:])
        prev = tuple(t)
    return Trajectory(np.vstack(pieces), tuple(seg))
