"""Terrain grids, problem instances, synthetic generation and the instance file format.

Instance file grammar (plain text, one token group per line, ``#`` starts a
comment line)::

    uavroute-instance 1
    id <label>
    width <int>
    height <int>
    cell_size <float>
    safety_altitude <float>
    elevation
    <height lines, each with width floats; line y holds h(0..width-1, y)>
    obstacles
    <height lines, each with width 0/1 flags>
    starts <K>
    <K lines "x y">
    tasks <N>
    <N lines "x y">
    end

Floats are written with ``repr`` so a save/load cycle is exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

FORMAT_NAME = "uavroute-instance"
FORMAT_VERSION = 1

Position = Tuple[int, int]


class InstanceError(ValueError):
    """Raised for malformed or invalid instance data."""


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    """Heightmap plus obstacle mask on a regular grid.

    Arrays are indexed ``[y, x]``; positions elsewhere in the package are
    ``(x, y)`` integer cell coordinates.
    """

    width: int
    height: int
    cell_size: float
    elevations: np.ndarray
    obstacle_mask: np.ndarray
    safety_altitude: float

    def __post_init__(self):
        elev = np.array(self.elevations, dtype=np.float64)
        mask = np.array(self.obstacle_mask, dtype=bool)
        if self.width < 1 or self.height < 1:
            raise InstanceError("width and height must be positive")
        if elev.shape != (self.height, self.width):
            raise InstanceError(
                f"elevations: expected shape {(self.height, self.width)}, got {elev.shape}")
        if mask.shape != (self.height, self.width):
            raise InstanceError(
                f"obstacle_mask: expected shape {(self.height, self.width)}, got {mask.shape}")
        if not np.all(np.isfinite(elev)) or np.any(elev < 0):
            raise InstanceError("elevations: values must be finite and >= 0")
        if not self.cell_size > 0:
            raise InstanceError("cell_size must be > 0")
        if not self.safety_altitude >= 0:
            raise InstanceError("safety_altitude must be >= 0")
        elev.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "elevations", elev)
        object.__setattr__(self, "obstacle_mask", mask)
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "safety_altitude", float(self.safety_altitude))

    def __eq__(self, other):
        if not isinstance(other, TerrainGrid):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.cell_size == other.cell_size
                and self.safety_altitude == other.safety_altitude
                and np.array_equal(self.elevations, other.elevations)
                and np.array_equal(self.obstacle_mask, other.obstacle_mask))

    __hash__ = None

    def inside(self, p: Position) -> bool:
        return 0 <= p[0] < self.width and 0 <= p[1] < self.height

    def blocked(self, p: Position) -> bool:
        return bool(self.obstacle_mask[p[1], p[0]])

    def altitude(self, p: Position) -> float:
        """Flight altitude z = h + H_safety at a cell."""
        return float(self.elevations[p[1], p[0]]) + self.safety_altitude

    def point3d(self, p: Position) -> Tuple[float, float, float]:
        return (p[0] * self.cell_size, p[1] * self.cell_size, self.altitude(p))

    @classmethod
    def flat(cls, width: int, height: int, cell_size: float = 1.0,
             safety_altitude: float = 0.0, obstacle_mask=None) -> "TerrainGrid":
        if obstacle_mask is None:
            obstacle_mask = np.zeros((height, width), dtype=bool)
        return cls(width, height, cell_size, np.zeros((height, width)), obstacle_mask,
                   safety_altitude)


@dataclass(frozen=True, eq=False)
class Instance:
    terrain: TerrainGrid
    starts: Tuple[Position, ...]
    tasks: Tuple[Position, ...]
    id: str = "instance"

    def __post_init__(self):
        starts = tuple((int(x), int(y)) for x, y in self.starts)
        tasks = tuple((int(x), int(y)) for x, y in self.tasks)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "tasks", tasks)
        if not starts:
            raise InstanceError("starts empty")
        if not tasks:
            raise InstanceError("tasks empty")
        if not self.id or any(c.isspace() for c in self.id):
            raise InstanceError("id must be a non-empty label without whitespace")
        for field, pts in (("starts", starts), ("tasks", tasks)):
            for i, p in enumerate(pts):
                if not self.terrain.inside(p):
                    raise InstanceError(f"{field}[{i}] at {p} lies outside the grid")
                if self.terrain.blocked(p):
                    raise InstanceError(f"{field}[{i}] at {p} lies on a blocked cell")
        seen = {}
        for i, p in enumerate(tasks):
            if p in seen:
                raise InstanceError(f"tasks[{i}] at {p} duplicates tasks[{seen[p]}]")
            seen[p] = i

    @property
    def K(self) -> int:
        return len(self.starts)

    @property
    def N(self) -> int:
        return len(self.tasks)

    @property
    def anchors(self) -> List[Position]:
        """Starts followed by tasks; the solver's anchor indexing."""
        return list(self.starts) + list(self.tasks)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.id == other.id and self.starts == other.starts
                and self.tasks == other.tasks and self.terrain == other.terrain)

    __hash__ = None


@dataclass(frozen=True)
class GeneratorSpec:
    width: int = 200
    height: int = 200
    K: int = 4
    N: int = 30
    obstacle_density: float = 0.1
    roughness: float = 0.5
    cell_size: float = 5.0
    safety_altitude: float = 20.0
    max_relief: float = 200.0  # meters of relief at roughness 1

    def validate(self):
        if self.width < 1 or self.height < 1 or self.K < 1 or self.N < 1:
            raise ValueError("grid size, K and N must be positive")
        if not 0.0 <= self.obstacle_density < 1.0:
            raise ValueError("obstacle_density must lie in [0, 1)")
        if self.roughness < 0 or self.cell_size <= 0 or self.safety_altitude < 0:
            raise ValueError("roughness, cell_size and safety_altitude must be non-negative "
                             "(cell_size positive)")


def _value_noise(rng: np.random.Generator, height: int, width: int,
                 octaves: int = 4) -> np.ndarray:
    """Multi-octave value noise in [0, 1], bilinear interpolation of coarse lattices."""
    out = np.zeros((height, width))
    amp, total = 1.0, 0.0
    ys = np.linspace(0.0, 1.0, height)
    xs = np.linspace(0.0, 1.0, width)
    for octave in range(octaves):
        cells = 2 ** (octave + 2)
        lattice = rng.random((cells + 1, cells + 1))
        gy, gx = ys * cells, xs * cells
        y0 = np.minimum(gy.astype(int), cells - 1)
        x0 = np.minimum(gx.astype(int), cells - 1)
        ty = (gy - y0)[:, None]
        tx = (gx - x0)[None, :]
        a = lattice[y0][:, x0]
        b = lattice[y0][:, x0 + 1]
        c = lattice[y0 + 1][:, x0]
        d = lattice[y0 + 1][:, x0 + 1]
        out += amp * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty)
        total += amp
        amp *= 0.5
    return out / total


def _obstacles(rng: np.random.Generator, height: int, width: int,
               density: float) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    if density <= 0:
        return mask
    # ~80% of the blocked area from rectangles, the rest scattered cells
    target = density * width * height
    rect_target = 0.8 * target
    max_side = max(1, min(width, height) // 8)
    guard = 0
    while mask.sum() < rect_target and guard < 10000:
        guard += 1
        rw = int(rng.integers(1, max_side + 1))
        rh = int(rng.integers(1, max_side + 1))
        x0 = int(rng.integers(0, max(1, width - rw + 1)))
        y0 = int(rng.integers(0, max(1, height - rh + 1)))
        mask[y0:y0 + rh, x0:x0 + rw] = True
    remaining = max(0.0, target - mask.sum())
    free = width * height - mask.sum()
    if remaining > 0 and free > 0:
        mask |= rng.random((height, width)) < remaining / (width * height)
    return mask


def generate_instance(spec: GeneratorSpec, seed: int, instance_id: str | None = None,
                      max_attempts: int = 20) -> Instance:
    """Random terrain with K starts and N tasks on one connected free region.

    Deterministic in ``(spec, seed)``.  Raises :class:`GenerationError` when no
    attempt leaves a connected free component with room for K + N placements.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    noise = _value_noise(rng, spec.height, spec.width)
    # dyadic quantization keeps h + H_safety - h == H_safety exact in floating point
    elevations = np.round(noise * spec.roughness * spec.max_relief * 256.0) / 256.0
    need = spec.K + spec.N
    for _ in range(max_attempts):
        mask = _obstacles(rng, spec.height, spec.width, spec.obstacle_density)
        # 8-connected moves forbid corner cutting, so reachability is 4-connectivity
        labels, count = ndimage.label(~mask)
        if count == 0:
            continue
        sizes = np.bincount(labels.ravel())[1:]
        best = int(np.argmax(sizes)) + 1
        if sizes[best - 1] < need:
            continue
        ys, xs = np.nonzero(labels == best)
        pick = rng.choice(len(xs), size=need, replace=False)
        cells = [(int(xs[i]), int(ys[i])) for i in pick]
        terrain = TerrainGrid(spec.width, spec.height, spec.cell_size, elevations, mask,
                              spec.safety_altitude)
        return Instance(terrain, tuple(cells[:spec.K]), tuple(cells[spec.K:]),
                        instance_id or f"gen-{seed}")
    raise GenerationError(
        f"no connected free region with {need} cells after {max_attempts} attempts "
        f"(density={spec.obstacle_density})")


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps_instance(instance: Instance) -> str:
    t = instance.terrain
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}",
             f"id {instance.id}",
             f"width {t.width}",
             f"height {t.height}",
             f"cell_size {_fmt(t.cell_size)}",
             f"safety_altitude {_fmt(t.safety_altitude)}",
             "elevation"]
    lines += [" ".join(_fmt(v) for v in row) for row in t.elevations]
    lines.append("obstacles")
    lines += [" ".join("1" if v else "0" for v in row) for row in t.obstacle_mask]
    lines.append(f"starts {instance.K}")
    lines += [f"{x} {y}" for x, y in instance.starts]
    lines.append(f"tasks {instance.N}")
    lines += [f"{x} {y}" for x, y in instance.tasks]
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(dumps_instance(instance), encoding="utf-8")


class _Lines:
    def __init__(self, text: str):
        self._lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())
                       if ln.strip() and not ln.lstrip().startswith("#")]
        self._pos = 0

    def next(self, what: str) -> Tuple[int, List[str]]:
        if self._pos >= len(self._lines):
            raise InstanceError(f"unexpected end of file, expected {what}")
        lineno, ln = self._lines[self._pos]
        self._pos += 1
        return lineno, ln.split()

    def keyed(self, key: str, nargs: int = 1) -> List[str]:
        lineno, tok = self.next(key)
        if tok[0] != key or len(tok) != nargs + 1:
            raise InstanceError(f"line {lineno}: expected '{key}' with {nargs} value(s)")
        return tok[1:]


def _number(cast, raw: str, field: str):
    try:
        return cast(raw)
    except ValueError:
        raise InstanceError(f"{field}: cannot parse {raw!r}") from None


def _points(lines: _Lines, field: str) -> List[Position]:
    (count,) = lines.keyed(field)
    n = _number(int, count, field)
    pts = []
    for i in range(n):
        lineno, tok = lines.next(f"{field}[{i}]")
        if len(tok) != 2:
            raise InstanceError(f"line {lineno}: {field}[{i}] needs 'x y'")
        pts.append((_number(int, tok[0], f"{field}[{i}]"), _number(int, tok[1], f"{field}[{i}]")))
    return pts


def loads_instance(text: str) -> Instance:
    lines = _Lines(text)
    lineno, header = lines.next("header")
    if len(header) != 2 or header[0] != FORMAT_NAME:
        raise InstanceError(f"line {lineno}: not a {FORMAT_NAME} file")
    if header[1] != str(FORMAT_VERSION):
        raise InstanceError(f"unsupported format version {header[1]!r}")
    (ident,) = lines.keyed("id")
    width = _number(int, lines.keyed("width")[0], "width")
    height = _number(int, lines.keyed("height")[0], "height")
    cell_size = _number(float, lines.keyed("cell_size")[0], "cell_size")
    safety = _number(float, lines.keyed("safety_altitude")[0], "safety_altitude")
    if width < 1 or height < 1:
        raise InstanceError("width and height must be positive")
    lines.keyed("elevation", 0)
    elev = np.empty((height, width))
    for y in range(height):
        lineno, tok = lines.next(f"elevation row {y}")
        if len(tok) != width:
            raise InstanceError(f"line {lineno}: elevation row {y} has {len(tok)} values, "
                                f"expected {width}")
        elev[y] = [_number(float, v, f"elevation row {y}") for v in tok]
    lines.keyed("obstacles", 0)
    mask = np.zeros((height, width), dtype=bool)
    for y in range(height):
        lineno, tok = lines.next(f"obstacle row {y}")
        if len(tok) != width or any(v not in ("0", "1") for v in tok):
            raise InstanceError(f"line {lineno}: obstacle row {y} must hold {width} 0/1 flags")
        mask[y] = [v == "1" for v in tok]
    starts = _points(lines, "starts")
    tasks = _points(lines, "tasks")
    lines.keyed("end", 0)
    terrain = TerrainGrid(width, height, cell_size, elev, mask, safety)
    return Instance(terrain, tuple(starts), tuple(tasks), ident)


def load_instance(path) -> Instance:
    return loads_instance(Path(path).read_text(encoding="utf-8"))


def reachable_region(terrain: TerrainGrid, p: Position) -> np.ndarray:
    """Boolean mask of the free cells reachable from ``p``."""
    labels, _ = ndimage.label(~terrain.obstacle_mask)
    lab = labels[p[1], p[0]]
    if lab == 0:
        return np.zeros_like(terrain.obstacle_mask)
    return labels == lab


def all_connected(instance: Instance) -> bool:
    region = reachable_region(instance.terrain, instance.starts[0])
    return all(region[y, x] for x, y in instance.anchors)


def as_positions(points: Sequence[Sequence[int]]) -> Tuple[Position, ...]:
    return tuple((int(p[0]), int(p[1])) for p in points)
