"""2D stand-in for the robot's surroundings.

A world is an occupancy grid with labeled objects. Planning runs on a fine
copy of the grid (at most 0.1 m cells) with obstacles inflated by 0.2 m,
using 8-connected Dijkstra followed by line-of-sight shortcutting.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.csgraph import dijkstra

Point = Tuple[float, float]

PLAN_CELL_M = 0.1
INFLATION_M = 0.2
SNAP_RADIUS_M = 0.5


class WorldError(ValueError):
    pass


_XY = {
    "type": "object",
    "properties": {"x": {"type": "number"}, "y": {"type": "number"}},
    "required": ["x", "y"],
    "additionalProperties": False,
}

WORLD_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "cell_m": {"type": "number", "exclusiveMinimum": 0},
        "origin": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "grid": {"type": "array", "items": {"type": "string", "pattern": "^[.#]+$"}, "minItems": 1},
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "label": {"type": "string", "minLength": 1},
                    "x": {"type": "number"},
                    "y": {"type": "number"},
                },
                "required": ["label", "x", "y"],
                "additionalProperties": False,
            },
        },
        "episodes": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "start": {
                        "type": "object",
                        "properties": {
                            "x": {"type": "number"},
                            "y": {"type": "number"},
                            "heading_deg": {"type": "number"},
                        },
                        "required": ["x", "y"],
                        "additionalProperties": False,
                    },
                    "goal": _XY,
                    "instruction": {"type": "string"},
                    "decomposition_path": {"type": "string"},
                    "success_radius_m": {"type": "number", "exclusiveMinimum": 0},
                    "max_solver_steps": {"type": "integer", "minimum": 1},
                    "sensor_radius_m": {"type": "number", "exclusiveMinimum": 0},
                    "tags": {"type": "array", "items": {"type": "string"}},
                    "note": {"type": "string"},
                },
                "required": ["id", "start", "goal"],
                "anyOf": [{"required": ["instruction"]}, {"required": ["decomposition_path"]}],
                "additionalProperties": False,
            },
        },
    },
    "required": ["cell_m", "grid"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class WorldObject:
    label: str
    x: float
    y: float

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class Episode:
    id: str
    start: Pose
    goal: Point
    instruction: Optional[str] = None
    decomposition_path: Optional[str] = None
    success_radius_m: float = 3.0
    max_solver_steps: int = 40
    sensor_radius_m: float = 5.0
    tags: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class World:
    """Occupancy grid indexed ``[iy, ix]`` with ``iy`` growing along +y."""

    occupied: np.ndarray
    cell_m: float
    origin: Point = (0.0, 0.0)
    objects: Tuple[WorldObject, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.cell_m <= 0:
            raise WorldError("cell size must be positive")
        for obj in self.objects:
            if not self.is_free(obj.position):
                raise WorldError(f"object {obj.label!r} at {obj.position} lies in an obstacle")

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        ny, nx = self.occupied.shape
        x0, y0 = self.origin
        return (x0, y0, x0 + nx * self.cell_m, y0 + ny * self.cell_m)

    def in_bounds(self, p: Point) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= p[0] < x1 and y0 <= p[1] < y1

    def is_free(self, p: Point) -> bool:
        if not self.in_bounds(p):
            return False
        ix = int((p[0] - self.origin[0]) // self.cell_m)
        iy = int((p[1] - self.origin[1]) // self.cell_m)
        return not self.occupied[iy, ix]

    @cached_property
    def planner(self) -> "GridPlanner":
        return GridPlanner(self)


def load_world(path: str) -> Tuple[World, List[Episode]]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WorldError(f"{path}: not valid JSON: {exc}") from exc
    return world_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)), source=path)


def world_from_dict(data: dict, base_dir: str = ".", source: str = "<world>") -> Tuple[World, List[Episode]]:
    errors = sorted(jsonschema.Draft7Validator(WORLD_SCHEMA).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise WorldError(f"{source}: " + "; ".join(lines))
    rows = data["grid"]
    if len({len(r) for r in rows}) != 1:
        raise WorldError(f"{source}: grid: rows have different lengths")
    # first row is the top of the map
    occupied = np.array([[ch == "#" for ch in row] for row in reversed(rows)], dtype=bool)
    world = World(
        occupied=occupied,
        cell_m=float(data["cell_m"]),
        origin=tuple(float(v) for v in data.get("origin", (0.0, 0.0))),
        objects=tuple(WorldObject(o["label"], float(o["x"]), float(o["y"])) for o in data.get("objects", [])),
        name=data.get("name", os.path.splitext(os.path.basename(source))[0]),
    )
    episodes = []
    for i, e in enumerate(data.get("episodes", [])):
        start = Pose(e["start"]["x"], e["start"]["y"], math.radians(e["start"].get("heading_deg", 0.0)))
        goal = (float(e["goal"]["x"]), float(e["goal"]["y"]))
        for what, p in (("start", start.position), ("goal", goal)):
            if not world.is_free(p):
                raise WorldError(f"{source}: episodes/{i}/{what}: {p} is not in free space")
        decomp = e.get("decomposition_path")
        if decomp is not None and not os.path.isabs(decomp):
            decomp = os.path.join(base_dir, decomp)
        episodes.append(
            Episode(
                id=e["id"],
                start=start,
                goal=goal,
                instruction=e.get("instruction"),
                decomposition_path=decomp,
                success_radius_m=float(e.get("success_radius_m", 3.0)),
                max_solver_steps=int(e.get("max_solver_steps", 40)),
                sensor_radius_m=float(e.get("sensor_radius_m", 5.0)),
                tags=tuple(e.get("tags", ())),
            )
        )
    return world, episodes


# -- sensing ------------------------------------------------------------------

def line_of_sight(w: World, a: Point, b: Point) -> bool:
    """True when the straight segment a->b crosses no occupied cell."""
    length = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(2, int(math.ceil(length / (w.cell_m / 8.0))) + 1)
    t = np.linspace(0.0, 1.0, n)
    xs = a[0] + t * (b[0] - a[0])
    ys = a[1] + t * (b[1] - a[1])
    ix = np.floor((xs - w.origin[0]) / w.cell_m).astype(int)
    iy = np.floor((ys - w.origin[1]) / w.cell_m).astype(int)
    ny, nx = w.occupied.shape
    if np.any((ix < 0) | (iy < 0) | (ix >= nx) | (iy >= ny)):
        return False
    return not bool(np.any(w.occupied[iy, ix]))


@dataclass
class PerceptMemory:
    """Objects revealed so far in one episode; only ever grows."""

    seen: List[int] = field(default_factory=list)

    def observe(self, w: World, p: Pose, radius: float) -> List[Tuple[str, Point]]:
        for i, obj in enumerate(w.objects):
            if i in self.seen:
                continue
            if math.hypot(obj.x - p.x, obj.y - p.y) <= radius and line_of_sight(w, p.position, obj.position):
                self.seen.append(i)
        return [(w.objects[i].label, w.objects[i].position) for i in sorted(self.seen)]


def visible_objects(
    w: World, p: Pose, radius: float = 5.0, memory: Optional[PerceptMemory] = None
) -> List[Tuple[str, Point]]:
    """Objects within ``radius`` in clear line of sight, plus anything ``memory`` already holds."""
    memory = PerceptMemory() if memory is None else memory
    return memory.observe(w, p, radius)


# -- planning -----------------------------------------------------------------

_NEIGHBORS = ((1, 0), (0, 1), (1, 1), (1, -1))


class GridPlanner:
    """Shortest paths on the inflated fine grid of one world."""

    def __init__(self, w: World):
        self.world = w
        factor = max(1, int(round(w.cell_m / PLAN_CELL_M)))
        self.cell = w.cell_m / factor
        fine = np.kron(w.occupied, np.ones((factor, factor), dtype=bool))
        r = int(math.floor(INFLATION_M / self.cell + 1e-9))
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        disk = np.hypot(xx, yy) * self.cell <= INFLATION_M + 1e-9
        padded = np.pad(fine, r, constant_values=True)
        inflated = ndimage.binary_dilation(padded, structure=disk)[r:-r or None, r:-r or None] if r else fine
        self.raw = fine
        self.free = ~inflated
        self.shape = fine.shape
        self.graph = self._build_graph()
        self._snap_idx = ndimage.distance_transform_edt(~self.free, return_distances=False, return_indices=True)
        self._cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def _build_graph(self):
        ny, nx = self.shape
        ids = np.arange(ny * nx).reshape(ny, nx)
        rows, cols, wts = [], [], []
        f = self.free
        for dx, dy in _NEIGHBORS:
            ys0, ys1 = max(0, -dy), ny - max(0, dy)
            xs0, xs1 = 0, nx - dx
            a = (slice(ys0, ys1), slice(xs0, xs1))
            b = (slice(ys0 + dy, ys1 + dy), slice(xs0 + dx, xs1 + dx))
            ok = f[a] & f[b]
            if dx and dy:
                # no corner cutting
                ok &= f[ys0:ys1, xs0 + dx : xs1 + dx] & f[ys0 + dy : ys1 + dy, xs0:xs1]
            rows.append(ids[a][ok])
            cols.append(ids[b][ok])
            wts.append(np.full(int(ok.sum()), self.cell * math.hypot(dx, dy)))
        n = ny * nx
        return sparse.csr_matrix(
            (np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )

    def cell_of(self, p: Point) -> Optional[Tuple[int, int]]:
        ix = int(math.floor((p[0] - self.world.origin[0]) / self.cell))
        iy = int(math.floor((p[1] - self.world.origin[1]) / self.cell))
        ny, nx = self.shape
        if 0 <= ix < nx and 0 <= iy < ny:
            return iy, ix
        return None

    def center(self, iy: int, ix: int) -> Point:
        return (self.world.origin[0] + (ix + 0.5) * self.cell, self.world.origin[1] + (iy + 0.5) * self.cell)

    def snap(self, p: Point) -> Optional[Tuple[int, int]]:
        """Planning cell for ``p``: its own cell if free, else the nearest free cell close by."""
        c = self.cell_of(p)
        if c is None or self.raw[c]:
            return None
        if self.free[c]:
            return c
        iy, ix = (int(v) for v in self._snap_idx[:, c[0], c[1]])
        if not self.free[iy, ix] or math.dist(self.center(iy, ix), p) > SNAP_RADIUS_M:
            return None
        return iy, ix

    def field_from(self, c: Tuple[int, int]):
        key = c[0] * self.shape[1] + c[1]
        if key not in self._cache:
            dist, pred = dijkstra(self.graph, directed=False, indices=key, return_predecessors=True)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = (dist.reshape(self.shape), pred)
        return self._cache[key]

    def segment_clear(self, a: Point, b: Point) -> bool:
        length = math.dist(a, b)
        n = max(2, int(math.ceil(length / (self.cell / 4.0))) + 1)
        t = np.linspace(0.0, 1.0, n)
        ix = np.floor((a[0] + t * (b[0] - a[0]) - self.world.origin[0]) / self.cell).astype(int)
        iy = np.floor((a[1] + t * (b[1] - a[1]) - self.world.origin[1]) / self.cell).astype(int)
        ny, nx = self.shape
        if np.any((ix < 0) | (iy < 0) | (ix >= nx) | (iy >= ny)):
            return False
        return bool(np.all(self.free[iy, ix]))

    def reachable(self, frm: Point) -> Callable[[np.ndarray], np.ndarray]:
        """Mask function: which points are free and reachable from ``frm``."""
        start = self.snap(frm)
        if start is None:
            return lambda pts: np.zeros(len(pts), dtype=bool)
        dist, _ = self.field_from(start)
        ok = np.isfinite(dist) & self.free
        ny, nx = self.shape

        def mask(points: np.ndarray) -> np.ndarray:
            pts = np.asarray(points, dtype=float).reshape(-1, 2)
            ix = np.floor((pts[:, 0] - self.world.origin[0]) / self.cell).astype(int)
            iy = np.floor((pts[:, 1] - self.world.origin[1]) / self.cell).astype(int)
            inside = (ix >= 0) & (iy >= 0) & (ix < nx) & (iy < ny)
            out = np.zeros(len(pts), dtype=bool)
            out[inside] = ok[iy[inside], ix[inside]]
            return out

        return mask

    def plan(self, frm: Point, to: Point) -> Optional[List[Point]]:
        if not self.world.is_free(frm):
            raise WorldError(f"path start {frm} lies in an obstacle")
        s, g = self.snap(frm), self.snap(to)
        if s is None or g is None:
            return None
        if g < s:
            # plan in one canonical direction so a->b and b->a give the same route
            back = self._route(g, s, to, frm)
            return None if back is None else back[::-1]
        return self._route(s, g, frm, to)

    def _route(self, s, g, frm: Point, to: Point) -> Optional[List[Point]]:
        dist, pred = self.field_from(s)
        if not np.isfinite(dist[g]):
            return None
        nx = self.shape[1]
        cells = []
        node = g[0] * nx + g[1]
        src = s[0] * nx + s[1]
        while node != src:
            cells.append(divmod(int(node), nx))
            node = pred[node]
            if node < 0:
                return None
        cells.append(s)
        cells.reverse()
        pts = [tuple(frm)] + [self.center(iy, ix) for iy, ix in cells] + [tuple(to)]
        return self._shortcut(pts)

    def _shortcut(self, pts: List[Point]) -> List[Point]:
        out = [pts[0]]
        i = 0
        while i < len(pts) - 1:
            j = i + 1
            while j + 1 < len(pts) and self.segment_clear(pts[i], pts[j + 1]):
                j += 1
            out.append(pts[j])
            i = j
        # drop zero-length hops
        clean = [out[0]]
        for p in out[1:]:
            if math.dist(p, clean[-1]) > 1e-9:
                clean.append(p)
        if len(clean) == 1:
            clean.append(clean[0])
        return clean


def plan_path(w: World, frm: Point, to: Point) -> Optional[List[Point]]:
    """Shortest collision-free polyline from ``frm`` to ``to``; ``None`` when unreachable."""
    return w.planner.plan(frm, to)


def path_length(path: Sequence[Point]) -> float:
    return float(sum(math.dist(a, b) for a, b in zip(path, path[1:])))
