"""Coordinate solver for graph-constraint nodes.

Waypoints maximize the summed slack of their incoming constraints subject to
every constraint being satisfied, and repeated solves keep a minimum spacing
from earlier solutions. The search is derivative-free: enumerate a lattice
over the region the constraints can reach, pick the best feasible point,
then polish it with a shrinking compass search.

Objects are not optimized; perceived instances with a matching label are
kept when they satisfy the constraints pointing at them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .constraints import Assignment, Constraint, DegenerateGeometryError, Point, sum_and_min
from .graph_constraint import GraphConstraint

# maps an (N, 2) array of candidate points to a boolean mask
Traversable = Callable[[np.ndarray], np.ndarray]

_COMPASS = np.array(
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=float
)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverParams:
    spacing: float = 1.0
    k_max: int = 3
    grid_step: float = 0.25
    r_max: float = 10.0
    refine_iters: int = 20
    dedup_radius: float = 0.5

    def __post_init__(self):
        if self.spacing <= 0 or self.k_max < 1 or self.grid_step <= 0 or self.r_max <= self.grid_step:
            raise ValueError(f"invalid solver parameters {self}")


def free_plane(points: np.ndarray) -> np.ndarray:
    return np.ones(len(points), dtype=bool)


def box_plane(half_width: float) -> Traversable:
    def inside(points: np.ndarray) -> np.ndarray:
        return np.all(np.abs(points) <= half_width, axis=-1)

    return inside


def evaluate(constraints: Sequence[Constraint], a: Assignment, points: np.ndarray):
    """Objective and feasibility of placing the child at each point."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    total = np.zeros(len(points))
    feasible = np.ones(len(points), dtype=bool)
    for c in constraints:
        s, m = sum_and_min(c, a, points)
        total += s
        feasible &= m >= 0.0
    return total, feasible


def objective(point: Point, constraints: Sequence[Constraint], a: Assignment) -> float:
    return float(evaluate(constraints, a, np.asarray([point]))[0][0])


def search_disks(constraints: Sequence[Constraint], a: Assignment, r_max: float):
    disks = []
    for c in constraints:
        center = np.asarray(a[c.ref_parent], dtype=float)
        radius = c.search_radius
        disks.append((center, r_max if radius is None else radius))
    return disks


def lattice_candidates(disks, step: float) -> np.ndarray:
    """Lattice points (multiples of ``step``) inside the union of the disks."""
    keys = []
    for center, radius in disks:
        lo = np.floor((center - radius) / step).astype(int)
        hi = np.ceil((center + radius) / step).astype(int)
        ix, iy = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
        idx = np.stack([ix.ravel(), iy.ravel()], axis=1)
        pts = idx * step
        inside = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1]) <= radius + 1e-12
        keys.append(idx[inside])
    if not keys:
        return np.zeros((0, 2))
    return np.unique(np.concatenate(keys), axis=0) * step


def _spaced(points: np.ndarray, picks: Sequence[np.ndarray], spacing: float) -> np.ndarray:
    ok = np.ones(len(points), dtype=bool)
    for q in picks:
        ok &= np.hypot(points[:, 0] - q[0], points[:, 1] - q[1]) >= spacing
    return ok


def _best(values: np.ndarray, points: np.ndarray, mask: np.ndarray) -> Optional[int]:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    # highest objective, then smallest x, then smallest y
    order = np.lexsort((points[idx, 1], points[idx, 0], -values[idx]))
    return int(idx[order[0]])


def refine(
    start: np.ndarray,
    constraints: Sequence[Constraint],
    a: Assignment,
    world_view: Traversable,
    picks: Sequence[np.ndarray],
    p: SolverParams,
    ceiling: float = np.inf,
) -> np.ndarray:
    """Compass search from ``start``; never climbs above ``ceiling``."""
    best = np.asarray(start, dtype=float)
    best_val = evaluate(constraints, a, best[None])[0][0]
    step, floor = p.grid_step, p.grid_step / 16.0
    for _ in range(p.refine_iters):
        trial = best + step * _COMPASS
        vals, feas = evaluate(constraints, a, trial)
        ok = feas & world_view(trial) & _spaced(trial, picks, p.spacing) & (vals > best_val) & (vals <= ceiling)
        j = _best(vals, trial, ok)
        if j is None:
            if step <= floor:
                break
            step = max(step / 2.0, floor)
            continue
        best, best_val = trial[j], vals[j]
    return best


def solve_waypoint(
    k: GraphConstraint,
    node: str,
    a: Assignment,
    world_view: Traversable,
    p: SolverParams = SolverParams(),
) -> List[Point]:
    """Up to ``p.k_max`` feasible, traversable, mutually spaced coordinates, best first."""
    raw = k.incoming(node)
    if not raw:
        raise SolverError(f"waypoint {node!r} has no incoming constraints")
    for c in raw:
        for parent in c.parents:
            if parent not in a:
                raise SolverError(f"parent {parent!r} of {node!r} is unassigned")
    try:
        cons = [k.bind(c, a) for c in raw]
    except DegenerateGeometryError:
        return []
    return solve_constraints(cons, a, world_view, p)


def solve_constraints(
    cons: Sequence[Constraint],
    a: Assignment,
    world_view: Traversable,
    p: SolverParams = SolverParams(),
) -> List[Point]:
    pts = lattice_candidates(search_disks(cons, a, p.r_max), p.grid_step)
    if len(pts) == 0:
        return []
    values, feasible = evaluate(cons, a, pts)
    feasible &= world_view(pts)
    picks: List[np.ndarray] = []
    ceiling = np.inf
    for _ in range(p.k_max):
        # a later pick may not overtake an earlier one, so output stays sorted
        j = _best(values, pts, feasible & _spaced(pts, picks, p.spacing) & (values <= ceiling))
        if j is None:
            break
        q = refine(pts[j], cons, a, world_view, picks, p, ceiling)
        picks.append(q)
        ceiling = evaluate(cons, a, q[None])[0][0]
    return [(float(q[0]), float(q[1])) for q in picks]


_TOKEN = re.compile(r"[a-z0-9]+")


def _tokens(label: str) -> List[str]:
    out = []
    for t in _TOKEN.findall(label.lower()):
        out.append(t[:-1] if len(t) > 3 and t.endswith("s") and not t.endswith("ss") else t)
    return out


def labels_match(wanted: str, seen: str) -> bool:
    """Case-insensitive token match on the head noun, tolerant to plural ``s``."""
    want, have = _tokens(wanted), _tokens(seen)
    if not want or not have:
        return False
    return want[-1] in have or have[-1] in want


def solve_object(
    k: GraphConstraint,
    node: str,
    a: Assignment,
    percepts: Sequence[Tuple[str, Point]],
    p: SolverParams = SolverParams(),
) -> List[Point]:
    """Perceived instances of the node's label that satisfy its constraints.

    Ordered by objective, then distance from the constraining parent. An
    instance already bound to another object node is not reused.
    """
    label = k.node(node).label or ""
    raw = k.incoming(node)
    cons = [k.bind(c, a) for c in raw]
    taken = [np.asarray(a[n.id]) for n in k.nodes if n.kind == "object" and n.id != node and n.id in a]
    cands = []
    for seen, xy in percepts:
        if not labels_match(label, seen):
            continue
        q = np.asarray(xy, dtype=float)
        if any(np.hypot(*(q - t)) < p.dedup_radius for t in taken):
            continue
        cands.append(q)
    if not cands:
        return []
    pts = np.asarray(cands)
    values, feasible = evaluate(cons, a, pts) if cons else (np.zeros(len(pts)), np.ones(len(pts), bool))
    anchor = np.asarray(a[cons[0].ref_parent]) if cons else np.zeros(2)
    dist = np.hypot(pts[:, 0] - anchor[0], pts[:, 1] - anchor[1])
    order = np.lexsort((pts[:, 1], pts[:, 0], dist, -values))
    out: List[np.ndarray] = []
    for i in order:
        if not feasible[i]:
            continue
        if any(np.hypot(*(pts[i] - q)) < p.dedup_radius for q in out):
            continue
        out.append(pts[i])
    return [(float(q[0]), float(q[1])) for q in out]
