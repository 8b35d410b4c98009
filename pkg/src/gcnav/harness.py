"""Episode runner and benchmark metrics."""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .adapter import AdapterError, DecompositionAdapter, decompose_via_adapter
from .constraints import LibraryDefaults
from .graph_constraint import compile_graph
from .instr_graph import WAYPOINT, DecompositionError, InstructionGraph, looks_like_mini, parse_decomposition, parse_mini_instruction
from .nav_tree import assignment, backtrack, dump_tree, expand, init_tree, is_complete, path_to
from .solver import SolverParams, solve_object, solve_waypoint
from .world import Episode, PerceptMemory, Point, Pose, World, load_world, path_length

log = logging.getLogger(__name__)

REPORT_SCHEMA = "gcnav-report/1"

DECOMPOSITION = "decomposition"
EXHAUSTED = "exhausted-tree"
STEP_BUDGET = "step-budget"
UNREACHABLE_GOAL = "unreachable-goal"
FAILURE_REASONS = (DECOMPOSITION, EXHAUSTED, STEP_BUDGET, UNREACHABLE_GOAL)


@dataclass(frozen=True)
class RunConfig:
    solver: SolverParams = SolverParams()
    defaults: LibraryDefaults = LibraryDefaults()
    backtracking: bool = True
    relax: bool = False
    max_motion_points: int = 2000
    seed: int = 0
    adapter: Optional[DecompositionAdapter] = None
    adapter_retries: int = 2

    def describe(self) -> dict:
        return {
            "solver": asdict(self.solver),
            "defaults": {k: round(v, 9) for k, v in asdict(self.defaults).items()},
            "backtracking": self.backtracking,
            "relax": self.relax,
            "max_motion_points": self.max_motion_points,
            "seed": self.seed,
        }


@dataclass
class EpisodeResult:
    episode_id: str
    success: bool
    ne_m: float
    oracle_success: bool
    traj_len_m: float
    shortest_len_m: float
    solver_steps: int
    backtracks: int
    trajectory: List[dict] = field(default_factory=list)
    tree_snapshot: dict = field(default_factory=dict)
    world: str = ""
    tags: Tuple[str, ...] = ()
    reason: Optional[str] = None
    completed: bool = False
    min_goal_dist_m: float = math.inf
    success_radius_m: float = 3.0
    goal: Point = (0.0, 0.0)
    waypoints: List[Point] = field(default_factory=list)

    def to_dict(self) -> dict:
        def r(x):
            return None if x is None or not math.isfinite(x) else round(float(x), 6)

        return {
            "episode_id": self.episode_id,
            "world": self.world,
            "tags": list(self.tags),
            "success": self.success,
            "oracle_success": self.oracle_success,
            "completed": self.completed,
            "reason": self.reason,
            "ne_m": r(self.ne_m),
            "min_goal_dist_m": r(self.min_goal_dist_m),
            "traj_len_m": r(self.traj_len_m),
            "shortest_len_m": r(self.shortest_len_m),
            "spl": r(spl_term(self)),
            "solver_steps": self.solver_steps,
            "backtracks": self.backtracks,
            "success_radius_m": r(self.success_radius_m),
            "goal": [r(v) for v in self.goal],
            "waypoints": [[r(v) for v in p] for p in self.waypoints],
            "trajectory": [
                {"x": r(p["x"]), "y": r(p["y"]), "heading": r(p["heading"]), "backtrack": p["backtrack"]}
                for p in self.trajectory
            ],
            "tree": self.tree_snapshot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeResult":
        def f(x):
            return math.inf if x is None else float(x)

        return cls(
            episode_id=d["episode_id"],
            success=bool(d["success"]),
            ne_m=f(d["ne_m"]),
            oracle_success=bool(d["oracle_success"]),
            traj_len_m=f(d["traj_len_m"]),
            shortest_len_m=f(d["shortest_len_m"]),
            solver_steps=int(d["solver_steps"]),
            backtracks=int(d["backtracks"]),
            trajectory=list(d.get("trajectory", [])),
            tree_snapshot=d.get("tree", {}),
            world=d.get("world", ""),
            tags=tuple(d.get("tags", ())),
            reason=d.get("reason"),
            completed=bool(d.get("completed", False)),
            min_goal_dist_m=f(d.get("min_goal_dist_m")),
            success_radius_m=float(d.get("success_radius_m") or 3.0),
            goal=tuple(d.get("goal", (0.0, 0.0))),
            waypoints=[tuple(p) for p in d.get("waypoints", [])],
        )


@dataclass(frozen=True)
class BenchmarkMetrics:
    sr: float
    spl: float
    osr: float
    ne_mean_m: float
    episode_count: int


def spl_term(r: EpisodeResult) -> float:
    if not r.success:
        return 0.0
    denom = max(r.traj_len_m, r.shortest_len_m)
    return 1.0 if denom <= 0 else r.shortest_len_m / denom


def compute_metrics(results: Sequence[EpisodeResult], success_radius_m: Optional[float] = None) -> BenchmarkMetrics:
    """Aggregate SR, SPL, OSR and mean NE.

    With ``success_radius_m`` given, success and oracle success are re-judged
    at that radius from the stored distances; otherwise the stored flags are used.
    """
    if not results:
        raise ValueError("no episode results to aggregate")
    sr = spl = osr = ne = 0.0
    for r in results:
        if success_radius_m is None:
            ok, oracle = r.success, r.oracle_success
        else:
            ok = r.completed and r.ne_m <= success_radius_m
            oracle = r.min_goal_dist_m <= success_radius_m
        sr += ok
        osr += oracle
        if ok:
            denom = max(r.traj_len_m, r.shortest_len_m)
            spl += 1.0 if denom <= 0 else r.shortest_len_m / denom
        ne += r.ne_m
    n = len(results)
    return BenchmarkMetrics(sr / n, spl / n, osr / n, ne / n, n)


# -- episode loop -------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """Planner frame: origin at the start pose, +x along the start heading."""

    x: float
    y: float
    heading: float

    def to_world(self, p: Point) -> Point:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return (self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1])

    def to_local(self, p: Point) -> Point:
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx, dy = p[0] - self.x, p[1] - self.y
        return (c * dx + s * dy, -s * dx + c * dy)

    def to_world_array(self, pts: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.stack([self.x + c * pts[:, 0] - s * pts[:, 1], self.y + s * pts[:, 0] + c * pts[:, 1]], axis=1)


class _Motion:
    def __init__(self, w: World, start: Pose):
        self.world = w
        self.pos: Point = start.position
        self.heading = start.heading
        self.poses = [{"x": start.x, "y": start.y, "heading": start.heading, "backtrack": False}]
        self.length = 0.0
        self.points = 0

    @property
    def pose(self) -> Pose:
        return Pose(self.pos[0], self.pos[1], self.heading)

    def travel(self, target: Point, backtrack: bool = False) -> bool:
        if math.dist(self.pos, target) < 1e-9:
            return True
        path = self.world.planner.plan(self.pos, target)
        if path is None:
            return False
        for a, b in zip(path, path[1:]):
            self.heading = math.atan2(b[1] - a[1], b[0] - a[0])
            self.poses.append({"x": b[0], "y": b[1], "heading": self.heading, "backtrack": backtrack})
        self.length += path_length(path)
        self.points += len(path) - 1
        self.pos = path[-1]
        return True

    def min_distance_to(self, goal: Point) -> float:
        best = math.inf
        g = np.asarray(goal)
        for a, b in zip(self.poses, self.poses[1:] or self.poses):
            p, q = np.array([a["x"], a["y"]]), np.array([b["x"], b["y"]])
            d = q - p
            den = float(d @ d)
            t = 0.0 if den == 0 else min(1.0, max(0.0, float((g - p) @ d) / den))
            best = min(best, float(np.hypot(*(p + t * d - g))))
        return best


def obtain_graph(e: Episode, cfg: RunConfig) -> InstructionGraph:
    if e.decomposition_path:
        with open(e.decomposition_path, encoding="utf-8") as fh:
            text = fh.read()
        if text.lstrip().startswith("{"):
            return parse_decomposition(text)
        return parse_mini_instruction(text)
    text = e.instruction or ""
    if looks_like_mini(text):
        return parse_mini_instruction(text)
    if cfg.adapter is None:
        raise DecompositionError("natural-language instruction needs a decomposition adapter")
    return decompose_via_adapter(text, cfg.adapter, cfg.adapter_retries)


def run_episode(w: World, e: Episode, cfg: RunConfig = RunConfig()) -> EpisodeResult:
    """Decompose, compile, then solve/expand/move until the last waypoint or failure."""
    planner = w.planner
    frame = Frame(e.start.x, e.start.y, e.start.heading)
    motion = _Motion(w, e.start)
    base = dict(episode_id=e.id, world=w.name, tags=e.tags, success_radius_m=e.success_radius_m, goal=e.goal)

    def finish(reason, steps=0, backtracks=0, tree=None, shortest=math.inf, completed=False):
        ne = math.dist(motion.pos, e.goal)
        min_d = motion.min_distance_to(e.goal)
        success = completed and ne <= e.success_radius_m and steps <= e.max_solver_steps
        wps = [] if tree is None else [frame.to_world(p) for p in path_to(tree, tree.active)]
        return EpisodeResult(
            success=success,
            ne_m=ne,
            oracle_success=min_d <= e.success_radius_m,
            traj_len_m=motion.length,
            shortest_len_m=shortest,
            solver_steps=steps,
            backtracks=backtracks,
            trajectory=motion.poses,
            tree_snapshot={} if tree is None else dump_tree(tree),
            reason=reason,
            completed=completed,
            min_goal_dist_m=min_d,
            waypoints=wps,
            **base,
        )

    best = planner.plan(e.start.position, e.goal)
    if best is None:
        return finish(UNREACHABLE_GOAL)
    shortest = path_length(best)

    try:
        g = obtain_graph(e, cfg)
        k = compile_graph(g, cfg.defaults, relaxed=cfg.relax)
    except (DecompositionError, AdapterError, OSError) as exc:
        log.info("episode %s: decomposition failed: %s", e.id, exc)
        return finish(DECOMPOSITION, shortest=shortest)

    tree = init_tree(k.topo_order, [k.kind(n) for n in k.topo_order])
    memory = PerceptMemory()
    steps = backtracks = 0
    reason = None

    while not is_complete(tree):
        if steps >= e.max_solver_steps or motion.points > cfg.max_motion_points:
            reason = STEP_BUDGET
            break
        node = k.topo_order[tree.active.level + 1]
        steps += 1
        a = assignment(tree, tree.active)
        seen = memory.observe(w, motion.pose, e.sensor_radius_m)
        if k.kind(node) == WAYPOINT:
            reach = planner.reachable(motion.pos)
            view = lambda pts, reach=reach: reach(frame.to_world_array(pts))
            sols = solve_waypoint(k, node, a, view, cfg.solver)
        else:
            percepts = [(label, frame.to_local(xy)) for label, xy in seen]
            sols = solve_object(k, node, a, percepts, cfg.solver)
        child = expand(tree, sols)
        if child is not None and k.kind(node) == WAYPOINT and not motion.travel(frame.to_world(child.coord)):
            child.dead = True
            child = None
        while child is None:
            if not cfg.backtracking:
                reason = EXHAUSTED
                break
            b = backtrack(tree)
            if b is None:
                reason = EXHAUSTED
                break
            backtracks += 1
            log.debug("episode %s: backtrack to %s at level %d", e.id, tree.levels[b.level], b.level)
            anchor = path_to(tree, b.parent)[-1]
            motion.travel(frame.to_world(anchor), backtrack=True)
            if tree.kinds[b.level] == WAYPOINT and not motion.travel(frame.to_world(b.coord)):
                b.dead = True
                continue
            child = b
        if reason is not None:
            break

    completed = reason is None and is_complete(tree)
    return finish(reason, steps, backtracks, tree, shortest, completed)


# -- corpus runs & reports ----------------------------------------------------

def _run_one(args):
    world_path, episode_id, cfg = args
    w, episodes = load_world(world_path)
    e = next(x for x in episodes if x.id == episode_id)
    return run_episode(w, e, cfg)


def run_worlds(
    world_paths: Sequence[str],
    cfg: RunConfig = RunConfig(),
    episode_ids: Optional[Iterable[str]] = None,
    workers: int = 1,
) -> List[EpisodeResult]:
    """Run every episode of every world, in file order."""
    wanted = set(episode_ids) if episode_ids else None
    jobs = []
    loaded = {}
    for path in world_paths:
        w, episodes = load_world(path)
        loaded[path] = (w, {e.id: e for e in episodes})
        for e in episodes:
            if wanted is None or e.id in wanted or f"{w.name}/{e.id}" in wanted:
                jobs.append((path, e.id, cfg))
    if workers > 1 and cfg.adapter is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    out = []
    for path, eid, _ in jobs:
        w, by_id = loaded[path]
        out.append(run_episode(w, by_id[eid], cfg))
    return out


def metrics_dict(m: BenchmarkMetrics) -> dict:
    return {
        "sr": round(m.sr, 6),
        "spl": round(m.spl, 6),
        "osr": round(m.osr, 6),
        "ne_mean_m": round(m.ne_mean_m, 6),
        "episode_count": m.episode_count,
    }


def build_report(results: Sequence[EpisodeResult], cfg: RunConfig) -> dict:
    subsets: Dict[str, List[EpisodeResult]] = {}
    for r in results:
        for t in r.tags:
            subsets.setdefault(t, []).append(r)
    return {
        "schema": REPORT_SCHEMA,
        "config": cfg.describe(),
        "episodes": [r.to_dict() for r in results],
        "aggregate": metrics_dict(compute_metrics(results)) if results else None,
        "subsets": {t: metrics_dict(compute_metrics(rs)) for t, rs in sorted(subsets.items())},
    }


def write_report(report: dict, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path: str) -> List[EpisodeResult]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path}: not a {REPORT_SCHEMA} report")
    return [EpisodeResult.from_dict(d) for d in data["episodes"]]
