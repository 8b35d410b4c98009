"""Compile an instruction graph into spatial constraints and a solve order."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .constraints import (
    Assignment,
    Constraint,
    LibraryDefaults,
    derive_corridor,
    direction_offset,
    relax,
    wrap_angle,
)
from .instr_graph import (
    CORRIDOR_RELATIONS,
    OBJECT,
    SIDE_RELATIONS,
    TOWARD,
    WAYPOINT,
    DecompositionError,
    InstructionGraph,
    Node,
    validate_graph,
    waypoint_id,
)


class CycleDetected(ValueError):
    def __init__(self, nodes):
        self.nodes = tuple(sorted(nodes))
        super().__init__(f"constraint graph has a cycle among {list(self.nodes)}")


@dataclass(frozen=True)
class GraphConstraint:
    nodes: Tuple[Node, ...]
    constraints: Tuple[Constraint, ...]
    topo_order: Tuple[str, ...]
    nominal_headings: Tuple[float, ...] = ()
    defaults: LibraryDefaults = LibraryDefaults()
    relaxed: bool = False

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def kind(self, node_id: str) -> str:
        return self.node(node_id).kind

    def incoming(self, node_id: str) -> List[Constraint]:
        return [c for c in self.constraints if c.child == node_id]

    @property
    def stage_count(self) -> int:
        return sum(1 for n in self.nodes if n.kind == WAYPOINT) - 1

    def stage_heading(self, stage: int, a: Assignment) -> float:
        """Realized heading entering ``stage``: direction of the last completed displacement.

        Falls back to the start heading (0) when no displacement is available,
        and to earlier stages when the last one had zero length.
        """
        for s in range(stage, 1, -1):
            u, v = waypoint_id(s - 1), waypoint_id(s)
            if u in a and v in a:
                dx = a[v][0] - a[u][0]
                dy = a[v][1] - a[u][1]
                if math.hypot(dx, dy) > 1e-6:
                    return math.atan2(dy, dx)
        return 0.0

    def bind(self, c: Constraint, a: Assignment) -> Constraint:
        """Resolve headings and corridor geometry against the current assignment."""
        if c.heading_offset is not None:
            c = replace(c, phi=wrap_angle(self.stage_heading(c.stage, a) + c.heading_offset))
        if c.ctype == 6:
            c = derive_corridor(c, a, self.defaults)
        if self.relaxed:
            c = relax(c)
        return c


def _waypoint_constraint(stage, s: int, defaults: LibraryDefaults) -> Constraint:
    u, v = waypoint_id(s), waypoint_id(s + 1)
    known_dir = stage.direction != "unknown"
    known_dist = stage.distance_m is not None
    common = dict(parents=(u,), child=v, stage=s, edges=((u, v),))
    if known_dist:
        common.update(d=stage.distance_m, delta_d=defaults.explicit_tolerance(stage.distance_m))
    else:
        common.update(d=defaults.d, delta_d=defaults.delta_d)
    if known_dir:
        common.update(heading_offset=direction_offset(stage.direction), delta_phi=defaults.delta_phi)
    if known_dir and known_dist:
        return Constraint(2, **common)
    if known_dir:
        return Constraint(1, **common)
    if known_dist:
        return Constraint(5, **common)
    return Constraint(4, **common)


def compile_graph(
    g: InstructionGraph,
    defaults: LibraryDefaults = LibraryDefaults(),
    relaxed: bool = False,
) -> GraphConstraint:
    """Map every edge of ``g`` to a library constraint.

    Toward-waypoint objects get an extra type-4 edge from the stage's start
    waypoint so they have a parent to be searched from.
    """
    report = validate_graph(g)
    if report:
        raise DecompositionError("; ".join(v.message for v in report))
    constraints: List[Constraint] = []
    headings = []
    heading = 0.0
    by_stage: Dict[int, List[Node]] = {}
    for n in g.objects:
        by_stage.setdefault(n.stage, []).append(n)

    for s, stage in enumerate(g.stages, start=1):
        u, v = waypoint_id(s), waypoint_id(s + 1)
        stage_off = 0.0 if stage.direction == "unknown" else direction_offset(stage.direction)
        heading = wrap_angle(heading + stage_off)
        headings.append(heading)
        constraints.append(_waypoint_constraint(stage, s, defaults))

        objs = sorted(by_stage.get(s, []), key=lambda n: n.mention)
        corridor = [n for n in objs if n.edge_direction == TOWARD and n.relation in CORRIDOR_RELATIONS]
        if len(corridor) == 1:
            raise DecompositionError(
                f"stage {s}: '{corridor[0].relation}' needs two objects to pass between"
            )
        for n in objs:
            if n.edge_direction == TOWARD:
                constraints.append(
                    Constraint(4, (u,), n.id, stage=s, implicit=True, edges=((u, n.id),))
                )
        for i in range(0, len(corridor) - 1, 2):
            a_, b_ = corridor[i], corridor[i + 1]
            constraints.append(
                Constraint(6, (u, a_.id, b_.id), v, stage=s, edges=((a_.id, v), (b_.id, v)))
            )
        if len(corridor) % 2 == 1 and len(corridor) > 1:
            a_, b_ = corridor[-2], corridor[-1]
            constraints.append(Constraint(6, (u, a_.id, b_.id), v, stage=s, edges=((b_.id, v),)))

        for n in objs:
            angle = dict(delta_phi=defaults.delta_phi, d=defaults.d, delta_d=defaults.delta_d, stage=s)
            if n.edge_direction == TOWARD:
                edge = ((n.id, v),)
                if n.relation == "through":
                    constraints.append(Constraint(3, (u, n.id), v, heading_offset=stage_off, edges=edge, **angle))
                elif n.relation == "near":
                    constraints.append(Constraint(5, (n.id,), v, edges=edge, **angle))
                elif n.relation in SIDE_RELATIONS:
                    # object on that side of the waypoint => waypoint lies opposite, seen from the object
                    off = stage_off + direction_offset(n.relation) + math.pi
                    constraints.append(Constraint(1, (n.id,), v, heading_offset=off, edges=edge, **angle))
            else:
                edge = ((u, n.id),)
                if n.relation in SIDE_RELATIONS:
                    off = stage_off + direction_offset(n.relation)
                    constraints.append(Constraint(1, (u,), n.id, heading_offset=off, edges=edge, **angle))
                elif n.relation == "near":
                    constraints.append(Constraint(5, (u,), n.id, edges=edge, **angle))
                else:
                    # through / weave / pass seen from the stage start: the object lies ahead
                    constraints.append(Constraint(1, (u,), n.id, heading_offset=stage_off, edges=edge, **angle))

    nodes = tuple(g.nodes)
    order = toposort(nodes, constraints)
    return GraphConstraint(nodes, tuple(constraints), tuple(order), tuple(headings), defaults, relaxed)


def toposort(nodes: Sequence[Node], constraints: Sequence[Constraint]) -> List[str]:
    """Order nodes so parents come first, objects before waypoints, objects in mention order.

    Kahn's algorithm taking the smallest ready node by (kind, stage, mention).
    """
    rank = {n.id: (0 if n.kind == OBJECT else 1, n.stage, n.mention, n.id) for n in nodes}
    children: Dict[str, set] = {n.id: set() for n in nodes}
    indeg: Dict[str, int] = {n.id: 0 for n in nodes}
    for c in constraints:
        for p in c.parents:
            if c.child not in children[p]:
                children[p].add(c.child)
                indeg[c.child] += 1
    ready = [rank[n] for n, k in indeg.items() if k == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)[-1]
        order.append(nid)
        for ch in children[nid]:
            indeg[ch] -= 1
            if indeg[ch] == 0:
                heapq.heappush(ready, rank[ch])
    if len(order) != len(nodes):
        raise CycleDetected(n for n, k in indeg.items() if k > 0)
    return order


def dump(k: GraphConstraint) -> dict:
    """Diagnostic view of the compiled constraints."""

    def num(x: Optional[float]):
        return None if x is None else round(float(x), 6)

    return {
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind,
                "stage": n.stage,
                **({"label": n.label, "relation": n.relation, "edge_direction": n.edge_direction} if n.kind == OBJECT else {}),
            }
            for n in k.nodes
        ],
        "constraints": [
            {
                "type": c.ctype,
                "parents": list(c.parents),
                "child": c.child,
                "stage": c.stage,
                "implicit": c.implicit,
                "has_angle": c.has_angle,
                "has_dist": c.has_dist,
                "heading_offset_deg": None if c.heading_offset is None else num(math.degrees(c.heading_offset)),
                "delta_phi_deg": num(math.degrees(c.delta_phi)) if c.has_angle and c.ctype != 6 else None,
                "d": num(c.d) if c.has_dist and c.ctype != 6 else None,
                "delta_d": num(c.delta_d) if c.has_dist and c.ctype != 6 else None,
                "edges": [list(e) for e in c.edges],
            }
            for c in k.constraints
        ],
        "topo_order": list(k.topo_order),
        "nominal_headings_deg": [num(math.degrees(h)) for h in k.nominal_headings],
        "relaxed": k.relaxed,
    }
