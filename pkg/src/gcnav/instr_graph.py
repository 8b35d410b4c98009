"""Instruction decomposition graphs.

An instruction is split into stages, each with one displacement. Waypoint
``w1`` is the start; stage ``s`` moves from ``w{s}`` to ``w{s+1}``. Objects
mentioned in stage ``s`` are nodes ``o{s}.{j}`` (``j`` in mention order) and
attach to the stage through a single edge: toward-waypoint objects point at
``w{s+1}``, from-waypoint objects hang off ``w{s}``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Any, Dict, List, Optional, Tuple

DIRECTIONS = ("front", "right", "left", "back", "unknown")
RELATIONS = ("right", "left", "through", "weave", "pass", "near", "back")
SIDE_RELATIONS = frozenset({"left", "right", "back"})
CORRIDOR_RELATIONS = frozenset({"weave", "pass"})

TOWARD = "toward"
FROM = "from"
EDGE_DIRECTIONS = (TOWARD, FROM)

WAYPOINT = "waypoint"
OBJECT = "object"

Edge = Tuple[str, str]


class DecompositionError(ValueError):
    """Document or text does not describe a valid instruction graph."""


class UnknownTokenError(DecompositionError):
    pass


class MiniSyntaxError(DecompositionError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def default_edge_direction(relation: str) -> str:
    # side relations locate the object relative to where the stage starts
    return FROM if relation in SIDE_RELATIONS else TOWARD


def _direction_token(token: Any) -> str:
    if not isinstance(token, str) or token.strip().lower() not in DIRECTIONS:
        raise UnknownTokenError(f"unknown direction token {token!r}")
    return token.strip().lower()


def _relation_token(token: Any) -> str:
    if not isinstance(token, str) or token.strip().lower() not in RELATIONS:
        raise UnknownTokenError(f"unknown relation token {token!r}")
    return token.strip().lower()


@dataclass(frozen=True)
class ObjectRef:
    label: str
    relation: str
    edge_direction: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "relation", _relation_token(self.relation))
        if self.edge_direction is None:
            object.__setattr__(self, "edge_direction", default_edge_direction(self.relation))
        elif self.edge_direction not in EDGE_DIRECTIONS:
            raise UnknownTokenError(f"unknown edge direction {self.edge_direction!r}")
        if not self.label.strip():
            raise DecompositionError("object label is empty")


@dataclass(frozen=True)
class Stage:
    direction: str
    distance_m: Optional[float] = None
    objects: Tuple[ObjectRef, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "direction", _direction_token(self.direction))
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.distance_m is not None:
            if self.distance_m < 0:
                raise DecompositionError(f"negative stage distance {self.distance_m}")
            object.__setattr__(self, "distance_m", float(self.distance_m))


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    stage: int
    label: Optional[str] = None
    relation: Optional[str] = None
    edge_direction: Optional[str] = None
    mention: int = 0


def waypoint_id(index: int) -> str:
    return f"w{index}"


def object_id(stage: int, j: int) -> str:
    return f"o{stage}.{j}"


@dataclass(frozen=True)
class InstructionGraph:
    """The decomposition DAG.

    Build with :meth:`from_stages`; ``nodes`` and ``edges`` may also be given
    by hand, in which case :func:`validate_graph` reports inconsistencies.
    """

    stages: Tuple[Stage, ...]
    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]

    @classmethod
    def from_stages(cls, stages) -> "InstructionGraph":
        stages = tuple(stages)
        if not stages:
            raise DecompositionError("instruction has zero stages")
        nodes: List[Node] = [Node(waypoint_id(i), WAYPOINT, i) for i in range(1, len(stages) + 2)]
        edges: List[Edge] = []
        for s, stage in enumerate(stages, start=1):
            edges.append((waypoint_id(s), waypoint_id(s + 1)))
            for j, obj in enumerate(stage.objects, start=1):
                oid = object_id(s, j)
                nodes.append(Node(oid, OBJECT, s, obj.label, obj.relation, obj.edge_direction, j))
                if obj.edge_direction == TOWARD:
                    edges.append((oid, waypoint_id(s + 1)))
                else:
                    edges.append((waypoint_id(s), oid))
        return cls(stages, tuple(nodes), tuple(edges))

    @property
    def waypoint_count(self) -> int:
        return len(self.stages) + 1

    @property
    def waypoints(self) -> Tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.kind == WAYPOINT)

    @property
    def objects(self) -> Tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.kind == OBJECT)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


def validate_graph(g: InstructionGraph) -> List[Violation]:
    """List every structural problem in ``g``; empty means valid."""
    report: List[Violation] = []
    ids = [n.id for n in g.nodes]
    known = set(ids)
    waypoints = [n for n in g.nodes if n.kind == WAYPOINT]
    wp_ids = {n.id for n in waypoints}

    for e in g.edges:
        for end in e:
            if end not in known:
                report.append(Violation("dangling-edge", f"edge {e} references unknown node {end!r}"))

    sorter = TopologicalSorter()
    for n in known:
        sorter.add(n)
    for u, v in g.edges:
        sorter.add(v, u)
    try:
        sorter.prepare()
    except CycleError as exc:
        report.append(Violation("acyclic", f"cycle through {exc.args[1]}"))

    wp_edges = [(u, v) for u, v in g.edges if u in wp_ids and v in wp_ids]
    has_incoming = {v for _, v in wp_edges}
    roots = [n.id for n in waypoints if n.id not in has_incoming]
    if len(roots) != 1:
        report.append(Violation("root", f"expected one root waypoint, found {roots}"))
    if len(waypoints) != len(g.stages) + 1:
        report.append(
            Violation("waypoint-count", f"{len(waypoints)} waypoints for {len(g.stages)} stages")
        )
    chain = {(waypoint_id(i), waypoint_id(i + 1)) for i in range(1, len(g.stages) + 1)}
    if set(wp_edges) != chain or len(wp_edges) != len(chain):
        report.append(Violation("chain", "waypoint edges do not form the chain w1->...->wn"))

    seen: Dict[str, int] = {}
    for n in g.nodes:
        if n.kind != OBJECT:
            continue
        if n.id in seen and seen[n.id] != n.stage:
            report.append(
                Violation("membership", f"object {n.id!r} belongs to stages {seen[n.id]} and {n.stage}")
            )
            continue
        if n.id in seen:
            report.append(Violation("duplicate", f"object {n.id!r} listed twice"))
            continue
        seen[n.id] = n.stage
        if not 1 <= n.stage <= len(g.stages):
            report.append(Violation("membership", f"object {n.id!r} has no stage {n.stage}"))
            continue
        allowed = {(waypoint_id(n.stage), n.id), (n.id, waypoint_id(n.stage + 1))}
        touching = [e for e in g.edges if n.id in e]
        if len(touching) != 1 or touching[0] not in allowed:
            report.append(
                Violation("membership", f"object {n.id!r} is not attached to exactly its own stage")
            )
        if n.relation not in RELATIONS:
            report.append(Violation("token", f"object {n.id!r} has relation {n.relation!r}"))
    for i, stage in enumerate(g.stages, start=1):
        if stage.direction not in DIRECTIONS:
            report.append(Violation("token", f"stage {i} direction {stage.direction!r}"))
    return report


# -- structured documents ---------------------------------------------------

_STAGE_KEY = re.compile(r"^\s*stage[\s_]*(\d+)\s*$", re.IGNORECASE)


def _get(entry: Dict[str, Any], *names: str) -> Any:
    for name in names:
        if name in entry:
            return entry[name]
    return None


def _stage_from_doc(key: str, body: Any) -> Stage:
    if not isinstance(body, dict):
        raise DecompositionError(f"{key!r} is not an object")
    pos = _get(body, "waypoint position", "waypoint_position")
    if pos is None:
        raise DecompositionError(f"{key!r} has no 'waypoint position'")
    distance = None
    if isinstance(pos, dict):
        direction = _get(pos, "direction")
        distance = _get(pos, "distance_m", "distance")
        if distance is not None and (isinstance(distance, bool) or not isinstance(distance, (int, float))):
            raise DecompositionError(f"{key!r} distance {distance!r} is not a number")
    else:
        direction = pos
    nodes = _get(body, "connected nodes", "connected_nodes") or []
    if not isinstance(nodes, list):
        raise DecompositionError(f"{key!r} 'connected nodes' is not a list")
    objects = []
    for i, entry in enumerate(nodes):
        if not isinstance(entry, dict):
            raise DecompositionError(f"{key!r} node {i} is not an object")
        label = _get(entry, "node")
        relation = _get(entry, "object position", "object_position", "position")
        if label is None or relation is None:
            raise DecompositionError(f"{key!r} node {i} lacks 'node' or 'object position'")
        objects.append(ObjectRef(str(label), relation, _get(entry, "edge direction", "edge_direction")))
    return Stage(_direction_token(direction), distance, tuple(objects))


def graph_from_document(doc: Any) -> InstructionGraph:
    if not isinstance(doc, dict):
        raise DecompositionError("decomposition document must be an object of stages")
    stages = []
    for key, body in doc.items():
        if not _STAGE_KEY.match(str(key)):
            raise DecompositionError(f"unexpected key {key!r}; stages are keyed 'stage N'")
        stages.append(_stage_from_doc(key, body))
    return InstructionGraph.from_stages(stages)


def parse_decomposition(document: str) -> InstructionGraph:
    """Parse a decomposition document (JSON, stages keyed ``"stage N"``)."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise DecompositionError(f"malformed document: {exc}") from exc
    return graph_from_document(doc)


def to_document(g: InstructionGraph) -> Dict[str, Any]:
    doc: Dict[str, Any] = {}
    for i, stage in enumerate(g.stages, start=1):
        pos: Any = stage.direction
        if stage.distance_m is not None:
            pos = {"direction": stage.direction, "distance_m": stage.distance_m}
        nodes = []
        for obj in stage.objects:
            entry = {"node": obj.label, "object position": obj.relation}
            if obj.edge_direction != default_edge_direction(obj.relation):
                entry["edge direction"] = obj.edge_direction
            nodes.append(entry)
        doc[f"stage {i}"] = {"waypoint position": pos, "connected nodes": nodes}
    return doc


# -- mini-language ----------------------------------------------------------

def _split_segments(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        for segment in line.split("/"):
            if segment.strip():
                yield lineno, segment.strip()


def parse_mini_instruction(text: str) -> InstructionGraph:
    """Parse ``STAGE <dir> [<meters>] ; OBJ <label> <relation> [toward|from]`` lines.

    Stages are separated by newlines or ``/``; ``#`` starts a comment.
    """
    stages = []
    for lineno, segment in _split_segments(text):
        clauses = [c.strip() for c in segment.split(";")]
        head = clauses[0].split()
        if not head or head[0].upper() != "STAGE":
            raise MiniSyntaxError(lineno, f"expected STAGE, got {clauses[0]!r}")
        if len(head) not in (2, 3):
            raise MiniSyntaxError(lineno, "STAGE takes a direction and an optional distance")
        distance = None
        if len(head) == 3:
            try:
                distance = float(head[2])
            except ValueError:
                raise MiniSyntaxError(lineno, f"bad distance {head[2]!r}") from None
        objects = []
        for clause in clauses[1:]:
            words = clause.split()
            if not words or words[0].upper() != "OBJ":
                raise MiniSyntaxError(lineno, f"expected OBJ clause, got {clause!r}")
            words = words[1:]
            direction = None
            if len(words) >= 3 and words[-1].lower() in EDGE_DIRECTIONS:
                direction = words.pop().lower()
            if len(words) < 2:
                raise MiniSyntaxError(lineno, "OBJ takes a label and a relation")
            objects.append((" ".join(words[:-1]), words[-1], direction))
        try:
            stages.append(Stage(head[1], distance, tuple(ObjectRef(*o) for o in objects)))
        except UnknownTokenError as exc:
            raise UnknownTokenError(f"line {lineno}: {exc}") from None
    return InstructionGraph.from_stages(stages)


def render_mini(g: InstructionGraph) -> str:
    lines = []
    for stage in g.stages:
        parts = [f"STAGE {stage.direction}" + (f" {stage.distance_m!r}" if stage.distance_m is not None else "")]
        for obj in stage.objects:
            clause = f"OBJ {obj.label} {obj.relation}"
            if obj.edge_direction != default_edge_direction(obj.relation):
                clause += f" {obj.edge_direction}"
            parts.append(clause)
        lines.append(" ; ".join(parts))
    return "\n".join(lines) + "\n"


def looks_like_mini(text: str) -> bool:
    for _, segment in _split_segments(text):
        return segment.split()[0].upper() == "STAGE"
    return False


def parse_instruction_file(text: str) -> InstructionGraph:
    """Parse either a decomposition document or mini-language text."""
    if text.lstrip().startswith("{"):
        return parse_decomposition(text)
    return parse_mini_instruction(text)
