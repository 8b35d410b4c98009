"""Navigation tree over the solve order.

Level ``i`` holds candidate coordinates for the ``i``-th node of the
topological order. The tree is append-only: branches are created by
:func:`expand`, flagged by :func:`backtrack`, and never moved or removed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .constraints import Point
from .instr_graph import WAYPOINT


class TreeError(RuntimeError):
    pass


@dataclass(eq=False)
class Branch:
    index: int
    level: int
    coord: Point
    parent: Optional["Branch"] = None
    children: List["Branch"] = field(default_factory=list)
    explored: bool = False
    expanded: bool = False
    dead: bool = False


@dataclass(eq=False)
class NavigationTree:
    levels: Tuple[str, ...]
    kinds: Tuple[str, ...]
    branches: List[Branch]
    active: Branch
    exhausted: bool = False

    @property
    def root(self) -> Branch:
        return self.branches[0]

    @property
    def depth(self) -> int:
        return max(b.level for b in self.branches) + 1


def init_tree(levels: Sequence[str] = ("w1",), kinds: Optional[Sequence[str]] = None) -> NavigationTree:
    kinds = tuple(kinds) if kinds is not None else tuple(WAYPOINT for _ in levels)
    root = Branch(0, 0, (0.0, 0.0), explored=True)
    return NavigationTree(tuple(levels), kinds, [root], root)


def expand(t: NavigationTree, solutions: Sequence[Point]) -> Optional[Branch]:
    """Attach one child per solution under the active branch and step into the first."""
    b = t.active
    if b.expanded:
        raise TreeError(f"branch {b.index} was already expanded")
    if b.level + 1 >= len(t.levels):
        raise TreeError("active branch is already at the last level")
    b.expanded = True
    if not solutions:
        b.dead = True
        return None
    for q in solutions:
        child = Branch(len(t.branches), b.level + 1, (float(q[0]), float(q[1])), parent=b)
        b.children.append(child)
        t.branches.append(child)
    first = b.children[0]
    first.explored = True
    t.active = first
    return first


def backtrack(t: NavigationTree) -> Optional[Branch]:
    """Move to the nearest unexplored sibling of the active path.

    Returns ``None`` (and marks the tree exhausted) when no ancestor has an
    unexplored child left.
    """
    if not t.active.dead:
        raise TreeError("backtrack called while the active branch is alive")
    b = t.active
    while b.parent is not None:
        for sib in b.parent.children:
            if not sib.explored:
                sib.explored = True
                t.active = sib
                return sib
        b = b.parent
    t.exhausted = True
    return None


def ancestry(t: NavigationTree, b: Branch) -> List[Branch]:
    if b.index >= len(t.branches) or t.branches[b.index] is not b:
        raise TreeError("branch does not belong to this tree")
    chain = []
    while b is not None:
        chain.append(b)
        b = b.parent
    return chain[::-1]


def path_to(t: NavigationTree, b: Branch) -> List[Point]:
    """Root-to-``b`` coordinates at waypoint levels only."""
    return [x.coord for x in ancestry(t, b) if t.kinds[x.level] == WAYPOINT]


def assignment(t: NavigationTree, b: Branch) -> Dict[str, Point]:
    return {t.levels[x.level]: x.coord for x in ancestry(t, b)}


def is_complete(t: NavigationTree) -> bool:
    return t.active.level == len(t.levels) - 1 and not t.active.dead


def dump_tree(t: NavigationTree) -> dict:
    return {
        "levels": list(t.levels),
        "kinds": list(t.kinds),
        "active": t.active.index,
        "exhausted": t.exhausted,
        "branches": [
            {
                "index": b.index,
                "level": b.level,
                "node": t.levels[b.level],
                "coord": [round(b.coord[0], 6), round(b.coord[1], 6)],
                "parent": None if b.parent is None else b.parent.index,
                "explored": b.explored,
                "dead": b.dead,
            }
            for b in t.branches
        ],
    }
