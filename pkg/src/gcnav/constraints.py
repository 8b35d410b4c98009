"""Spatial constraint library.

Six constraint templates built from two sub-constraints evaluated on the
displacement ``w = v - u_ref``:

* angle:    ``cos(dphi)*|w| - (|w| - w . (cos phi, sin phi))``
* distance: ``dd**2 - (|w| - d)**2``

Types 1, 2, 3 and 6 carry the angle term; types 2, 3, 5 and 6 carry the
distance term. Type 4 carries neither and is always feasible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

Point = Tuple[float, float]
Assignment = Mapping[str, Point]

ANGLE_TYPES = frozenset({1, 2, 3, 6})
DIST_TYPES = frozenset({2, 3, 5, 6})
PARENT_COUNT = {1: 1, 2: 1, 3: 2, 4: 1, 5: 1, 6: 3}

DEFAULT_DELTA_PHI = math.radians(45.0)
DEFAULT_D = 1.5
DEFAULT_DELTA_D = 1.5

# min() over an empty set of sub-constraints (type 4).
ALWAYS_FEASIBLE = math.inf

DIRECTION_OFFSETS = {
    "front": 0.0,
    "left": math.pi / 2,
    "right": -math.pi / 2,
    "back": math.pi,
}


class ConstraintError(ValueError):
    """Constraint cannot be evaluated with the given assignment."""


class DegenerateGeometryError(ConstraintError):
    """Corridor parents do not define a usable opening."""


@dataclass(frozen=True)
class LibraryDefaults:
    """Tolerances used when an instruction leaves angle or distance unspecified."""

    delta_phi: float = DEFAULT_DELTA_PHI
    d: float = DEFAULT_D
    delta_d: float = DEFAULT_DELTA_D
    explicit_tol_frac: float = 0.25
    explicit_tol_min: float = 0.5

    def explicit_tolerance(self, distance: float) -> float:
        return max(self.explicit_tol_min, self.explicit_tol_frac * distance)


@dataclass(frozen=True)
class Constraint:
    """A constraint ``c(child | parents)``.

    ``phi`` is the absolute baseline angle once bound. Compiled constraints
    keep ``heading_offset`` (relative to the stage heading) and leave ``phi``
    unset until the heading is realized; type 6 derives both ``phi`` and
    ``delta_phi`` from its parents.
    """

    ctype: int
    parents: Tuple[str, ...]
    child: str
    phi: Optional[float] = None
    delta_phi: float = DEFAULT_DELTA_PHI
    d: float = DEFAULT_D
    delta_d: float = DEFAULT_DELTA_D
    stage: Optional[int] = None
    heading_offset: Optional[float] = None
    implicit: bool = False
    edges: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.ctype not in PARENT_COUNT:
            raise ConstraintError(f"unknown constraint type {self.ctype}")
        if len(self.parents) != PARENT_COUNT[self.ctype]:
            raise ConstraintError(
                f"type {self.ctype} takes {PARENT_COUNT[self.ctype]} parents, got {len(self.parents)}"
            )
        if not 0.0 < self.delta_phi < math.pi:
            raise ConstraintError(f"delta_phi must lie in (0, pi), got {self.delta_phi}")
        if self.d < 0 or self.delta_d < 0:
            raise ConstraintError("d and delta_d must be nonnegative")

    @property
    def has_angle(self) -> bool:
        return self.ctype in ANGLE_TYPES

    @property
    def has_dist(self) -> bool:
        return self.ctype in DIST_TYPES

    @property
    def ref_parent(self) -> str:
        """Parent the sub-constraints are measured from.

        Type 3 measures from the object it passes (its second parent); the
        first parent only orders the solve.
        """
        if self.ctype == 3:
            return self.parents[1]
        return self.parents[0]

    @property
    def search_radius(self) -> Optional[float]:
        """Radius around ``ref_parent`` outside which the distance term is negative."""
        if self.has_dist:
            return self.d + self.delta_d
        return None


def direction_offset(direction: str) -> float:
    """Heading offset of a stage direction token, radians counter-clockwise."""
    try:
        return DIRECTION_OFFSETS[direction]
    except KeyError:
        raise ConstraintError(f"direction {direction!r} has no angle offset") from None


def wrap_angle(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


# vectorized cores, ``w`` has shape (..., 2)

def angle_term(w: np.ndarray, phi: float, delta_phi: float) -> np.ndarray:
    norm = np.hypot(w[..., 0], w[..., 1])
    proj = w[..., 0] * math.cos(phi) + w[..., 1] * math.sin(phi)
    return math.cos(delta_phi) * norm - (norm - proj)


def dist_term(w: np.ndarray, d: float, delta_d: float) -> np.ndarray:
    norm = np.hypot(w[..., 0], w[..., 1])
    return delta_d**2 - (norm - d) ** 2


def _lookup(a: Assignment, node: str) -> np.ndarray:
    try:
        return np.asarray(a[node], dtype=float)
    except KeyError:
        raise ConstraintError(f"node {node!r} is not assigned") from None


def _check_bound(c: Constraint) -> None:
    if c.has_angle and c.phi is None:
        if c.ctype == 6:
            raise ConstraintError("type-6 corridor parameters have not been derived")
        raise ConstraintError(f"type-{c.ctype} constraint on {c.child!r} has no bound heading")


def sub_terms(c: Constraint, a: Assignment, points: Optional[np.ndarray] = None):
    """Return ``(angle, dist)`` sub-constraint values; absent terms are ``None``.

    With ``points`` given, the child is evaluated at each row of ``points``
    instead of its assigned coordinate.
    """
    for p in c.parents:
        _lookup(a, p)
    v = _lookup(a, c.child) if points is None else np.asarray(points, dtype=float)
    w = v - _lookup(a, c.ref_parent)
    ca = cd = None
    if c.has_angle:
        _check_bound(c)
        ca = angle_term(w, c.phi, c.delta_phi)
    if c.has_dist:
        cd = dist_term(w, c.d, c.delta_d)
    return ca, cd


def eval_angle(c: Constraint, a: Assignment) -> float:
    if not c.has_angle:
        raise ConstraintError(f"type {c.ctype} has no angle sub-constraint")
    return float(sub_terms(c, a)[0])


def eval_dist(c: Constraint, a: Assignment) -> float:
    if not c.has_dist:
        raise ConstraintError(f"type {c.ctype} has no distance sub-constraint")
    return float(sub_terms(c, a)[1])


def sum_and_min(c: Constraint, a: Assignment, points: Optional[np.ndarray] = None):
    """Vectorized ``(sum(c), min(c))``; min over no terms is ``ALWAYS_FEASIBLE``."""
    terms = [t for t in sub_terms(c, a, points) if t is not None]
    shape = () if points is None else np.shape(points)[:-1]
    if not terms:
        return np.zeros(shape), np.full(shape, ALWAYS_FEASIBLE)
    total = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    low = terms[0] if len(terms) == 1 else np.minimum(terms[0], terms[1])
    return total, low


def c_sum(c: Constraint, a: Assignment) -> float:
    return float(sum_and_min(c, a)[0])


def c_min(c: Constraint, a: Assignment) -> float:
    return float(sum_and_min(c, a)[1])


def is_feasible(c: Constraint, a: Assignment) -> bool:
    return c_min(c, a) >= 0.0


def corridor_params(u1: Point, u2: Point, u3: Point) -> Tuple[float, float]:
    """Bisector heading and half opening angle of the rays u1->u2 and u1->u3."""
    o = np.asarray(u1, dtype=float)
    r2 = np.asarray(u2, dtype=float) - o
    r3 = np.asarray(u3, dtype=float) - o
    n2, n3 = float(np.hypot(*r2)), float(np.hypot(*r3))
    if n2 < 1e-9 or n3 < 1e-9:
        raise DegenerateGeometryError("corridor parent coincides with its apex")
    cos_inner = float(np.clip(np.dot(r2, r3) / (n2 * n3), -1.0, 1.0))
    if cos_inner <= -1.0 + 1e-12:
        raise DegenerateGeometryError("corridor rays are anti-parallel")
    if cos_inner >= 1.0 - 1e-12:
        raise DegenerateGeometryError("corridor rays coincide")
    bis = r2 / n2 + r3 / n3
    return math.atan2(bis[1], bis[0]), 0.5 * math.acos(cos_inner)


def derive_corridor(c: Constraint, a: Assignment, defaults: LibraryDefaults = LibraryDefaults()) -> Constraint:
    """Bind a type-6 constraint's angle and distance from its three parents.

    The distance band starts at the gap's midpoint and extends ``defaults.d``
    beyond it, so the child has to clear the gap.
    """
    if c.ctype != 6:
        raise ConstraintError("only type-6 constraints derive corridor parameters")
    u1, u2, u3 = (tuple(_lookup(a, p)) for p in c.parents)
    phi, delta_phi = corridor_params(u1, u2, u3)
    mid = 0.5 * (np.asarray(u2) + np.asarray(u3))
    reach = float(np.hypot(*(mid - np.asarray(u1))))
    return replace(c, phi=phi, delta_phi=delta_phi, d=reach + defaults.d, delta_d=defaults.delta_d)


def relax(c: Constraint) -> Constraint:
    """Drop the angle term and keep only the outer distance bound ``|w| <= d + dd``.

    Angle-only constraints become type 4; everything with a distance term
    becomes a type-5 disk around its reference parent.
    """
    if not c.has_dist:
        return replace(c, ctype=4, parents=(c.ref_parent,), phi=None)
    return replace(c, ctype=5, parents=(c.ref_parent,), phi=None, d=0.0, delta_d=c.d + c.delta_d)


def lipschitz_bound(constraints: Sequence[Constraint]) -> float:
    """Upper bound on the objective's gradient norm over the feasible region."""
    total = 0.0
    for c in constraints:
        if c.has_angle:
            total += 2.0 - math.cos(c.delta_phi)
        if c.has_dist:
            total += 2.0 * c.delta_d
    return total
