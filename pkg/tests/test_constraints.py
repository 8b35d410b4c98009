import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gcnav.constraints import (
    ALWAYS_FEASIBLE,
    Constraint,
    ConstraintError,
    DegenerateGeometryError,
    LibraryDefaults,
    c_min,
    c_sum,
    corridor_params,
    derive_corridor,
    direction_offset,
    eval_angle,
    eval_dist,
    is_feasible,
    relax,
)

DPHI = math.radians(45)


def t2(v, phi=0.0, dphi=DPHI, d=1.5, dd=1.5):
    c = Constraint(2, ("u",), "v", phi=phi, delta_phi=dphi, d=d, delta_d=dd)
    return c, {"u": (0.0, 0.0), "v": v}


# frozen hand evaluations of the two sub-constraint formulas
def test_angle_on_axis():
    c, a = t2((2.0, 0.0))
    assert eval_angle(c, a) == pytest.approx(1.41421, abs=1e-5)


def test_angle_off_cone():
    c, a = t2((0.0, 2.0))
    assert eval_angle(c, a) == pytest.approx(-0.58579, abs=1e-5)


@pytest.mark.parametrize("phi,dphi", [(0.0, 0.3), (2.0, 1.2), (-3.0, 3.0)])
def test_angle_zero_at_parent(phi, dphi):
    c, a = t2((0.0, 0.0), phi=phi, dphi=dphi)
    assert eval_angle(c, a) == 0.0


def test_dist_boundary():
    c, a = t2((3.0, 0.0))
    assert eval_dist(c, a) == pytest.approx(0.0, abs=1e-12)


def test_dist_just_outside():
    c, a = t2((3.1, 0.0))
    assert eval_dist(c, a) == pytest.approx(-0.31, abs=1e-9)


def test_dist_zero_at_parent_when_d_equals_tolerance():
    c, a = t2((0.0, 0.0), d=2.0, dd=2.0)
    assert eval_dist(c, a) == pytest.approx(0.0, abs=1e-12)


def test_sum_and_min_type2():
    c, a = t2((2.0, 0.0))
    assert c_sum(c, a) == pytest.approx(3.41421, abs=1e-5)
    assert c_min(c, a) == pytest.approx(1.41421, abs=1e-5)
    assert is_feasible(c, a)


def test_type2_infeasible_outside_cone():
    c, a = t2((0.0, 2.0))
    assert not is_feasible(c, a)


def test_type4_always_feasible():
    c = Constraint(4, ("u",), "v")
    a = {"u": (0.0, 0.0), "v": (123.0, -40.0)}
    assert c_sum(c, a) == 0.0
    assert c_min(c, a) == ALWAYS_FEASIBLE
    assert is_feasible(c, a)


def test_type5_peak():
    c = Constraint(5, ("u",), "v", d=2.0, delta_d=0.75)
    a = {"u": (1.0, 1.0), "v": (1.0, 3.0)}
    assert c_sum(c, a) == pytest.approx(0.75**2)
    assert c_min(c, a) == pytest.approx(0.75**2)


def test_type3_measures_from_object():
    c = Constraint(3, ("w", "door"), "v", phi=0.0)
    a = {"w": (-50.0, 7.0), "door": (5.0, 0.0), "v": (6.5, 0.0)}
    assert eval_dist(c, a) == pytest.approx(1.5**2)
    assert eval_angle(c, a) == pytest.approx(1.5 * math.cos(DPHI))


def test_missing_assignment():
    c, a = t2((1.0, 0.0))
    del a["u"]
    with pytest.raises(ConstraintError):
        c_sum(c, a)


def test_absent_terms_raise():
    with pytest.raises(ConstraintError):
        eval_angle(Constraint(5, ("u",), "v"), {"u": (0, 0), "v": (1, 0)})
    with pytest.raises(ConstraintError):
        eval_dist(Constraint(1, ("u",), "v", phi=0.0), {"u": (0, 0), "v": (1, 0)})


def test_type6_needs_derivation():
    c = Constraint(6, ("u", "a", "b"), "v")
    with pytest.raises(ConstraintError):
        c_sum(c, {"u": (0, 0), "a": (1, 1), "b": (1, -1), "v": (2, 0)})


@pytest.mark.parametrize(
    "kwargs",
    [dict(ctype=7, parents=("u",)), dict(ctype=3, parents=("u",)), dict(ctype=1, parents=("u",), delta_phi=0.0),
     dict(ctype=1, parents=("u",), delta_phi=math.pi), dict(ctype=5, parents=("u",), d=-1.0)],
)
def test_constructor_rejects(kwargs):
    with pytest.raises(ConstraintError):
        Constraint(child="v", **kwargs)


def test_indicators():
    for t in range(1, 7):
        parents = tuple("abc"[: {3: 2, 6: 3}.get(t, 1)])
        c = Constraint(t, parents, "v")
        assert c.has_angle == (t in (1, 2, 3, 6))
        assert c.has_dist == (t in (2, 3, 5, 6))


def test_direction_offsets():
    assert direction_offset("front") == 0.0
    assert direction_offset("left") == pytest.approx(math.pi / 2)
    assert direction_offset("right") == pytest.approx(-math.pi / 2)
    assert direction_offset("back") == pytest.approx(math.pi)
    with pytest.raises(ConstraintError):
        direction_offset("unknown")


def test_explicit_distance_tolerance():
    lib = LibraryDefaults()
    assert lib.explicit_tolerance(1.0) == 0.5
    assert lib.explicit_tolerance(8.0) == 2.0


# corridor
def test_corridor_symmetric_about_x():
    phi, dphi = corridor_params((0, 0), (1, 1), (1, -1))
    assert phi == pytest.approx(0.0, abs=1e-12)
    assert dphi == pytest.approx(math.radians(45))


def test_corridor_quarter():
    phi, dphi = corridor_params((0, 0), (2, 0), (0, 2))
    assert phi == pytest.approx(math.radians(45))
    assert dphi == pytest.approx(math.radians(45))


@pytest.mark.parametrize("u2,u3", [((0, 0), (1, 0)), ((1, 0), (-2, 0)), ((1, 0), (3, 0))])
def test_corridor_degenerate(u2, u3):
    with pytest.raises(DegenerateGeometryError):
        corridor_params((0, 0), u2, u3)


def test_derive_corridor_band_clears_gap():
    c = Constraint(6, ("u", "a", "b"), "v")
    a = {"u": (0.0, 0.0), "a": (4.0, 1.0), "b": (4.0, -1.0)}
    k = derive_corridor(c, a)
    assert k.phi == pytest.approx(0.0, abs=1e-12)
    assert k.d == pytest.approx(4.0 + 1.5)
    assert is_feasible(k, {**a, "v": (5.5, 0.0)})
    assert not is_feasible(k, {**a, "v": (0.0, 5.5)})


def test_relax_keeps_outer_bound_only():
    c, a = t2((0.0, 2.0))
    r = relax(c)
    assert r.ctype == 5 and not r.has_angle
    assert is_feasible(r, a)
    assert is_feasible(r, {**a, "v": (0.0, 3.0)})
    assert not is_feasible(r, {**a, "v": (0.0, 3.01)})
    assert relax(Constraint(1, ("u",), "v", phi=0.0)).ctype == 4


# properties
coord = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-math.pi, math.pi)
tol = st.floats(0.01, math.pi - 0.01)


@settings(max_examples=300, deadline=None)
@given(coord, coord, coord, coord, angle, tol)
def test_angle_identity(ux, uy, vx, vy, phi, dphi):
    c = Constraint(1, ("u",), "v", phi=phi, delta_phi=dphi)
    a = {"u": (ux, uy), "v": (vx, vy)}
    r = math.hypot(vx - ux, vy - uy)
    got = eval_angle(c, a)
    if r == 0:
        assert got == 0
        return
    cos_t = ((vx - ux) * math.cos(phi) + (vy - uy) * math.sin(phi)) / r
    assert got == pytest.approx(r * (math.cos(dphi) - 1 + cos_t), abs=1e-9 * max(1.0, r))


@settings(max_examples=300, deadline=None)
@given(coord, coord, st.floats(0, 20), st.floats(0, 10))
def test_distance_identity(vx, vy, d, dd):
    c = Constraint(5, ("u",), "v", d=d, delta_d=dd)
    r = math.hypot(vx, vy)
    assume(abs(abs(r - d) - dd) > 1e-9)
    assert (eval_dist(c, {"u": (0, 0), "v": (vx, vy)}) >= 0) == (abs(r - d) <= dd)


@settings(max_examples=200, deadline=None)
@given(angle, st.floats(0.1, 30), angle, tol, st.floats(0.1, 10))
def test_angle_homogeneous(theta, r, phi, dphi, s):
    c = Constraint(1, ("u",), "v", phi=phi, delta_phi=dphi)
    v = (r * math.cos(theta), r * math.sin(theta))
    base = eval_angle(c, {"u": (0, 0), "v": v})
    scaled = eval_angle(c, {"u": (0, 0), "v": (s * v[0], s * v[1])})
    assert scaled == pytest.approx(s * base, abs=1e-9 * max(1.0, s * r))


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord, angle, tol, angle)
def test_rotation_equivariance(ux, uy, vx, vy, phi, dphi, rot):
    def R(p):
        return (p[0] * math.cos(rot) - p[1] * math.sin(rot), p[0] * math.sin(rot) + p[1] * math.cos(rot))

    c = Constraint(2, ("u",), "v", phi=phi, delta_phi=dphi, d=3.0, delta_d=2.0)
    cr = Constraint(2, ("u",), "v", phi=phi + rot, delta_phi=dphi, d=3.0, delta_d=2.0)
    a = {"u": (ux, uy), "v": (vx, vy)}
    ar = {k: R(p) for k, p in a.items()}
    assert eval_angle(cr, ar) == pytest.approx(eval_angle(c, a), abs=1e-9 * 100)
    assert eval_dist(cr, ar) == pytest.approx(eval_dist(c, a), rel=1e-9, abs=1e-6)


@settings(max_examples=300, deadline=None)
@given(coord, coord, coord, coord, coord, coord)
def test_corridor_symmetry(x1, y1, x2, y2, x3, y3):
    try:
        p = corridor_params((x1, y1), (x2, y2), (x3, y3))
    except DegenerateGeometryError:
        return
    q = corridor_params((x1, y1), (x3, y3), (x2, y2))
    assert p[0] == pytest.approx(q[0], abs=1e-9)
    assert p[1] == pytest.approx(q[1], abs=1e-9)
    assert 0 < p[1] <= math.pi / 2
