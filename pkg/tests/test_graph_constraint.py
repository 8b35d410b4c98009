import math

import numpy as np
import pytest

from gcnav.constraints import Constraint, LibraryDefaults
from gcnav.graph_constraint import CycleDetected, compile_graph, dump, toposort
from gcnav.instr_graph import DecompositionError, Node, parse_mini_instruction
from oracles import random_graph, topo_violations


def by_child(k):
    out = {}
    for c in k.constraints:
        out.setdefault(c.child, []).append(c)
    return out


def test_front_with_distance_is_type2():
    k = compile_graph(parse_mini_instruction("STAGE front 3.0"))
    (c,) = k.constraints
    assert c.ctype == 2 and c.parents == ("w1",) and c.child == "w2"
    assert c.d == 3.0
    assert k.bind(c, {"w1": (0, 0)}).phi == 0.0


def test_through_door():
    k = compile_graph(parse_mini_instruction("STAGE front ; OBJ door through"))
    types = sorted((c.ctype, c.parents, c.child) for c in k.constraints)
    assert types == [(1, ("w1",), "w2"), (3, ("w1", "o1.1"), "w2"), (4, ("w1",), "o1.1")]
    assert [c.implicit for c in k.constraints if c.ctype == 4] == [True]


def test_unknown_is_type4():
    k = compile_graph(parse_mini_instruction("STAGE unknown"))
    assert [c.ctype for c in k.constraints] == [4]


@pytest.mark.parametrize(
    "line,ctype",
    [("STAGE left 2", 2), ("STAGE back", 1), ("STAGE unknown 4", 5), ("STAGE unknown", 4)],
)
def test_waypoint_mapping(line, ctype):
    (c,) = compile_graph(parse_mini_instruction(line)).constraints
    assert c.ctype == ctype


def test_explicit_distance_tolerance():
    (c,) = compile_graph(parse_mini_instruction("STAGE front 8")).constraints
    assert c.delta_d == 2.0
    (c,) = compile_graph(parse_mini_instruction("STAGE front")).constraints
    assert (c.d, c.delta_d) == (1.5, 1.5)


def test_near_toward_is_type5_from_object():
    k = compile_graph(parse_mini_instruction("STAGE front ; OBJ sofa near"))
    (c,) = [c for c in k.constraints if c.ctype == 5]
    assert c.parents == ("o1.1",) and c.child == "w2"
    assert (c.d, c.delta_d) == (1.5, 1.5)


def test_side_from_waypoint():
    k = compile_graph(parse_mini_instruction("STAGE front ; OBJ lamp left"))
    (c,) = k.incoming("o1.1")
    assert c.ctype == 1 and c.parents == ("w1",)
    assert k.bind(c, {"w1": (0, 0)}).phi == pytest.approx(math.pi / 2)


def test_side_heading_follows_stage():
    k = compile_graph(parse_mini_instruction("STAGE front 2 / STAGE left ; OBJ lamp right"))
    (c,) = k.incoming("o2.1")
    # the right-hand side after turning left faces the original heading
    a = {"w1": (0.0, 0.0), "w2": (2.0, 0.0)}
    assert k.bind(c, a).phi == pytest.approx(0.0, abs=1e-12)


def test_realized_heading():
    k = compile_graph(parse_mini_instruction("STAGE front 2 / STAGE front 2"))
    c = k.incoming("w3")[0]
    bound = k.bind(c, {"w1": (0.0, 0.0), "w2": (1.0, 1.0)})
    assert bound.phi == pytest.approx(math.pi / 4)


def test_corridor_pair():
    k = compile_graph(parse_mini_instruction("STAGE front ; OBJ chair pass ; OBJ chair pass"))
    (c,) = [c for c in k.constraints if c.ctype == 6]
    assert c.parents == ("w1", "o1.1", "o1.2") and c.child == "w2"
    a = {"w1": (0, 0), "o1.1": (3, 1), "o1.2": (3, -1)}
    b = k.bind(c, a)
    assert b.phi == pytest.approx(0.0, abs=1e-12)
    assert b.d == pytest.approx(3 + 1.5)


def test_single_corridor_object_rejected():
    with pytest.raises(DecompositionError, match="two objects"):
        compile_graph(parse_mini_instruction("STAGE front ; OBJ pillar weave"))


def test_relaxed_compile_drops_angles():
    k = compile_graph(parse_mini_instruction("STAGE front 3 ; OBJ door through"), relaxed=True)
    a = {"w1": (0, 0), "o1.1": (2, 0)}
    bound = [k.bind(c, a) for c in k.incoming("w2")]
    assert not any(c.has_angle for c in bound)


def test_chain_order():
    k = compile_graph(parse_mini_instruction("STAGE front / STAGE left"))
    assert list(k.topo_order) == ["w1", "w2", "w3"]


def test_object_before_waypoint():
    k = compile_graph(parse_mini_instruction("STAGE front ; OBJ door through"))
    assert list(k.topo_order) == ["w1", "o1.1", "w2"]


def test_mention_order():
    k = compile_graph(parse_mini_instruction("STAGE front ; OBJ table left ; OBJ chair near"))
    order = list(k.topo_order)
    assert order.index("o1.1") < order.index("o1.2")


def test_cycle_reported():
    nodes = [Node("a", "waypoint", 1), Node("b", "waypoint", 2)]
    cons = [Constraint(4, ("a",), "b"), Constraint(4, ("b",), "a")]
    with pytest.raises(CycleDetected) as exc:
        toposort(nodes, cons)
    assert exc.value.nodes == ("a", "b")


def test_dump_shape():
    d = dump(compile_graph(parse_mini_instruction("STAGE front 2 ; OBJ door through")))
    assert set(d) >= {"nodes", "constraints", "topo_order"}
    assert d["topo_order"] == ["w1", "o1.1", "w2"]


def test_random_graphs_compile_and_sort():
    rng = np.random.default_rng(7)
    for _ in range(150):
        g = random_graph(rng)
        k = compile_graph(g, LibraryDefaults())
        assert topo_violations(g, k.constraints, k.topo_order) == []
        assert compile_graph(g) == k
        implicit = [c for c in k.constraints if c.implicit]
        assert all(c.ctype == 4 for c in implicit)
        toward = [n for n in g.objects if n.edge_direction == "toward"]
        assert len(implicit) == len(toward)
        covered = {e for c in k.constraints for e in c.edges}
        assert set(g.edges) <= covered
