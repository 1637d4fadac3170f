import random

import pytest

from foldray.decompose import (
    LoopDecomposition,
    RootedTree,
    bad_edge_count,
    good_spanning_tree,
    loop_decomposition,
    nontree_enumeration,
    tree_complexity,
    verify_decomposition,
)
from foldray.errors import GraphStructureError
from foldray.graphs import Graph, Turn, rose_graph, theta_graph


def k4_graph():
    return Graph.build(
        [(1, 0, 1), (2, 0, 2), (3, 0, 3), (4, 1, 2), (5, 1, 3), (6, 2, 3)]
    )


def square_with_diagonal():
    return Graph.build([(1, 0, 1), (2, 1, 2), (3, 2, 3), (4, 3, 0), (5, 0, 2)])


def test_good_tree_on_theta():
    tree = good_spanning_tree(theta_graph(), 2)
    assert tree.root == 1
    assert tree.edge_ids == frozenset({2})
    assert bad_edge_count(theta_graph(), tree) == 0
    assert tree_complexity(theta_graph(), tree) == (float("-inf"), 0)


def test_good_tree_rejects_loop_edge():
    with pytest.raises(GraphStructureError):
        good_spanning_tree(rose_graph(2), 1)


def test_bad_edge_count_square_diagonal():
    g = square_with_diagonal()
    # chain tree 0-1-2 plus 0-3: edge 3 joins two incomparable branches
    tree = RootedTree(0, {1: (0, 1), 2: (1, 2), 3: (0, 4)})
    assert bad_edge_count(g, tree) == 1
    fixed = good_spanning_tree(g, 1)
    assert bad_edge_count(g, fixed) == 0
    assert 1 in fixed.edge_ids
    assert fixed.root == 1


def test_good_tree_on_k4_requires_repair():
    g = k4_graph()
    tree = good_spanning_tree(g, 1)
    assert tree.root == 1
    assert 1 in tree.edge_ids
    assert bad_edge_count(g, tree) == 0
    # root keeps tree valence 1: only the base edge is incident to it
    at_root = [eid for eid in tree.edge_ids if 1 in g.edge(eid)[1:]]
    assert at_root == [1]


def test_nontree_enumeration_rule():
    g = k4_graph()
    tree = good_spanning_tree(g, 1)
    order = nontree_enumeration(g, tree)
    assert len(order) == g.rank
    lows = []
    for eid in order:
        _, a, b = g.edge(eid)
        low = a if tree.leq(a, b) else b
        lows.append(low)
    for k in range(len(order)):
        for j in range(k + 1, len(order)):
            strictly_above = (
                tree.leq(lows[j], lows[k]) and lows[j] != lows[k]
            )
            assert not strictly_above


def test_theta_decomposition_frozen():
    # strands 1,2,3 from vertex 0 to vertex 1; turn of the reversed strands
    # 2,3 at vertex 1
    dec = loop_decomposition(theta_graph(), Turn(-2, -3))
    assert dec.base_vertex == 1
    assert dec.loops == ((-1, 2), (-1, 3))
    assert dec.orientation == {1: -1, 2: 1, 3: 1}
    assert verify_decomposition(dec)
    assert dec.oriented_graph().is_transitive()


def test_rose_decomposition():
    dec = loop_decomposition(rose_graph(3), Turn(1, 2))
    assert len(dec.loops) == 3
    assert {abs(l[0]) for l in dec.loops} == {1, 2, 3}
    assert all(len(l) == 1 for l in dec.loops)
    assert verify_decomposition(dec)


def test_k4_decomposition():
    g = k4_graph()
    for t in (Turn(-1, 4), Turn(-1, 5), Turn(-6, -3), Turn(-2, 6)):
        dec = loop_decomposition(g, t)
        assert len(dec.loops) == g.rank
        assert verify_decomposition(dec)
        assert dec.oriented_graph().is_transitive()


def test_verifier_rejects_tampering():
    dec = loop_decomposition(theta_graph(), Turn(-2, -3))
    broken = LoopDecomposition(
        dec.graph,
        dec.base_vertex,
        dec.orientation,
        (dec.loops[0], (-1, 2)),
        dec.turn_edges,
    )
    assert not verify_decomposition(broken)  # coverage fails
    wrong_sign = LoopDecomposition(
        dec.graph, dec.base_vertex, dec.orientation, ((-1, 2), (1, 3)), dec.turn_edges
    )
    assert not verify_decomposition(wrong_sign)
    repeated = LoopDecomposition(
        dec.graph,
        dec.base_vertex,
        dec.orientation,
        ((-1, 2), (-1, 3, -3, 3)),
        dec.turn_edges,
    )
    assert not verify_decomposition(repeated)


def test_verifier_rejects_disconnected_intersection():
    g = Graph.build([(1, 0, 1), (2, 0, 1), (3, 0, 1), (4, 0, 1)])
    orientation = {1: -1, 2: 1, 3: -1, 4: 1}
    loops = ((-1, 2), (-3, 4))
    dec = LoopDecomposition(g, 0, orientation, loops, (1, 2))
    # the two circles meet the earlier ones in both vertices but share no
    # edge: the intersection is two isolated points
    assert not verify_decomposition(dec)


def _random_trivalent(rng: random.Random, vertices: int) -> Graph | None:
    stubs = [v for v in range(vertices) for _ in range(3)]
    rng.shuffle(stubs)
    edges = []
    for k in range(0, len(stubs), 2):
        a, b = stubs[k], stubs[k + 1]
        if a == b:
            return None
        edges.append((k // 2 + 1, a, b))
    g = Graph.build(edges)
    if not g.is_connected() or g.has_separating_edge():
        return None
    return g


def test_random_trivalent_decompositions():
    rng = random.Random(20240817)
    produced = 0
    while produced < 20:
        g = _random_trivalent(rng, rng.choice([2, 4, 6]))
        if g is None:
            continue
        v0 = rng.choice(sorted(g.vertices))
        dirs = g.directions_at(v0)
        t = Turn(dirs[0], dirs[1])
        dec = loop_decomposition(g, t)
        assert len(dec.loops) == g.rank
        assert verify_decomposition(dec)
        assert dec.oriented_graph().is_transitive()
        produced += 1
