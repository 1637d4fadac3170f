from fractions import Fraction

import pytest

from foldray.automorphisms import AutomorphismWord, fold_letter
from foldray.errors import (
    GraphStructureError,
    NotAllowableError,
    RankDropError,
)
from foldray.folds import FoldMachine, combinatorial_fold, fold_turn
from foldray.graphs import (
    Graph,
    GraphMap,
    MarkedMetricGraph,
    Turn,
    act,
    gates,
    graph_isomorphisms,
    is_allowable,
    is_isomorphic,
    is_legal_loop,
    metric_isomorphic,
    rose_graph,
    rose_point,
    theta_graph,
    transition_matrix,
    turn_is_legal,
    turns_without_gate_split,
)
from foldray.matrices import IntMatrix, identity


def barbell_graph():
    return Graph.build([(1, 0, 0), (2, 0, 1), (3, 1, 1)])


def k4_graph():
    return Graph.build(
        [(1, 0, 1), (2, 0, 2), (3, 0, 3), (4, 1, 2), (5, 1, 3), (6, 2, 3)]
    )


def test_basic_shapes():
    r = rose_graph(3)
    assert r.rank == 3
    assert r.valence(0) == 6
    assert not r.is_trivalent()
    th = theta_graph()
    assert th.rank == 2
    assert th.is_trivalent()
    assert k4_graph().rank == 3
    assert k4_graph().is_trivalent()


def test_direction_accessors():
    th = theta_graph()
    assert th.origin(1) == 0
    assert th.terminus(1) == 1
    assert th.origin(-1) == 1
    assert set(th.directions_at(0)) == {1, 2, 3}
    assert set(th.directions_at(1)) == {-1, -2, -3}


def test_separating_edge_detection():
    assert barbell_graph().has_separating_edge()
    assert not theta_graph().has_separating_edge()
    assert not rose_graph(2).has_separating_edge()
    assert not k4_graph().has_separating_edge()


def test_transitivity():
    assert rose_graph(2).is_transitive()
    # all three strands pointing the same way cannot return
    assert not theta_graph().is_transitive()
    # reversing one strand gives a directed cycle through both vertices
    assert theta_graph().reversed_edges([1]).is_transitive()


def test_transition_matrix_identity_and_fold_word():
    th = theta_graph()
    ident = GraphMap.identity_map(th)
    assert transition_matrix(ident) == identity(3)
    w = AutomorphismWord(2, (fold_letter(1, 2),))
    assert transition_matrix(w) == IntMatrix(((1, 1), (0, 1)))


def test_transition_matrix_composition():
    r = rose_graph(2)
    f = GraphMap(r, r, {0: 0}, {1: (1, 2), 2: (2,)})
    g = GraphMap(r, r, {0: 0}, {1: (1,), 2: (2, 1)})
    composite = f.then(g)
    assert composite.edge_images[1] == (1, 2, 1)
    assert transition_matrix(composite) == transition_matrix(f) @ transition_matrix(g)


def test_graph_map_validation():
    th = theta_graph()
    bad = GraphMap(th, th, {0: 0, 1: 1}, {1: (1,), 2: (2,), 3: (1, -1, 3)})
    with pytest.raises(GraphStructureError):
        bad.check()
    wrong_end = GraphMap(th, th, {0: 0, 1: 0}, {1: (1,), 2: (2,), 3: (3,)})
    with pytest.raises(GraphStructureError):
        wrong_end.check()


def test_gates_after_partial_fold():
    r = rose_graph(2)
    folded, f = combinatorial_fold(r, Turn(1, 2), "partial")
    parts = gates(f)[0]
    assert frozenset((1, 2)) in parts
    assert frozenset((-1,)) in parts
    assert frozenset((-2,)) in parts
    assert turns_without_gate_split(f) == ()
    assert not turn_is_legal(f, 1, 2)
    assert turn_is_legal(f, 1, -2)


def test_legal_loops_under_fold_map():
    r = rose_graph(2)
    _, f = combinatorial_fold(r, Turn(1, 2), "partial")
    assert is_legal_loop(f, (1, 2))
    assert not is_legal_loop(f, (-2, 1))  # crosses the folded turn
    assert is_legal_loop(f, (1,))
    assert is_legal_loop(f, ())
    assert not is_legal_loop(f, (1, -1))  # backtracks


def test_identity_map_gates_are_singletons():
    th = theta_graph()
    f = GraphMap.identity_map(th)
    for v, parts in gates(f).items():
        assert all(len(p) == 1 for p in parts)
        assert len(parts) == th.valence(v)


def test_metric_partial_fold_makes_theta():
    x = rose_point([Fraction(3, 5), Fraction(2, 5)])
    y, f = fold_turn(x, Turn(1, 2), Fraction(1, 4))
    assert y.graph.rank == 2
    assert is_isomorphic(y.graph, theta_graph())
    assert sorted(y.lengths.values()) == [
        Fraction(3, 20),
        Fraction(1, 4),
        Fraction(7, 20),
    ]
    assert y.volume == x.volume - Fraction(1, 4)
    for eid in f.source.edge_ids:
        img = f.edge_images[eid]
        assert len(img) <= 2
        assert all(d > 0 for d in img)


def test_full_metric_fold_of_rose_gives_rose():
    x = rose_point([Fraction(3, 5), Fraction(2, 5)])
    y, f = fold_turn(x, Turn(1, 2))
    assert len(y.graph.vertices) == 1
    assert sorted(y.lengths.values()) == [Fraction(1, 5), Fraction(2, 5)]
    # petal 1 crosses the identified piece then its remainder; petal 2 only
    # the identified piece
    assert transition_matrix(f) == IntMatrix(((1, 1), (1, 0)))


def test_metric_fold_refuses_rank_drop():
    x = rose_point(["1/2", "1/2"])
    with pytest.raises(NotAllowableError):
        fold_turn(x, Turn(1, 2))
    machine = FoldMachine(x)
    with pytest.raises(RankDropError):
        machine.identify(1, 2)


def test_full_fold_with_shared_terminus_allowed_combinatorially():
    th = theta_graph()
    t = Turn(1, 2)
    folded, f = combinatorial_fold(th, t, "full")
    assert folded.rank == th.rank - 1
    f.check()
    x = MarkedMetricGraph(th, {1: Fraction(1, 3), 2: Fraction(1, 3), 3: Fraction(1, 3)})
    assert not is_allowable(x, t)


def test_allowability_cases():
    assert is_allowable(rose_point(["3/5", "2/5"]), Turn(1, 2))
    assert not is_allowable(rose_point(["2/5", "2/5"]), Turn(1, 2))
    assert not is_allowable(rose_point(["2/5", "3/5"]), Turn(1, 2))


def test_fold_preserves_rank_and_transitivity():
    cases = [
        (theta_graph().reversed_edges([1]), Turn(2, 3)),
        (k4_graph(), Turn(1, 2)),
        (rose_graph(3), Turn(1, 3)),
    ]
    for g, t in cases:
        for kind in ("proper-full", "partial"):
            folded, f = combinatorial_fold(g, t, kind)
            assert folded.rank == g.rank
            f.check()
    oriented = theta_graph().reversed_edges([1])
    assert oriented.is_transitive()
    folded, _ = combinatorial_fold(oriented, Turn(2, 3), "partial")
    assert folded.is_transitive()


def test_act_identity_and_composition():
    x = rose_point(["1/2", "1/2"])
    w1 = AutomorphismWord(2, (fold_letter(1, 2),))
    w2 = AutomorphismWord(2, (fold_letter(2, 1),))
    assert act(x, AutomorphismWord.identity_word(2)).marking.is_identity()
    a = act(act(x, w1), w2)
    b = act(x, w1 * w2)
    assert a.marking.letters == b.marking.letters
    assert a.length_vector() == x.length_vector()


def test_isomorphism_search():
    th = theta_graph()
    relabeled = Graph.build([(7, 5, 4), (9, 5, 4), (8, 5, 4)])
    assert is_isomorphic(th, relabeled)
    assert not is_isomorphic(th, rose_graph(2))
    x = MarkedMetricGraph(th, {1: Fraction(1, 2), 2: Fraction(1, 3), 3: Fraction(1, 6)})
    y = MarkedMetricGraph(relabeled, {7: Fraction(1, 3), 8: Fraction(1, 2), 9: Fraction(1, 6)})
    assert metric_isomorphic(x, y)
    z = MarkedMetricGraph(relabeled, {7: Fraction(1, 3), 8: Fraction(1, 3), 9: Fraction(1, 3)})
    assert not metric_isomorphic(x, z)
    corr = next(graph_isomorphisms(th, relabeled))
    assert sorted(abs(v) for v in corr.values()) == [7, 8, 9]


def test_machine_subdivide_unsubdivide_roundtrip():
    x = rose_point(["1/2", "1/2"])
    m = FoldMachine(x)
    m.subdivide(1, Fraction(1, 5))
    g_mid = m.current_graph()
    assert len(g_mid.edges) == 3
    m.unsubdivide()
    g = m.current_graph()
    assert is_isomorphic(g, rose_graph(2))
    assert sorted(m.current_lengths().values()) == [Fraction(1, 2), Fraction(1, 2)]
    f = m.map_from_source()
    f.check()


def test_normalization_and_scaling():
    x = rose_point(["3/5", "3/5"])
    assert not x.normalized
    y = x.normalized_point()
    assert y.normalized
    assert y.length_vector() == (Fraction(1, 2), Fraction(1, 2))
    z = x.scaled(Fraction(5, 3))
    assert z.volume == 2
