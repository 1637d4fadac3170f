import random
from fractions import Fraction

import pytest

from foldray.decompose import LoopDecomposition, loop_decomposition
from foldray.errors import (
    DecompositionError,
    GraphStructureError,
    NotAllowableError,
    NotProperError,
    RankDropError,
    SimplexExitError,
)
from foldray.foldlines import (
    graph_to_rose,
    lengths_from_params,
    rationalize,
    recover_rose,
    region_contains,
    retarget,
    rose_to_graph,
    rose_to_rose,
    rose_turns,
    simplex_chart,
    verify_recovery,
)
from foldray.graphs import (
    Graph,
    MarkedMetricGraph,
    Turn,
    rose_point,
    theta_graph,
)
from foldray.matrices import IntMatrix


def theta_point():
    return MarkedMetricGraph(
        theta_graph(),
        {1: Fraction(3, 10), 2: Fraction(7, 10), 3: Fraction(1, 2)},
    )


def oriented_copy(x, dec):
    return MarkedMetricGraph(dec.oriented_graph(), dict(x.lengths), x.marking)


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


def _random_point(rng: random.Random, vertices: int):
    while True:
        g = _random_trivalent(rng, vertices)
        if g is None:
            continue
        lengths = {e: Fraction(rng.randint(1, 1000), 1000) for e in g.edge_ids}
        return MarkedMetricGraph(g, lengths)


def _some_turn(rng: random.Random, g: Graph) -> Turn:
    turns = [
        Turn(a, b)
        for v in sorted(g.vertices)
        for i, a in enumerate(g.directions_at(v))
        for b in g.directions_at(v)[i + 1 :]
        if abs(a) != abs(b)
    ]
    return rng.choice(turns)


def test_rose_turn_order():
    assert rose_turns(2) == ((1, 2, 1), (1, 2, -1))
    assert rose_turns(3) == (
        (1, 2, 1),
        (1, 3, 1),
        (2, 3, 1),
        (1, 2, -1),
        (1, 3, -1),
        (2, 3, -1),
    )


def test_unfold_zero_amounts_is_identity():
    x0 = rose_point([Fraction(1, 2), Fraction(1, 3)])
    line = rose_to_graph(x0, (0, 0))
    assert line.endpoint.lengths == x0.lengths
    assert line.duration == 0
    assert line.segments == ()


def test_unfold_rose_to_theta():
    # one turn opened by 3/10 splits both petals at that depth
    x0 = rose_point([Fraction(1), Fraction(4, 5)])
    line = rose_to_graph(x0, (Fraction(3, 10), 0))
    assert sorted(line.endpoint.lengths.values()) == [
        Fraction(3, 10),
        Fraction(1, 2),
        Fraction(7, 10),
    ]
    assert len(line.endpoint.graph.vertices) == 2
    assert line.endpoint.volume == x0.volume - Fraction(3, 10)
    assert line.duration == Fraction(3, 10)


def test_unfold_interior_point():
    x0 = rose_point([Fraction(1), Fraction(4, 5)])
    line = rose_to_graph(x0, (Fraction(3, 10), 0))
    assert line.point_at(0).lengths == x0.lengths
    mid = line.point_at(Fraction(3, 20))
    assert sorted(mid.lengths.values()) == [
        Fraction(3, 20),
        Fraction(13, 20),
        Fraction(17, 20),
    ]
    assert line.point_at(line.duration).lengths == line.endpoint.lengths
    with pytest.raises(NotAllowableError):
        line.point_at(Fraction(2))


def test_unfold_full_petal_lands_on_face():
    # identifying a whole petal leaves a rose again: a face of the theta cell
    x0 = rose_point([Fraction(1), Fraction(4, 5)])
    line = rose_to_graph(x0, (Fraction(4, 5), 0))
    assert len(line.endpoint.graph.vertices) == 1
    assert sorted(line.endpoint.lengths.values()) == [Fraction(1, 5), Fraction(4, 5)]
    assert line.endpoint.volume == x0.volume - Fraction(4, 5)


def test_unfold_rejects_bad_amounts():
    x0 = rose_point([Fraction(1), Fraction(4, 5)])
    with pytest.raises(NotAllowableError):
        rose_to_graph(x0, (Fraction(-1, 10), 0))
    with pytest.raises(NotAllowableError):
        rose_to_graph(x0, (Fraction(9, 10), 0))
    with pytest.raises(GraphStructureError):
        rose_to_graph(x0, (Fraction(1, 10),))
    with pytest.raises(GraphStructureError):
        rose_to_graph(theta_point(), (Fraction(1, 10), 0))


def test_unfold_equal_petals_drops_rank():
    with pytest.raises(RankDropError):
        rose_to_graph(rose_point([1, 1]), (1, 0))


def test_recover_theta_point():
    x = theta_point()
    d = loop_decomposition(x.graph, Turn(2, 3))
    assert d.loops == ((1, -2), (1, -3))
    x0, s_bar = recover_rose(oriented_copy(x, d), d)
    assert x0.length_vector() == (Fraction(1), Fraction(4, 5))
    assert s_bar == (Fraction(3, 10), Fraction(0))


def test_recover_rose_input_gives_zero_amounts():
    x0 = rose_point([Fraction(1, 2), Fraction(1, 3)])
    d = LoopDecomposition(x0.graph, 0, {1: 1, 2: 1}, ((1,), (2,)), (1, 2))
    y0, s_bar = recover_rose(x0, d)
    assert y0.lengths == x0.lengths
    assert s_bar == (Fraction(0), Fraction(0))


def test_recover_rejects_foreign_decomposition():
    x = theta_point()
    d = loop_decomposition(x.graph, Turn(2, 3))
    other = rose_point([1, 1, 1])
    with pytest.raises(DecompositionError):
        recover_rose(other, d)


def test_round_trip_random_trivalent():
    rng = random.Random(20240815)
    done = 0
    while done < 30:
        x = _random_point(rng, rng.choice([2, 4, 6]))
        t = _some_turn(rng, x.graph)
        d = loop_decomposition(x.graph, t)
        line = verify_recovery(oriented_copy(x, d), d)
        assert line.endpoint.volume == x.volume
        done += 1


def test_chart_of_theta_point():
    x = theta_point()
    d = loop_decomposition(x.graph, Turn(2, 3))
    chart = simplex_chart(x, d)
    assert chart.rank == 2
    assert chart.segments == ((1, 2), (1, 3))
    assert chart.breakpoints == (((("prefix", 2),),), ((("prefix", 1),),))
    assert chart.zero_turns == ((1, 2, -1),)
    assert chart.edge_ids() == (1, 2, 3)


def test_lengths_from_params_theta():
    x = theta_point()
    d = loop_decomposition(x.graph, Turn(2, 3))
    chart = simplex_chart(x, d)
    params = ((Fraction(1), Fraction(4, 5)), (Fraction(3, 10), Fraction(0)))
    assert lengths_from_params(chart, *params) == dict(x.lengths)
    assert region_contains(chart, *params)


def test_lengths_from_params_boundary_exits():
    x = theta_point()
    d = loop_decomposition(x.graph, Turn(2, 3))
    chart = simplex_chart(x, d)
    ls = (Fraction(1), Fraction(4, 5))
    with pytest.raises(SimplexExitError):
        lengths_from_params(chart, ls, (Fraction(0), Fraction(0)))
    with pytest.raises(SimplexExitError):
        lengths_from_params(chart, ls, (Fraction(4, 5), Fraction(0)))
    with pytest.raises(SimplexExitError):
        lengths_from_params(chart, ls, (Fraction(3, 10), Fraction(1, 10)))
    assert not region_contains(chart, ls, (Fraction(0), Fraction(0)))


def test_lengths_from_params_homogeneous():
    x = theta_point()
    d = loop_decomposition(x.graph, Turn(2, 3))
    chart = simplex_chart(x, d)
    ls = (Fraction(1), Fraction(4, 5))
    s = (Fraction(3, 10), Fraction(0))
    base = lengths_from_params(chart, ls, s)
    lam = Fraction(7, 3)
    scaled = lengths_from_params(
        chart, tuple(lam * v for v in ls), tuple(lam * v for v in s)
    )
    assert scaled == {e: lam * v for e, v in base.items()}


def test_chart_matches_unfolding_on_random_points():
    # charts only exist when each loop's interior vertices all come from the
    # loop's own overlaps; layouts refused by simplex_chart are skipped
    rng = random.Random(67)
    done = 0
    tried = 0
    while done < 10 and tried < 80:
        tried += 1
        x = _random_point(rng, rng.choice([2, 4]))
        t = _some_turn(rng, x.graph)
        d = loop_decomposition(x.graph, t)
        x_or = oriented_copy(x, d)
        x0, s_bar = recover_rose(x_or, d)
        try:
            chart = simplex_chart(x_or, d)
        except DecompositionError:
            continue
        assert lengths_from_params(chart, x0.length_vector(), s_bar) == dict(
            x_or.lengths
        )
        done += 1
    assert done == 10


def test_fold_rose_input_is_empty():
    x0 = rose_point([Fraction(1, 2), Fraction(1, 3)])
    folds = graph_to_rose(x0)
    assert folds.steps == ()
    assert folds.terminal.lengths == x0.lengths


def test_fold_requires_transitive_orientation():
    with pytest.raises(GraphStructureError):
        graph_to_rose(theta_point())


def test_fold_theta_down_to_rose():
    # the fold runs in oriented storage, so the decomposition is rebuilt there
    x = theta_point()
    d = loop_decomposition(x.graph, Turn(2, 3))
    xo = oriented_copy(x, d)
    do = loop_decomposition(xo.graph, Turn(-2, -3))
    folds = graph_to_rose(xo, Turn(-2, -3), do)
    assert len(folds.terminal.graph.vertices) == 1
    assert folds.terminal.graph.rank == 2
    # first fold identifies the requested pair of edges
    s0 = folds.steps[0]
    assert {folds.initial_slots[s0.over], folds.initial_slots[s0.absorbed]} == {2, 3}
    assert folds.terminal.length_vector() == (Fraction(1, 5), Fraction(1, 5))


def test_fold_two_circle_gear():
    # one circle through the base, one bare loop hanging at its far vertex
    g = Graph.build([(1, 0, 1), (2, 1, 0), (3, 1, 1)])
    x = MarkedMetricGraph(
        g, {1: Fraction(1, 2), 2: Fraction(2, 5), 3: Fraction(3, 10)}
    )
    folds = graph_to_rose(x)
    assert folds.complexities == ((1, 4),)
    assert len(folds.steps) == 3
    assert folds.terminal.graph.rank == 2
    assert folds.terminal.length_vector() == (Fraction(3, 10), Fraction(3, 10))


def test_fold_tie_is_not_proper():
    x = MarkedMetricGraph(
        theta_graph(), {1: Fraction(3, 10), 2: Fraction(7, 10), 3: Fraction(7, 10)}
    )
    with pytest.raises(NotProperError):
        rose_to_rose(x, Turn(2, 3))


def test_line_through_theta_point():
    x = theta_point()
    line = rose_to_rose(x, Turn(2, 3))
    assert line.rose_to_graph.x0.length_vector() == (Fraction(1), Fraction(4, 5))
    assert line.top.lengths == x.lengths
    assert line.terminal.length_vector() == (Fraction(1, 5), Fraction(1, 5))
    assert line.change_of_metric == IntMatrix(((4, 1), (3, 1)))
    assert line.is_proper
    assert line.fold_count == 5


def test_line_change_of_metric_is_exact():
    rng = random.Random(99)
    done = 0
    while done < 8:
        x = _random_point(rng, rng.choice([2, 4]))
        t = _some_turn(rng, x.graph)
        try:
            line = rose_to_rose(x, t)
        except NotProperError:
            continue
        h = line.change_of_metric
        assert h.is_nonnegative
        assert h.determinant() in (1, -1)
        lz = line.terminal.length_vector()
        lx0 = line.rose_to_graph.x0.length_vector()
        assert tuple(
            sum(Fraction(c) * v for c, v in zip(row, lz)) for row in h.rows
        ) == lx0
        assert line.automorphism.transition_matrix() == h
        done += 1


def test_retarget_identity_and_scaling():
    line = rose_to_rose(theta_point(), Turn(2, 3))
    z = line.terminal
    same = retarget(line, z)
    assert same.top.lengths == line.top.lengths
    assert same.change_of_metric == line.change_of_metric
    scaled = retarget(line, tuple(3 * v for v in z.length_vector()))
    assert scaled.top.lengths == {e: 3 * v for e, v in line.top.lengths.items()}
    assert scaled.change_of_metric == line.change_of_metric


def test_retarget_perturbed_terminal():
    line = rose_to_rose(theta_point(), Turn(2, 3))
    moved = retarget(line, (Fraction(21, 100), Fraction(19, 100)))
    assert moved.terminal.length_vector() == (Fraction(21, 100), Fraction(19, 100))
    assert moved.change_of_metric == line.change_of_metric
    assert moved.top.lengths == {
        1: Fraction(59, 200),
        2: Fraction(147, 200),
        3: Fraction(21, 40),
    }
    assert moved.fold_count == line.fold_count


def test_retarget_rejects_bad_targets():
    line = rose_to_rose(theta_point(), Turn(2, 3))
    with pytest.raises(Exception):
        retarget(line, (Fraction(1, 5),))
    with pytest.raises(Exception):
        retarget(line, (Fraction(1, 5), Fraction(0)))


def test_rationalize_keeps_generic_points():
    x = theta_point()
    y, line = rationalize(x, Turn(2, 3), Fraction(1, 10000))
    assert y.lengths == x.lengths
    assert line.is_proper


def test_rationalize_dithers_ties_within_eps():
    x = MarkedMetricGraph(
        theta_graph(), {1: Fraction(3, 10), 2: Fraction(7, 10), 3: Fraction(7, 10)}
    )
    eps = Fraction(1, 10000)
    y1, line1 = rationalize(x, Turn(2, 3), eps)
    y2, _ = rationalize(x, Turn(2, 3), eps)
    assert y1.lengths == y2.lengths  # deterministic dither
    assert y1.lengths != x.lengths
    dist2 = sum((y1.lengths[e] - x.lengths[e]) ** 2 for e in x.graph.edge_ids)
    assert dist2 < eps * eps
    assert line1.is_proper


def test_lines_on_random_points():
    rng = random.Random(5)
    built = 0
    tried = 0
    while built < 6 and tried < 40:
        tried += 1
        x = _random_point(rng, rng.choice([2, 4]))
        t = _some_turn(rng, x.graph)
        try:
            line = rose_to_rose(x, t)
        except NotProperError:
            continue
        assert line.top.lengths == x.lengths
        assert line.change_of_metric.is_nonnegative
        assert line.change_of_metric.determinant() in (1, -1)
        built += 1
    assert built == 6
