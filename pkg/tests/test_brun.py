from __future__ import annotations

import random
from fractions import Fraction

import pytest

from foldray.brun import (
    brun_automorphism,
    brun_expand,
    brun_step_homogeneous,
    brun_step_ordered,
    brun_step_unordered,
    dither,
    ordered_expand,
    ordering_map,
    pf_sample,
    positivity_onset,
    relate_expansions,
)
from foldray.errors import (
    DegenerateVector,
    NotSortedError,
    OnsetNotFound,
)
from foldray.matrices import PosVector, apply, normalize, pf_distance_to


def _frac_vec(*items) -> PosVector:
    return PosVector([Fraction(x) for x in items])


def _random_rational_vector(rng: random.Random, dim: int, den: int = 1000) -> PosVector:
    return PosVector([Fraction(rng.randint(1, den), den) for _ in range(dim)])


# Hand-walked oracle values, frozen before implementation:
# (1/2, 3/10, 1/5): max at slot 1, second at slot 2, difference 1/5.
# (2/5, 2/5, 1/5): tied max; lowest index wins both picks.
# (1, 2, 3): max slot 3, second slot 2.
def test_unordered_step_frozen_examples():
    sym, out = brun_step_unordered(_frac_vec("1/2", "3/10", "1/5"))
    assert sym == (1, 2)
    assert out.entries == (Fraction(1, 5), Fraction(3, 10), Fraction(1, 5))

    sym, out = brun_step_unordered(_frac_vec("2/5", "2/5", "1/5"))
    assert sym == (1, 2)
    assert out.entries == (Fraction(0), Fraction(2, 5), Fraction(1, 5))
    assert out.degenerate

    sym, out = brun_step_unordered(_frac_vec(1, 2, 3))
    assert sym == (3, 2)
    assert out.entries == (Fraction(1), Fraction(2), Fraction(1))


def test_unordered_step_rejects_degenerate_input():
    with pytest.raises(DegenerateVector):
        brun_step_unordered(_frac_vec(0, 1))


def test_expand_frozen_two_step_example():
    exp = brun_expand(_frac_vec("62/100", "38/100"), 2)
    assert exp.symbols == ((1, 2), (2, 1))
    assert exp.products[2].rows == ((2, 1), (1, 1))
    assert exp.iterates[2].entries == (Fraction(24, 100), Fraction(14, 100))
    assert exp.status == "ok"


def test_expand_exactness_property():
    rng = random.Random(20)
    for _ in range(50):
        dim = rng.randint(2, 5)
        v = _random_rational_vector(rng, dim)
        exp = brun_expand(v, 15)
        for s in range(exp.steps + 1):
            assert apply(exp.products[s], exp.iterates[s]).entries == v.entries


def test_expand_stops_on_degeneracy():
    exp = brun_expand(_frac_vec(2, 1), 10)
    # (2,1) -> (1,1) -> (0,1): stops once the iterate degenerates.
    assert exp.status == "degenerate"
    assert exp.steps == 2
    assert exp.iterates[-1].degenerate


# Ordered-step oracles, frozen by hand:
# (1/2, 3/10, 1/5): d = 1/5, first qualifying input slot is 3 -> (3/10, 1/5, 1/5).
# (3/5, 1/5, 1/5): d = 2/5 >= slot-2 entry -> slot 2 -> (2/5, 1/5, 1/5).
# (1, 1): d = 0, nothing qualifies -> difference lands last -> (1, 0).
def test_ordered_step_frozen_examples():
    step = brun_step_ordered(_frac_vec("1/2", "3/10", "1/5"))
    assert step.index == 3
    assert step.output.entries == (Fraction(3, 10), Fraction(1, 5), Fraction(1, 5))

    step = brun_step_ordered(_frac_vec("3/5", "1/5", "1/5"))
    assert step.index == 2
    assert step.output.entries == (Fraction(2, 5), Fraction(1, 5), Fraction(1, 5))

    step = brun_step_ordered(_frac_vec(1, 1))
    assert step.index == 2
    assert step.output.entries == (Fraction(1), Fraction(0))
    assert step.output.degenerate


def test_ordered_step_rejects_unsorted():
    with pytest.raises(NotSortedError):
        brun_step_ordered(_frac_vec(1, 2))


def test_ordered_step_output_stays_sorted_and_matrix_exact():
    rng = random.Random(4)
    for _ in range(200):
        dim = rng.randint(2, 5)
        v, _ = ordering_map(_random_rational_vector(rng, dim))
        step = brun_step_ordered(v)
        e = step.output.entries
        assert all(a >= b for a, b in zip(e, e[1:]))
        assert apply(step.cylinder_matrix, v).entries == e
        assert apply(step.inverse_matrix, step.output).entries == v.entries


def test_homogeneous_step_frozen_example():
    # (1,1) lifts to (1,1,1); ordered step gives (1,1,0); projecting divides
    # by the leading 1.
    out = brun_step_homogeneous(_frac_vec(1, 1))
    assert out.entries == (Fraction(1), Fraction(0))


def test_homogeneous_commutes_with_projection():
    rng = random.Random(9)
    for _ in range(100):
        dim = rng.randint(3, 5)
        v, _ = ordering_map(_random_rational_vector(rng, dim))
        step = brun_step_ordered(v)
        if step.output.degenerate:
            continue
        projected = PosVector([e / v.entries[0] for e in v.entries[1:]])
        lifted_result = step.output
        expected = PosVector(
            [e / lifted_result.entries[0] for e in lifted_result.entries[1:]]
        )
        assert brun_step_homogeneous(projected).entries == expected.entries


def test_ordering_map_frozen_example():
    sorted_v, perm = ordering_map(_frac_vec("1/5", "1/2", "3/10"))
    assert sorted_v.entries == (Fraction(1, 2), Fraction(3, 10), Fraction(1, 5))
    assert perm == (2, 3, 1)


def test_ordering_map_stable_on_ties():
    _, perm = ordering_map(_frac_vec(1, 2, 2, 1))
    assert perm == (2, 3, 1, 4)


def test_relate_expansions_dim2_hand_case():
    # For (38/100, 62/100): unordered product M_21, ordered product [[1,1],[1,0]];
    # the swap on the left relates them.
    p1, p2 = relate_expansions(_frac_vec("38/100", "62/100"), 1)
    ordered = ordered_expand(_frac_vec("62/100", "38/100"), 1)
    plain = brun_expand(_frac_vec("38/100", "62/100"), 1)
    assert (p1 @ ordered.products[1] @ p2).rows == plain.products[1].rows


def test_relate_expansions_random():
    rng = random.Random(31)
    done = 0
    while done < 40:
        dim = rng.randint(2, 4)
        v = _random_rational_vector(rng, dim)
        m = rng.randint(1, 6)
        try:
            p1, p2 = relate_expansions(v, m)
        except DegenerateVector:
            continue
        plain = brun_expand(v, m)
        ordered = ordered_expand(ordering_map(v)[0], m)
        assert (p1 @ ordered.products[m] @ p2).rows == plain.products[m].rows
        done += 1


def test_positivity_onset_frozen_example():
    assert positivity_onset(_frac_vec("62/100", "38/100")) == 2


def test_positivity_onset_monotone():
    rng = random.Random(40)
    checked = 0
    while checked < 30:
        v = _random_rational_vector(rng, 3)
        try:
            onset = positivity_onset(v, cap=200)
        except OnsetNotFound:
            continue
        exp = brun_expand(v, min(onset + 5, 200))
        for s in range(onset, exp.steps + 1):
            assert exp.products[s].is_positive
        assert not exp.products[onset - 1].is_positive
        checked += 1


def test_positivity_onset_reports_degeneracy():
    with pytest.raises(OnsetNotFound) as info:
        positivity_onset(_frac_vec(2, 1), cap=50)
    assert info.value.reason == "degenerate"


def test_dither_deterministic_and_small():
    v = normalize(_frac_vec(2, 2, 1))
    d1 = dither(v)
    d2 = dither(v)
    assert d1.entries == d2.entries
    assert d1.l1_distance(v) < Fraction(1, 10**6)


def test_pf_sample_hits_target():
    target = normalize(_frac_vec("62/100", "38/100"))
    matrix, data = pf_sample(target, Fraction(1, 100))
    assert matrix.is_positive
    assert pf_distance_to(data, target) < Fraction(1, 100)


def test_pf_sample_survives_degenerate_target():
    target = normalize(_frac_vec(1, 1))
    matrix, data = pf_sample(target, Fraction(5, 100))
    assert pf_distance_to(data, target) < Fraction(5, 100)


def test_brun_automorphism_frozen_example():
    word = brun_automorphism(2, [(1, 2), (2, 1)])
    assert word.transition_matrix().rows == ((2, 1), (1, 1))


def test_brun_automorphism_images():
    word = brun_automorphism(2, [(1, 2)])
    assert word.images() == ((2, 1), (2,))
