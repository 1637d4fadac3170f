from __future__ import annotations

import random
from fractions import Fraction

import mpmath
import pytest

from foldray.errors import (
    DegenerateVector,
    IndexRangeError,
    NotPositiveError,
)
from foldray.matrices import (
    IntMatrix,
    PosVector,
    apply,
    cone_diameter,
    fold_matrix,
    identity,
    normalize,
    permutation_matrix,
    pf_eigen,
    unfold_matrix,
)


def _pf_oracle_2x2(a, b, c, d):
    """Dominant eigenpair of [[a,b],[c,d]] from the characteristic polynomial.

    Independent of the power iteration: lam = ((a+d) + sqrt((a-d)^2+4bc))/2
    and v solves (a-lam)x + b y = 0, l1-normalized.
    """
    with mpmath.workprec(300):
        lam = (mpmath.mpf(a + d) + mpmath.sqrt(mpmath.mpf((a - d) ** 2 + 4 * b * c))) / 2
        x = mpmath.mpf(1)
        y = (lam - a) / b
        total = x + y
        return lam, (x / total, y / total)


def test_fold_matrix_frozen_example():
    assert fold_matrix(1, 2, 3).rows == ((1, -1, 0), (0, 1, 0), (0, 0, 1))


def test_unfold_matrix_frozen_example():
    assert unfold_matrix(1, 2, 3).rows == ((1, 1, 0), (0, 1, 0), (0, 0, 1))


def test_unfold_product_frozen_example():
    prod = unfold_matrix(1, 2, 2) @ unfold_matrix(2, 1, 2)
    assert prod.rows == ((2, 1), (1, 1))


def test_fold_unfold_inverse_and_determinant_exhaustive():
    for n in range(2, 7):
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i == j:
                    continue
                t = fold_matrix(i, j, n)
                m = unfold_matrix(i, j, n)
                assert (t @ m).rows == identity(n).rows
                assert (m @ t).rows == identity(n).rows
                assert t.determinant() == 1
                assert m.determinant() == 1


def test_index_validation():
    with pytest.raises(IndexRangeError):
        fold_matrix(1, 1, 3)
    with pytest.raises(IndexRangeError):
        unfold_matrix(0, 2, 3)
    with pytest.raises(IndexRangeError):
        fold_matrix(1, 4, 3)


def test_normalize_frozen_example():
    assert normalize(PosVector([3, 2])).entries == (Fraction(3, 5), Fraction(2, 5))


def test_normalize_rejects_zero():
    with pytest.raises(DegenerateVector):
        normalize(PosVector([0, 0]))


def test_apply_exact():
    v = PosVector([Fraction(24, 100), Fraction(14, 100)])
    out = apply(IntMatrix([[2, 1], [1, 1]]), v)
    assert out.entries == (Fraction(62, 100), Fraction(38, 100))


def test_apply_rejects_negative_result():
    with pytest.raises(NotPositiveError):
        apply(fold_matrix(1, 2, 2), PosVector([1, 5]))


def test_determinant_matches_permutation_signs():
    assert permutation_matrix([2, 1]).determinant() == -1
    assert permutation_matrix([2, 3, 1]).determinant() == 1
    assert IntMatrix([[2, 1], [1, 1]]).determinant() == 1
    assert IntMatrix([[1, 2], [2, 4]]).determinant() == 0


def test_pf_eigen_frozen_golden_pair():
    data = pf_eigen(IntMatrix([[2, 1], [1, 1]]))
    lam, vec = _pf_oracle_2x2(2, 1, 1, 1)
    assert abs(data.eigenvalue - lam) < mpmath.mpf("1e-30")
    assert abs(data.eigenvector[0] - vec[0]) < mpmath.mpf("1e-30")
    assert abs(data.eigenvector[1] - vec[1]) < mpmath.mpf("1e-30")
    assert float(data.eigenvalue) == pytest.approx(2.618034, abs=1e-6)
    assert float(data.eigenvector[0]) == pytest.approx(0.618034, abs=1e-6)
    assert float(data.eigenvector[1]) == pytest.approx(0.381966, abs=1e-6)


def test_pf_eigen_residual_and_normalization():
    rng = random.Random(7)
    for _ in range(10):
        n = rng.randint(2, 4)
        m = IntMatrix([[rng.randint(1, 10**6) for _ in range(n)] for _ in range(n)])
        data = pf_eigen(m)
        assert data.residual < mpmath.mpf("1e-20")
        assert abs(sum(data.eigenvector) - 1) < mpmath.mpf("1e-30")
        assert all(x > 0 for x in data.eigenvector)


def test_pf_eigen_2x2_against_characteristic_polynomial():
    rng = random.Random(11)
    for _ in range(20):
        a, b, c, d = (rng.randint(1, 50) for _ in range(4))
        data = pf_eigen(IntMatrix([[a, b], [c, d]]))
        lam, vec = _pf_oracle_2x2(a, b, c, d)
        assert abs(data.eigenvalue - lam) < mpmath.mpf("1e-30")
        assert abs(data.eigenvector[1] - vec[1]) < mpmath.mpf("1e-30")


def test_pf_eigen_rejects_nonpositive():
    with pytest.raises(NotPositiveError):
        pf_eigen(unfold_matrix(1, 2, 2))


def test_cone_diameter_identity_frozen():
    assert cone_diameter(identity(2)) == 2


def test_cone_diameter_brute_force_agreement():
    rng = random.Random(3)
    for _ in range(25):
        m = IntMatrix([[rng.randint(1, 9) for _ in range(3)] for _ in range(3)])
        cols = []
        for j in range(3):
            col = [m.rows[i][j] for i in range(3)]
            s = sum(col)
            cols.append([Fraction(x, s) for x in col])
        expected = max(
            sum(abs(a - b) for a, b in zip(cols[p], cols[q]))
            for p in range(3)
            for q in range(3)
        )
        assert cone_diameter(m) == expected


def test_cone_diameter_shrinks_under_products():
    m = IntMatrix([[2, 1], [1, 1]])
    prev = cone_diameter(m)
    power = m
    for _ in range(6):
        power = power @ m
        cur = cone_diameter(power)
        assert cur <= prev
        prev = cur
