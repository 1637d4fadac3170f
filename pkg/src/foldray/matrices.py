"""Integer matrix calculus for fold and unfold moves.

The two generators: fold_matrix(i, j, n) is the identity with a -1 in slot
(i, j); unfold_matrix(i, j, n) is its inverse, identity with +1 in slot
(i, j). Indices are 1-based throughout this module, matching the convention
used by the expansion symbols. All arithmetic on matrix entries is exact
(Python ints); vectors carry exact rationals. Floating point appears only in
pf_eigen, at a configurable bit precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import (
    ConvergenceFailure,
    DegenerateVector,
    DimensionMismatch,
    IndexRangeError,
    NotPositiveError,
)
from .scalars import fraction_to_mpf, mp_context, to_fraction


@dataclass(frozen=True)
class PosVector:
    """Vector of nonnegative exact rationals; dim >= 2.

    A vector with a zero coordinate is not rejected but reports
    ``degenerate`` True; the Brun maps require strict positivity.
    """

    entries: tuple[Fraction, ...]

    def __init__(self, entries: Iterable):
        items = tuple(to_fraction(e) for e in entries)
        if len(items) < 2:
            raise DimensionMismatch(f"vector needs dim >= 2, got {len(items)}")
        if any(e < 0 for e in items):
            raise NotPositiveError("vector entries must be nonnegative")
        object.__setattr__(self, "entries", items)

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def degenerate(self) -> bool:
        return any(e == 0 for e in self.entries)

    @property
    def is_positive(self) -> bool:
        return all(e > 0 for e in self.entries)

    def __getitem__(self, index_1b: int) -> Fraction:
        if not 1 <= index_1b <= self.dim:
            raise IndexRangeError(f"index {index_1b} outside 1..{self.dim}")
        return self.entries[index_1b - 1]

    def total(self) -> Fraction:
        return sum(self.entries, Fraction(0))

    def l1_distance(self, other: "PosVector") -> Fraction:
        if other.dim != self.dim:
            raise DimensionMismatch("l1 distance needs equal dims")
        return sum((abs(a - b) for a, b in zip(self.entries, other.entries)), Fraction(0))


def normalize(v: PosVector) -> PosVector:
    """Scale to coordinate sum 1 (exact)."""
    total = v.total()
    if total == 0:
        raise DegenerateVector("cannot normalize the zero vector")
    return PosVector(e / total for e in v.entries)


@dataclass(frozen=True)
class IntMatrix:
    """Dense square integer matrix with exact arithmetic."""

    rows: tuple[tuple[int, ...], ...]

    def __init__(self, rows: Iterable[Iterable[int]]):
        data = tuple(tuple(int(x) for x in row) for row in rows)
        n = len(data)
        if n == 0 or any(len(row) != n for row in data):
            raise DimensionMismatch("matrix must be square and nonempty")
        object.__setattr__(self, "rows", data)

    @property
    def dim(self) -> int:
        return len(self.rows)

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        if self.dim != other.dim:
            raise DimensionMismatch("matrix product needs equal dims")
        n = self.dim
        cols = tuple(zip(*other.rows))
        return IntMatrix(
            tuple(sum(a * b for a, b in zip(row, col)) for col in cols) for row in self.rows
        )

    def entry(self, i_1b: int, j_1b: int) -> int:
        if not (1 <= i_1b <= self.dim and 1 <= j_1b <= self.dim):
            raise IndexRangeError(f"entry ({i_1b},{j_1b}) outside 1..{self.dim}")
        return self.rows[i_1b - 1][j_1b - 1]

    def column(self, j_1b: int) -> tuple[int, ...]:
        if not 1 <= j_1b <= self.dim:
            raise IndexRangeError(f"column {j_1b} outside 1..{self.dim}")
        return tuple(row[j_1b - 1] for row in self.rows)

    def transpose(self) -> "IntMatrix":
        return IntMatrix(zip(*self.rows))

    @property
    def is_nonnegative(self) -> bool:
        return all(x >= 0 for row in self.rows for x in row)

    @property
    def is_positive(self) -> bool:
        return all(x > 0 for row in self.rows for x in row)

    def determinant(self) -> int:
        """Exact determinant by fraction-free (Bareiss) elimination."""
        n = self.dim
        m = [list(row) for row in self.rows]
        sign = 1
        prev = 1
        for k in range(n - 1):
            if m[k][k] == 0:
                pivot = next((r for r in range(k + 1, n) if m[r][k] != 0), None)
                if pivot is None:
                    return 0
                m[k], m[pivot] = m[pivot], m[k]
                sign = -sign
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
                m[i][k] = 0
            prev = m[k][k]
        return sign * m[n - 1][n - 1]


def identity(n: int) -> IntMatrix:
    return IntMatrix(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))


def _check_pair(i: int, j: int, n: int) -> None:
    if n < 2:
        raise DimensionMismatch(f"need dim >= 2, got {n}")
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexRangeError(f"indices ({i},{j}) outside 1..{n}")
    if i == j:
        raise IndexRangeError("indices must differ")


def fold_matrix(i: int, j: int, n: int) -> IntMatrix:
    """Identity with -1 in slot (i, j): row i loses coordinate j."""
    _check_pair(i, j, n)
    rows = [[1 if r == c else 0 for c in range(n)] for r in range(n)]
    rows[i - 1][j - 1] = -1
    return IntMatrix(rows)


def unfold_matrix(i: int, j: int, n: int) -> IntMatrix:
    """Identity with +1 in slot (i, j); inverse of fold_matrix(i, j, n)."""
    _check_pair(i, j, n)
    rows = [[1 if r == c else 0 for c in range(n)] for r in range(n)]
    rows[i - 1][j - 1] = 1
    return IntMatrix(rows)


def permutation_matrix(perm_1b: Sequence[int]) -> IntMatrix:
    """Matrix P with P v = (v[perm[0]], v[perm[1]], ...): row k picks perm[k]."""
    n = len(perm_1b)
    if sorted(perm_1b) != list(range(1, n + 1)):
        raise IndexRangeError(f"not a permutation of 1..{n}: {perm_1b}")
    return IntMatrix(
        tuple(1 if c == p - 1 else 0 for c in range(n)) for p in perm_1b
    )


def apply(m: IntMatrix, v: PosVector) -> PosVector:
    """Exact matrix-vector product; rejects negative results."""
    if m.dim != v.dim:
        raise DimensionMismatch(f"matrix dim {m.dim} vs vector dim {v.dim}")
    out = tuple(
        sum((Fraction(c) * e for c, e in zip(row, v.entries)), Fraction(0)) for row in m.rows
    )
    if any(x < 0 for x in out):
        raise NotPositiveError("matrix application produced a negative coordinate")
    return PosVector(out)


def cone_diameter(m: IntMatrix) -> Fraction:
    """l1 diameter of the normalized column set of a nonnegative matrix.

    This bounds how far apart normalized images of the positive cone can be,
    so it certifies projective contraction without eigenvector computation.
    """
    if not m.is_nonnegative:
        raise NotPositiveError("cone_diameter needs a nonnegative matrix")
    corners: list[tuple[Fraction, ...]] = []
    for j in range(1, m.dim + 1):
        col = m.column(j)
        total = sum(col)
        if total == 0:
            raise DegenerateVector(f"column {j} is zero")
        corners.append(tuple(Fraction(x, total) for x in col))
    best = Fraction(0)
    for a in range(len(corners)):
        for b in range(a + 1, len(corners)):
            dist = sum(
                (abs(x - y) for x, y in zip(corners[a], corners[b])), Fraction(0)
            )
            if dist > best:
                best = dist
    return best


@dataclass(frozen=True)
class PFData:
    """Perron-Frobenius eigenpair at a recorded bit precision.

    eigenvector entries are mpf values, l1-normalized; residual is the l1
    norm of M v - lambda v after normalization.
    """

    eigenvalue: object
    eigenvector: tuple
    residual: object
    precision_bits: int
    iterations: int

    def eigenvector_fractions(self) -> PosVector:
        """Exact rational snapshot of the (dyadic) eigenvector entries."""
        from .scalars import mpf_to_fraction

        return PosVector(mpf_to_fraction(x) for x in self.eigenvector)


PF_MAX_ITERATIONS = 100_000


def pf_eigen(m: IntMatrix, bits: int | None = None) -> PFData:
    """Dominant eigenpair of a positive matrix by power iteration.

    Rayleigh-quotient eigenvalue estimate; stops when the l1 residual falls
    below 2**-(precision/2); deterministic for fixed input and precision.
    """
    if not m.is_positive:
        raise NotPositiveError("pf_eigen needs a strictly positive matrix")
    ctx = mp_context(bits)
    n = m.dim
    tol = ctx.mpf(2) ** (-(ctx.prec // 2))
    v = [ctx.mpf(1) / n] * n
    rows = [[ctx.mpf(x) for x in row] for row in m.rows]
    lam = ctx.mpf(0)
    residual = ctx.mpf("inf")
    for it in range(1, PF_MAX_ITERATIONS + 1):
        w = [ctx.fsum(a * b for a, b in zip(row, v)) for row in rows]
        num = ctx.fsum(a * b for a, b in zip(w, v))
        den = ctx.fsum(a * a for a in v)
        lam = num / den
        total = ctx.fsum(w)
        v = [x / total for x in w]
        w2 = [ctx.fsum(a * b for a, b in zip(row, v)) for row in rows]
        residual = ctx.fsum(abs(a - lam * b) for a, b in zip(w2, v))
        if residual < tol:
            return PFData(
                eigenvalue=lam,
                eigenvector=tuple(v),
                residual=residual,
                precision_bits=ctx.prec,
                iterations=it,
            )
    raise ConvergenceFailure(
        f"power iteration did not reach residual {tol} in {PF_MAX_ITERATIONS} steps"
    )


def pf_distance_to(data: PFData, target: PosVector) -> Fraction:
    """Exact l1 distance between the PF eigenvector and a rational target."""
    vec = data.eigenvector_fractions()
    return normalize(vec).l1_distance(normalize(target))


def matrix_product(ms: Iterable[IntMatrix]) -> IntMatrix:
    out: IntMatrix | None = None
    for m in ms:
        out = m if out is None else out @ m
    if out is None:
        raise DimensionMismatch("empty matrix product needs an explicit dimension")
    return out


def fraction_vector_mpf(v: PosVector, bits: int | None = None):
    ctx = mp_context(bits)
    return [fraction_to_mpf(e, ctx) for e in v.entries]
