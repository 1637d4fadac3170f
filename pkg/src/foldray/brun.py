"""Brun continued-fraction expansions, in three variants.

Unordered: subtract the second-largest coordinate from the largest, ties
broken by lowest index. Ordered: the same map on weakly decreasing vectors,
recording which sorted slot receives the difference. Homogeneous: the ordered
map conjugated by the projective lift (prepend 1, step, divide by the new
first coordinate).

Every expansion keeps the exact matrix identity v_0 = A_s v_s, where A_s is
the product of unfold matrices of the recorded symbols.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .automorphisms import AutomorphismWord, fold_word
from .errors import (
    DegenerateVector,
    DimensionMismatch,
    IdentityViolation,
    NotSortedError,
    OnsetNotFound,
    SamplingFailure,
    UsageError,
)
from .matrices import (
    IntMatrix,
    PFData,
    PosVector,
    apply,
    cone_diameter,
    fold_matrix,
    identity,
    normalize,
    permutation_matrix,
    pf_distance_to,
    pf_eigen,
    unfold_matrix,
)
from .scalars import to_fraction

BrunSymbol = tuple[int, int]


def brun_step_unordered(v: PosVector) -> tuple[BrunSymbol, PosVector]:
    """One subtractive step; returns ((max index, second index), new vector).

    Both indices take the first position achieving their value. The output
    may have a zero coordinate (degenerate); the input must be positive.
    """
    if not v.is_positive:
        raise DegenerateVector("unordered step needs strictly positive entries")
    entries = v.entries
    m = max(range(len(entries)), key=lambda k: (entries[k], -k))
    rest = [k for k in range(len(entries)) if k != m]
    s = max(rest, key=lambda k: (entries[k], -k))
    out = list(entries)
    out[m] = out[m] - out[s]
    return (m + 1, s + 1), PosVector(out)


@dataclass(frozen=True)
class BrunExpansion:
    start: PosVector
    symbols: tuple[BrunSymbol, ...]
    iterates: tuple[PosVector, ...]
    products: tuple[IntMatrix, ...]
    status: str  # "ok" | "degenerate"

    @property
    def steps(self) -> int:
        return len(self.symbols)

    def automorphism(self) -> AutomorphismWord:
        return brun_automorphism(self.start.dim, self.symbols)


def brun_expand(v: PosVector, steps: int) -> BrunExpansion:
    """Run up to ``steps`` unordered steps, stopping early on degeneracy.

    The exact invariant A_s v_s = v_0 is asserted after every step.
    """
    if steps < 0:
        raise UsageError("steps must be nonnegative")
    symbols: list[BrunSymbol] = []
    iterates = [v]
    products = [identity(v.dim)]
    status = "ok"
    cur = v
    for _ in range(steps):
        if cur.degenerate:
            status = "degenerate"
            break
        (i, j), nxt = brun_step_unordered(cur)
        symbols.append((i, j))
        iterates.append(nxt)
        products.append(products[-1] @ unfold_matrix(i, j, v.dim))
        cur = nxt
        if apply(products[-1], cur).entries != v.entries:
            raise IdentityViolation("exactness lost: A_s v_s != v_0")
    if cur.degenerate and status == "ok":
        status = "degenerate"
    return BrunExpansion(v, tuple(symbols), tuple(iterates), tuple(products), status)


@dataclass(frozen=True)
class OrderedStep:
    index: int  # cylinder label, capped at dim when no slot qualifies
    insert_pos: int  # actual 1-based slot of the difference in the output
    output: PosVector
    cylinder_matrix: IntMatrix  # sorted-output = cylinder_matrix @ input
    inverse_matrix: IntMatrix


def _require_sorted(v: PosVector) -> None:
    if any(a < b for a, b in zip(v.entries, v.entries[1:])):
        raise NotSortedError("ordered step needs weakly decreasing entries")


def brun_step_ordered(v: PosVector) -> OrderedStep:
    """Subtract x2 from x1 and insert the difference in sorted position."""
    _require_sorted(v)
    if any(e < 0 for e in v.entries):
        raise DegenerateVector("ordered step needs nonnegative entries")
    if v.entries[0] <= 0:
        raise DegenerateVector("ordered step needs a positive leading entry")
    n = v.dim
    d = v.entries[0] - v.entries[1]
    pos = n  # insert at the end when d is below every remaining entry
    for k in range(1, n):  # input slots 2..n, zero-based 1..n-1
        if d >= v.entries[k]:
            pos = k  # difference goes right before input slot k+1
            break
    out = list(v.entries[1:])
    out.insert(pos - 1, d)
    index = min(pos + 1, n)
    perm = list(range(2, pos + 1)) + [1] + list(range(pos + 1, n + 1))
    p = permutation_matrix(perm)
    cyl = p @ fold_matrix(1, 2, n)
    inv = unfold_matrix(1, 2, n) @ p.transpose()
    return OrderedStep(index, pos, PosVector(out), cyl, inv)


@dataclass(frozen=True)
class OrderedExpansion:
    start: PosVector
    indices: tuple[int, ...]
    insert_positions: tuple[int, ...]
    iterates: tuple[PosVector, ...]
    products: tuple[IntMatrix, ...]  # cumulative products of inverse matrices
    status: str


def ordered_expand(v: PosVector, steps: int) -> OrderedExpansion:
    _require_sorted(v)
    indices: list[int] = []
    positions: list[int] = []
    iterates = [v]
    products = [identity(v.dim)]
    status = "ok"
    cur = v
    for _ in range(steps):
        if cur.degenerate:
            status = "degenerate"
            break
        step = brun_step_ordered(cur)
        indices.append(step.index)
        positions.append(step.insert_pos)
        iterates.append(step.output)
        products.append(products[-1] @ step.inverse_matrix)
        cur = step.output
        if apply(products[-1], cur).entries != v.entries:
            raise IdentityViolation("exactness lost in ordered expansion")
    if cur.degenerate and status == "ok":
        status = "degenerate"
    return OrderedExpansion(
        v, tuple(indices), tuple(positions), tuple(iterates), tuple(products), status
    )


def brun_step_homogeneous(v: PosVector) -> PosVector:
    """Ordered step conjugated by the lift (1, x_1, ..., x_n)."""
    _require_sorted(v)
    if v.entries[0] > 1:
        raise NotSortedError("homogeneous step needs entries in [0, 1]")
    lifted = PosVector((Fraction(1),) + v.entries)
    if lifted.degenerate:
        # Zeros are allowed in the tail of the domain; only the ordered-step
        # mechanics are needed, not strict positivity.
        out = _ordered_insert_only(lifted)
    else:
        out = brun_step_ordered(lifted).output
    head = out.entries[0]
    if head == 0:
        raise DegenerateVector("homogeneous step hit a zero leading entry")
    return PosVector(e / head for e in out.entries[1:])


def _ordered_insert_only(v: PosVector) -> PosVector:
    n = v.dim
    d = v.entries[0] - v.entries[1]
    pos = n
    for k in range(1, n):
        if d >= v.entries[k]:
            pos = k
            break
    out = list(v.entries[1:])
    out.insert(pos - 1, d)
    return PosVector(out)


def ordering_map(v: PosVector) -> tuple[PosVector, tuple[int, ...]]:
    """Stable descending sort; returns (sorted vector, original 1-based slots)."""
    order = sorted(range(v.dim), key=lambda k: (-v.entries[k], k))
    return PosVector(v.entries[k] for k in order), tuple(k + 1 for k in order)


def relate_expansions(v: PosVector, m: int) -> tuple[IntMatrix, IntMatrix]:
    """Permutations (P1, P2) with A_m = P1 @ A'_m @ P2, verified exactly.

    A_m is the unordered product for v; A'_m the ordered product for the
    sorted start. Found by exhaustive search, so dim must stay <= 6.
    """
    if v.dim > 6:
        raise UsageError("relate_expansions searches S_n x S_n; dim must be <= 6")
    plain = brun_expand(v, m)
    if plain.steps < m:
        raise DegenerateVector(f"expansion degenerated after {plain.steps} < {m} steps")
    sorted_start, _ = ordering_map(v)
    ordered = ordered_expand(sorted_start, m)
    if len(ordered.indices) < m:
        raise DegenerateVector("ordered expansion degenerated early")
    a = plain.products[m]
    ap = ordered.products[m]
    perms = list(itertools.permutations(range(1, v.dim + 1)))
    for p1 in perms:
        left = permutation_matrix(p1) @ ap
        for p2 in perms:
            if (left @ permutation_matrix(p2)).rows == a.rows:
                return permutation_matrix(p1), permutation_matrix(p2)
    raise IdentityViolation("no permutation pair relates the two expansions")


def positivity_onset(v: PosVector, cap: int = 200) -> int:
    """Least N with A_N strictly positive, cross-checked on the ordered side.

    The ordered/unordered equivalence of positivity is asserted only while
    the run is tie-free (all coordinates distinct at every step): with ties,
    the two tie-breaking conventions may track slots differently and the
    products legitimately diverge by a permutation choice.
    """
    cur = v
    sorted_cur, _ = ordering_map(v)
    product = identity(v.dim)
    ordered_product = identity(v.dim)
    tie_free = True
    for step in range(1, cap + 1):
        if cur.degenerate:
            raise OnsetNotFound(
                f"iterate degenerated at step {step - 1} before positivity",
                steps_run=step - 1,
                reason="degenerate",
            )
        tie_free = tie_free and len(set(cur.entries)) == cur.dim
        (i, j), cur = brun_step_unordered(cur)
        product = product @ unfold_matrix(i, j, v.dim)
        ostep = brun_step_ordered(sorted_cur)
        sorted_cur = ostep.output
        ordered_product = ordered_product @ ostep.inverse_matrix
        if tie_free and product.is_positive != ordered_product.is_positive:
            raise IdentityViolation(
                "ordered and unordered positivity disagree at step " + str(step)
            )
        if product.is_positive:
            return step
    raise OnsetNotFound(
        f"no positive product within cap {cap}", steps_run=cap, reason="cap"
    )


def _first_primes(count: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes):
            primes.append(candidate)
        candidate += 1
    return primes


def dither(v: PosVector, strength: int = 1) -> PosVector:
    """Deterministic perturbation: coordinate k gains strength*k*prime_k/1e9."""
    primes = _first_primes(v.dim)
    bumped = [
        e + Fraction(strength * (k + 1) * primes[k], 10**9)
        for k, e in enumerate(v.entries)
    ]
    return normalize(PosVector(bumped))


def pf_sample(
    target: PosVector,
    eps,
    cap: int = 5000,
    bits: int | None = None,
) -> tuple[IntMatrix, PFData]:
    """Positive product whose PF eigenvector is l1-within eps of target.

    Expands the target until the product is positive with cone diameter under
    eps/2, then re-verifies the postcondition through pf_eigen rather than
    trusting the search loop. Degenerate targets are dithered and restarted.
    """
    eps = to_fraction(eps)
    if eps <= 0:
        raise UsageError("eps must be positive")
    goal = normalize(target)
    attempt = 0
    steps_used = 0
    best: Fraction | None = None
    while steps_used < cap:
        work = goal if attempt == 0 else dither(goal, attempt)
        if work.degenerate:
            attempt += 1
            continue
        product = identity(goal.dim)
        while steps_used < cap and not work.degenerate:
            (i, j), work = brun_step_unordered(work)
            steps_used += 1
            product = product @ unfold_matrix(i, j, goal.dim)
            if product.is_positive:
                diam = cone_diameter(product)
                best = diam if best is None or diam < best else best
                if diam < eps / 2:
                    data = pf_eigen(product, bits)
                    if pf_distance_to(data, goal) < eps:
                        return product, data
        attempt += 1
    raise SamplingFailure(
        f"no certified sample within {cap} steps (best cone diameter {best})"
    )


def brun_automorphism(rank: int, symbols) -> AutomorphismWord:
    """Word of fold letters whose transition matrix is the symbol product."""
    word = fold_word(rank, symbols)
    expected = identity(rank)
    for i, j in symbols:
        expected = expected @ unfold_matrix(i, j, rank)
    if word.transition_matrix().rows != expected.rows:
        raise IdentityViolation("automorphism transition matrix mismatch")
    return word
