"""Words of free-group automorphisms.

A word is a finite sequence of letters applied first-to-last. Letter kinds:

* ``fold (i, j)``: generator i maps to (generator j)(generator i), all other
  generators fixed; its transition matrix is unfold_matrix(i, j, rank).
* ``perm p``: generator k maps to generator p[k].
* ``subst images``: an arbitrary automorphism given by its generator images
  (tuples of nonzero signed indices); used for whole line blocks whose
  change of marking is not a single elementary move.

The product ``w1 * w2`` is the composition "apply w2 first, then w1", so
transition matrices satisfy M(w1 * w2) = M(w2) * M(w1). Inverses are kept
formal (a flag per letter); adjacent inverse pairs cancel on concatenation,
and only fold/perm letters can be materialized when a formal inverse
survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .errors import IndexRangeError, UsageError
from .matrices import IntMatrix, identity, permutation_matrix, unfold_matrix

Word = tuple[int, ...]


def reduce_word(letters: Iterable[int]) -> Word:
    out: list[int] = []
    for x in letters:
        if x == 0:
            raise UsageError("0 is not a generator index")
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def invert_word(word: Word) -> Word:
    return tuple(-x for x in reversed(word))


@dataclass(frozen=True)
class Letter:
    kind: str  # "fold" | "perm" | "subst"
    data: tuple
    inverted: bool = False

    def inverse(self) -> "Letter":
        return Letter(self.kind, self.data, not self.inverted)

    def cancels(self, other: "Letter") -> bool:
        return (
            self.kind == other.kind
            and self.data == other.data
            and self.inverted != other.inverted
        )


def fold_letter(i: int, j: int) -> Letter:
    if i == j or i < 1 or j < 1:
        raise IndexRangeError(f"fold letter needs distinct positive indices, got ({i},{j})")
    return Letter("fold", (i, j))


def perm_letter(perm_1b: Iterable[int]) -> Letter:
    perm = tuple(int(p) for p in perm_1b)
    if sorted(perm) != list(range(1, len(perm) + 1)):
        raise IndexRangeError(f"not a permutation: {perm}")
    return Letter("perm", perm)


def subst_letter(images: Iterable[Iterable[int]]) -> Letter:
    return Letter("subst", tuple(reduce_word(w) for w in images))


def _letter_images(letter: Letter, rank: int) -> tuple[Word, ...]:
    if letter.kind == "fold":
        i, j = letter.data
        if i > rank or j > rank:
            raise IndexRangeError(f"fold ({i},{j}) outside rank {rank}")
        images = [(k,) for k in range(1, rank + 1)]
        images[i - 1] = (j, i) if not letter.inverted else (-j, i)
        return tuple(images)
    if letter.kind == "perm":
        perm = letter.data
        if len(perm) != rank:
            raise IndexRangeError(f"permutation of length {len(perm)} vs rank {rank}")
        if letter.inverted:
            inv = [0] * rank
            for k, p in enumerate(perm, start=1):
                inv[p - 1] = k
            return tuple((x,) for x in inv)
        return tuple((p,) for p in perm)
    if letter.inverted:
        raise UsageError("cannot materialize the inverse of a subst letter")
    images = letter.data
    if len(images) != rank:
        raise IndexRangeError(f"subst with {len(images)} images vs rank {rank}")
    return images


def _substitute(word: Word, images: tuple[Word, ...]) -> Word:
    out: list[int] = []
    for x in word:
        piece = images[x - 1] if x > 0 else invert_word(images[-x - 1])
        for y in piece:
            if out and out[-1] == -y:
                out.pop()
            else:
                out.append(y)
    return tuple(out)


@dataclass(frozen=True)
class AutomorphismWord:
    rank: int
    letters: tuple[Letter, ...] = field(default_factory=tuple)

    @staticmethod
    def identity_word(rank: int) -> "AutomorphismWord":
        return AutomorphismWord(rank, ())

    def then(self, other: "AutomorphismWord") -> "AutomorphismWord":
        """Word applying self first, then other, with formal cancellation."""
        if other.rank != self.rank:
            raise IndexRangeError("rank mismatch in word composition")
        out = list(self.letters)
        for letter in other.letters:
            if out and out[-1].cancels(letter):
                out.pop()
            else:
                out.append(letter)
        return AutomorphismWord(self.rank, tuple(out))

    def __mul__(self, other: "AutomorphismWord") -> "AutomorphismWord":
        """Composition: (self * other) applies other first."""
        return other.then(self)

    def inverse(self) -> "AutomorphismWord":
        return AutomorphismWord(
            self.rank, tuple(l.inverse() for l in reversed(self.letters))
        )

    def images(self) -> tuple[Word, ...]:
        cur = tuple((k,) for k in range(1, self.rank + 1))
        for letter in self.letters:
            imgs = _letter_images(letter, self.rank)
            cur = tuple(_substitute(w, imgs) for w in cur)
        return cur

    def is_identity(self) -> bool:
        return self.images() == tuple((k,) for k in range(1, self.rank + 1))

    def transition_matrix(self) -> IntMatrix:
        """Unsigned crossing counts: entry (i, j) counts +-j in image of i."""
        images = self.images()
        rows = []
        for word in images:
            row = [0] * self.rank
            for x in word:
                row[abs(x) - 1] += 1
            rows.append(tuple(row))
        return IntMatrix(rows)

    def letter_matrix_product(self) -> IntMatrix:
        """Product of per-letter transition matrices in application order.

        Equals transition_matrix() whenever no cancellation occurs between
        letters (all-positive words).
        """
        out = identity(self.rank)
        for letter in self.letters:
            if letter.kind == "fold":
                i, j = letter.data
                m = unfold_matrix(i, j, self.rank)
                if letter.inverted:
                    raise UsageError("letter_matrix_product needs uninverted letters")
            elif letter.kind == "perm":
                m = permutation_matrix(letter.data)
            else:
                m = AutomorphismWord(self.rank, (letter,)).transition_matrix()
            out = out @ m
        return out


def fold_word(rank: int, symbols: Iterable[tuple[int, int]]) -> AutomorphismWord:
    return AutomorphismWord(rank, tuple(fold_letter(i, j) for i, j in symbols))
