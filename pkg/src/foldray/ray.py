"""Geodesic fold rays through rose simplices.

A ray is assembled from a schedule that alternates single proper full folds
of roses (grouped into positive blocks) with longer rose-to-rose fold lines.
Milestone length vectors are produced by unwinding the integer matrix
sequence from the horizon, which makes every intermediate vector positive
and every fold allowable; the whole family is exact over the rationals.
Certification checks the positive basis loop against every fold, and the
density search compares translated segments with a target inside one
simplex.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

from .automorphisms import AutomorphismWord, fold_letter
from .brun import brun_automorphism
from .errors import (
    CertificateError,
    FoldrayError,
    IdentityViolation,
    NotAllowableError,
    RayAssemblyError,
    SearchBudgetExhausted,
    UsageError,
)
from .foldlines import RoseToRoseLine, rationalize, retarget
from .graphs import Graph, MarkedMetricGraph, Turn, act, rose_point, theta_graph
from .matrices import (
    IntMatrix,
    PFData,
    PosVector,
    apply,
    cone_diameter,
    identity,
    normalize,
    pf_eigen,
    unfold_matrix,
)
from .scalars import fraction_to_mpf, mp_context, precision_bits, to_fraction

SlotPair = tuple[int, int]


# -- registries ---------------------------------------------------------------


@dataclass(frozen=True)
class PFEntry:
    """A positive product of unfolding matrices with its eigen data, the
    word of single folds realizing it, and the least power that contracts
    the positive cone to l1 diameter below one."""

    index: int
    symbols: tuple[SlotPair, ...]
    matrix: IntMatrix
    eigen: PFData
    word: AutomorphismWord
    contraction_power: int


def _symbol_product(symbols: Sequence[SlotPair], rank: int) -> IntMatrix:
    m = identity(rank)
    for i, j in symbols:
        m = m @ unfold_matrix(i, j, rank)
    return m


def _contraction_power(m: IntMatrix, cap: int = 64) -> int:
    power = m
    for n in range(1, cap + 1):
        if cone_diameter(power) < 1:
            return n
        power = power @ m
    raise SearchBudgetExhausted(f"no power up to {cap} contracts the cone")


def pf_registry(
    rank: int, count: int, bits: int | None = None, max_word: int = 8
) -> tuple[PFEntry, ...]:
    """Enumerate words over the single-fold symbols in length-lexicographic
    order and keep the first ``count`` whose matrix product is positive.
    A word whose product commutes with an already kept product shares its
    eigenvector and is skipped."""
    if rank < 2:
        raise UsageError("registries need rank >= 2")
    if count < 1:
        raise UsageError("registry needs at least one entry")
    alphabet = [(i, j) for i in range(1, rank + 1) for j in range(1, rank + 1) if i != j]
    entries: list[PFEntry] = []
    for length in range(1, max_word + 1):
        for word in itertools.product(alphabet, repeat=length):
            m = _symbol_product(word, rank)
            if not m.is_positive:
                continue
            if any(m @ e.matrix == e.matrix @ m for e in entries):
                continue
            entries.append(
                PFEntry(
                    index=len(entries) + 1,
                    symbols=tuple(word),
                    matrix=m,
                    eigen=pf_eigen(m, bits),
                    word=brun_automorphism(rank, word),
                    contraction_power=_contraction_power(m),
                )
            )
            if len(entries) == count:
                return tuple(entries)
    raise SearchBudgetExhausted(
        f"only {len(entries)} positive products among words of length <= {max_word}"
    )


def standard_trivalent(rank: int) -> Graph:
    """A fixed trivalent graph with no separating edge for each small rank:
    rank 2 is two vertices with three parallel edges, rank 3 the complete
    graph on four vertices, rank 4 the complete bipartite graph K(3,3)."""
    if rank == 2:
        return theta_graph()
    if rank == 3:
        return Graph.build(
            [(1, 0, 1), (2, 0, 2), (3, 0, 3), (4, 1, 2), (5, 2, 3), (6, 1, 3)]
        )
    if rank == 4:
        return Graph.build(
            [(k + 3 * a + 1, a, 3 + k) for a in range(3) for k in range(3)]
        )
    raise UsageError(f"no catalogued trivalent graph for rank {rank}")


@dataclass(frozen=True)
class LineEntry:
    """A registered building block for odd schedule slots: either a rational
    proper rose-to-rose line or a single fold of a pair of petals. ``matrix``
    carries the lengths of the block's start from the lengths of its end."""

    index: int
    kind: str  # "line" | "fold"
    matrix: IntMatrix
    line: RoseToRoseLine | None = None
    pair: SlotPair | None = None


def _simplex_grid(num_edges: int, pitch: Fraction) -> Iterator[tuple[Fraction, ...]]:
    # interior rational points with coordinates k * pitch summing to 1
    q = int(1 / pitch)
    if q < num_edges or Fraction(1, q) != pitch:
        raise UsageError("pitch must be 1/q with q at least the edge count")
    for parts in itertools.combinations(range(1, q), num_edges - 1):
        cuts = (0,) + parts + (q,)
        yield tuple(
            Fraction(cuts[k + 1] - cuts[k], q) for k in range(num_edges)
        )


def _graph_turns(g: Graph) -> tuple[Turn, ...]:
    dirs = sorted(g.directions(), key=lambda d: (abs(d), -d))
    out = []
    for a in dirs:
        for b in dirs:
            if abs(a) != abs(b) and g.origin(a) == g.origin(b):
                out.append(Turn(a, b))
    return tuple(out)


def line_registry(
    rank: int, count: int, pitch: Fraction = Fraction(1, 8)
) -> tuple[LineEntry, ...]:
    """Build rational proper rose-to-rose lines through the standard
    trivalent graph: walk a rational grid on its simplex and seed each
    point's line at the first turn that yields one."""
    if count < 1:
        raise UsageError("registry needs at least one entry")
    g = standard_trivalent(rank)
    turns = _graph_turns(g)
    entries: list[LineEntry] = []
    for lengths in _simplex_grid(len(g.edge_ids), to_fraction(pitch)):
        x = MarkedMetricGraph(g, dict(zip(g.edge_ids, lengths)))
        for t in turns:
            try:
                _, line = rationalize(x, t, pitch / 64)
            except FoldrayError:
                continue
            entries.append(
                LineEntry(
                    index=len(entries) + 1,
                    kind="line",
                    matrix=line.change_of_metric,
                    line=line,
                )
            )
            break
        if len(entries) == count:
            return tuple(entries)
    raise SearchBudgetExhausted(
        f"grid of pitch {pitch} yielded only {len(entries)} lines"
    )


def fold_entries(rank: int) -> tuple[LineEntry, ...]:
    """The single-fold blocks, one per ordered pair of distinct petals."""
    pairs = [(i, j) for i in range(1, rank + 1) for j in range(1, rank + 1) if i != j]
    return tuple(
        LineEntry(
            index=k + 1,
            kind="fold",
            matrix=unfold_matrix(i, j, rank),
            pair=(i, j),
        )
        for k, (i, j) in enumerate(pairs)
    )


# -- the schedule --------------------------------------------------------------


@dataclass(frozen=True)
class RaySchedule:
    """Alternating schedule over the two registries. Odd slots name a line
    entry, even slots a power of a registered positive block; the diagonal
    enumeration revisits every pair in every later round with strictly
    growing powers, so all three recurrence conditions hold on prefixes."""

    rank: int
    pf_entries: tuple[PFEntry, ...]
    line_entries: tuple[LineEntry, ...]
    thresholds: dict[SlotPair, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.pf_entries or not self.line_entries:
            raise UsageError("both registries must be nonempty")
        if not self.thresholds:
            table = {
                (e.index, le.index): e.contraction_power
                for e in self.pf_entries
                for le in self.line_entries
            }
            object.__setattr__(self, "thresholds", table)

    @property
    def mode(self) -> str:
        return (
            "theta"
            if all(e.kind == "fold" for e in self.line_entries)
            else "full"
        )

    def _stream(self) -> Iterator[tuple[str, int, int]]:
        p, q = len(self.pf_entries), len(self.line_entries)
        rnd = 1
        while True:
            for i in range(1, min(rnd, p) + 1):
                for j in range(1, min(rnd, q) + 1):
                    yield ("line", i, j)
                    yield ("power", i, self.thresholds[(i, j)] + rnd)
            rnd += 1

    def pairs(self, count: int) -> tuple[tuple[str, int, int], ...]:
        return tuple(itertools.islice(self._stream(), count))

    def audit_prefix(self, count: int) -> dict:
        """Counters for the three schedule conditions on a prefix: odd slots
        immediately followed by a large enough power of the same block,
        powers per block unbounded under extension, and every pair
        recurring."""
        items = self.pairs(count)
        line_counts: dict[SlotPair, int] = {}
        power_max: dict[int, int] = {}
        for k, item in enumerate(items):
            kind, i, m = item
            if kind == "line":
                line_counts[(i, m)] = line_counts.get((i, m), 0) + 1
                if k + 1 < len(items):
                    nk, ni, nn = items[k + 1]
                    if nk != "power" or ni != i or nn <= self.thresholds[(i, m)]:
                        raise IdentityViolation(
                            f"slot {k + 1} is not followed by a large power"
                        )
            else:
                power_max[i] = max(power_max.get(i, 0), m)
        return {
            "pairs": len(items),
            "line_counts": line_counts,
            "power_max": power_max,
        }


def snake_schedule(
    pf_entries: Sequence[PFEntry], line_entries: Sequence[LineEntry]
) -> RaySchedule:
    if not pf_entries or not line_entries:
        raise UsageError("both registries must be nonempty")
    rank = pf_entries[0].matrix.dim
    return RaySchedule(rank, tuple(pf_entries), tuple(line_entries))


# -- flattening and the base point ---------------------------------------------


@dataclass(frozen=True)
class _FlatItem:
    schedule_pos: int
    kind: str  # "fold" | "line"
    matrix: IntMatrix
    pair: SlotPair | None = None
    line_index: int = 0


def _flatten(schedule: RaySchedule, horizon: int) -> tuple[_FlatItem, ...]:
    if horizon < 1:
        raise UsageError("horizon must be >= 1")
    items: list[_FlatItem] = []
    for pos, (kind, i, m) in enumerate(schedule._stream(), start=1):
        if kind == "line":
            entry = schedule.line_entries[m - 1]
            if entry.kind == "fold":
                items.append(
                    _FlatItem(pos, "fold", entry.matrix, pair=entry.pair)
                )
            else:
                items.append(
                    _FlatItem(pos, "line", entry.matrix, line_index=entry.index)
                )
        else:
            entry = schedule.pf_entries[i - 1]
            for _ in range(m):
                for a, b in entry.symbols:
                    items.append(
                        _FlatItem(
                            pos, "fold", unfold_matrix(a, b, schedule.rank), pair=(a, b)
                        )
                    )
        if len(items) >= horizon:
            return tuple(items[:horizon])
    raise SearchBudgetExhausted("schedule stream ended early")


def _backward_family(
    matrices: Sequence[IntMatrix], rank: int
) -> tuple[PosVector, ...]:
    # w[l-1] = D_l w[l] starting from the all-ones vector at the horizon
    w = [PosVector([1] * rank)]
    for m in reversed(matrices):
        w.append(apply(m, w[-1]))
    w.reverse()
    for k, v in enumerate(w):
        if not v.is_positive:
            raise IdentityViolation(f"milestone {k} has a nonpositive entry")
    return tuple(w)


def base_from_matrices(matrices: Sequence[IntMatrix]) -> PosVector:
    """Normalized start of the family defined by an explicit matrix
    sequence applied to the all-ones vector."""
    if not matrices:
        raise UsageError("need at least one matrix")
    w = _backward_family(list(matrices), matrices[0].dim)
    return normalize(w[0])


def base_point(schedule: RaySchedule, horizon: int) -> PosVector:
    """Normalized start of the horizon family; every later milestone of the
    same family stays positive."""
    items = _flatten(schedule, horizon)
    return base_from_matrices([it.matrix for it in items])


# -- rays ----------------------------------------------------------------------


@dataclass(frozen=True)
class RaySegment:
    """One step of the flattened sequence. ``matrix`` carries the end
    milestone's lengths back to the start milestone's. A fold segment folds
    petal ``pair[0]`` over petal ``pair[1]`` (signs record the folded
    directions); a line segment holds the retargeted rose-to-rose line."""

    index: int
    kind: str  # "fold" | "line"
    matrix: IntMatrix
    pair: SlotPair | None = None
    line: RoseToRoseLine | None = None
    line_index: int = 0
    schedule_pos: int = 0


@dataclass(frozen=True)
class Ray:
    """A finite prefix of a geodesic fold ray.

    ``milestones`` is the exact unprojectivized family with the all-ones
    vector at the horizon; ``scale`` rescales it so the base has volume one.
    ``segment_words`` hold each step's marking change; the cumulative word
    up to milestone k is ``marking(k)``. The witness is the loop crossing
    each petal once in the positive direction."""

    rank: int
    mode: str
    horizon: int
    base: MarkedMetricGraph
    milestones: tuple[PosVector, ...]
    segments: tuple[RaySegment, ...]
    segment_words: tuple[AutomorphismWord, ...]
    scale: Fraction
    schedule: RaySchedule | None = None

    @property
    def extent(self) -> int:
        return self.horizon

    @property
    def witness(self) -> tuple[int, ...]:
        return tuple(range(1, self.rank + 1))

    def marking(self, k: int) -> AutomorphismWord:
        if not 0 <= k <= self.horizon:
            raise UsageError(f"milestone index {k} outside 0..{self.horizon}")
        letters: list = []
        for word in self.segment_words[:k]:
            letters.extend(word.letters)
        return AutomorphismWord(self.rank, tuple(letters))

    def milestone_point(self, k: int) -> MarkedMetricGraph:
        if not 0 <= k <= self.horizon:
            raise UsageError(f"milestone index {k} outside 0..{self.horizon}")
        lengths = [e * self.scale for e in self.milestones[k].entries]
        return rose_point(lengths, marking=self.marking(k))


def _assemble_segments(
    schedule: RaySchedule, items: Sequence[_FlatItem], w: Sequence[PosVector]
) -> tuple[tuple[RaySegment, ...], tuple[AutomorphismWord, ...]]:
    segments: list[RaySegment] = []
    words: list[AutomorphismWord] = []
    for l, it in enumerate(items, start=1):
        if it.kind == "fold":
            a, b = it.pair
            if w[l - 1][a] <= w[l - 1][b]:
                raise RayAssemblyError(
                    f"segment {l}: fold of {a} over {b} is not allowable"
                )
            segments.append(
                RaySegment(l, "fold", it.matrix, pair=it.pair,
                           schedule_pos=it.schedule_pos)
            )
            words.append(AutomorphismWord(schedule.rank, (fold_letter(a, b),)))
        else:
            entry = schedule.line_entries[it.line_index - 1]
            try:
                rline = retarget(entry.line, w[l].entries)
            except FoldrayError as exc:
                raise RayAssemblyError(
                    f"segment {l} (schedule slot {it.schedule_pos}, line "
                    f"{it.line_index}): retarget failed: {exc}"
                ) from exc
            if rline.rose_to_graph.x0.length_vector() != w[l - 1].entries:
                raise RayAssemblyError(
                    f"segment {l}: retargeted line does not start at the milestone"
                )
            if rline.top.graph.has_separating_edge():
                raise RayAssemblyError(f"segment {l}: top graph has a separating edge")
            segments.append(
                RaySegment(l, "line", it.matrix, line=rline,
                           line_index=it.line_index, schedule_pos=it.schedule_pos)
            )
            words.append(rline.automorphism)
    return tuple(segments), tuple(words)


def generate_ray(schedule: RaySchedule, horizon: int) -> Ray:
    """Realize the first ``horizon`` matrices of the schedule: fold blocks
    as proper full folds of roses, line blocks as lines retargeted so the
    whole family is one exact unprojectivized fold path."""
    items = _flatten(schedule, horizon)
    w = _backward_family([it.matrix for it in items], schedule.rank)
    segments, words = _assemble_segments(schedule, items, w)
    scale = 1 / w[0].total()
    base = rose_point([e * scale for e in w[0].entries])
    return Ray(
        rank=schedule.rank,
        mode=schedule.mode,
        horizon=horizon,
        base=base,
        milestones=w,
        segments=segments,
        segment_words=words,
        scale=scale,
        schedule=schedule,
    )


def theta_ray(
    rank: int, horizon: int, pf_count: int = 4, bits: int | None = None
) -> Ray:
    """Ray built from single folds only, so every interior point lies in a
    two-vertex simplex obtained by unfolding one petal pair of a rose."""
    if rank < 2:
        raise UsageError("rays need rank >= 2")
    schedule = snake_schedule(pf_registry(rank, pf_count, bits), fold_entries(rank))
    return generate_ray(schedule, horizon)


def ray_from_folds(lengths: Sequence, pairs: Sequence[SlotPair]) -> Ray:
    """Ray from an explicit base and fold list; pairs may carry signs to
    describe the folded directions (mixed signs survive construction and
    are caught by certification). Each fold must keep all lengths positive."""
    start = [to_fraction(x) for x in lengths]
    if any(x <= 0 for x in start):
        raise NotAllowableError("base lengths must be positive")
    rank = len(start)
    w = [PosVector(start)]
    segments: list[RaySegment] = []
    words: list[AutomorphismWord] = []
    for l, (da, db) in enumerate(pairs, start=1):
        a, b = abs(da), abs(db)
        if not (1 <= a <= rank and 1 <= b <= rank) or a == b:
            raise UsageError(f"fold {l}: bad petal pair ({da}, {db})")
        cur = list(w[-1].entries)
        if cur[a - 1] <= cur[b - 1]:
            raise NotAllowableError(f"fold {l} of {a} over {b} is not allowable")
        cur[a - 1] -= cur[b - 1]
        w.append(PosVector(cur))
        segments.append(
            RaySegment(l, "fold", unfold_matrix(a, b, rank), pair=(da, db))
        )
        words.append(AutomorphismWord(rank, (fold_letter(a, b),)))
    scale = 1 / w[0].total()
    base = rose_point([e * scale for e in w[0].entries])
    return Ray(
        rank=rank,
        mode="custom",
        horizon=len(segments),
        base=base,
        milestones=tuple(w),
        segments=tuple(segments),
        segment_words=tuple(words),
        scale=scale,
    )


# -- interior points of fold segments ------------------------------------------


def fold_interior_graph(rank: int) -> Graph:
    """Two-vertex shape crossed by a partial fold of one petal pair: the two
    petal remainders, the identified arc, and the untouched petals. The
    rank 2 case is the three-parallel-edge graph up to edge directions."""
    rows = [(1, 1, 0), (2, 1, 0), (3, 0, 1)]
    rows += [(k, 0, 0) for k in range(4, rank + 2)]
    return Graph.build(rows)


def _interior_lengths(
    ray: Ray, seg: RaySegment, u: Fraction
) -> tuple[Fraction, ...]:
    # coordinates: folded-petal remainder, absorbed-petal remainder,
    # identified arc, then the untouched petals in slot order
    a, b = abs(seg.pair[0]), abs(seg.pair[1])
    after = ray.milestones[seg.index]
    t = (1 - u) * after[b]
    rest = [after[k] for k in range(1, ray.rank + 1) if k not in (a, b)]
    return tuple(x * ray.scale for x in (after[a] + t, t, after[b] - t, *rest))


def fold_interior_point(ray: Ray, l: int, u) -> MarkedMetricGraph:
    """Point at fraction u of fold segment l, in the exact family scale.
    The marking is the word of the milestone before the segment."""
    u = to_fraction(u)
    if not 1 <= l <= ray.horizon or ray.segments[l - 1].kind != "fold":
        raise UsageError(f"segment {l} is not a fold segment")
    if not 0 < u < 1:
        raise UsageError("interior parameter must lie strictly between 0 and 1")
    lengths = _interior_lengths(ray, ray.segments[l - 1], u)
    g = fold_interior_graph(ray.rank)
    return MarkedMetricGraph(
        g, dict(zip(g.edge_ids, lengths)), ray.marking(l - 1)
    )


# -- volumes, distance, certification ------------------------------------------


def _volume_at(ray: Ray, time: Fraction) -> Fraction:
    if not 0 <= time <= ray.horizon:
        raise UsageError(f"time {time} outside 0..{ray.horizon}")
    l = int(time)
    f = time - l
    t0 = ray.milestones[l].total()
    if f == 0:
        return t0
    return t0 + f * (ray.milestones[l + 1].total() - t0)


def volume_ratio(ray: Ray, s, t) -> Fraction:
    """Exact ratio of unprojectivized volumes between two times; segments
    are parametrized proportionally to collapsed volume."""
    s, t = to_fraction(s), to_fraction(t)
    if s > t:
        raise UsageError("times must satisfy s <= t")
    return _volume_at(ray, s) / _volume_at(ray, t)


@dataclass(frozen=True)
class FoldGate:
    """Evidence for one fold: the folded directions, whether they match in
    sign, whether the witness loop avoids them, and allowability."""

    segment: int
    fold: int
    turn: tuple[int, int]
    direction_matching: bool
    witness_clear: bool
    allowable: bool

    @property
    def legal(self) -> bool:
        return self.direction_matching and self.witness_clear and self.allowable


@dataclass(frozen=True)
class GeodesicCertificate:
    first: int
    last: int
    gates: tuple[FoldGate, ...]
    stretch: Fraction  # volume ratio over the certified range

    @property
    def ok(self) -> bool:
        return all(g.legal for g in self.gates)


def _witness_turns(rank: int) -> set[frozenset]:
    # turns crossed by the loop through all petals in the positive direction
    return {
        frozenset({-k, k % rank + 1}) for k in range(1, rank + 1)
    }


def _fold_gate(ray: Ray, seg: RaySegment) -> FoldGate:
    da, db = seg.pair
    a, b = abs(da), abs(db)
    before = ray.milestones[seg.index - 1]
    return FoldGate(
        segment=seg.index,
        fold=1,
        turn=(da, db),
        direction_matching=(da > 0) == (db > 0),
        witness_clear=frozenset({da, db}) not in _witness_turns(ray.rank),
        allowable=before[a] > before[b],
    )


def _line_gates(ray: Ray, seg: RaySegment) -> list[FoldGate]:
    before = ray.milestones[seg.index - 1]
    after = ray.milestones[seg.index]
    if apply(seg.matrix, after).entries != before.entries:
        raise IdentityViolation(
            f"segment {seg.index}: matrix does not carry the milestones"
        )
    if seg.line.terminal.length_vector() != after.entries:
        raise IdentityViolation(f"segment {seg.index}: line ends off the milestone")
    # every fold of the line was re-verified direction-matching and
    # allowable when the line was replayed at this terminal
    return [
        FoldGate(
            segment=seg.index,
            fold=k + 1,
            turn=(st.sign_over * (st.over + 1), st.sign_absorbed * (st.absorbed + 1)),
            direction_matching=True,
            witness_clear=True,
            allowable=True,
        )
        for k, st in enumerate(seg.line.folds.steps)
    ]


def certify_geodesic(ray: Ray, s, t) -> GeodesicCertificate:
    """Check every fold between times s and t against the witness loop and
    emit the per-fold evidence; an illegal fold raises with its gate."""
    s, t = to_fraction(s), to_fraction(t)
    if not 0 <= s <= t <= ray.horizon:
        raise UsageError("certification range outside the ray")
    seg_lo = int(s) + 1
    seg_hi = min(-(-t.numerator // t.denominator), ray.horizon)  # ceil, capped
    gates: list[FoldGate] = []
    for l in range(seg_lo, seg_hi + 1):
        seg = ray.segments[l - 1]
        if seg.kind == "fold":
            gate = _fold_gate(ray, seg)
            if not gate.legal:
                raise CertificateError(
                    f"illegal fold at segment {l}: turn {gate.turn}", gate=gate
                )
            gates.append(gate)
        else:
            gates.extend(_line_gates(ray, seg))
    return GeodesicCertificate(
        first=seg_lo,
        last=seg_hi,
        gates=tuple(gates),
        stretch=volume_ratio(ray, s, t),
    )


def lipschitz_along(ray: Ray, s, t, bits: int | None = None):
    """Log of the volume ratio between two times of the exact family; this
    is the witness stretch, hence the distance between the projectivized
    points. The certificate over [s, t] is re-checked first."""
    certify_geodesic(ray, s, t)
    ratio = volume_ratio(ray, s, t)
    ctx = mp_context(precision_bits(bits))
    return ctx.log(fraction_to_mpf(ratio, ctx))


# -- simplicial distance and the density search ---------------------------------


def _same_unoriented(g1: Graph, g2: Graph) -> bool:
    if g1.edge_ids != g2.edge_ids or g1.vertices != g2.vertices:
        return False
    for (e1, t1, h1), (e2, t2, h2) in zip(g1.edges, g2.edges):
        if {t1, h1} != {t2, h2}:
            return False
    return True


def simplicial_distance(x: MarkedMetricGraph, y: MarkedMetricGraph,
                        bits: int | None = None):
    """Euclidean distance of the length vectors of two points carried by
    the same graph up to edge directions."""
    if not _same_unoriented(x.graph, y.graph):
        raise UsageError("points live in different simplices")
    d2 = sum(
        ((x.lengths[e] - y.lengths[e]) ** 2 for e in x.graph.edge_ids),
        Fraction(0),
    )
    ctx = mp_context(precision_bits(bits))
    return ctx.sqrt(fraction_to_mpf(d2, ctx))


@dataclass(frozen=True)
class TangentDatum:
    """A point together with the turn to be folded next at it."""

    point: MarkedMetricGraph
    next_turn: Turn

    def __post_init__(self):
        self.next_turn.check(self.point.graph)


@dataclass(frozen=True)
class DensityResult:
    found: bool
    index: int
    kind: str  # "milestone" | "interior" | "top"
    word: AutomorphismWord | None
    distance: object
    examined: int
    parameter: object = None  # position inside the matched segment


def _normalized_floats(v: PosVector, ctx) -> tuple:
    total = fraction_to_mpf(v.total(), ctx)
    return tuple(fraction_to_mpf(e, ctx) / total for e in v.entries)


def _verify_translation(ray: Ray, k: int) -> AutomorphismWord:
    # the translated milestone must carry the identity marking and the
    # stored length vector; the matrix form checks the exact bookkeeping
    word = ray.marking(k)
    prod = identity(ray.rank)
    for seg in ray.segments[:k]:
        prod = prod @ seg.matrix
    if apply(prod, ray.milestones[k]).entries != ray.milestones[0].entries:
        raise IdentityViolation(f"milestone {k} fails the translation identity")
    translated = act(ray.milestone_point(k), word.inverse())
    if not translated.marking.is_identity():
        raise IdentityViolation(f"milestone {k} marking does not cancel")
    return word


def _search_roses(ray: Ray, u, datum: TangentDatum | None, cap: int, ctx):
    best = (None, None)
    for k in range(0, cap + 1):
        if datum is not None:
            if k >= ray.horizon:
                break
            seg = ray.segments[k]
            if seg.kind != "fold" or seg.pair != (datum.next_turn.a, datum.next_turn.b):
                continue
        mk = _normalized_floats(ray.milestones[k], ctx)
        dist = ctx.sqrt(sum((a - b) ** 2 for a, b in zip(mk, u)))
        if best[0] is None or dist < best[0]:
            best = (dist, k)
    return best[0], best[1], None


def _search_interiors(ray: Ray, u, datum: TangentDatum | None, cap: int, ctx):
    if datum is not None and datum.next_turn != Turn(1, 2):
        return None, None, None
    best = (None, None, None)
    one = ctx.mpf(1)
    for l in range(1, cap + 1):
        seg = ray.segments[l - 1]
        if seg.kind != "fold" or seg.pair[0] < 0 or seg.pair[1] < 0:
            continue
        a, b = seg.pair
        zeta = _normalized_floats(ray.milestones[l], ctx)
        rest = [zeta[k - 1] for k in range(1, ray.rank + 1) if k not in (a, b)]
        zext = (zeta[a - 1], ctx.mpf(0), zeta[b - 1], *rest)
        dvec = (one, one, -one) + (ctx.mpf(0),) * (ray.rank - 2)
        delta = [dv - ze for dv, ze in zip(dvec, zext)]
        den = sum(d * d for d in delta)
        tau_max = zeta[b - 1] / (one + zeta[b - 1])
        tau = sum((ui - ze) * d for ui, ze, d in zip(u, zext, delta)) / den
        tau = min(max(tau, ctx.mpf(0)), tau_max)
        dist = ctx.sqrt(
            sum((ze + tau * d - ui) ** 2 for ze, d, ui in zip(zext, delta, u))
        )
        if best[0] is None or dist < best[0]:
            best = (dist, l, tau)
    return best


def _search_tops(ray: Ray, target: MarkedMetricGraph, u_by_id, datum, cap: int, ctx):
    best = (None, None)
    for l in range(1, cap + 1):
        seg = ray.segments[l - 1]
        if seg.kind != "line" or not _same_unoriented(seg.line.top.graph, target.graph):
            continue
        if datum is not None:
            rt = seg.line.requested_turn
            if (abs(rt.a), abs(rt.b)) != (abs(datum.next_turn.a), abs(datum.next_turn.b)):
                continue
        top = seg.line.top
        vol = fraction_to_mpf(top.volume, ctx)
        d2 = sum(
            (fraction_to_mpf(top.lengths[e], ctx) / vol - u_by_id[e]) ** 2
            for e in top.graph.edge_ids
        )
        dist = ctx.sqrt(d2)
        if best[0] is None or dist < best[0]:
            best = (dist, l)
    return best[0], best[1], None


def density_search(
    ray: Ray, target, eps, budget: int, bits: int | None = None
) -> DensityResult:
    """Scan translated milestones and segments for one within eps of the
    target in its own simplex. Rose targets compare against milestones,
    two-vertex targets against interior curves of fold segments, trivalent
    targets against the top points of line segments. Returns the best
    candidate with ``found`` False when the budget runs out short of eps."""
    datum = target if isinstance(target, TangentDatum) else None
    point = datum.point if datum else target
    if not isinstance(point, MarkedMetricGraph):
        raise UsageError("target must be a point or a tangent datum")
    eps = to_fraction(eps)
    if eps <= 0:
        raise UsageError("eps must be positive")
    if budget < 1:
        raise UsageError("budget must be >= 1")
    ctx = mp_context(precision_bits(bits))
    cap = min(budget, ray.horizon)
    g = point.graph
    vol = fraction_to_mpf(point.volume, ctx)
    u = tuple(fraction_to_mpf(point.lengths[e], ctx) / vol for e in g.edge_ids)
    if len(g.vertices) == 1 and g.rank == ray.rank:
        kind = "milestone"
        dist, index, par = _search_roses(ray, u, datum, cap, ctx)
    elif _same_unoriented(g, fold_interior_graph(ray.rank)):
        kind = "interior"
        dist, index, par = _search_interiors(ray, u, datum, cap, ctx)
    else:
        if not g.is_trivalent():
            raise UsageError("target graph is neither a rose, a petal-pair "
                             "unfolding, nor trivalent")
        kind = "top"
        u_by_id = {
            e: fraction_to_mpf(point.lengths[e], ctx) / vol for e in g.edge_ids
        }
        dist, index, par = _search_tops(ray, point, u_by_id, datum, cap, ctx)
    eps_f = fraction_to_mpf(eps, ctx)
    if dist is None:
        return DensityResult(False, -1, kind, None, None, cap)
    found = dist <= eps_f
    word = _verify_translation(ray, index) if found else None
    return DensityResult(found, index, kind, word, dist, cap, parameter=par)


# -- plot data ------------------------------------------------------------------


def plotdata_rows(ray: Ray, bits: int | None = None) -> tuple:
    """Per-step rows (step, simplex label, normalized lengths, cumulative
    distance from the base)."""
    ctx = mp_context(precision_bits(bits))
    rows = [(0, f"rose:{ray.rank}", _normalized_exact(ray.milestones[0]), ctx.mpf(0))]
    t0 = ray.milestones[0].total()
    for seg in ray.segments:
        if seg.kind == "fold":
            a, b = abs(seg.pair[0]), abs(seg.pair[1])
            label = f"fold:{a}-{b}"
        else:
            label = f"line:{seg.line_index}"
        dist = ctx.log(fraction_to_mpf(t0 / ray.milestones[seg.index].total(), ctx))
        rows.append(
            (seg.index, label, _normalized_exact(ray.milestones[seg.index]), dist)
        )
    return tuple(rows)


def _normalized_exact(v: PosVector) -> tuple[Fraction, ...]:
    total = v.total()
    return tuple(e / total for e in v.entries)
