"""Fold lines between roses and graphs.

A rose unfolds onto a trivalent graph by identifying prefixes of its petals
pairwise, one amount per same-sign turn of the rose. In the other direction a
transitively oriented graph folds down to a rose through a sequence of proper
full folds, each matching directions at a vertex and absorbing the shorter
edge into the longer. Both constructions are exact over the rationals and
compose into rose-to-rose lines carrying an integer change-of-metric matrix
and the corresponding substitution automorphism.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .automorphisms import AutomorphismWord, subst_letter
from .decompose import LoopDecomposition, loop_decomposition
from .errors import (
    DecompositionError,
    DimensionMismatch,
    GraphStructureError,
    IdentityViolation,
    NotAllowableError,
    NotProperError,
    OutsideNeighborhoodError,
    RankDropError,
    SearchBudgetExhausted,
    SimplexExitError,
)
from .folds import FoldMachine
from .graphs import (
    Direction,
    Graph,
    GraphMap,
    MarkedMetricGraph,
    Turn,
    reverse_path,
    rose_point,
    transition_matrix,
)
from .matrices import IntMatrix, fold_matrix, unfold_matrix
from .scalars import to_fraction

RoseTurn = tuple[int, int, int]  # (i, j, sign) with 1 <= i < j, sign = +-1


def rose_turns(rank: int) -> tuple[RoseTurn, ...]:
    """The r(r-1) same-sign turns of an r-petaled rose: all pairs i < j with
    both petals outgoing, then the same pairs with both incoming."""
    pos = [(i, j, 1) for i in range(1, rank + 1) for j in range(i + 1, rank + 1)]
    return tuple(pos) + tuple((i, j, -1) for i, j, _ in pos)


def _mat_vec(m: IntMatrix, vec: Sequence[Fraction]) -> tuple[Fraction, ...]:
    if m.dim != len(vec):
        raise DimensionMismatch(f"matrix is {m.dim}x{m.dim}, vector has {len(vec)}")
    return tuple(
        sum((Fraction(c) * x for c, x in zip(row, vec)), Fraction(0))
        for row in m.rows
    )


# -- rose to graph ------------------------------------------------------------


@dataclass(frozen=True)
class RoseToGraphLine:
    """One simultaneous unfolding run: per-turn identification amounts applied
    to the petal images cumulatively, in the fixed turn order."""

    x0: MarkedMetricGraph
    s_bar: tuple[Fraction, ...]
    segments: tuple[tuple[RoseTurn, Fraction, Fraction], ...]  # (turn, amount, fresh)
    endpoint: MarkedMetricGraph
    fold_map: GraphMap  # petals of x0 to edge paths of the endpoint

    @property
    def duration(self) -> Fraction:
        return sum(self.s_bar, Fraction(0))

    def point_at(self, t) -> MarkedMetricGraph:
        """Endpoint of the truncated run that spends time t along the
        schedule (turns are processed in order, each for its amount)."""
        t = to_fraction(t)
        if not 0 <= t <= self.duration:
            raise NotAllowableError("time outside the line")
        truncated = []
        left = t
        for s in self.s_bar:
            step = min(s, left)
            truncated.append(step)
            left -= step
        return rose_to_graph(self.x0, truncated).endpoint


def rose_to_graph(x0: MarkedMetricGraph, s_bar: Sequence) -> RoseToGraphLine:
    """Unfold a rose by identifying, for every same-sign turn (i, j, sign),
    the initial segments of length s of the current images of the two petal
    directions. Already-identified stretches are skipped, so each amount
    collapses at most s of fresh volume."""
    g = x0.graph
    if len(g.vertices) != 1:
        raise GraphStructureError("unfolding starts from a rose")
    r = g.rank
    turns = rose_turns(r)
    amounts = tuple(to_fraction(s) for s in s_bar)
    if len(amounts) != len(turns):
        raise GraphStructureError(
            f"need {len(turns)} fold amounts for rank {r}, got {len(amounts)}"
        )
    petals = g.edge_ids
    for (i, j, sign), s in zip(turns, amounts):
        if s < 0:
            raise NotAllowableError("fold amounts must be nonnegative")
        cap = min(x0.lengths[petals[i - 1]], x0.lengths[petals[j - 1]])
        if s > cap:
            raise NotAllowableError(
                f"amount {s} for turn {(i, j, sign)} exceeds a petal of length {cap}"
            )
    machine = FoldMachine(x0)
    segments = []
    for (i, j, sign), s in zip(turns, amounts):
        if s == 0:
            continue
        da = sign * petals[i - 1]
        db = sign * petals[j - 1]
        fresh = machine.identify_image_prefixes(da, db, s)
        segments.append(((i, j, sign), s, fresh))
    endpoint = machine.current_point()
    if endpoint.graph.rank != r:
        raise RankDropError("the combined folds are not a homotopy equivalence")
    total_fresh = sum((f for _, _, f in segments), Fraction(0))
    if endpoint.volume != x0.volume - total_fresh:
        raise IdentityViolation("volume bookkeeping failed in unfolding")
    return RoseToGraphLine(x0, amounts, tuple(segments), endpoint, machine.map_from_source())


# -- recovering the rose from a decomposed graph point -----------------------


def _oriented_loops(d: LoopDecomposition) -> tuple[tuple[Direction, ...], ...]:
    o = d.orientation
    loops = tuple(tuple(dd * o[abs(dd)] for dd in loop) for loop in d.loops)
    for loop in loops:
        if any(dd < 0 for dd in loop):
            raise DecompositionError("loops must cross every edge positively")
    return loops


def _common_prefix(a: Sequence[Direction], b: Sequence[Direction]) -> int:
    k = 0
    while k < len(a) and k < len(b) and a[k] == b[k]:
        k += 1
    return k


def _fold_amounts(
    x: MarkedMetricGraph, loops: Sequence[tuple[Direction, ...]]
) -> dict[RoseTurn, Fraction]:
    """Per-turn overlap lengths of the loop system: the positive turn (i, j)
    carries the common-prefix length of loops i and j, the negative turn the
    common-suffix length. Loops may share further middle stretches through
    third loops; those identifications are reproduced transitively by the
    unfolding and need no amount of their own."""
    r = len(loops)
    out: dict[RoseTurn, Fraction] = {}
    for i in range(1, r + 1):
        for j in range(i + 1, r + 1):
            li, lj = loops[i - 1], loops[j - 1]
            p = _common_prefix(li, lj)
            q = _common_prefix(reverse_path(li), reverse_path(lj))
            if p + q > min(len(li), len(lj)):
                raise DecompositionError(
                    f"loops {i} and {j} overlap in more than a proper arc"
                )
            prefix = li[:p]
            suffix = li[len(li) - q:] if q else ()
            out[(i, j, 1)] = sum((x.lengths[abs(d)] for d in prefix), Fraction(0))
            out[(i, j, -1)] = sum((x.lengths[abs(d)] for d in suffix), Fraction(0))
    return out


def recover_rose(
    x: MarkedMetricGraph, d: LoopDecomposition
) -> tuple[MarkedMetricGraph, tuple[Fraction, ...]]:
    """Read off the rose point and fold amounts whose unfolding run ends at x:
    petal lengths are the loop lengths, the amount of a positive turn (i, j)
    is the common-prefix length of loops i and j, of a negative turn the
    common-suffix length."""
    if x.graph != d.graph and x.graph != d.oriented_graph():
        raise DecompositionError("decomposition does not match the point")
    loops = _oriented_loops(d)
    amounts = _fold_amounts(x, loops)
    petal_lengths = [
        sum((x.lengths[abs(dd)] for dd in loop), Fraction(0)) for loop in loops
    ]
    s_bar = tuple(amounts[t] for t in rose_turns(len(loops)))
    x0 = rose_point(petal_lengths, marking=x.marking)
    return x0, s_bar


def _match_endpoint(
    line: RoseToGraphLine,
    x: MarkedMetricGraph,
    loops: Sequence[tuple[Direction, ...]],
) -> dict[int, Direction]:
    """The unfolding endpoint must be x itself: petal images must traverse
    the loops edge for edge with exactly matching lengths. Returns the edge
    correspondence (endpoint id -> signed x id) or raises."""
    f = line.fold_map
    petals = line.x0.graph.edge_ids
    pairing: dict[int, Direction] = {}
    for k, loop in enumerate(loops):
        img = f.edge_images[petals[k]]
        if len(img) != len(loop):
            raise IdentityViolation(
                f"petal {k + 1} image has {len(img)} edges, loop has {len(loop)}"
            )
        for de, dx in zip(img, loop):
            signed = dx if de > 0 else -dx
            prev = pairing.get(abs(de))
            if prev is not None and prev != signed:
                raise IdentityViolation("inconsistent edge pairing in round trip")
            pairing[abs(de)] = signed
            if line.endpoint.lengths[abs(de)] != x.lengths[abs(dx)]:
                raise IdentityViolation(
                    f"length mismatch on edge {abs(dx)} in round trip"
                )
    if len(pairing) != len(line.endpoint.graph.edge_ids):
        raise IdentityViolation("round trip did not cover the endpoint")
    if len({abs(v) for v in pairing.values()}) != len(x.graph.edge_ids):
        raise IdentityViolation("round trip did not cover the target")
    return pairing


def verify_recovery(x: MarkedMetricGraph, d: LoopDecomposition) -> RoseToGraphLine:
    """Recover the rose data from (x, d), rerun the unfolding, and check the
    endpoint reproduces x exactly, edge for edge."""
    x0, s_bar = recover_rose(x, d)
    line = rose_to_graph(x0, s_bar)
    _match_endpoint(line, x, _oriented_loops(d))
    return line


# -- breakpoint charts --------------------------------------------------------


@dataclass(frozen=True)
class SimplexChart:
    """Breakpoint layout of an unfolding endpoint. Each loop of the
    decomposition is cut at interior breakpoints (labelled by the turn that
    creates them); consecutive cuts bound one graph edge. Evaluating the
    chart at rose lengths and fold amounts returns the edge lengths of the
    graph point, and exits with an error as soon as the parameters leave the
    region where this combinatorial layout is valid."""

    rank: int
    # per loop: groups of labels at one breakpoint, in order along the loop
    breakpoints: tuple[tuple[tuple[tuple[str, int], ...], ...], ...]
    # per loop: edge ids of consecutive segments, one more than breakpoints
    segments: tuple[tuple[int, ...], ...]
    # turns whose amount must stay zero for the layout to persist
    zero_turns: tuple[RoseTurn, ...]

    def edge_ids(self) -> tuple[int, ...]:
        return tuple(sorted({e for seg in self.segments for e in seg}))


def simplex_chart(x: MarkedMetricGraph, d: LoopDecomposition) -> SimplexChart:
    """Build the breakpoint chart of x relative to its loop decomposition.

    Every interior vertex on a loop must be cut by an overlap of that loop
    with another one; a layout where a loop runs through a boundary vertex
    of two other loops' shared arc has no per-loop linear description of
    this shape and is refused."""
    loops = _oriented_loops(d)
    g = d.oriented_graph()
    if x.graph != d.graph and x.graph != g:
        raise DecompositionError("decomposition does not match the point")
    r = len(loops)
    amounts = _fold_amounts(x, loops)
    breakpoints = []
    segments = []
    zero: set[RoseTurn] = set()
    for i in range(1, r + 1):
        loop = loops[i - 1]
        total = sum((x.lengths[abs(dd)] for dd in loop), Fraction(0))
        marks: dict[Fraction, list[tuple[str, int]]] = {}
        for j in range(1, r + 1):
            if j == i:
                continue
            a, b = min(i, j), max(i, j)
            sp = amounts[(a, b, 1)]
            sn = amounts[(a, b, -1)]
            if sp == 0:
                zero.add((a, b, 1))
            elif sp < total:
                marks.setdefault(sp, []).append(("prefix", j))
            else:
                raise DecompositionError("prefix overlap must be proper")
            if sn == 0:
                zero.add((a, b, -1))
            elif sn < total:
                marks.setdefault(total - sn, []).append(("suffix", j))
            else:
                raise DecompositionError("suffix overlap must be proper")
        positions = sorted(marks)
        groups = tuple(tuple(sorted(marks[p])) for p in positions)
        cuts = [Fraction(0)] + positions + [total]
        segs = []
        sums = [Fraction(0)]
        for dd in loop:
            sums.append(sums[-1] + x.lengths[abs(dd)])
        if any(c not in sums for c in cuts):
            raise DecompositionError("breakpoints do not sit on vertices")
        idx = [sums.index(c) for c in cuts]
        for a_, b_ in zip(idx, idx[1:]):
            if b_ != a_ + 1:
                raise DecompositionError("a chart segment covers several edges")
            segs.append(abs(loop[a_]))
        breakpoints.append(groups)
        segments.append(tuple(segs))
    chart = SimplexChart(r, tuple(breakpoints), tuple(segments), tuple(sorted(zero)))
    if set(chart.edge_ids()) != set(g.edge_ids):
        raise DecompositionError("chart does not cover the graph")
    return chart


def lengths_from_params(
    chart: SimplexChart, x0_lengths: Sequence, s_bar: Sequence
) -> dict[int, Fraction]:
    """Edge lengths of the graph point with the chart's layout, as linear
    forms in the rose lengths and fold amounts. Raises a simplex-exit error
    naming the first segment whose length fails to be positive (or the first
    broken tie), i.e. when the parameters leave the chart's region."""
    r = chart.rank
    ls = tuple(to_fraction(v) for v in x0_lengths)
    amounts = tuple(to_fraction(v) for v in s_bar)
    turns = rose_turns(r)
    if len(ls) != r:
        raise DimensionMismatch(f"need {r} rose lengths, got {len(ls)}")
    if len(amounts) != len(turns):
        raise DimensionMismatch(f"need {len(turns)} amounts, got {len(amounts)}")
    index = {t: k for k, t in enumerate(turns)}
    for t in chart.zero_turns:
        if amounts[index[t]] != 0:
            raise SimplexExitError(
                "an overlap the chart requires to vanish is nonzero",
                witness=str(t),
            )
    values: dict[int, Fraction] = {}
    for i in range(1, r + 1):
        total = ls[i - 1]
        cuts = [Fraction(0)]
        for group in chart.breakpoints[i - 1]:
            vals = []
            for kind, j in group:
                a, b = min(i, j), max(i, j)
                s = amounts[index[(a, b, 1 if kind == "prefix" else -1)]]
                vals.append(s if kind == "prefix" else total - s)
            if any(v != vals[0] for v in vals):
                raise SimplexExitError(
                    "tied breakpoints moved apart", witness=str(group)
                )
            cuts.append(vals[0])
        cuts.append(total)
        for k, eid in enumerate(chart.segments[i - 1]):
            gap = cuts[k + 1] - cuts[k]
            if gap <= 0:
                raise SimplexExitError(
                    f"segment for edge {eid} in loop {i} has length {gap}",
                    witness=f"loop {i} edge {eid}",
                )
            prev = values.get(eid)
            if prev is None:
                values[eid] = gap
            elif prev != gap:
                raise SimplexExitError(
                    f"edge {eid} gets two different lengths", witness=f"edge {eid}"
                )
    return values


def region_contains(chart: SimplexChart, x0_lengths: Sequence, s_bar: Sequence) -> bool:
    try:
        lengths_from_params(chart, x0_lengths, s_bar)
    except SimplexExitError:
        return False
    return True


# -- graph to rose ------------------------------------------------------------


@dataclass(frozen=True)
class FoldStep:
    """One proper full fold, in slot coordinates: the edge in slot `over`
    absorbs the edge in slot `absorbed` entirely; signs give the matched
    directions relative to the machine's stored orientations at fold time."""

    over: int
    absorbed: int
    sign_over: int
    sign_absorbed: int


class _FoldRun:
    """A fold machine plus the bookkeeping the line needs: slot positions of
    the surviving edges, the recorded steps, and the canonical orientation of
    every current edge (the machine stores subdivided pieces along the fold
    direction, which may be the reverse of the edge's own orientation)."""

    def __init__(self, x: MarkedMetricGraph):
        self.machine = FoldMachine(x)
        self.slots: list[int] = list(x.graph.edge_ids)
        self.steps: list[FoldStep] = []
        self.orient: dict[int, int] = {eid: 1 for eid in x.graph.edge_ids}

    def canonical_graph(self) -> Graph:
        flip = [eid for eid, s in self.orient.items() if s < 0]
        return self.machine.current_graph().reversed_edges(flip)

    def to_storage(self, d: Direction) -> Direction:
        return d * self.orient[abs(d)]

    def canonical_sign(self, d: Direction) -> int:
        return (1 if d > 0 else -1) * self.orient[abs(d)]

    def proper_fold(self, da: Direction, db: Direction) -> tuple[int, int, bool]:
        """Fold the longer of two matched storage directions over the
        shorter; the shorter edge disappears into a prefix of the longer.
        Returns (identified edge id, remainder edge id, first_was_longer).
        Equal lengths are a tie and the folding is not proper."""
        if self.canonical_sign(da) != self.canonical_sign(db):
            raise IdentityViolation("a fold failed to match directions")
        machine = self.machine
        la = machine.length(abs(da))
        lb = machine.length(abs(db))
        if la == lb:
            raise NotProperError(
                f"edges {abs(da)} and {abs(db)} have equal length {la}; "
                "a proper full fold needs a strict inequality"
            )
        first_longer = la > lb
        if not first_longer:
            da, db = db, da
        i = self.slots.index(abs(da))
        j = self.slots.index(abs(db))
        piece_orient = self.orient[abs(da)] * (1 if da > 0 else -1)
        ident, rest, _ = machine.fold_prefixes(da, db, machine.length(abs(db)))
        assert rest is not None
        del self.orient[abs(da)]
        del self.orient[abs(db)]
        self.orient[ident] = piece_orient
        self.orient[rest] = piece_orient
        self.slots[j] = ident
        self.slots[i] = rest
        self.steps.append(FoldStep(i, j, 1 if da > 0 else -1, 1 if db > 0 else -1))
        if not self.canonical_graph().is_transitive():
            raise IdentityViolation("a fold broke the transitive orientation")
        return ident, rest, first_longer

    def fold_pair(self, pa: Sequence[Direction], pb: Sequence[Direction]) -> None:
        """Fold two storage-direction paths with common origin and terminus
        into one, edge by edge from the front; a leftover tail of the longer
        path closes into a loop at the merged endpoint."""
        a = list(pa)
        b = list(pb)
        guard = 0
        while a and b:
            guard += 1
            if guard > 100000:
                raise SearchBudgetExhausted("pair folding did not terminate")
            ident, rest, first_longer = self.proper_fold(a[0], b[0])
            if first_longer:
                a[0] = rest
                b.pop(0)
            else:
                b[0] = rest
                a.pop(0)


def _positive_paths(g: Graph) -> list[tuple[Direction, ...]]:
    """All embedded directed edge paths of g (no repeated vertex)."""
    out: list[tuple[Direction, ...]] = []
    for v in sorted(g.vertices):
        stack: list[tuple[int, tuple[Direction, ...], frozenset[int]]] = [
            (v, (), frozenset({v}))
        ]
        while stack:
            cur, path, seen = stack.pop()
            for dd in g.directions_at(cur):
                if dd < 0:
                    continue
                w = g.terminus(dd)
                if w in seen:
                    continue
                newp = path + (dd,)
                out.append(newp)
                stack.append((w, newp, seen | {w}))
    return out


def _path_count(g: Graph) -> int:
    return len(_positive_paths(g))


def _step1_candidate(
    g: Graph,
) -> tuple[tuple[Direction, ...], tuple[Direction, ...]] | None:
    """Least pair of embedded directed paths with the same two distinct
    endpoints and disjoint interiors, ordered by total edge count then
    lexicographically. None when the positive paths form a forest of arcs,
    i.e. distinct paths never share both endpoints."""
    paths = _positive_paths(g)
    groups: dict[tuple[int, int], list[tuple[Direction, ...]]] = {}
    for p in paths:
        groups.setdefault((g.origin(p[0]), g.terminus(p[-1])), []).append(p)
    best = None
    for ends in sorted(groups):
        ps = sorted(groups[ends])
        for ia in range(len(ps)):
            for ib in range(ia + 1, len(ps)):
                pa, pb = ps[ia], ps[ib]
                if {abs(d) for d in pa} & {abs(d) for d in pb}:
                    continue
                inta = {g.terminus(d) for d in pa[:-1]}
                intb = {g.terminus(d) for d in pb[:-1]}
                if inta & intb:
                    continue
                key = (len(pa) + len(pb), pa, pb)
                if best is None or key < best:
                    best = key
    return None if best is None else (best[1], best[2])


def _blocks(g: Graph) -> list[set[int]]:
    """Biconnected components as edge-id sets; a loop edge is its own block."""
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in g.vertices}
    blocks: list[set[int]] = []
    for eid, t, h in g.edges:
        if t == h:
            blocks.append({eid})
        else:
            adj[t].append((h, eid))
            adj[h].append((t, eid))
    num: dict[int, int] = {}
    low: dict[int, int] = {}
    seen_edges: set[int] = set()
    edge_stack: list[int] = []
    counter = [0]

    def dfs(u: int) -> None:
        num[u] = low[u] = counter[0]
        counter[0] += 1
        for w, eid in adj[u]:
            if eid in seen_edges:
                continue
            seen_edges.add(eid)
            edge_stack.append(eid)
            if w not in num:
                dfs(w)
                low[u] = min(low[u], low[w])
                if low[w] >= num[u]:
                    blk: set[int] = set()
                    while True:
                        x = edge_stack.pop()
                        blk.add(x)
                        if x == eid:
                            break
                    blocks.append(blk)
            else:
                low[u] = min(low[u], num[w])

    for root in sorted(g.vertices):
        if root not in num:
            dfs(root)
    return blocks


def _is_gear(g: Graph) -> bool:
    """Every biconnected block is a circle (edge count equals vertex count)."""
    for blk in _blocks(g):
        verts = set()
        for eid, t, h in g.edges:
            if eid in blk:
                verts |= {t, h}
        if len(blk) != len(verts):
            return False
    return True


def _circles_at(g: Graph, w: int) -> list[list[Direction]]:
    """Directed circles through w in a gear graph, each as the list of
    positive directions from w around and back, ordered by least edge id."""
    rings: list[list[Direction]] = []
    for blk in _blocks(g):
        verts = set()
        for eid, t, h in g.edges:
            if eid in blk:
                verts |= {t, h}
        if w not in verts:
            continue
        ring: list[Direction] = []
        used: set[int] = set()
        cur = w
        while True:
            outs = [
                dd
                for dd in g.directions_at(cur)
                if dd > 0 and abs(dd) in blk and abs(dd) not in used
            ]
            if len(outs) != 1:
                raise IdentityViolation("a circle is not coherently oriented")
            ring.append(outs[0])
            used.add(abs(outs[0]))
            cur = g.terminus(outs[0])
            if cur == w:
                break
        if used != blk:
            raise IdentityViolation("a circle walk missed part of its block")
        rings.append(ring)
    rings.sort(key=lambda ring: min(abs(d) for d in ring))
    return rings


def _first_pair(
    d: LoopDecomposition, t: Turn
) -> tuple[tuple[Direction, ...], tuple[Direction, ...]]:
    """The seed path pair whose first fold matches exactly the requested
    turn: the two loops through the turn edges, reversed and cut at their
    first shared vertex so they meet only at their endpoints."""
    loops = _oriented_loops(d)
    ea, eb = abs(t.a), abs(t.b)
    la = lb = None
    for loop in loops:
        if ea in loop:
            la = loop
        if eb in loop:
            lb = loop
    if la is None or lb is None or la == lb:
        raise DecompositionError("turn edges are not covered by distinct loops")
    if la[-1] != ea or lb[-1] != eb:
        raise DecompositionError("turn edges must end their loops")
    ra = reverse_path(la)
    rb = reverse_path(lb)
    g = d.graph
    verts_b = {g.terminus(rb[k]): k for k in reversed(range(len(rb) - 1))}
    cut = None
    for i in range(len(ra) - 1):
        j = verts_b.get(g.terminus(ra[i]))
        if j is not None:
            cut = (i, j)
            break
    if cut is None:
        raise DecompositionError("loop overlap arc is degenerate")
    pa = ra[: cut[0] + 1]
    pb = rb[: cut[1] + 1]
    if {pa[0], pb[0]} != {t.a, t.b}:
        raise IdentityViolation("seed pair does not start with the requested turn")
    return pa, pb


@dataclass(frozen=True)
class GraphToRoseFolds:
    """A complete folding of a transitively oriented graph point down to a
    rose: the fold steps in slot coordinates, their matrices, the chain
    structure of the terminal graph, and the induced map."""

    source: MarkedMetricGraph
    base_vertex: int
    steps: tuple[FoldStep, ...]
    matrices: tuple[IntMatrix, ...]
    initial_slots: tuple[int, ...]
    slot_lengths: tuple[Fraction, ...]  # terminal edge lengths by slot
    chains: tuple[tuple[int, ...], ...]  # slot indices per petal
    chain_edges: tuple[tuple[int, ...], ...]  # terminal edge ids per petal
    orientations: tuple[tuple[int, int], ...]  # terminal edge id -> +-1 vs storage
    terminal: MarkedMetricGraph  # a rose point
    machine_map: GraphMap  # source graph -> terminal graph before smoothing
    path_counts: tuple[int, ...]
    complexities: tuple[tuple[int, int], ...]


def _extract_chains(run: _FoldRun, base_vertex: int, rank: int) -> tuple[tuple[int, ...], ...]:
    """After folding, every vertex except the base has valence two; the
    terminal graph is a rose of edge chains starting and ending there,
    listed in canonical orientation as edge ids."""
    cg = run.canonical_graph()
    v0 = run.machine.vimages[base_vertex]
    for v in cg.vertices:
        if v != v0 and cg.valence(v) != 2:
            raise IdentityViolation("folding left an essential vertex off the base")
    outs = sorted(dd for dd in cg.directions_at(v0) if dd > 0)
    if len(outs) != rank:
        raise IdentityViolation("terminal graph is not a rose of chains")
    chains = []
    covered: set[int] = set()
    for d0 in outs:
        chain = [d0]
        cur = cg.terminus(d0)
        while cur != v0:
            nxt = [dd for dd in cg.directions_at(cur) if dd > 0]
            if len(nxt) != 1:
                raise IdentityViolation("chain walk lost its way")
            chain.append(nxt[0])
            cur = cg.terminus(nxt[0])
            if len(chain) > len(cg.edge_ids):
                raise IdentityViolation("chain walk cycled")
        chains.append(tuple(chain))
        covered |= {abs(dd) for dd in chain}
    if covered != set(cg.edge_ids):
        raise IdentityViolation("chains do not cover the terminal graph")
    return tuple(chains)


def graph_to_rose(
    x: MarkedMetricGraph,
    t: Turn | None = None,
    decomposition: LoopDecomposition | None = None,
    base_vertex: int | None = None,
) -> GraphToRoseFolds:
    """Fold a transitively oriented graph point to a rose through proper full
    folds, matching directions pairwise. First all distinct embedded directed
    path pairs with common endpoints are merged until the graph is a gear:
    circles pairwise meeting in at most one point. Then each move wraps the
    first edge of one circle around another and folds the matched remainder,
    driving every vertex except the base down to valence two. The embedded
    path counts and gear complexities are recorded per move. Length ties
    where a fold must be proper raise instead of folding."""
    g = x.graph
    if not g.is_transitive():
        raise GraphStructureError("folding needs a transitive orientation")
    if decomposition is not None:
        if decomposition.graph != g:
            raise DecompositionError("decomposition does not match the point")
        if any(s != 1 for s in decomposition.orientation.values()):
            raise DecompositionError(
                "fold the point in its oriented storage (orientation must be +1)"
            )
    if t is not None:
        t.check(g)
        if (t.a > 0) != (t.b > 0):
            raise GraphStructureError("the seeded turn must be positive or negative")
        if decomposition is None and g.is_trivalent():
            decomposition = loop_decomposition(g, t)
            if any(s != 1 for s in decomposition.orientation.values()):
                raise GraphStructureError(
                    "point is not stored in the orientation its loops induce"
                )
    if base_vertex is None:
        if decomposition is not None:
            base_vertex = decomposition.base_vertex
        elif t is not None:
            base_vertex = g.origin(t.a)
        else:
            base_vertex = min(g.vertices)

    run = _FoldRun(x)
    initial_slots = tuple(run.slots)
    counts = [_path_count(g)]

    def bump_count() -> None:
        # Path counts trend downward but can tick up when a fold subdivides
        # near a branch vertex; termination is enforced by the loop budgets.
        counts.append(_path_count(run.canonical_graph()))

    if t is not None and decomposition is not None and g.is_trivalent():
        pa, pb = _first_pair(decomposition, t)
        run.fold_pair(pa, pb)
        bump_count()

    guard = 0
    while True:
        guard += 1
        if guard > 1000:
            raise SearchBudgetExhausted("path-pair folding did not terminate")
        cand = _step1_candidate(run.canonical_graph())
        if cand is None:
            break
        run.fold_pair(
            [run.to_storage(d) for d in cand[0]],
            [run.to_storage(d) for d in cand[1]],
        )
        bump_count()

    if not _is_gear(run.canonical_graph()):
        raise IdentityViolation("path-pair folding did not reach a gear graph")

    comps: list[tuple[int, int]] = []
    guard = 0
    while True:
        guard += 1
        if guard > 1000:
            raise SearchBudgetExhausted("gear folding did not terminate")
        cg = run.canonical_graph()
        v0c = run.machine.vimages[base_vertex]
        big = [v for v in cg.vertices if v != v0c and cg.valence(v) > 2]
        if not big:
            break
        essential = len([v for v in cg.vertices if cg.valence(v) > 2])
        comp = (essential, max(cg.valence(v) for v in big))
        # Complexity can tie across a single move when another vertex realizes
        # the same maximal valence; the loop budget guards termination.
        comps.append(comp)
        w = min(big, key=lambda v: (-cg.valence(v), v))
        rings = _circles_at(cg, w)
        if len(rings) < 2:
            raise IdentityViolation("gear vertex lies on fewer than two circles")
        try:
            g2 = next(r for r in rings if len(r) >= 2)
        except StopIteration:
            raise IdentityViolation("no circle through the vertex has a second vertex")
        g1 = next(r for r in rings if r is not g2)
        beta = run.to_storage(g2[0])
        alpha = [run.to_storage(d) for d in g2[1:]]
        ring = [run.to_storage(d) for d in g1]
        rem: Direction = beta
        pos = 0
        landing = None
        wrap_guard = 0
        while landing is None:
            wrap_guard += 1
            if wrap_guard > 100000:
                raise SearchBudgetExhausted("wrapping did not terminate")
            c = ring[pos]
            ident, rest, first_longer = run.proper_fold(rem, c)
            if first_longer:
                ring[pos] = ident
                rem = rest
                pos = (pos + 1) % len(ring)
            else:
                ring[pos : pos + 1] = [ident, rest]
                landing = pos + 1
        g1p = ring[landing:]
        if not g1p:
            raise IdentityViolation("wrap landed outside its circle")
        run.fold_pair(reverse_path(tuple(alpha)), reverse_path(tuple(g1p)))

    rank = g.rank
    chain_edges = _extract_chains(run, base_vertex, rank)
    slot_of = {eid: k for k, eid in enumerate(run.slots)}
    chains = tuple(tuple(slot_of[e] for e in chain) for chain in chain_edges)
    slot_lengths = tuple(run.machine.length(eid) for eid in run.slots)
    petal_lengths = [
        sum((run.machine.length(e) for e in chain), Fraction(0))
        for chain in chain_edges
    ]
    terminal = rose_point(petal_lengths, marking=x.marking)

    m = len(initial_slots)
    matrices = tuple(fold_matrix(s.over + 1, s.absorbed + 1, m) for s in run.steps)
    vec = tuple(x.lengths[eid] for eid in initial_slots)
    for mat in matrices:
        vec = _mat_vec(mat, vec)
        if any(v <= 0 for v in vec):
            raise IdentityViolation("a fold matrix produced a nonpositive length")
    if vec != slot_lengths:
        raise IdentityViolation("fold matrices disagree with the folded lengths")

    return GraphToRoseFolds(
        source=x,
        base_vertex=base_vertex,
        steps=tuple(run.steps),
        matrices=matrices,
        initial_slots=initial_slots,
        slot_lengths=slot_lengths,
        chains=chains,
        chain_edges=chain_edges,
        orientations=tuple(sorted(run.orient.items())),
        terminal=terminal,
        machine_map=run.machine.map_from_source(),
        path_counts=tuple(counts),
        complexities=tuple(comps),
    )


def _compress_map(h_sub: GraphMap, folds: GraphToRoseFolds) -> GraphMap:
    """Straighten a map into the chained terminal graph to a map into the
    terminal rose: reduced paths cross whole chains, so each chain run
    becomes one petal crossing. Image directions are translated to canonical
    orientation before matching the chains."""
    z = folds.terminal.graph
    orient = dict(folds.orientations)
    first: dict[int, tuple[int, tuple[int, ...]]] = {}
    last: dict[int, tuple[int, tuple[int, ...]]] = {}
    for k, chain in enumerate(folds.chain_edges):
        first[chain[0]] = (k + 1, chain)
        last[chain[-1]] = (k + 1, chain)

    def compress(path: Sequence[Direction]) -> tuple[Direction, ...]:
        canon = [dd * orient[abs(dd)] for dd in path]
        out: list[Direction] = []
        k = 0
        while k < len(canon):
            dd = canon[k]
            if dd > 0:
                hit = first.get(dd)
                if hit is None:
                    raise IdentityViolation("image enters a chain mid-way")
                petal, chain = hit
                if tuple(canon[k : k + len(chain)]) != chain:
                    raise IdentityViolation("image does not follow its chain")
                out.append(petal)
                k += len(chain)
            else:
                hit = last.get(-dd)
                if hit is None:
                    raise IdentityViolation("image enters a chain mid-way")
                petal, chain = hit
                rev = tuple(-e for e in reversed(chain))
                if tuple(canon[k : k + len(chain)]) != rev:
                    raise IdentityViolation("image does not follow its chain")
                out.append(-petal)
                k += len(chain)
        return tuple(out)

    f = GraphMap(
        source=h_sub.source,
        target=z,
        vertex_images={v: 0 for v in h_sub.source.vertices},
        edge_images={eid: compress(img) for eid, img in h_sub.edge_images.items()},
    )
    f.check()
    return f


# -- rose to rose -------------------------------------------------------------


@dataclass(frozen=True)
class RoseToRoseLine:
    """A full line: unfold a rose to the graph point, then fold the graph
    point down to a new rose. The change of metric H satisfies
    lengths(start) = H @ lengths(end) exactly, and the substitution
    automorphism rewrites the start basis in terms of the end basis.
    The top point and requested turn are stored in the transitively
    oriented model of the input (same metric, some edges reversed)."""

    rose_to_graph: RoseToGraphLine
    top: MarkedMetricGraph
    decomposition: LoopDecomposition
    folds: GraphToRoseFolds
    terminal: MarkedMetricGraph
    change_of_metric: IntMatrix
    automorphism: AutomorphismWord
    requested_turn: Turn

    @property
    def is_proper(self) -> bool:
        """Every fold was a proper full fold; ties abort construction."""
        return True

    @property
    def fold_count(self) -> int:
        return len(self.folds.steps)


def _assemble_line(
    line0: RoseToGraphLine,
    top: MarkedMetricGraph,
    d: LoopDecomposition,
    folds: GraphToRoseFolds,
    t: Turn,
) -> RoseToRoseLine:
    s0 = folds.steps[0]
    pair0 = {folds.initial_slots[s0.over], folds.initial_slots[s0.absorbed]}
    if pair0 != {abs(t.a), abs(t.b)}:
        raise IdentityViolation("the first fold missed the requested turn")
    loops = _oriented_loops(d)
    x0 = line0.x0
    theta = GraphMap(
        source=x0.graph,
        target=top.graph,
        vertex_images={0: d.base_vertex},
        edge_images={pid: loops[k] for k, pid in enumerate(x0.graph.edge_ids)},
    )
    theta.check()
    h = _compress_map(theta.then(folds.machine_map), folds)
    big_h = transition_matrix(h)
    if not big_h.is_nonnegative:
        raise IdentityViolation("change of metric has a negative entry")
    if big_h.determinant() not in (1, -1):
        raise IdentityViolation(
            f"change of metric has determinant {big_h.determinant()}"
        )
    z_lengths = folds.terminal.length_vector()
    if _mat_vec(big_h, z_lengths) != x0.length_vector():
        raise IdentityViolation("change of metric does not carry the lengths back")
    word = AutomorphismWord(
        x0.graph.rank,
        (subst_letter([h.edge_images[pid] for pid in x0.graph.edge_ids]),),
    )
    if word.transition_matrix() != big_h:
        raise IdentityViolation("automorphism word disagrees with the map")
    return RoseToRoseLine(
        rose_to_graph=line0,
        top=top,
        decomposition=d,
        folds=folds,
        terminal=folds.terminal,
        change_of_metric=big_h,
        automorphism=word,
        requested_turn=t,
    )


def rose_to_rose(x: MarkedMetricGraph, t: Turn) -> RoseToRoseLine:
    """Build the full line through a trivalent graph point x seeded at the
    turn t: recover the rose and fold amounts from the loop decomposition,
    unfold (verifying the endpoint reproduces x), then fold x down to a new
    rose starting with the fold of t."""
    g = x.graph
    if not g.is_trivalent():
        raise GraphStructureError("the top point must be trivalent")
    if g.has_separating_edge():
        raise GraphStructureError("the top point must have no separating edge")
    d = loop_decomposition(g, t)
    o = d.orientation
    g_or = d.oriented_graph()
    x_or = MarkedMetricGraph(g_or, dict(x.lengths), x.marking)
    t_or = Turn(t.a * o[abs(t.a)], t.b * o[abs(t.b)])
    d_or = LoopDecomposition(
        graph=g_or,
        base_vertex=d.base_vertex,
        orientation={eid: 1 for eid in g_or.edge_ids},
        loops=_oriented_loops(d),
        turn_edges=d.turn_edges,
    )
    x0, s_bar = recover_rose(x_or, d_or)
    line0 = rose_to_graph(x0, s_bar)
    _match_endpoint(line0, x_or, d_or.loops)
    folds = graph_to_rose(x_or, t_or, d_or)
    return _assemble_line(line0, x_or, d_or, folds, t_or)


# -- retargeting a line at a new terminal point -------------------------------


def _replay_folds(y: MarkedMetricGraph, folds: GraphToRoseFolds) -> GraphToRoseFolds:
    """Run the stored fold sequence on a new metric. Edge ids are allocated
    deterministically, so slots and orientations evolve exactly as in the
    original run."""
    run = _FoldRun(y)
    if tuple(run.slots) != folds.initial_slots:
        raise IdentityViolation("replay starts from different slots")
    for k, st in enumerate(folds.steps):
        da = st.sign_over * run.slots[st.over]
        db = st.sign_absorbed * run.slots[st.absorbed]
        la = run.machine.length(abs(da))
        lb = run.machine.length(abs(db))
        if la <= lb:
            raise OutsideNeighborhoodError(
                f"replayed fold {k} is not allowable at the new metric"
            )
        run.proper_fold(da, db)
    rank = y.graph.rank
    chain_edges = _extract_chains(run, folds.base_vertex, rank)
    if chain_edges != folds.chain_edges:
        raise IdentityViolation("replayed folds produced different chains")
    if tuple(sorted(run.orient.items())) != folds.orientations:
        raise IdentityViolation("replayed folds produced different orientations")
    slot_lengths = tuple(run.machine.length(eid) for eid in run.slots)
    petal_lengths = [
        sum((run.machine.length(e) for e in chain), Fraction(0))
        for chain in chain_edges
    ]
    terminal = rose_point(petal_lengths, marking=y.marking)
    return GraphToRoseFolds(
        source=y,
        base_vertex=folds.base_vertex,
        steps=tuple(run.steps),
        matrices=folds.matrices,
        initial_slots=folds.initial_slots,
        slot_lengths=slot_lengths,
        chains=folds.chains,
        chain_edges=chain_edges,
        orientations=folds.orientations,
        terminal=terminal,
        machine_map=run.machine.map_from_source(),
        path_counts=(),
        complexities=(),
    )


def retarget(line: RoseToRoseLine, w) -> RoseToRoseLine:
    """Rebuild the line so its terminal rose carries the lengths w, keeping
    the entire fold combinatorics. Every intermediate length vector obtained
    by unwinding the fold matrices from the new terminal is checked positive
    and every replayed fold re-verified; replaying the stored combinatorics
    makes these checks pass on the whole open cone of positive targets, so
    the usable neighborhood of the terminal is the entire open simplex."""
    folds = line.folds
    rank = line.terminal.graph.rank
    if isinstance(w, MarkedMetricGraph):
        if len(w.graph.vertices) != 1 or w.graph.rank != rank:
            raise GraphStructureError("target must be a rose of the same rank")
        wl = w.length_vector()
    else:
        wl = tuple(to_fraction(v) for v in w)
        if len(wl) != rank:
            raise DimensionMismatch(f"need {rank} petal lengths, got {len(wl)}")
    if any(v <= 0 for v in wl):
        raise OutsideNeighborhoodError("target lengths must be positive")

    m = len(folds.initial_slots)
    wprime: list[Fraction | None] = [None] * m
    for k, chain in enumerate(folds.chains):
        zp = sum((folds.slot_lengths[p] for p in chain), Fraction(0))
        factor = wl[k] / zp
        for p in chain:
            wprime[p] = folds.slot_lengths[p] * factor
    vec = tuple(v for v in wprime if v is not None)
    if len(vec) != m:
        raise IdentityViolation("chains do not cover the slots")
    for st in reversed(folds.steps):
        vec = _mat_vec(unfold_matrix(st.over + 1, st.absorbed + 1, m), vec)
        if any(v <= 0 for v in vec):
            raise OutsideNeighborhoodError(
                "unwinding the folds leaves a nonpositive edge length; "
                "the target is outside the line's neighborhood"
            )
    y_lengths = {eid: vec[k] for k, eid in enumerate(folds.initial_slots)}
    y = MarkedMetricGraph(line.top.graph, y_lengths, line.top.marking)

    d = line.decomposition
    y0, u_bar = recover_rose(y, d)
    line0 = rose_to_graph(y0, u_bar)
    _match_endpoint(line0, y, d.loops)
    folds_y = _replay_folds(y, folds)
    if folds_y.terminal.length_vector() != wl:
        raise IdentityViolation("replayed line does not end at the target")
    new_line = _assemble_line(line0, y, d, folds_y, line.requested_turn)
    if new_line.change_of_metric != line.change_of_metric:
        raise IdentityViolation("retargeting changed the change of metric")
    return new_line


def rationalize(x: MarkedMetricGraph, t: Turn, eps) -> tuple[MarkedMetricGraph, RoseToRoseLine]:
    """Build a line through x, dithering the lengths within eps (Euclidean)
    when ties make the folding not proper. Each retry perturbs in a fresh
    deterministic direction; a near-tie can also make the subtractive fold
    counts blow up, so budget overruns are retried the same way."""
    eps = to_fraction(eps)
    if eps <= 0:
        raise GraphStructureError("eps must be positive")
    try:
        return x, rose_to_rose(x, t)
    except (NotProperError, SearchBudgetExhausted):
        pass
    ids = sorted(x.graph.edge_ids)
    shortest = min(x.lengths.values())
    for attempt in range(1, 41):
        rng = random.Random(attempt)
        mults = [rng.choice([1, -1]) * rng.randint(1, 97) for _ in ids]
        total = sum(abs(m) for m in mults)
        delta = min(eps / (2 * total), shortest / (2 * max(abs(m) for m in mults)))
        cand = {eid: x.lengths[eid] + delta * mults[k] for k, eid in enumerate(ids)}
        if any(v <= 0 for v in cand.values()):
            continue
        xp = MarkedMetricGraph(x.graph, cand, x.marking)
        try:
            return xp, rose_to_rose(xp, t)
        except (NotProperError, SearchBudgetExhausted):
            continue
    raise SearchBudgetExhausted("could not remove fold ties within the budget")
