"""Mutable fold engine built from two primitives: subdivision and
identification of equal-length directions at a common origin.

The machine tracks, for every edge and vertex of the source graph, its image
in the current graph; images are kept freely reduced, so a finished machine
hands back a GraphMap. Identifications that would merge two edges sharing
both endpoints are refused (the quotient would drop rank).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import (
    GraphStructureError,
    NotAllowableError,
    RankDropError,
)
from .graphs import (
    Direction,
    Graph,
    GraphMap,
    MarkedMetricGraph,
    Turn,
    is_allowable,
)
from .scalars import to_fraction


@dataclass
class _Edge:
    tail: int
    head: int
    length: Fraction


class _Node:
    """One direction inside an image path, stored as a doubly linked list so
    a fold rewrites only the occurrences of the edge it touches. The stored
    direction d is a label, not an edge id: identifying two edges relabels
    whichever label class has fewer occurrences and redirects the label
    tables, so a heavily crossed edge is absorbed in constant time. Sentinels
    carry d == 0; src names the source edge whose image owns the node."""

    __slots__ = ("d", "src", "prev", "next")

    def __init__(self, d: Direction, src: int):
        self.d = d
        self.src = src
        self.prev: _Node | None = None
        self.next: _Node | None = None


class FoldMachine:
    def __init__(self, x: MarkedMetricGraph):
        self.source = x
        self.edges: dict[int, _Edge] = {
            eid: _Edge(t, h, x.lengths[eid]) for eid, t, h in x.graph.edges
        }
        self.vertices: set[int] = set(x.graph.vertices)
        self._next_edge = max(self.edges) + 1
        self._next_vertex = max(self.vertices) + 1
        self._img: dict[int, tuple[_Node, _Node]] = {}
        self._occ: dict[int, set[_Node]] = {}
        self._lab2edge: dict[int, Direction] = {}
        self._edge2lab: dict[int, Direction] = {}
        for eid in self.edges:
            head, tail = _Node(0, eid), _Node(0, eid)
            node = _Node(eid, eid)
            head.next = node
            node.prev = head
            node.next = tail
            tail.prev = node
            self._img[eid] = (head, tail)
            self._occ[eid] = {node}
            self._lab2edge[eid] = eid
            self._edge2lab[eid] = eid
        self.vimages: dict[int, int] = {v: v for v in self.vertices}

    # -- views -----------------------------------------------------------

    def origin(self, d: Direction) -> int:
        e = self.edges[abs(d)]
        return e.tail if d > 0 else e.head

    def terminus(self, d: Direction) -> int:
        return self.origin(-d)

    def length(self, eid: int) -> Fraction:
        return self.edges[eid].length

    def path_length(self, path: Sequence[Direction]) -> Fraction:
        return sum((self.edges[abs(d)].length for d in path), Fraction(0))

    def directions_at(self, v: int) -> tuple[Direction, ...]:
        out = []
        for eid, e in self.edges.items():
            if e.tail == v:
                out.append(eid)
            if e.head == v:
                out.append(-eid)
        return tuple(sorted(out, key=lambda d: (abs(d), -d)))

    def image_of(self, d: Direction) -> tuple[Direction, ...]:
        img = self._image_path(abs(d))
        return tuple(img) if d > 0 else tuple(-x for x in reversed(img))

    def current_graph(self) -> Graph:
        return Graph.build(
            [(eid, e.tail, e.head) for eid, e in self.edges.items()],
            self.vertices,
        )

    def current_lengths(self) -> dict[int, Fraction]:
        return {eid: e.length for eid, e in self.edges.items()}

    def current_point(self, marking=None) -> MarkedMetricGraph:
        return MarkedMetricGraph(
            self.current_graph(),
            self.current_lengths(),
            marking if marking is not None else self.source.marking,
        )

    def map_from_source(self) -> GraphMap:
        f = GraphMap(
            source=self.source.graph,
            target=self.current_graph(),
            vertex_images=dict(self.vimages),
            edge_images={eid: tuple(self._image_path(eid)) for eid in self._img},
        )
        f.check()
        return f

    # -- primitives --------------------------------------------------------

    def subdivide(self, d: Direction, s) -> tuple[int, int, int]:
        """Split the edge under d at distance s from origin(d); returns
        (near_id, far_id, mid_vertex) with both pieces oriented along d."""
        s = to_fraction(s)
        eid = abs(d)
        e = self.edges[eid]
        if not 0 < s < e.length:
            raise GraphStructureError("subdivision point must be interior")
        mid = self._next_vertex
        self._next_vertex += 1
        near = self._next_edge
        far = self._next_edge + 1
        self._next_edge += 2
        if d > 0:
            self.edges[near] = _Edge(e.tail, mid, s)
            self.edges[far] = _Edge(mid, e.head, e.length - s)
        else:
            self.edges[near] = _Edge(e.head, mid, s)
            self.edges[far] = _Edge(mid, e.tail, e.length - s)
        del self.edges[eid]
        self.vertices.add(mid)
        old = self._lab_of_dir(d)
        self._lab2edge[near] = near
        self._lab2edge[far] = far
        self._edge2lab[near] = near
        self._edge2lab[far] = far
        del self._lab2edge[abs(old)]
        del self._edge2lab[eid]
        self._expand_label(old, (near, far))
        return near, far, mid

    def identify(self, absorb: Direction, absorbed: Direction, allow_rank_drop: bool = False) -> None:
        """Identify two equal-length directions at a common origin; the edge
        under `absorb` survives."""
        if abs(absorb) == abs(absorbed):
            raise NotAllowableError("cannot identify an edge with itself")
        ea = self.edges[abs(absorb)]
        eb = self.edges[abs(absorbed)]
        if self.origin(absorb) != self.origin(absorbed):
            raise GraphStructureError("identified directions need a common origin")
        if ea.length != eb.length:
            raise GraphStructureError("identified directions need equal lengths")
        wa = self.terminus(absorb)
        wb = self.terminus(absorbed)
        if wa == wb and not allow_rank_drop:
            raise RankDropError(
                "identifying two edges with both endpoints shared drops rank"
            )
        self._merge_labels(absorb, absorbed)
        del self.edges[abs(absorbed)]
        self._merge_vertex(wb, wa)

    def fold_prefixes(self, absorb: Direction, absorbed: Direction, s) -> tuple[Direction, Direction | None, Direction | None]:
        """Identify the initial segments of length s of two directions at a
        common origin. Returns (identified, rest_absorb, rest_absorbed)."""
        s = to_fraction(s)
        la = self.length(abs(absorb))
        lb = self.length(abs(absorbed))
        if not (0 < s <= la and s <= lb):
            raise GraphStructureError("fold length exceeds an edge")
        rest_a: Direction | None = None
        rest_b: Direction | None = None
        if s < la:
            near, far, _ = self.subdivide(absorb, s)
            absorb = near
            rest_a = far
        if s < lb:
            near, far, _ = self.subdivide(absorbed, s)
            absorbed = near
            rest_b = far
        self.identify(absorb, absorbed)
        return abs(absorb), rest_a, rest_b

    def identify_image_prefixes(self, da: Direction, db: Direction, s) -> Fraction:
        """Identify the initial segments of length s of the images of two
        source directions, skipping stretches the images already share.
        Returns the fresh length collapsed by the new identifications."""
        s = to_fraction(s)
        if s < 0:
            raise GraphStructureError("identification length must be nonnegative")
        before = sum((e.length for e in self.edges.values()), Fraction(0))
        consumed = Fraction(0)
        guard = 0
        while consumed < s:
            guard += 1
            if guard > 100000:
                raise GraphStructureError("prefix identification did not terminate")
            pa = self._image_direction_at(da, consumed)
            pb = self._image_direction_at(db, consumed)
            if pa == pb:
                consumed += self.length(abs(pa))
                continue
            if abs(pa) == abs(pb):
                raise RankDropError("prefix identification folds an edge onto its reverse")
            step = min(self.length(abs(pa)), self.length(abs(pb)), s - consumed)
            self.fold_prefixes(pa, pb, step)
            consumed += step
        after = sum((e.length for e in self.edges.values()), Fraction(0))
        return before - after

    def _image_direction_at(self, d: Direction, offset: Fraction) -> Direction:
        run = Fraction(0)
        for p in self.image_of(d):
            if run == offset:
                return p
            run += self.length(abs(p))
            if run > offset:
                raise GraphStructureError("identification offset falls inside an edge")
        raise GraphStructureError("identification ran past the image path")

    def fold_direction_along_path(self, d: Direction, path: Sequence[Direction]) -> None:
        """Identify all of the edge under d with an existing path of the same
        total length and the same origin, piece by piece."""
        if self.path_length(path) != self.length(abs(d)):
            raise GraphStructureError("path length must match the folded edge")
        rest: Direction | None = d
        for p in path:
            if rest is None:
                raise GraphStructureError("folded edge ran out before the path")
            step = self.length(abs(p))
            lr = self.length(abs(rest))
            if lr == step:
                self.identify(p, rest)
                rest = None
            else:
                near, far, _ = self.subdivide(rest, step)
                self.identify(p, near)
                rest = far
        if rest is not None:
            raise GraphStructureError("path ended before the folded edge")

    def unsubdivide(self, keep: set[int] | None = None) -> None:
        """Erase superfluous valence-2 vertices, concatenating their edges."""
        keep = set(keep or ())
        changed = True
        while changed:
            changed = False
            for v in sorted(self.vertices):
                if v in keep or v in self.vimages.values():
                    continue
                at = self.directions_at(v)
                if len(at) != 2:
                    continue
                d1, d2 = at
                if abs(d1) == abs(d2):
                    continue  # isolated circle; leave its vertex alone
                self._concatenate(v, d1, d2)
                changed = True
                break

    def _concatenate(self, v: int, d1: Direction, d2: Direction) -> None:
        # d1, d2 point away from v; the new edge runs ter(d1) -> ter(d2).
        # Inside an image path the erased vertex only ever appears between the
        # pair (-d1, d2) or its reverse (-d2, d1); a lone crossing of either
        # edge would leave the path stranded there.
        new = self._next_edge
        self._next_edge += 1
        self.edges[new] = _Edge(
            self.terminus(d1),
            self.terminus(d2),
            self.length(abs(d1)) + self.length(abs(d2)),
        )
        l1 = self._lab_of_dir(d1)
        l2 = self._lab_of_dir(d2)
        self._lab2edge[new] = new
        self._edge2lab[new] = new
        occ1 = self._occ.pop(abs(l1), set())
        occ2 = self._occ.pop(abs(l2), set())
        for node in occ1:
            if node.d == -l1:
                mate = node.next
                if mate.d != l2:
                    raise GraphStructureError(
                        "an image path stops at an erased vertex"
                    )
                self._splice_pair(node, mate, new)
            else:
                mate = node.prev
                if mate.d != -l2:
                    raise GraphStructureError(
                        "an image path stops at an erased vertex"
                    )
                self._splice_pair(mate, node, -new)
        for node in occ2:
            if node.next is not None:
                raise GraphStructureError(
                    "an image path stops at an erased vertex"
                )
        del self._lab2edge[abs(l1)]
        del self._lab2edge[abs(l2)]
        del self._edge2lab[abs(d1)]
        del self._edge2lab[abs(d2)]
        del self.edges[abs(d1)]
        del self.edges[abs(d2)]
        self.vertices.discard(v)

    # -- internals ---------------------------------------------------------

    def _lab_of_dir(self, d: Direction) -> Direction:
        lab = self._edge2lab[abs(d)]
        return lab if d > 0 else -lab

    def _dir_of_lab(self, ld: Direction) -> Direction:
        d = self._lab2edge[abs(ld)]
        return d if ld > 0 else -d

    def _image_path(self, eid: int) -> list[Direction]:
        head, tail = self._img[eid]
        out: list[Direction] = []
        node = head.next
        while node is not tail:
            out.append(self._dir_of_lab(node.d))
            node = node.next
        return out

    def _splice_pair(self, a: _Node, b: _Node, ld: Direction) -> None:
        # replace the adjacent pair (a, b) by a single fresh label
        node = _Node(ld, a.src)
        self._occ.setdefault(abs(ld), set()).add(node)
        node.prev = a.prev
        node.next = b.next
        a.prev.next = node
        b.next.prev = node
        a.prev = a.next = None
        b.prev = b.next = None

    def _cancel_from(self, a: _Node) -> None:
        # free reduction rippling outward from the pair (a, a.next)
        while a.next is not None:
            b = a.next
            if a.d == 0 or b.d == 0 or a.d != -b.d:
                return
            p, n = a.prev, b.next
            self._occ[abs(a.d)].discard(a)
            self._occ[abs(b.d)].discard(b)
            p.next = n
            n.prev = p
            a.prev = a.next = None
            b.prev = b.next = None
            a = p

    def _expand_label(self, old: Direction, new: tuple[Direction, ...]) -> None:
        # Substitute every occurrence of +-old by a block of fresh labels.
        # Fresh labels cannot cancel against neighbours, and a reduced path
        # never holds old next to -old, so no reduction is needed.
        back = tuple(-x for x in reversed(new))
        for node in self._occ.pop(abs(old), set()):
            rep = new if node.d == old else back
            cur, right = node.prev, node.next
            for ld in rep:
                nn = _Node(ld, node.src)
                self._occ.setdefault(abs(ld), set()).add(nn)
                nn.prev = cur
                cur.next = nn
                cur = nn
            cur.next = right
            right.prev = cur
            node.prev = node.next = None

    def _merge_labels(self, absorb: Direction, absorbed: Direction) -> None:
        # Redirect every crossing of the absorbed edge onto the absorbing one
        # by merging their label classes; only the smaller class is relabeled.
        # The two classes were separately reduced, so fresh cancellations pair
        # a relabeled node with one of the other class and seeding the ripple
        # at each relabeled node finds them all.
        live = self._lab_of_dir(absorb)
        dead = self._lab_of_dir(absorbed)
        occ_live = self._occ.setdefault(abs(live), set())
        occ_dead = self._occ.setdefault(abs(dead), set())
        if len(occ_dead) <= len(occ_live):
            moved, src, dst = occ_dead, dead, live
            self._occ.pop(abs(dead))
            del self._lab2edge[abs(dead)]
        else:
            moved, src, dst = occ_live, live, dead
            self._occ.pop(abs(live))
            del self._lab2edge[abs(live)]
            self._lab2edge[abs(dead)] = absorb if dead > 0 else -absorb
            self._edge2lab[abs(absorb)] = dead if absorb > 0 else -dead
        del self._edge2lab[abs(absorbed)]
        keep = self._occ.setdefault(abs(dst), set())
        touched: set[int] = set()
        for node in moved:
            node.d = dst if node.d == src else -dst
            touched.add(node.src)
        keep.update(moved)
        for node in moved:
            if node.prev is not None:
                self._cancel_from(node.prev)
            if node.next is not None:
                self._cancel_from(node)
        for eid in touched:
            head, tail = self._img[eid]
            if head.next is tail:
                raise GraphStructureError("an edge image collapsed during a fold")

    def _merge_vertex(self, old: int, into: int) -> None:
        if old == into:
            return
        for e in self.edges.values():
            if e.tail == old:
                e.tail = into
            if e.head == old:
                e.head = into
        for v, w in self.vimages.items():
            if w == old:
                self.vimages[v] = into
        self.vertices.discard(old)


def fold_turn(x: MarkedMetricGraph, t: Turn, s=None) -> tuple[MarkedMetricGraph, GraphMap]:
    """Metric fold of an allowable turn: absorb a prefix of t.b into t.a.
    With s omitted the fold is full (all of t.b); otherwise partial."""
    t.check(x.graph)
    if not is_allowable(x, t):
        raise NotAllowableError(f"turn ({t.a},{t.b}) is not allowable here")
    machine = FoldMachine(x)
    lb = x.lengths[abs(t.b)]
    s = lb if s is None else to_fraction(s)
    if not 0 < s <= lb:
        raise GraphStructureError("fold amount must lie in (0, length of t.b]")
    machine.fold_prefixes(t.a, t.b, s)
    return machine.current_point(), machine.map_from_source()


def combinatorial_fold(g: Graph, t: Turn, kind: str, amount=None) -> tuple[Graph, GraphMap]:
    """Stallings fold of a turn in a combinatorial graph.

    kind "proper-full" identifies the second edge with a proper initial
    segment of the first, "full" identifies both edges entirely (the rank may
    drop when both endpoints are shared), "partial" identifies initial
    segments of both (amount in (0,1), default 1/2, as a fraction of unit
    edge length). Lengths are scaffolding only.
    """
    t.check(g)
    if abs(t.a) == abs(t.b):
        raise NotAllowableError("cannot fold an edge over itself")
    lengths = {eid: Fraction(1) for eid in g.edge_ids}
    if kind == "proper-full":
        lengths[abs(t.b)] = Fraction(1, 2)
    machine = FoldMachine(MarkedMetricGraph(g, lengths))
    if kind == "proper-full":
        machine.fold_prefixes(t.a, t.b, Fraction(1, 2))
    elif kind == "full":
        machine.identify(t.a, t.b, allow_rank_drop=True)
    elif kind == "partial":
        s = Fraction(1, 2) if amount is None else to_fraction(amount)
        if not 0 < s < 1:
            raise GraphStructureError("partial fold amount must lie in (0,1)")
        machine.fold_prefixes(t.a, t.b, s)
    else:
        raise GraphStructureError(f"unknown fold kind {kind!r}")
    return machine.current_graph(), machine.map_from_source()
