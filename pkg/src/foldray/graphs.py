"""Finite multigraphs with oriented edges, metric structure, and markings.

An edge is a triple (id, tail, head); the positive direction of edge k is the
signed integer +k (tail to head) and -k is its reverse. A direction d is
"at" its origin vertex. Turns are ordered pairs of distinct directions with a
common origin. Loops (tail == head) are allowed.

MarkedMetricGraph carries exact rational edge lengths and a marking word; the
group acts on the right by precomposing the marking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from .automorphisms import AutomorphismWord
from .errors import (
    GraphStructureError,
    NotATurnError,
    UsageError,
)
from .matrices import IntMatrix
from .scalars import to_fraction

Direction = int  # signed edge id
Edge = tuple[int, int, int]  # (id, tail, head)


@dataclass(frozen=True)
class Graph:
    edges: tuple[Edge, ...]
    vertices: frozenset[int]

    @staticmethod
    def build(edges: Iterable[tuple[int, int, int]], extra_vertices: Iterable[int] = ()) -> "Graph":
        rows = tuple(sorted((int(i), int(t), int(h)) for i, t, h in edges))
        ids = [r[0] for r in rows]
        if len(set(ids)) != len(ids):
            raise GraphStructureError("duplicate edge ids")
        if any(i <= 0 for i in ids):
            raise GraphStructureError("edge ids must be positive integers")
        verts = frozenset(int(v) for v in extra_vertices)
        for _, t, h in rows:
            verts = verts | {t, h}
        return Graph(rows, verts)

    # -- basic accessors -------------------------------------------------

    @property
    def edge_ids(self) -> tuple[int, ...]:
        return tuple(e[0] for e in self.edges)

    def edge(self, eid: int) -> Edge:
        for e in self.edges:
            if e[0] == eid:
                return e
        raise GraphStructureError(f"no edge {eid}")

    def has_edge(self, eid: int) -> bool:
        return any(e[0] == eid for e in self.edges)

    def origin(self, d: Direction) -> int:
        e = self.edge(abs(d))
        return e[1] if d > 0 else e[2]

    def terminus(self, d: Direction) -> int:
        return self.origin(-d)

    def directions(self) -> tuple[Direction, ...]:
        return tuple(s * e[0] for e in self.edges for s in (1, -1))

    def directions_at(self, v: int) -> tuple[Direction, ...]:
        out = []
        for eid, t, h in self.edges:
            if t == v:
                out.append(eid)
            if h == v:
                out.append(-eid)
        return tuple(sorted(out, key=lambda d: (abs(d), -d)))

    def valence(self, v: int) -> int:
        return len(self.directions_at(v))

    @property
    def rank(self) -> int:
        return len(self.edges) - len(self.vertices) + 1

    def is_trivalent(self) -> bool:
        return all(self.valence(v) == 3 for v in self.vertices)

    # -- connectivity ----------------------------------------------------

    def _adjacency(self) -> dict[int, list[tuple[int, int]]]:
        adj: dict[int, list[tuple[int, int]]] = {v: [] for v in self.vertices}
        for eid, t, h in self.edges:
            adj[t].append((h, eid))
            adj[h].append((t, eid))
        return adj

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        adj = self._adjacency()
        seen = set()
        stack = [next(iter(self.vertices))]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(w for w, _ in adj[v])
        return seen == set(self.vertices)

    def has_separating_edge(self) -> bool:
        """True when removing some single edge disconnects the graph."""
        adj = self._adjacency()
        for eid, t, h in self.edges:
            if t == h:
                continue  # a loop never separates
            seen = {t}
            stack = [t]
            while stack:
                v = stack.pop()
                for w, through in adj[v]:
                    if through == eid or w in seen:
                        continue
                    seen.add(w)
                    stack.append(w)
            if h not in seen:
                return True
        return False

    def is_transitive(self) -> bool:
        """Strong connectivity of the positive-direction digraph."""
        if not self.vertices:
            return True
        for forward in (True, False):
            seen = set()
            stack = [next(iter(sorted(self.vertices)))]
            while stack:
                v = stack.pop()
                if v in seen:
                    continue
                seen.add(v)
                for eid, t, h in self.edges:
                    if forward and t == v:
                        stack.append(h)
                    if not forward and h == v:
                        stack.append(t)
            if seen != set(self.vertices):
                return False
        return True

    def reversed_edges(self, flip: Iterable[int]) -> "Graph":
        flip_set = set(flip)
        rows = tuple(
            (eid, h, t) if eid in flip_set else (eid, t, h) for eid, t, h in self.edges
        )
        return Graph.build(rows, self.vertices)


def rose_graph(rank: int, vertex: int = 0) -> Graph:
    if rank < 1:
        raise GraphStructureError("rose needs rank >= 1")
    return Graph.build([(k, vertex, vertex) for k in range(1, rank + 1)])


def theta_graph() -> Graph:
    """Two vertices joined by three parallel edges, all pointing to vertex 1."""
    return Graph.build([(1, 0, 1), (2, 0, 1), (3, 0, 1)])


# -- turns and paths ------------------------------------------------------


@dataclass(frozen=True)
class Turn:
    """Ordered pair of distinct directions at a common origin.

    Fold operations read it as "fold first over second".
    """

    a: Direction
    b: Direction

    def check(self, g: Graph) -> None:
        if self.a == self.b:
            raise NotATurnError("turn needs two distinct directions")
        if g.origin(self.a) != g.origin(self.b):
            raise NotATurnError(
                f"directions {self.a},{self.b} have different origins"
            )

    def sign(self) -> str:
        if self.a > 0 and self.b > 0:
            return "positive"
        if self.a < 0 and self.b < 0:
            return "negative"
        return "mixed"

    def unordered(self) -> frozenset:
        return frozenset((self.a, self.b))


def path_is_continuous(g: Graph, path: Sequence[Direction]) -> bool:
    return all(
        g.terminus(path[k]) == g.origin(path[k + 1]) for k in range(len(path) - 1)
    )


def path_length(lengths: Mapping[int, Fraction], path: Sequence[Direction]) -> Fraction:
    return sum((lengths[abs(d)] for d in path), Fraction(0))


def reduce_path(path: Sequence[Direction]) -> tuple[Direction, ...]:
    out: list[Direction] = []
    for d in path:
        if out and out[-1] == -d:
            out.pop()
        else:
            out.append(d)
    return tuple(out)


def reverse_path(path: Sequence[Direction]) -> tuple[Direction, ...]:
    return tuple(-d for d in reversed(path))


# -- graph maps ------------------------------------------------------------


@dataclass(frozen=True)
class GraphMap:
    """Simplicial-style map: edges to edge paths, vertices to vertices.

    edge_images[k] is the image path of direction +k; images are stored
    reduced. An empty image (edge collapse) is not supported.
    """

    source: Graph
    target: Graph
    vertex_images: Mapping[int, int]
    edge_images: Mapping[int, tuple[Direction, ...]]

    def check(self) -> None:
        for v in self.source.vertices:
            if v not in self.vertex_images:
                raise GraphStructureError(f"vertex {v} has no image")
        for eid, t, h in self.source.edges:
            img = self.edge_images.get(eid)
            if not img:
                raise GraphStructureError(f"edge {eid} has empty image")
            if reduce_path(img) != tuple(img):
                raise GraphStructureError(f"image of edge {eid} is not reduced")
            if not path_is_continuous(self.target, img):
                raise GraphStructureError(f"image of edge {eid} is not a path")
            if self.target.origin(img[0]) != self.vertex_images[t]:
                raise GraphStructureError(f"image of edge {eid} starts at wrong vertex")
            if self.target.terminus(img[-1]) != self.vertex_images[h]:
                raise GraphStructureError(f"image of edge {eid} ends at wrong vertex")

    def direction_image(self, d: Direction) -> tuple[Direction, ...]:
        img = self.edge_images[abs(d)]
        return tuple(img) if d > 0 else reverse_path(img)

    def path_image(self, path: Sequence[Direction], reduced: bool = True) -> tuple[Direction, ...]:
        out: list[Direction] = []
        for d in path:
            for x in self.direction_image(d):
                if reduced and out and out[-1] == -x:
                    out.pop()
                else:
                    out.append(x)
        return tuple(out)

    def then(self, other: "GraphMap") -> "GraphMap":
        """Composite map: self first, then other."""
        if self.target.edges != other.source.edges:
            raise GraphStructureError("composition needs matching middle graph")
        return GraphMap(
            source=self.source,
            target=other.target,
            vertex_images={
                v: other.vertex_images[w] for v, w in self.vertex_images.items()
            },
            edge_images={
                eid: other.path_image(img) for eid, img in self.edge_images.items()
            },
        )

    @staticmethod
    def identity_map(g: Graph) -> "GraphMap":
        return GraphMap(
            source=g,
            target=g,
            vertex_images={v: v for v in g.vertices},
            edge_images={eid: (eid,) for eid in g.edge_ids},
        )


def transition_matrix_of_map(f: GraphMap) -> IntMatrix:
    """Unsigned crossing counts: row = source edge, column = target edge."""
    src_ids = f.source.edge_ids
    tgt_index = {eid: k for k, eid in enumerate(f.target.edge_ids)}
    if len(src_ids) != len(tgt_index):
        raise UsageError("transition matrix requires equal edge counts")
    rows = []
    for eid in src_ids:
        row = [0] * len(tgt_index)
        for d in f.edge_images[eid]:
            row[tgt_index[abs(d)]] += 1
        rows.append(tuple(row))
    return IntMatrix(rows)


def transition_matrix(obj) -> IntMatrix:
    if isinstance(obj, GraphMap):
        return transition_matrix_of_map(obj)
    if isinstance(obj, AutomorphismWord):
        return obj.transition_matrix()
    raise UsageError(f"no transition matrix for {type(obj).__name__}")


def gates(f: GraphMap) -> dict[int, tuple[frozenset, ...]]:
    """Partition of the directions at each source vertex by the first image
    edge; two directions in one class make an illegal (folded) turn."""
    by_vertex: dict[int, dict[Direction, list[Direction]]] = {}
    for v in f.source.vertices:
        classes: dict[Direction, list[Direction]] = {}
        for d in f.source.directions_at(v):
            first = f.direction_image(d)[0]
            classes.setdefault(first, []).append(d)
        by_vertex[v] = classes
    return {
        v: tuple(frozenset(group) for group in classes.values())
        for v, classes in by_vertex.items()
    }


def turn_is_legal(f: GraphMap, a: Direction, b: Direction) -> bool:
    if a == b:
        return False
    return f.direction_image(a)[0] != f.direction_image(b)[0]


def turns_without_gate_split(f: GraphMap) -> tuple[int, ...]:
    """Vertices carrying fewer than two gates: no train track structure."""
    return tuple(
        v for v, parts in sorted(gates(f).items()) if len(parts) < 2
    )


def is_legal_loop(f: GraphMap, loop: Sequence[Direction]) -> bool:
    """Loop legality: cyclically reduced, and no crossed turn is folded.
    The empty loop is vacuously legal."""
    if not loop:
        return True
    if not path_is_continuous(f.source, loop):
        return False
    if f.source.terminus(loop[-1]) != f.source.origin(loop[0]):
        return False
    for k in range(len(loop)):
        incoming = loop[k - 1]
        outgoing = loop[k]
        if outgoing == -incoming:
            return False  # backtracking: not cyclically reduced
        if not turn_is_legal(f, -incoming, outgoing):
            return False
    return True


# -- marked metric graphs ---------------------------------------------------


@dataclass(frozen=True)
class MarkedMetricGraph:
    graph: Graph
    lengths: Mapping[int, Fraction]
    marking: AutomorphismWord = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        lens = {int(k): to_fraction(v) for k, v in dict(self.lengths).items()}
        if set(lens) != set(self.graph.edge_ids):
            raise GraphStructureError("lengths must cover exactly the edge set")
        if any(l <= 0 for l in lens.values()):
            raise GraphStructureError("edge lengths must be positive")
        object.__setattr__(self, "lengths", lens)
        if self.marking is None:
            object.__setattr__(
                self, "marking", AutomorphismWord.identity_word(self.graph.rank)
            )

    @property
    def volume(self) -> Fraction:
        return sum(self.lengths.values(), Fraction(0))

    @property
    def normalized(self) -> bool:
        return self.volume == 1

    def length_vector(self) -> tuple[Fraction, ...]:
        return tuple(self.lengths[eid] for eid in self.graph.edge_ids)

    def normalized_point(self) -> "MarkedMetricGraph":
        vol = self.volume
        return MarkedMetricGraph(
            self.graph,
            {k: v / vol for k, v in self.lengths.items()},
            self.marking,
        )

    def scaled(self, factor) -> "MarkedMetricGraph":
        factor = to_fraction(factor)
        return MarkedMetricGraph(
            self.graph,
            {k: v * factor for k, v in self.lengths.items()},
            self.marking,
        )


def rose_point(lengths: Sequence, marking: AutomorphismWord | None = None) -> MarkedMetricGraph:
    lens = [to_fraction(x) for x in lengths]
    g = rose_graph(len(lens))
    return MarkedMetricGraph(g, {k + 1: lens[k] for k in range(len(lens))}, marking)


def act(x: MarkedMetricGraph, w: AutomorphismWord) -> MarkedMetricGraph:
    """Right action: precompose the marking (w is applied before it)."""
    if w.rank != x.marking.rank:
        raise UsageError("rank mismatch in action")
    return MarkedMetricGraph(x.graph, x.lengths, w.then(x.marking))


def is_allowable(x: MarkedMetricGraph, t: Turn) -> bool:
    """A fold of t absorbs t.b into t.a, so t.a must be at least as long;
    strictly longer when the far endpoints agree, else the fold drops rank."""
    t.check(x.graph)
    if abs(t.a) == abs(t.b):
        return False
    la = x.lengths[abs(t.a)]
    lb = x.lengths[abs(t.b)]
    if x.graph.terminus(t.a) == x.graph.terminus(t.b):
        return la > lb
    return la >= lb


# -- isomorphism ------------------------------------------------------------


def _edges_between(g: Graph, u: int, w: int) -> list[Edge]:
    return [e for e in g.edges if {e[1], e[2]} == {u, w} or (u == w and e[1] == e[2] == u)]


def graph_isomorphisms(
    g1: Graph, g2: Graph, lengths1: Mapping[int, Fraction] | None = None,
    lengths2: Mapping[int, Fraction] | None = None,
) -> Iterator[dict[int, Direction]]:
    """Yield edge correspondences (edge id -> signed edge id) realized by
    graph isomorphisms; when both length maps are given, only
    length-preserving correspondences are produced."""
    if len(g1.edges) != len(g2.edges) or len(g1.vertices) != len(g2.vertices):
        return
    deg1 = sorted(g1.valence(v) for v in g1.vertices)
    deg2 = sorted(g2.valence(v) for v in g2.vertices)
    if deg1 != deg2:
        return
    verts1 = sorted(g1.vertices, key=lambda v: (-g1.valence(v), v))
    candidates = {
        v: [w for w in sorted(g2.vertices) if g2.valence(w) == g1.valence(v)]
        for v in verts1
    }

    def extend(k: int, vmap: dict[int, int], used: set[int]):
        if k == len(verts1):
            yield dict(vmap)
            return
        v = verts1[k]
        for w in candidates[v]:
            if w in used:
                continue
            ok = True
            for u, mapped in vmap.items():
                if len(_edges_between(g1, v, u)) != len(_edges_between(g2, w, mapped)):
                    ok = False
                    break
            if ok and len(_edges_between(g1, v, v)) == len(_edges_between(g2, w, w)):
                vmap[v] = w
                used.add(w)
                yield from extend(k + 1, vmap, used)
                del vmap[v]
                used.discard(w)

    for vmap in extend(0, {}, set()):
        pairs = sorted({frozenset((e[1], e[2])) for e in g1.edges}, key=sorted)
        per_pair: list[list[list[tuple[int, Direction]]]] = []
        feasible = True
        for pair in pairs:
            pv = sorted(pair)
            u = pv[0]
            w = pv[-1]
            e1s = _edges_between(g1, u, w)
            e2s = _edges_between(g2, vmap[u], vmap[w])
            if len(e1s) != len(e2s):
                feasible = False
                break
            options: list[list[tuple[int, Direction]]] = []
            for perm in itertools.permutations(e2s):
                assignment = []
                good = True
                for e_src, e_tgt in zip(e1s, perm):
                    if lengths1 is not None and lengths2 is not None:
                        if lengths1[e_src[0]] != lengths2[e_tgt[0]]:
                            good = False
                            break
                    # orientation sign: does tail map to tail?
                    if vmap[e_src[1]] == e_tgt[1] and vmap[e_src[2]] == e_tgt[2]:
                        sign = 1
                    elif vmap[e_src[1]] == e_tgt[2] and vmap[e_src[2]] == e_tgt[1]:
                        sign = -1
                    else:
                        good = False
                        break
                    assignment.append((e_src[0], sign * e_tgt[0]))
                if good:
                    options.append(assignment)
            if not options:
                feasible = False
                break
            per_pair.append(options)
        if not feasible:
            continue
        for combo in itertools.product(*per_pair):
            emap: dict[int, Direction] = {}
            for assignment in combo:
                for src, tgt in assignment:
                    emap[src] = tgt
            yield emap


def is_isomorphic(g1: Graph, g2: Graph) -> bool:
    return next(graph_isomorphisms(g1, g2), None) is not None


def metric_isomorphic(x: MarkedMetricGraph, y: MarkedMetricGraph) -> bool:
    """Same combinatorial type with equal lengths under some isomorphism."""
    return (
        next(
            graph_isomorphisms(x.graph, y.graph, x.lengths, y.lengths), None
        )
        is not None
    )
