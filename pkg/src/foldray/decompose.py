"""Rooted spanning trees without bad edges, and decompositions of trivalent
graphs into positive embedded loops.

A rooted tree orders vertices by ancestry; an edge is bad when its endpoints
are incomparable. Trees are repaired by edge swaps that strictly decrease the
complexity (-min distance of a bad edge to the root, count of minimizers).
The loop decomposition then orients all edges so that the graph is a union of
embedded positive loops overlapping in arcs through the base vertex; loops
are found by a constrained backtracking search and re-checked by an
independent verifier.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .errors import DecompositionError, GraphStructureError
from .graphs import Direction, Graph, Turn

NEG_INF = -math.inf


@dataclass(frozen=True)
class RootedTree:
    root: int
    parent: Mapping[int, tuple[int, int]]  # vertex -> (parent vertex, edge id)

    @property
    def edge_ids(self) -> frozenset:
        return frozenset(eid for _, eid in self.parent.values())

    def depth(self, v: int) -> int:
        d = 0
        while v != self.root:
            v = self.parent[v][0]
            d += 1
        return d

    def leq(self, v: int, w: int) -> bool:
        """v lies on the tree path from the root to w."""
        while True:
            if w == v:
                return True
            if w == self.root:
                return False
            w = self.parent[w][0]

    def comparable(self, v: int, w: int) -> bool:
        return self.leq(v, w) or self.leq(w, v)

    def meet(self, v: int, w: int) -> int:
        anc = {v}
        while v != self.root:
            v = self.parent[v][0]
            anc.add(v)
        while w not in anc:
            w = self.parent[w][0]
        return w

    def path_up(self, v: int, stop: int) -> list[tuple[int, int]]:
        """Vertex-edge steps from v up to stop: [(child, edge id), ...]."""
        out = []
        while v != stop:
            p, eid = self.parent[v]
            out.append((v, eid))
            v = p
        return out

    def child_of(self, eid: int) -> int:
        for v, (_, e) in self.parent.items():
            if e == eid:
                return v
        raise GraphStructureError(f"edge {eid} is not a tree edge")


def _rebuild_parent(g: Graph, tree_edges: set[int], root: int) -> dict[int, tuple[int, int]]:
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in g.vertices}
    for eid, t, h in g.edges:
        if eid in tree_edges:
            adj[t].append((h, eid))
            adj[h].append((t, eid))
    parent: dict[int, tuple[int, int]] = {}
    seen = {root}
    queue = [root]
    while queue:
        v = queue.pop(0)
        for w, eid in sorted(adj[v]):
            if w not in seen:
                seen.add(w)
                parent[w] = (v, eid)
                queue.append(w)
    if seen != set(g.vertices):
        raise DecompositionError("edge set does not span the graph as a tree")
    return parent


def _edge_sides(g: Graph, t1: RootedTree, eid: int) -> tuple[int, int]:
    """(lower, upper) endpoints of a comparable edge."""
    _, a, b = g.edge(eid)
    if t1.leq(a, b):
        return a, b
    if t1.leq(b, a):
        return b, a
    raise DecompositionError(f"edge {eid} has incomparable endpoints")


def bad_edge_count(g: Graph, tree: RootedTree) -> int:
    count = 0
    for _, a, b in g.edges:
        if not tree.comparable(a, b):
            count += 1
    return count


def tree_complexity(g: Graph, tree: RootedTree) -> tuple:
    """(-min distance to root over bad edges, number of minimizers);
    a good tree scores (-inf, 0)."""
    dists = []
    for eid, a, b in g.edges:
        if not tree.comparable(a, b):
            q = tree.meet(a, b)
            dists.append(tree.depth(q))
    if not dists:
        return (NEG_INF, 0)
    low = min(dists)
    return (-low, dists.count(low))


def good_spanning_tree(g: Graph, base_edge: int) -> RootedTree:
    """Spanning tree without bad edges containing base_edge, rooted at its
    head; the root keeps tree valence 1 when the graph is trivalent without
    separating edges."""
    _, tail, head = g.edge(base_edge)
    if tail == head:
        raise GraphStructureError("the base edge must not be a loop")
    if not g.is_connected():
        raise GraphStructureError("graph must be connected")
    root = head

    # initial tree: per component of G - root; the component of the base edge
    # hangs off it, keeping the root at tree valence 1 there
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in g.vertices}
    for eid, t, h in g.edges:
        adj[t].append((h, eid))
        adj[h].append((t, eid))
    comp: dict[int, int] = {}
    labels = 0
    for v in sorted(g.vertices - {root}):
        if v in comp:
            continue
        labels += 1
        stack = [v]
        comp[v] = labels
        while stack:
            u = stack.pop()
            for w, _ in adj[u]:
                if w != root and w not in comp:
                    comp[w] = labels
                    stack.append(w)
    tree_edges = {base_edge}
    seen = {root, tail}
    # grow the base component from the far endpoint of the base edge,
    # avoiding the root entirely
    queue = [tail]
    while queue:
        v = queue.pop(0)
        for w, eid in sorted(adj[v]):
            if w == root or w in seen or eid == base_edge:
                continue
            if comp.get(w) == comp.get(tail):
                seen.add(w)
                tree_edges.add(eid)
                queue.append(w)
    # remaining components attach at the root directly
    queue = [root]
    while queue:
        v = queue.pop(0)
        for w, eid in sorted(adj[v]):
            if w in seen:
                continue
            if comp.get(w) == comp.get(tail):
                continue
            seen.add(w)
            tree_edges.add(eid)
            queue.append(w)
    if seen != set(g.vertices):
        raise DecompositionError("spanning construction missed a vertex")
    tree = RootedTree(root, _rebuild_parent(g, tree_edges, root))

    cap = len(g.edges) * max(1, len(g.vertices))
    last = tree_complexity(g, tree)
    for _ in range(cap + 1):
        if last == (NEG_INF, 0):
            return tree
        bad = []
        for eid, a, b in g.edges:
            if not tree.comparable(a, b):
                q = tree.meet(a, b)
                bad.append((tree.depth(q), eid, a, b, q))
        bad.sort()
        _, eid, v, w, q = bad[0]
        up = tree.path_up(v, q)
        if not up:
            v, w = w, v
            up = tree.path_up(v, q)
        drop = up[-1][1]  # tree edge adjacent to the meet on v's side
        if drop == base_edge:
            raise DecompositionError("tree repair tried to drop the base edge")
        edges = set(tree.edge_ids)
        edges.discard(drop)
        edges.add(eid)
        tree = RootedTree(tree.root, _rebuild_parent(g, edges, tree.root))
        now = tree_complexity(g, tree)
        if not now < last:
            raise DecompositionError("tree repair failed to decrease complexity")
        last = now
    raise DecompositionError("tree repair exceeded its iteration budget")


def nontree_enumeration(g: Graph, tree: RootedTree) -> list[int]:
    """Non-tree edges ordered so earlier lower endpoints never sit strictly
    above later ones: sorted by (depth of lower endpoint, id)."""
    out = []
    for eid, a, b in g.edges:
        if eid in tree.edge_ids:
            continue
        lower, _ = _edge_sides(g, tree, eid)
        out.append((tree.depth(lower), eid))
    out.sort()
    return [eid for _, eid in out]


# -- loop decompositions -----------------------------------------------------


@dataclass(frozen=True)
class LoopDecomposition:
    graph: Graph  # original storage orientation
    base_vertex: int
    orientation: Mapping[int, int]  # edge id -> +1 (as stored) or -1
    loops: tuple[tuple[Direction, ...], ...]  # positive crossings, signed in storage terms
    turn_edges: tuple[int, int]

    def oriented_graph(self) -> Graph:
        flip = [eid for eid, s in self.orientation.items() if s < 0]
        return self.graph.reversed_edges(flip)

    def loop_edge_ids(self, k: int) -> tuple[int, ...]:
        return tuple(abs(d) for d in self.loops[k])


def _positive(orientation: Mapping[int, int], d: Direction) -> bool:
    return orientation[abs(d)] == (1 if d > 0 else -1)


def verify_decomposition(dec: LoopDecomposition) -> bool:
    g = dec.graph
    v0 = dec.base_vertex
    if set(dec.orientation) != set(g.edge_ids):
        return False
    covered: set[int] = set()
    for k, loop in enumerate(dec.loops):
        if not loop:
            return False
        for d in loop:
            if not _positive(dec.orientation, d):
                return False
        for a, b in zip(loop, loop[1:]):
            if g.terminus(a) != g.origin(b):
                return False
        if g.terminus(loop[-1]) != g.origin(loop[0]):
            return False
        mids = [g.origin(d) for d in loop]
        if len(set(mids)) != len(mids):
            return False  # not embedded
        ids = [abs(d) for d in loop]
        if len(set(ids)) != len(ids):
            return False
        if k > 0:
            covered_verts = set()
            for eid in covered:
                _, ct, ch = g.edge(eid)
                covered_verts.update((ct, ch))
            shared = [j for j, eid in enumerate(ids) if eid in covered]
            if shared:
                if len(shared) == len(ids):
                    return False  # whole circle, not an arc
                runs = _cyclic_runs(shared, len(ids))
                if len(runs) != 1:
                    return False
                arc_verts = {g.origin(loop[j]) for j in runs[0]}
                arc_verts.add(g.terminus(loop[runs[0][-1]]))
                if v0 not in arc_verts:
                    return False
            else:
                arc_verts = {v0} if v0 in mids else set()
                if not arc_verts:
                    return False
            # the point-set intersection must not touch the loop elsewhere
            for j, d in enumerate(loop):
                v = g.origin(d)
                if v in covered_verts and v not in arc_verts:
                    return False
        covered.update(ids)
    if covered != set(g.edge_ids):
        return False
    for eid in dec.turn_edges:
        _, t, h = g.edge(eid)
        ter = h if dec.orientation[eid] > 0 else t
        if ter != v0:
            return False
    return True


def _cyclic_runs(positions: Sequence[int], size: int) -> list[list[int]]:
    """Group sorted positions into maximal cyclically consecutive runs."""
    pos = sorted(positions)
    if len(pos) == size:
        return [pos]
    runs: list[list[int]] = []
    for p in pos:
        if runs and runs[-1][-1] == p - 1:
            runs[-1].append(p)
        else:
            runs.append([p])
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == size - 1:
        runs[0] = runs.pop() + runs[0]
    return runs


def _half_edges_of_loop(loop: Sequence[Direction], eid: int) -> tuple[set, set]:
    """(left, right) half-edge sets of the loop split at the midpoint of eid.
    Half-edge keys are (edge id, 0 for the stored tail half, 1 for head)."""
    k = next(j for j, d in enumerate(loop) if abs(d) == eid)
    left: set = set()
    right: set = set()
    for j, d in enumerate(loop):
        halves = {(abs(d), 0), (abs(d), 1)}
        if j < k:
            left |= halves
        elif j > k:
            right |= halves
        else:
            tail_half = (abs(d), 0 if d > 0 else 1)
            head_half = (abs(d), 1 if d > 0 else 0)
            left.add(tail_half)
            right.add(head_half)
    return left, right


class _LoopSearch:
    """Backtracking construction of the loops, one per non-tree edge, under
    the arc, orientation-propagation, and highlighted-path constraints."""

    def __init__(self, g: Graph, tree: RootedTree, v0: int, e1_dir: Direction):
        self.g = g
        self.tree = tree
        self.v0 = v0
        self.e1_dir = e1_dir
        self.order = [abs(e1_dir)] + [
            eid for eid in nontree_enumeration(g, tree) if eid != abs(e1_dir)
        ]
        self.orientation: dict[int, int] = {}
        self.first_loop: dict[int, tuple[Direction, ...]] = {}
        self.loops: list[tuple[Direction, ...]] = []

    def run(self) -> list[tuple[Direction, ...]]:
        base = [self.e1_dir]
        v = self.g.terminus(self.e1_dir)
        for child, eid in self.tree.path_up(v, self.v0):
            _, t, h = self.g.edge(eid)
            base.append(eid if t == child else -eid)
        if not self._commit(tuple(base)):
            raise DecompositionError("base loop violates the constraints")
        if self._extend(1):
            return self.loops
        raise DecompositionError("loop search exhausted all branches")

    # -- state ----------------------------------------------------------

    def _commit(self, loop: tuple[Direction, ...]) -> bool:
        added: list[int] = []
        for d in loop:
            eid = abs(d)
            want = 1 if d > 0 else -1
            if eid in self.orientation:
                if self.orientation[eid] != want:
                    self._rollback(added)
                    return False
            else:
                self.orientation[eid] = want
                self.first_loop[eid] = loop
                added.append(eid)
        self.loops.append(loop)
        if self._cond4() and self._cond5():
            self._last_added = added
            return True
        self.loops.pop()
        self._rollback(added)
        return False

    def _rollback(self, added: list[int]) -> None:
        for eid in added:
            del self.orientation[eid]
            del self.first_loop[eid]

    def _uncommit(self, added: list[int]) -> None:
        self.loops.pop()
        self._rollback(added)

    # -- constraints ------------------------------------------------------

    def _vplus(self, eid: int) -> int:
        return _edge_sides(self.g, self.tree, eid)[1]

    def _cond4(self) -> bool:
        unoriented = [
            eid for eid in self.tree.edge_ids if eid not in self.orientation
        ]
        if not unoriented:
            return True
        tops = [self._vplus(eid) for eid in self.orientation]
        for eid in unoriented:
            v = self.tree.child_of(eid)
            if any(self.tree.leq(v, w) for w in tops):
                return False
        return True

    def _cond5(self) -> bool:
        settled = [
            eid
            for eid in self.tree.edge_ids
            if eid in self.first_loop
        ]
        for b1, b2 in itertools.permutations(settled, 2):
            v1 = self.tree.child_of(b1)
            v2 = self.tree.child_of(b2)
            if not (self.tree.leq(v1, v2) and v1 != v2):
                continue  # need b1 strictly below b2 on one root chain
            # orientation of b1 relative to the root: up = away from it
            _, t, h = self.g.edge(b1)
            i_vert = t if self.orientation[b1] > 0 else h
            pointing_up = i_vert != self.tree.child_of(b1)
            l1, r1 = _half_edges_of_loop(self.first_loop[b1], b1)
            l2, r2 = _half_edges_of_loop(self.first_loop[b2], b2)
            if pointing_up:
                h1, h2 = l1, r2
            else:
                h1, h2 = r1, l2
            if h1 & h2:
                return False
        return True

    # -- search -----------------------------------------------------------

    def _extend(self, k: int) -> bool:
        if k == len(self.order):
            return len(self.orientation) == len(self.g.edges)
        target = self.order[k]
        allowed = set(self.orientation) | self.tree.edge_ids | {target}
        for loop in self._candidates(target, allowed):
            if self._commit(loop):
                added = self._last_added
                if self._extend(k + 1):
                    return True
                self._uncommit(added)
        return False

    def _candidates(self, target: int, allowed: set[int]) -> Iterator[tuple[Direction, ...]]:
        g = self.g
        v0 = self.v0
        oriented_before = set(self.orientation)

        def walk(pos: int, path: list[Direction], visited: set[int]):
            for d in g.directions_at(pos):
                eid = abs(d)
                if eid not in allowed or any(abs(p) == eid for p in path):
                    continue
                if eid in self.orientation and not _positive(self.orientation, d):
                    continue
                nxt = g.terminus(d)
                if nxt == v0:
                    loop = tuple(path + [d])
                    if any(abs(p) == target for p in loop):
                        if self._arc_ok(loop, oriented_before):
                            yield loop
                    continue
                if nxt in visited:
                    continue
                yield from walk(nxt, path + [d], visited | {nxt})

        yield from walk(g.terminus(self.e1_dir), [self.e1_dir], {v0, g.terminus(self.e1_dir)})

    def _arc_ok(self, loop: tuple[Direction, ...], oriented: set[int]) -> bool:
        shared = [j for j, d in enumerate(loop) if abs(d) in oriented]
        if not shared or len(shared) == len(loop):
            return False  # must cross the base petal yet bring a new edge
        runs = _cyclic_runs(shared, len(loop))
        if len(runs) != 1:
            return False
        if all(abs(loop[j]) != abs(self.e1_dir) for j in runs[0]):
            return False
        g = self.g
        covered_verts = set()
        for eid in oriented:
            _, ct, ch = g.edge(eid)
            covered_verts.update((ct, ch))
        arc_verts = {g.origin(loop[j]) for j in runs[0]}
        arc_verts.add(g.terminus(loop[runs[0][-1]]))
        for d in loop:
            v = g.origin(d)
            if v in covered_verts and v not in arc_verts:
                return False
        return True


def loop_decomposition(g: Graph, t: Turn) -> LoopDecomposition:
    """Orient all edges and produce embedded positive loops covering the
    graph, pairwise overlapping in arcs through the turn's vertex; the turn's
    edges both end there. Accepts trivalent graphs without separating edges,
    plus roses, where petals are the loops."""
    t.check(g)
    v0 = g.origin(t.a)
    ea, eb = abs(t.a), abs(t.b)
    if ea == eb:
        raise GraphStructureError("turn edges must be distinct")

    if all(e[1] == e[2] for e in g.edges):
        orientation = {}
        loops = []
        ids = [ea, eb] + [eid for eid in g.edge_ids if eid not in (ea, eb)]
        for eid in ids:
            d = -t.a if eid == ea else -t.b if eid == eb else eid
            orientation[eid] = 1 if d > 0 else -1
            loops.append((d,))
        dec = LoopDecomposition(g, v0, orientation, tuple(loops), (ea, eb))
        if not verify_decomposition(dec):
            raise DecompositionError("rose decomposition failed its checker")
        return dec

    if not g.is_trivalent():
        raise GraphStructureError("loop decomposition needs a trivalent graph")
    if g.has_separating_edge():
        raise GraphStructureError("graph must have no separating edges")

    others = [d for d in g.directions_at(v0) if d not in (t.a, t.b)]
    if len(others) != 1:
        raise GraphStructureError("turn vertex must have exactly one other direction")
    e1_dir = others[0]

    tree = good_spanning_tree(g.reversed_edges([ea] if t.a > 0 else []), ea)
    # root of the tree is the terminal vertex of the absorbed turn edge
    if tree.root != v0:
        raise DecompositionError("tree root differs from the turn vertex")

    search = _LoopSearch(g, tree, v0, e1_dir)
    loops = search.run()
    dec = LoopDecomposition(
        g, v0, dict(search.orientation), tuple(loops), (ea, eb)
    )
    if not verify_decomposition(dec):
        raise DecompositionError("loop decomposition failed its checker")
    return dec
