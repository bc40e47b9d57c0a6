"""Bi-directed graphs, DAGs with latent vertices, and their separation criteria.

Vertices are case-sensitive string labels. The order in which vertices are
declared fixes the row/column order of every matrix built over a graph.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Optional

import numpy as np

from .errors import InputError

__all__ = [
    "BidirectedGraph",
    "Dag",
    "SeparationQuery",
    "spouses",
    "nonspouses",
    "m_separated",
    "m_connecting_path",
    "d_separated",
    "latent_projection",
    "forbidden_induced_subgraph",
    "dag_equivalent_exists",
    "unshielded_noncollider",
    "bidirected_equivalent_exists",
    "pairwise_independences",
]


def _labels(vertices: Iterable) -> tuple[str, ...]:
    labels = tuple(str(v) for v in vertices)
    seen = set()
    for v in labels:
        if v in seen:
            raise InputError(f"duplicate vertex {v!r}")
        seen.add(v)
    return labels


def _as_set(x) -> frozenset[str]:
    if x is None:
        return frozenset()
    if isinstance(x, (str, int)):
        return frozenset([str(x)])
    return frozenset(str(v) for v in x)


class BidirectedGraph:
    """Graph whose edges are all bi-directed (``a <-> b``).

    Parameters
    ----------
    vertices : iterable of labels
        Declaration order defines the matrix index order.
    edges : iterable of pairs
        Unordered pairs of declared vertices. Self-loops and duplicate
        edges are rejected.
    """

    __slots__ = ("_vertices", "_index", "_adj", "_edges")

    def __init__(self, vertices: Iterable, edges: Iterable = ()):
        self._vertices = _labels(vertices)
        self._index = {v: k for k, v in enumerate(self._vertices)}
        adj: dict[str, set[str]] = {v: set() for v in self._vertices}
        edge_set = set()
        for e in edges:
            a, b = (str(x) for x in e)
            for v in (a, b):
                if v not in self._index:
                    raise InputError(f"edge endpoint {v!r} is not a declared vertex")
            if a == b:
                raise InputError(f"self-loop at vertex {a!r}")
            key = frozenset((a, b))
            if key in edge_set:
                raise InputError(f"duplicate edge {a} <-> {b}")
            edge_set.add(key)
            adj[a].add(b)
            adj[b].add(a)
        self._adj = {v: frozenset(n) for v, n in adj.items()}
        self._edges = frozenset(edge_set)

    @classmethod
    def complete(cls, vertices: Iterable) -> "BidirectedGraph":
        vs = _labels(vertices)
        return cls(vs, itertools.combinations(vs, 2))

    @classmethod
    def from_adjacency(cls, vertices: Iterable, adjacency) -> "BidirectedGraph":
        vs = _labels(vertices)
        a = np.asarray(adjacency)
        p = len(vs)
        return cls(vs, [(vs[i], vs[j]) for i in range(p) for j in range(i + 1, p) if a[i, j]])

    @property
    def vertices(self) -> tuple[str, ...]:
        return self._vertices

    @property
    def edges(self) -> frozenset[frozenset[str]]:
        return self._edges

    @property
    def p(self) -> int:
        return len(self._vertices)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def __len__(self) -> int:
        return len(self._vertices)

    def __contains__(self, v) -> bool:
        return str(v) in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, BidirectedGraph):
            return NotImplemented
        return self._vertices == other._vertices and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self._vertices, self._edges))

    def __repr__(self) -> str:
        edges = ", ".join(f"{a}<->{b}" for a, b in self.sorted_edges())
        return f"BidirectedGraph(vertices={list(self._vertices)}, edges=[{edges}])"

    def index(self, v) -> int:
        try:
            return self._index[str(v)]
        except KeyError:
            raise InputError(f"unknown vertex {str(v)!r}") from None

    def check_vertices(self, vs: Iterable) -> None:
        for v in vs:
            self.index(v)

    def adjacent(self, a, b) -> bool:
        return str(b) in self._adj[self.vertices[self.index(a)]]

    def neighbors(self, v) -> frozenset[str]:
        return self._adj[self._vertices[self.index(v)]]

    def spouses(self, v) -> tuple[str, ...]:
        """Neighbors of ``v``, in declaration order."""
        nb = self.neighbors(v)
        return tuple(u for u in self._vertices if u in nb)

    def nonspouses(self, v) -> tuple[str, ...]:
        """All vertices other than ``v`` that are not joined to it."""
        v = str(v)
        nb = self.neighbors(v)
        return tuple(u for u in self._vertices if u != v and u not in nb)

    def sorted_edges(self) -> list[tuple[str, str]]:
        """Edges as ``(a, b)`` with ``index(a) < index(b)``, lexicographic in index order."""
        out = []
        for e in self._edges:
            a, b = sorted(e, key=self._index.__getitem__)
            out.append((a, b))
        out.sort(key=lambda ab: (self._index[ab[0]], self._index[ab[1]]))
        return out

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for u, v in self.sorted_edges():
            i, j = self._index[u], self._index[v]
            a[i, j] = a[j, i] = True
        return a

    def free_pairs(self) -> list[tuple[int, int]]:
        """Index pairs of unconstrained covariance entries.

        Diagonal entries come first in vertex order, followed by the edges
        ``(i, j)`` with ``i < j`` in lexicographic order.
        """
        diag = [(k, k) for k in range(self.p)]
        off = [(self._index[a], self._index[b]) for a, b in self.sorted_edges()]
        return diag + off

    def induced_subgraph(self, vs: Iterable) -> "BidirectedGraph":
        keep = set(_as_set(vs))
        self.check_vertices(keep)
        order = [v for v in self._vertices if v in keep]
        return BidirectedGraph(order, [tuple(e) for e in self._edges if e <= keep])

    def relabel(self, mapping: dict) -> "BidirectedGraph":
        m = {str(k): str(v) for k, v in mapping.items()}
        return BidirectedGraph(
            [m.get(v, v) for v in self._vertices],
            [tuple(m.get(x, x) for x in e) for e in self._edges],
        )


class Dag:
    """Directed acyclic graph with an observed/latent vertex partition.

    Parameters
    ----------
    vertices : iterable of labels
    edges : iterable of ``(parent, child)`` pairs
    latent : iterable of labels, optional
        Vertices that are unobserved. Everything else is observed.
    """

    __slots__ = ("_vertices", "_index", "_parents", "_children", "_edges", "_latent", "_order")

    def __init__(self, vertices: Iterable, edges: Iterable = (), latent: Iterable = ()):
        self._vertices = _labels(vertices)
        self._index = {v: k for k, v in enumerate(self._vertices)}
        parents: dict[str, set[str]] = {v: set() for v in self._vertices}
        children: dict[str, set[str]] = {v: set() for v in self._vertices}
        edge_set = set()
        for e in edges:
            a, b = (str(x) for x in e)
            for v in (a, b):
                if v not in self._index:
                    raise InputError(f"edge endpoint {v!r} is not a declared vertex")
            if a == b:
                raise InputError(f"self-loop at vertex {a!r}")
            if (a, b) in edge_set:
                raise InputError(f"duplicate edge {a} -> {b}")
            if (b, a) in edge_set:
                raise InputError(f"edges {a} -> {b} and {b} -> {a} form a cycle")
            edge_set.add((a, b))
            parents[b].add(a)
            children[a].add(b)
        latent = _as_set(latent)
        for v in latent:
            if v not in self._index:
                raise InputError(f"latent vertex {v!r} is not a declared vertex")
        try:
            order = tuple(TopologicalSorter({v: parents[v] for v in self._vertices}).static_order())
        except CycleError as exc:
            cycle = " -> ".join(reversed(exc.args[1]))
            raise InputError(f"directed cycle {cycle}") from None
        self._parents = {v: frozenset(s) for v, s in parents.items()}
        self._children = {v: frozenset(s) for v, s in children.items()}
        self._edges = frozenset(edge_set)
        self._latent = latent
        self._order = order

    @property
    def vertices(self) -> tuple[str, ...]:
        return self._vertices

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return self._edges

    @property
    def latent(self) -> frozenset[str]:
        return self._latent

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(v for v in self._vertices if v not in self._latent)

    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return (self._vertices, self._edges, self._latent) == (
            other._vertices,
            other._edges,
            other._latent,
        )

    def __hash__(self) -> int:
        return hash((self._vertices, self._edges, self._latent))

    def __repr__(self) -> str:
        edges = ", ".join(f"{a}->{b}" for a, b in self.sorted_edges())
        return f"Dag(vertices={list(self._vertices)}, edges=[{edges}], latent={sorted(self._latent)})"

    def sorted_edges(self) -> list[tuple[str, str]]:
        return sorted(self._edges, key=lambda e: (self._index[e[0]], self._index[e[1]]))

    def check_vertices(self, vs: Iterable) -> None:
        for v in vs:
            if str(v) not in self._index:
                raise InputError(f"unknown vertex {str(v)!r}")

    def parents(self, v) -> frozenset[str]:
        self.check_vertices([v])
        return self._parents[str(v)]

    def children(self, v) -> frozenset[str]:
        self.check_vertices([v])
        return self._children[str(v)]

    def adjacent(self, a, b) -> bool:
        a, b = str(a), str(b)
        return (a, b) in self._edges or (b, a) in self._edges

    def neighbors(self, v) -> frozenset[str]:
        v = str(v)
        return self._parents[v] | self._children[v]

    def ancestors(self, vs) -> frozenset[str]:
        """Ancestors of a vertex or vertex set, including the vertices themselves."""
        start = _as_set(vs)
        self.check_vertices(start)
        seen = set(start)
        stack = list(start)
        while stack:
            for u in self._parents[stack.pop()]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return frozenset(seen)


@dataclass(frozen=True)
class SeparationQuery:
    """Is ``set_a`` separated from ``set_b`` given ``given``?"""

    set_a: frozenset
    set_b: frozenset
    given: frozenset = frozenset()

    @classmethod
    def of(cls, a, b, given=()) -> "SeparationQuery":
        return cls(_as_set(a), _as_set(b), _as_set(given))

    def validate(self, graph) -> None:
        if not self.set_a or not self.set_b:
            raise InputError("separation query sets A and B must be non-empty")
        graph.check_vertices(self.set_a | self.set_b | self.given)
        for (na, x), (nb, y) in itertools.combinations(
            [("A", self.set_a), ("B", self.set_b), ("given", self.given)], 2
        ):
            common = x & y
            if common:
                raise InputError(f"query sets {na} and {nb} overlap in {sorted(common)}")


def _query(a, b, given) -> SeparationQuery:
    if isinstance(a, SeparationQuery):
        return a
    return SeparationQuery.of(a, b, given)


def spouses(g: BidirectedGraph, v) -> tuple[str, ...]:
    return g.spouses(v)


def nonspouses(g: BidirectedGraph, v) -> tuple[str, ...]:
    return g.nonspouses(v)


def m_connecting_path(g: BidirectedGraph, a, b=None, given=()) -> Optional[list[str]]:
    """Shortest m-connecting path between the two sets, or ``None``.

    Every interior vertex of a path in a bi-directed graph is a collider, so
    a path connects given ``S`` exactly when all its interior vertices lie in
    ``S``. A breadth-first search from ``A`` that only passes through
    vertices of ``S`` finds one if it exists.
    """
    q = _query(a, b, given)
    q.validate(g)
    parent: dict[str, Optional[str]] = {}
    frontier = deque()
    for v in sorted(q.set_a, key=g.index):
        parent[v] = None
        frontier.append(v)
    while frontier:
        v = frontier.popleft()
        for u in g.spouses(v):
            if u in parent:
                continue
            if u in q.set_b:
                path = [u, v]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return path[::-1]
            if u in q.given:
                parent[u] = v
                frontier.append(u)
    return None


def m_separated(g: BidirectedGraph, a, b=None, given=()) -> bool:
    """True iff no path between ``a`` and ``b`` has all interior vertices in ``given``.

    ``a`` may also be a :class:`SeparationQuery`, in which case ``b`` and
    ``given`` are ignored.
    """
    return m_connecting_path(g, a, b, given) is None


def d_separated(d: Dag, a, b=None, given=()) -> bool:
    """d-separation in a DAG, via the reachable-vertices (Bayes ball) search."""
    q = _query(a, b, given)
    q.validate(d)
    z = q.given
    anc_z = d.ancestors(z) if z else frozenset()
    visited = set()
    stack = [(v, "up") for v in q.set_a]
    while stack:
        v, direction = stack.pop()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v not in z and v in q.set_b:
            return False
        if direction == "up" and v not in z:
            stack.extend((u, "up") for u in d._parents[v])
            stack.extend((u, "down") for u in d._children[v])
        elif direction == "down":
            if v not in z:
                stack.extend((u, "down") for u in d._children[v])
            if v in anc_z:
                stack.extend((u, "up") for u in d._parents[v])
    return True


def latent_projection(d: Dag) -> BidirectedGraph:
    """Bi-directed graph over the observed vertices of ``d``.

    Two observed vertices are joined when they share an ancestor. Every
    observed vertex must be childless.
    """
    observed = d.observed
    for v in observed:
        if d._children[v]:
            kids = ", ".join(sorted(d._children[v]))
            raise InputError(
                f"observed vertex {v!r} has children ({kids}); "
                "latent projection requires childless observed vertices"
            )
    anc = {v: d.ancestors(v) for v in observed}
    edges = [(u, v) for u, v in itertools.combinations(observed, 2) if anc[u] & anc[v]]
    return BidirectedGraph(observed, edges)


def _order_path(sub: dict[str, set[str]], g: BidirectedGraph) -> tuple[str, ...]:
    ends = sorted((v for v, nb in sub.items() if len(nb) == 1), key=g.index)
    path = [ends[0]]
    prev = None
    while len(path) < len(sub):
        cur = path[-1]
        nxt = next(u for u in sub[cur] if u != prev)
        prev = cur
        path.append(nxt)
    return tuple(path)


def _order_cycle(sub: dict[str, set[str]], g: BidirectedGraph) -> tuple[str, ...]:
    start = min(sub, key=g.index)
    path = [start, min(sub[start], key=g.index)]
    while len(path) < len(sub):
        path.append(next(u for u in sub[path[-1]] if u != path[-2]))
    return tuple(path)


def forbidden_induced_subgraph(g: BidirectedGraph) -> Optional[tuple[str, tuple[str, ...]]]:
    """First induced 4-path or 4-cycle, as ``(kind, vertices in path order)``.

    ``kind`` is ``"path"`` or ``"cycle"``. Returns ``None`` when neither is
    present, i.e. when some DAG on the same vertices is Markov equivalent.
    """
    for quad in itertools.combinations(g.vertices, 4):
        sub = {v: set(g.neighbors(v)) & set(quad) for v in quad}
        degrees = sorted(len(nb) for nb in sub.values())
        if degrees == [1, 1, 2, 2]:
            return "path", _order_path(sub, g)
        if degrees == [2, 2, 2, 2]:
            return "cycle", _order_cycle(sub, g)
    return None


def dag_equivalent_exists(g: BidirectedGraph) -> bool:
    return forbidden_induced_subgraph(g) is None


def unshielded_noncollider(d: Dag) -> Optional[tuple[str, str, str]]:
    """First triple ``(a, b, c)`` with a, c non-adjacent that is not ``a -> b <- c``."""
    if d.latent:
        raise InputError(
            f"DAG has latent vertices {sorted(d.latent)}; "
            "bi-directed equivalence is defined for fully observed DAGs"
        )
    idx = {v: k for k, v in enumerate(d.vertices)}
    for b in d.vertices:
        nbs = sorted(d.neighbors(b), key=idx.__getitem__)
        for a, c in itertools.combinations(nbs, 2):
            if d.adjacent(a, c):
                continue
            if not ((a, b) in d.edges and (c, b) in d.edges):
                return a, b, c
    return None


def bidirected_equivalent_exists(d: Dag) -> bool:
    return unshielded_noncollider(d) is None


def pairwise_independences(g: BidirectedGraph) -> list[tuple[str, str]]:
    """Non-adjacent pairs ``(i, j)``, ``i`` before ``j``, in index-lexicographic order."""
    return [
        (u, v) for u, v in itertools.combinations(g.vertices, 2) if not g.adjacent(u, v)
    ]
