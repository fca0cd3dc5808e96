"""Connected undirected graphs with implicit self-loops.

Every vertex is its own neighbor, so the degree d_v = |N(v)| counts the
self-loop once.  Standard families carry a known set of automorphism
generators used by the symmetry tests downstream.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraph, GenerationFailed, VertexOutOfRange

_RANDOM_RETRY_BUDGET = 1000


@dataclass(frozen=True)
class Graph:
    """Immutable graph: per-vertex neighbor sets, each containing the vertex."""

    n: int
    neighbor_sets: tuple[frozenset[int], ...]
    automorphism_generators: tuple[tuple[int, ...], ...] = field(default=())
    family: str | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"vertex count must be >= 1, got {self.n}")
        if len(self.neighbor_sets) != self.n:
            raise ValueError("neighbor_sets length does not match n")
        for v, nv in enumerate(self.neighbor_sets):
            if v not in nv:
                raise ValueError(f"vertex {v} is missing its self-loop")
            if not 1 <= len(nv) <= self.n:
                raise ValueError(f"degree of vertex {v} out of range")
            for w in nv:
                if not 0 <= w < self.n:
                    raise VertexOutOfRange(f"neighbor {w} of vertex {v} out of range")
                if v not in self.neighbor_sets[w]:
                    raise ValueError(f"asymmetric adjacency between {v} and {w}")
        if not self._is_connected():
            raise DisconnectedGraph("graph is not connected")

    def _is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in self.neighbor_sets[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(nv) for nv in self.neighbor_sets)

    def neighbors(self, v: int) -> frozenset[int]:
        return self.neighbor_sets[v]

    def neighbor_lists(self) -> list[list[int]]:
        """Sorted neighbor lists, convenient for array indexing."""
        return [sorted(nv) for nv in self.neighbor_sets]

    def edge_list(self) -> list[tuple[int, int]]:
        """Non-self-loop edges as sorted (u, v) pairs with u < v."""
        return sorted(
            (v, w)
            for v, nv in enumerate(self.neighbor_sets)
            for w in nv
            if v < w
        )


def _build(n: int, pairs, generators=(), family=None) -> Graph:
    sets = [{v} for v in range(n)]
    for u, v in pairs:
        if not (0 <= u < n and 0 <= v < n):
            raise VertexOutOfRange(f"edge ({u}, {v}) out of range for n={n}")
        sets[u].add(v)
        sets[v].add(u)
    return Graph(
        n=n,
        neighbor_sets=tuple(frozenset(s) for s in sets),
        automorphism_generators=tuple(tuple(g) for g in generators),
        family=family,
    )


def path_graph(n: int) -> Graph:
    """Vertices 0..n-1 in a line; edges between consecutive vertices."""
    if n < 1:
        raise ValueError("path_graph requires n >= 1")
    reflection = tuple(n - 1 - i for i in range(n))
    return _build(
        n,
        [(k, k + 1) for k in range(n - 1)],
        generators=[reflection],
        family="path",
    )


def star_graph(n: int) -> Graph:
    """Vertex 0 adjacent to all others; leaves see only the center and themselves."""
    if n < 2:
        raise ValueError("star_graph requires n >= 2")
    gens = []
    for i in range(1, n - 1):
        g = list(range(n))
        g[i], g[i + 1] = g[i + 1], g[i]
        gens.append(tuple(g))
    return _build(n, [(0, v) for v in range(1, n)], generators=gens, family="star")


def cycle_graph(n: int) -> Graph:
    """Ring of n vertices; every degree is 3 (two ring neighbors plus self)."""
    if n < 3:
        raise ValueError("cycle_graph requires n >= 3")
    rotation = tuple((i + 1) % n for i in range(n))
    return _build(
        n,
        [(k, (k + 1) % n) for k in range(n)],
        generators=[rotation],
        family="cycle",
    )


def complete_graph(n: int) -> Graph:
    """All pairs adjacent; every degree equals n."""
    if n < 1:
        raise ValueError("complete_graph requires n >= 1")
    gens = []
    for i in range(n - 1):
        g = list(range(n))
        g[i], g[i + 1] = g[i + 1], g[i]
        gens.append(tuple(g))
    return _build(
        n,
        [(u, v) for u in range(n) for v in range(u + 1, n)],
        generators=gens,
        family="complete",
    )


def from_edge_list(n: int, edges) -> Graph:
    """Build a graph from explicit edges; self-loops are implicit either way.

    Duplicate and reversed pairs are deduplicated; explicit self-loops are
    accepted.  Raises VertexOutOfRange or DisconnectedGraph.
    """
    if n < 1:
        raise ValueError("from_edge_list requires n >= 1")
    return _build(n, edges)


def random_connected_graph(n: int, edge_probability: float, seed: int) -> Graph:
    """Independent-edge random draw, resampled until connected; deterministic per seed."""
    if n < 1:
        raise ValueError("random_connected_graph requires n >= 1")
    if not 0.0 < edge_probability <= 1.0:
        raise ValueError("edge_probability must be in (0, 1]")
    rng = random.Random(seed)
    for _ in range(_RANDOM_RETRY_BUDGET):
        edges = [
            (u, v)
            for u in range(n)
            for v in range(u + 1, n)
            if rng.random() < edge_probability
        ]
        try:
            return _build(n, edges, family="random")
        except DisconnectedGraph:
            continue
    raise GenerationFailed(
        f"no connected draw in {_RANDOM_RETRY_BUDGET} tries (n={n}, p={edge_probability})"
    )


def read_edge_list(path) -> Graph:
    """Load a graph from a text file: one 'u v' pair per line, 0-indexed.

    Blank lines and '#' comments are ignored.  The vertex count is the
    largest endpoint plus one.
    """
    edges = []
    top = -1
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v', got {raw.strip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer endpoint") from exc
            if u < 0 or v < 0:
                raise VertexOutOfRange(f"{path}:{lineno}: negative vertex id")
            edges.append((u, v))
            top = max(top, u, v)
    if top < 0:
        raise ValueError(f"{path}: no edges found")
    return from_edge_list(top + 1, edges)


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in g.edge_list():
            fh.write(f"{u} {v}\n")


def averaging_matrix(g: Graph, dtype=np.float64) -> np.ndarray:
    """Row-stochastic neighborhood-averaging operator: P[v, w] = 1/d_v on N(v)."""
    P = np.zeros((g.n, g.n), dtype=dtype)
    for v, nv in enumerate(g.neighbor_sets):
        P[v, sorted(nv)] = 1.0 / len(nv)
    return P


def path_order(g: Graph) -> list[int] | None:
    """Vertex order along the path if the graph is one, else None.

    Lets file-loaded graphs with path topology be analyzed like the built-in
    family even when their labels are shuffled.  The walk starts at the
    lower-labeled endpoint, so the order is deterministic.
    """
    if g.n == 1:
        return [0]
    plain_degrees = [len(nv) - 1 for nv in g.neighbor_sets]
    ends = [v for v, d in enumerate(plain_degrees) if d == 1]
    if len(ends) != 2 or any(d > 2 for d in plain_degrees):
        return None
    order = [min(ends)]
    prev = None
    while len(order) < g.n:
        here = order[-1]
        nxt = [w for w in g.neighbor_sets[here] if w != here and w != prev]
        if len(nxt) != 1:
            return None
        prev = here
        order.append(nxt[0])
    return order


def is_automorphism(g: Graph, perm) -> bool:
    """Check that the permutation preserves adjacency."""
    if sorted(perm) != list(range(g.n)):
        return False
    return all(
        frozenset(perm[w] for w in g.neighbor_sets[v]) == g.neighbor_sets[perm[v]]
        for v in range(g.n)
    )
