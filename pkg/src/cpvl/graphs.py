"""Finite graphs for CPVL/CPLI simulations.

All graphs are stored in CSR form (indptr/indices) so the event kernels can
walk neighbourhoods without object overhead.  Vertex 0 is always the
designated origin (all-zero coordinate on tori, root on tree balls).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "build_graph",
    "cycle",
    "torus",
    "tree_ball",
    "complete",
    "edge_pair",
]


@dataclass(frozen=True)
class Graph:
    """Undirected finite graph with CSR adjacency.

    Attributes:
        kind: one of "torus", "tree_ball", "cycle", "complete", "edge_pair".
        params: constructor parameters, e.g. {"dim": 1, "size": 10}.
        vertex_count: number of vertices.
        indptr, indices: CSR adjacency (symmetric, no self loops).
        degree: common vertex degree for regular graphs; for tree balls the
            branching degree of the root (leaves have degree 1).
        is_regular: True when every vertex has exactly `degree` neighbours.
        boundary_vertices: leaf set for tree balls, empty otherwise.
        growth_constant: finite-graph estimate of sup_n n^-1 log|sphere_n(o)|,
            used only as a truncation diagnostic (pre-asymptotic on tori).
    """

    kind: str
    params: dict
    vertex_count: int
    indptr: np.ndarray
    indices: np.ndarray
    degree: int
    is_regular: bool
    boundary_vertices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    growth_constant: float = 0.0

    @property
    def origin(self) -> int:
        return 0

    @property
    def edge_count(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, v: int) -> np.ndarray:
        """Neighbour indices of v in stable (construction) order."""
        if not 0 <= v < self.vertex_count:
            raise IndexError(f"vertex {v} out of range [0, {self.vertex_count})")
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree_of(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def directed_edges(self) -> np.ndarray:
        """All directed edges as an (m, 2) array of (source, target) rows."""
        src = np.repeat(np.arange(self.vertex_count, dtype=np.int64), np.diff(self.indptr))
        return np.column_stack([src, self.indices.astype(np.int64)])


def _finish(kind: str, params: dict, adj: list[list[int]], degree: int,
            is_regular: bool, boundary: list[int] | None = None) -> Graph:
    n = len(adj)
    for v, nbrs in enumerate(adj):
        if v in nbrs:
            raise ValueError(f"self loop at vertex {v}")
        if len(set(nbrs)) != len(nbrs):
            raise ValueError(f"duplicate neighbours at vertex {v}")
    indptr = np.zeros(n + 1, dtype=np.int64)
    for v, nbrs in enumerate(adj):
        indptr[v + 1] = indptr[v] + len(nbrs)
    indices = np.fromiter((w for nbrs in adj for w in nbrs), dtype=np.int64, count=indptr[-1])
    g = Graph(
        kind=kind,
        params=dict(params),
        vertex_count=n,
        indptr=indptr,
        indices=indices,
        degree=degree,
        is_regular=is_regular,
        boundary_vertices=np.asarray(sorted(boundary or []), dtype=np.int64),
    )
    object.__setattr__(g, "growth_constant", _growth_constant(g))
    return g


def _growth_constant(g: Graph) -> float:
    """sup over realized spheres around the origin of n^-1 log|sphere_n|."""
    dist = np.full(g.vertex_count, -1, dtype=np.int64)
    dist[0] = 0
    frontier = [0]
    radius = 0
    sphere_sizes = []
    while frontier:
        nxt = []
        for v in frontier:
            for w in g.neighbors(v):
                if dist[w] < 0:
                    dist[w] = radius + 1
                    nxt.append(int(w))
        if nxt:
            sphere_sizes.append(len(nxt))
        frontier = nxt
        radius += 1
    if not sphere_sizes:
        return 0.0
    return max(math.log(s) / (i + 1) for i, s in enumerate(sphere_sizes))


def cycle(n: int) -> Graph:
    if n < 3:
        raise ValueError(f"cycle needs n >= 3, got {n}")
    adj = [[(v + 1) % n, (v - 1) % n] for v in range(n)]
    return _finish("cycle", {"size": n}, adj, degree=2, is_regular=True)


def torus(dim: int, size: int) -> Graph:
    """d-dimensional periodic lattice with side length `size` (>= 3)."""
    if dim < 1:
        raise ValueError(f"torus needs dim >= 1, got {dim}")
    if size < 3:
        raise ValueError(f"torus needs size >= 3 (else duplicate neighbours), got {size}")
    n = size ** dim
    strides = [size ** k for k in range(dim)]
    adj: list[list[int]] = []
    for v in range(n):
        coords = [(v // strides[k]) % size for k in range(dim)]
        nbrs = []
        for k in range(dim):
            for step in (1, -1):
                c = coords.copy()
                c[k] = (c[k] + step) % size
                nbrs.append(sum(c[j] * strides[j] for j in range(dim)))
        adj.append(nbrs)
    return _finish("torus", {"dim": dim, "size": size}, adj, degree=2 * dim, is_regular=True)


def tree_ball(degree: int, depth: int) -> Graph:
    """Ball of given radius in the infinite `degree`-regular tree.

    Root is vertex 0; every internal vertex has `degree` neighbours; leaves at
    distance `depth` are flagged as boundary vertices.
    """
    if degree < 2:
        raise ValueError(f"tree_ball needs degree >= 2, got {degree}")
    if depth < 0:
        raise ValueError(f"tree_ball needs depth >= 0, got {depth}")
    adj: list[list[int]] = [[]]
    levels = [[0]]
    for level in range(depth):
        nxt = []
        for parent in levels[level]:
            n_children = degree if level == 0 else degree - 1
            for _ in range(n_children):
                child = len(adj)
                adj.append([parent])
                adj[parent].append(child)
                nxt.append(child)
        levels.append(nxt)
    boundary = levels[depth] if depth > 0 else []
    return _finish("tree_ball", {"degree": degree, "depth": depth}, adj,
                   degree=degree, is_regular=False, boundary=boundary)


def complete(n: int) -> Graph:
    if n < 2:
        raise ValueError(f"complete needs n >= 2, got {n}")
    adj = [[w for w in range(n) if w != v] for v in range(n)]
    return _finish("complete", {"size": n}, adj, degree=n - 1, is_regular=True)


def edge_pair() -> Graph:
    """Two vertices joined by one edge; the smallest oracle graph."""
    return _finish("edge_pair", {}, [[1], [0]], degree=1, is_regular=True)


_BUILDERS = {
    "cycle": lambda p: cycle(p["size"]),
    "torus": lambda p: torus(p.get("dim", 1), p["size"]),
    "tree_ball": lambda p: tree_ball(p["degree"], p["depth"]),
    "complete": lambda p: complete(p["size"]),
    "edge_pair": lambda p: edge_pair(),
}


def build_graph(kind: str, **params) -> Graph:
    """Dispatch on kind: cycle(size), torus(dim, size), tree_ball(degree, depth),
    complete(size), edge_pair()."""
    if kind not in _BUILDERS:
        raise ValueError(f"unknown graph kind {kind!r}; expected one of {sorted(_BUILDERS)}")
    return _BUILDERS[kind](params)
