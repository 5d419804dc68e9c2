"""Directed graphs and their matrices (incidence, loop, path, Laplacian).

Vertices are numbered ``1..n``; the position of an edge in ``DiGraph.edges``
is its column index in every edge-indexed matrix.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraph, NotATree

PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class DiGraph:
    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.vertex_count < 1:
            raise ValueError("vertex_count must be positive")
        if not self.weights:
            object.__setattr__(self, "weights", (1.0,) * len(edges))
        else:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != len(edges):
            raise ValueError("one weight per edge required")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        seen = set()
        for a, b in edges:
            if not (1 <= a <= self.vertex_count and 1 <= b <= self.vertex_count):
                raise ValueError(f"edge ({a}, {b}) references an unknown vertex")
            if a == b:
                raise ValueError(f"self-loop at vertex {a}")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            seen.add((a, b))

    @property
    def n(self) -> int:
        return self.vertex_count

    @property
    def m(self) -> int:
        return len(self.edges)

    def undirected_adjacency(self) -> list[list[tuple[int, int]]]:
        """Per vertex (0-based), the list of ``(neighbour, edge index)``."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for j, (a, b) in enumerate(self.edges):
            adj[a - 1].append((b - 1, j))
            adj[b - 1].append((a - 1, j))
        return adj


@dataclass(frozen=True)
class TreeCertificate:
    graph: DiGraph
    reference_vertex: int = 1

    def __post_init__(self):
        if not is_tree(self.graph):
            raise NotATree("underlying undirected graph is not a tree")
        if not 1 <= self.reference_vertex <= self.graph.n:
            raise ValueError("reference vertex out of range")


def incidence_matrix(g: DiGraph) -> np.ndarray:
    M = np.zeros((g.n, g.m))
    for j, (a, b) in enumerate(g.edges):
        M[a - 1, j] = 1.0
        M[b - 1, j] = -1.0
    return M


def _reachable(adj, start: int) -> list[bool]:
    seen = [False] * len(adj)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v, _ in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_connected(g: DiGraph) -> bool:
    """Connectivity of the underlying undirected graph."""
    return all(_reachable(g.undirected_adjacency(), 0))


def is_tree(g: DiGraph) -> bool:
    return g.m == g.n - 1 and is_connected(g)


def _dfs_tree(g: DiGraph):
    """Spanning tree by iterative DFS from vertex 1.

    Returns ``(parent, parent_edge, depth, tree_edges)`` with 0-based vertices.
    """
    adj = g.undirected_adjacency()
    parent = [-1] * g.n
    parent_edge = [-1] * g.n
    depth = [0] * g.n
    visited = [False] * g.n
    tree_edges = set()
    stack = [0]
    while stack:
        u = stack.pop()
        if visited[u]:
            continue
        visited[u] = True
        if parent_edge[u] >= 0:
            tree_edges.add(parent_edge[u])
        # reversed so that lower-indexed neighbours are explored first
        for v, j in reversed(adj[u]):
            if not visited[v]:
                parent[v] = u
                parent_edge[v] = j
                depth[v] = depth[u] + 1
                stack.append(v)
    if not all(visited):
        raise DisconnectedGraph("graph is not connected")
    return parent, parent_edge, depth, tree_edges


def _tree_path_edges(u: int, v: int, parent, parent_edge, depth):
    """Edges on the tree path from u to v, as ``(edge, from, to)`` in order."""
    up_u, up_v = [], []
    a, b = u, v
    while depth[a] > depth[b]:
        up_u.append((parent_edge[a], a, parent[a]))
        a = parent[a]
    while depth[b] > depth[a]:
        up_v.append((parent_edge[b], parent[b], b))
        b = parent[b]
    while a != b:
        up_u.append((parent_edge[a], a, parent[a]))
        a = parent[a]
        up_v.append((parent_edge[b], parent[b], b))
        b = parent[b]
    return up_u + up_v[::-1]


def fundamental_loop_matrix(g: DiGraph) -> np.ndarray:
    """Columns are the fundamental loops of a DFS spanning tree rooted at 1.

    Each non-tree edge, taken in edge order, closes one loop and fixes that
    loop's orientation (its own entry is +1).
    """
    parent, parent_edge, depth, tree_edges = _dfs_tree(g)
    chords = [j for j in range(g.m) if j not in tree_edges]
    N = np.zeros((g.m, len(chords)))
    for col, j in enumerate(chords):
        a, b = g.edges[j]
        N[j, col] = 1.0
        # loop goes a -> b along the chord, then back b -> a through the tree
        for e, frm, to in _tree_path_edges(b - 1, a - 1, parent, parent_edge, depth):
            ta, tb = g.edges[e]
            N[e, col] = 1.0 if (ta - 1, tb - 1) == (frm, to) else -1.0
    return N


def has_non_overlapping_loops(g: DiGraph) -> bool:
    """True when no two fundamental loops share an edge."""
    N = fundamental_loop_matrix(g)
    return bool(np.all(np.count_nonzero(N, axis=1) <= 1))


def path_matrix(t: TreeCertificate) -> np.ndarray:
    """Signed path matrix, rows for non-reference vertices in increasing id.

    Entry ``(i, j)`` is +1 (-1) when edge j lies on the path from vertex i to
    the reference with the same (opposite) orientation as the path.
    """
    g = t.graph
    ref = t.reference_vertex - 1
    adj = g.undirected_adjacency()
    # BFS from the reference gives each vertex its next hop towards it
    toward = [-1] * g.n
    toward_edge = [-1] * g.n
    seen = [False] * g.n
    seen[ref] = True
    queue = deque([ref])
    while queue:
        u = queue.popleft()
        for v, j in adj[u]:
            if not seen[v]:
                seen[v] = True
                toward[v] = u
                toward_edge[v] = j
                queue.append(v)
    rows = [v for v in range(g.n) if v != ref]
    P = np.zeros((g.n - 1, g.m))
    for r, v in enumerate(rows):
        w = v
        while w != ref:
            j = toward_edge[w]
            a, _ = g.edges[j]
            P[r, j] = 1.0 if a - 1 == w else -1.0
            w = toward[w]
    return P


def reduced_incidence(g: DiGraph, reference_vertex: int = 1) -> np.ndarray:
    M = incidence_matrix(g)
    return np.delete(M, reference_vertex - 1, axis=0)


def adjacency_matrix(g: DiGraph) -> np.ndarray:
    A = np.zeros((g.n, g.n))
    for (a, b), w in zip(g.edges, g.weights):
        A[a - 1, b - 1] = w
    return A


def laplacian(g: DiGraph) -> np.ndarray:
    """``L = D_out - A`` with ``A[i, j]`` the weight of edge i -> j."""
    A = adjacency_matrix(g)
    return np.diag(A.sum(axis=1)) - A


def is_strongly_connected(g: DiGraph) -> bool:
    fwd: list[list[tuple[int, int]]] = [[] for _ in range(g.n)]
    bwd: list[list[tuple[int, int]]] = [[] for _ in range(g.n)]
    for j, ((a, b), w) in enumerate(zip(g.edges, g.weights)):
        if w > 0:
            fwd[a - 1].append((b - 1, j))
            bwd[b - 1].append((a - 1, j))
    return all(_reachable(fwd, 0)) and all(_reachable(bwd, 0))


def is_weight_balanced(g: DiGraph, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(laplacian(g).sum(axis=0)), initial=0.0) < tol)


def matrix_rank(A: np.ndarray, tol: float = PIVOT_TOL) -> int:
    """Rank by Gaussian elimination with partial pivoting."""
    R = np.array(A, dtype=float)
    rows, cols = R.shape
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        p = rank + int(np.argmax(np.abs(R[rank:, c])))
        if abs(R[p, c]) <= tol:
            continue
        R[[rank, p]] = R[[p, rank]]
        R[rank + 1:] -= np.outer(R[rank + 1:, c] / R[rank, c], R[rank])
        rank += 1
    return rank


# --- communication topologies -------------------------------------------


def ring(n: int, directed: bool = False, weight: float = 1.0) -> DiGraph:
    if n == 1:
        return DiGraph(1, ())
    if n == 2:
        edges = [(1, 2), (2, 1)]
    else:
        edges = [(i + 1, (i + 1) % n + 1) for i in range(n)]
        if not directed:
            edges += [((i + 1) % n + 1, i + 1) for i in range(n)]
    return DiGraph(n, tuple(edges), (weight,) * len(edges))


def complete(n: int, weight: float = 1.0) -> DiGraph:
    edges = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    return DiGraph(n, tuple(edges), (weight,) * len(edges))


def ring_with_chords(n: int, chords=None, weight: float = 1.0) -> DiGraph:
    """Undirected ring plus a few undirected chords.

    Default chords join vertex 1 to the opposite side of the ring and vertex
    ``n//4 + 1`` to its opposite, which keeps the largest Laplacian eigenvalue
    below 5 for unit weights (Euler-stable with ``dt*beta = 0.4``).
    """
    base = ring(n, directed=False, weight=weight)
    if n < 4:
        return base
    if chords is None:
        half = n // 2
        q = n // 4
        chords = [(1, 1 + half)]
        if q >= 1 and 1 + q + half <= n and q != 0:
            chords.append((1 + q, 1 + q + half))
    edges = list(base.edges)
    for a, b in chords:
        for e in ((a, b), (b, a)):
            if e not in edges:
                edges.append(e)
    return DiGraph(n, tuple(edges), (weight,) * len(edges))
