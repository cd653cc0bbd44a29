"""Graphs, free index sets and clique covers for block Gibbs."""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Set, Tuple

import numpy as np

from .utils import pair_label

_LOGGER = logging.getLogger(__name__)

Pair = Tuple[int, int]
Clique = Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph on ``p`` vertices with a symmetric adjacency matrix."""

    p: int
    adjacency: np.ndarray

    def __post_init__(self):
        """Validate and freeze the adjacency matrix."""
        adjacency = np.array(self.adjacency, dtype=bool)
        if adjacency.shape != (self.p, self.p):
            raise ValueError("Adjacency shape does not match vertex count")
        if not np.array_equal(adjacency, adjacency.T):
            raise ValueError("Adjacency must be symmetric")
        if np.any(np.diag(adjacency)):
            raise ValueError("Adjacency diagonal must be false")

        adjacency.setflags(write=False)
        object.__setattr__(self, "adjacency", adjacency)

    @staticmethod
    def empty(p: int) -> "Graph":
        """Return the graph without edges."""
        return Graph(p=p, adjacency=np.zeros((p, p), dtype=bool))

    @staticmethod
    def complete(p: int) -> "Graph":
        """Return the complete graph."""
        return Graph(p=p, adjacency=~np.eye(p, dtype=bool))

    @staticmethod
    def from_edges(p: int, edges: Iterable[Pair]) -> "Graph":
        """Return the graph with the given undirected edges."""
        adjacency = np.zeros((p, p), dtype=bool)
        for i, j in edges:
            adjacency[i, j] = adjacency[j, i] = True

        return Graph(p=p, adjacency=adjacency)

    @staticmethod
    def from_text(text: str) -> "Graph":
        """Parse the edge-list format: vertex count, then one ``i j`` per line."""
        lines = [line.split() for line in text.splitlines() if line.strip()]
        p = int(lines[0][0])
        return Graph.from_edges(p, ((int(i), int(j)) for i, j in lines[1:]))

    def to_text(self) -> str:
        """Serialize to the edge-list format."""
        return "".join([f"{self.p}\n"] + [f"{i} {j}\n" for i, j in self.edges()])

    def edges(self) -> List[Pair]:
        """Return edges ``(i, j)``, ``i < j``, in row-wise order."""
        rows, cols = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def n_edges(self) -> int:
        """Return the number of edges."""
        return int(np.count_nonzero(self.adjacency)) // 2

    @property
    def n_pairs(self) -> int:
        """Return the number of unordered vertex pairs."""
        return self.p * (self.p - 1) // 2

    def has_edge(self, i: int, j: int) -> bool:
        """Return True if ``i`` and ``j`` are adjacent."""
        return bool(self.adjacency[i, j])

    def neighbors(self, vertex: int) -> Set[int]:
        """Return the neighbors of a vertex."""
        return set(np.flatnonzero(self.adjacency[vertex]).tolist())

    def is_clique(self, vertices: Iterable[int]) -> bool:
        """Return True if all listed vertices are pairwise adjacent."""
        vertices = list(vertices)
        block = self.adjacency[np.ix_(vertices, vertices)]
        return bool(np.all(block | np.eye(len(vertices), dtype=bool)))

    def with_edge(self, i: int, j: int, present: bool) -> "Graph":
        """Return a copy with the edge ``(i, j)`` set or cleared."""
        adjacency = self.adjacency.copy()
        adjacency[i, j] = adjacency[j, i] = present
        return Graph(p=self.p, adjacency=adjacency)

    def edge_mask(self) -> str:
        """Return the edge set as a hex bitmask over upper-triangular pairs."""
        mask = 0
        bits = self.adjacency[np.triu_indices(self.p, 1)]
        for position in np.flatnonzero(bits).tolist():
            mask |= 1 << position

        return format(mask, "x")


@dataclass(frozen=True, eq=False)
class FreeIndexSet:
    """Ordered free coordinates: every diagonal pair plus every edge pair."""

    p: int
    pairs: Tuple[Pair, ...]
    rows: np.ndarray = field(init=False, repr=False)
    cols: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        """Cache index arrays for vectorization."""
        rows = np.array([i for i, _ in self.pairs], dtype=int)
        cols = np.array([j for _, j in self.pairs], dtype=int)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    def __len__(self) -> int:
        """Return the number of free coordinates."""
        return len(self.pairs)

    @property
    def diagonal(self) -> np.ndarray:
        """Return a boolean mask of diagonal coordinates."""
        return self.rows == self.cols

    def vectorize(self, matrix: np.ndarray) -> np.ndarray:
        """Return the free entries of a symmetric matrix as a vector."""
        return np.asarray(matrix)[self.rows, self.cols].astype(float)

    def embed(self, vector: np.ndarray) -> np.ndarray:
        """Return the symmetric matrix with the given free entries, zero elsewhere."""
        matrix = np.zeros((self.p, self.p))
        matrix[self.rows, self.cols] = vector
        matrix[self.cols, self.rows] = vector
        return matrix

    def positions(self) -> Dict[Pair, int]:
        """Return the position of each pair in the vector."""
        return {pair: position for position, pair in enumerate(self.pairs)}

    def positions_in(self, other: "FreeIndexSet") -> np.ndarray:
        """Return the positions of this set's pairs inside a superset."""
        lookup = other.positions()
        return np.array([lookup[pair] for pair in self.pairs], dtype=int)

    def labels(self) -> List[str]:
        """Return ``i_j`` column labels."""
        return [pair_label(i, j) for i, j in self.pairs]


@dataclass(frozen=True)
class CliqueCover:
    """Ordered cliques whose blocks cover every free entry."""

    cliques: Tuple[Clique, ...]

    def __len__(self) -> int:
        """Return the number of cliques."""
        return len(self.cliques)

    def covers(self, graph: Graph) -> bool:
        """Return True if every clique is complete and every free pair is covered."""
        covered: Set[Pair] = set()
        for clique in self.cliques:
            if not graph.is_clique(clique):
                return False
            covered.update((min(a, b), max(a, b)) for a in clique for b in clique)

        return set(free_index_set(graph).pairs) <= covered


def random_graph(rng: np.random.Generator, p: int, s: float) -> Graph:
    """Include each unordered pair independently with probability ``s``."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"Edge probability must lie in [0, 1]: {s}")

    upper = np.triu(rng.random((p, p)) < s, 1)
    return Graph(p=p, adjacency=upper | upper.T)


def free_index_set(graph: Graph) -> FreeIndexSet:
    """Return the diagonal and edge pairs in row-wise upper-triangular order."""
    pairs = [
        (i, j)
        for i in range(graph.p)
        for j in range(i, graph.p)
        if i == j or graph.adjacency[i, j]
    ]
    return FreeIndexSet(p=graph.p, pairs=tuple(pairs))


def full_index_set(p: int) -> FreeIndexSet:
    """Return every upper-triangular pair."""
    return free_index_set(Graph.complete(p))


def _bron_kerbosch(
    clique: Set[int],
    candidates: Set[int],
    excluded: Set[int],
    neighbors: List[Set[int]],
    found: List[Clique],
) -> None:
    if not candidates and not excluded:
        found.append(tuple(sorted(clique)))
        return

    pivot = max(candidates | excluded, key=lambda u: len(candidates & neighbors[u]))
    for vertex in sorted(candidates - neighbors[pivot]):
        _bron_kerbosch(
            clique | {vertex},
            candidates & neighbors[vertex],
            excluded & neighbors[vertex],
            neighbors,
            found,
        )
        candidates.remove(vertex)
        excluded.add(vertex)


def maximal_cliques(graph: Graph) -> CliqueCover:
    """Enumerate all maximal cliques by Bron–Kerbosch with pivoting."""
    neighbors = [graph.neighbors(vertex) for vertex in range(graph.p)]
    found: List[Clique] = []
    _bron_kerbosch(set(), set(range(graph.p)), set(), neighbors, found)
    return CliqueCover(cliques=tuple(sorted(found)))


def _with_singletons(graph: Graph, cliques: List[Clique]) -> CliqueCover:
    """Append a singleton for every vertex that no clique covers."""
    covered = {vertex for clique in cliques for vertex in clique}
    singletons = [(vertex,) for vertex in range(graph.p) if vertex not in covered]
    return CliqueCover(cliques=tuple(cliques + singletons))


def edgewise_cover(graph: Graph) -> CliqueCover:
    """Return one 2-clique per edge plus singletons for isolated vertices."""
    return _with_singletons(graph, list(graph.edges()))


def heuristic_clique_cover(rng: np.random.Generator, graph: Graph) -> CliqueCover:
    """Build a small cover of maximal cliques from a random vertex order.

    Pairs are scanned row-wise over the permuted upper triangle. An edge not
    yet inside an emitted clique seeds a clique that grows greedily over the
    vertices in permuted order.
    """
    order = rng.permutation(graph.p).tolist()
    adjacency = graph.adjacency
    covered = np.zeros((graph.p, graph.p), dtype=bool)
    cliques: List[Clique] = []

    for a, u in enumerate(order):
        for v in order[a + 1 :]:
            if not adjacency[u, v] or covered[u, v]:
                continue

            members = [u, v]
            for w in order:
                if w not in members and all(adjacency[w, m] for m in members):
                    members.append(w)

            covered[np.ix_(members, members)] = True
            cliques.append(tuple(sorted(members)))

    cover = _with_singletons(graph, cliques)
    _LOGGER.debug("Heuristic cover: %d cliques for %d edges", len(cover), graph.n_edges)
    return cover


def build_cover(strategy: str, graph: Graph, rng: np.random.Generator) -> CliqueCover:
    """Build a cover with a named strategy."""
    if strategy == "heuristic":
        return heuristic_clique_cover(rng, graph)
    if strategy == "maximal":
        return maximal_cliques(graph)
    if strategy == "edgewise":
        return edgewise_cover(graph)

    raise ValueError(f"Unknown cover strategy: {strategy}")
