"""Random undirected graphs for the multi-task benchmark.

Ten families are drawn with fixed proportions, perturbed by random edge
toggling, and kept only when no node is left without neighbours.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Family(str, enum.Enum):
    ERDOS_RENYI = "erdos_renyi"
    BARABASI_ALBERT = "barabasi_albert"
    GRID = "grid"
    CAVEMAN = "caveman"
    TREE = "tree"
    LADDER = "ladder"
    LINE = "line"
    STAR = "star"
    CATERPILLAR = "caterpillar"
    LOBSTER = "lobster"


PROPORTIONS: dict[Family, float] = {
    Family.ERDOS_RENYI: 0.20,
    Family.BARABASI_ALBERT: 0.20,
    Family.GRID: 0.05,
    Family.CAVEMAN: 0.05,
    Family.TREE: 0.15,
    Family.LADDER: 0.05,
    Family.LINE: 0.05,
    Family.STAR: 0.05,
    Family.CATERPILLAR: 0.10,
    Family.LOBSTER: 0.10,
}

TOGGLE_RATE = 0.1


@dataclass
class Graph:
    """Simple undirected graph on nodes ``0..n-1``.

    ``edges`` is an (E, 2) int array of pairs ``i < j`` in lexicographic order.
    """

    n: int
    edges: np.ndarray
    family: Family | None = None
    _nbrs: list[np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            e = np.sort(e, axis=1)
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loop")
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            e = e[np.lexsort((e[:, 1], e[:, 0]))]
            if np.any(np.all(e[1:] == e[:-1], axis=1)):
                raise ValueError("parallel edge")
        self.edges = e
        if self.family is not None:
            self.family = Family(self.family)

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, family: Family | None = None) -> "Graph":
        i, j = np.nonzero(np.triu(adj, 1))
        return cls(adj.shape[0], np.stack([i, j], axis=1), family)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def neighbors(self, i: int) -> np.ndarray:
        if self._nbrs is None:
            both = np.concatenate([self.edges, self.edges[:, ::-1]])
            both = both[np.lexsort((both[:, 1], both[:, 0]))]
            cuts = np.searchsorted(both[:, 0], np.arange(self.n + 1))
            self._nbrs = [both[cuts[k]:cuts[k + 1], 1] for k in range(self.n)]
        return self._nbrs[i]

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge as (src, dst), sorted by dst then src."""
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((src, dst))
        return src[order], dst[order]

    def has_singleton(self) -> bool:
        return bool(np.any(self.degrees() == 0))


@dataclass
class InputFeatures:
    onehot_source: np.ndarray
    random_feature: np.ndarray

    @property
    def source(self) -> int:
        return int(np.argmax(self.onehot_source))


# -- families ---------------------------------------------------------------


def _path_edges(nodes) -> list[tuple[int, int]]:
    return list(zip(nodes[:-1], nodes[1:]))


def _erdos_renyi(n, rng):
    p = rng.random()
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    return np.stack([iu[0][keep], iu[1][keep]], axis=1)


def _barabasi_albert(n, rng):
    # seed with a star on k+1 nodes so every new node always finds k distinct targets
    k = int(rng.integers(1, n))
    edges = [(0, t) for t in range(1, k + 1)]
    repeated = [0] * k + list(range(1, k + 1))
    for new in range(k + 1, n):
        targets: set[int] = set()
        while len(targets) < k:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(targets):
            edges.append((t, new))
            repeated.extend((t, new))
    return edges


def _near_square(n: int) -> tuple[int, int] | None:
    for m in range(math.isqrt(n), 1, -1):
        if n % m == 0:
            return m, n // m
    return None


def _grid_shape(n: int) -> tuple[int, int]:
    exact = _near_square(n)
    if exact is not None:
        return exact
    # prime n: smallest near-square m x k >= n; trailing cells are dropped
    m = math.isqrt(n - 1) + 1 if n > 1 else 1
    return m, -(-n // m)


def _grid(n, rng):
    rows, cols = _grid_shape(n)
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return [(a, b) for a, b in edges if b < n]


def _caveman_shape(n: int) -> tuple[int, int]:
    exact = _near_square(n)
    if exact is not None:
        return exact
    # prime n: m cliques of size k, m*k >= n, closest to square, last clique keeps >= 2 nodes
    best = None
    for m in range(1, n + 1):
        for k in range(2, n + 1):
            cut = m * k - n
            if cut < 0 or cut > k - 2:
                continue
            key = (abs(m - k), m * k, m)
            if best is None or key < best[0]:
                best = (key, (m, k))
    return best[1]


def _caveman(n, rng):
    m, k = _caveman_shape(n)
    edges = []
    for c in range(m):
        members = [v for v in range(c * k, (c + 1) * k) if v < n]
        edges += [(a, b) for i, a in enumerate(members) for b in members[i + 1:]]
    return edges


def _powerlaw_tree(n, rng, exponent: float = 3.0):
    # Each node gets an attractiveness drawn from a discrete power law
    # P(w) ~ w^-exponent (w >= 1).  Nodes arrive in order; node t attaches to
    # one earlier node picked with probability proportional to attractiveness.
    # One parent per arrival => connected and acyclic with n-1 edges, and the
    # heavy-tailed weights give a heavy-tailed degree distribution.
    w = rng.zipf(exponent, size=n).astype(np.float64)
    edges = []
    for t in range(1, n):
        p = w[:t] / w[:t].sum()
        parent = int(rng.choice(t, p=p))
        edges.append((parent, t))
    return edges


def _ladder(n, rng):
    half = n // 2
    edges = _path_edges(list(range(half))) + _path_edges(list(range(half, 2 * half)))
    edges += [(i, i + half) for i in range(half)]
    if n % 2:
        edges.append((0, n - 1))
    return edges


def _line(n, rng):
    return _path_edges(list(range(n)))


def _star(n, rng):
    return [(0, i) for i in range(1, n)]


def _caterpillar(n, rng):
    b = int(rng.integers(1, n))
    edges = _path_edges(list(range(b)))
    edges += [(int(rng.integers(b)), v) for v in range(b, n)]
    return edges


def _lobster(n, rng):
    b = int(rng.integers(1, n))
    p = int(rng.integers(1, n - b + 1))
    edges = _path_edges(list(range(b)))
    edges += [(int(rng.integers(b)), v) for v in range(b, b + p)]
    edges += [(b + int(rng.integers(p)), v) for v in range(b + p, n)]
    return edges


_BUILDERS = {
    Family.ERDOS_RENYI: _erdos_renyi,
    Family.BARABASI_ALBERT: _barabasi_albert,
    Family.GRID: _grid,
    Family.CAVEMAN: _caveman,
    Family.TREE: _powerlaw_tree,
    Family.LADDER: _ladder,
    Family.LINE: _line,
    Family.STAR: _star,
    Family.CATERPILLAR: _caterpillar,
    Family.LOBSTER: _lobster,
}


def generate_family(family, n: int, rng: np.random.Generator) -> Graph:
    """Untoggled graph of ``n`` nodes from ``family``."""
    if n < 2:
        raise ValueError("graphs need at least 2 nodes")
    family = Family(family)
    return Graph(n, np.asarray(_BUILDERS[family](n, rng), dtype=np.int64).reshape(-1, 2), family)


def toggle_probabilities(n: int, e: int) -> tuple[float, float]:
    """(P_e, P_m) for a graph with ``e`` edges.

    A ratio with zero numerator is 0, and a probability over an empty class
    (no edges, or no missing edges) is reported as 0.
    """
    m = n * (n - 1) // 2 - e
    if e <= m:
        p_e, p_m = TOGGLE_RATE, (TOGGLE_RATE * e / m if m else 0.0)
    else:
        p_e, p_m = (TOGGLE_RATE * m / e if e else 0.0), TOGGLE_RATE
    return (p_e if e else 0.0), (p_m if m else 0.0)


def toggle_edges(g: Graph, rng: np.random.Generator) -> Graph:
    """Remove each edge with P_e and add each missing edge with P_m."""
    n = g.n
    p_e, p_m = toggle_probabilities(n, g.num_edges)
    adj = g.adjacency() > 0
    iu = np.triu_indices(n, 1)
    present = adj[iu]
    u = rng.random(len(present))
    flip = np.where(present, u < p_e, u < p_m)
    new = present ^ flip
    return Graph(n, np.stack([iu[0][new], iu[1][new]], axis=1), g.family)


def sample_benchmark_graph(n_range: tuple[int, int], rng: np.random.Generator,
                           max_tries: int = 100_000) -> Graph:
    """Draw a family and a size, build, toggle, and resample until no singleton."""
    lo, hi = n_range
    if lo < 2 or hi < lo:
        raise ValueError(f"invalid node range {n_range}")
    families = list(PROPORTIONS)
    probs = np.array([PROPORTIONS[f] for f in families])
    family = families[int(rng.choice(len(families), p=probs))]
    n = int(rng.integers(lo, hi + 1))
    for _ in range(max_tries):
        g = toggle_edges(generate_family(family, n, rng), rng)
        if not g.has_singleton():
            return g
    raise RuntimeError(f"no singleton-free {family.value} graph with n={n} after {max_tries} tries")


def attach_features(g: Graph, rng: np.random.Generator) -> InputFeatures:
    onehot = np.zeros(g.n)
    onehot[int(rng.integers(g.n))] = 1.0
    return InputFeatures(onehot, rng.random(g.n))


def child_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for item ``index`` of a seeded collection."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))
