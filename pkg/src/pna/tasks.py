"""Exact labels for the six benchmark tasks.

Node tasks: shortest-path hop counts from the source, eccentricity, and the
Laplacian features ``(D - A) x``.  Graph tasks: connectivity, diameter and
the adjacency spectral radius.  Distances on disconnected graphs are taken
within each connected component; nodes the source cannot reach are masked.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, InputFeatures

NODE_TASKS = ("sssp", "eccentricity", "laplacian")
GRAPH_TASKS = ("is_connected", "diameter", "spectral_radius")
TASKS = NODE_TASKS + GRAPH_TASKS


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class LabelSet:
    sssp: np.ndarray
    eccentricity: np.ndarray
    laplacian: np.ndarray
    is_connected: float
    diameter: float
    spectral_radius: float
    node_mask: np.ndarray

    def node_matrix(self) -> np.ndarray:
        return np.stack([self.sssp, self.eccentricity, self.laplacian], axis=1)

    def graph_vector(self) -> np.ndarray:
        return np.array([self.is_connected, self.diameter, self.spectral_radius])


def bfs(g: Graph, source: int) -> np.ndarray:
    """Hop distances from ``source``; -1 where unreachable."""
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def sssp(g: Graph, source: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} outside 0..{g.n - 1}")
    d = bfs(g, source)
    mask = (d >= 0).astype(np.float64)
    return np.where(d >= 0, d, 0).astype(np.float64), mask


def eccentricity(g: Graph) -> np.ndarray:
    """Largest hop distance from each node to any node of its own component."""
    return np.array([bfs(g, i).max() for i in range(g.n)], dtype=np.float64)


def laplacian_features(g: Graph, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = g.degrees() * x
    if g.num_edges:
        i, j = g.edges[:, 0], g.edges[:, 1]
        np.subtract.at(out, i, x[j])
        np.subtract.at(out, j, x[i])
    return out


def connectivity_diameter(g: Graph, ecc: np.ndarray | None = None) -> tuple[float, float]:
    connected = bool(np.all(bfs(g, 0) >= 0))
    if ecc is None:
        ecc = eccentricity(g)
    return float(connected), float(ecc.max())


def spectral_radius(g: Graph, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest adjacency eigenvalue by power iteration on ``A + I``.

    The unit shift keeps the Perron eigenvalue strictly dominant on bipartite
    graphs, where ``-lambda_max`` is also an eigenvalue of ``A``.  The start
    vector is all-ones, which has positive overlap with every Perron vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = g.adjacency() + np.eye(g.n)
    x = np.full(g.n, 1.0 / np.sqrt(g.n))
    rq = float(x @ b @ x)
    for _ in range(max_iter):
        y = b @ x
        x = y / np.linalg.norm(y)
        new = float(x @ b @ x)
        if abs(new - rq) < tol:
            return new - 1.0
        rq = new
    warnings.warn(f"power iteration did not converge in {max_iter} steps", ConvergenceWarning)
    return rq - 1.0


def compute_labels(g: Graph, feats: InputFeatures) -> LabelSet:
    dist, mask = sssp(g, feats.source)
    ecc = eccentricity(g)
    conn, diam = connectivity_diameter(g, ecc)
    return LabelSet(
        sssp=dist,
        eccentricity=ecc,
        laplacian=laplacian_features(g, feats.random_feature),
        is_connected=conn,
        diameter=diam,
        spectral_radius=spectral_radius(g),
        node_mask=mask,
    )
