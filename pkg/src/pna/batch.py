"""Disjoint union of graphs as one node set with cached segment indices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph
from .tensor import Segments


@dataclass
class GraphBatch:
    num_nodes: int
    num_graphs: int
    sizes: np.ndarray          # nodes per graph
    src: Segments              # message source per directed edge
    dst: Segments              # message target per directed edge (sorted)
    node_graph: Segments       # graph id per node
    gcn_src: Segments          # edges plus self loops
    gcn_dst: Segments
    gcn_coef: np.ndarray       # 1 / sqrt(d~_i d~_j) per self-looped edge

    @classmethod
    def from_graphs(cls, graphs: list[Graph]) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty batch")
        sizes = np.array([g.n for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        n_total = int(sizes.sum())
        srcs, dsts = [], []
        for g, off in zip(graphs, offsets):
            s, d = g.directed_edges()
            srcs.append(s + off)
            dsts.append(d + off)
        src = np.concatenate(srcs) if srcs else np.zeros(0, np.int64)
        dst = np.concatenate(dsts) if dsts else np.zeros(0, np.int64)

        deg = np.bincount(dst, minlength=n_total)
        loops = np.arange(n_total)
        gsrc = np.concatenate([src, loops])
        gdst = np.concatenate([dst, loops])
        order = np.lexsort((gsrc, gdst))
        gsrc, gdst = gsrc[order], gdst[order]
        dt = deg + 1.0
        coef = 1.0 / np.sqrt(dt[gsrc] * dt[gdst])

        return cls(
            num_nodes=n_total,
            num_graphs=len(graphs),
            sizes=sizes,
            src=Segments(src, n_total),
            dst=Segments(dst, n_total),
            node_graph=Segments(np.repeat(np.arange(len(graphs)), sizes), len(graphs)),
            gcn_src=Segments(gsrc, n_total),
            gcn_dst=Segments(gdst, n_total),
            gcn_coef=coef.reshape(-1, 1),
        )

    @property
    def degrees(self) -> np.ndarray:
        return self.dst.counts

    @property
    def depth(self) -> int:
        """Convolutions for the recurrent model: floor(N/2) of the largest graph."""
        return max(1, int(self.sizes.max()) // 2)
