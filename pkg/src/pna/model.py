"""Full networks: the recurrent encode-process-decode model and the standard deep stack.

Recurrent: an encoder convolution maps the two input features to F, then one
weight-shared convolution is applied ``depth - 1`` more times, each output
feeding a GRU that carries the node state.  ``depth`` is ``floor(N / 2)`` of
the largest graph in the batch.  Node predictions come from a 3-layer
perceptron on the final state; graph predictions from set2set followed by a
3-layer perceptron.

Standard: ``standard_depth`` distinct convolutions, every layer's output
concatenated into the readout (skip connections), mean readout for graphs.

The two models differ from one layer type to another only in the
convolutions; GRU, readout and heads are identical for a given F.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .aggregation import DegreeStats
from .batch import GraphBatch
from .config import RunConfig
from .layers import Set2Set, make_layer, mean_readout
from .nn import MLP, GRUCell, Module
from .tasks import GRAPH_TASKS, NODE_TASKS
from .tensor import Tensor

N_INPUT = 2


def _conv(cfg: RunConfig, n_in: int, stats: DegreeStats, rng: np.random.Generator, first: bool) -> Module:
    return make_layer(cfg.layer, n_in, cfg.hidden, rng, stats=stats, towers=cfg.towers,
                      divide_input=not first, aggregators=cfg.aggregators or None,
                      scalers=cfg.scalers or None)


class Network(Module):
    def __init__(self, cfg: RunConfig, stats: DegreeStats, rng: np.random.Generator):
        f = cfg.hidden
        self.cfg = cfg
        self.node_tasks = [t for t in NODE_TASKS if t in cfg.tasks]
        self.graph_tasks = [t for t in GRAPH_TASKS if t in cfg.tasks]
        if cfg.architecture == "recurrent":
            self.encoder = _conv(cfg, N_INPUT, stats, rng, first=True)
            self.processor = _conv(cfg, f, stats, rng, first=False)
            self.gru = GRUCell(f, f, rng)
            readout_width = f
        else:
            self.convs = [_conv(cfg, N_INPUT if i == 0 else f, stats, rng, first=i == 0)
                          for i in range(cfg.standard_depth)]
            readout_width = f * cfg.standard_depth
        self.node_head = MLP([readout_width, f, f, len(self.node_tasks)], rng) if self.node_tasks else None
        if self.graph_tasks:
            if cfg.architecture == "recurrent":
                self.set2set = Set2Set(f, rng, steps=3)
                self.graph_head = MLP([2 * f, f, f, len(self.graph_tasks)], rng)
            else:
                self.graph_head = MLP([readout_width, f, f, len(self.graph_tasks)], rng)

    def depth(self, batch: GraphBatch) -> int:
        return batch.depth if self.cfg.architecture == "recurrent" else self.cfg.standard_depth

    def __call__(self, x, batch: GraphBatch, rng: np.random.Generator | None = None,
                 depth: int | None = None) -> tuple[Tensor | None, Tensor | None]:
        x = T.as_tensor(x)
        drop = self.cfg.dropout if rng is not None else 0.0
        if self.cfg.architecture == "recurrent":
            m = depth if depth is not None else batch.depth
            h = self.encoder(x, batch)
            for _ in range(m - 1):
                h = self.gru(self.processor(h, batch), h)
            node_in = h
        else:
            hs, h = [], x
            for conv in self.convs:
                h = conv(h, batch)
                hs.append(h)
            node_in = T.concat(hs)
        node = self.node_head(node_in, drop, rng) if self.node_head is not None else None
        graph = None
        if self.graph_tasks:
            if self.cfg.architecture == "recurrent":
                pooled = self.set2set(node_in, batch)
            else:
                pooled = mean_readout(node_in, batch)
            graph = self.graph_head(pooled, drop, rng)
        return node, graph

    def conv_parameters(self) -> int:
        convs = [self.encoder, self.processor] if self.cfg.architecture == "recurrent" else self.convs
        return int(sum(c.num_parameters() for c in convs))


def build_network(cfg: RunConfig, stats: DegreeStats, seed: int) -> Network:
    from .graphs import child_rng

    return Network(cfg, stats, child_rng(seed, 0))


def forward_model(net: Network, batch, rng: np.random.Generator | None = None):
    """Node predictions (N x node tasks) and graph predictions (G x graph tasks) for a DataBatch."""
    return net(batch.x, batch.graphs, rng)
