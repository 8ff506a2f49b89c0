"""Graph convolutions (PNA and baselines) and graph readouts."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .aggregation import DEFAULT_AGGREGATORS, DEFAULT_SCALERS, EPS, DegreeStats, neighborhood_reduce
from .batch import GraphBatch
from .nn import MLP, Linear, LSTMCell, Module, param
from .tensor import Tensor

LAYER_NAMES = ("pna", "pna_noscalers", "gcn", "gat", "gin", "mpnn_sum", "mpnn_max")


class TowerAggregationLayer(Module):
    """Message passing with towers and a list of (scaler, aggregator) reductions.

    Each tower owns a slice of the input features (or all of them when
    ``divide_input`` is false).  Per tower, the message is a linear map of
    ``[x_i || x_j]``, the reductions are concatenated with ``x_i`` and a
    linear update maps them to the tower's share of the output.  Tower
    outputs are concatenated and mixed by one more linear layer.
    """

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 aggregators: Sequence[str] = DEFAULT_AGGREGATORS,
                 scalers: Sequence[str] = DEFAULT_SCALERS,
                 towers: int = 4, divide_input: bool = True,
                 stats: DegreeStats | None = None, eps: float = EPS):
        if n_out % towers or (divide_input and n_in % towers):
            raise ValueError(f"features ({n_in}->{n_out}) not divisible into {towers} towers")
        self.n_in, self.n_out, self.towers = n_in, n_out, towers
        self.aggregators, self.scalers = tuple(aggregators), tuple(scalers)
        self.divide_input = divide_input
        self.stats, self.eps = stats, eps
        f_in = self.tower_in
        f_out = n_out // towers
        self.pretrans = [Linear(2 * f_in, f_in, rng) for _ in range(towers)]
        self.posttrans = [Linear(self.update_width, f_out, rng) for _ in range(towers)]
        self.mixing = Linear(n_out, n_out, rng)
        self._layout = self._placements()

    @property
    def tower_in(self) -> int:
        return self.n_in // self.towers if self.divide_input else self.n_in

    @property
    def num_reductions(self) -> int:
        return len(self.aggregators) * len(self.scalers)

    @property
    def update_width(self) -> int:
        """Input width of one tower's update map: self features plus every reduction."""
        return (1 + self.num_reductions) * self.tower_in

    def _placements(self):
        f_in, t_n = self.tower_in, self.towers
        f_out = self.n_out // t_n
        msg_w = t_n * f_in
        pre, post = [], []
        for t in range(t_n):
            x_cols = np.arange(t * f_in, (t + 1) * f_in) if self.divide_input else np.arange(self.n_in)
            m_cols = np.arange(t * f_in, (t + 1) * f_in)
            pre.append((x_cols, m_cols))
            rows = [x_cols] + [self.n_in + b * msg_w + m_cols for b in range(self.num_reductions)]
            post.append((np.concatenate(rows), np.arange(t * f_out, (t + 1) * f_out)))
        return pre, post, msg_w

    def __call__(self, x: Tensor, batch: GraphBatch) -> Tensor:
        return T.leaky_relu(self.mixing(self.tower_outputs(x, batch)))

    def tower_outputs(self, x: Tensor, batch: GraphBatch) -> Tensor:
        """Concatenated tower outputs before mixing."""
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected {self.n_in} input features, got {x.shape[-1]}")
        pre, post, msg_w = self._layout
        f_in = self.tower_in
        w_self = T.assemble([p.weight[:f_in] for p in self.pretrans], pre, (self.n_in, msg_w))
        w_nbr = T.assemble([p.weight[f_in:] for p in self.pretrans], pre, (self.n_in, msg_w))
        b_msg = T.concat([p.bias for p in self.pretrans])
        msg = T.gather(x @ w_self + b_msg, batch.dst) + T.gather(x @ w_nbr, batch.src)
        red = neighborhood_reduce(self.aggregators, self.scalers, msg, batch.dst, self.stats, self.eps)
        upd_in = T.concat([x, red])
        w_upd = T.assemble([p.weight for p in self.posttrans], post, (upd_in.shape[-1], self.n_out))
        return upd_in @ w_upd + T.concat([p.bias for p in self.posttrans])


class GCNLayer(Module):
    """``relu(D~^-1/2 A~ D~^-1/2 X W + b)`` with self loops."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.lin = Linear(n_in, n_out, rng)

    def __call__(self, x: Tensor, batch: GraphBatch) -> Tensor:
        xw = x @ self.lin.weight
        coef = Tensor._wrap(batch.gcn_coef, False)
        agg = T.segment_sum(T.gather(xw, batch.gcn_src) * coef, batch.gcn_dst)
        return T.relu(agg + self.lin.bias)


class GATLayer(Module):
    """Multi-head graph attention over the neighbours, heads concatenated."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, heads: int = 4,
                 negative_slope: float = 0.2):
        if n_out % heads:
            raise ValueError(f"{n_out} features not divisible into {heads} heads")
        self.heads, self.n_out = heads, n_out
        f_h = n_out // heads
        self.slope = negative_slope
        self.proj = [param((n_in, f_h), rng) for _ in range(heads)]
        self.att_src = [param((f_h, 1), rng, fan_in=f_h, fan_out=1) for _ in range(heads)]
        self.att_dst = [param((f_h, 1), rng, fan_in=f_h, fan_out=1) for _ in range(heads)]
        cols = [np.arange(h * f_h, (h + 1) * f_h) for h in range(heads)]
        self._att_place = [(c, np.array([h])) for h, c in enumerate(cols)]
        expand = np.zeros((heads, n_out))
        for h, c in enumerate(cols):
            expand[h, c] = 1.0
        self._expand = Tensor(expand)

    def attention(self, x: Tensor, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        """Per-edge attention weights (E x heads) and projected features."""
        z = x @ T.concat(self.proj, axis=-1)
        a_src = T.assemble(self.att_src, self._att_place, (self.n_out, self.heads))
        a_dst = T.assemble(self.att_dst, self._att_place, (self.n_out, self.heads))
        logits = T.gather(z @ a_dst, batch.dst) + T.gather(z @ a_src, batch.src)
        alpha = T.segment_softmax(T.leaky_relu(logits, self.slope), batch.dst)
        return alpha, z

    def __call__(self, x: Tensor, batch: GraphBatch) -> Tensor:
        alpha, z = self.attention(x, batch)
        msg = T.gather(z, batch.src) * (alpha @ self._expand)
        return T.relu(T.segment_sum(msg, batch.dst))


class GINLayer(Module):
    """``MLP((1 + eps) x_i + sum_j x_j)`` with a two-layer MLP and learnable eps."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.eps = Tensor(np.zeros(1), requires_grad=True)
        self.mlp = MLP([n_in, n_out, n_out], rng)

    def __call__(self, x: Tensor, batch: GraphBatch) -> Tensor:
        h = x * (self.eps + 1.0) + T.segment_sum(T.gather(x, batch.src), batch.dst)
        return self.mlp(h)


def make_layer(name: str, n_in: int, n_out: int, rng: np.random.Generator, *,
               stats: DegreeStats | None = None, towers: int = 4, divide_input: bool = True,
               aggregators: Sequence[str] | None = None, scalers: Sequence[str] | None = None) -> Module:
    """Build a convolution by its config name (see ``LAYER_NAMES``)."""
    if name == "pna":
        return TowerAggregationLayer(n_in, n_out, rng, aggregators or DEFAULT_AGGREGATORS,
                                     scalers or DEFAULT_SCALERS, towers, divide_input, stats)
    if name == "pna_noscalers":
        return TowerAggregationLayer(n_in, n_out, rng, aggregators or DEFAULT_AGGREGATORS,
                                     ("identity",), towers, divide_input, stats)
    if name == "mpnn_sum":
        # sum = mean composed with the linear degree scaler
        return TowerAggregationLayer(n_in, n_out, rng, ("mean",), ("linear",), towers, divide_input, stats)
    if name == "mpnn_max":
        return TowerAggregationLayer(n_in, n_out, rng, ("max",), ("identity",), towers, divide_input, stats)
    if name == "gcn":
        return GCNLayer(n_in, n_out, rng)
    if name == "gat":
        return GATLayer(n_in, n_out, rng, heads=towers)
    if name == "gin":
        return GINLayer(n_in, n_out, rng)
    raise ValueError(f"unknown layer {name!r}; valid names: {', '.join(LAYER_NAMES)}")


class Set2Set(Module):
    """Content-attention readout: an LSTM query attends over node states for ``steps`` rounds."""

    def __init__(self, n_features: int, rng: np.random.Generator, steps: int = 3):
        if steps < 1:
            raise ValueError("set2set needs at least one step")
        self.n_features, self.steps = n_features, steps
        self.lstm = LSTMCell(2 * n_features, n_features, rng)

    def __call__(self, h: Tensor, batch: GraphBatch) -> Tensor:
        if np.any(batch.sizes == 0):
            raise ValueError("set2set over an empty graph")
        g, f = batch.num_graphs, self.n_features
        q_star = Tensor(np.zeros((g, 2 * f)))
        hs = Tensor(np.zeros((g, f)))
        cs = Tensor(np.zeros((g, f)))
        for _ in range(self.steps):
            hs, cs = self.lstm(q_star, hs, cs)
            e = T.sum(h * T.gather(hs, batch.node_graph), axis=-1, keepdims=True)
            a = T.segment_softmax(e, batch.node_graph)
            r = T.segment_sum(h * a, batch.node_graph)
            q_star = T.concat([hs, r])
        return q_star


def mean_readout(h: Tensor, batch: GraphBatch) -> Tensor:
    return T.segment_mean(h, batch.node_graph)
