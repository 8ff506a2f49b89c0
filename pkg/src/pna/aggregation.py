"""Neighbourhood aggregators and degree scalers.

Aggregators reduce the multiset of messages arriving at a node to one vector
per node; scalers multiply the result by a function of the node degree.  The
PNA reduction is the tensor product of a scaler list and an aggregator list,
concatenated scalers-outer, aggregators-inner.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Segments, Tensor

EPS = 1e-5

DEFAULT_AGGREGATORS = ("mean", "std", "max", "min")
DEFAULT_SCALERS = ("identity", "amp", "att")

_BASE_AGGREGATORS = {"mean", "std", "max", "min", "softmax", "softmin"}
_SCALER_ALIASES = {"amplification": "amp", "attenuation": "att"}


def parse_aggregator(name: str) -> tuple[str, int]:
    """``'moment4'`` -> ``('moment', 4)``; plain kinds carry order 0."""
    if name in _BASE_AGGREGATORS:
        return name, 0
    m = re.fullmatch(r"moment(\d+)", name)
    if m:
        k = int(m.group(1))
        if k < 3:
            raise ValueError("moment order must be >= 3 (orders 1 and 2 are mean and std)")
        return "moment", k
    raise ValueError(f"unknown aggregator {name!r}")


def parse_scaler(name: str) -> float | str:
    """Canonical scaler: 'identity', 'linear', or an exponent alpha in [-1, 1]."""
    name = _SCALER_ALIASES.get(name, name)
    if name in ("identity", "linear"):
        return name
    if name == "amp":
        return 1.0
    if name == "att":
        return -1.0
    if name.startswith("alpha:"):
        alpha = float(name.split(":", 1)[1])
        if not -1.0 <= alpha <= 1.0:
            raise ValueError("scaler exponent must lie in [-1, 1]")
        return alpha
    raise ValueError(f"unknown scaler {name!r}")


@dataclass(frozen=True)
class DegreeStats:
    """``delta``: mean of log(d + 1) over every node of the training graphs."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def fit_delta(graphs: Iterable) -> DegreeStats:
    """Fit the log-degree normaliser over graphs (anything with ``degrees()``) or degree arrays."""
    logs = [np.log(np.asarray(g.degrees() if hasattr(g, "degrees") else g, dtype=np.float64) + 1.0)
            for g in graphs]
    if not logs or not sum(len(x) for x in logs):
        raise ValueError("fit_delta needs a non-empty training set")
    return DegreeStats(float(np.concatenate(logs).mean()))


def _col(v: np.ndarray) -> Tensor:
    return Tensor._wrap(np.asarray(v, dtype=np.float64).reshape(-1, 1), False)


def reduce(kind: str, x: Tensor, seg: Segments, eps: float = EPS) -> Tensor:
    """Differentiable per-segment statistic of the rows of ``x`` (E x F -> N x F)."""
    name, k = parse_aggregator(kind)
    if name == "mean":
        return T.segment_mean(x, seg)
    if name == "max":
        return T.segment_max(x, seg)
    if name == "min":
        return T.segment_min(x, seg)
    if name == "std":
        mu = T.segment_mean(x, seg)
        var = T.segment_mean(T.square(x), seg) - T.square(mu)
        return T.sqrt(T.relu(var) + eps)
    if name == "moment":
        mu = T.segment_mean(x, seg)
        centred = x - T.gather(mu, seg)
        m = T.segment_mean(T.power(centred, k), seg)
        return T.signed_pow(m, 1.0 / k, eps)
    if name == "softmax":
        w = T.segment_softmax(x, seg)
        return T.segment_sum(x * w, seg)
    if name == "softmin":
        return -reduce("softmax", -x, seg, eps)
    raise AssertionError(name)


def scaler_factor(kind: str, degrees: np.ndarray, stats: DegreeStats | None) -> np.ndarray:
    d = np.asarray(degrees, dtype=np.float64)
    if np.any(d < 1):
        raise ValueError("degree scalers need d >= 1")
    s = parse_scaler(kind)
    if s == "identity":
        return np.ones_like(d)
    if s == "linear":
        return d
    if stats is None:
        raise ValueError(f"scaler {kind!r} needs a fitted delta")
    return (np.log(d + 1.0) / stats.delta) ** s


def neighborhood_reduce(aggregators: Sequence[str], scalers: Sequence[str], messages: Tensor,
                        seg: Segments, stats: DegreeStats | None, eps: float = EPS) -> Tensor:
    """All (scaler, aggregator) pairs over each node's incoming messages.

    Output width is ``len(scalers) * len(aggregators) * F``, with blocks in
    scaler-major order.
    """
    aggs = [reduce(a, messages, seg, eps) for a in aggregators]
    degrees = seg.counts
    blocks = []
    for s in scalers:
        if parse_scaler(s) == "identity":
            blocks.extend(aggs)
        else:
            f = _col(scaler_factor(s, degrees, stats))
            blocks.extend(a * f for a in aggs)
    return T.concat(blocks, axis=-1) if len(blocks) > 1 else blocks[0]


# -- plain multiset versions -------------------------------------------------


def aggregate(kind: str, values, eps: float = EPS) -> np.ndarray:
    """Statistic of one multiset; rows of ``values`` are the elements."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape[0] == 0:
        raise ValueError("cannot aggregate an empty multiset")
    # sorting each column makes the float reduction order independent of element order
    flat = np.sort(v.reshape(v.shape[0], -1), axis=0)
    with T.no_grad():
        out = reduce(kind, Tensor(flat), Segments(np.zeros(len(flat), dtype=np.int64), 1), eps)
    return out.data.reshape(v.shape[1:])


def scale(kind: str, value, d: int, stats: DegreeStats | None = None) -> np.ndarray:
    if d < 1:
        raise ValueError("degree must be >= 1")
    return np.asarray(value, dtype=np.float64) * scaler_factor(kind, np.array([d]), stats)[0]
