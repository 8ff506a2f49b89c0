"""Parameter containers and the small dense building blocks shared by all layers."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Holds named parameters and child modules in attribute-definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + key + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{key}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.data.copy()) for k, p in self.named_parameters())

    def load_state_dict(self, state) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in own.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))


def param(shape, rng: np.random.Generator, fan_in: int | None = None, fan_out: int | None = None,
          zero: bool = False) -> Tensor:
    """Glorot-uniform weights, or zeros for biases."""
    if zero:
        return Tensor(np.zeros(shape), requires_grad=True)
    fan_in = fan_in if fan_in is not None else shape[0]
    fan_out = fan_out if fan_out is not None else shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.n_in, self.n_out = n_in, n_out
        self.weight = param((n_in, n_out), rng)
        self.bias = param((n_out,), rng, zero=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class MLP(Module):
    """Stack of linear layers with ReLU between them and no final activation."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x: Tensor, dropout: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.dropout(T.relu(x), dropout, rng)
        return x


def gru_cell(x: Tensor, h: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One gated-recurrent update.

    ``params`` holds ``w_ih`` (F_in x 3F), ``w_hh`` (F x 3F), ``b_ih`` and
    ``b_hh`` (3F), gate blocks ordered reset, update, candidate::

        r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
        z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h
    """
    f = h.shape[-1]
    if x.shape[:-1] != h.shape[:-1]:
        raise ValueError(f"gru_cell: input {x.shape} and state {h.shape} disagree")
    if params["w_ih"].shape != (x.shape[-1], 3 * f) or params["w_hh"].shape != (f, 3 * f):
        raise ValueError("gru_cell: weight shapes do not match input/state widths")
    gi = x @ params["w_ih"] + params["b_ih"]
    gh = h @ params["w_hh"] + params["b_hh"]
    r = T.sigmoid(gi[:, :f] + gh[:, :f])
    z = T.sigmoid(gi[:, f:2 * f] + gh[:, f:2 * f])
    n = T.tanh(gi[:, 2 * f:] + r * gh[:, 2 * f:])
    return (1.0 - z) * n + z * h


class GRUCell(Module):
    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator):
        self.w_ih = param((n_in, 3 * n_hidden), rng, fan_in=n_in, fan_out=n_hidden)
        self.w_hh = param((n_hidden, 3 * n_hidden), rng, fan_in=n_hidden, fan_out=n_hidden)
        self.b_ih = param((3 * n_hidden,), rng, zero=True)
        self.b_hh = param((3 * n_hidden,), rng, zero=True)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return gru_cell(x, h, vars(self))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """LSTM step with gate blocks ordered input, forget, cell, output."""
    f = h.shape[-1]
    g = x @ params["w_ih"] + params["b_ih"] + h @ params["w_hh"] + params["b_hh"]
    i = T.sigmoid(g[:, :f])
    fg = T.sigmoid(g[:, f:2 * f])
    cand = T.tanh(g[:, 2 * f:3 * f])
    o = T.sigmoid(g[:, 3 * f:])
    c_new = fg * c + i * cand
    return o * T.tanh(c_new), c_new


class LSTMCell(Module):
    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator):
        self.w_ih = param((n_in, 4 * n_hidden), rng, fan_in=n_in, fan_out=n_hidden)
        self.w_hh = param((n_hidden, 4 * n_hidden), rng, fan_in=n_hidden, fan_out=n_hidden)
        self.b_ih = param((4 * n_hidden,), rng, zero=True)
        self.b_hh = param((4 * n_hidden,), rng, zero=True)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        return lstm_cell(x, h, c, vars(self))
