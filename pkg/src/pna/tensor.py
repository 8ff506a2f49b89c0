"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable primitive records a node on the active :class:`Tape`.
Backward walks the tape in reverse insertion order, so each node is
visited exactly once and the result does not depend on Python object ids.
"""

from __future__ import annotations

import contextlib
import itertools
import math
import threading
import weakref
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class TapeError(RuntimeError):
    pass


class EmptySegmentError(ValueError):
    pass


class Tape:
    """Ordered record of the primitive operations of one forward program."""

    _ids = itertools.count(1)

    def __init__(self) -> None:
        self.id = next(Tape._ids)
        _tapes[self.id] = self
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: "Tensor", parents: tuple["Tensor", ...], fn: Callable) -> None:
        if self.consumed:
            raise TapeError("tape already consumed by backward(); start a new tape")
        for p in parents:
            if p.tape_id is not None and p.tape_id != self.id:
                raise TapeError("operands belong to a different tape")
        out.tape_id = self.id
        self.nodes.append((out, parents, fn))

    def backward(self, loss: "Tensor") -> None:
        if self.consumed:
            raise TapeError("backward() already ran on this tape; reset and recompute")
        self.consumed = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, parents, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            parent_grads = fn(g)
            for p, pg in zip(parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if p.tape_id is None:
                    p._accumulate(pg)
                else:
                    key = id(p)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
        self.nodes.clear()


_state = threading.local()
_tapes: "weakref.WeakValueDictionary[int, Tape]" = weakref.WeakValueDictionary()


def _tape() -> Tape:
    t = getattr(_state, "tape", None)
    if t is None or t.consumed:
        t = _state.tape = Tape()
    return t


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def current_tape() -> Tape:
    return _tape()


@contextlib.contextmanager
def new_tape():
    """Run the enclosed program on a fresh tape, restoring the previous one after."""
    prev = getattr(_state, "tape", None)
    t = _state.tape = Tape()
    try:
        yield t
    finally:
        _state.tape = prev


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _check_finite(data: np.ndarray) -> None:
    # sum() propagates NaN/Inf; a false positive needs values near float max
    if data.size and not math.isfinite(float(data.sum())):
        if not np.isfinite(data).all():
            raise NonFiniteError("non-finite value produced")


class Tensor:
    """A float64 array that may take part in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "tape_id", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        if data.dtype != np.float64:
            data = data.astype(np.float64)
        _check_finite(data)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t.tape_id = None
        t.name = None
        return t

    def _accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: div(self, o)
    __rtruediv__ = lambda self, o: div(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __rmatmul__ = lambda self, o: matmul(o, self)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, idx: slice_(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor) -> None:
    """Accumulate dloss/dx into ``x.grad`` for every leaf that requires it."""
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss does not require grad (detached from every parameter)")
    if loss.tape_id is None:
        loss._accumulate(np.ones_like(loss.data))
        return
    tape = _tapes.get(loss.tape_id)
    if tape is None:
        raise TapeError("loss was recorded on a tape that no longer exists")
    tape.backward(loss)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _op(data: np.ndarray, parents: tuple[Tensor, ...], fn: Callable) -> Tensor:
    rg = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, rg)
    if rg:
        _tape().record(out, parents, fn)
    return out


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _op(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _op(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def fn(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return _op(ad * bd, (a, b), fn)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if np.any(bd == 0):
        raise ZeroDivisionError("division by zero in tensor div")
    out = ad / bd

    def fn(g):
        return (
            _unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None,
        )

    return _op(out, (a, b), fn)


def neg(a: Tensor) -> Tensor:
    return _op(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def fn(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _op(ad @ bd, (a, b), fn)


# -- unary nonlinearities --------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.data > 0
    scale = np.where(mask, 1.0, slope)
    return _op(x.data * scale, (x,), lambda g: (g * scale,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _op(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _op(out, (x,), lambda g: (g * (1.0 - out * out),))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _op(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    d = x.data
    if np.any(d <= 0):
        raise ValueError("log of a non-positive value")
    return _op(np.log(d), (x,), lambda g: (g / d,))


def sqrt(x: Tensor) -> Tensor:
    d = x.data
    if np.any(d < 0):
        raise ValueError("sqrt of a negative value")
    out = np.sqrt(d)

    def fn(g):
        if np.any(out == 0):
            raise ZeroDivisionError("sqrt gradient undefined at 0")
        return (g * 0.5 / out,)

    return _op(out, (x,), fn)


def signed_pow(x: Tensor, p: float, eps: float = 0.0) -> Tensor:
    """``sign(x) * (|x| + eps) ** p`` with ``sign(0) = 0``."""
    d = x.data
    s = np.sign(d)
    base = np.abs(d) + eps
    if p < 1 and eps == 0 and np.any(base == 0):
        zero = base == 0
        safe = np.where(zero, 1.0, base)
        out = s * safe**p

        def fn(g):
            if np.any(zero):
                raise ZeroDivisionError("signed_pow gradient undefined at 0")
            return (g * p * safe ** (p - 1),)

        return _op(out, (x,), fn)
    out = s * base**p
    return _op(out, (x,), lambda g: (g * p * base ** (p - 1),))


def square(x: Tensor) -> Tensor:
    d = x.data
    return _op(d * d, (x,), lambda g: (2.0 * g * d,))


def power(x: Tensor, k: int) -> Tensor:
    """Integer power ``x ** k`` for ``k >= 1``."""
    if int(k) != k or k < 1:
        raise ValueError("power() takes a positive integer exponent")
    k = int(k)
    d = x.data
    return _op(d**k, (x,), lambda g: (g * k * d ** (k - 1),))


# -- shape ops -------------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty list")
    ax = axis % tensors[0].ndim
    lead = [t.shape[:ax] + t.shape[ax + 1:] for t in tensors]
    if any(s != lead[0] for s in lead):
        raise ValueError(f"concat shape mismatch: {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def fn(g):
        lead = (slice(None),) * ax
        return tuple(g[lead + (slice(bounds[i], bounds[i + 1]),)] for i in range(len(tensors)))

    return _op(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), fn)


def slice_(x: Tensor, idx) -> Tensor:
    shape = x.shape
    out = x.data[idx]

    def fn(g):
        full = np.zeros(shape)
        if _is_advanced(idx):
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return _op(np.array(out, copy=True), (x,), fn)


def _is_advanced(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return _op(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _op(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def assemble(blocks: Sequence[Tensor], placements: Sequence[tuple], shape: tuple[int, int]) -> Tensor:
    """Place 2-D blocks into a zero matrix at ``np.ix_(rows, cols)`` positions.

    Used to build block-structured weights (towers, attention heads) whose
    free parameters are the blocks themselves.
    """
    out = np.zeros(shape)
    taken = np.zeros(shape, dtype=bool)
    idx = []
    for b, (rows, cols) in zip(blocks, placements):
        ix = np.ix_(np.asarray(rows), np.asarray(cols))
        if b.shape != (len(rows), len(cols)):
            raise ValueError(f"block shape {b.shape} does not match placement")
        if taken[ix].any():
            raise ValueError("overlapping placements")
        taken[ix] = True
        out[ix] = b.data
        idx.append(ix)
    return _op(out, tuple(blocks), lambda g: tuple(g[ix] for ix in idx))


# -- gather / segment reductions ---------------------------------------------


class Segments:
    """Integer segment ids for the rows of a tensor.

    Caches the stable sort order and a sparse summation matrix so repeated
    reductions over the same index (every layer, every epoch) stay cheap.
    """

    def __init__(self, ids, num_segments: int | None = None):
        ids = np.asarray(ids, dtype=np.int64).ravel()
        if num_segments is None:
            num_segments = int(ids.max()) + 1 if ids.size else 0
        if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
            raise IndexError("segment id out of range")
        self.ids = ids
        self.num_segments = int(num_segments)
        self.counts = np.bincount(ids, minlength=self.num_segments)
        is_sorted = ids.size < 2 or bool(np.all(ids[1:] >= ids[:-1]))
        self.order = None if is_sorted else np.argsort(ids, kind="stable")
        self.starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.int64)
        self._matrix = None

    def __len__(self) -> int:
        return self.ids.size

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            n = self.ids.size
            self._matrix = sp.csr_matrix(
                (np.ones(n), (self.ids, np.arange(n))), shape=(self.num_segments, n)
            )
        return self._matrix

    def reduce_sum(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.ids.size:
            raise ValueError(f"{x.shape[0]} rows for {self.ids.size} segment ids")
        flat = x.reshape(x.shape[0], -1)
        return np.asarray(self.matrix @ flat).reshape((self.num_segments,) + x.shape[1:])

    def require_nonempty(self) -> None:
        if self.num_segments and self.counts.min() == 0:
            raise EmptySegmentError("reduction over an empty segment")


def _segments(segments, num_segments) -> Segments:
    if isinstance(segments, Segments):
        if num_segments is not None and num_segments != segments.num_segments:
            raise ValueError("num_segments disagrees with the Segments object")
        return segments
    return Segments(segments, num_segments)


def gather(x: Tensor, index) -> Tensor:
    """Rows ``x[index]``; gradient is a segment sum over ``index``."""
    seg = _segments(index, x.shape[0])
    return _op(x.data[seg.ids], (x,), lambda g: (seg.reduce_sum(g),))


def segment_sum(x: Tensor, segments, num_segments: int | None = None) -> Tensor:
    seg = _segments(segments, num_segments)
    return _op(seg.reduce_sum(x.data), (x,), lambda g: (g[seg.ids],))


def segment_count(segments, num_segments: int | None = None) -> Tensor:
    seg = _segments(segments, num_segments)
    return Tensor._wrap(seg.counts.astype(np.float64), False)


def segment_mean(x: Tensor, segments, num_segments: int | None = None) -> Tensor:
    seg = _segments(segments, num_segments)
    seg.require_nonempty()
    inv = (1.0 / seg.counts).reshape((-1,) + (1,) * (x.ndim - 1))
    out = seg.reduce_sum(x.data) * inv
    return _op(out, (x,), lambda g: ((g * inv)[seg.ids],))


def _segment_extreme(x: Tensor, seg: Segments, ufunc) -> Tensor:
    seg.require_nonempty()
    d = x.data
    shape = d.shape
    flat = d.reshape(shape[0], -1)
    xs = flat if seg.order is None else flat[seg.order]
    if seg.num_segments == 0:
        out = np.zeros((0, flat.shape[1]))
    else:
        out = ufunc.reduceat(xs, seg.starts, axis=0)

    def fn(g):
        g = g.reshape(out.shape)
        sorted_ids = seg.ids if seg.order is None else seg.ids[seg.order]
        hit = xs == out[sorted_ids]
        pos = np.where(hit, np.arange(xs.shape[0])[:, None], xs.shape[0])
        first = np.minimum.reduceat(pos, seg.starts, axis=0)
        gs = np.zeros_like(xs)
        gs[first, np.arange(xs.shape[1])[None, :]] = g
        if seg.order is not None:
            gx = np.empty_like(gs)
            gx[seg.order] = gs
            gs = gx
        return (gs.reshape(shape),)

    return _op(out.reshape((seg.num_segments,) + shape[1:]), (x,), fn)


def segment_max(x: Tensor, segments, num_segments: int | None = None) -> Tensor:
    return _segment_extreme(x, _segments(segments, num_segments), np.maximum)


def segment_min(x: Tensor, segments, num_segments: int | None = None) -> Tensor:
    return _segment_extreme(x, _segments(segments, num_segments), np.minimum)


def segment_softmax(x: Tensor, segments, num_segments: int | None = None) -> Tensor:
    """Softmax of the rows of ``x`` within each segment."""
    seg = _segments(segments, num_segments)
    shift = segment_max(x, seg).detach()
    e = exp(x - gather(shift, seg))
    return e / gather(segment_sum(e, seg), seg)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rate <= 0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor._wrap(keep, False)
