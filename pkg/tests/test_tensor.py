import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import gradcheck
from pna import tensor as T
from pna.tensor import EmptySegmentError, NonFiniteError, Segments, TapeError, Tensor

POINTS = 10
TOL = 1e-5


def _away_from_zero(shape, rng, margin=0.1):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin + x, x)


UNARY = {
    "relu": (T.relu, _away_from_zero),
    "leaky_relu": (lambda x: T.leaky_relu(x, 0.2), _away_from_zero),
    "sigmoid": (T.sigmoid, lambda s, r: r.normal(size=s)),
    "tanh": (T.tanh, lambda s, r: r.normal(size=s)),
    "exp": (T.exp, lambda s, r: r.normal(size=s)),
    "log": (T.log, lambda s, r: r.uniform(0.5, 2.0, size=s)),
    "sqrt": (T.sqrt, lambda s, r: r.uniform(0.5, 2.0, size=s)),
    "signed_pow": (lambda x: T.signed_pow(x, 1 / 3, 1e-5), _away_from_zero),
    "square": (T.square, lambda s, r: r.normal(size=s)),
    "power4": (lambda x: T.power(x, 4), lambda s, r: r.normal(size=s)),
    "neg": (T.neg, lambda s, r: r.normal(size=s)),
    "sum_axis": (lambda x: T.sum(x, axis=0), lambda s, r: r.normal(size=s)),
    "mean_all": (T.mean, lambda s, r: r.normal(size=s)),
    "slice": (lambda x: x[1:, ::2], lambda s, r: r.normal(size=s)),
    "fancy_slice": (lambda x: x[np.array([0, 2, 0])], lambda s, r: r.normal(size=s)),
    "reshape": (lambda x: T.reshape(x, (-1,)), lambda s, r: r.normal(size=s)),
    "transpose": (T.transpose, lambda s, r: r.normal(size=s)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    fn, sample = UNARY[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(POINTS):
        assert gradcheck(fn, [sample((3, 4), rng)]) <= TOL


BINARY = {
    "add": T.add,
    "sub": T.sub,
    "mul": T.mul,
    "div": T.div,
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients_with_broadcasting(name):
    rng = np.random.default_rng(7)
    for _ in range(POINTS):
        a = rng.normal(size=(3, 4))
        b = rng.uniform(0.5, 2.0, size=(4,)) * rng.choice([-1, 1], size=4)
        assert gradcheck(BINARY[name], [a, b]) <= TOL


def test_matmul_gradients():
    rng = np.random.default_rng(8)
    for _ in range(POINTS):
        assert gradcheck(T.matmul, [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]) <= TOL


def test_concat_and_assemble_gradients():
    rng = np.random.default_rng(9)
    place = [(np.array([0, 1]), np.array([0])), (np.array([2]), np.array([1, 2]))]
    for _ in range(POINTS):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 2))
        assert gradcheck(lambda x, y: T.concat([x, y]), [a, b]) <= TOL
        blocks = [rng.normal(size=(2, 1)), rng.normal(size=(1, 2))]
        assert gradcheck(lambda p, q: T.assemble([p, q], place, (3, 3)), blocks) <= TOL


SEGMENT_OPS = {
    "gather": lambda x, s: T.gather(x, s),
    "segment_sum": lambda x, s: T.segment_sum(x, s, 3),
    "segment_mean": lambda x, s: T.segment_mean(x, s, 3),
    "segment_max": lambda x, s: T.segment_max(x, s, 3),
    "segment_min": lambda x, s: T.segment_min(x, s, 3),
    "segment_softmax": lambda x, s: T.segment_softmax(x, s, 3),
}


@pytest.mark.parametrize("name", sorted(SEGMENT_OPS))
def test_segment_gradients(name):
    rng = np.random.default_rng(10)
    ids = np.array([2, 0, 1, 0, 2, 2, 1])
    for _ in range(POINTS):
        x = rng.normal(size=(7, 3))
        if name == "gather":
            idx = np.array([0, 2, 2, 1, 0])
            assert gradcheck(lambda t: T.gather(t, idx), [x[:3]]) <= TOL
        else:
            assert gradcheck(lambda t: SEGMENT_OPS[name](t, ids), [x]) <= TOL


def test_segment_sum_example():
    out = T.segment_sum(Tensor([1.0, 2.0, 3.0]), [0, 0, 1], 2)
    assert out.data.tolist() == [3.0, 3.0]


def test_segment_mean_equals_sum_over_count():
    rng = np.random.default_rng(11)
    ids = rng.integers(0, 5, size=40)
    ids[:5] = np.arange(5)
    x = Tensor(rng.normal(size=(40, 3)))
    mean = T.segment_mean(x, ids, 5).data
    ratio = T.segment_sum(x, ids, 5).data / T.segment_count(ids, 5).data[:, None]
    np.testing.assert_allclose(mean, ratio, rtol=0, atol=1e-15)


def test_segment_max_routes_gradient_to_first_tie():
    x = Tensor([[1.0], [3.0], [3.0], [2.0]], requires_grad=True)
    with T.new_tape():
        T.sum(T.segment_max(x, [0, 0, 0, 1], 2)).backward()
    assert x.grad.ravel().tolist() == [0.0, 1.0, 0.0, 1.0]
    y = Tensor([[5.0], [1.0], [1.0]], requires_grad=True)
    with T.new_tape():
        T.sum(T.segment_min(y, [1, 1, 0], 2)).backward()
    assert y.grad.ravel().tolist() == [0.0, 1.0, 1.0]


def test_empty_segment_is_an_error():
    with pytest.raises(EmptySegmentError):
        T.segment_mean(Tensor([[1.0]]), [0], 2)
    with pytest.raises(EmptySegmentError):
        T.segment_max(Tensor([[1.0]]), [1], 2)
    # sums over empty segments are fine
    assert T.segment_sum(Tensor([[1.0]]), [1], 2).data.ravel().tolist() == [0.0, 1.0]


def test_relu_and_signed_pow_examples():
    x = Tensor([-2.5], requires_grad=True)
    with T.new_tape():
        y = T.relu(x)
        T.sum(y).backward()
    assert y.data[0] == 0.0 and x.grad[0] == 0.0
    assert T.signed_pow(Tensor([-8.0]), 1 / 3).data[0] == pytest.approx(-2.0, abs=1e-15)
    assert T.signed_pow(Tensor([0.0]), 1 / 3, 1e-5).data[0] == 0.0


def test_backward_examples():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with T.new_tape():
        T.sum(x * x).backward()
    assert x.grad.tolist() == [2.0, 4.0]
    a = Tensor([[1.0, 2.0]], requires_grad=True)
    b = Tensor([[3.0], [4.0]], requires_grad=True)
    with T.new_tape():
        T.sum(a @ b).backward()
    assert a.grad.tolist() == [[3.0, 4.0]]
    assert b.grad.tolist() == [[1.0], [2.0]]


def test_gradients_accumulate_until_reset():
    x = Tensor([3.0], requires_grad=True)
    for _ in range(2):
        with T.new_tape():
            T.sum(x * 2.0).backward()
    assert x.grad.tolist() == [4.0]
    x.zero_grad()
    assert x.grad is None


def test_backward_errors():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with T.new_tape():
        y = x * 3.0
        with pytest.raises(ValueError):
            y.backward()
        loss = T.sum(y)
        loss.backward()
        with pytest.raises(TapeError):
            loss.backward()
    with pytest.raises(TapeError):
        T.sum(Tensor([1.0]) * 2.0).backward()
    with pytest.raises(TapeError):
        T.sum(x.detach()).backward()


def test_mixing_tapes_is_rejected():
    x = Tensor([1.0], requires_grad=True)
    with T.new_tape():
        y = x * 2.0
    with T.new_tape():
        with pytest.raises(TapeError):
            _ = y * 3.0


def test_non_finite_values_are_checked():
    with pytest.raises(NonFiniteError):
        Tensor([np.nan])
    with pytest.raises(NonFiniteError):
        T.exp(Tensor([1000.0]))
    with pytest.raises(ValueError):
        T.log(Tensor([0.0]))
    with pytest.raises(ValueError):
        T.sqrt(Tensor([-1.0]))
    with pytest.raises(ZeroDivisionError):
        T.div(Tensor([1.0]), Tensor([0.0]))


def test_shape_errors():
    with pytest.raises(ValueError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ValueError):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
    with pytest.raises(ValueError):
        T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))])
    with pytest.raises(IndexError):
        Segments([0, 3], 2)


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with T.new_tape() as tape, T.no_grad():
        y = x * 2.0
    assert len(tape) == 0 and not y.requires_grad


def _program(seed):
    rng = np.random.default_rng(seed)
    w = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    x = Tensor(rng.normal(size=(9, 5)))
    ids = rng.integers(0, 3, size=9)
    ids[:3] = [0, 1, 2]
    with T.new_tape():
        h = T.tanh(x @ w)
        out = T.segment_max(h, ids, 3) + T.segment_mean(h, ids, 3)
        loss = T.sum(T.square(out))
        loss.backward()
    return loss.data.copy(), w.grad.copy()


def test_replay_is_bit_identical():
    (l1, g1), (l2, g2) = _program(3), _program(3)
    assert l1.tobytes() == l2.tobytes() and g1.tobytes() == g2.tobytes()


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)),
       st.integers(1, 4), st.randoms(use_true_random=False))
def test_segment_sum_matches_python_loop(values, n_seg, rnd):
    ids = np.array([rnd.randrange(n_seg) for _ in values])
    out = T.segment_sum(Tensor(values), ids, n_seg).data
    for s in range(n_seg):
        assert out[s] == pytest.approx(values[ids == s].sum(), abs=1e-9)
