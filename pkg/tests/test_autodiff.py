import numpy as np
import pytest

from invdes_cli.autodiff import Tape, Tensor, backward, ops, value_and_grad
from invdes_cli.errors import NonFiniteError, ShapeError, TapeError


def central_difference(fn, x, h=1e-5):
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)


def test_tanh_of_zero():
    assert ops.tanh(Tensor(0.0)).item() == 0.0


def test_scatter_add_sums_rows_per_target():
    out = ops.scatter_add(Tensor([[1.0], [2.0], [3.0]]), np.array([0, 0, 1]), 2)
    np.testing.assert_array_equal(out.data, [[3.0], [3.0]])


def test_mean():
    assert ops.mean(Tensor([1.0, 2.0, 3.0, 4.0])).item() == 2.5


def test_square_gradient():
    _, (g,) = value_and_grad(lambda x: ops.square(x), np.array(3.0))
    assert g == 6.0


def test_tanh_gradient_at_zero():
    _, (g,) = value_and_grad(lambda x: ops.tanh(x), np.array(0.0))
    assert g == 1.0


UNARY = {
    "tanh": ops.tanh,
    "relu": ops.relu,
    "exp": ops.exp,
    "sin": ops.sin,
    "cos": ops.cos,
    "square": ops.square,
    "sqrt": lambda x: ops.sqrt(ops.add(ops.square(x), 0.5)),
    "sum": lambda x: ops.sum_(x, axis=0),
    "mean": lambda x: ops.mean(x, axis=1, keepdims=True),
    "stddev": lambda x: ops.stddev(x, axis=0),
    "gather": lambda x: ops.gather(x, np.array([2, 0, 2])),
    "scatter_add": lambda x: ops.scatter_add(x, np.array([1, 0, 1]), 2),
    "slice": lambda x: x[1:, :2],
    "reshape": lambda x: ops.reshape(x, (4, 3)),
    "broadcast_to": lambda x: ops.broadcast_to(ops.mean(x, axis=0, keepdims=True), (5, 4)),
    "concat": lambda x: ops.concat([x, ops.square(x)], axis=1),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_primitive_matches_finite_differences(name):
    op = UNARY[name]
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.normal(size=(3, 4))
        weights = rng.normal(size=op(Tensor(x)).shape)

        def scalar(arr):
            return ops.sum_(ops.mul(op(Tensor(arr)), weights)).item()

        _, (g,) = value_and_grad(lambda t: ops.sum_(ops.mul(op(t), weights)), x)
        assert relative_error(g, central_difference(scalar, x)) < 1e-6


BINARY = {
    "add": (ops.add, (3, 2), (3, 2)),
    "sub": (ops.sub, (3, 2), (3, 2)),
    "mul": (ops.mul, (3, 2), (3, 2)),
    "div": (lambda a, b: ops.div(a, ops.add(ops.square(b), 1.0)), (3, 2), (3, 2)),
    "matmul": (ops.matmul, (3, 2), (2, 4)),
    "matvec": (ops.matmul, (3, 2), (2,)),
    "dot": (ops.dot, (5,), (5,)),
    "scalar_mul": (ops.mul, (), (3, 2)),
    "where": (lambda a, b: ops.where(np.array([[True, False], [False, False], [True, True]]), a, b), (3, 2), (3, 2)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_primitive_matches_finite_differences(name):
    op, shape_a, shape_b = BINARY[name]
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = np.asarray(rng.normal(size=shape_a), dtype=np.float64)
        b = np.asarray(rng.normal(size=shape_b), dtype=np.float64)
        weights = rng.normal(size=op(Tensor(a), Tensor(b)).shape)
        fn = lambda x, y: ops.sum_(ops.mul(op(x, y), weights))
        _, (ga, gb) = value_and_grad(fn, a, b)
        fd_a = central_difference(lambda arr: fn(Tensor(arr), Tensor(b)).item(), a)
        fd_b = central_difference(lambda arr: fn(Tensor(a), Tensor(arr)).item(), b)
        assert relative_error(ga, fd_a) < 1e-6
        assert relative_error(gb, fd_b) < 1e-6


@pytest.mark.parametrize("lo,hi", [(-0.5, 0.5), (0.0, 2.0)])
def test_clip_matches_finite_differences_away_from_bounds(lo, hi):
    x = np.array([[-1.3, -0.2, 0.3, 0.7], [1.9, 0.45, -0.8, 2.6], [0.1, -0.05, 1.2, -2.0]])
    weights = np.random.default_rng(3).normal(size=x.shape)
    fn = lambda t: ops.sum_(ops.mul(ops.clip(t, lo, hi), weights))
    _, (g,) = value_and_grad(fn, x)
    fd = central_difference(lambda arr: fn(Tensor(arr)).item(), x)
    assert relative_error(g, fd) < 1e-6
    np.testing.assert_array_equal(g[(x < lo) | (x > hi)], 0.0)

def test_two_layer_mlp_gradient():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    w0, w1 = rng.normal(size=(3, 5)), rng.normal(size=(5, 1))

    def net(x_, a, b):
        return ops.sum_(ops.matmul(ops.tanh(ops.matmul(x_, a)), b))

    _, (_, g0, g1) = value_and_grad(net, x, w0, w1)
    fd0 = central_difference(lambda arr: net(Tensor(x), Tensor(arr), Tensor(w1)).item(), w0, h=1e-4)
    fd1 = central_difference(lambda arr: net(Tensor(x), Tensor(w0), Tensor(arr)).item(), w1, h=1e-4)
    assert relative_error(g0, fd0) < 1e-5
    assert relative_error(g1, fd1) < 1e-5


def test_linearity_of_backward():
    rng = np.random.default_rng(5)
    x = rng.normal(size=6)
    f = lambda t: ops.sum_(ops.tanh(t))
    g = lambda t: ops.sum_(ops.mul(ops.square(t), ops.sin(t)))
    a, b = 1.7, -0.3
    _, (combined,) = value_and_grad(lambda t: ops.add(ops.mul(f(t), a), ops.mul(g(t), b)), x)
    _, (gf,) = value_and_grad(f, x)
    _, (gg,) = value_and_grad(g, x)
    np.testing.assert_allclose(combined, a * gf + b * gg, atol=1e-12, rtol=0)


def test_unused_leaf_gets_exact_zero():
    tape = Tape()
    used = tape.leaf([1.0, 2.0])
    unused = tape.leaf([[3.0, 4.0]])
    grads = backward(tape, ops.sum_(ops.square(used)))
    assert np.array_equal(grads[unused.node], np.zeros((1, 2)))
    np.testing.assert_array_equal(grads[used.node], [2.0, 4.0])


def test_non_scalar_root_rejected():
    tape = Tape()
    x = tape.leaf([1.0, 2.0])
    with pytest.raises(TapeError):
        backward(tape, ops.square(x))


def test_tape_is_consumed_once():
    tape = Tape()
    x = tape.leaf(2.0)
    y = ops.square(x)
    backward(tape, y)
    with pytest.raises(TapeError):
        backward(tape, y)


def test_nan_reports_operation_kind():
    tape = Tape()
    x = tape.leaf([-1.0])
    with np.errstate(invalid="ignore"):
        root = ops.sum_(ops.sqrt(x))
    with pytest.raises(NonFiniteError) as info:
        backward(tape, root)
    assert info.value.kind == "sqrt"


def test_mixed_tapes_rejected():
    a, b = Tape().leaf(1.0), Tape().leaf(2.0)
    with pytest.raises(TapeError):
        ops.add(a, b)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.zeros(2)), Tensor(np.zeros(3)))
    with pytest.raises(ShapeError):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_scatter_index_out_of_range():
    with pytest.raises(ShapeError):
        ops.scatter_add(Tensor(np.ones((2, 1))), np.array([0, 2]), 2)


def test_constants_are_not_recorded():
    out = ops.add(Tensor([1.0]), Tensor([2.0]))
    assert not out.is_attached
