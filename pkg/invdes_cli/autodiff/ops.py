"""
Differentiable primitives.

Shapes are explicit: elementwise binary operations need identical shapes, except
that either operand may be a 0-d scalar. Anything else goes through
`broadcast_to`, which records its own reduction in the backward pass.
"""
from typing import Optional, Sequence, Union

import numpy as np

from invdes_cli.autodiff.tensor import ArrayLike, Tensor, as_tensor
from invdes_cli.errors import ShapeError, TapeError

Axis = Union[int, tuple[int, ...], None]


def _tape_of(operands: Sequence[Tensor]):
    tape = None
    for t in operands:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif t.tape is not tape:
                raise TapeError("operands are recorded on different tapes")
    return tape


def _emit(kind: str, value: np.ndarray, operands: Sequence[Tensor], vjps: Sequence) -> Tensor:
    tape = _tape_of(operands)
    if tape is None:
        return Tensor(value)
    inputs, fns = [], []
    for t, fn in zip(operands, vjps):
        if t.tape is not None:
            inputs.append(t)
            fns.append(fn)
    return tape.record(kind, value, inputs, fns)


def _check_elementwise(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not conform")


def _reduce_like(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(np.sum(g))
    return _sum_to_shape(g, shape)


def _sum_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    return _emit("add", a.data + b.data, (a, b), (
        lambda g: _reduce_like(g, a.shape),
        lambda g: _reduce_like(g, b.shape),
    ))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), (
        lambda g: _reduce_like(g, a.shape),
        lambda g: _reduce_like(-g, b.shape),
    ))


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.data, (a,), (lambda g: -g,))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b), (
        lambda g: _reduce_like(g * b.data, a.shape),
        lambda g: _reduce_like(g * a.data, b.shape),
    ))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("div", a, b)
    return _emit("div", a.data / b.data, (a, b), (
        lambda g: _reduce_like(g / b.data, a.shape),
        lambda g: _reduce_like(-g * a.data / (b.data * b.data), b.shape),
    ))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0]:
        return _emit("matmul", a.data @ b.data, (a, b), (
            lambda g: g @ b.data.T,
            lambda g: a.data.T @ g,
        ))
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return _emit("matmul", a.data @ b.data, (a, b), (
            lambda g: np.outer(g, b.data),
            lambda g: a.data.T @ g,
        ))
    if a.ndim == 1 and b.ndim == 2 and a.shape[0] == b.shape[0]:
        return _emit("matmul", a.data @ b.data, (a, b), (
            lambda g: b.data @ g,
            lambda g: np.outer(a.data, g),
        ))
    raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")


def dot(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: expected equal-length vectors, got {a.shape} and {b.shape}")
    return _emit("dot", np.asarray(a.data @ b.data), (a, b), (
        lambda g: g * b.data,
        lambda g: g * a.data,
    ))


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def _count(shape: tuple[int, ...], axis: Axis) -> int:
    if axis is None:
        return int(np.prod(shape)) if shape else 1
    axes = (axis,) if isinstance(axis, int) else axis
    return int(np.prod([shape[ax] for ax in axes]))


def sum_(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    value = np.asarray(np.sum(x.data, axis=axis, keepdims=keepdims))
    return _emit("sum", value, (x,), (lambda g: _expand_reduced(g, x.shape, axis, keepdims),))


def mean(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = _count(x.shape, axis)
    value = np.asarray(np.mean(x.data, axis=axis, keepdims=keepdims))
    return _emit("mean", value, (x,), (lambda g: _expand_reduced(g, x.shape, axis, keepdims) / n,))


def stddev(x: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    """Population standard deviation; the gradient at zero spread is taken as zero."""
    x = as_tensor(x)
    n = _count(x.shape, axis)
    centred = x.data - np.mean(x.data, axis=axis, keepdims=True)
    s_keep = np.sqrt(np.mean(centred * centred, axis=axis, keepdims=True))
    value = np.asarray(np.sqrt(np.mean(centred * centred, axis=axis, keepdims=keepdims)))

    def vjp(g):
        g_full = _expand_reduced(g, x.shape, axis, keepdims)
        safe = np.where(s_keep > 0.0, s_keep, 1.0)
        return np.where(s_keep > 0.0, g_full * centred / (n * safe), 0.0)

    return _emit("stddev", value, (x,), (vjp,))


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _emit("tanh", y, (x,), (lambda g: g * (1.0 - y * y),))


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    positive = x.data > 0.0
    return _emit("relu", np.where(positive, x.data, 0.0), (x,), (lambda g: np.where(positive, g, 0.0),))


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _emit("exp", y, (x,), (lambda g: g * y,))


def sin(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _emit("sin", np.sin(x.data), (x,), (lambda g: g * np.cos(x.data),))


def cos(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _emit("cos", np.cos(x.data), (x,), (lambda g: -g * np.sin(x.data),))


def square(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _emit("square", x.data * x.data, (x,), (lambda g: 2.0 * g * x.data,))


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.sqrt(x.data)
    return _emit("sqrt", y, (x,), (lambda g: 0.5 * g / y,))


def clip(x: ArrayLike, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _emit("clip", np.clip(x.data, lo, hi), (x,), (lambda g: np.where(inside, g, 0.0),))


def _check_index(kind: str, index: np.ndarray, size: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise ShapeError(f"{kind}: index must be one-dimensional")
    if index.size and (index.min() < 0 or index.max() >= size):
        raise ShapeError(f"{kind}: index out of range for {size} slots")
    return index


def gather(x: ArrayLike, index: np.ndarray) -> Tensor:
    """Rows of `x` selected by `index` (repeats allowed)."""
    x = as_tensor(x)
    index = _check_index("gather", index, x.shape[0])

    def vjp(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return out

    return _emit("gather", x.data[index], (x,), (vjp,))


def scatter_add(values: ArrayLike, index: np.ndarray, num_slots: int) -> Tensor:
    """Sum the rows of `values` into `num_slots` rows at positions `index`."""
    values = as_tensor(values)
    index = _check_index("scatter_add", index, num_slots)
    if index.shape[0] != values.shape[0]:
        raise ShapeError(f"scatter_add: {index.shape[0]} targets for {values.shape[0]} rows")
    out = np.zeros((num_slots,) + values.shape[1:])
    np.add.at(out, index, values.data)
    return _emit("scatter_add", out, (values,), (lambda g: g[index],))


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from e
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def make_vjp(lo, hi):
        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]
        return vjp

    vjps = [make_vjp(bounds[i], bounds[i + 1]) for i in range(len(tensors))]
    return _emit("concat", value, tensors, vjps)


def slice_(x: ArrayLike, index) -> Tensor:
    x = as_tensor(x)
    value = np.array(x.data[index])
    advanced = any(isinstance(i, (list, np.ndarray)) for i in (index if isinstance(index, tuple) else (index,)))

    def vjp(g):
        out = np.zeros_like(x.data)
        if advanced:
            np.add.at(out, index, g)
        else:
            out[index] = g
        return out

    return _emit("slice", value, (x,), (vjp,))


def reshape(x: ArrayLike, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        value = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {e}") from e
    return _emit("reshape", value, (x,), (lambda g: g.reshape(x.shape),))


def broadcast_to(x: ArrayLike, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        value = np.array(np.broadcast_to(x.data, shape))
    except ValueError as e:
        raise ShapeError(f"broadcast_to: {e}") from e
    return _emit("broadcast_to", value, (x,), (lambda g: _sum_to_shape(g, x.shape),))


def where(condition: np.ndarray, a: ArrayLike, b: ArrayLike) -> Tensor:
    """Select from `a` where `condition` holds, else from `b`; the condition is not differentiated."""
    a, b = as_tensor(a), as_tensor(b)
    condition = np.asarray(condition, dtype=bool)
    if a.shape != b.shape or condition.shape != a.shape:
        raise ShapeError(f"where: shapes {condition.shape}, {a.shape}, {b.shape} do not conform")
    return _emit("where", np.where(condition, a.data, b.data), (a, b), (
        lambda g: np.where(condition, g, 0.0),
        lambda g: np.where(condition, 0.0, g),
    ))


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape))


def maybe_sum(terms: Sequence[Optional[Tensor]]) -> Tensor:
    """Left-to-right sum of the non-None terms (0 when there are none)."""
    total = None
    for t in terms:
        if t is None:
            continue
        total = t if total is None else add(total, t)
    return total if total is not None else Tensor(0.0)
