"""
Reverse-mode automatic differentiation over dense float64 arrays.

A `Tape` is an append-only list of nodes. Leaves are created with `Tape.leaf`;
every primitive applied to a tape-attached `Tensor` appends a node holding its
forward value and one vector-Jacobian closure per attached input. Tensors that
are not attached to any tape behave as plain constants, so the same model code
runs both for inference (no recording) and for gradient evaluation.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from invdes_cli.errors import NonFiniteError, TapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
VJP = Callable[[np.ndarray], np.ndarray]


@dataclass
class Node:
    kind: str
    inputs: tuple[int, ...]
    vjps: tuple[VJP, ...]
    value: np.ndarray
    requires_grad: bool = False


class Tape:
    """Append-only record of one differentiable evaluation."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value: ArrayLike, requires_grad: bool = True) -> "Tensor":
        """Register an input array on the tape."""
        self._check_open()
        data = _as_array(value)
        self.nodes.append(Node("leaf", (), (), data, requires_grad))
        return Tensor(data, tape=self, node=len(self.nodes) - 1)

    def record(self, kind: str, value: np.ndarray, inputs: Sequence["Tensor"], vjps: Sequence[VJP]) -> "Tensor":
        self._check_open()
        ids = tuple(t.node for t in inputs)
        self.nodes.append(Node(kind, ids, tuple(vjps), value))
        return Tensor(value, tape=self, node=len(self.nodes) - 1)

    def _check_open(self) -> None:
        if self.consumed:
            raise TapeError("tape was already consumed by a backward pass")


class Tensor:
    """Dense float64 array, optionally attached to a tape."""

    __slots__ = ("data", "tape", "node")
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, tape: Optional[Tape] = None, node: Optional[int] = None):
        self.data = _as_array(data)
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_attached(self) -> bool:
        return self.tape is not None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.is_attached else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; the primitives live in ops.py
    def __add__(self, other):
        from invdes_cli.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from invdes_cli.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from invdes_cli.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from invdes_cli.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from invdes_cli.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from invdes_cli.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from invdes_cli.autodiff import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from invdes_cli.autodiff import ops
        return ops.div(other, self)

    def __neg__(self):
        from invdes_cli.autodiff import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from invdes_cli.autodiff import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from invdes_cli.autodiff import ops
        return ops.matmul(other, self)

    def __getitem__(self, index):
        from invdes_cli.autodiff import ops
        return ops.slice_(self, index)


def _as_array(value: ArrayLike) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def backward(tape: Tape, root: Tensor, seed_grads: Optional[dict[int, np.ndarray]] = None) -> dict[int, np.ndarray]:
    """
    Reverse sweep over `tape` from the scalar `root`.

    Parameters:
        tape (Tape): the tape holding `root`; consumed by this call.
        root (Tensor): scalar output.
        seed_grads (dict): optional starting gradient accumulators for leaves, keyed by node id.
            Contributions are added onto the seed in tape order, which lets a segmented
            (checkpointed) backward pass reproduce a single-tape pass bit for bit.

    Returns:
        dict: node id -> gradient for every leaf created with requires_grad=True. Leaves with no
        path to the root get exactly-zero gradients.
    """
    if tape.consumed:
        raise TapeError("tape was already consumed by a backward pass")
    if root.tape is not tape:
        raise TapeError("root is not recorded on this tape")
    if root.data.size != 1 or root.data.ndim != 0:
        raise TapeError(f"backward root must be a scalar, got shape {root.shape}")
    tape.consumed = True

    for node in tape.nodes:
        if not np.all(np.isfinite(node.value)):
            raise NonFiniteError(node.kind, "non-finite forward value")

    grads: list[Optional[np.ndarray]] = [None] * len(tape.nodes)
    if seed_grads:
        for node_id, seed in seed_grads.items():
            grads[node_id] = np.array(seed, dtype=np.float64)
    # the root may itself be a seeded leaf
    grads[root.node] = np.ones((), dtype=np.float64) if grads[root.node] is None else grads[root.node] + 1.0

    for node_id in range(root.node, -1, -1):
        node = tape.nodes[node_id]
        g = grads[node_id]
        if g is None or not node.inputs:
            continue
        for input_id, vjp in zip(node.inputs, node.vjps):
            contribution = vjp(g)
            if not np.all(np.isfinite(contribution)):
                raise NonFiniteError(node.kind, "non-finite gradient")
            grads[input_id] = contribution if grads[input_id] is None else grads[input_id] + contribution

    result = {}
    for node_id, node in enumerate(tape.nodes):
        if node.kind == "leaf" and node.requires_grad:
            g = grads[node_id]
            result[node_id] = np.zeros_like(node.value) if g is None else np.broadcast_to(g, node.value.shape).copy()
    return result


def value_and_grad(fn: Callable[..., Tensor], *args: ArrayLike) -> tuple[float, list[np.ndarray]]:
    """Evaluate scalar `fn(*args)` on a fresh tape and return its value and input gradients."""
    tape = Tape()
    leaves = [tape.leaf(a) for a in args]
    out = fn(*leaves)
    if not out.is_attached:
        return out.item(), [np.zeros_like(l.data) for l in leaves]
    grads = backward(tape, out)
    return out.item(), [grads[l.node] for l in leaves]
