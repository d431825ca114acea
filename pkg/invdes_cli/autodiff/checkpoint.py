"""
Backpropagation through multi-step rollouts.

`rollout_backward` keeps the whole rollout on one tape. `checkpointed_rollout_backward`
stores only the states at segment boundaries during a tape-free forward pass and
re-runs each segment on its own tape while walking the trajectory in reverse. Leaf
accumulators are seeded with the running gradient so both produce bit-identical
results.

States are either a single `Tensor` or an object exposing `tensors()` and
`replace_tensors(tensors)` (see `ParticleState`).
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from invdes_cli.autodiff import ops
from invdes_cli.autodiff.tensor import Tape, Tensor, backward
from invdes_cli.errors import NonDeterministicStepError

StepFn = Callable[[Any, dict[str, Tensor]], Any]
LossFn = Callable[[Any, dict[str, Tensor]], Tensor]


@dataclass(frozen=True)
class CheckpointSchedule:
    """Strictly increasing step indices 0 = s0 < s1 < ... < sm = K."""
    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = self.boundaries
        if not b or b[0] != 0:
            raise ValueError("checkpoint boundaries must start at step 0")
        if any(later <= earlier for earlier, later in zip(b, b[1:])):
            raise ValueError(f"checkpoint boundaries must be strictly increasing: {b}")

    @classmethod
    def per_step(cls, num_steps: int) -> "CheckpointSchedule":
        return cls(tuple(range(num_steps + 1)))

    @classmethod
    def every(cls, num_steps: int, segment_length: int) -> "CheckpointSchedule":
        if segment_length < 1:
            raise ValueError("segment length must be at least 1")
        points = list(range(0, num_steps, segment_length)) + [num_steps]
        return cls(tuple(sorted(set(points))))

    @property
    def num_steps(self) -> int:
        return self.boundaries[-1]

    @property
    def segments(self) -> list[tuple[int, int]]:
        return list(zip(self.boundaries, self.boundaries[1:]))

    @property
    def max_segment_length(self) -> int:
        return max((hi - lo for lo, hi in self.segments), default=0)


@dataclass
class RolloutGradient:
    loss: float
    state_grads: tuple[np.ndarray, ...]
    param_grads: dict[str, np.ndarray]
    forward_evals: int
    peak_nodes: int = 0
    final_state: Any = field(default=None, repr=False)


def _flatten(state) -> tuple[Tensor, ...]:
    if isinstance(state, Tensor):
        return (state,)
    return tuple(state.tensors())


def _unflatten(state, tensors: tuple[Tensor, ...]):
    if isinstance(state, Tensor):
        return tensors[0]
    return state.replace_tensors(tensors)


def _attach_state(tape: Tape, state):
    return _unflatten(state, tuple(tape.leaf(t.data) for t in _flatten(state)))


def _detach_state(state):
    return _unflatten(state, tuple(Tensor(t.data) for t in _flatten(state)))


def _attach_params(tape: Tape, params: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {name: tape.leaf(value) for name, value in params.items()}


def _leaf_grads(grads: dict[int, np.ndarray], tensors) -> tuple[np.ndarray, ...]:
    return tuple(grads[t.node] for t in tensors)


def rollout_backward(
        step_fn: StepFn,
        initial,
        num_steps: int,
        loss_fn: LossFn,
        params: Optional[dict[str, np.ndarray]] = None,
) -> RolloutGradient:
    """Plain backprop through `num_steps` composed steps on a single tape."""
    params = params or {}
    tape = Tape()
    state = _attach_state(tape, initial)
    leaves = _flatten(state)
    p = _attach_params(tape, params)
    for _ in range(num_steps):
        state = step_fn(state, p)
    loss = loss_fn(state, p)
    final_state = _detach_state(state)
    if not loss.is_attached:
        return RolloutGradient(
            loss.item(), tuple(np.zeros_like(t.data) for t in leaves),
            {k: np.zeros_like(v) for k, v in params.items()}, num_steps, len(tape), final_state,
        )
    peak = len(tape)
    grads = backward(tape, loss)
    return RolloutGradient(
        loss=loss.item(),
        state_grads=_leaf_grads(grads, leaves),
        param_grads={k: grads[t.node] for k, t in p.items()},
        forward_evals=num_steps,
        peak_nodes=peak,
        final_state=final_state,
    )


def checkpointed_rollout_backward(
        step_fn: StepFn,
        initial,
        num_steps: int,
        loss_fn: LossFn,
        schedule: Optional[CheckpointSchedule] = None,
        params: Optional[dict[str, np.ndarray]] = None,
        debug: bool = False,
) -> RolloutGradient:
    """
    Loss and gradients of `loss_fn(step_fn^K(initial))` with segment-wise recomputation.

    Parameters:
        step_fn: pure function (state, params) -> state.
        initial: initial state; its tensors are treated as leaves.
        num_steps (int): K.
        loss_fn: pure function (state, params) -> scalar Tensor.
        schedule (CheckpointSchedule): defaults to one checkpoint per step.
        params (dict): captured parameters that receive gradients.
        debug (bool): verify that every recomputed segment reproduces its stored end state exactly.

    Returns:
        RolloutGradient with the loss, gradients wrt the initial state's tensors and the params,
        the number of step evaluations (2K for per-step checkpoints) and the largest tape size.
    """
    if num_steps < 0:
        raise ValueError("number of steps must be non-negative")
    params = params or {}
    schedule = schedule or CheckpointSchedule.per_step(num_steps)
    if schedule.num_steps != num_steps:
        raise ValueError(f"schedule ends at step {schedule.num_steps}, rollout has {num_steps} steps")

    # forward pass without recording, keeping boundary states only
    constant_params = {k: Tensor(v) for k, v in params.items()}
    checkpoints = {0: _detach_state(initial)}
    state = checkpoints[0]
    forward_evals = 0
    for lo, hi in schedule.segments:
        for _ in range(hi - lo):
            state = step_fn(state, constant_params)
            forward_evals += 1
        checkpoints[hi] = state

    tape = Tape()
    final = _attach_state(tape, checkpoints[num_steps])
    p = _attach_params(tape, params)
    loss = loss_fn(final, p)
    loss_value = loss.item()
    peak = len(tape)
    if loss.is_attached:
        grads = backward(tape, loss)
        cotangents = _leaf_grads(grads, _flatten(final))
        param_grads = {k: grads[t.node] for k, t in p.items()}
    else:
        cotangents = tuple(np.zeros_like(t.data) for t in _flatten(final))
        param_grads = {k: np.zeros_like(v) for k, v in params.items()}

    for lo, hi in reversed(schedule.segments):
        tape = Tape()
        start = _attach_state(tape, checkpoints[lo])
        p = _attach_params(tape, params)
        out = start
        for _ in range(hi - lo):
            out = step_fn(out, p)
            forward_evals += 1
        outputs = _flatten(out)
        if debug:
            for recomputed, stored in zip(outputs, _flatten(checkpoints[hi])):
                if not np.array_equal(recomputed.data, stored.data):
                    raise NonDeterministicStepError(f"segment [{lo}, {hi}) did not reproduce its checkpoint")
        injected = ops.maybe_sum([
            ops.sum_(ops.mul(t, Tensor(c))) for t, c in zip(outputs, cotangents) if t.is_attached
        ])
        peak = max(peak, len(tape))
        start_leaves = _flatten(start)
        if not injected.is_attached:
            cotangents = tuple(np.zeros_like(t.data) for t in start_leaves)
            continue
        grads = backward(tape, injected, seed_grads={p[k].node: g for k, g in param_grads.items()})
        cotangents = _leaf_grads(grads, start_leaves)
        param_grads = {k: grads[t.node] for k, t in p.items()}

    return RolloutGradient(
        loss=loss_value,
        state_grads=cotangents,
        param_grads=param_grads,
        forward_evals=forward_evals,
        peak_nodes=peak,
        final_state=checkpoints[num_steps],
    )
