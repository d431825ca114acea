import itertools

import numpy as np
import pytest

from invdes_cli.autodiff import CheckpointSchedule, Tensor, checkpointed_rollout_backward, ops, rollout_backward
from invdes_cli.errors import NonDeterministicStepError


def step(x, p):
    return ops.add(x, ops.mul(ops.tanh(ops.matmul(x, p["w"])), 0.1))


def loss(x, p):
    return ops.sum_(ops.square(x))


@pytest.fixture
def problem():
    rng = np.random.default_rng(3)
    return rng.normal(size=(4, 2)), {"w": rng.normal(size=(2, 2))}


@pytest.mark.parametrize("num_steps", [1, 2, 4, 8, 16])
def test_checkpointed_matches_plain_backprop(problem, num_steps):
    x0, params = problem
    plain = rollout_backward(step, Tensor(x0), num_steps, loss, params)
    ckpt = checkpointed_rollout_backward(step, Tensor(x0), num_steps, loss, params=params)
    assert ckpt.loss == plain.loss
    np.testing.assert_array_equal(ckpt.state_grads[0], plain.state_grads[0])
    np.testing.assert_array_equal(ckpt.param_grads["w"], plain.param_grads["w"])
    assert ckpt.forward_evals == 2 * num_steps


def test_segment_schedule_gives_same_gradients(problem):
    x0, params = problem
    per_step = checkpointed_rollout_backward(step, Tensor(x0), 10, loss, params=params)
    segmented = checkpointed_rollout_backward(
        step, Tensor(x0), 10, loss, schedule=CheckpointSchedule.every(10, 3), params=params,
    )
    np.testing.assert_allclose(segmented.state_grads[0], per_step.state_grads[0], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(segmented.param_grads["w"], per_step.param_grads["w"], rtol=1e-12, atol=1e-14)


def test_checkpointing_keeps_tape_small(problem):
    x0, params = problem
    plain = rollout_backward(step, Tensor(x0), 16, loss, params)
    ckpt = checkpointed_rollout_backward(step, Tensor(x0), 16, loss, params=params)
    assert ckpt.peak_nodes < plain.peak_nodes


def test_zero_steps_is_loss_gradient(problem):
    x0, params = problem
    result = checkpointed_rollout_backward(step, Tensor(x0), 0, loss, params=params)
    np.testing.assert_array_equal(result.state_grads[0], 2 * x0)
    np.testing.assert_array_equal(result.param_grads["w"], np.zeros((2, 2)))
    assert result.forward_evals == 0


def test_debug_detects_non_deterministic_step(problem):
    x0, params = problem
    calls = itertools.count()

    def noisy(x, p):
        return ops.add(step(x, p), 1e-9 * next(calls))

    with pytest.raises(NonDeterministicStepError):
        checkpointed_rollout_backward(noisy, Tensor(x0), 3, loss, params=params, debug=True)


def test_schedule_validation():
    with pytest.raises(ValueError):
        CheckpointSchedule((1, 2))
    with pytest.raises(ValueError):
        CheckpointSchedule((0, 2, 2))
    with pytest.raises(ValueError):
        CheckpointSchedule.every(5, 0)
    assert CheckpointSchedule.every(7, 3).boundaries == (0, 3, 6, 7)
    assert CheckpointSchedule.per_step(3).segments == [(0, 1), (1, 2), (2, 3)]


def test_schedule_must_cover_rollout(problem):
    x0, params = problem
    with pytest.raises(ValueError):
        checkpointed_rollout_backward(step, Tensor(x0), 4, loss, schedule=CheckpointSchedule.per_step(3))
