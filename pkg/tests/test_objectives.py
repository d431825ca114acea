from dataclasses import replace

import numpy as np
import pytest

from invdes_cli.autodiff import Tensor, value_and_grad
from invdes_cli.design import apply_design, generate_task, smoothness_penalty
from invdes_cli.model import Ensemble, ModelHyper, init_model_params, train
from invdes_cli.optim import GDConfig, evaluate_design, gd_optimize, objective_model, objective_model_single, \
    objective_oracle, value_model
from invdes_cli.physics import DatasetConfig, generate_trajectory


@pytest.fixture
def compact_task():
    """A scene small enough that every particle pair stays inside the connectivity radius."""
    task = generate_task("contain", 0, num_steps=3, num_joints=2)
    alpha = dict(task.alpha, anchor=[0.45, 0.42], tool_length=0.06)
    return replace(
        task,
        template=replace(task.template, fluid_box=(0.45, 0.45, 0.51, 0.49)),
        alpha=alpha,
        reward=replace(task.reward, mu=(0.5, 0.3)),
    )


@pytest.fixture
def wide_params():
    return init_model_params(ModelHyper(width=8, blocks=1, radius=0.25), seed=3)


@pytest.fixture
def ten_particle_task():
    """Ten fluid particles and a four-joint tool, all within one connectivity radius."""
    task = generate_task("contain", 0, num_steps=5, num_joints=4)
    alpha = dict(task.alpha, anchor=[0.45, 0.42], tool_length=0.06)
    return replace(
        task,
        template=replace(task.template, fluid_box=(0.45, 0.45, 0.55, 0.49)),
        alpha=alpha,
        reward=replace(task.reward, mu=(0.5, 0.3)),
    )


@pytest.fixture(scope="module")
def briefly_trained_params():
    cfg = DatasetConfig(particles_range=(8, 14), num_steps=6)
    trajectories = [generate_trajectory(11, i, cfg) for i in range(3)]
    hyper = ModelHyper(width=8, blocks=1, radius=0.25, learning_rate=1e-3)
    params, _ = train(trajectories, hyper, seed=3, steps=30)
    return params


@pytest.mark.parametrize("model_fixture", ["wide_params", "briefly_trained_params"])
def test_gradient_matches_finite_differences(ten_particle_task, model_fixture, request):
    params = request.getfixturevalue(model_fixture)
    state, _ = apply_design(ten_particle_task.initial_design(), ten_particle_task.template)
    assert int(state.fluid_mask.sum()) == 10
    phi = np.array([0.15, -0.1, 0.05, 0.2])
    _, grad = objective_model_single(phi, ten_particle_task, params)
    h = 1e-4
    numeric = np.zeros(4)
    for i in range(4):
        up, down = phi.copy(), phi.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (objective_model_single(up, ten_particle_task, params)[0]
                      - objective_model_single(down, ten_particle_task, params)[0]) / (2 * h)
    assert np.linalg.norm(grad) > 0.0
    assert np.linalg.norm(grad - numeric) / np.linalg.norm(numeric) < 1e-3


def test_value_matches_tape_free_rollout(compact_task, wide_params):
    phi = np.array([0.1, 0.2])
    value, _ = objective_model_single(phi, compact_task, wide_params)
    assert value == pytest.approx(value_model(phi, compact_task, wide_params), abs=1e-12)


def test_segment_checkpoints_do_not_change_gradient(compact_task, wide_params):
    phi = np.array([0.05, 0.3])
    _, per_step = objective_model_single(phi, compact_task, wide_params, segment_length=1)
    _, segmented = objective_model_single(phi, compact_task, wide_params, segment_length=2)
    np.testing.assert_allclose(segmented, per_step, rtol=1e-10, atol=1e-14)


def test_ensemble_of_one_matches_single_model(compact_task, wide_params):
    phi = np.array([0.0, 0.1])
    single = objective_model(phi, compact_task, wide_params)
    ensemble = objective_model(phi, compact_task, Ensemble((wide_params,)))
    assert single[0] == ensemble[0]
    np.testing.assert_array_equal(single[1], ensemble[1])


def test_ensemble_of_identical_members_matches_single_model(compact_task, wide_params):
    phi = np.array([0.1, -0.05])
    single_value, single_grad = objective_model(phi, compact_task, wide_params)
    value, grad = objective_model(phi, compact_task, Ensemble((wide_params, wide_params, wide_params)), workers=2)
    assert value == pytest.approx(single_value, abs=1e-12)
    np.testing.assert_allclose(grad, single_grad, rtol=0.0, atol=1e-12)


def test_detached_tool_gets_zero_gradient(small_params):
    task = generate_task("contain", 0, num_steps=3, num_joints=4, global_offset=True, initial_offset=(0.0, 0.6))
    record = gd_optimize(
        task.initial_design().phi,
        lambda phi: objective_model(phi, task, small_params),
        GDConfig(steps=3),
    )
    assert [r.grad_norm_or_sigma for r in record.rows] == [0.0, 0.0, 0.0]
    np.testing.assert_array_equal(record.final_phi, task.initial_design().phi)


def test_zero_step_landscape_gradient_is_penalty_only(small_params, rng):
    task = generate_task("landscape-direction", 0, num_steps=0)
    phi = rng.normal(0.0, 0.3, size=task.arity)
    _, grad = objective_model(phi, task, small_params)
    _, (penalty_grad,) = value_and_grad(lambda p: smoothness_penalty(p, task.reward.gamma_r), phi)
    np.testing.assert_allclose(grad, -penalty_grad, rtol=1e-12, atol=1e-15)


def test_oracle_objective_is_deterministic():
    task = generate_task("contain", 1, num_steps=5)
    phi = np.full(task.arity, 0.05)
    assert objective_oracle(phi, task) == objective_oracle(phi, task)


def test_initial_design_has_zero_normalized_reward(small_params):
    task = generate_task("ramp", 2, num_steps=4)
    evaluation = evaluate_design(task.initial_design().phi, task, small_params)
    assert evaluation.oracle.normalized == 0.0
    assert evaluation.model.normalized == 0.0
    row = evaluation.to_row()
    assert {"j_oracle_raw", "j_model_raw", "relative_gap"} <= set(row)


def test_smoothness_penalty_on_tensor():
    assert smoothness_penalty(Tensor(np.array([0.0, 0.5, 1.0])), 300.0).item() == pytest.approx(75.0)
