import numpy as np
import pytest

from invdes_cli.autodiff import Tensor, ops, value_and_grad
from invdes_cli.design import (
    ABSOLUTE_JOINTS, RELATIVE_JOINTS, DesignParams, apply_design, control_point_interpolation, generate_task,
    heightfield, heightfield_from_control_points, heightfield_offsets, initial_fluid, rotor_grid,
    tool_from_absolute_angles, tool_from_relative_angles,
)
from invdes_cli.errors import ConfigError
from invdes_cli.physics import DESIGN, FLUID


def test_straight_tool_spans_anchor_to_tip():
    geometry = tool_from_relative_angles(Tensor(np.zeros(16)))
    particles = geometry.particles.data
    np.testing.assert_allclose(particles[0], [0.15, 0.35], atol=1e-12)
    np.testing.assert_allclose(particles[-1], [0.95, 0.35], atol=1e-12)
    np.testing.assert_allclose(particles[:, 1], 0.35, atol=1e-12)
    assert geometry.segments.shape == (16, 4)


def test_quarter_turn_gives_vertical_tool():
    phi = np.zeros(16)
    phi[0] = np.pi / 2
    particles = tool_from_relative_angles(Tensor(phi)).particles.data
    np.testing.assert_allclose(particles[:, 0], 0.15, atol=1e-12)
    np.testing.assert_allclose(particles[-1, 1], 1.15, atol=1e-12)


def test_relative_angles_are_prefix_sums_of_absolute(rng):
    phi = rng.uniform(-0.3, 0.3, size=8)
    relative = tool_from_relative_angles(Tensor(phi)).particles.data
    absolute = tool_from_absolute_angles(Tensor(np.cumsum(phi))).particles.data
    np.testing.assert_allclose(relative, absolute, atol=1e-12, rtol=0)


def test_rotor_half_turn_symmetry(rng):
    phi = rng.uniform(-np.pi, np.pi, size=9)
    a = rotor_grid(Tensor(phi), 3, (0.14, 0.3, 0.65, 0.6), 0.24).particles.data
    b = rotor_grid(Tensor(phi + np.pi), 3, (0.14, 0.3, 0.65, 0.6), 0.24).particles.data
    a = a.reshape(9, -1, 2)
    b = b.reshape(9, -1, 2)[:, ::-1, :]
    np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


def test_heightfield_offset_derivative(rng):
    phi = rng.normal(size=6)
    _, (grad,) = value_and_grad(lambda p: ops.sum_(heightfield_offsets(p, 0.3)), phi)
    np.testing.assert_allclose(grad, 0.3 * (1.0 - np.tanh(phi) ** 2), rtol=1e-12)


def test_flat_heightfield_sits_at_base():
    geometry = heightfield(Tensor(np.zeros(16)))
    np.testing.assert_allclose(geometry.particles.data[:, 1], 0.35, atol=1e-15)
    np.testing.assert_allclose(geometry.particles.data[[0, -1], 0], [0.1, 0.9], atol=1e-12)


def test_control_point_midpoint():
    np.testing.assert_allclose(control_point_interpolation(2, 3) @ np.array([0.0, 1.0]), [0.0, 0.5, 1.0])


def test_control_points_equal_to_nodes_is_identity():
    np.testing.assert_array_equal(control_point_interpolation(5, 5), np.eye(5))
    direct = heightfield(Tensor(np.linspace(-1, 1, 5))).particles.data
    through = heightfield_from_control_points(Tensor(np.linspace(-1, 1, 5)), 5).particles.data
    np.testing.assert_allclose(through, direct, atol=1e-15)


def test_contain_scene_layout():
    task = generate_task("contain", 0)
    assert initial_fluid(task.template).shape == (25, 2)
    state, geometry = apply_design(task.initial_design(), task.template)
    assert np.sum(state.node_types == FLUID) == 25
    assert np.sum(state.node_types == DESIGN) == geometry.particles.shape[0]
    assert not state.velocity_history.data.any()


def test_design_params_validation():
    alpha = {"anchor": [0.15, 0.35], "tool_length": 0.8, "num_joints": 4}
    with pytest.raises(ConfigError):
        DesignParams(RELATIVE_JOINTS, np.zeros(3), alpha)
    with pytest.raises(ConfigError):
        DesignParams("spline", np.zeros(4), alpha)
    design = DesignParams(ABSOLUTE_JOINTS, np.arange(4.0), alpha)
    again = DesignParams.from_dict(design.to_dict())
    np.testing.assert_array_equal(again.phi, design.phi)
    assert again.kind == ABSOLUTE_JOINTS


def test_global_offset_moves_whole_tool():
    task = generate_task("contain", 0, num_joints=4, global_offset=True, initial_offset=(0.05, -0.1))
    design = task.initial_design()
    assert design.phi.size == 6
    _, moved = apply_design(design, task.template)
    _, still = apply_design(design.with_phi(np.zeros(6)), task.template)
    np.testing.assert_allclose(moved.particles.data - still.particles.data, np.tile([0.05, -0.1], (len(
        still.particles.data), 1)), atol=1e-12)
