import numpy as np
import pytest

from invdes_cli.autodiff import Tensor
from invdes_cli.errors import NonFiniteError, RolloutDivergenceError
from invdes_cli.physics import (
    DESIGN, FLUID, ParticleState, advance_state, build_radius_edges, check_scene_bounds, radius_pairs,
    state_from_frames,
)


def brute_force_pairs(points, radius):
    pairs = set()
    for i in range(len(points)):
        for j in range(len(points)):
            if i != j and np.linalg.norm(points[j] - points[i]) <= radius:
                pairs.add((i, j))
    return pairs


def test_close_pair_gets_both_edges():
    edges = build_radius_edges(np.array([[0.5, 0.5], [0.52, 0.5]]), 0.04)
    assert list(zip(edges.senders, edges.receivers)) == [(0, 1), (1, 0)]
    np.testing.assert_allclose(edges.distance.data[:, 0], [0.02, 0.02])


def test_boundary_distance_is_included():
    edges = build_radius_edges(np.array([[0.5, 0.5], [0.75, 0.5]]), 0.25)
    assert edges.num_edges == 2


def test_matches_brute_force(rng):
    points = rng.uniform(0.0, 1.0, size=(100, 2))
    senders, receivers = radius_pairs(points, 0.15)
    assert set(zip(senders.tolist(), receivers.tolist())) == brute_force_pairs(points, 0.15)


def test_matches_brute_force_over_many_scenes(rng):
    for _ in range(50):
        n = int(rng.integers(2, 40))
        points = rng.uniform(-0.1, 1.1, size=(n, 2))
        radius = float(rng.uniform(0.02, 0.3))
        senders, receivers = radius_pairs(points, radius)
        assert set(zip(senders.tolist(), receivers.tolist())) == brute_force_pairs(points, radius)


def test_edges_are_sorted_and_symmetric(rng):
    points = rng.uniform(0.0, 1.0, size=(60, 2))
    edges = build_radius_edges(points, 0.2)
    pairs = list(zip(edges.senders.tolist(), edges.receivers.tolist()))
    assert pairs == sorted(pairs)
    assert set(pairs) == {(r, s) for s, r in pairs}


def test_edge_features_match_positions(rng):
    points = rng.uniform(0.0, 1.0, size=(40, 2))
    edges = build_radius_edges(points, 0.25)
    expected = points[edges.receivers] - points[edges.senders]
    np.testing.assert_allclose(edges.displacement.data, expected, atol=1e-15, rtol=0)
    np.testing.assert_allclose(edges.distance.data[:, 0], np.linalg.norm(expected, axis=1), atol=1e-15, rtol=0)


def test_include_mask_limits_participants(rng):
    points = rng.uniform(0.4, 0.6, size=(20, 2))
    include = np.zeros(20, dtype=bool)
    include[::2] = True
    edges = build_radius_edges(points, 0.5, include=include)
    assert include[edges.senders].all() and include[edges.receivers].all()
    assert edges.num_edges == 10 * 9


def test_single_particle_and_bad_input():
    assert build_radius_edges(np.array([[0.5, 0.5]]), 0.1).num_edges == 0
    with pytest.raises(ValueError):
        build_radius_edges(np.zeros((2, 2)), 0.0)
    with pytest.raises(NonFiniteError):
        build_radius_edges(np.array([[0.5, np.nan], [0.5, 0.5]]), 0.1)


def test_advance_moves_fluid_only():
    state = ParticleState.at_rest(np.array([[0.5, 0.5], [0.2, 0.2]]), np.array([FLUID, DESIGN]))
    acceleration = Tensor(np.array([[2.0, 0.0], [5.0, 5.0]]))
    nxt = advance_state(state, acceleration, dt=0.05)
    np.testing.assert_allclose(nxt.positions.data[0], [0.505, 0.5])
    np.testing.assert_array_equal(nxt.positions.data[1], [0.2, 0.2])
    np.testing.assert_allclose(nxt.velocity_history.data[0, -1], [0.1, 0.0])
    np.testing.assert_array_equal(nxt.velocity_history.data[1], np.zeros((2, 2)))


def test_floor_crossing_removes_particle():
    state = ParticleState.at_rest(np.array([[0.5, 0.01]]), np.array([FLUID]), remove_at_floor=True)
    history = state.velocity_history.data.copy()
    history[0, -1] = [0.0, -0.5]
    state = state.replace_tensors((state.positions, Tensor(history)))
    nxt = advance_state(state, Tensor(np.zeros((1, 2))), dt=0.05)
    assert nxt.removed[0]
    assert nxt.removal_order == (0,)
    np.testing.assert_allclose(nxt.positions.data[0], [0.5, -0.015])

    frozen = advance_state(nxt, Tensor(np.ones((1, 2))), dt=0.05)
    np.testing.assert_array_equal(frozen.positions.data, nxt.positions.data)
    assert frozen.removal_order == (0,)


def test_json_roundtrip(rng):
    state = ParticleState.at_rest(rng.uniform(size=(5, 2)), np.array([FLUID] * 4 + [DESIGN]))
    again = ParticleState.from_json(state.to_json())
    np.testing.assert_array_equal(again.positions.data, state.positions.data)
    np.testing.assert_array_equal(again.node_types, state.node_types)
    assert again.velocity_history.shape == (5, 2, 2)


def test_scene_bounds():
    state = ParticleState.at_rest(np.array([[0.5, 0.5], [1.5, 0.5]]), np.array([FLUID, FLUID]))
    with pytest.raises(RolloutDivergenceError) as info:
        check_scene_bounds(state, 7)
    assert info.value.step == 7


def test_state_from_frames_velocities():
    frames = np.array([[[0.0, 0.0]], [[0.1, 0.0]], [[0.3, 0.0]]])
    state = state_from_frames(frames, 2, np.array([FLUID]), dt=0.1)
    np.testing.assert_allclose(state.velocity_history.data[0], [[1.0, 0.0], [2.0, 0.0]])
