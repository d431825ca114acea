"""
Encode-Process-Decode message passing over the particle graph.

Every function takes the weights as a dict of Tensors so that the same code runs on
constants (inference, CEM) and on tape leaves (training, gradient-based design).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from invdes_cli.autodiff import Tensor, ops
from invdes_cli.errors import ShapeError
from invdes_cli.model.params import ModelParams
from invdes_cli.physics.state_graph import (
    NUM_NODE_TYPES, UNIT_BOX, EdgeSet, ParticleState, advance_state, build_radius_edges, check_scene_bounds,
)

LAYER_NORM_EPS = 1e-5

Weights = dict[str, Tensor]


@dataclass(frozen=True)
class LatentGraph:
    nodes: Tensor  # N x W
    edges: Tensor  # E x W
    edge_set: EdgeSet

    @property
    def num_nodes(self) -> int:
        return int(self.nodes.shape[0])


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    y = ops.matmul(x, w)
    return ops.add(y, ops.broadcast_to(b, y.shape))


def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    shape = x.shape
    mu = ops.mean(x, axis=1, keepdims=True)
    centred = ops.sub(x, ops.broadcast_to(mu, shape))
    var = ops.mean(ops.square(centred), axis=1, keepdims=True)
    inv = ops.div(1.0, ops.sqrt(ops.add(var, LAYER_NORM_EPS)))
    y = ops.mul(centred, ops.broadcast_to(inv, shape))
    return ops.add(ops.mul(y, ops.broadcast_to(gain, shape)), ops.broadcast_to(bias, shape))


def mlp(name: str, x: Tensor, weights: Weights) -> Tensor:
    """Linear-ReLU-Linear-ReLU-Linear, layer-normed when the MLP declares gains."""
    h = ops.relu(_linear(x, weights[f"{name}/w0"], weights[f"{name}/b0"]))
    h = ops.relu(_linear(h, weights[f"{name}/w1"], weights[f"{name}/b1"]))
    out = _linear(h, weights[f"{name}/w2"], weights[f"{name}/b2"])
    if f"{name}/ln_gain" in weights:
        out = _layer_norm(out, weights[f"{name}/ln_gain"], weights[f"{name}/ln_bias"])
    return out


def node_feature_width(history: int) -> int:
    return 2 * history + NUM_NODE_TYPES + 4


def node_features(state: ParticleState, params: ModelParams, bounds=UNIT_BOX) -> Tensor:
    """[normalized velocity history, one-hot type, wall distances / radius clipped to [-1, 1]]."""
    n, h = state.num_particles, state.history
    stats, radius = params.stats, params.hyper.radius
    velocity = ops.reshape(state.velocity_history, (n, 2 * h))
    mean = np.broadcast_to(np.tile(stats.velocity_mean, h), (n, 2 * h))
    std = np.broadcast_to(np.tile(stats.velocity_std, h), (n, 2 * h))
    velocity = ops.div(ops.sub(velocity, mean), std)

    one_hot = np.zeros((n, NUM_NODE_TYPES))
    one_hot[np.arange(n), state.node_types] = 1.0

    x_lo, x_hi, y_lo, y_hi = bounds
    x = state.positions[:, 0:1]
    y = state.positions[:, 1:2]
    walls = ops.concat([ops.sub(x, x_lo), ops.sub(x_hi, x), ops.sub(y, y_lo), ops.sub(y_hi, y)], axis=1)
    walls = ops.clip(ops.div(walls, radius), -1.0, 1.0)
    return ops.concat([velocity, Tensor(one_hot), walls], axis=1)


def edge_features(edge_set: EdgeSet, radius: float) -> Tensor:
    return ops.concat([ops.div(edge_set.displacement, radius), ops.div(edge_set.distance, radius)], axis=1)


def encode(
        state: ParticleState,
        params: ModelParams,
        weights: Optional[Weights] = None,
        bounds=UNIT_BOX,
) -> LatentGraph:
    weights = weights if weights is not None else params.tensors()
    features = node_features(state, params, bounds)
    expected = weights["encoder_node/w0"].shape[0]
    if features.shape[1] != expected:
        raise ShapeError(f"node features have width {features.shape[1]}, weights expect {expected}")
    edge_set = build_radius_edges(state.positions, params.hyper.radius, include=state.graph_mask)
    return LatentGraph(
        nodes=mlp("encoder_node", features, weights),
        edges=mlp("encoder_edge", edge_features(edge_set, params.hyper.radius), weights),
        edge_set=edge_set,
    )


def process(graph: LatentGraph, params: ModelParams, weights: Optional[Weights] = None) -> LatentGraph:
    """Residual edge then node updates, messages summed at their receivers."""
    weights = weights if weights is not None else params.tensors()
    nodes, edges = graph.nodes, graph.edges
    senders, receivers = graph.edge_set.senders, graph.edge_set.receivers
    for b in range(params.hyper.blocks):
        edge_in = ops.concat([edges, ops.gather(nodes, senders), ops.gather(nodes, receivers)], axis=1)
        edges = ops.add(edges, mlp(f"processor_{b}_edge", edge_in, weights))
        aggregate = ops.scatter_add(edges, receivers, graph.num_nodes)
        nodes = ops.add(nodes, mlp(f"processor_{b}_node", ops.concat([nodes, aggregate], axis=1), weights))
    return LatentGraph(nodes=nodes, edges=edges, edge_set=graph.edge_set)


def decode_normalized(graph: LatentGraph, params: ModelParams, weights: Optional[Weights] = None) -> Tensor:
    weights = weights if weights is not None else params.tensors()
    return mlp("decoder", graph.nodes, weights)


def decode(graph: LatentGraph, params: ModelParams, weights: Optional[Weights] = None) -> Tensor:
    """Per-particle acceleration, de-normalized with the target statistics."""
    raw = decode_normalized(graph, params, weights)
    shape = raw.shape
    std = np.broadcast_to(params.stats.acceleration_std, shape)
    mean = np.broadcast_to(params.stats.acceleration_mean, shape)
    return ops.add(ops.mul(raw, std), mean)


def predict_acceleration(
        state: ParticleState,
        params: ModelParams,
        weights: Optional[Weights] = None,
        bounds=UNIT_BOX,
) -> Tensor:
    weights = weights if weights is not None else params.tensors()
    return decode(process(encode(state, params, weights, bounds), params, weights), params, weights)


def model_step(
        state: ParticleState,
        params: ModelParams,
        weights: Optional[Weights] = None,
        bounds=UNIT_BOX,
) -> ParticleState:
    acceleration = predict_acceleration(state, params, weights, bounds)
    return advance_state(state, acceleration, params.hyper.dt)


def rollout_model(
        initial: ParticleState,
        params: ModelParams,
        num_steps: int,
        weights: Optional[Weights] = None,
        check_bounds: bool = True,
) -> list[ParticleState]:
    """K + 1 states starting with `initial`; raises RolloutDivergenceError when particles escape."""
    weights = weights if weights is not None else params.tensors()
    states = [initial]
    for k in range(num_steps):
        nxt = model_step(states[-1], params, weights)
        if check_bounds:
            check_scene_bounds(nxt, k + 1)
        states.append(nxt)
    return states
