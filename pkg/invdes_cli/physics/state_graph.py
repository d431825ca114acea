"""
Particle state as a graph: positions, velocity history, typed nodes and
proximity edges.
"""
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from invdes_cli.autodiff import Tensor, ops
from invdes_cli.errors import NonFiniteError, RolloutDivergenceError

FLUID = 0
DESIGN = 1
WALL = 2
NUM_NODE_TYPES = 3

HISTORY = 2
DEFAULT_DT = 0.05
FLOOR_HEIGHT = 0.0
SCENE_LOW, SCENE_HIGH = -0.1, 1.1
UNIT_BOX = (0.0, 1.0, 0.0, 1.0)  # x_lo, x_hi, y_lo, y_hi


@dataclass(frozen=True)
class EdgeSet:
    senders: np.ndarray
    receivers: np.ndarray
    displacement: Tensor  # u_receiver - u_sender, E x 2
    distance: Tensor  # E x 1

    @property
    def num_edges(self) -> int:
        return int(self.senders.shape[0])


@dataclass(frozen=True)
class ParticleState:
    positions: Tensor  # N x 2
    velocity_history: Tensor  # N x H x 2, newest last
    node_types: np.ndarray
    removed: np.ndarray
    removal_order: tuple[int, ...] = ()
    remove_at_floor: bool = False
    floor_height: float = FLOOR_HEIGHT

    @classmethod
    def at_rest(
            cls,
            positions: Union[Tensor, np.ndarray],
            node_types: np.ndarray,
            history: int = HISTORY,
            remove_at_floor: bool = False,
    ) -> "ParticleState":
        positions = positions if isinstance(positions, Tensor) else Tensor(positions)
        n = positions.shape[0]
        return cls(
            positions=positions,
            velocity_history=Tensor(np.zeros((n, history, 2))),
            node_types=np.asarray(node_types, dtype=np.int64),
            removed=np.zeros(n, dtype=bool),
            remove_at_floor=remove_at_floor,
        )

    @property
    def num_particles(self) -> int:
        return int(self.positions.shape[0])

    @property
    def history(self) -> int:
        return int(self.velocity_history.shape[1])

    @property
    def fluid_mask(self) -> np.ndarray:
        return self.node_types == FLUID

    @property
    def moving_mask(self) -> np.ndarray:
        """Fluid particles still in play."""
        return self.fluid_mask & ~self.removed

    @property
    def graph_mask(self) -> np.ndarray:
        """Particles that take part in edge construction."""
        return ~self.removed

    @property
    def latest_velocity(self) -> Tensor:
        return self.velocity_history[:, -1, :]

    @property
    def removed_positions(self) -> Tensor:
        """Positions u_v^D of particles that touched the floor, in removal order."""
        return ops.gather(self.positions, np.asarray(self.removal_order, dtype=np.int64))

    def tensors(self) -> tuple[Tensor, Tensor]:
        return self.positions, self.velocity_history

    def replace_tensors(self, tensors) -> "ParticleState":
        positions, velocity_history = tensors
        return replace(self, positions=positions, velocity_history=velocity_history)

    def detached(self) -> "ParticleState":
        return self.replace_tensors((self.positions.detach(), self.velocity_history.detach()))

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.data.tolist(),
            "velocity_history": self.velocity_history.data.tolist(),
            "node_types": self.node_types.tolist(),
            "removed": self.removed.tolist(),
            "removal_order": list(self.removal_order),
            "remove_at_floor": self.remove_at_floor,
            "floor_height": self.floor_height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParticleState":
        n = len(data["node_types"])
        positions = np.asarray(data["positions"], dtype=np.float64).reshape(n, 2)
        history = np.asarray(data["velocity_history"], dtype=np.float64).reshape(n, -1, 2)
        return cls(
            positions=Tensor(positions),
            velocity_history=Tensor(history),
            node_types=np.asarray(data["node_types"], dtype=np.int64),
            removed=np.asarray(data["removed"], dtype=bool),
            removal_order=tuple(int(i) for i in data["removal_order"]),
            remove_at_floor=bool(data["remove_at_floor"]),
            floor_height=float(data["floor_height"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ParticleState":
        return cls.from_dict(json.loads(text))


def _positions_array(positions: Union[Tensor, np.ndarray]) -> np.ndarray:
    return positions.data if isinstance(positions, Tensor) else np.asarray(positions, dtype=np.float64)


def radius_pairs(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """
    All ordered pairs (i, j), i != j, with |p_i - p_j| <= radius.

    Uses a uniform cell grid of cell size `radius`: only the 3x3 block of cells around
    a particle can hold neighbours. Pairs come back sorted by (sender, receiver).
    """
    n = points.shape[0]
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    cells = np.floor(points / radius).astype(np.int64)
    cells -= cells.min(axis=0) - 1
    width = int(cells[:, 1].max()) + 2
    keys = cells[:, 0] * width + cells[:, 1]
    order = np.argsort(keys, kind="stable")
    unique_keys, starts, counts = np.unique(keys[order], return_index=True, return_counts=True)

    senders, receivers = [], []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            neighbour_keys = keys + dx * width + dy
            slot = np.searchsorted(unique_keys, neighbour_keys)
            slot = np.minimum(slot, unique_keys.size - 1)
            found = unique_keys[slot] == neighbour_keys
            owners = np.nonzero(found)[0]
            if owners.size == 0:
                continue
            counts_here = counts[slot[owners]]
            starts_here = starts[slot[owners]]
            total = int(counts_here.sum())
            i = np.repeat(owners, counts_here)
            offsets = np.arange(total) - np.repeat(np.cumsum(counts_here) - counts_here, counts_here)
            j = order[np.repeat(starts_here, counts_here) + offsets]
            keep = i != j
            i, j = i[keep], j[keep]
            delta = points[j] - points[i]
            close = np.sqrt(np.sum(delta * delta, axis=1)) <= radius
            senders.append(i[close])
            receivers.append(j[close])

    senders = np.concatenate(senders) if senders else np.zeros(0, dtype=np.int64)
    receivers = np.concatenate(receivers) if receivers else np.zeros(0, dtype=np.int64)
    sort = np.lexsort((receivers, senders))
    return senders[sort], receivers[sort]


def build_radius_edges(
        positions: Union[Tensor, np.ndarray],
        radius: float,
        include: Optional[np.ndarray] = None,
) -> EdgeSet:
    """
    Proximity edges with the inclusive rule |u_i - u_j| <= radius.

    Parameters:
        positions: N x 2 positions (a tape-attached Tensor keeps edge features differentiable).
        radius (float): connectivity radius, > 0.
        include (np.ndarray): optional boolean mask of particles allowed to take part.

    Returns:
        EdgeSet with symmetric sender/receiver lists and displacement/distance features.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    positions = positions if isinstance(positions, Tensor) else Tensor(positions)
    points = positions.data
    if not np.all(np.isfinite(points)):
        raise NonFiniteError("build_radius_edges", "non-finite positions")

    candidates = np.arange(points.shape[0]) if include is None else np.nonzero(include)[0]
    local_s, local_r = radius_pairs(points[candidates], radius)
    senders, receivers = candidates[local_s], candidates[local_r]
    if include is not None:
        sort = np.lexsort((receivers, senders))
        senders, receivers = senders[sort], receivers[sort]

    displacement = ops.sub(ops.gather(positions, receivers), ops.gather(positions, senders))
    distance = ops.sqrt(ops.sum_(ops.square(displacement), axis=1, keepdims=True))
    return EdgeSet(senders=senders, receivers=receivers, displacement=displacement, distance=distance)


def advance_state(state: ParticleState, acceleration: Tensor, dt: float = DEFAULT_DT) -> ParticleState:
    """
    Semi-implicit Euler update of fluid particles from a per-particle acceleration.

    v' = v_latest + a dt, u' = u + v' dt. Design nodes and removed particles keep their
    position and history. With floor removal enabled, fluid particles ending at
    y <= floor are flagged removed and frozen at that first out-of-domain position.
    """
    acceleration = acceleration if isinstance(acceleration, Tensor) else Tensor(acceleration)
    if not np.all(np.isfinite(acceleration.data)):
        raise NonFiniteError("advance_state", "non-finite acceleration")
    n, history = state.num_particles, state.history
    moving = state.moving_mask

    v_new = ops.add(state.latest_velocity, ops.mul(acceleration, dt))
    u_new = ops.add(state.positions, ops.mul(v_new, dt))
    positions = ops.where(np.repeat(moving[:, None], 2, axis=1), u_new, state.positions)

    shifted = ops.concat([state.velocity_history[:, 1:, :], ops.reshape(v_new, (n, 1, 2))], axis=1)
    history_mask = np.broadcast_to(moving[:, None, None], (n, history, 2))
    velocity_history = ops.where(history_mask, shifted, state.velocity_history)

    removed, order = state.removed, state.removal_order
    if state.remove_at_floor:
        crossed = moving & (positions.data[:, 1] <= state.floor_height)
        if crossed.any():
            removed = removed | crossed
            order = order + tuple(int(i) for i in np.nonzero(crossed)[0])

    return replace(
        state,
        positions=positions,
        velocity_history=velocity_history,
        removed=removed,
        removal_order=order,
    )


def check_scene_bounds(state: ParticleState, step: int) -> None:
    """Raise when a particle still in play leaves the soft scene bound."""
    active = state.positions.data[~state.removed]
    if not np.all(np.isfinite(active)):
        raise RolloutDivergenceError(step, f"non-finite positions at step {step}")
    if active.size and (active.min() < SCENE_LOW or active.max() > SCENE_HIGH):
        raise RolloutDivergenceError(step, f"particles left the scene at step {step}")


def velocity_history_from_frames(frames: np.ndarray, t: int, history: int, dt: float) -> np.ndarray:
    """N x H x 2 finite-difference velocities ending at frame t."""
    window = frames[t - history:t + 1]
    return np.transpose((window[1:] - window[:-1]) / dt, (1, 0, 2))


def state_from_frames(
        frames: np.ndarray,
        t: int,
        node_types: np.ndarray,
        dt: float,
        history: int = HISTORY,
) -> ParticleState:
    """State at frame t of a stored trajectory (t >= history)."""
    frames = np.asarray(frames, dtype=np.float64)
    return ParticleState(
        positions=Tensor(frames[t].copy()),
        velocity_history=Tensor(velocity_history_from_frames(frames, t, history, dt)),
        node_types=np.asarray(node_types, dtype=np.int64),
        removed=np.zeros(frames.shape[1], dtype=bool),
    )
