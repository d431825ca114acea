"""
Ground-truth toy fluid: pairwise linear repulsion, gravity, damping and inelastic
projection off obstacle segments and walls. Works on plain arrays and is never
recorded on a tape.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from invdes_cli.autodiff import Tensor
from invdes_cli.errors import ConfigError, RolloutDivergenceError
from invdes_cli.physics.state_graph import DEFAULT_DT, ParticleState, radius_pairs

DIVERGENCE_LIMIT = 10.0
CONTACT_TOLERANCE = 1e-12
MAX_PROJECTION_PASSES = 8


@dataclass(frozen=True)
class OracleConfig:
    gravity: tuple[float, float] = (0.0, -1.0)
    interaction_radius: float = 0.03
    stiffness: float = 40.0
    damping: float = 0.98
    dt: float = DEFAULT_DT
    segments: tuple[tuple[float, float, float, float], ...] = ()  # (x0, y0, x1, y1)
    collision_radius: float = 0.01
    walls: bool = True

    def __post_init__(self):
        if self.interaction_radius <= 0:
            raise ConfigError("interaction_radius must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError("damping must lie in (0, 1]")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")

    def with_segments(self, segments: np.ndarray) -> "OracleConfig":
        segments = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
        return replace(self, segments=tuple(tuple(float(v) for v in s) for s in segments))

    def to_dict(self) -> dict:
        return {
            "gravity": list(self.gravity),
            "interaction_radius": self.interaction_radius,
            "stiffness": self.stiffness,
            "damping": self.damping,
            "dt": self.dt,
            "segments": [list(s) for s in self.segments],
            "collision_radius": self.collision_radius,
            "walls": self.walls,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OracleConfig":
        data = dict(data)
        data["gravity"] = tuple(data.get("gravity", (0.0, -1.0)))
        data["segments"] = tuple(tuple(s) for s in data.get("segments", ()))
        return cls(**data)


def repulsion_forces(points: np.ndarray, radius: float, stiffness: float) -> np.ndarray:
    """Linear repulsion k (r - d) along the separating direction for every overlapping pair."""
    forces = np.zeros_like(points)
    senders, receivers = radius_pairs(points, radius)
    if senders.size == 0:
        return forces
    delta = points[receivers] - points[senders]
    dist = np.sqrt(np.sum(delta * delta, axis=1))
    ok = dist > 0.0
    senders, receivers, delta, dist = senders[ok], receivers[ok], delta[ok], dist[ok]
    magnitude = stiffness * (radius - dist)
    # each unordered pair appears twice; each ordered pair pushes its receiver
    np.add.at(forces, receivers, (magnitude / dist)[:, None] * delta)
    return forces


def segment_distances(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """(N, S) distance from every point to every segment."""
    segments = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
    a = segments[:, :2]
    ab = segments[:, 2:] - a
    length_sq = np.sum(ab * ab, axis=1)
    rel = points[:, None, :] - a[None, :, :]
    t = np.sum(rel * ab[None, :, :], axis=2) / np.where(length_sq > 0.0, length_sq, 1.0)
    t = np.where(length_sq > 0.0, np.clip(t, 0.0, 1.0), 0.0)
    offset = rel - t[..., None] * ab[None, :, :]
    return np.sqrt(np.sum(offset * offset, axis=2))


def _project_off_segments(u: np.ndarray, v: np.ndarray, segments: np.ndarray, radius: float) -> np.ndarray:
    """Push points out to `radius` from every segment, zeroing the normal velocity. Returns the hit mask."""
    hit = np.zeros(u.shape[0], dtype=bool)
    for x0, y0, x1, y1 in segments:
        a = np.array([x0, y0])
        ab = np.array([x1, y1]) - a
        length_sq = float(ab @ ab)
        t = np.zeros(u.shape[0]) if length_sq == 0.0 else np.clip(((u - a) @ ab) / length_sq, 0.0, 1.0)
        closest = a + t[:, None] * ab
        offset = u - closest
        dist = np.sqrt(np.sum(offset * offset, axis=1))
        inside = dist < radius
        if not inside.any():
            continue
        normal = np.zeros_like(offset)
        far = inside & (dist > 0.0)
        normal[far] = offset[far] / dist[far, None]
        flat = inside & ~far
        if flat.any():
            seg_normal = np.array([-ab[1], ab[0]]) / max(np.sqrt(length_sq), 1e-12)
            normal[flat] = seg_normal
        u[inside] = closest[inside] + radius * normal[inside]
        vn = np.sum(v[inside] * normal[inside], axis=1)
        v[inside] -= vn[:, None] * normal[inside]
        hit |= inside
    return hit


def _clamp_to_walls(u: np.ndarray, floor: Optional[float]) -> tuple[np.ndarray, np.ndarray]:
    """Clamp into the unit box (floor only when given). Returns the clamped x and y masks."""
    low_x, high_x, high_y = u[:, 0] < 0.0, u[:, 0] > 1.0, u[:, 1] > 1.0
    u[low_x, 0], u[high_x, 0], u[high_y, 1] = 0.0, 1.0, 1.0
    clamped_y = high_y.copy()
    if floor is not None:
        low_y = u[:, 1] < floor
        u[low_y, 1] = floor
        clamped_y |= low_y
    return low_x | high_x, clamped_y


def _admissible(points: np.ndarray, segments: np.ndarray, radius: float, walls: bool, floor: Optional[float]):
    ok = np.ones(points.shape[0], dtype=bool)
    if segments.size:
        ok &= np.all(segment_distances(points, segments) >= radius - CONTACT_TOLERANCE, axis=1)
    if walls:
        x, y = points[:, 0], points[:, 1]
        ok &= (x >= -CONTACT_TOLERANCE) & (x <= 1.0 + CONTACT_TOLERANCE) & (y <= 1.0 + CONTACT_TOLERANCE)
        if floor is not None:
            ok &= y >= floor - CONTACT_TOLERANCE
    return ok


def _constraint_lines(segments: np.ndarray, radius: float, walls: bool, floor: Optional[float]):
    """Lines n . x = c bounding the admissible region: both offset sides of every segment, plus the walls."""
    normals, offsets = [], []
    for x0, y0, x1, y1 in segments:
        ab = np.array([x1 - x0, y1 - y0])
        length = float(np.hypot(*ab))
        if length == 0.0:
            continue
        n = np.array([-ab[1], ab[0]]) / length
        c = float(n @ np.array([x0, y0]))
        normals += [n, n]
        offsets += [c + radius, c - radius]
    if walls:
        normals += [np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        offsets += [0.0, 1.0, 1.0]
        if floor is not None:
            normals.append(np.array([0.0, 1.0]))
            offsets.append(floor)
    return np.asarray(normals).reshape(-1, 2), np.asarray(offsets)


def nearest_admissible(
        point: np.ndarray,
        segments: np.ndarray,
        radius: float,
        walls: bool = True,
        floor: Optional[float] = None,
) -> Optional[np.ndarray]:
    """
    Closest admissible point among the corners and faces of the region outside every
    segment's collision band and inside the walls; None when no candidate is admissible.
    """
    normals, offsets = _constraint_lines(segments, radius, walls, floor)
    candidates = [point[None, :]]
    if normals.size:
        candidates.append(point - (normals @ point - offsets)[:, None] * normals)
        i, j = np.triu_indices(normals.shape[0], 1)
        n1, n2 = normals[i], normals[j]
        det = n1[:, 0] * n2[:, 1] - n1[:, 1] * n2[:, 0]
        ok = np.abs(det) > 1e-12
        c1, c2, det = offsets[i][ok], offsets[j][ok], det[ok]
        n1, n2 = n1[ok], n2[ok]
        candidates.append(np.stack([
            (c1 * n2[:, 1] - c2 * n1[:, 1]) / det,
            (n1[:, 0] * c2 - n2[:, 0] * c1) / det,
        ], axis=1))
    if segments.size:
        ends = segments.reshape(-1, 2)
        off = point - ends
        dist = np.sqrt(np.sum(off * off, axis=1))
        away = dist > 0.0
        candidates.append(ends[away] + radius * off[away] / dist[away, None])
    candidates = np.concatenate(candidates, axis=0)
    admissible = _admissible(candidates, segments, radius, walls, floor)
    if not admissible.any():
        return None
    candidates = candidates[admissible]
    return candidates[int(np.argmin(np.sum((candidates - point) ** 2, axis=1)))]


def resolve_contacts(
        u: np.ndarray,
        v: np.ndarray,
        fallback: np.ndarray,
        segments: np.ndarray,
        radius: float,
        walls: bool,
        floor: Optional[float],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Project `u` off the segments and into the walls in place, repeating until every
    point is admissible or the pass budget runs out. Points left inside a collision band
    move to the nearest admissible corner or face, else back to their last admissible
    position in `fallback` or the passes. Returns (segment hit, clamped x, clamped y) masks.
    """
    n = u.shape[0]
    hit = np.zeros(n, dtype=bool)
    clamped_x = np.zeros(n, dtype=bool)
    clamped_y = np.zeros(n, dtype=bool)
    last_ok = fallback.copy()
    has_ok = _admissible(last_ok, segments, radius, walls, floor)
    bad = np.ones(n, dtype=bool)
    for _ in range(MAX_PROJECTION_PASSES):
        if segments.size:
            hit |= _project_off_segments(u, v, segments, radius)
        if walls:
            cx, cy = _clamp_to_walls(u, floor)
            clamped_x |= cx
            clamped_y |= cy
        bad = ~_admissible(u, segments, radius, walls, floor)
        last_ok[~bad] = u[~bad]
        has_ok |= ~bad
        if not bad.any():
            return hit, clamped_x, clamped_y

    for i in np.nonzero(bad)[0]:
        target = nearest_admissible(u[i], segments, radius, walls, floor)
        if target is None:
            if has_ok[i]:
                u[i] = last_ok[i]
            continue
        correction = target - u[i]
        norm = float(np.hypot(*correction))
        if norm > 0.0:
            normal = correction / norm
            v[i] -= float(v[i] @ normal) * normal
        u[i] = target
        hit[i] = True
    return hit, clamped_x, clamped_y


def step_oracle(state: ParticleState, cfg: OracleConfig, step_index: int = 0) -> ParticleState:
    """
    One deterministic ground-truth step.

    The stored newest velocity is the finite difference of positions, with the normal
    component zeroed for particles that were projected off a wall or obstacle.
    """
    u_old = state.positions.data
    moving = state.moving_mask
    idx = np.nonzero(moving)[0]
    u = u_old[idx].copy()
    v_prev = state.velocity_history.data[idx, -1, :]

    forces = repulsion_forces(u, cfg.interaction_radius, cfg.stiffness)
    v = cfg.damping * v_prev + (np.asarray(cfg.gravity) + forces) * cfg.dt
    u = u + v * cfg.dt

    floor = None if state.remove_at_floor else state.floor_height
    segments = np.asarray(cfg.segments, dtype=np.float64).reshape(-1, 4)
    segment_hit, zero_x, zero_y = resolve_contacts(
        u, v, u_old[idx], segments, cfg.collision_radius, cfg.walls, floor,
    )

    velocity = (u - u_old[idx]) / cfg.dt
    # tangential velocity only for particles pushed off an obstacle
    velocity[segment_hit] = v[segment_hit]
    velocity[zero_x, 0] = 0.0
    velocity[zero_y, 1] = 0.0

    if idx.size and np.max(np.abs(u)) > DIVERGENCE_LIMIT:
        raise RolloutDivergenceError(step_index)

    positions = u_old.copy()
    positions[idx] = u
    history = state.velocity_history.data.copy()
    history[idx, :-1, :] = history[idx, 1:, :]
    history[idx, -1, :] = velocity

    removed, order = state.removed, state.removal_order
    if state.remove_at_floor:
        crossed = np.zeros_like(moving)
        crossed[idx] = u[:, 1] <= state.floor_height
        if crossed.any():
            removed = removed | crossed
            order = order + tuple(int(i) for i in np.nonzero(crossed)[0])

    return replace(
        state,
        positions=Tensor(positions),
        velocity_history=Tensor(history),
        removed=removed,
        removal_order=order,
    )


def rollout_oracle(initial: ParticleState, cfg: OracleConfig, num_steps: int) -> list[ParticleState]:
    """K + 1 states starting with `initial`."""
    states = [initial.detached()]
    for k in range(num_steps):
        states.append(step_oracle(states[-1], cfg, step_index=k + 1))
    return states


def kinetic_energy(state: ParticleState) -> float:
    v = state.velocity_history.data[state.moving_mask, -1, :]
    return 0.5 * float(np.sum(v * v))


def total_momentum(state: ParticleState) -> np.ndarray:
    return np.sum(state.velocity_history.data[state.moving_mask, -1, :], axis=0)
