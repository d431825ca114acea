"""
Rewards over final rollout states. State terms and the heightfield smoothness term
are kept apart so the design objective can send each one to the right tape.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from invdes_cli.autodiff import Tensor, ops
from invdes_cli.errors import ConfigError
from invdes_cli.physics.state_graph import ParticleState

GAUSSIAN_GOAL = "gaussian-goal"
DIRECTION = "direction"
POOLS = "pools"
REWARD_KINDS = (GAUSSIAN_GOAL, DIRECTION, POOLS)

NO_SURVIVORS = "no surviving fluid particles"
NO_REMOVED = "no particles reached the floor"


@dataclass(frozen=True)
class RewardSpec:
    kind: str
    sigma: float = 0.1
    mu: tuple[float, float] = (0.5, 0.2)
    direction: tuple[float, float] = (1.0, 0.0)
    center: tuple[float, float] = (0.5, 0.35)
    pools: tuple[tuple[float, float], ...] = ()
    gamma_r: float = 0.0
    sampling_box: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ConfigError(f"unknown reward kind '{self.kind}'")
        if self.sigma <= 0:
            raise ConfigError("reward sigma must be positive")
        if self.kind == DIRECTION and abs(np.hypot(*self.direction) - 1.0) > 1e-9:
            raise ConfigError("direction must be a unit vector")
        if self.kind == POOLS and not self.pools:
            raise ConfigError("pools reward needs at least one pool")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "mu": list(self.mu),
            "direction": list(self.direction),
            "center": list(self.center),
            "pools": [list(p) for p in self.pools],
            "gamma_r": self.gamma_r,
            "sampling_box": list(self.sampling_box) if self.sampling_box is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RewardSpec":
        data = dict(data)
        for key in ("mu", "direction", "center"):
            if key in data:
                data[key] = tuple(data[key])
        data["pools"] = tuple(tuple(p) for p in data.get("pools", ()))
        if data.get("sampling_box") is not None:
            data["sampling_box"] = tuple(data["sampling_box"])
        return cls(**data)


@dataclass(frozen=True)
class RewardTerms:
    main: float
    spread: float
    regularizer: float
    warnings: tuple[str, ...] = ()

    @property
    def raw(self) -> float:
        return self.main - self.spread - self.regularizer


@dataclass(frozen=True)
class RewardReport:
    raw: float
    normalized: float
    terms: RewardTerms = field(default_factory=lambda: RewardTerms(0.0, 0.0, 0.0))

    def to_row(self, prefix: str) -> dict:
        return {
            f"{prefix}_raw": self.raw,
            f"{prefix}_normalized": self.normalized,
            f"{prefix}_main": self.terms.main,
            f"{prefix}_spread": self.terms.spread,
            f"{prefix}_regularizer": self.terms.regularizer,
        }


def normal_density(points: Tensor, centres: np.ndarray, sigma: float) -> Tensor:
    """Product of two 1D normals with per-axis std sigma; peak value 1 / (2 pi sigma^2)."""
    delta = ops.sub(points, np.broadcast_to(centres, points.shape))
    sq = ops.sum_(ops.square(delta), axis=1)
    return ops.mul(ops.exp(ops.mul(sq, -0.5 / (sigma * sigma))), 1.0 / (2.0 * np.pi * sigma * sigma))


def gaussian_goal_reward(positions: Tensor, mu, sigma: float) -> tuple[Tensor, tuple[str, ...]]:
    """Mean 2D normal density of `positions` around `mu`; 0 with a warning when there are none."""
    if positions.shape[0] == 0:
        return Tensor(0.0), (NO_SURVIVORS,)
    return ops.mean(normal_density(positions, np.asarray(mu, dtype=np.float64), sigma)), ()


def smoothness_penalty(field_params: Optional[Tensor], gamma_r: float) -> Tensor:
    """gamma_R times the mean squared forward difference of the field parameters."""
    if field_params is None or field_params.shape[0] < 2 or gamma_r == 0.0:
        return Tensor(0.0)
    diffs = ops.sub(field_params[1:], field_params[:-1])
    return ops.mul(ops.mean(ops.square(diffs)), gamma_r)


def direction_terms(positions: Tensor, d, c) -> tuple[Tensor, Tensor]:
    """(mean progress along d, spread across d) of positions relative to c."""
    d = np.asarray(d, dtype=np.float64)
    d_perp = np.array([-d[1], d[0]])
    if positions.shape[0] == 0:
        return Tensor(0.0), Tensor(0.0)
    rel = ops.sub(positions, np.broadcast_to(np.asarray(c, dtype=np.float64), positions.shape))
    along = ops.mean(ops.matmul(rel, d))
    if positions.shape[0] < 2:
        return along, Tensor(0.0)
    return along, ops.stddev(ops.matmul(rel, d_perp))


def direction_reward(
        positions: Tensor,
        d,
        c,
        field_params: Optional[Tensor] = None,
        gamma_r: float = 300.0,
) -> Tensor:
    along, spread = direction_terms(positions, d, c)
    return ops.sub(ops.sub(along, spread), smoothness_penalty(field_params, gamma_r))


def nearest_pool(points: np.ndarray, pools: np.ndarray) -> np.ndarray:
    """Index of the closest pool per point; ties go to the lowest index."""
    dist = np.sum(np.square(points[:, None, :] - pools[None, :, :]), axis=2)
    return np.argmin(dist, axis=1)


def pools_main(removed_positions: Tensor, pools, sigma: float) -> tuple[Tensor, tuple[str, ...]]:
    if removed_positions.shape[0] == 0:
        return Tensor(0.0), (NO_REMOVED,)
    pools = np.asarray(pools, dtype=np.float64).reshape(-1, 2)
    assigned = pools[nearest_pool(removed_positions.data, pools)]
    return ops.mean(normal_density(removed_positions, assigned, sigma)), ()


def pools_reward(
        removed_positions: Tensor,
        pools,
        sigma: float = 0.4,
        field_params: Optional[Tensor] = None,
        gamma_r: float = 300.0,
) -> tuple[Tensor, tuple[str, ...]]:
    main, flags = pools_main(removed_positions, pools, sigma)
    return ops.sub(main, smoothness_penalty(field_params, gamma_r)), flags


def normalized(raw: float, initial_raw: float) -> float:
    """Reward relative to the unchanged initial design."""
    return raw - initial_raw


def surviving_fluid(state: ParticleState) -> Tensor:
    return ops.gather(state.positions, np.nonzero(state.moving_mask)[0])


def state_reward(spec: RewardSpec, state: ParticleState) -> tuple[Tensor, Tensor, tuple[str, ...]]:
    """
    The parts of the reward that depend on the final state.

    Returns:
        (main term, spread term, warning flags); the reward contribution is main - spread.
    """
    if spec.kind == GAUSSIAN_GOAL:
        main, flags = gaussian_goal_reward(surviving_fluid(state), spec.mu, spec.sigma)
        return main, Tensor(0.0), flags
    if spec.kind == DIRECTION:
        positions = surviving_fluid(state)
        along, spread = direction_terms(positions, spec.direction, spec.center)
        return along, spread, () if positions.shape[0] else (NO_SURVIVORS,)
    main, flags = pools_main(state.removed_positions, spec.pools, spec.sigma)
    return main, Tensor(0.0), flags


def design_penalty(spec: RewardSpec, field_params: Optional[Tensor]) -> Tensor:
    if spec.kind == GAUSSIAN_GOAL:
        return Tensor(0.0)
    return smoothness_penalty(field_params, spec.gamma_r)


def evaluate_reward(spec: RewardSpec, state: ParticleState, field_params: Optional[Tensor] = None) -> RewardTerms:
    main, spread, flags = state_reward(spec, state)
    penalty = design_penalty(spec, field_params)
    return RewardTerms(main=main.item(), spread=spread.item(), regularizer=penalty.item(), warnings=flags)
