"""
Procedural tasks: a scene template, a design kind with its static geometry, a
reward spec and optimizer defaults, all fixed by (name, seed).
"""
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from invdes_cli.design.design_space import (
    ABSOLUTE_JOINTS, GAMMA_H, HEIGHTFIELD, HEIGHTFIELD_CONTROL_POINTS, RELATIVE_JOINTS, ROTOR_GRID, TOOL_SPACING,
    DesignParams, SceneTemplate, design_arity,
)
from invdes_cli.design.rewards import DIRECTION, GAUSSIAN_GOAL, POOLS, RewardSpec
from invdes_cli.errors import ConfigError

DEFAULT_STEPS = 50
MAX_STEPS = 300
NUM_DIRECTIONS = 8
GAMMA_R = 300.0
POOL_SIGMA = 0.4
GOAL_SIGMA = 0.1

TOOL_ANCHOR = (0.15, 0.35)
TOOL_LENGTH = 0.8
TOOL_JOINTS = 16
TOOL_FLUID_BOX = (0.2, 0.5, 0.3, 0.6)
CONTAIN_REWARD_BOX = (0.4, 0.1, 0.6, 0.3)
RAMP_REWARD_BOX = (0.8, 0.0, 1.0, 0.2)

MAZE_FLUID_BOX = (0.2, 0.75, 0.8, 0.8)
MAZE_REWARD_BOX = (0.1, 0.1, 0.9, 0.2)
MAZE_DOMAIN_BOXES = {
    3: (0.14, 0.3, 0.65, 0.6),
    4: (0.14, 0.3, 0.71, 0.6),
    5: (0.14, 0.3, 0.75, 0.6),
    6: (0.14, 0.25, 0.77, 0.65),
}
MAZE_TOOL_LENGTHS = {3: 0.72, 4: 0.64, 5: 0.65, 6: 0.63}

LANDSCAPE_FLUID_BOX = (0.44, 0.7, 0.56, 0.95)
LANDSCAPE_X_RANGE = (0.1, 0.9)
LANDSCAPE_BASE = 0.35
LANDSCAPE_NODES = 16
LANDSCAPE_CENTER = (0.5, 0.35)

# pool centres on the 3D floor, (x, z) in scene units
POOL_LAYOUTS_3D = {
    "two": ((1.49, -0.35), (1.49, 1.35)),
    "three-a": ((1.6, -0.45), (1.85, 0.5), (1.6, 1.45)),
    "three-b": ((0.5, -0.5), (1.7, 0.5), (0.55, 1.5)),
}

TASK_NAMES = ("contain", "ramp", "maze-3", "maze-4", "maze-5", "maze-6", "landscape-direction", "landscape-pools")


def pool_centres(layout: str, floor_height: float = 0.0) -> tuple[tuple[float, float], ...]:
    """Pools projected onto the 2D floor line: the z coordinate in [-0.5, 1.5] maps to x in [0, 1]."""
    if layout not in POOL_LAYOUTS_3D:
        raise ConfigError(f"unknown pool layout '{layout}', choose from {sorted(POOL_LAYOUTS_3D)}")
    return tuple(((z + 0.5) / 2.0, floor_height) for _, z in POOL_LAYOUTS_3D[layout])


def direction_vector(index: int) -> tuple[float, float]:
    """One of 8 directions spread evenly over [0, 180] degrees, both ends included."""
    if not 0 <= index < NUM_DIRECTIONS:
        raise ConfigError(f"direction index must lie in [0, {NUM_DIRECTIONS - 1}]")
    angle = np.pi * index / (NUM_DIRECTIONS - 1)
    return float(np.cos(angle)), float(np.sin(angle))


@dataclass(frozen=True)
class TaskSpec:
    name: str
    template: SceneTemplate
    kind: str
    alpha: dict[str, Any]
    reward: RewardSpec
    seed: int
    gd_defaults: dict[str, Any] = field(default_factory=dict)
    cem_defaults: dict[str, Any] = field(default_factory=dict)

    @property
    def arity(self) -> int:
        return design_arity(self.kind, self.alpha)

    @property
    def num_steps(self) -> int:
        return self.template.num_steps

    def initial_design(self) -> DesignParams:
        phi = np.zeros(self.arity)
        if self.alpha.get("global_offset"):
            phi[-2:] = self.alpha.get("initial_offset", (0.0, 0.0))
        return DesignParams(self.kind, phi, self.alpha)

    def check_design(self, design: DesignParams) -> None:
        if design.kind != self.kind or design.phi.size != self.arity:
            raise ConfigError(
                f"design of kind {design.kind} with {design.phi.size} parameters does not fit task "
                f"{self.name} ({self.kind}, {self.arity} parameters)"
            )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "template": self.template.to_dict(),
            "kind": self.kind,
            "alpha": self.alpha,
            "reward": self.reward.to_dict(),
            "seed": self.seed,
            "gd_defaults": self.gd_defaults,
            "cem_defaults": self.cem_defaults,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TaskSpec":
        return cls(
            name=data["name"],
            template=SceneTemplate.from_dict(data["template"]),
            kind=data["kind"],
            alpha=dict(data["alpha"]),
            reward=RewardSpec.from_dict(data["reward"]),
            seed=int(data["seed"]),
            gd_defaults=dict(data.get("gd_defaults", {})),
            cem_defaults=dict(data.get("cem_defaults", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TaskSpec":
        return cls.from_dict(json.loads(text))


def _sample_in_box(rng: np.random.Generator, box) -> tuple[float, float]:
    x0, y0, x1, y1 = box
    return float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))


def _tool_task(name, seed, rng, num_steps, reward_box, num_joints, parameterization, global_offset, initial_offset):
    kind = parameterization or RELATIVE_JOINTS
    if kind not in (RELATIVE_JOINTS, ABSOLUTE_JOINTS):
        raise ConfigError(f"task {name} uses joint angles, not {kind}")
    alpha = {
        "anchor": list(TOOL_ANCHOR),
        "tool_length": TOOL_LENGTH,
        "num_joints": num_joints,
        "spacing": TOOL_SPACING,
    }
    if global_offset:
        alpha["global_offset"] = True
        alpha["initial_offset"] = list(initial_offset)
    reward = RewardSpec(
        kind=GAUSSIAN_GOAL, sigma=GOAL_SIGMA, mu=_sample_in_box(rng, reward_box), sampling_box=reward_box,
    )
    return TaskSpec(
        name=name,
        template=SceneTemplate(TOOL_FLUID_BOX, num_steps=num_steps, jitter_seed=seed),
        kind=kind,
        alpha=alpha,
        reward=reward,
        seed=seed,
        gd_defaults={"learning_rate": 0.005, "clip": 10.0},
        cem_defaults={"population": 20, "elite_fraction": 0.1, "initial_sigma": 0.5, "smoothing": 0.1},
    )


def _maze_task(name, seed, rng, num_steps, grid):
    if grid not in MAZE_DOMAIN_BOXES:
        raise ConfigError(f"maze grids run from 3 to 6, got {grid}")
    alpha = {
        "grid": grid,
        "box": list(MAZE_DOMAIN_BOXES[grid]),
        "rotor_length": MAZE_TOOL_LENGTHS[grid] / grid,
        "spacing": TOOL_SPACING,
    }
    reward = RewardSpec(
        kind=GAUSSIAN_GOAL, sigma=GOAL_SIGMA, mu=_sample_in_box(rng, MAZE_REWARD_BOX), sampling_box=MAZE_REWARD_BOX,
    )
    return TaskSpec(
        name=name,
        template=SceneTemplate(MAZE_FLUID_BOX, num_steps=num_steps, jitter_seed=seed),
        kind=ROTOR_GRID,
        alpha=alpha,
        reward=reward,
        seed=seed,
        gd_defaults={"learning_rate": 0.01, "clip": 10.0},
        cem_defaults={"population": 20, "elite_fraction": 0.1, "initial_sigma": 1.5, "smoothing": 0.1},
    )


def _landscape_task(name, seed, rng, num_steps, control_points, pools_layout, direction_index):
    alpha = {
        "num_nodes": LANDSCAPE_NODES,
        "x_range": list(LANDSCAPE_X_RANGE),
        "base_height": LANDSCAPE_BASE,
        "gamma_h": GAMMA_H,
        "spacing": TOOL_SPACING,
    }
    kind = HEIGHTFIELD
    if control_points:
        kind = HEIGHTFIELD_CONTROL_POINTS
        alpha["control_points"] = control_points
    if name == "landscape-direction":
        index = int(rng.integers(NUM_DIRECTIONS)) if direction_index is None else direction_index
        alpha["direction_index"] = index
        reward = RewardSpec(kind=DIRECTION, direction=direction_vector(index), center=LANDSCAPE_CENTER, gamma_r=GAMMA_R)
    else:
        reward = RewardSpec(kind=POOLS, sigma=POOL_SIGMA, pools=pool_centres(pools_layout), gamma_r=GAMMA_R)
        alpha["pools_layout"] = pools_layout
    return TaskSpec(
        name=name,
        template=SceneTemplate(LANDSCAPE_FLUID_BOX, num_steps=num_steps, jitter_seed=seed, remove_at_floor=True),
        kind=kind,
        alpha=alpha,
        reward=reward,
        seed=seed,
        gd_defaults={"learning_rate": 0.01, "clip": None},
        cem_defaults={"population": 40, "elite_fraction": 0.1, "initial_sigma": 0.1, "smoothing": 0.1},
    )


def generate_task(
        name: str,
        seed: int,
        num_steps: int = DEFAULT_STEPS,
        num_joints: int = TOOL_JOINTS,
        parameterization: Optional[str] = None,
        global_offset: bool = False,
        initial_offset: tuple[float, float] = (0.0, 0.0),
        control_points: Optional[int] = None,
        pools_layout: str = "two",
        direction_index: Optional[int] = None,
) -> TaskSpec:
    """
    Build the named task deterministically from `seed`.

    :param name: contain, ramp, maze-3..maze-6, landscape-direction or landscape-pools
    :param seed: drives reward sampling and the fluid jitter
    :param num_steps: rollout length K, up to 300
    :param num_joints: tool joints for contain / ramp
    :param parameterization: relative-joints (default) or absolute-joints for contain / ramp
    :param global_offset: append a trainable (x, y) tool offset to phi
    :param initial_offset: starting value of that offset
    :param control_points: landscape only; optimize c control values instead of every field node
    :param pools_layout: two, three-a or three-b
    :param direction_index: 0..7, sampled from the seed when omitted
    """
    if not 0 <= num_steps <= MAX_STEPS:
        raise ConfigError(f"rollout length must lie in [0, {MAX_STEPS}]")
    rng = np.random.default_rng(seed)
    if name == "contain":
        return _tool_task(name, seed, rng, num_steps, CONTAIN_REWARD_BOX, num_joints, parameterization,
                          global_offset, initial_offset)
    if name == "ramp":
        return _tool_task(name, seed, rng, num_steps, RAMP_REWARD_BOX, num_joints, parameterization,
                          global_offset, initial_offset)
    if name.startswith("maze-"):
        try:
            grid = int(name.split("-", 1)[1])
        except ValueError:
            raise ConfigError(f"unknown task '{name}'")
        return _maze_task(name, seed, rng, num_steps, grid)
    if name in ("landscape-direction", "landscape-pools"):
        return _landscape_task(name, seed, rng, num_steps, control_points, pools_layout, direction_index)
    raise ConfigError(f"unknown task '{name}', choose from {', '.join(TASK_NAMES)}")
