"""
Training data: a block of fluid falling onto one to four random straight segments,
simulated with the ground-truth oracle and stored as IDTRAJ1 files plus a manifest.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from invdes_cli.errors import DatasetError
from invdes_cli.physics.geometry import fluid_block, segment_points
from invdes_cli.physics.oracle import OracleConfig, rollout_oracle
from invdes_cli.physics.state_graph import DESIGN, FLUID, ParticleState
from invdes_cli.physics.trajectory_io import Trajectory, read_trajectory, write_trajectory
from invdes_cli.util import create_dest_dir_if_not_exists, hash_file, info, write_json, read_json

MANIFEST_NAME = "manifest.json"
TRAJECTORY_SUFFIX = ".idtraj"


@dataclass(frozen=True)
class DatasetConfig:
    particles_range: tuple[int, int] = (50, 150)
    num_steps: int = 50
    fluid_spacing: float = 0.02
    obstacle_spacing: float = 0.015
    connectivity_radius: float = 0.045
    max_segments: int = 4
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def to_dict(self) -> dict:
        return {
            "particles_range": list(self.particles_range),
            "num_steps": self.num_steps,
            "fluid_spacing": self.fluid_spacing,
            "obstacle_spacing": self.obstacle_spacing,
            "connectivity_radius": self.connectivity_radius,
            "max_segments": self.max_segments,
            "oracle": self.oracle.to_dict(),
        }


def sample_segments(rng: np.random.Generator, max_segments: int = 4) -> np.ndarray:
    """One to `max_segments` straight segments in the lower part of the scene."""
    count = int(rng.integers(1, max_segments + 1))
    centres = np.stack([rng.uniform(0.15, 0.85, count), rng.uniform(0.1, 0.5, count)], axis=1)
    half_lengths = rng.uniform(0.075, 0.2, count)
    angles = rng.uniform(-0.6, 0.6, count)
    offsets = half_lengths[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return np.concatenate([centres - offsets, centres + offsets], axis=1)


def sample_scene(rng: np.random.Generator, cfg: DatasetConfig) -> tuple[ParticleState, np.ndarray]:
    """Initial state (fluid first, obstacle particles after) and its segments."""
    lo, hi = cfg.particles_range
    n = int(rng.integers(lo, hi + 1))
    cols = int(np.ceil(np.sqrt(n))) + int(rng.integers(0, 3))
    rows = int(np.ceil(n / cols))
    sp = cfg.fluid_spacing
    width, height = cols * sp, rows * sp
    x0 = rng.uniform(0.05, 0.95 - width)
    y0 = rng.uniform(0.6, max(0.6, 0.95 - height))
    fluid = fluid_block((x0, y0, x0 + width, y0 + height), sp, rng)[:n]

    segments = sample_segments(rng, cfg.max_segments)
    obstacle = segment_points(segments, cfg.obstacle_spacing)
    positions = np.concatenate([fluid, obstacle])
    node_types = np.concatenate([np.full(n, FLUID), np.full(obstacle.shape[0], DESIGN)])
    return ParticleState.at_rest(positions, node_types), segments


def generate_trajectory(seed: int, index: int, cfg: DatasetConfig) -> Trajectory:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    initial, segments = sample_scene(rng, cfg)
    oracle = cfg.oracle.with_segments(segments)
    states = rollout_oracle(initial, oracle, cfg.num_steps)
    return Trajectory(
        positions=np.stack([s.positions.data for s in states]),
        node_types=initial.node_types,
        dt=oracle.dt,
        radius=cfg.connectivity_radius,
    )


def trajectory_file_name(index: int) -> str:
    return f"traj_{index:05d}{TRAJECTORY_SUFFIX}"


def generate_dataset(
        out_dir: Union[str, Path],
        seed: int,
        num_trajectories: int,
        cfg: Optional[DatasetConfig] = None,
        workers: int = 1,
        provenance: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
    """
    Simulate and write `num_trajectories` oracle rollouts plus `manifest.json`.

    :param out_dir: destination directory, created if needed
    :param seed: fixes every sampled scene
    :param num_trajectories: number of files, >= 1
    :param cfg: scene and oracle settings
    :param workers: threads; one trajectory per task, files keyed by index
    :param provenance: block stored in the manifest
    :return: the manifest dict
    """
    if num_trajectories < 1:
        raise DatasetError("number of trajectories must be at least 1")
    cfg = cfg or DatasetConfig()
    out_dir = create_dest_dir_if_not_exists(out_dir)
    info(f"Generating {num_trajectories} trajectories into {out_dir}...")

    def build(index: int) -> str:
        name = trajectory_file_name(index)
        write_trajectory(out_dir / name, generate_trajectory(seed, index, cfg))
        return name

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        files = list(pool.map(build, range(num_trajectories)))

    manifest = {
        "seed": seed,
        "count": num_trajectories,
        "files": files,
        "sha256": {name: hash_file(out_dir / name) for name in files},
        "config": cfg.to_dict(),
        "provenance": provenance or {},
    }
    write_json(out_dir / MANIFEST_NAME, manifest)
    return manifest


def load_manifest(path: Union[str, Path]) -> tuple[dict[str, Any], list[Trajectory]]:
    """Read a manifest (or the directory holding one) and every trajectory it lists."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"dataset manifest not found: {path}")
    manifest = read_json(path)
    files = manifest.get("files", [])
    if not files:
        raise DatasetError(f"manifest {path} lists no trajectories")
    root = path.parent
    trajectories = []
    for name in files:
        if not os.path.exists(root / name):
            raise DatasetError(f"trajectory {name} listed in {path} is missing")
        trajectories.append(read_trajectory(root / name))
    return manifest, trajectories
