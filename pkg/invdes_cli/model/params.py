"""Hyper-parameters, normalization statistics and weights of the learned simulator."""
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from invdes_cli.autodiff import Tape, Tensor
from invdes_cli.errors import ConfigError, ShapeError
from invdes_cli.physics.state_graph import DEFAULT_DT, HISTORY, NUM_NODE_TYPES

STD_FLOOR = 1e-8
EDGE_FEATURES = 3  # displacement (2) + distance, both over the radius
WALL_FEATURES = 4
OUTPUT_FEATURES = 2


@dataclass(frozen=True)
class ModelHyper:
    width: int = 32
    blocks: int = 3
    radius: float = 0.045
    noise_scale: float = 3e-4
    history: int = HISTORY
    learning_rate: float = 1e-4
    batch_size: int = 2
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.width < 1:
            raise ConfigError("width must be at least 1")
        if self.blocks < 0:
            raise ConfigError("blocks must be non-negative")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        if self.history < 1:
            raise ConfigError("history must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")

    @property
    def node_features(self) -> int:
        return 2 * self.history + NUM_NODE_TYPES + WALL_FEATURES

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelHyper":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model hyper-parameters: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class NormStats:
    velocity_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    velocity_std: np.ndarray = field(default_factory=lambda: np.ones(2))
    acceleration_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    acceleration_std: np.ndarray = field(default_factory=lambda: np.ones(2))

    def __post_init__(self):
        for name in ("velocity_mean", "velocity_std", "acceleration_mean", "acceleration_std"):
            value = np.asarray(getattr(self, name), dtype=np.float64).reshape(2)
            if name.endswith("_std"):
                value = np.maximum(value, STD_FLOOR)
            object.__setattr__(self, name, value)

    def to_dict(self) -> dict:
        return {
            "velocity_mean": self.velocity_mean.tolist(),
            "velocity_std": self.velocity_std.tolist(),
            "acceleration_mean": self.acceleration_mean.tolist(),
            "acceleration_std": self.acceleration_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in data.items()})


def mlp_names(hyper: ModelHyper) -> list[tuple[str, int, int, bool]]:
    """(name, input width, output width, layer-normed) for every MLP in declaration order."""
    w = hyper.width
    names = [("encoder_node", hyper.node_features, w, True), ("encoder_edge", EDGE_FEATURES, w, True)]
    for b in range(hyper.blocks):
        names.append((f"processor_{b}_edge", 3 * w, w, True))
        names.append((f"processor_{b}_node", 2 * w, w, True))
    names.append(("decoder", w, OUTPUT_FEATURES, False))
    return names


def weight_shapes(hyper: ModelHyper) -> list[tuple[str, tuple[int, ...]]]:
    shapes = []
    w = hyper.width
    for name, d_in, d_out, normed in mlp_names(hyper):
        shapes += [
            (f"{name}/w0", (d_in, w)), (f"{name}/b0", (w,)),
            (f"{name}/w1", (w, w)), (f"{name}/b1", (w,)),
            (f"{name}/w2", (w, d_out)), (f"{name}/b2", (d_out,)),
        ]
        if normed:
            shapes += [(f"{name}/ln_gain", (d_out,)), (f"{name}/ln_bias", (d_out,))]
    return shapes


@dataclass(frozen=True)
class ModelParams:
    hyper: ModelHyper
    weights: dict[str, np.ndarray]
    stats: NormStats = field(default_factory=NormStats)

    def __post_init__(self):
        expected = weight_shapes(self.hyper)
        if [k for k, _ in expected] != list(self.weights):
            raise ShapeError("weight names do not match the declared architecture")
        for name, shape in expected:
            if self.weights[name].shape != shape:
                raise ShapeError(f"weight {name} has shape {self.weights[name].shape}, expected {shape}")

    @property
    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.weights.values()))

    def tensors(self, tape: Optional[Tape] = None) -> dict[str, Tensor]:
        """Weights as constants, or as gradient leaves on `tape`."""
        if tape is None:
            return {k: Tensor(v) for k, v in self.weights.items()}
        return {k: tape.leaf(v) for k, v in self.weights.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self.weights.values()])

    def with_flat(self, vector: np.ndarray) -> "ModelParams":
        weights, offset = {}, 0
        for name, value in self.weights.items():
            weights[name] = np.asarray(vector[offset:offset + value.size]).reshape(value.shape).copy()
            offset += value.size
        if offset != vector.size:
            raise ShapeError(f"flat vector has {vector.size} entries, model has {offset}")
        return replace(self, weights=weights)

    def with_stats(self, stats: NormStats) -> "ModelParams":
        return replace(self, stats=stats)


def init_model_params(hyper: ModelHyper, seed: int = 0, stats: Optional[NormStats] = None) -> ModelParams:
    """Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero biases; unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in weight_shapes(hyper):
        leaf = name.rsplit("/", 1)[1]
        if leaf.startswith("w"):
            bound = 1.0 / np.sqrt(shape[0])
            weights[name] = rng.uniform(-bound, bound, size=shape)
        elif leaf == "ln_gain":
            weights[name] = np.ones(shape)
        else:
            weights[name] = np.zeros(shape)
    return ModelParams(hyper=hyper, weights=weights, stats=stats or NormStats())
