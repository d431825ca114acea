"""Adam with bias correction and optional global-norm gradient clipping."""
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from invdes_cli.errors import ConfigError


@dataclass(frozen=True)
class GDConfig:
    learning_rate: float = 0.005
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    clip: Optional[float] = 10.0
    steps: int = 1000
    eval_every: int = 0  # 0 disables periodic oracle evaluation

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0.0 < self.b1 < 1.0 and 0.0 < self.b2 < 1.0):
            raise ConfigError("b1 and b2 must lie in (0, 1)")
        if self.clip is not None and self.clip <= 0:
            raise ConfigError("clip must be positive or null")
        if self.steps < 0 or self.eval_every < 0:
            raise ConfigError("steps and eval_every must be non-negative")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_learning_rate(self, learning_rate: float) -> "GDConfig":
        return replace(self, learning_rate=learning_rate)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, phi: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(phi, dtype=np.float64), v=np.zeros_like(phi, dtype=np.float64), t=0)


def global_norm(grad: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(grad))))


def clip_by_global_norm(grad: np.ndarray, threshold: Optional[float]) -> np.ndarray:
    """Rescale `grad` so its L2 norm is at most `threshold`; the direction is kept."""
    if threshold is None:
        return grad
    norm = global_norm(grad)
    if norm <= threshold:
        return grad
    return grad * (threshold / norm)


def adam_step(phi: np.ndarray, grad: np.ndarray, state: AdamState, cfg: GDConfig) -> tuple[np.ndarray, AdamState]:
    """
    One Adam update that decreases the objective whose gradient is `grad`.

    Parameters:
        phi (np.ndarray): current parameters.
        grad (np.ndarray): gradient of the objective to minimize.
        state (AdamState): first/second moments and step counter.
        cfg (GDConfig): learning rate, decay rates, epsilon and clip threshold.

    Returns:
        (phi', state')
    """
    g = clip_by_global_norm(np.asarray(grad, dtype=np.float64), cfg.clip)
    t = state.t + 1
    m = cfg.b1 * state.m + (1.0 - cfg.b1) * g
    v = cfg.b2 * state.v + (1.0 - cfg.b2) * g * g
    m_hat = m / (1.0 - cfg.b1 ** t)
    v_hat = v / (1.0 - cfg.b2 ** t)
    phi = phi - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return phi, AdamState(m=m, v=v, t=t)
