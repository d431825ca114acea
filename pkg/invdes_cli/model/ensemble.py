"""Gradient ensembling over models trained on disjoint dataset splits."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

from invdes_cli.errors import ConfigError, DatasetError
from invdes_cli.model.params import ModelParams

T = TypeVar("T")
MemberValueAndGrad = Callable[[ModelParams, np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class Ensemble:
    members: tuple[ModelParams, ...]

    def __post_init__(self):
        if not self.members:
            raise ConfigError("an ensemble needs at least one member")
        hyper = self.members[0].hyper
        if any(m.hyper != hyper for m in self.members[1:]):
            raise ConfigError("ensemble members must share hyper-parameters")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def hyper(self):
        return self.members[0].hyper


def split_trajectories(items: Sequence[T], splits: int) -> list[list[T]]:
    """`splits` disjoint contiguous blocks covering `items`, sizes differing by at most one."""
    if splits < 1:
        raise ConfigError("splits must be at least 1")
    if splits > len(items):
        raise DatasetError(f"cannot split {len(items)} trajectories into {splits} parts")
    bounds = [len(items) * k // splits for k in range(splits + 1)]
    return [list(items[lo:hi]) for lo, hi in zip(bounds, bounds[1:])]


def ensemble_value_and_grad(
        member_value_and_grad: MemberValueAndGrad,
        ensemble: Ensemble,
        phi: np.ndarray,
        workers: int = 1,
) -> tuple[float, np.ndarray]:
    """
    Mean value and mean gradient of a design objective over ensemble members.

    Each member runs on its own tape; results are combined in member order.
    """
    if workers > 1 and len(ensemble) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda m: member_value_and_grad(m, phi), ensemble.members))
    else:
        results = [member_value_and_grad(m, phi) for m in ensemble.members]
    if len(results) == 1:
        return results[0]
    value = sum(r[0] for r in results) / len(results)
    grad = np.sum(np.stack([r[1] for r in results]), axis=0) / len(results)
    return float(value), grad
