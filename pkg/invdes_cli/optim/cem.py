"""
Cross-entropy method over design parameters.

Candidates are drawn from Normal(mu, diag sigma^2) with one random stream per
(seed, iteration, candidate) so the population does not depend on evaluation order.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Callable, Optional, Union

import numpy as np

from invdes_cli.errors import ConfigError, InvDesError, OptimizationAborted
from invdes_cli.optim.records import IterationRow, OptRunRecord

SIGMA_FLOOR = 1e-6
SIMULATORS = ("model", "oracle")
ELITE_MEAN = "elite-mean"
PREVIOUS_MEAN = "previous-mean"
SIGMA_REFERENCES = (ELITE_MEAN, PREVIOUS_MEAN)


@dataclass(frozen=True)
class CEMConfig:
    population: int = 20
    elite_fraction: float = 0.1
    initial_sigma: Union[float, tuple[float, ...]] = 0.5
    initial_mu: Optional[tuple[float, ...]] = None  # zeros when omitted
    smoothing: float = 0.1
    steps: int = 1000
    simulator: str = "model"
    eval_every: int = 0
    sigma_reference: str = ELITE_MEAN  # centre the elite spread is measured about

    def __post_init__(self):
        if self.population < 1:
            raise ConfigError("population must be at least 1")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ConfigError("elite_fraction must lie in (0, 1]")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError("smoothing must lie in [0, 1)")
        if np.any(np.asarray(self.initial_sigma) <= 0):
            raise ConfigError("initial sigma entries must be positive")
        if self.simulator not in SIMULATORS:
            raise ConfigError(f"simulator must be one of {SIMULATORS}")
        if self.steps < 0 or self.eval_every < 0:
            raise ConfigError("steps and eval_every must be non-negative")
        if self.sigma_reference not in SIGMA_REFERENCES:
            raise ConfigError(f"sigma_reference must be one of {SIGMA_REFERENCES}")

    @property
    def elite_count(self) -> int:
        return max(1, int(np.floor(self.elite_fraction * self.population)))

    def initial_distribution(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        mu = np.zeros(dim) if self.initial_mu is None else np.asarray(self.initial_mu, dtype=np.float64)
        sigma = np.broadcast_to(np.asarray(self.initial_sigma, dtype=np.float64), (dim,)).copy()
        if mu.shape != (dim,):
            raise ConfigError(f"initial_mu has {mu.size} entries, design has {dim}")
        return mu, sigma

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def candidate_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration, index])


def sample_population(mu: np.ndarray, sigma: np.ndarray, population: int, seed: int, iteration: int) -> np.ndarray:
    return np.stack([
        mu + sigma * candidate_rng(seed, iteration, k).standard_normal(mu.size) for k in range(population)
    ])


def select_elites(values: np.ndarray, count: int) -> np.ndarray:
    """Indices of the `count` highest values, best first; ties go to the lower index."""
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((np.arange(values.size), -values))
    return order[:count]


def cem_step(
        mu: np.ndarray,
        sigma: np.ndarray,
        values: np.ndarray,
        samples: np.ndarray,
        cfg: CEMConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Refit to the elites and blend with the previous distribution.

    mu' = (1 - beta) mu_elite + beta mu, sigma' = (1 - beta) sigma_elite + beta sigma, sigma' >= 1e-6.
    sigma_elite is the per-dimension elite std, or with `previous-mean` the elites' RMS
    deviation from mu, which keeps sigma open while the elites are still moving.
    """
    elites = samples[select_elites(values, cfg.elite_count)]
    beta = cfg.smoothing
    mu_new = (1.0 - beta) * elites.mean(axis=0) + beta * mu
    if cfg.sigma_reference == PREVIOUS_MEAN:
        sigma_elite = np.sqrt(np.mean(np.square(elites - mu), axis=0))
    else:
        sigma_elite = elites.std(axis=0)
    sigma_new = (1.0 - beta) * sigma_elite + beta * sigma
    return mu_new, np.maximum(sigma_new, SIGMA_FLOOR)


def cem_optimize(
        objective: Callable[[np.ndarray], float],
        dim: int,
        cfg: CEMConfig,
        seed: int,
        workers: int = 1,
        oracle_eval: Optional[Callable[[np.ndarray], float]] = None,
) -> OptRunRecord:
    """
    Run `cfg.steps` CEM iterations maximizing `objective`.

    Parameters:
        objective: phi -> reward under the chosen simulator; must be thread-safe when workers > 1.
        dim (int): number of design parameters.
        cfg (CEMConfig): population, elites, smoothing and starting distribution.
        seed (int): root of the per-candidate random streams.
        workers (int): threads evaluating the population.
        oracle_eval: optional phi -> J_S, called on the iteration's best elite every `cfg.eval_every` iterations.

    Returns:
        OptRunRecord whose rows hold the best elite of each iteration; final_phi is the last mean.
    """
    mu, sigma = cfg.initial_distribution(dim)
    record = OptRunRecord(optimizer="cem", simulator=cfg.simulator, final_phi=mu.copy())
    best = -np.inf
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for it in range(cfg.steps):
            start = time.perf_counter()
            samples = sample_population(mu, sigma, cfg.population, seed, it)
            try:
                if pool is not None:
                    values = np.array(list(pool.map(objective, samples)))
                else:
                    values = np.array([objective(s) for s in samples])
            except InvDesError as e:
                raise OptimizationAborted(f"CEM iteration {it}: {e}", record) from e
            if not np.all(np.isfinite(values)):
                raise OptimizationAborted(f"CEM iteration {it}: non-finite objective value", record)

            top = int(select_elites(values, 1)[0])
            best = max(best, float(values[top]))
            mu, sigma = cem_step(mu, sigma, values, samples, cfg)
            j_oracle = None
            if oracle_eval is not None and cfg.eval_every and it % cfg.eval_every == 0:
                j_oracle = oracle_eval(samples[top])
            on_model = cfg.simulator == "model"
            record.append(IterationRow(
                iteration=it,
                phi=samples[top].copy(),
                j_model=float(values[top]) if on_model else None,
                j_oracle=j_oracle if on_model else float(values[top]),
                grad_norm_or_sigma=float(np.linalg.norm(sigma)),
                evals=cfg.population,
                wallclock_ms=(time.perf_counter() - start) * 1e3,
                best_j=best,
            ))
            record.final_phi = mu.copy()
    finally:
        if pool is not None:
            pool.shutdown()
    return record
