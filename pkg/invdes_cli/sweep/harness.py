"""
Ablation sweeps: a grid of values times a number of seeds, one optimization run per
cell and seed, then per-value aggregation with bootstrap confidence intervals.
"""
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from invdes_cli.design.tasks import DEFAULT_STEPS, TaskSpec, generate_task
from invdes_cli.errors import ConfigError, OptimizationAborted
from invdes_cli.optim import CEMConfig, GDConfig, ModelObjective, OracleObjective, OptRunRecord, cem_optimize, \
    evaluate_design, gd_optimize
from invdes_cli.optim.objectives import Simulator
from invdes_cli.physics.oracle import OracleConfig
from invdes_cli.sweep.bootstrap import DEFAULT_RESAMPLES, bootstrap_ci
from invdes_cli.util import create_dest_dir_if_not_exists, to_snake_case, warn

ROLLOUT_LENGTH = "rollout-length"
NUM_JOINTS = "num-joints"
NUM_TOOLS = "num-tools"
CEM_POPULATION = "cem-population"
ABLATIONS = (ROLLOUT_LENGTH, NUM_JOINTS, NUM_TOOLS, CEM_POPULATION)

AGGREGATE_COLUMNS = ["ablation", "value", "runs", "failed", "mean", "ci_low", "ci_high", "mean_evals"]


@dataclass(frozen=True)
class SweepSettings:
    optimizer: str = "cem"
    simulator: str = "oracle"
    iterations: int = 20
    population: int = 20
    num_steps: int = DEFAULT_STEPS
    task: str = "contain"  # ignored by num-tools, which sweeps maze grids
    segment_length: int = 1
    record_wallclock: bool = True

    def __post_init__(self):
        if self.optimizer not in ("gd", "cem"):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        if self.simulator not in ("model", "oracle"):
            raise ConfigError(f"unknown simulator '{self.simulator}'")
        if self.optimizer == "gd" and self.simulator == "oracle":
            raise ConfigError("oracle is non-differentiable; gd needs --simulator model")
        if self.iterations < 0 or self.population < 1:
            raise ConfigError("iterations must be non-negative and population positive")


@dataclass(frozen=True)
class SweepRun:
    ablation: str
    value: int
    seed: int

    @property
    def file_name(self) -> str:
        return f"{to_snake_case(self.ablation)}_{self.value}_seed{self.seed}.csv"


@dataclass(frozen=True)
class RunResult:
    run: SweepRun
    j_oracle: float
    j_oracle_normalized: float
    evals: int
    failure: Optional[str] = None


def _check_ablation(ablation: str, settings: SweepSettings) -> None:
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation '{ablation}', choose from {', '.join(ABLATIONS)}")
    if ablation == CEM_POPULATION and settings.optimizer != "cem":
        raise ConfigError("the cem-population ablation needs --optimizer cem")


def plan_runs(ablation: str, grid: Sequence[Union[int, float]], seeds: int) -> list[SweepRun]:
    """Every (value, seed) pair, grid order first."""
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation '{ablation}', choose from {', '.join(ABLATIONS)}")
    if seeds < 1:
        raise ConfigError("seeds must be at least 1")
    values = []
    for value in grid:
        if float(value) != int(value) or int(value) < 0:
            raise ConfigError(f"{ablation} takes non-negative integers, got {value}")
        values.append(int(value))
    return [SweepRun(ablation, value, seed) for value in values for seed in range(seeds)]


def task_for_run(run: SweepRun, settings: SweepSettings) -> TaskSpec:
    if run.ablation == ROLLOUT_LENGTH:
        return generate_task(settings.task, run.seed, num_steps=run.value)
    if run.ablation == NUM_JOINTS:
        return generate_task(settings.task, run.seed, num_steps=settings.num_steps, num_joints=run.value)
    if run.ablation == NUM_TOOLS:
        return generate_task(f"maze-{run.value}", run.seed, num_steps=settings.num_steps)
    return generate_task(settings.task, run.seed, num_steps=settings.num_steps)


def _run_optimizer(run: SweepRun, task: TaskSpec, settings: SweepSettings, model: Optional[Simulator]) -> OptRunRecord:
    if settings.simulator == "model" and model is None:
        raise ConfigError("a model sweep needs --weights")
    if settings.optimizer == "gd":
        cfg = GDConfig(**{**task.gd_defaults, "steps": settings.iterations})
        objective = ModelObjective(task, model, settings.segment_length)
        return gd_optimize(task.initial_design().phi, objective.value_and_grad, cfg)
    population = run.value if run.ablation == CEM_POPULATION else settings.population
    cfg = CEMConfig(**{
        **task.cem_defaults,
        "population": population,
        "steps": settings.iterations,
        "simulator": settings.simulator,
        "initial_mu": tuple(task.initial_design().phi),
    })
    objective = ModelObjective(task, model) if settings.simulator == "model" else OracleObjective(task)
    return cem_optimize(objective, task.arity, cfg, seed=run.seed)


def run_one(
        run: SweepRun,
        settings: SweepSettings,
        out_dir: Union[str, Path],
        model: Optional[Simulator] = None,
) -> RunResult:
    """Optimize, write the run's record CSV and score the final design with the oracle."""
    task = task_for_run(run, settings)
    try:
        record = _run_optimizer(run, task, settings, model)
    except OptimizationAborted as e:
        warn(f"{run.ablation}={run.value} seed {run.seed}: {e}")
        if e.record is not None:
            e.record.write_csv(Path(out_dir) / run.file_name, settings.record_wallclock)
        evals = e.record.total_evals if e.record is not None else 0
        return RunResult(run, math.nan, math.nan, evals, failure=str(e))
    record.write_csv(Path(out_dir) / run.file_name, settings.record_wallclock)
    evaluation = evaluate_design(record.final_phi, task, oracle=OracleConfig())
    return RunResult(run, evaluation.oracle.raw, evaluation.oracle.normalized, record.total_evals)


def run_sweep(
        ablation: str,
        grid: Sequence[Union[int, float]],
        seeds: int,
        settings: SweepSettings,
        out_dir: Union[str, Path],
        model: Optional[Simulator] = None,
        workers: int = 1,
) -> list[RunResult]:
    """
    Fan the planned runs out over `workers` threads.

    Each run writes its own file; results come back in plan order whatever the
    completion order.
    """
    _check_ablation(ablation, settings)
    runs = plan_runs(ablation, grid, seeds)
    create_dest_dir_if_not_exists(out_dir)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda r: run_one(r, settings, out_dir, model), runs))
    return [run_one(r, settings, out_dir, model) for r in runs]


def aggregate_results(
        results: Sequence[RunResult],
        resamples: int = DEFAULT_RESAMPLES,
        seed: int = 0,
) -> list[dict]:
    """One row per grid value: mean normalized J_S and its bootstrap 95% interval over seeds."""
    by_value: dict[tuple[str, int], list[RunResult]] = {}
    for result in results:
        by_value.setdefault((result.run.ablation, result.run.value), []).append(result)
    rows = []
    for (ablation, value), cell in by_value.items():
        finite = [r.j_oracle_normalized for r in cell if np.isfinite(r.j_oracle_normalized)]
        if finite:
            mean, low, high = bootstrap_ci(finite, resamples=resamples, seed=seed)
        else:
            mean = low = high = math.nan
        rows.append({
            "ablation": ablation,
            "value": value,
            "runs": len(cell),
            "failed": len(cell) - len(finite),
            "mean": mean,
            "ci_low": low,
            "ci_high": high,
            "mean_evals": float(np.mean([r.evals for r in cell])),
        })
    return rows


def write_aggregate_csv(path: Union[str, Path], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            writer.writerow([
                repr(float(row[c])) if isinstance(row[c], float) else row[c] for c in AGGREGATE_COLUMNS
            ])
