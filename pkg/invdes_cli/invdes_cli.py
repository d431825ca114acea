#!/usr/bin/env python3

import csv
import functools
import os
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Optional

import click
import numpy as np

from invdes_cli.config import CONFIG_FILE_NAMES, find_config_file, load_config, merge_overrides, parse_overrides, \
    resolve_threads
from invdes_cli.design import DESIGN_KINDS, TASK_NAMES, DesignParams, TaskSpec, generate_task
from invdes_cli.errors import ConfigError, DatasetError, InvDesError, NonFiniteError, OptimizationAborted, \
    RolloutDivergenceError, TrajectoryFormatError, WeightsFormatError
from invdes_cli.model import Ensemble, ModelHyper, load_weights, save_weights, train as train_model, train_ensemble, \
    write_loss_curve, one_step_mse, zero_acceleration_mse
from invdes_cli.optim import CEMConfig, GDConfig, ModelObjective, OracleObjective, cem_optimize, evaluate_design, \
    gd_optimize
from invdes_cli.physics import DatasetConfig, generate_dataset, load_manifest
from invdes_cli.sweep import ABLATIONS, SweepSettings, aggregate_results, run_sweep, write_aggregate_csv
from invdes_cli.templates import ConfigTemplate
from invdes_cli.util import create_dest_dir_if_not_exists, error, hash_file, info, parse_grid, read_json, success, \
    warn, write_json
from invdes_cli.util.provenance import build_provenance


class NumericFailure(click.ClickException):
    """NaN, Inf or a diverged rollout; exits with status 3."""
    exit_code = 3

    def show(self, file=None):
        # already reported in red
        pass


def reported(action: str):
    """Map library errors onto exit codes: 2 for usage and config problems, 3 for numeric failures."""

    def decorator(command):
        @functools.wraps(command)
        def wrapper(*args, **kwargs):
            try:
                return command(*args, **kwargs)
            except FileNotFoundError as e:
                error(f"File not found: {e}")
                raise click.UsageError(str(e))
            except (ConfigError, DatasetError, TrajectoryFormatError, WeightsFormatError) as e:
                error(f"{action}: {e}")
                raise click.UsageError(str(e))
            except OptimizationAborted as e:
                error(f"{action} aborted: {e}")
                raise NumericFailure(str(e))
            except (NonFiniteError, RolloutDivergenceError) as e:
                error(f"{action} failed: {e}")
                raise NumericFailure(str(e))
            except InvDesError as e:
                error(f"{action} failed: {e}")
                raise NumericFailure(str(e))
            except (click.ClickException, click.exceptions.Exit):
                raise
            except Exception as e:
                error(f"An unexpected error occurred: {e}")
                print(traceback.format_exc())
                raise

        return wrapper

    return decorator


def _load_simulator(weights: Optional[str]):
    """One weights file gives a single model, a comma-separated list an ensemble."""
    if not weights:
        return None
    paths = [p.strip() for p in weights.split(",") if p.strip()]
    members = tuple(load_weights(p) for p in paths)
    if len(members) == 1:
        return members[0]
    return Ensemble(members)


def _member_paths(out: Path, splits: int) -> list[Path]:
    if splits == 1:
        return [out]
    return [out.with_name(f"{out.stem}_{k}{out.suffix}") for k in range(splits)]


@click.group()
def cli():
    """Inverse design with learned particle simulators."""
    pass


@click.command()
@click.option('--name', default="InvDesProject", help='Your project name.')
def init(name: str):
    """Write an invdesconfig.yml with the default settings."""
    existing = find_config_file()
    if existing is not None:
        warn(f"This project already contains {existing.name}.")
        return
    template = ConfigTemplate(
        project_name=name,
        threads=os.cpu_count() or 1,
        model=ModelHyper().to_dict(),
        gd=GDConfig().to_dict(),
        cem=CEMConfig().to_dict(),
    )
    with open(CONFIG_FILE_NAMES[0], 'w', encoding='utf-8') as f:
        f.write(template.render())
    success(f"{CONFIG_FILE_NAMES[0]} created successfully.")


@click.command(name="gen-data")
@click.option('--seed', default=0, type=int, help='Seed fixing every sampled scene.')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Destination directory.')
@click.option('--trajectories', default=200, type=int, help='Number of trajectories.')
@click.option('--steps', default=50, type=int, help='Oracle steps per trajectory.')
@click.option('--threads', default=None, type=int, help='Worker threads (default INVDES_THREADS or all cores).')
@reported("gen-data")
def gen_data(seed: int, out: str, trajectories: int, steps: int, threads: Optional[int]):
    """Simulate a training dataset with the oracle solver."""
    config = load_config(announce_missing=False)
    workers = resolve_threads(threads, config)
    flags = {"seed": seed, "out": out, "trajectories": trajectories, "steps": steps}
    if steps < 1:
        raise ConfigError("steps must be at least 1")
    generate_dataset(
        out, seed, trajectories, DatasetConfig(num_steps=steps), workers=workers,
        provenance=build_provenance("gen-data", flags, seed),
    )
    manifest_hash = hash_file(Path(out) / "manifest.json")
    success(f"Dataset written to {out} (manifest sha256 {manifest_hash}).")


@click.command()
@click.option('--data', required=True, type=click.Path(), help='Dataset manifest or its directory.')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Weights file to write.')
@click.option('--steps', default=20000, type=int, help='Training steps.')
@click.option('--seed', default=0, type=int, help='Seed for initialization, batches and noise.')
@click.option('--width', default=None, type=int, help='Latent width W.')
@click.option('--blocks', default=None, type=int, help='Message-passing blocks P.')
@click.option('--splits', default=1, type=int, help='Train an ensemble on this many disjoint splits.')
@click.option('--holdout', default=0, type=int, help='Trailing trajectories kept out for the one-step check.')
@click.option('--log-every', default=0, type=int, help='Print the loss every n steps.')
@reported("train")
def train(data: str, out: str, steps: int, seed: int, width: Optional[int], blocks: Optional[int], splits: int,
          holdout: int, log_every: int):
    """Train the learned simulator (or an ensemble) on next-step prediction."""
    config = load_config(announce_missing=False)
    flags = {"data": data, "out": out, "steps": steps, "seed": seed, "width": width, "blocks": blocks,
             "splits": splits, "holdout": holdout}
    overrides = {k: v for k, v in (("width", width), ("blocks", blocks)) if v is not None}
    hyper = merge_overrides(ModelHyper, config.model, overrides)
    _, trajectories = load_manifest(data)
    if not 0 <= holdout < len(trajectories):
        raise ConfigError(f"holdout must leave training data, got {holdout} of {len(trajectories)}")
    held_out = trajectories[len(trajectories) - holdout:] if holdout else []
    training_set = trajectories[:len(trajectories) - holdout]

    info(f"Training on {len(training_set)} trajectories for {steps} steps...")
    if splits == 1:
        members = [train_model(training_set, hyper, seed, steps, log_every)]
    else:
        members = train_ensemble(training_set, hyper, seed, steps, splits, log_every)

    out_path = Path(out)
    if out_path.parent != Path(""):
        create_dest_dir_if_not_exists(out_path.parent)
    provenance = build_provenance("train", flags, seed)
    summary = {"members": [], "provenance": provenance}
    for path, (params, losses) in zip(_member_paths(out_path, splits), members):
        save_weights(path, params, provenance)
        loss_path = path.with_suffix(".loss.csv")
        write_loss_curve(loss_path, losses)
        member = {"weights": path.name, "loss_curve": loss_path.name, "final_loss": losses[-1] if losses else None}
        if held_out:
            member["one_step_mse"] = one_step_mse(params, held_out)
            member["zero_acceleration_mse"] = zero_acceleration_mse(held_out, hyper.history)
        summary["members"].append(member)
        success(f"Weights written to {path}.")
    write_json(out_path.with_suffix(".train.json"), summary)


@click.command()
@click.option('--task', required=True, type=click.Choice(TASK_NAMES), help='Task to optimize.')
@click.option('--seed', default=0, type=int, help='Task and optimizer seed.')
@click.option('--optimizer', default="gd", type=click.Choice(["gd", "cem"]), help='Optimizer.')
@click.option('--simulator', default="model", type=click.Choice(["model", "oracle"]), help='Simulator to optimize.')
@click.option('--weights', default=None, help='Weights file, or a comma-separated list for an ensemble.')
@click.option('--config', 'config_json', default=None, help='JSON overrides for GDConfig or CEMConfig.')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Output directory.')
@click.option('--rollout-steps', default=50, type=int, help='Rollout length K.')
@click.option('--num-joints', default=16, type=int, help='Tool joints (contain / ramp).')
@click.option('--parameterization', default=None, type=click.Choice(DESIGN_KINDS), help='Design kind override.')
@click.option('--global-offset', is_flag=True, help='Add a trainable (x, y) tool offset.')
@click.option('--initial-offset', default="0,0", help='Starting tool offset "x,y".')
@click.option('--control-points', default=None, type=int, help='Landscape control points.')
@click.option('--pools-layout', default="two", type=click.Choice(["two", "three-a", "three-b"]))
@click.option('--direction-index', default=None, type=int, help='Landscape direction 0..7.')
@click.option('--segment-length', default=1, type=int, help='Rollout steps per checkpoint segment.')
@click.option('--eval-every', default=None, type=int, help='Score with the oracle every n iterations.')
@click.option('--threads', default=None, type=int, help='Worker threads for populations and ensembles.')
@click.option('--no-record-wallclock', is_flag=True, help='Write 0 timings so reruns are byte-identical.')
@reported("optimize")
def optimize(task: str, seed: int, optimizer: str, simulator: str, weights: Optional[str], config_json: Optional[str],
             out: str, rollout_steps: int, num_joints: int, parameterization: Optional[str], global_offset: bool,
             initial_offset: str, control_points: Optional[int], pools_layout: str, direction_index: Optional[int],
             segment_length: int, eval_every: Optional[int], threads: Optional[int], no_record_wallclock: bool):
    """Optimize a design with GD-M, CEM-M or CEM-S."""
    if optimizer == "gd" and simulator == "oracle":
        raise click.UsageError("oracle is non-differentiable; use --optimizer cem with --simulator oracle")
    config = load_config(announce_missing=False)
    workers = resolve_threads(threads, config)
    flags = {k: v for k, v in locals().items() if k not in ("config", "workers")}
    offset = tuple(float(v) for v in parse_grid(initial_offset))
    if len(offset) != 2:
        raise ConfigError("--initial-offset takes two numbers")
    spec = generate_task(
        task, seed, num_steps=rollout_steps, num_joints=num_joints, parameterization=parameterization,
        global_offset=global_offset, initial_offset=offset, control_points=control_points,
        pools_layout=pools_layout, direction_index=direction_index,
    )
    model = _load_simulator(weights)
    if simulator == "model" and model is None:
        raise ConfigError("--simulator model needs --weights")

    overrides = parse_overrides(config_json)
    if eval_every is not None:
        overrides["eval_every"] = eval_every
    initial_phi = spec.initial_design().phi
    oracle_eval = OracleObjective(spec)

    info(f"Optimizing {task} with {optimizer}-{'M' if simulator == 'model' else 'S'}...")
    if optimizer == "gd":
        cfg = merge_overrides(GDConfig, config.gd, spec.gd_defaults, overrides)
        objective = ModelObjective(spec, model, segment_length, workers)
        run = lambda: gd_optimize(initial_phi, objective.value_and_grad, cfg, oracle_eval)
    else:
        cfg = merge_overrides(
            CEMConfig, config.cem, spec.cem_defaults,
            {"simulator": simulator, "initial_mu": initial_phi.tolist()}, overrides,
        )
        objective = ModelObjective(spec, model) if simulator == "model" else oracle_eval
        run = lambda: cem_optimize(objective, spec.arity, cfg, seed, workers, oracle_eval)

    out_dir = create_dest_dir_if_not_exists(out)
    record_wallclock = not no_record_wallclock
    provenance = build_provenance("optimize", flags, seed)
    try:
        record = run()
    except OptimizationAborted as e:
        if e.record is not None:
            e.record.write_csv(out_dir / "record.csv", record_wallclock)
            e.record.write_phi_history(out_dir / "phi_history.csv")
        raise

    record.write_csv(out_dir / "record.csv", record_wallclock)
    record.write_phi_history(out_dir / "phi_history.csv")
    final = spec.initial_design().with_phi(record.final_phi)
    write_json(out_dir / "design.json", {
        "design": final.to_dict(),
        "task": spec.to_dict(),
        "optimizer": optimizer,
        "simulator": simulator,
        "config": cfg.to_dict(),
        "best_j": record.best_j(),
        "total_evals": record.total_evals,
        "provenance": provenance,
    })
    success(f"Best J {record.best_j():.6g} after {record.total_evals} evaluations; results in {out_dir}.")


def _read_design(path: str) -> tuple[DesignParams, Optional[TaskSpec]]:
    data = read_json(path)
    if "design" in data:
        task = TaskSpec.from_dict(data["task"]) if "task" in data else None
        return DesignParams.from_dict(data["design"]), task
    return DesignParams.from_dict(data), None


@click.command()
@click.option('--design', 'design_path', required=True, type=click.Path(), help='Design JSON from optimize.')
@click.option('--task', default=None, type=click.Choice(TASK_NAMES), help='Score against this task instead.')
@click.option('--seed', default=0, type=int, help='Seed of --task.')
@click.option('--rollout-steps', default=None, type=int, help='Rollout length K of --task.')
@click.option('--weights', default=None, help='Also report J_M with these weights.')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Report JSON; a CSV row is written beside it.')
@reported("evaluate")
def evaluate(design_path: str, task: Optional[str], seed: int, rollout_steps: Optional[int], weights: Optional[str],
             out: str):
    """Score a design with the oracle (J_S) and optionally the model (J_M)."""
    load_config(announce_missing=False)
    flags = {"design": design_path, "task": task, "seed": seed, "rollout_steps": rollout_steps,
             "weights": weights, "out": out}
    design, embedded = _read_design(design_path)
    if task is not None:
        spec = generate_task(task, seed, num_steps=rollout_steps if rollout_steps is not None else 50)
    elif embedded is not None:
        spec = embedded
        if rollout_steps is not None:
            spec = replace(spec, template=replace(spec.template, num_steps=rollout_steps))
    else:
        raise ConfigError("the design file carries no task; pass --task")
    spec.check_design(design)
    if design.alpha != spec.alpha:
        raise ConfigError(f"design geometry does not match task {spec.name}")

    info(f"Evaluating design on {spec.name}...")
    evaluation = evaluate_design(design.phi, spec, model=_load_simulator(weights))
    row = {"task": spec.name, "seed": spec.seed, **evaluation.to_row()}
    out_path = Path(out)
    if out_path.parent != Path(""):
        create_dest_dir_if_not_exists(out_path.parent)
    write_json(out_path, {**row, "provenance": build_provenance("evaluate", flags, seed)})
    with open(out_path.with_suffix(".csv"), 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
    success(f"J_S {evaluation.oracle.raw:.6g} (normalized {evaluation.oracle.normalized:.6g}).")


@click.command()
@click.option('--ablation', required=True, help=f'One of {", ".join(ABLATIONS)}.')
@click.option('--grid', required=True, help='Values such as "25,50,100".')
@click.option('--seeds', default=5, type=int, help='Seeds per grid value.')
@click.option('--optimizer', default="cem", type=click.Choice(["gd", "cem"]))
@click.option('--simulator', default="oracle", type=click.Choice(["model", "oracle"]))
@click.option('--weights', default=None, help='Weights for model-based runs.')
@click.option('--task', default="contain", help='Base task for every ablation except num-tools.')
@click.option('--iterations', default=20, type=int, help='Optimizer iterations per run.')
@click.option('--population', default=20, type=int, help='CEM population outside the population ablation.')
@click.option('--rollout-steps', default=50, type=int, help='Rollout length outside the rollout-length ablation.')
@click.option('--resamples', default=1000, type=int, help='Bootstrap resamples.')
@click.option('--out', required=True, type=click.Path(file_okay=False), help='Output directory.')
@click.option('--threads', default=None, type=int, help='Worker pool size (default INVDES_THREADS or all cores).')
@click.option('--no-record-wallclock', is_flag=True, help='Write 0 timings so reruns are byte-identical.')
@reported("sweep")
def sweep(ablation: str, grid: str, seeds: int, optimizer: str, simulator: str, weights: Optional[str], task: str,
          iterations: int, population: int, rollout_steps: int, resamples: int, out: str, threads: Optional[int],
          no_record_wallclock: bool):
    """Run an ablation grid over several seeds and aggregate with bootstrap CIs."""
    if ablation not in ABLATIONS:
        raise click.UsageError(f"unknown ablation '{ablation}', choose from {', '.join(ABLATIONS)}")
    if optimizer == "gd" and simulator == "oracle":
        raise click.UsageError("oracle is non-differentiable; use --optimizer cem with --simulator oracle")
    config = load_config(announce_missing=False)
    workers = resolve_threads(threads, config)
    flags = {k: v for k, v in locals().items() if k not in ("config", "workers")}
    try:
        values = parse_grid(grid)
    except ValueError as e:
        raise ConfigError(str(e))
    settings = SweepSettings(
        optimizer=optimizer, simulator=simulator, iterations=iterations, population=population,
        num_steps=rollout_steps, task=task, record_wallclock=not no_record_wallclock,
    )
    out_dir = create_dest_dir_if_not_exists(out)
    info(f"Sweeping {ablation} over {values} with {seeds} seeds on {workers} threads...")
    results = run_sweep(ablation, values, seeds, settings, out_dir / "runs", _load_simulator(weights), workers)
    rows = aggregate_results(results, resamples=resamples, seed=0)
    write_aggregate_csv(out_dir / "aggregate.csv", rows)
    write_json(out_dir / "sweep.json", {
        "runs": [
            {"value": r.run.value, "seed": r.run.seed, "file": r.run.file_name, "j_oracle": _finite(r.j_oracle),
             "j_oracle_normalized": _finite(r.j_oracle_normalized), "evals": r.evals, "failure": r.failure}
            for r in results
        ],
        "provenance": build_provenance("sweep", flags, list(range(seeds))),
    })
    failed = sum(r.failure is not None for r in results)
    if failed:
        warn(f"{failed} of {len(results)} runs aborted.")
    success(f"{len(results)} runs aggregated into {len(rows)} rows in {out_dir / 'aggregate.csv'}.")


def _finite(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


# Adding commands to the CLI group
cli.add_command(init)
cli.add_command(gen_data)
cli.add_command(train)
cli.add_command(optimize)
cli.add_command(evaluate)
cli.add_command(sweep)


if __name__ == "__main__":
    cli()
