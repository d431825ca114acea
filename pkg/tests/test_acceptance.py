import numpy as np
import pytest

from invdes_cli.config import merge_overrides
from invdes_cli.design import generate_task
from invdes_cli.model import ModelHyper, one_step_mse, train, zero_acceleration_mse
from invdes_cli.optim import PREVIOUS_MEAN, CEMConfig, GDConfig, ModelObjective, cem_optimize, evaluate_design, \
    gd_optimize, objective_oracle
from invdes_cli.physics import DatasetConfig, generate_trajectory

TRAIN_TRAJECTORIES = 200
HELD_OUT = 20
TRAIN_STEPS = 20_000


@pytest.fixture(scope="module")
def trained_model():
    cfg = DatasetConfig()
    trajectories = [generate_trajectory(0, i, cfg) for i in range(TRAIN_TRAJECTORIES + HELD_OUT)]
    hyper = ModelHyper(width=32, blocks=3)
    params, losses = train(trajectories[:TRAIN_TRAJECTORIES], hyper, seed=0, steps=TRAIN_STEPS)
    return params, losses, trajectories[TRAIN_TRAJECTORIES:]


@pytest.mark.slow
def test_trained_model_reaches_tenth_of_zero_acceleration_error(trained_model):
    params, losses, held_out = trained_model
    assert np.mean(losses[-500:]) < np.mean(losses[:500])
    baseline = zero_acceleration_mse(held_out, params.hyper.history)
    assert one_step_mse(params, held_out) <= 0.1 * baseline


@pytest.mark.slow
def test_gd_through_model_beats_cem_through_model_on_contain(trained_model):
    params = trained_model[0]
    gd_scores, cem_scores = [], []
    for seed in range(5):
        task = generate_task("contain", seed, num_steps=50, num_joints=24)
        assert task.arity == 24
        objective = ModelObjective(task, params)
        start = task.initial_design().phi

        gd_cfg = merge_overrides(GDConfig, task.gd_defaults, {"steps": 300})
        gd_record = gd_optimize(start, objective.value_and_grad, gd_cfg)
        gd_scores.append(evaluate_design(gd_record.final_phi, task).oracle.normalized)

        cem_cfg = merge_overrides(
            CEMConfig, task.cem_defaults,
            {"population": 20, "steps": 300, "simulator": "model", "initial_mu": tuple(start),
             "sigma_reference": PREVIOUS_MEAN},
        )
        cem_record = cem_optimize(objective, task.arity, cem_cfg, seed=seed, workers=4)
        cem_scores.append(evaluate_design(cem_record.final_phi, task).oracle.normalized)

    assert np.mean(gd_scores) > 0.0
    assert np.mean(cem_scores) > 0.0
    assert np.mean(gd_scores) >= np.mean(cem_scores)


@pytest.mark.slow
def test_cem_on_oracle_improves_contain():
    task = generate_task("contain", 0, num_steps=30)
    baseline = objective_oracle(task.initial_design().phi, task)
    cfg = CEMConfig(population=10, elite_fraction=0.2, initial_sigma=0.5, steps=10, simulator="oracle",
                    initial_mu=tuple(task.initial_design().phi))
    record = cem_optimize(lambda phi: objective_oracle(phi, task), task.arity, cfg, seed=0, workers=4)
    assert record.best_j() > baseline
