import numpy as np
import pytest

from invdes_cli.errors import ConfigError, OptimizationAborted
from invdes_cli.optim import (
    CEMConfig, CSV_COLUMNS, GDConfig, AdamState, adam_step, cem_optimize, cem_step, clip_by_global_norm,
    PREVIOUS_MEAN, gd_optimize, read_record_csv, sample_population, select_elites,
)


def quadratic(target):
    target = np.asarray(target)

    def value(phi):
        return -float(np.sum(np.square(phi - target)))

    def value_and_grad(phi):
        return value(phi), -2.0 * (phi - target)

    return value, value_and_grad


def test_adam_converges_on_quadratic():
    _, vg = quadratic([0.3, -0.2])
    record = gd_optimize(np.zeros(2), vg, GDConfig(learning_rate=0.05, clip=None, steps=200))
    assert np.linalg.norm(record.final_phi - np.array([0.3, -0.2])) < 1e-3
    assert len(record.rows) == 200
    assert record.total_evals == 200
    assert record.best_so_far == sorted(record.best_so_far)


def test_first_adam_step_has_learning_rate_size():
    cfg = GDConfig(learning_rate=0.01, clip=None)
    phi, state = adam_step(np.zeros(3), np.array([2.0, -0.5, 1e-3]), AdamState.zeros_like(np.zeros(3)), cfg)
    np.testing.assert_allclose(phi, [-0.01, 0.01, -0.01], rtol=1e-4)
    assert state.t == 1


def test_cem_converges_on_quadratic_at_default_population():
    target = np.array([0.2, -0.1, 0.15, -0.05])
    value, _ = quadratic(target)
    for seed in range(5):
        cfg = CEMConfig(population=20, elite_fraction=0.1, smoothing=0.1, steps=100, sigma_reference=PREVIOUS_MEAN)
        record = cem_optimize(value, 4, cfg, seed=seed)
        assert np.linalg.norm(record.final_phi - target) < 1e-2
        assert record.best_so_far == sorted(record.best_so_far)
        assert record.total_evals == 20 * 100


def test_cem_sigma_reference_centres():
    samples = np.array([[1.0, 2.0], [3.0, -2.0]])
    values = np.array([1.0, 0.0])
    elite_cfg = CEMConfig(population=2, elite_fraction=1.0, smoothing=0.0)
    shift_cfg = CEMConfig(population=2, elite_fraction=1.0, smoothing=0.0, sigma_reference=PREVIOUS_MEAN)
    mu_a, sigma_a = cem_step(np.zeros(2), np.ones(2), values, samples, elite_cfg)
    mu_b, sigma_b = cem_step(np.zeros(2), np.ones(2), values, samples, shift_cfg)
    np.testing.assert_array_equal(mu_a, [2.0, 0.0])
    np.testing.assert_array_equal(mu_b, mu_a)
    np.testing.assert_allclose(sigma_a, [1.0, 2.0])
    np.testing.assert_allclose(sigma_b, [np.sqrt(5.0), 2.0])


def test_cem_population_does_not_depend_on_workers():
    value, _ = quadratic([0.1, 0.1])
    cfg = CEMConfig(population=6, elite_fraction=0.5, steps=5)
    serial = cem_optimize(value, 2, cfg, seed=3)
    threaded = cem_optimize(value, 2, cfg, seed=3, workers=3)
    for a, b in zip(serial.rows, threaded.rows):
        np.testing.assert_array_equal(a.phi, b.phi)
    np.testing.assert_array_equal(serial.final_phi, threaded.final_phi)


def test_select_elites_matches_sort(rng):
    values = rng.normal(size=30)
    np.testing.assert_array_equal(select_elites(values, 5), np.argsort(-values, kind="stable")[:5])
    np.testing.assert_array_equal(select_elites(np.array([1.0, 2.0, 2.0, 0.0]), 2), [1, 2])


def test_cem_step_is_shift_invariant(rng):
    cfg = CEMConfig(population=10, elite_fraction=0.3)
    mu, sigma = np.zeros(3), np.ones(3)
    samples = sample_population(mu, sigma, 10, seed=1, iteration=0)
    values = rng.normal(size=10)
    a = cem_step(mu, sigma, values, samples, cfg)
    b = cem_step(mu, sigma, values + 7.0, samples, cfg)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_sigma_floor():
    cfg = CEMConfig(population=2, elite_fraction=0.5, smoothing=0.0)
    samples = np.array([[0.5, 0.5], [0.0, 0.0]])
    _, sigma = cem_step(np.zeros(2), np.ones(2), np.array([1.0, 0.0]), samples, cfg)
    np.testing.assert_array_equal(sigma, [1e-6, 1e-6])


def test_clip_by_global_norm():
    np.testing.assert_allclose(clip_by_global_norm(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    np.testing.assert_array_equal(clip_by_global_norm(np.array([3.0, 4.0]), 10.0), [3.0, 4.0])
    np.testing.assert_array_equal(clip_by_global_norm(np.array([3.0, 4.0]), None), [3.0, 4.0])


def test_zero_steps_return_start():
    _, vg = quadratic([1.0])
    record = gd_optimize(np.array([0.4]), vg, GDConfig(steps=0))
    assert record.rows == []
    np.testing.assert_array_equal(record.final_phi, [0.4])
    value, _ = quadratic([1.0])
    record = cem_optimize(value, 1, CEMConfig(steps=0, initial_mu=(0.7,)), seed=0)
    np.testing.assert_array_equal(record.final_phi, [0.7])


def test_gd_aborts_on_non_finite_value():
    calls = []

    def vg(phi):
        calls.append(phi)
        return (np.nan if len(calls) == 3 else 0.0), np.zeros_like(phi)

    with pytest.raises(OptimizationAborted) as info:
        gd_optimize(np.zeros(2), vg, GDConfig(steps=10))
    assert len(info.value.record.rows) == 2


def test_cem_aborts_on_non_finite_value():
    with pytest.raises(OptimizationAborted) as info:
        cem_optimize(lambda phi: np.inf, 2, CEMConfig(steps=3), seed=0)
    assert info.value.record.rows == []


def test_oracle_evaluation_interval():
    _, vg = quadratic([0.0])
    record = gd_optimize(np.ones(1), vg, GDConfig(steps=5, eval_every=2), oracle_eval=lambda phi: 1.0)
    assert [r.j_oracle for r in record.rows] == [1.0, None, 1.0, None, 1.0]


def test_record_csv(tmp_path):
    _, vg = quadratic([0.5, 0.5])
    record = gd_optimize(np.zeros(2), vg, GDConfig(steps=3))
    record.write_csv(tmp_path / "record.csv", record_wallclock=False)
    rows = read_record_csv(tmp_path / "record.csv")
    assert list(rows[0]) == CSV_COLUMNS
    assert [r["iteration"] for r in rows] == ["0", "1", "2"]
    assert rows[0]["j_oracle"] == "" and rows[0]["wallclock_ms"] == "0.0"
    assert float(rows[0]["j_model"]) == -0.5
    record.write_phi_history(tmp_path / "phi.csv")
    assert (tmp_path / "phi.csv").read_text().splitlines()[0] == "iteration,phi_0,phi_1"


def test_config_validation():
    with pytest.raises(ConfigError):
        GDConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        CEMConfig(elite_fraction=0.0)
    with pytest.raises(ConfigError):
        CEMConfig(simulator="analytic")
    with pytest.raises(ConfigError):
        CEMConfig(sigma_reference="median")
    with pytest.raises(ConfigError):
        CEMConfig(initial_mu=(0.0,)).initial_distribution(3)
