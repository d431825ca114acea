import numpy as np
import pytest

from invdes_cli.errors import DatasetError
from invdes_cli.physics import MANIFEST_NAME, DatasetConfig, generate_dataset, load_manifest, sample_segments
from invdes_cli.physics.dataset import trajectory_file_name


def test_dataset_is_byte_identical_across_runs(tmp_path, tiny_dataset_config):
    first = generate_dataset(tmp_path / "a", 7, 2, tiny_dataset_config)
    second = generate_dataset(tmp_path / "b", 7, 2, tiny_dataset_config, workers=2)
    assert first["sha256"] == second["sha256"]
    for name in first["files"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_and_files(tmp_path, tiny_dataset_config):
    manifest = generate_dataset(tmp_path, 3, 2, tiny_dataset_config, provenance={"action": "gen-data"})
    assert manifest["files"] == [trajectory_file_name(0), trajectory_file_name(1)]
    assert (tmp_path / MANIFEST_NAME).exists()
    loaded, trajectories = load_manifest(tmp_path)
    assert loaded["count"] == 2
    for trajectory in trajectories:
        assert trajectory.num_steps == tiny_dataset_config.num_steps + 1
        fluid = int(np.sum(trajectory.node_types == 0))
        assert 8 <= fluid <= 14


def test_zero_trajectories_rejected(tmp_path):
    with pytest.raises(DatasetError):
        generate_dataset(tmp_path, 0, 0)


def test_segment_counts_cover_one_to_four():
    rng = np.random.default_rng(0)
    counts = {sample_segments(rng).shape[0] for _ in range(1000)}
    assert counts == {1, 2, 3, 4}


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "nowhere")


def test_different_seeds_differ(tmp_path):
    cfg = DatasetConfig(particles_range=(8, 10), num_steps=2)
    a = generate_dataset(tmp_path / "a", 1, 1, cfg)
    b = generate_dataset(tmp_path / "b", 2, 1, cfg)
    assert a["sha256"] != b["sha256"]
