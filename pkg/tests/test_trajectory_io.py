import json

import numpy as np
import pytest

from invdes_cli.errors import TrajectoryFormatError
from invdes_cli.physics import TRAJ_MAGIC, Trajectory, decode_trajectory, encode_trajectory, read_trajectory, \
    write_trajectory


@pytest.fixture
def trajectory(rng):
    return Trajectory(
        positions=rng.uniform(size=(4, 3, 2)).astype(np.float32).astype(np.float64),
        node_types=np.array([0, 0, 1]),
        dt=0.05,
        radius=0.045,
    )


def test_layout(trajectory):
    blob = encode_trajectory(trajectory)
    assert blob[:8] == TRAJ_MAGIC
    header_len = int.from_bytes(blob[8:12], "little")
    header = json.loads(blob[12:12 + header_len])
    assert header["num_steps"] == 4 and header["num_particles"] == 3
    assert header["node_types"] == [0, 0, 1]
    assert len(blob) == 12 + header_len + 4 * 3 * 2 * 4


def test_file_roundtrip(tmp_path, trajectory):
    write_trajectory(tmp_path / "t.idtraj", trajectory)
    again = read_trajectory(tmp_path / "t.idtraj")
    np.testing.assert_array_equal(again.positions, trajectory.positions)
    assert again.dt == 0.05 and again.radius == 0.045


def test_bad_magic(trajectory):
    with pytest.raises(TrajectoryFormatError):
        decode_trajectory(b"NOTTRAJ\0" + encode_trajectory(trajectory)[8:])


def test_truncated_positions(trajectory):
    with pytest.raises(TrajectoryFormatError):
        decode_trajectory(encode_trajectory(trajectory)[:-4])


def test_truncated_header():
    with pytest.raises(TrajectoryFormatError):
        decode_trajectory(TRAJ_MAGIC + b"\x01")
