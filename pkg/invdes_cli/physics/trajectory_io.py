"""
IDTRAJ1 trajectory container.

Layout: the 8 magic bytes b"IDTRAJ1\\0", a little-endian uint32 byte length, that
many bytes of UTF-8 JSON header {num_steps, num_particles, dt, radius, node_types},
then num_steps x N x 2 little-endian float32 positions. `num_steps` counts stored
frames, so a K-step rollout is stored as K + 1 frames.
"""
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from invdes_cli.errors import TrajectoryFormatError

TRAJ_MAGIC = b"IDTRAJ1\0"
_LENGTH = struct.Struct("<I")


@dataclass(frozen=True)
class Trajectory:
    positions: np.ndarray  # frames x N x 2
    node_types: np.ndarray
    dt: float
    radius: float

    @property
    def num_steps(self) -> int:
        return int(self.positions.shape[0])

    @property
    def num_particles(self) -> int:
        return int(self.positions.shape[1])

    def header(self) -> dict:
        return {
            "num_steps": self.num_steps,
            "num_particles": self.num_particles,
            "dt": float(self.dt),
            "radius": float(self.radius),
            "node_types": [int(t) for t in self.node_types],
        }


def encode_trajectory(trajectory: Trajectory) -> bytes:
    header = json.dumps(trajectory.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = np.ascontiguousarray(trajectory.positions, dtype="<f4").tobytes()
    return TRAJ_MAGIC + _LENGTH.pack(len(header)) + header + body


def decode_trajectory(blob: bytes) -> Trajectory:
    if not blob.startswith(TRAJ_MAGIC):
        raise TrajectoryFormatError("missing IDTRAJ1 magic bytes")
    offset = len(TRAJ_MAGIC)
    if len(blob) < offset + _LENGTH.size:
        raise TrajectoryFormatError("truncated header length")
    (header_len,) = _LENGTH.unpack_from(blob, offset)
    offset += _LENGTH.size
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TrajectoryFormatError(f"unreadable header: {e}") from e
    offset += header_len

    frames, n = int(header["num_steps"]), int(header["num_particles"])
    expected = frames * n * 2 * 4
    if len(blob) - offset != expected:
        raise TrajectoryFormatError(f"expected {expected} bytes of positions, found {len(blob) - offset}")
    positions = np.frombuffer(blob, dtype="<f4", offset=offset).reshape(frames, n, 2)
    node_types = np.asarray(header["node_types"], dtype=np.int64)
    if node_types.shape[0] != n:
        raise TrajectoryFormatError("node_types length does not match num_particles")
    return Trajectory(positions=positions.copy(), node_types=node_types, dt=header["dt"], radius=header["radius"])


def write_trajectory(path: Union[str, Path], trajectory: Trajectory) -> None:
    with open(path, "wb") as f:
        f.write(encode_trajectory(trajectory))


def read_trajectory(path: Union[str, Path]) -> Trajectory:
    with open(path, "rb") as f:
        return decode_trajectory(f.read())
