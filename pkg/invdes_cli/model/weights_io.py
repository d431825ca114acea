"""
IDWTS1 weights container.

Layout: magic b"IDWTS1\\0", little-endian uint32 header length, UTF-8 JSON header
{hyper, stats, tensors: [[name, shape], ...], provenance}, then every tensor as
little-endian float64 in declaration order.
"""
import json
import struct
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from invdes_cli.errors import ConfigError, ShapeError, WeightsFormatError
from invdes_cli.model.params import ModelHyper, ModelParams, NormStats

WEIGHTS_MAGIC = b"IDWTS1\0"
_LENGTH = struct.Struct("<I")


def encode_weights(params: ModelParams, provenance: Optional[dict[str, Any]] = None) -> bytes:
    header = {
        "hyper": params.hyper.to_dict(),
        "stats": params.stats.to_dict(),
        "tensors": [[name, list(value.shape)] for name, value in params.weights.items()],
        "provenance": provenance or {},
    }
    raw_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.weights.values())
    return WEIGHTS_MAGIC + _LENGTH.pack(len(raw_header)) + raw_header + body


def decode_weights(blob: bytes) -> ModelParams:
    if not blob.startswith(WEIGHTS_MAGIC):
        raise WeightsFormatError("missing IDWTS1 magic bytes")
    offset = len(WEIGHTS_MAGIC)
    if len(blob) < offset + _LENGTH.size:
        raise WeightsFormatError("truncated header length")
    (header_len,) = _LENGTH.unpack_from(blob, offset)
    offset += _LENGTH.size
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightsFormatError(f"unreadable header: {e}") from e
    offset += header_len

    weights = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise WeightsFormatError(f"truncated data for tensor {name}")
        weights[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(blob):
        raise WeightsFormatError(f"{len(blob) - offset} trailing bytes after the last tensor")
    try:
        return ModelParams(
            hyper=ModelHyper.from_dict(header["hyper"]),
            weights=weights,
            stats=NormStats.from_dict(header["stats"]),
        )
    except (ShapeError, ConfigError) as e:
        raise WeightsFormatError(str(e)) from e


def save_weights(path: Union[str, Path], params: ModelParams, provenance: Optional[dict[str, Any]] = None) -> None:
    with open(path, "wb") as f:
        f.write(encode_weights(params, provenance))


def load_weights(path: Union[str, Path]) -> ModelParams:
    with open(path, "rb") as f:
        return decode_weights(f.read())
