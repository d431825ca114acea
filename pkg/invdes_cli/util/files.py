import hashlib
import json
import os
from pathlib import Path
from typing import Any, Union


def create_dest_dir_if_not_exists(dest_dir: Union[str, Path]) -> Path:
    """Create destination directory if it doesn't exist.
    Parameters:
        dest_dir (Path): Path to the destination directory.
    """
    dest_dir = Path(dest_dir)
    if not dest_dir.exists():
        os.makedirs(dest_dir)
    return dest_dir


def hash_file(file_path: Union[str, Path]) -> str:
    """Create a SHA256 hash of a file."""
    sha256_hash = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for byte_block in iter(lambda: f.read(4096), b""):
            sha256_hash.update(byte_block)
    return sha256_hash.hexdigest()


def write_json(path: Union[str, Path], payload: Any) -> None:
    """Write JSON with sorted keys and a trailing newline so reruns are byte-identical."""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: Union[str, Path]) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
