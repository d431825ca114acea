import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, TypeVar, Union

import yaml
from dotenv import load_dotenv

from invdes_cli.errors import ConfigError
from invdes_cli.util import set_quiet, warn

CONFIG_FILE_NAMES = ("invdesconfig.yml", "invdes_config.yaml")

T = TypeVar("T")


@dataclass
class ProjectConfig:
    """Settings read from invdesconfig.yml, with environment overrides applied."""
    name: str = "InvDesProject"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    quiet: bool = False
    model: dict[str, Any] = field(default_factory=dict)
    gd: dict[str, Any] = field(default_factory=dict)
    cem: dict[str, Any] = field(default_factory=dict)
    source: Optional[Path] = None


def _env_flag(name: str) -> Optional[bool]:
    value = os.getenv(name)
    if value is None:
        return None
    return value.lower() in ("1", "true", "on", "yes")


def find_config_file(directory: Union[str, Path] = ".") -> Optional[Path]:
    for file_name in CONFIG_FILE_NAMES:
        candidate = Path(directory) / file_name
        if candidate.exists():
            return candidate
    return None


def load_config(directory: Union[str, Path] = ".", announce_missing: bool = True) -> ProjectConfig:
    """
    Load .env, then invdesconfig.yml (or invdes_config.yaml) from `directory`.

    INVDES_THREADS and INVDES_QUIET override the file. A missing file leaves
    the defaults in place.
    """
    load_dotenv()
    config = ProjectConfig()
    path = find_config_file(directory)
    if path is None:
        if announce_missing:
            warn("invdesconfig.yml not found. Using default settings.")
    else:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping")
        config.name = data.get("project", {}).get("name", config.name)
        config.threads = int(data.get("threads", config.threads))
        config.quiet = bool(data.get("quiet", config.quiet))
        config.model = dict(data.get("model") or {})
        config.gd = dict(data.get("gd") or {})
        config.cem = dict(data.get("cem") or {})
        config.source = path

    env_threads = os.getenv("INVDES_THREADS")
    if env_threads:
        try:
            config.threads = int(env_threads)
        except ValueError:
            raise ConfigError(f"INVDES_THREADS must be an integer, got '{env_threads}'")
    env_quiet = _env_flag("INVDES_QUIET")
    if env_quiet is not None:
        config.quiet = env_quiet
    if config.threads < 1:
        raise ConfigError("threads must be at least 1")
    set_quiet(config.quiet)
    return config


def resolve_threads(flag: Optional[int], config: ProjectConfig) -> int:
    """An explicit --threads wins over INVDES_THREADS, which wins over the config file."""
    threads = config.threads if flag is None else flag
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return threads


def parse_overrides(text: Optional[str]) -> dict[str, Any]:
    if not text:
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"--config is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError("--config must be a JSON object")
    return data


def merge_overrides(cls: type[T], *layers: dict[str, Any]) -> T:
    """
    Build the frozen dataclass `cls` from dict layers, later layers winning.

    Unknown keys raise ConfigError; lists become tuples so the result stays hashable.
    """
    known = {f.name for f in fields(cls)}
    merged: dict[str, Any] = {}
    for layer in layers:
        unknown = sorted(set(layer) - known)
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
        merged.update({k: tuple(v) if isinstance(v, list) else v for k, v in layer.items()})
    try:
        return cls(**merged)
    except TypeError as e:
        raise ConfigError(str(e))
