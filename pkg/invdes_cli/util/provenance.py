import platform
import subprocess
from typing import Any

from invdes_cli.__version__ import __version__


def version_string() -> str:
    """git-describe style version, falling back to the package version."""
    try:
        out = subprocess.run(
            ['git', 'describe', '--tags', '--always', '--dirty'],
            capture_output=True, text=True, timeout=2, check=True,
        )
        described = out.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def build_provenance(action: str, flags: dict[str, Any], seed: Any = None) -> dict[str, Any]:
    """Provenance block attached to every file a command writes."""
    return {
        "action": action,
        "flags": {k: _plain(v) for k, v in sorted(flags.items())},
        "seed": seed,
        "version": version_string(),
        "os": platform.system(),
    }


def _plain(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)
