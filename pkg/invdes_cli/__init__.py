from .invdes_cli import cli
