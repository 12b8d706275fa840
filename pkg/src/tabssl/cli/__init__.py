"""Command-line interface: config, manifest and subcommands."""

from .config import SCHEMA, RunConfig, parse_override
from .main import build_parser, main
from .manifest import RunManifest

__all__ = ["SCHEMA", "RunConfig", "RunManifest", "build_parser", "main", "parse_override"]
