"""Run manifest: config snapshot, inputs and outputs of every command run in a directory."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .. import __version__


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


class RunManifest:
    """``manifest.json`` in the output directory, one entry per command.

    The entry is written with status ``running`` before the command does
    any work and rewritten when it finishes, fails or stops early.
    """

    FILENAME = "manifest.json"

    def __init__(self, out: Path, command: str, config: dict):
        self.out = Path(out)
        self.path = self.out / self.FILENAME
        self.command = command
        self.entry = {
            "status": "running",
            "version": __version__,
            "config": config,
            "inputs": {},
            "outputs": {},
            "error": None,
        }

    def _load(self) -> dict:
        if self.path.exists():
            try:
                data = json.loads(self.path.read_text())
                if isinstance(data, dict) and isinstance(data.get("commands"), dict):
                    return data
            except json.JSONDecodeError:
                pass
        return {"commands": {}}

    def _flush(self):
        data = self._load()
        data["version"] = __version__
        data["commands"][self.command] = self.entry
        write_json(self.path, data)

    def start(self):
        self._flush()

    def add_input(self, path):
        self.entry["inputs"][str(path)] = file_digest(path)

    def _rel(self, path) -> str:
        path = Path(path)
        try:
            return str(path.relative_to(self.out))
        except ValueError:
            return str(path)

    def add_output(self, path):
        self.entry["outputs"][self._rel(path)] = file_digest(path)

    def finish(self, status: str = "complete", error: dict | None = None, **extra):
        self.entry["status"] = status
        self.entry["error"] = error
        self.entry.update(extra)
        self._flush()

    def outputs_of(self, command: str) -> dict:
        return self._load()["commands"].get(command, {}).get("outputs", {})
