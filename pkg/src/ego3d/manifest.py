"""Run manifests: a sidecar record of what produced an output file.

Every CLI run that writes an artifact also writes ``<artifact>.manifest.json``
capturing the command, its effective arguments, the seed, sha256 hashes of
every input file, and tool versions. Deterministic commands re-run with the
same manifest inputs reproduce their outputs byte for byte; the manifest is
how you check that claim later.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import ego3d


def hash_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tool_versions() -> dict[str, str]:
    import numpy

    return {
        "ego3d": ego3d.__version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
    }


@dataclass
class RunManifest:
    command: str
    arguments: dict
    seed: int | None
    input_hashes: dict[str, str]
    versions: dict[str, str] = field(default_factory=tool_versions)
    started_at: str = ""
    finished_at: str | None = None

    def __post_init__(self) -> None:
        if not self.started_at:
            self.started_at = _now()

    def finish(self) -> None:
        self.finished_at = _now()

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "arguments": self.arguments,
            "seed": self.seed,
            "input_hashes": self.input_hashes,
            "versions": self.versions,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def make_manifest(
    command: str,
    arguments: dict,
    seed: int | None = None,
    inputs: list[str | Path] = (),
) -> RunManifest:
    hashes = {str(p): hash_file(p) for p in sorted(map(str, inputs))}
    return RunManifest(
        command=command, arguments=arguments, seed=seed, input_hashes=hashes
    )


def write_manifest(manifest: RunManifest, output_path: str | Path) -> Path:
    """Finish the manifest and write it next to the output it describes."""
    manifest.finish()
    path = Path(f"{output_path}.manifest.json")
    path.write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return path
