"""Run manifests: content hashes of inputs and outputs plus the effective
configuration, written next to every command's outputs.

Manifests contain no timestamps or host details, so identical inputs and
configuration produce byte-identical manifests; that is the determinism
contract the CLI commands are checked against. A command refuses to
overwrite a manifest recording different input hashes unless forced.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ConfigError


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_paths(paths: dict[str, Path]) -> dict[str, str]:
    return {name: sha256_file(p) for name, p in sorted(paths.items())}


def dump_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def build_manifest(
    command: str,
    config: dict,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
    extra: dict | None = None,
) -> dict:
    manifest = {
        "schema": 1,
        "command": command,
        "config": config,
        "inputs": hash_paths(inputs),
        "outputs": hash_paths(outputs),
    }
    if extra:
        manifest["extra"] = extra
    return manifest


def check_manifest_overwrite(manifest_path, new_inputs: dict[str, str], force: bool):
    """Refuse to silently overwrite a manifest recording different inputs."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists() or force:
        return
    try:
        existing = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError):
        raise ConfigError(
            f"existing manifest {manifest_path} is unreadable; use --force to replace"
        ) from None
    if existing.get("inputs") != new_inputs:
        raise ConfigError(
            f"{manifest_path} records different inputs; use --force to overwrite"
        )
