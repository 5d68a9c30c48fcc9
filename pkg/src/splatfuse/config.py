"""Run configuration shared by the CLI commands.

Sources merge in a fixed order: built-in defaults, then a config file, then
SPLATFUSE_* environment variables, then command-line flags (flags win).

Config file grammar (one assignment per line):

    key = value        # '#' starts a comment anywhere on a line
    blank lines allowed

Keys are dotted lowercase identifiers from the table below. Values are an
integer, a float (inf allowed), true/false, or a string (double-quoted or
bare). Unknown keys are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError


@dataclass(frozen=True)
class ConfigKey:
    name: str
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool]
    describe: str


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_opt_int(text: str):
    if text.lower() in ("none", ""):
        return None
    return int(text)


def _positive(v) -> bool:
    return v > 0


def _percentile(v) -> bool:
    return 0.0 < v <= 100.0


CONFIG_KEYS = {
    key.name: key
    for key in [
        ConfigKey("seed", int, 0, lambda v: v >= 0,
                  "seed for randomized verification checks"),
        ConfigKey("registration.scale_percentile", float, 95.0, _percentile,
                  "robust-radius percentile"),
        ConfigKey("registration.scale_method", str, "percentile",
                  lambda v: v in ("percentile", "max"),
                  "robust radius rule: percentile or max"),
        ConfigKey("registration.trim_keep_fraction", float, 0.9,
                  lambda v: 0.0 < v <= 1.0,
                  "fraction of best matches kept each ICP iteration"),
        ConfigKey("registration.max_iterations", int, 50, lambda v: v >= 0,
                  "ICP update budget"),
        ConfigKey("registration.rel_tolerance", float, 1e-6, _positive,
                  "relative RMS change treated as converged"),
        ConfigKey("registration.max_correspondence_distance", float, math.inf,
                  _positive, "reject matches beyond this distance"),
        ConfigKey("registration.reproj_error_percentile", float, 90.0, _percentile,
                  "SfM points above this reprojection-error percentile are dropped"),
        ConfigKey("fusion.voxel_edge_m", float, 0.20, _positive,
                  "prior density, meters per dot before scale conversion"),
        ConfigKey("fusion.point_cap", _parse_opt_int, None,
                  lambda v: v is None or v >= 1, "optional output point cap"),
        ConfigKey("fusion.initial_opacity", float, 0.1, lambda v: 0.0 < v < 1.0,
                  "seed splat opacity"),
        ConfigKey("metrics.max_match_distance", float, math.inf, _positive,
                  "nearest-match cutoff for the cloud color metric"),
        ConfigKey("metrics.hungarian_cap", int, 5000, lambda v: v >= 1,
                  "maximum assignment instance size"),
        ConfigKey("render.z_near", float, 0.01, _positive,
                  "near-plane cull distance"),
        ConfigKey("render.background", str, "0,0,0",
                  lambda v: len(v.split(",")) == 3,
                  "background color, three comma-separated floats in [0,1]"),
    ]
}

ENV_PREFIX = "SPLATFUSE_"


def env_var_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def parse_config_file(path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        name, _, text = line.partition("=")
        name = name.strip()
        text = text.strip()
        if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
            text = text[1:-1]
        if name not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{name}'")
        values[name] = _convert(CONFIG_KEYS[name], text, f"{path}:{lineno}")
    return values


def _convert(key: ConfigKey, text: str, origin: str):
    try:
        value = key.parse(text)
    except ValueError:
        raise ConfigError(f"{origin}: bad value '{text}' for {key.name}") from None
    if not key.check(value):
        raise ConfigError(f"{origin}: value {value!r} out of range for {key.name}")
    return value


def load_config(
    config_path=None, overrides: dict[str, Any] | None = None, environ=None
) -> dict[str, Any]:
    """Defaults <- config file <- environment <- explicit overrides."""
    environ = os.environ if environ is None else environ
    merged = {name: key.default for name, key in CONFIG_KEYS.items()}
    if config_path is not None:
        merged.update(parse_config_file(config_path))
    for name, key in CONFIG_KEYS.items():
        text = environ.get(env_var_name(name))
        if text is not None:
            merged[name] = _convert(key, text, env_var_name(name))
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key '{name}'")
        key = CONFIG_KEYS[name]
        if isinstance(value, str):
            value = _convert(key, value, "command line")
        elif not key.check(value):
            raise ConfigError(f"command line: value {value!r} out of range for {name}")
        merged[name] = value
    return merged


def config_json_dict(config: dict[str, Any], prefixes: tuple[str, ...]) -> dict:
    """The sub-configuration relevant to one command, for its manifest."""
    out = {}
    for name, value in sorted(config.items()):
        if name == "seed" or name.startswith(prefixes):
            out[name] = None if value is None else (
                "inf" if isinstance(value, float) and math.isinf(value) else value
            )
    return out


def parse_background(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3 or not all(0.0 <= v <= 1.0 for v in parts):
        raise ConfigError(f"background must be three floats in [0,1], got '{text}'")
    return tuple(parts)
