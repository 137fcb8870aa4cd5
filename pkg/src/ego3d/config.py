"""TOML configuration loading.

One optional config file can hold defaults for every command; flags
always win over file values. Sections mirror the CLI surface::

    [server]
    url = "http://localhost:8303"

    [backends.rec]
    base_url = "fixture:///data/fixtures"
    timeout = 10.0

    [backends.depth]
    base_url = "http://depth.internal:9000"
    auth_token_env = "EGO3D_DEPTH_TOKEN"

    [backends.vlm]
    base_url = "https://api.example.com"
    auth_token_env = "EGO3D_VLM_TOKEN"
    model = "some-model"

    [generation]
    seed = 7

    [calibration]
    width = 1600
    height = 900
    fov_deg = 90.0
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ego3d.errors import ValidationError


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid TOML: {exc}") from exc


def dig(config: dict, dotted_key: str, default: Any = None) -> Any:
    """Fetch 'backends.rec.base_url'-style keys; default when absent."""
    node: Any = config
    for part in dotted_key.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def pick(flag_value: Any, config: dict, dotted_key: str, default: Any = None) -> Any:
    """Resolution order: explicit flag, then config file, then default."""
    if flag_value is not None:
        return flag_value
    return dig(config, dotted_key, default)
