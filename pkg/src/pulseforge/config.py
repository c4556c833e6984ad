"""Layered run configuration: named presets, TOML/JSON files, overrides.

A run config is a plain nested dict.  Resolution order (later wins):
preset -> config files in the order given -> explicit overrides.  Every
consumer gets the fully merged dict, and its hash names the run.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

try:  # 3.11+
    import tomllib as _toml
except ImportError:  # pragma: no cover - depends on interpreter
    import tomli as _toml

__all__ = [
    "ConfigError",
    "PRESETS",
    "load_config_file",
    "deep_merge",
    "resolve_config",
    "config_hash",
    "validate_config",
]


class ConfigError(ValueError):
    """Bad run configuration; the message names the offending key or line."""


# hyperparameter columns for the standard experiments; envs.py owns the
# matching environment presets
PRESETS: dict[str, dict] = {
    # calibration
    "drag-x90": {
        "command": "calibrate",
        "calibrate": {"scheme": "drag", "duration_ns": 35.6, "budget": 300, "restarts": 1},
    },
    "direct-zx": {
        "command": "calibrate",
        "calibrate": {"scheme": "direct", "duration_ns": 248.9, "budget": 300, "restarts": 4},
    },
    "echoed-zx": {
        "command": "calibrate",
        "calibrate": {"scheme": "echoed", "duration_ns": 248.9, "budget": 300, "restarts": 4},
    },
    # fixed-environment training columns
    "fixed-ix": {
        "command": "train",
        "env": {"preset": "ix"},
        "agent": {"hidden": [100, 200, 100]},
        "train": {"episodes": 50_000, "threshold": 0.99},
    },
    "fixed-zx": {
        "command": "train",
        "env": {"preset": "zx"},
        "agent": {"hidden": [800, 400, 200]},
        "train": {"episodes": 150_000, "threshold": 0.999},
    },
    "fixed-cnot": {
        "command": "train",
        "env": {"preset": "cnot"},
        "agent": {"hidden": [800, 400, 200]},
        "train": {"episodes": 150_000, "threshold": 0.999},
    },
    "fixed-zx-960": {
        "command": "train",
        "env": {"preset": "zx-960"},
        "agent": {"hidden": [800, 400, 200]},
        "train": {"episodes": 150_000, "threshold": 0.999},
    },
    "fixed-zx-800": {
        "command": "train",
        "env": {"preset": "zx-800"},
        "agent": {"hidden": [800, 400, 200]},
        "train": {"episodes": 150_000, "threshold": 0.999},
    },
    "fixed-zx-640": {
        "command": "train",
        "env": {"preset": "zx-640"},
        "agent": {"hidden": [800, 400, 200]},
        "train": {"episodes": 150_000, "threshold": 0.999},
    },
    # drifting environment, context-augmented state
    "drift-zx": {
        "command": "train",
        "env": {"preset": "zx-drift"},
        "agent": {"hidden": [800, 800, 800]},
        "train": {"episodes": 300_000, "threshold": 0.999},
    },
    # three-drive variant at the short duration
    "three-drives": {
        "command": "train",
        "env": {"preset": "zx-3drives"},
        "agent": {"hidden": [800, 400, 200], "td3": {"enabled": True}},
        "train": {"episodes": 300_000, "threshold": 0.999},
    },
    # smoke tier: minutes, not hours
    "toy": {
        "command": "train",
        "env": {"preset": "toy"},
        "agent": {
            "hidden": [32, 32],
            "lr": 1e-3,
            "kappa": 0.005,
            "capacity": 20_000,
            "warmup": 500,
            "noise_sigma": 0.3,
            "noise_floor": 0.05,
        },
        "train": {"episodes": 20_000, "threshold": 0.95, "curve_window": 100},
    },
}


def load_config_file(path) -> dict:
    """Parse one TOML or JSON config file into a dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            cfg = _toml.loads(text)
        elif path.suffix.lower() == ".json":
            cfg = json.loads(text)
        else:
            raise ConfigError(f"{path}: unsupported config format {path.suffix!r}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except _toml.TOMLDecodeError as exc:
        # tomli embeds line/column in the message
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return cfg


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; override wins, nested tables merge key-wise."""
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(
    preset: str | None = None,
    paths=(),
    overrides: dict | None = None,
) -> dict:
    """Layer preset, config files, and overrides into one dict."""
    cfg: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"
            )
        cfg = deep_merge(cfg, PRESETS[preset])
    for path in paths:
        file_cfg = load_config_file(path)
        inner = file_cfg.pop("preset", None)
        if inner is not None:
            if inner not in PRESETS:
                raise ConfigError(
                    f"{path}: unknown preset {inner!r}; choose from {sorted(PRESETS)}"
                )
            cfg = deep_merge(cfg, PRESETS[inner])
        cfg = deep_merge(cfg, file_cfg)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    return cfg


def config_hash(cfg: dict) -> str:
    """Deterministic short hash of the fully resolved config."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


# -- schema checks ---------------------------------------------------------------

_SCHEMES = ("drag", "echoed", "direct")
_EVAL_ANALYSES = ("fidelity", "leakage", "angles", "noise", "drift", "roles")


def _require(cfg: dict, key: str, types, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}.{key}: required key is missing")
    if not isinstance(cfg[key], types):
        names = (
            types.__name__
            if isinstance(types, type)
            else "/".join(t.__name__ for t in types)
        )
        raise ConfigError(
            f"{where}.{key}: expected {names}, got {type(cfg[key]).__name__}"
        )
    return cfg[key]


def _check_number(cfg: dict, key: str, where: str, lo=None, hi=None):
    if key not in cfg:
        return
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {type(v).__name__}")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}.{key}: must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}.{key}: must be <= {hi}, got {v}")


def validate_config(cfg: dict, command: str) -> dict:
    """Check the sections and key types a command needs; returns cfg."""
    if command == "calibrate":
        cal = _require(cfg, "calibrate", dict, "config")
        scheme = _require(cal, "scheme", str, "calibrate")
        if scheme not in _SCHEMES:
            raise ConfigError(
                f"calibrate.scheme: must be one of {_SCHEMES}, got {scheme!r}"
            )
        _check_number(cal, "duration_ns", "calibrate", lo=1.0)
        _check_number(cal, "budget", "calibrate", lo=10)
        _check_number(cal, "restarts", "calibrate", lo=1)
        _check_number(cal, "sigma_ns", "calibrate", lo=0.5)
        _check_number(cal, "max_cr_amp", "calibrate", lo=0.0, hi=1.0)
    elif command == "train":
        env = _require(cfg, "env", dict, "config")
        if "preset" not in env and "target" not in env:
            raise ConfigError("env: needs 'preset' or an explicit 'target'")
        tr = cfg.get("train", {})
        if not isinstance(tr, dict):
            raise ConfigError("train: expected a table/object")
        _check_number(tr, "episodes", "train", lo=1)
        _check_number(tr, "checkpoint_every", "train", lo=0)
        _check_number(tr, "curve_window", "train", lo=1)
        _check_number(tr, "threshold", "train", lo=0.0, hi=1.0)
        ag = cfg.get("agent", {})
        if not isinstance(ag, dict):
            raise ConfigError("agent: expected a table/object")
        _check_number(ag, "lr", "agent", lo=0.0)
        _check_number(ag, "kappa", "agent", lo=0.0, hi=1.0)
    elif command == "eval":
        ev = _require(cfg, "eval", dict, "config")
        if ("pulse" in ev) == ("checkpoint" in ev):
            raise ConfigError("eval: needs exactly one of 'pulse' or 'checkpoint'")
        analyses = ev.get("analyses", ["fidelity"])
        if not isinstance(analyses, (list, tuple)):
            raise ConfigError("eval.analyses: expected a list")
        for a in analyses:
            if a not in _EVAL_ANALYSES:
                raise ConfigError(
                    f"eval.analyses: unknown analysis {a!r}; "
                    f"choose from {_EVAL_ANALYSES}"
                )
    elif command == "bench":
        pass
    else:
        raise ConfigError(f"unknown command {command!r}")
    return cfg
