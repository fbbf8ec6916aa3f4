"""Run configuration: YAML loading, defaults, validation and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .model import ModelParams


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def default_config() -> dict:
    text = resources.files("geomews").joinpath("data/default.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            if path == "model.params":
                out[k] = v
                continue
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and not _is_range(base[k]):
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = v
    return out


def _is_range(v) -> bool:
    return isinstance(v, dict) and set(v) == {"start", "stop", "step"}


def expand(value, name: str) -> list:
    """A list of numbers, or ``{start, stop, step}`` with ``stop`` included."""
    if _is_range(value):
        start, stop, step = (float(value[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise ConfigError(f"{name}: invalid range {value}")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list) and value and all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    raise ConfigError(f"{name}: expected a number list or start/stop/step range")


def load_config(path=None, overrides: dict | None = None) -> dict:
    base = default_config()
    user = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            user = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a mapping")
    cfg = _merge(base, user)
    cfg = _merge(cfg, overrides or {})
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    preset = cfg["model"]["preset"]
    if preset not in ("phyto", "schlogl"):
        raise ConfigError(f"unknown model preset {preset!r}")
    if preset == "phyto":
        try:
            model_params(cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model.params: {exc}") from exc
    for name in ("sweep.b1", "sweep.sigma", "analysis.indicator_b1", "analysis.indicator_sigma",
                 "bifurcation.b1", "bifurcation.sigma", "marginals.b1"):
        sec, key = name.split(".")
        vals = expand(cfg[sec][key], name)
        if not vals:
            raise ConfigError(f"{name} is empty")
    if any(s <= 0 for s in expand(cfg["sweep"]["sigma"], "sweep.sigma")):
        raise ConfigError("sweep.sigma must be positive")
    g = cfg["grid"]
    if int(g["n"]) < 3:
        raise ConfigError("grid.n must be at least 3")
    if len(g["lower"]) != 2 or len(g["upper"]) != 2:
        raise ConfigError("grid.lower/upper need two entries")
    if any(a <= 0 for a in cfg["regions"]["semi_axes"]):
        raise ConfigError("regions.semi_axes must be positive")
    if not 0 < float(cfg["analysis"]["alpha"]) < 0.5:
        raise ConfigError("analysis.alpha must lie in (0, 1/2)")
    mc = cfg["mc"]
    if float(mc["dt"]) <= 0 or float(mc["t_max"]) < float(mc["dt"]) or int(mc["n_traj"]) < 0:
        raise ConfigError("mc block: need dt > 0, t_max >= dt, n_traj >= 0")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")


def model_params(cfg: dict) -> ModelParams:
    return ModelParams(**{k: float(v) for k, v in (cfg["model"]["params"] or {}).items()})


def config_hash(cfg: dict) -> str:
    """Hash of every setting that can change results (output paths excluded)."""
    relevant = {k: v for k, v in cfg.items() if k != "output"}
    blob = json.dumps(relevant, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
