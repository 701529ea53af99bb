"""Line-oriented ``key = value`` configuration files.

Sections map onto configuration objects::

    [train]      fields of TrainConfig (algo, iterations, seed, ...)
    [trpo]       fields of TrpoConfig
    [traffic]    fields of TrafficConfig
    [expert]     fields of ExpertConfig

Values are Python literals (``0.01``, ``(100, 100)``, ``true``); anything
that does not parse as a literal is kept as a string.
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import fields, replace
from typing import Dict

from .expert import ExpertConfig
from .sim import TrafficConfig
from .training import ConfigError, TrainConfig
from .trpo import TrpoConfig

SECTIONS = ("train", "trpo", "traffic", "expert")


def _literal(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    try:
        return ast.literal_eval(text.strip())
    except (ValueError, SyntaxError):
        return text.strip()


def _coerce(cls, key: str, value, section: str):
    ftypes = {f.name: f for f in fields(cls)}
    if key not in ftypes:
        raise ConfigError(f"{section}.{key}", "unknown configuration key")
    default = getattr(cls(), key)
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            value = float(value)
        elif isinstance(default, tuple):
            if not isinstance(value, (tuple, list)):
                raise TypeError
            value = tuple(value)
    except TypeError:
        raise ConfigError(f"{section}.{key}", f"expected a value like {default!r}, got {value!r}") from None
    return value


def read_config(path) -> Dict[str, dict]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path!r}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed config file: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section (expected one of {SECTIONS})")
        out[section] = {k: _literal(v) for k, v in parser.items(section)}
    return out


def apply_config(raw: Dict[str, dict], train: TrainConfig = None, expert: ExpertConfig = None):
    """Overlay parsed sections on the given (or default) configuration objects."""
    train = TrainConfig() if train is None else train
    expert = ExpertConfig() if expert is None else expert
    kw = {k: _coerce(TrainConfig, k, v, "train") for k, v in raw.get("train", {}).items()
          if k not in ("trpo", "traffic")}
    for bad in ("trpo", "traffic"):
        if bad in raw.get("train", {}):
            raise ConfigError(f"train.{bad}", f"use a [{bad}] section")
    trpo_kw = {k: _coerce(TrpoConfig, k, v, "trpo") for k, v in raw.get("trpo", {}).items()}
    traffic_kw = {k: _coerce(TrafficConfig, k, v, "traffic") for k, v in raw.get("traffic", {}).items()}
    expert_kw = {k: _coerce(ExpertConfig, k, v, "expert") for k, v in raw.get("expert", {}).items()}
    try:
        trpo = replace(train.trpo, **trpo_kw)
    except ValueError as exc:
        raise ConfigError("trpo", str(exc)) from None
    try:
        expert = replace(expert, **expert_kw)
    except ValueError as exc:
        raise ConfigError("expert", str(exc)) from None
    traffic = replace(train.traffic, **traffic_kw)
    try:
        traffic.validate()
    except ValueError as exc:
        raise ConfigError("traffic", str(exc)) from None
    train = replace(train, trpo=trpo, traffic=traffic, **kw)
    return train, expert
