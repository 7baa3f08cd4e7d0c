"""Run configuration: built-in defaults < config file (TOML or JSON) < CLI flags."""
from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .arap import ArapConfig
from .fileio import InputError
from .recon import ReconConfig
from .retarget import RetargetConfig


@dataclass
class EvalConfig:
    window: int | None = None   # None -> acceptance window from sequence lengths
    per_channel: bool = False


@dataclass
class DeformConfig:
    stride: int = 5
    arap: ArapConfig = field(default_factory=ArapConfig)


@dataclass
class Config:
    retarget: RetargetConfig = field(default_factory=RetargetConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    deform: DeformConfig = field(default_factory=DeformConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _merge(obj, values: dict, where: str):
    known = {f.name: f for f in dataclasses.fields(obj)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise InputError(f"unknown config key {where}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise InputError(f"config key {where}{key} must be a table")
            value = _merge(current, value, f"{where}{key}.")
        kwargs[key] = value
    try:
        return dataclasses.replace(obj, **kwargs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config section {where or '<root>'}: {exc}") from None


def load_config(path=None, overrides: dict | None = None) -> Config:
    cfg = Config()
    if path is not None:
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise InputError(f"{path}: cannot read ({exc.strerror})") from None
        try:
            data = json.loads(raw) if path.suffix.lower() == ".json" else tomllib.loads(raw.decode())
        except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise InputError(f"{path}: {exc}") from None
        cfg = _merge(cfg, data, "")
    if overrides:
        nested: dict = {}
        for dotted, value in overrides.items():
            if value is None:
                continue
            node = nested
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = value
        cfg = _merge(cfg, nested, "")
    return cfg
