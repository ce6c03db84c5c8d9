"""YAML config files for the CLI.

A train config file mirrors TrainConfig field names, with the nested
``denoiser`` block mirroring DenoiserConfig. ``--set key=value`` overrides
use dotted paths (``--set denoiser.base_width=48``); values parse as YAML
scalars so booleans and numbers come out typed.
"""

import yaml

from .denoiser import DenoiserConfig
from .service import ServeConfig
from .trainer import TrainConfig


def _apply_overrides(tree: dict, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = tree
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return tree


def load_yaml(path) -> dict:
    with open(path) as f:
        return yaml.safe_load(f) or {}


def load_train_config(path=None, overrides=()) -> TrainConfig:
    tree = load_yaml(path) if path else {}
    tree = _apply_overrides(tree, overrides)
    den = tree.pop("denoiser", {})
    base = DenoiserConfig().to_dict()
    base.update(den)
    config = TrainConfig.from_dict({**TrainConfig().to_dict(), **tree, "denoiser": base})
    return config


def load_serve_config(path=None, overrides=()) -> ServeConfig:
    tree = load_yaml(path) if path else {}
    tree = _apply_overrides(tree, overrides)
    known = {f.name for f in ServeConfig.__dataclass_fields__.values()}
    unknown = set(tree) - known
    if unknown:
        raise ValueError(f"unknown serve config keys: {sorted(unknown)}")
    if "cors_origins" in tree:
        tree["cors_origins"] = tuple(tree["cors_origins"])
    return ServeConfig(**tree)
