"""Run configuration: defaults, overridden by a TOML file, overridden by
command-line flags.  Sections mirror the module split ([model], [train])."""

from __future__ import annotations

import dataclasses
import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


MODEL_FIELDS = {
    f.name for f in dataclasses.fields(ModelConfig)
    if f.name not in ("state_dim", "action_dim", "action_space")
}
TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    for section, allowed in (("model", MODEL_FIELDS), ("train", TRAIN_FIELDS)):
        for key in raw.get(section, {}):
            if key not in allowed:
                raise ConfigError(f"{path}: unknown key [{section}] {key}")
    for section in raw:
        if section not in ("model", "train"):
            raise ConfigError(f"{path}: unknown section [{section}]")
    return raw


def merge_config(
    file_cfg: dict | None,
    model_flags: dict | None = None,
    train_flags: dict | None = None,
) -> tuple[dict, dict]:
    """defaults < file < flags; returns (model_kwargs, train_kwargs)."""
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    if file_cfg:
        model_kwargs.update(file_cfg.get("model", {}))
        train_kwargs.update(file_cfg.get("train", {}))
    for flags, kwargs, allowed, label in (
        (model_flags, model_kwargs, MODEL_FIELDS, "model"),
        (train_flags, train_kwargs, TRAIN_FIELDS, "train"),
    ):
        if not flags:
            continue
        for k, v in flags.items():
            if v is None:
                continue
            if k not in allowed:
                raise ConfigError(f"unknown {label} option {k!r}")
            kwargs[k] = v
    return model_kwargs, train_kwargs


def build_configs(
    meta, file_cfg: dict | None, model_flags: dict | None, train_flags: dict | None
) -> tuple[ModelConfig, TrainConfig]:
    model_kwargs, train_kwargs = merge_config(file_cfg, model_flags, train_flags)
    try:
        mcfg = ModelConfig(
            state_dim=meta.state_dim,
            action_dim=meta.action_dim,
            action_space=meta.action_space,
            **model_kwargs,
        )
        tcfg = TrainConfig(**train_kwargs)
    except (TypeError, ValueError, RuntimeError) as e:
        raise ConfigError(str(e)) from None
    return mcfg, tcfg


def save_run_config(path, mcfg: ModelConfig, tcfg: TrainConfig) -> None:
    with open(path, "w") as f:
        json.dump(
            {"model": dataclasses.asdict(mcfg), "train": dataclasses.asdict(tcfg)},
            f, indent=2,
        )


def load_run_config(path) -> tuple[ModelConfig, TrainConfig]:
    try:
        with open(path) as f:
            d = json.load(f)
        return ModelConfig(**d["model"]), TrainConfig(**d["train"])
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot load run config {path}: {e}") from None
