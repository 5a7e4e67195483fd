"""Run-configuration file: defaults, schema validation, dotted-path overrides."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .losses import LossWeights
from .model import DomainSpec, EpidemicParams, InitialConditionSpec
from .nsfd import GridSpec
from .network import NetworkConfig
from .trainer import SamplingConfig, TrainConfig

SCHEMA_VERSION = "1"

PARAM_KEYS = ("Lambda", "mu", "beta", "p", "delta", "eta", "gamma", "lambda_diff")
INVERSE_KEYS = ("beta", "delta", "gamma", "lambda_diff")


class ConfigError(ValueError):
    """Invalid run configuration."""


DEFAULT_CONFIG = {
    "seed": 0,
    "output_dir": "out",
    "model": {
        "params": {"Lambda": 1.0, "mu": 0.01, "beta": 0.4, "p": 0.3, "delta": 0.3,
                   "eta": 0.1, "gamma": 0.2, "lambda_diff": 0.05},
        "ic": {"s0_level": 0.9, "seed_center": None, "seed_amplitude_E": 0.05,
               "seed_amplitude_I": 0.05, "seed_width": 0.05, "r0_level": 0.0},
    },
    "grid": {"dim": 1, "Lx": 1.0, "Ly": None, "T": 5.0, "M": 101, "My": None,
             "k": 1e-5, "n_steps": None, "store_stride": None},
    "network": {"n_hidden": 4, "width": 64, "activation": "tanh",
                "n_frequencies": 32, "frequency_scale": None,
                "param_bounds": {"beta": 1.0, "delta": 1.0, "gamma": 1.0,
                                 "lambda_diff": 1.0},
                "theta_start": {"beta": 0.5, "delta": 0.5, "gamma": 0.5,
                                "lambda_diff": 0.5}},
    "loss_weights": {"pde": 1.0, "ic": 1.0, "bc": 1.0, "data": 10.0,
                     "constraints": 1.0},
    "sampling": {"n_interior": 2048, "n_ic": 256, "n_boundary": 256, "alpha": 1.0,
                 "uniform_fraction": 0.5, "probe_cells": 64},
    "training": {"epochs": 8000, "stage1_fraction": 0.1, "stage3_max_iter": 500,
                 "lr_max": 3e-3, "lr_min": 1e-5, "clip_norm": 1.0,
                 "early_stop_tol": 1e-8, "early_stop_window": 500},
    "dataset": {"path": None, "n_d": 2000, "noise_rel": 0.0,
                "observed_compartments": ["S", "E", "I", "R"],
                "use_in_forward": True},
}


def _num(minimum=None, exclusive_minimum=None, maximum=None, nullable=False):
    t = {"type": ["number", "null"] if nullable else "number"}
    if minimum is not None:
        t["minimum"] = minimum
    if exclusive_minimum is not None:
        t["exclusiveMinimum"] = exclusive_minimum
    if maximum is not None:
        t["maximum"] = maximum
    return t


def _int(minimum=None, nullable=False):
    t = {"type": ["integer", "null"] if nullable else "integer"}
    if minimum is not None:
        t["minimum"] = minimum
    return t


def _obj(props):
    return {"type": "object", "properties": props, "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "seed": _int(minimum=0),
    "output_dir": {"type": "string"},
    "model": _obj({
        "params": _obj({
            "Lambda": _num(minimum=0), "mu": _num(exclusive_minimum=0),
            "beta": _num(minimum=0), "p": _num(minimum=0, maximum=1),
            "delta": _num(minimum=0), "eta": _num(minimum=0),
            "gamma": _num(minimum=0), "lambda_diff": _num(minimum=0)}),
        "ic": _obj({
            "s0_level": _num(minimum=0),
            "seed_center": {"type": ["array", "null"],
                            "items": {"type": "number"}, "maxItems": 2},
            "seed_amplitude_E": _num(minimum=0), "seed_amplitude_I": _num(minimum=0),
            "seed_width": _num(exclusive_minimum=0), "r0_level": _num(minimum=0)}),
    }),
    "grid": _obj({
        "dim": {"type": "integer", "enum": [1, 2]},
        "Lx": _num(exclusive_minimum=0), "Ly": _num(exclusive_minimum=0, nullable=True),
        "T": _num(exclusive_minimum=0),
        "M": _int(minimum=3), "My": _int(minimum=3, nullable=True),
        "k": _num(exclusive_minimum=0), "n_steps": _int(minimum=0, nullable=True),
        "store_stride": _int(minimum=1, nullable=True)}),
    "network": _obj({
        "n_hidden": _int(minimum=1), "width": _int(minimum=1),
        "activation": {"type": "string", "enum": ["tanh", "swish"]},
        "n_frequencies": _int(minimum=1),
        "frequency_scale": _num(exclusive_minimum=0, nullable=True),
        "param_bounds": _obj({k: _num(exclusive_minimum=0) for k in INVERSE_KEYS}),
        "theta_start": _obj({k: _num(exclusive_minimum=0) for k in INVERSE_KEYS})}),
    "loss_weights": _obj({k: _num(minimum=0)
                          for k in ("pde", "ic", "bc", "data", "constraints")}),
    "sampling": _obj({
        "n_interior": _int(minimum=1), "n_ic": _int(minimum=1),
        "n_boundary": _int(minimum=1), "alpha": _num(minimum=0),
        "uniform_fraction": _num(minimum=0, maximum=1), "probe_cells": _int(minimum=1)}),
    "training": _obj({
        "epochs": _int(minimum=1), "stage1_fraction": _num(minimum=0, maximum=1),
        "stage3_max_iter": _int(minimum=0),
        "lr_max": _num(exclusive_minimum=0), "lr_min": _num(exclusive_minimum=0),
        "clip_norm": _num(exclusive_minimum=0),
        "early_stop_tol": _num(minimum=0), "early_stop_window": _int(minimum=1)}),
    "dataset": _obj({
        "path": {"type": ["string", "null"]},
        "n_d": _int(minimum=0), "noise_rel": _num(minimum=0),
        "observed_compartments": {"type": "array",
                                  "items": {"type": "string",
                                            "enum": ["S", "E", "I", "R"]},
                                  "minItems": 1},
        "use_in_forward": {"type": "boolean"}}),
})


def _deep_merge(base: dict, override: dict, path: str = "$") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key at {path}.{key}")
        if isinstance(value, dict) and isinstance(base[key], dict):
            out[key] = _deep_merge(base[key], value, f"{path}.{key}")
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_override(cfg: dict, dotted: str):
    """Apply one 'a.b.c=value' override in place; value parsed as JSON if possible."""
    if "=" not in dotted:
        raise ConfigError(f"override {dotted!r} must look like key.path=value")
    keypath, raw = dotted.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    keys = keypath.split(".")
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigError(f"unknown config path {keypath!r}")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {keypath!r}")
    node[keys[-1]] = value


def validate_config(cfg: dict):
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: e.json_path)
    if errors:
        msgs = "; ".join(f"{e.json_path}: {e.message}" for e in errors[:5])
        raise ConfigError(f"invalid config: {msgs}")


def load_config(path, overrides=()) -> dict:
    """Load a config file, merge onto defaults, apply overrides, validate."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            user = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    cfg = _deep_merge(DEFAULT_CONFIG, user)
    for item in overrides:
        apply_override(cfg, item)
    validate_config(cfg)
    return cfg


# -- builders --------------------------------------------------------------

def build_params(cfg: dict) -> EpidemicParams:
    return EpidemicParams(**cfg["model"]["params"])


def build_domain(cfg: dict) -> DomainSpec:
    g = cfg["grid"]
    if g["dim"] == 1:
        lengths = (g["Lx"],)
    else:
        lengths = (g["Lx"], g["Ly"] if g["Ly"] is not None else g["Lx"])
    return DomainSpec(dim=g["dim"], lengths=lengths, T=g["T"])


def build_grid(cfg: dict, domain: DomainSpec) -> GridSpec:
    g = cfg["grid"]
    return GridSpec.from_domain(domain, M=g["M"], k=g["k"], n_steps=g["n_steps"],
                                My=g["My"] if domain.dim == 2 else None)


def store_stride(cfg: dict, grid: GridSpec) -> int:
    """Stored-level stride; the default keeps roughly 1000 levels in 1D and
    100 in 2D regardless of the time step."""
    s = cfg["grid"]["store_stride"]
    if s is not None:
        return s
    per_level = 1000 if grid.dim == 1 else 100
    return max(1, grid.n_steps // per_level)


def build_ic_spec(cfg: dict) -> InitialConditionSpec:
    ic = dict(cfg["model"]["ic"])
    if ic["seed_center"] is not None:
        ic["seed_center"] = tuple(ic["seed_center"])
    return InitialConditionSpec(**ic)


def build_network_config(cfg: dict) -> NetworkConfig:
    n = cfg["network"]
    scale = n["frequency_scale"]
    if scale is None:
        scale = 1.0 if cfg["grid"]["dim"] == 1 else 2.0
    return NetworkConfig(
        dim=cfg["grid"]["dim"], n_hidden=n["n_hidden"], width=n["width"],
        activation=n["activation"], n_frequencies=n["n_frequencies"],
        frequency_scale=scale,
        param_bounds=tuple(n["param_bounds"][k] for k in INVERSE_KEYS),
        theta_start=tuple(n["theta_start"][k] for k in INVERSE_KEYS))


def build_train_config(cfg: dict, mode: str) -> TrainConfig:
    t = cfg["training"]
    return TrainConfig(mode=mode, epochs=t["epochs"],
                       stage1_fraction=t["stage1_fraction"],
                       stage3_max_iter=t["stage3_max_iter"],
                       lr_max=t["lr_max"], lr_min=t["lr_min"],
                       clip_norm=t["clip_norm"], early_stop_tol=t["early_stop_tol"],
                       early_stop_window=t["early_stop_window"],
                       weights=LossWeights(**cfg["loss_weights"]),
                       sampling=SamplingConfig(**cfg["sampling"]),
                       seed=cfg["seed"])
