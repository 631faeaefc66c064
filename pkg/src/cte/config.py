"""Pipeline configuration: one YAML file plus ``CTE_SECTION__KEY`` environment overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .fixtures import GAMES as FIXTURE_GAMES

ENV_PREFIX = "CTE_"

DEFAULTS = {
    "run": {"seed": 0, "out": "runs/default"},
    "corpus": {
        "source": "fixture",  # fixture | vglc
        "vglc_root": None,
        "games": ["plumber", "miner", "castle"],
        "target": "plumber",
        "split_seed": 0,
        "affordances": {},  # game -> mapping JSON path; built-ins otherwise
        "roles": {},  # game -> role JSON path; built-ins otherwise
    },
    "gmm": {"k_min": 2, "k_max": 16, "seed": 0},
    "autoencoder": {
        "epochs": 30, "batch_size": 32, "lr": 1e-3, "seed": 0,
        "loss_weights": [0.5, 1.5, 0.5, 0.5], "use_edges": True, "use_cluster_loss": True,
    },
    "dbscan": {"min_pts": [3, 5, 10], "eps_count": 20, "max_noise": 0.10, "seed": 0},
    "generator": {"layers": 3, "hidden_units": 512, "history_length": 200, "epochs": 150, "lr": 1e-3, "seed": 0},
    "translator": {"hidden_units": 256, "layers": 1, "epochs": 300, "lr": 1e-3, "seed": 0},
    "generate": {"n_levels": 20, "temperature": 1.0, "cols": None, "seed": 0},  # cols None: primer level width
    "metrics": {"max_jump_height": 4, "max_jump_span": 4},
    "expressive_range": {"x": "density", "y": "leniency", "bins": 10},
    "compare": {"variants": ["vglc", "two_step", "cte", "ablation"]},
}

SEEDED = ("run", "gmm", "autoencoder", "dbscan", "generator", "translator", "generate")


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"unknown configuration key {path + k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def env_overrides(environ=None):
    """``CTE_GENERATE__TEMPERATURE=0.5`` becomes ``{"generate": {"temperature": 0.5}}``."""
    environ = os.environ if environ is None else environ
    out = {}
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX) or "__" not in key:
            continue
        section, _, name = key[len(ENV_PREFIX) :].lower().partition("__")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {key}={raw!r}") from exc
        out.setdefault(section, {})[name] = value
    return out


class PipelineConfig(dict):
    """Nested mapping with the merged configuration; ``source`` is the file it came from."""

    source = None

    def section(self, name):
        return self[name]

    def digest(self):
        return hashlib.sha256(json.dumps(self, sort_keys=True, default=str).encode()).hexdigest()[:16]

    @property
    def out(self):
        return Path(self["run"]["out"])


def load_config(path=None, overrides=None, environ=None, seed=None, out=None):
    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"configuration file {p} does not exist")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{p} must contain a mapping")
    merged = _merge(DEFAULTS, data)
    merged = _merge(DEFAULTS, _deep_update(merged, env_overrides(environ)))
    if overrides:
        merged = _merge(DEFAULTS, _deep_update(merged, overrides))
    if seed is not None:
        for sec in SEEDED:
            merged[sec]["seed"] = int(seed)
    if out is not None:
        merged["run"]["out"] = str(out)
    cfg = PipelineConfig(merged)
    cfg.source = None if path is None else str(path)
    validate(cfg)
    return cfg


def _deep_update(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and out[k]:
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def validate(cfg):
    c = cfg["corpus"]
    if c["source"] not in ("fixture", "vglc"):
        raise ConfigError(f"corpus.source must be 'fixture' or 'vglc', got {c['source']!r}")
    if c["source"] == "vglc":
        if not c["vglc_root"] or not Path(c["vglc_root"]).is_dir():
            raise ConfigError(f"corpus.vglc_root {c['vglc_root']!r} is not a directory")
    else:
        unknown = set(c["games"]) | {c["target"]}
        unknown -= set(FIXTURE_GAMES)
        if unknown:
            raise ConfigError(f"unknown fixture games {sorted(unknown)}")
    if c["target"] not in c["games"]:
        raise ConfigError("corpus.target must be one of corpus.games")
    for kind in ("affordances", "roles"):
        for game, p in c[kind].items():
            if not Path(p).is_file():
                raise ConfigError(f"corpus.{kind}.{game}: {p} does not exist")
    for sec in SEEDED:
        if not isinstance(cfg[sec].get("seed"), int):
            raise ConfigError(f"{sec}.seed must be an explicit integer")
    if len(cfg["autoencoder"]["loss_weights"]) != 4:
        raise ConfigError("autoencoder.loss_weights needs four entries")
    g = cfg["gmm"]
    if not 1 <= g["k_min"] <= g["k_max"]:
        raise ConfigError("gmm needs 1 <= k_min <= k_max")
    gen = cfg["generate"]
    if not gen["temperature"] > 0:
        raise ConfigError("generate.temperature must be positive")
    if gen["cols"] is not None and (not isinstance(gen["cols"], int) or gen["cols"] < 1):
        raise ConfigError("generate.cols must be a positive integer or null")
    if not isinstance(gen["n_levels"], int) or gen["n_levels"] < 1:
        raise ConfigError("generate.n_levels must be a positive integer")
    for sec, keys in (("generator", ("layers", "hidden_units", "history_length", "epochs")),
                      ("translator", ("hidden_units", "layers", "epochs")), ("autoencoder", ("epochs", "batch_size"))):
        for k in keys:
            if not isinstance(cfg[sec][k], int) or cfg[sec][k] < 1:
                raise ConfigError(f"{sec}.{k} must be a positive integer")
    return cfg


def builtin_config_path(name="desk"):
    return resources.files("cte") / "data" / f"{name}.yaml"
