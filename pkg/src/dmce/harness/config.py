"""Experiment configuration: JSON file plus dotted-path overrides."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baselines import GMMConfig
from ..channels import ChannelModelConfig
from ..diffusion import NoiseSchedule, alpha_last_for_min_snr, make_schedule
from ..dmnet import DMNetConfig, TrainConfig

OUTPUT_ENV = "DMCE_OUTPUT_DIR"

DEFAULTS = {
    "seed": 0,
    "output_dir": "runs/desk",
    "channel": ChannelModelConfig().to_dict(),
    "schedule": {"T": 50, "alpha_first": 0.9999, "alpha_last": None, "min_snr_db": -15.0},
    "net": {k: v for k, v in DMNetConfig().to_dict().items() if k not in ("n_rx", "n_tx")},
    "train": TrainConfig().to_dict(),
    "gmm": {"n_components": 16, "max_iter": 100, "tol": 1e-6, "reg": 1e-6, "init_subsample": 2000,
            "zero_mean": False},
    "data": {"n_train": 20000, "n_test": 1000},
    "eval": {
        "snr_db": [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        "T_list": [10, 25, 50, 100],
        "T_snr_db": [10.0],
        "batch_size": 250,
    },
}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in out:
            raise KeyError(f"unknown config field '{where}'")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, where + ".")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[str, object]:
    """``"train.epochs=5"`` -> ``("train.epochs", 5)``; values are JSON, else strings."""
    if "=" not in text:
        raise ValueError(f"override must look like key.path=value, got '{text}'")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_override(d: dict, key: str, value) -> None:
    parts = key.split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise KeyError(f"unknown config field '{key}'")
        node = node[p]
    if parts[-1] not in node:
        raise KeyError(f"unknown config field '{key}'")
    node[parts[-1]] = value


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        grid = self.snr_grid
        if len(grid) == 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("SNR grid must be nonempty and strictly increasing")
        self.channel  # noqa: B018  (validates dimensions)
        self.train_config  # noqa: B018

    @classmethod
    def load(cls, path=None, overrides=(), output_dir=None) -> "ExperimentConfig":
        raw = copy.deepcopy(DEFAULTS)
        if os.environ.get(OUTPUT_ENV):
            raw["output_dir"] = os.environ[OUTPUT_ENV]
        if path is not None:
            with open(path) as f:
                raw = _merge(raw, json.load(f))
        for item in overrides:
            apply_override(raw, *(parse_override(item) if isinstance(item, str) else item))
        if output_dir is not None:
            raw["output_dir"] = str(output_dir)
        return cls(raw)

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for k, v in dotted.items():
            apply_override(raw, k.replace("__", "."), v)
        return ExperimentConfig(raw)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def channel(self) -> ChannelModelConfig:
        return ChannelModelConfig.from_dict(self.raw["channel"])

    @property
    def net(self) -> DMNetConfig:
        ch = self.channel
        return DMNetConfig.from_dict({**self.raw["net"], "n_rx": ch.n_rx, "n_tx": ch.n_tx})

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.raw["train"])

    @property
    def gmm(self) -> GMMConfig:
        return GMMConfig.from_dict(self.raw["gmm"])

    @property
    def T(self) -> int:
        return int(self.raw["schedule"]["T"])

    def schedule(self, T: int | None = None) -> NoiseSchedule:
        """Noise schedule for ``T`` steps (default: the configured ``T``).

        Without an explicit ``alpha_last`` the last endpoint is solved so
        that the final step sits at ``min_snr_db``.
        """
        s = self.raw["schedule"]
        T = self.T if T is None else int(T)
        alpha_last = s.get("alpha_last")
        if alpha_last is None:
            alpha_last = alpha_last_for_min_snr(T, s["alpha_first"], s["min_snr_db"])
        return make_schedule(T, s["alpha_first"], alpha_last)

    @property
    def snr_grid(self) -> np.ndarray:
        return np.asarray(self.raw["eval"]["snr_db"], dtype=float)

    @property
    def n_train(self) -> int:
        return int(self.raw["data"]["n_train"])

    @property
    def n_test(self) -> int:
        return int(self.raw["data"]["n_test"])

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)

    def hash(self) -> str:
        """Short digest of everything except the output location."""
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:12]
