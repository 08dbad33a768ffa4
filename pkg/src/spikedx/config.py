"""Run configuration and seed derivation."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .decoding import DECODERS
from .errors import InvalidConfig
from .gsn import GsnConfig
from .wta_network import NetworkConfig

SEED_ENV = "SPIKEDX_SEED"


@dataclass
class RunConfig:
    seed: int = 0
    # data source: a CSV path, or the synthetic generator below
    data: str | None = None
    n_majority: int = 150
    n_minority: int = 10
    n_features: int = 11
    n_informative: int | None = None
    separation: float = 2.0
    # preprocessing
    variance_threshold: float = 0.002
    top_k: int = 11
    mi_bins: int = 8
    # GSN encoding
    som_grid: tuple[int, int] = (6, 4)
    som_epochs: int = 5
    som_lr: float = 0.05
    som_scope: str = "fold"  # "fold" (train split only) or "global"
    glyph_size_frac: tuple[float, float] = (0.05, 0.25)
    layout: str | None = None  # reuse a saved layout instead of training the SOM
    # network
    topology: str = "default"  # default | literal16 | reduced
    hidden_per_tile: int | None = None
    output_neurons: int | None = None
    learning_rate: float = 0.01
    w_min: float = -5.0
    w_max: float = 5.0
    init_low: float | None = None
    init_high: float | None = None
    top_down_enabled: bool = False
    top_down_gain: float = 1.0
    stdp_window_ms: float = 10.0
    rate_hz: float = 200.0
    presentation_ms: float = 150.0
    dt_ms: float = 1.0
    background_rate_hz: float = 0.0
    complement_channels: bool = False
    psp_mode: str = "trace"
    epochs: int = 1
    allow_untrained: bool = False
    # evaluation
    folds: int = 4
    alpha_grid: list = field(default_factory=lambda: ["native", 0.33, 0.66, 1.0])
    decoders: list = field(default_factory=lambda: list(DECODERS))
    logistic_eta: float = 0.05
    logistic_standardize: bool = False
    z_source: str = "train"  # "train" or "test" (reproduces the test-set bias)
    bias_subset_sizes: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    bias_repetitions: int = 1
    bias_decoder: str = "class_average"
    bias_z_source: str = "test"  # the bias experiment scores against its own subset by default
    ablation_groups: dict = field(default_factory=dict)
    ablation_alpha: Any = "native"
    ksweep_max: int = 20
    ksweep_epochs: int = 30
    jobs: int = 1

    def __post_init__(self):
        self.som_grid = tuple(int(v) for v in self.som_grid)
        self.glyph_size_frac = tuple(float(v) for v in self.glyph_size_frac)

    def validate(self) -> None:
        unknown = [d for d in self.decoders if d not in DECODERS]
        if unknown:
            raise InvalidConfig(f"unknown decoder(s) {unknown}; choose from {list(DECODERS)}")
        if not self.decoders:
            raise InvalidConfig("decoder list is empty")
        if self.som_scope not in ("fold", "global"):
            raise InvalidConfig("som_scope must be 'fold' or 'global'")
        if self.z_source not in ("train", "test"):
            raise InvalidConfig("z_source must be 'train' or 'test'")
        if self.bias_z_source not in ("train", "test"):
            raise InvalidConfig("bias_z_source must be 'train' or 'test'")
        if len(self.som_grid) != 2 or min(self.som_grid) < 1:
            raise InvalidConfig(f"som_grid must be two positive integers, got {list(self.som_grid)}")
        for a in self.alpha_grid:
            if a != "native" and not (isinstance(a, (int, float)) and 0 < a <= 1):
                raise InvalidConfig(f"alpha grid entry {a!r} must be 'native' or in (0, 1]")
        if self.folds < 2:
            raise InvalidConfig("folds must be >= 2")
        self.network_config().validate()

    def network_config(self) -> NetworkConfig:
        overrides = {
            k: getattr(self, k)
            for k in (
                "learning_rate", "w_min", "w_max", "init_low", "init_high", "top_down_enabled",
                "top_down_gain", "stdp_window_ms", "rate_hz", "presentation_ms", "dt_ms",
                "background_rate_hz", "complement_channels", "psp_mode",
            )
        }
        for k in ("hidden_per_tile", "output_neurons"):
            if getattr(self, k) is not None:
                overrides[k] = getattr(self, k)
        return NetworkConfig.preset(self.topology, **overrides)

    def gsn_config(self) -> GsnConfig:
        return GsnConfig(
            image_dims=self.network_config().image_dims,
            som_grid=self.som_grid,
            som_epochs=self.som_epochs,
            som_lr=self.som_lr,
            size_frac=self.glyph_size_frac,
        )

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, values: dict) -> RunConfig:
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise InvalidConfig(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**values)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """JSON config file, then overrides (flags win), then the seed env fallback."""
    values: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from None
        if not isinstance(values, dict):
            raise InvalidConfig(f"{path}: top level must be an object")
    seed_given = "seed" in values or (overrides and "seed" in overrides)
    values.update(overrides or {})
    if not seed_given and os.environ.get(SEED_ENV):
        values["seed"] = int(os.environ[SEED_ENV])
    return RunConfig.from_dict(values)


def derive_seed(master: int, component: str, *coords) -> int:
    """64-bit stream seed from the master seed, a component name and cell coordinates."""
    key = ":".join([str(int(master)), component, *(str(c) for c in coords)])
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


def rng_for(master: int, component: str, *coords) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, component, *coords))
