"""Domain types, training configuration and seeding.

The configuration file is a flat ``key = value`` text file. Blank lines and
lines starting with ``#`` are ignored, unknown keys are rejected and absent
keys take their defaults. Booleans accept ``true/false/yes/no/1/0``;
``image_size`` is written as ``HEIGHT,WIDTH``.
"""

from __future__ import annotations

import dataclasses
import enum
import os
import random
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import torch


class ConfigError(ValueError):
    """Raised for malformed config files or invalid configuration values."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class Domain(enum.Enum):
    ADVERSE = "A"
    NORMAL = "B"


@dataclass
class ImageBatch:
    """A batch of RGB images in ``[-1, 1]``, laid out ``(batch, height, width, 3)``."""

    data: np.ndarray
    domain: Domain

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4 or data.shape[-1] != 3:
            raise ValueError(f"expected (batch, height, width, 3), got {data.shape}")
        h, w = data.shape[1:3]
        if h % 4 or w % 4:
            raise ValueError(f"height and width must be divisible by 4, got {h}x{w}")
        if data.size and (data.min() < -1.0 or data.max() > 1.0):
            raise ValueError("image values must lie in [-1, 1]")
        self.data = data

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def to_tensor(self) -> torch.Tensor:
        """Channels-first float tensor for the networks."""
        return torch.from_numpy(np.ascontiguousarray(self.data.transpose(0, 3, 1, 2)))

    @classmethod
    def from_tensor(cls, t: torch.Tensor, domain: Domain) -> "ImageBatch":
        return cls(t.detach().cpu().numpy().transpose(0, 2, 3, 1), domain)


@dataclass(frozen=True)
class TrainConfig:
    lambda_rec: float = 10.0
    lambda_feat: float = 1.0
    lambda_cyc: float = 10.0
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 4
    iterations: int = 100_000
    image_size: tuple[int, int] = (256, 512)
    seed: int = 0
    sigma_floor: float = 1e-2
    use_tnet: bool = True
    use_uncertainty_loss: bool = True
    apply_tnet_in_cycle_B: bool = True
    checkpoint_every: int = 5000
    data_root_adverse: str = ""
    data_root_normal: str = ""
    output_dir: str = "runs/default"
    # 64 gives the canonical 64/128/256 encoder widths
    base_channels: int = 64
    lr_decay: bool = False
    random_crop: bool = False
    workers: int = 0

    def __post_init__(self):
        for key in ("lambda_rec", "lambda_feat", "lambda_cyc"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be >= 0, got {getattr(self, key)}", key)
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0", "learning_rate")
        for key in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, key) < 1:
                raise ConfigError(f"{key} must lie in [0, 1)", key)
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "batch_size")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0", "iterations")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1", "checkpoint_every")
        if self.sigma_floor <= 0:
            raise ConfigError("sigma_floor must be > 0", "sigma_floor")
        if self.use_uncertainty_loss and not self.use_tnet:
            raise ConfigError(
                "use_uncertainty_loss requires use_tnet (the uncertainty map is "
                "predicted from the transferred feature)",
                "use_uncertainty_loss",
            )
        if len(self.image_size) != 2 or any(s <= 0 or s % 32 for s in self.image_size):
            raise ConfigError(
                f"image_size must be two positive multiples of 32, got {self.image_size}",
                "image_size",
            )
        if self.base_channels < 2 or self.base_channels % 2:
            raise ConfigError("base_channels must be an even number >= 2", "base_channels")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0", "workers")

    def replace(self, **changes: Any) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def config_keys() -> list[str]:
    return list(_FIELDS)


def field_type(key: str) -> str:
    return _FIELDS[key].type


def parse_value(key: str, raw: str) -> Any:
    """Convert the text form of ``key`` into its typed value."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}", key)
    kind = _FIELDS[key].type
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        parts = raw.replace("x", ",").split(",")
        h, w = (int(p) for p in parts)
        return (h, w)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}", key) from None


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def config_from_mapping(values: Mapping[str, Any], base: TrainConfig | None = None) -> TrainConfig:
    """Build a config from typed or textual values layered over ``base``."""
    typed = {}
    for key, value in values.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}", key)
        typed[key] = parse_value(key, value) if isinstance(value, str) else value
    if "image_size" in typed:
        typed["image_size"] = tuple(typed["image_size"])
    try:
        return dataclasses.replace(base or TrainConfig(), **typed)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key)
        values[key] = raw
    return values


def load_config(path: str | os.PathLike, overrides: Mapping[str, Any] | None = None) -> TrainConfig:
    """Read a config file; ``overrides`` take precedence over file values."""
    with open(path, encoding="utf-8") as fh:
        values: dict[str, Any] = parse_config_text(fh.read())
    values.update(overrides or {})
    return config_from_mapping(values)


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.to_dict().items())


def save_config(cfg: TrainConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))


def seed_all(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
