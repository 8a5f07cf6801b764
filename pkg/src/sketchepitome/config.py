"""Pipeline configuration: defaults, JSON loading, validation.

A config file is a JSON object whose keys are a subset of the dataclass
fields below; missing keys fall back to the defaults, unknown keys are
rejected. CLI flags override file values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class PipelineConfig:
    side: int = 256
    battery: str = "std30"
    grid: int = 28
    patch: int = 32
    bins: int = 8
    pca_dim: int = 64
    gmm_components: int = 32
    variance_floor: float = 1e-4
    pca_sample: int = 200_000
    gmm_sample: int = 25_000
    kernel: str = "linear"
    c_grid: tuple = (0.1, 1.0, 10.0, 100.0)
    gamma_grid: tuple | None = None  # rbf default: (1/dim, 10/dim)
    folds: int = 5
    epochs: int = 20
    train_fraction: float = 0.8
    augment_train: bool = False
    seed: int = 7

    def validate(self) -> "PipelineConfig":
        positive_ints = (
            "side", "grid", "patch", "bins", "pca_dim", "gmm_components",
            "pca_sample", "gmm_sample", "folds", "epochs",
        )
        for name in positive_ints:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"config {name!r} must be a positive integer, got {v!r}")
        if self.variance_floor <= 0:
            raise ConfigError("config 'variance_floor' must be positive")
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError("config 'train_fraction' must be in (0, 1)")
        if self.kernel not in ("linear", "rbf"):
            raise ConfigError(f"config 'kernel' must be 'linear' or 'rbf', got {self.kernel!r}")
        if self.battery != "std30":
            raise ConfigError(f"unknown battery {self.battery!r}")
        if not self.c_grid or any(c <= 0 for c in self.c_grid):
            raise ConfigError("config 'c_grid' must be a non-empty list of positive values")
        if self.gamma_grid is not None and (
            not self.gamma_grid or any(g <= 0 for g in self.gamma_grid)
        ):
            raise ConfigError("config 'gamma_grid' must be null or positive values")
        if self.folds < 2:
            raise ConfigError("config 'folds' must be at least 2")
        if self.patch % 4 != 0:
            raise ConfigError("config 'patch' must be a multiple of 4")
        if self.grid > self.side:
            raise ConfigError("config 'grid' may not exceed 'side'")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c_grid"] = list(self.c_grid)
        d["gamma_grid"] = None if self.gamma_grid is None else list(self.gamma_grid)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "c_grid" in kwargs and kwargs["c_grid"] is not None:
            kwargs["c_grid"] = tuple(kwargs["c_grid"])
        if "gamma_grid" in kwargs and kwargs["gamma_grid"] is not None:
            kwargs["gamma_grid"] = tuple(kwargs["gamma_grid"])
        return cls(**kwargs).validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    """Load a config file, or the defaults when ``path`` is None."""
    if path is None:
        return PipelineConfig().validate()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must contain a JSON object")
    return PipelineConfig.from_dict(data)


def write_effective_config(config: PipelineConfig, path: str | Path) -> None:
    """Drop a provenance copy of the effective config next to an output."""
    Path(path).write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
