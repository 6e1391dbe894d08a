"""Pipeline configuration stored as flat ``key = value`` text."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Mapping

from .symmetry import AXIS_STRATEGIES, DECOMPOSE_REGIONS, SPLIT_MODES

__all__ = ["ConfigError", "PipelineConfig", "parse_config", "dump_config", "load_kv"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = 0.5
    beta: float = 0.6
    tau: float = 0.5
    epsilon: float = 1e-8
    initial_ratio: float = 0.5
    final_ratio: float = 1.0
    lambda_max: float = 1.0
    total_steps: int = 10000
    ema_momentum: float = 0.99
    axis_kind: str = "long"
    split_mode: str = "perpendicular"
    decompose_region: str = "full"
    dice_weight: float = 0.5
    bce_weight: float = 0.5
    spacing: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for key in ("alpha", "beta", "tau", "initial_ratio", "final_ratio"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{key} must lie in [0, 1], got {v}", key)
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}", "epsilon")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}", "total_steps")
        if not 0.0 <= self.ema_momentum < 1.0:
            raise ConfigError(f"ema_momentum must lie in [0, 1), got {self.ema_momentum}", "ema_momentum")
        for key in ("dice_weight", "bce_weight", "lambda_max"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be nonnegative", key)
        if not self.spacing > 0:
            raise ConfigError(f"spacing must be positive, got {self.spacing}", "spacing")
        if self.axis_kind not in AXIS_STRATEGIES:
            raise ConfigError(f"axis_kind must be one of {AXIS_STRATEGIES}", "axis_kind")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}", "split_mode")
        if self.decompose_region not in DECOMPOSE_REGIONS:
            raise ConfigError(f"decompose_region must be one of {DECOMPOSE_REGIONS}", "decompose_region")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw) -> object:
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}", key) from None
    return raw.strip()


def load_kv(path) -> dict[str, str]:
    """Read ``key = value`` lines. Blank lines and ``#`` comments are ignored."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def parse_config(path=None, overrides: Mapping[str, object] | None = None) -> PipelineConfig:
    """Defaults, then file values, then non-None ``overrides`` (highest precedence)."""
    values: dict[str, object] = {}
    if path is not None:
        values.update(load_kv(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    unknown = sorted(set(values) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}", unknown[0])
    return PipelineConfig(**{k: _coerce(k, v) for k, v in values.items()})


def dump_config(cfg: PipelineConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)!r}\n".replace("'", "") for f in fields(cfg))
