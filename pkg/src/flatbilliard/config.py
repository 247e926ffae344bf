"""Experiment configuration: flat key=value files with # comments, overridable by flags."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class ExperimentConfig:
    beta: float = 6.0
    epsilon: float = 0.4
    half_width: float = 0.75
    closure_slack: float = 5.0
    variant: str = "full"
    seed: int = 2024
    samples: int = 100_000_000
    orbit_length: int = 10_000_000
    n_max: int = 100_000
    r0: float | None = None  # scan line; None means just outside the window
    output_dir: str = "out"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if not self.beta > 2:
            raise ConfigError(f"beta must exceed 2, got {self.beta}")
        for name in ("epsilon", "half_width", "closure_slack", "samples", "orbit_length", "n_max", "workers"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not self.epsilon < self.half_width:
            raise ConfigError("epsilon must be smaller than half_width")
        if self.variant not in ("full", "half"):
            raise ConfigError(f"variant must be 'full' or 'half', got {self.variant!r}")
        if self.r0 is not None and not self.r0 >= 0:
            raise ConfigError("r0 must be non-negative")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float | None":
            return None if raw.lower() in ("", "none") else float(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r}") from e
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for i, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{i}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{source}:{i}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {p}: {e}") from e
        values.update(parse_config_text(text, str(p)))
    for k, v in (overrides or {}).items():
        if v is not None:
            if k not in _TYPES:
                raise ConfigError(f"unknown setting {k!r}")
            values[k] = v
    return ExperimentConfig(**values).validate()


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        lines.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
