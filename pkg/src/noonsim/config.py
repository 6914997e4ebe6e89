"""Experiment configuration and the flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

SOURCES = ("single", "noon", "coherent")
STAGES = ("before", "after")
DETECTOR_SETS = ("d1d2", "d3d4")

# timing of the source and memory cycle; recorded, never used in the physics
METADATA_KEYS = ("repetition_rate_hz", "cycle_ns", "cycles_per_period", "pulse_ns", "delta2_mhz")


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    beta: float = 0.2
    tau_ns: float = 20.0
    mode_mismatch: float = 0.83
    det_efficiency: float = 1.0
    background: float = 0.0
    theta_points: int = 64
    theta_max: float = math.pi
    delta_t_max_ns: float = 100.0
    delta_t_step_ns: float = 10.0
    trials_per_point: int = 20000
    seed: int = 2017
    stage: str = "before"
    source: str = "noon"
    detectors: str = "d1d2"
    coherent_amplitude: float = 0.3
    storage_time_ns: float = 0.0
    gate_enabled: bool = True
    leak_fraction: float = 1.0
    phase_jitter: float = 0.0
    max_total_photons: int = 4
    noiseless: bool = False
    repetition_rate_hz: float = 100.0
    cycle_ns: float = 500.0
    cycles_per_period: int = 2800
    pulse_ns: float = 70.0
    delta2_mhz: float = 70.0

    def __post_init__(self):
        for key in ("beta", "mode_mismatch", "det_efficiency", "background", "leak_fraction"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(key, f"must be in [0, 1], got {v}")
        for key in ("tau_ns", "theta_max", "delta_t_max_ns", "delta_t_step_ns"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, "must be positive")
        for key in ("theta_points", "trials_per_point"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be at least 1")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
        if self.max_total_photons < 2:
            raise ConfigError("max_total_photons", "must be at least 2")
        if self.coherent_amplitude < 0:
            raise ConfigError("coherent_amplitude", "must be nonnegative")
        if self.phase_jitter < 0:
            raise ConfigError("phase_jitter", "must be nonnegative")
        if self.storage_time_ns < 0:
            raise ConfigError("storage_time_ns", "must be nonnegative")
        for key, allowed in (("source", SOURCES), ("stage", STAGES), ("detectors", DETECTOR_SETS)):
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {', '.join(allowed)}")

    @property
    def theta_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.theta_max, self.theta_points, endpoint=False)

    @property
    def delta_t_grid(self) -> np.ndarray:
        n = int(round(self.delta_t_max_ns / self.delta_t_step_ns))
        return self.delta_t_step_ns * np.arange(-n, n + 1, dtype=float)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, raw):
    kind = _FIELD_TYPES[key]
    text = str(raw).strip()
    try:
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {kind}") from None


def read_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def parse_config(path=None, overrides=None) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``overrides``; unknown keys are rejected."""
    merged = {}
    if path is not None:
        merged.update(read_config_file(path))
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    values = {}
    for key, raw in merged.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown configuration key")
        values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def format_config(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {_render(v)}\n" for k, v in config.items())


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
