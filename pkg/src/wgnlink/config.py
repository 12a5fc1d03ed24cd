"""Experiment configuration: YAML parsing, defaulting, and validation.

The config file is a YAML document with `link`, `pipeline`, `sweep`,
`seeds`, and output settings; every omitted field falls back to the
dataclass default and the applied defaults are logged at INFO level.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import LinkConfig
from .errors import ConfigError
from .pipeline import PipelineConfig

log = logging.getLogger(__name__)

SWEEP_AXES = ("recirculations", "launch_power_dbm", "snr_db")


@dataclass(frozen=True)
class ExperimentConfig:
    link: LinkConfig = field(default_factory=LinkConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sweep_axis: str = "recirculations"
    sweep_values: tuple = (1,)
    seeds: tuple = (1,)
    outputs: str = "results"
    emit_plots: bool = True
    n_samples: int = 8_000_000
    capture_rate: float = 40e9
    mean_power: float = 1.0
    base_recirculations: int = 1   # used when the sweep axis is not distance
    n_rings: int = 16
    mi_max_symbols: int = 500_000  # cap on samples fed to the MI estimator

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        if len(self.sweep_values) == 0:
            raise ConfigError("sweep value list is empty")
        if len(self.seeds) == 0:
            raise ConfigError("need at least one seed")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")

    def link_for(self, value) -> tuple[LinkConfig, int]:
        """Link config and recirculation count for one sweep point."""
        if self.sweep_axis == "recirculations":
            return self.link, int(value)
        if self.sweep_axis == "launch_power_dbm":
            return (dataclasses.replace(self.link, launch_power_dbm=float(value)),
                    self.base_recirculations)
        return (dataclasses.replace(self.link, span_snr_db=float(value)),
                self.base_recirculations)


def _build(cls, section: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {sorted(unknown)}")
    defaulted = known - set(section)
    if defaulted:
        log.info("%s: using defaults for %s", name, sorted(defaulted))
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} section: {exc}") from exc


def validate_config(path: str | Path) -> ExperimentConfig:
    """Parse, default, and invariant-check an experiment config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise ConfigError(f"YAML parse error{where}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    link = _build(LinkConfig, raw.pop("link", {}), "link")
    pipe = _build(PipelineConfig, raw.pop("pipeline", {}), "pipeline")

    sweep = raw.pop("sweep", None)
    if not isinstance(sweep, dict) or not sweep:
        raise ConfigError("config must contain a 'sweep' mapping")
    axes = [a for a in sweep if a in SWEEP_AXES]
    if len(axes) != 1 or set(sweep) - set(SWEEP_AXES):
        raise ConfigError(
            f"sweep must name exactly one of {SWEEP_AXES}, got {sorted(sweep)}")
    axis = axes[0]
    values = sweep[axis]
    if not isinstance(values, (list, tuple)) or len(values) == 0:
        raise ConfigError(f"sweep.{axis} must be a non-empty list")

    seeds = raw.pop("seeds", [1])
    if not isinstance(seeds, (list, tuple)) or len(seeds) == 0:
        raise ConfigError("seeds must be a non-empty list")

    extra = {}
    for key in ("outputs", "emit_plots", "n_samples", "capture_rate",
                "mean_power", "base_recirculations", "n_rings",
                "mi_max_symbols"):
        if key in raw:
            extra[key] = raw.pop(key)
    if raw:
        raise ConfigError(f"unknown top-level key(s): {sorted(raw)}")

    try:
        return ExperimentConfig(link=link, pipeline=pipe, sweep_axis=axis,
                                sweep_values=tuple(values),
                                seeds=tuple(int(s) for s in seeds), **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
