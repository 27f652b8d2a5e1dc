"""Run configuration: a sectioned key-value text file covering every module.

Each section maps onto one frozen dataclass. Values are parsed by the type of
the field's default, unknown sections or keys are errors, and
``dumps(loads(text))`` reproduces the same configuration.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .coredata import CoreConfig
from .correlate import CorrelateConfig
from .mlkit import ClassifierSpec
from .nudge import NudgeConfig
from .sim.scenario import ARMS, Settings, SimConfig
from .sim.world import WorldConfig
from .sleep import SleepConfig
from .trajectory import TrajectoryConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class PathsConfig:
    input: str = ""
    out: str = ""


@dataclass(frozen=True)
class SubjectsConfig:
    n: int = 4
    preset: str = "default"  # default | compliant | zero_noise | zero_drift
    irregular_fraction: float = 0.5


@dataclass(frozen=True)
class NoiseConfig:
    scale: float = 1.0


@dataclass(frozen=True)
class ArmsConfig:
    enabled: tuple[str, ...] = ARMS


@dataclass(frozen=True)
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    core: CoreConfig = field(default_factory=CoreConfig)
    sleep: SleepConfig = field(default_factory=SleepConfig)
    ml: ClassifierSpec = field(default_factory=ClassifierSpec)
    correlate: CorrelateConfig = field(default_factory=CorrelateConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    nudge: NudgeConfig = field(default_factory=NudgeConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    subjects: SubjectsConfig = field(default_factory=SubjectsConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    arms: ArmsConfig = field(default_factory=ArmsConfig)

    def settings(self) -> Settings:
        return Settings(
            core=self.core,
            sim=self.sim,
            sleep=self.sleep,
            spec=self.ml,
            correlate=self.correlate,
            trajectory=self.trajectory,
            nudge=self.nudge,
        )


SECTIONS = tuple(f.name for f in fields(RunConfig))


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse(raw: str, default: Any, where: str) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(p.strip() for p in raw.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep key case so typos are not silently folded
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    base = RunConfig()
    updates = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        current = getattr(base, section)
        known = {f.name for f in fields(current)}
        values = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse(raw, getattr(current, key), f"[{section}] {key}")
        try:
            updates[section] = replace(current, **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    cfg = replace(base, **updates)
    validate(cfg)
    return cfg


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def dumps(cfg: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def validate(cfg: RunConfig) -> None:
    bad = [a for a in cfg.arms.enabled if a not in ARMS]
    if bad:
        raise ConfigError(f"unknown arms: {', '.join(bad)}")
    if not cfg.arms.enabled:
        raise ConfigError("no arms enabled")
    if cfg.subjects.n < 1:
        raise ConfigError("an arm without subjects cannot run; set [subjects] n >= 1")
    if cfg.subjects.preset not in ("default", "compliant", "zero_noise", "zero_drift"):
        raise ConfigError(f"unknown subject preset {cfg.subjects.preset!r}")
    if cfg.trajectory.selection_strategy not in ("smallest_increase", "closest_to_gap"):
        raise ConfigError(f"unknown selection strategy {cfg.trajectory.selection_strategy!r}")
    if cfg.trajectory.edit_level not in ("token", "char"):
        raise ConfigError(f"unknown edit level {cfg.trajectory.edit_level!r}")
    if cfg.noise.scale < 0:
        raise ConfigError("noise scale must be non-negative")
