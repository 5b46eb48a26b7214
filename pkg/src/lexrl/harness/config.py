"""Run configuration: an INI file with one section per component.

Every key maps onto a dataclass field; unknown sections or keys are errors.

    [environment]   CartPoleParams fields
    [trainer]       TrainerConfig fields (minus schedules/seed) + lagrangian_weights, train_lagrangian
    [schedule]      ScheduleConfig fields
    [agent]         thresholds = 0.05, 0.05
    [evaluation]    episodes, position_bins, angle_bins, restart_on_terminal
    [run]           seed, out
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..cartpole import CartPoleParams
from ..neural import ScheduleConfig
from ..training import TrainerConfig


class ConfigError(ValueError):
    pass


def _default_position_bins() -> tuple[float, ...]:
    return tuple(np.round(np.linspace(-0.5, 0.5, 11), 10))


def _default_angle_bins() -> tuple[float, ...]:
    return tuple(np.round(np.linspace(-0.15, 0.15, 11), 10))


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 100
    position_bins: tuple[float, ...] = field(default_factory=_default_position_bins)
    angle_bins: tuple[float, ...] = field(default_factory=_default_angle_bins)
    restart_on_terminal: bool = False

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("evaluation episodes must be at least 1")
        for name in ("position_bins", "angle_bins"):
            edges = tuple(float(e) for e in getattr(self, name))
            if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
                raise ConfigError(f"{name} must be at least two strictly increasing edges")
            object.__setattr__(self, name, edges)


@dataclass(frozen=True)
class RunConfig:
    environment: CartPoleParams = field(default_factory=CartPoleParams)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    thresholds: tuple[float, ...] = (0.05, 0.05)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    lagrangian_weights: tuple[float, ...] = (1.0, 5.0, 25.0)
    train_lagrangian: bool = False
    seed: int = 0
    out: str = "runs/default"

    @property
    def num_channels(self) -> int:
        return 3

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _coerce(text: str, default: Any, optional: bool = False):
    if optional and text.strip().lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        return float(text)
    if isinstance(default, tuple):
        return _parse_floats(text)
    return text.strip()


def _typed_fields(cls, skip=()) -> dict[str, tuple[Any, bool]]:
    """``name -> (default, accepts None)`` for every field of a dataclass."""
    instance = cls()
    return {
        f.name: (getattr(instance, f.name), "None" in str(f.type))
        for f in dataclasses.fields(cls)
        if f.name not in skip
    }


def _section_values(parser, section: str, fields: dict, extra: dict | None = None) -> tuple[dict, dict]:
    """Typed values of ``section``; keys listed in ``extra`` are returned separately."""
    extra = extra or {}
    values, extras = {}, {}
    if not parser.has_section(section):
        return values, extras
    for key, text in parser.items(section):
        if key in fields:
            target, (default, optional) = values, fields[key]
        elif key in extra:
            target, (default, optional) = extras, (extra[key], False)
        else:
            raise ConfigError(f"[{section}] unknown key '{key}'")
        try:
            target[key] = _coerce(text, default, optional)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return values, extras


_SECTIONS = {"environment", "trainer", "schedule", "agent", "evaluation", "run"}
_TRAINER_EXTRA = {"lagrangian_weights": (1.0, 5.0, 25.0), "train_lagrangian": False}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__no_defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(parser.sections()) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")

    env, _ = _section_values(parser, "environment", _typed_fields(CartPoleParams))
    schedule, _ = _section_values(parser, "schedule", _typed_fields(ScheduleConfig))
    trainer, extra = _section_values(
        parser, "trainer", _typed_fields(TrainerConfig, skip=("schedules", "seed")), _TRAINER_EXTRA
    )
    agent, _ = _section_values(parser, "agent", {"thresholds": ((0.05, 0.05), False)})
    evaluation, _ = _section_values(parser, "evaluation", _typed_fields(EvalConfig))
    run, _ = _section_values(parser, "run", {"seed": (0, False), "out": ("runs/default", False)})

    try:
        seed = run.get("seed", 0)
        return RunConfig(
            environment=CartPoleParams(**env),
            trainer=TrainerConfig(**trainer, schedules=ScheduleConfig(**schedule), seed=seed),
            evaluation=EvalConfig(**evaluation),
            **agent,
            **run,
            **extra,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if value is None:
        return "none"
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Render ``cfg`` back to INI text that :func:`parse_config` accepts."""
    lines = ["[environment]"]
    lines += [f"{f.name} = {_fmt(getattr(cfg.environment, f.name))}" for f in dataclasses.fields(CartPoleParams)]
    lines += ["", "[trainer]"]
    for f in dataclasses.fields(TrainerConfig):
        if f.name in ("schedules", "seed"):
            continue
        lines.append(f"{f.name} = {_fmt(getattr(cfg.trainer, f.name))}")
    lines.append(f"lagrangian_weights = {_fmt(cfg.lagrangian_weights)}")
    lines.append(f"train_lagrangian = {_fmt(cfg.train_lagrangian)}")
    lines += ["", "[schedule]"]
    lines += [f"{f.name} = {_fmt(getattr(cfg.trainer.schedules, f.name))}" for f in dataclasses.fields(ScheduleConfig)]
    lines += ["", "[agent]", f"thresholds = {_fmt(cfg.thresholds)}"]
    lines += ["", "[evaluation]"]
    lines += [f"{f.name} = {_fmt(getattr(cfg.evaluation, f.name))}" for f in dataclasses.fields(EvalConfig)]
    lines += ["", "[run]", f"seed = {cfg.seed}", f"out = {cfg.out}", ""]
    return "\n".join(lines)
