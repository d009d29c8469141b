"""Run configuration: one flat key-value document covering every tunable.

Keys are ``section.field`` with sections ``loss`` (:class:`LossConfig`),
``scene`` (:class:`SceneSpec`), ``train`` (:class:`TrainConfig`), ``eval`` and
``output``. Values come from three layers, highest precedence first: CLI
overrides, a JSON config file, built-in defaults. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from harmonic3d.detector import SceneSpec, TrainConfig
from harmonic3d.evaluation import IOU_KINDS
from harmonic3d.losses import LossConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = (0.7, 0.5)
    iou_kind: str = "bev"

    def __post_init__(self):
        if self.iou_kind not in IOU_KINDS:
            raise ValueError(f"iou_kind must be one of {IOU_KINDS}, got {self.iou_kind!r}")
        if not self.thresholds or any(not 0.0 <= float(t) <= 1.0 for t in self.thresholds):
            raise ValueError(f"thresholds must be a nonempty list in [0, 1], got {self.thresholds!r}")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"


SECTIONS = {
    "loss": LossConfig,
    "scene": SceneSpec,
    "train": TrainConfig,
    "eval": EvalConfig,
    "output": OutputConfig,
}


@dataclass(frozen=True)
class RunConfig:
    loss: LossConfig = LossConfig()
    scene: SceneSpec = SceneSpec()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()
    output: OutputConfig = OutputConfig()

    def to_flat(self) -> dict:
        out = {}
        for sec in SECTIONS:
            for k, v in dataclasses.asdict(getattr(self, sec)).items():
                out[f"{sec}.{k}"] = list(v) if isinstance(v, tuple) else v
        return out


def default_flat() -> dict:
    return RunConfig().to_flat()


def _coerce(key: str, value: Any, default: Any) -> Any:
    """Match ``value`` to the type of the default; JSON lists become tuples."""
    if isinstance(default, (tuple, list)):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def build(*layers: Optional[Mapping[str, Any]]) -> RunConfig:
    """Merge flat layers over the defaults; later layers win."""
    flat = default_flat()
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            if key not in flat:
                raise ConfigError(f"unknown config key {key!r}")
            flat[key] = _coerce(key, value, flat[key])
    parts = {sec: {} for sec in SECTIONS}
    for key, value in flat.items():
        sec, name = key.split(".", 1)
        parts[sec][name] = tuple(value) if isinstance(value, list) else value
    try:
        return RunConfig(**{sec: cls(**parts[sec]) for sec, cls in SECTIONS.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load_file(path: Union[str, Path]) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object of key-value pairs")
    return data


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` where value is JSON, or a bare string when not valid JSON."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def resolve(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    return build(load_file(path) if path else None, overrides)
