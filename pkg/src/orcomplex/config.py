"""Run configuration and generic dataclass <-> plain-data conversion."""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field

from . import io
from .hat import HatConfig
from .scene import BuildConfig, ModalityToggles
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    d_model: int = 64
    heads: int = 4
    d_r: int = 16
    layers: int = 2
    max_rank: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        self.hat()

    def hat(self) -> HatConfig:
        return HatConfig(self.d_model, self.heads, self.d_r, self.layers, self.max_rank)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 1
    lr: float = 1e-3
    lam_a: float = 1.0
    lam_p: float = 1.0
    lam_r: float = 1.0
    eval_every: int = 250
    # windows per split used for the periodic validation pass; 0 means all
    eval_windows: int = 0


@dataclass
class Paths:
    data: str = "data"
    checkpoint: str = "run/checkpoint.json"
    report: str = "run/report.json"


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    build: BuildConfig = field(default_factory=BuildConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    modality_toggles: ModalityToggles = field(default_factory=ModalityToggles)
    paths: Paths = field(default_factory=Paths)

    def to_dict(self) -> dict:
        return to_plain(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return from_plain(cls, d)

    def save(self, path) -> None:
        io.write(path, "run_config", self.to_dict())

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(io.read(path, "run_config"))


def to_plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    return obj


def from_plain(tp, value, where: str = "config"):
    """Rebuild ``value`` as type ``tp``, following dataclass field annotations."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp) if f.init}
        unknown = set(value) - names
        if unknown:
            raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
        kwargs = {k: from_plain(hints[k], v, f"{where}.{k}") for k, v in value.items()}
        try:
            return tp(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return from_plain(inner[0], value, where)
    if origin is list:
        _seq(value, where)
        return [from_plain(args[0], v, f"{where}[{i}]") for i, v in enumerate(value)]
    if origin is tuple:
        _seq(value, where)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(from_plain(args[0], v, where) for v in value)
        if len(args) != len(value):
            raise ConfigError(f"{where}: expected {len(args)} items, got {len(value)}")
        return tuple(from_plain(a, v, where) for a, v in zip(args, value))
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return {k: from_plain(args[1], v, f"{where}.{k}") for k, v in value.items()}
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def _seq(value, where: str) -> None:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{where}: expected a list")


# Cumulative modality rows of the incremental ablation, in table order.
ABLATION_ROWS: list[tuple[str, dict[str, bool]]] = [
    ("objects", dict(objects=True, skeletons=False, visual=False, robot_logs=False, audio=False, temporal=False)),
    ("+skeletons", dict(objects=True, skeletons=True, visual=False, robot_logs=False, audio=False, temporal=False)),
    ("+visual", dict(objects=True, skeletons=True, visual=True, robot_logs=False, audio=False, temporal=False)),
    ("+robot_logs", dict(objects=True, skeletons=True, visual=True, robot_logs=True, audio=False, temporal=False)),
    ("+audio", dict(objects=True, skeletons=True, visual=True, robot_logs=True, audio=True, temporal=False)),
    ("+temporal", dict(objects=True, skeletons=True, visual=True, robot_logs=True, audio=True, temporal=True)),
]
