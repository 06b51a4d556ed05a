"""Run configuration: nested dataclasses loaded from JSON with unknown keys rejected."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .autoencoder import AutoencoderSpec
from .losses import LossWeights
from .optim import Schedule


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    n_scenes: int = 8
    scene_seed: int = 0  # scenes use seeds scene_seed .. scene_seed + n_scenes - 1
    difficulty: int = 1
    views: int = 60
    extent: int = 64
    real_count: int = 512
    real_dir: typing.Optional[str] = None
    # disjoint scenes used to pretrain the baseline autoencoder
    ae_scenes: int = 8
    ae_scene_seed: int = 1000


@dataclass
class FieldConfig:
    features: int = 16
    resolution: int = 64
    decoder_width: int = 64
    mlp_width: int = 128
    mlp_hidden: int = 4
    pe_order: int = 6


def _sched(base, gamma=1.0, xi=1.0):
    return field(default_factory=lambda: Schedule(base, gamma, xi))


@dataclass
class Rates:
    encoder: Schedule = _sched(1e-3, 0.988)
    decoder: Schedule = _sched(1e-3, 0.988)
    triplane: Schedule = _sched(1e-2, 0.988)
    # latent NeRF backends (base rates; xi is set per stage)
    nerf_triplane: Schedule = _sched(2e-2)
    nerf_mlp: Schedule = _sched(5e-3)
    nerf_decoder: Schedule = _sched(1e-4, 0.9996)
    ae_pretrain: Schedule = _sched(2e-3, 0.9)


@dataclass
class StageFactors:
    """Learning-rate modulation per backend: (LS, align)."""
    triplane: typing.Tuple[float, float] = (0.1, 0.1)
    mlp: typing.Tuple[float, float] = (0.1, 1.0)


@dataclass
class TrainConfig:
    seed: int = 0
    # IG-AE
    pretrain_epochs: int = 20
    joint_epochs: int = 30
    batch_views: int = 4
    batch_real: int = 2
    no_3d: bool = False
    no_pr: bool = False
    weights: LossWeights = field(default_factory=LossWeights)
    # latent NeRF
    ls_iters: int = 2000
    align_iters: int = 3000
    nerf_batch: int = 4
    xi: StageFactors = field(default_factory=StageFactors)
    # baseline AE
    ae_steps: int = 3000
    ae_batch: int = 8
    # rendering
    samples_train: int = 48
    samples_eval: int = 96
    # consistency probe
    probe_iters: int = 400
    log_every: int = 25
    rates: Rates = field(default_factory=Rates)

    def __post_init__(self):
        for name in ("joint_epochs", "batch_views", "ls_iters", "align_iters", "nerf_batch"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    ae: AutoencoderSpec = field(default_factory=AutoencoderSpec)
    fields: FieldConfig = field(default_factory=FieldConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return _to_plain(self)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for key, val in data.items():
        tp = hints[key]
        sub = f"{path}.{key}" if path else key
        kwargs[key] = _coerce(tp, val, sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def _coerce(tp, val, path):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, val, path)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if val is None:
            return None
        return _coerce(args[0], val, path)
    if origin in (tuple, list) or tp in (tuple, list):
        if not isinstance(val, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(val)
    if tp is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return val
    if tp is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}: expected an integer")
        return val
    if tp is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(val)
    if tp is str:
        if not isinstance(val, str):
            raise ConfigError(f"{path}: expected a string")
        return val
    return val


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
