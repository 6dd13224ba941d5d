"""Experiment configuration: schema, presets and file loading.

A configuration is a TOML or JSON document.  Only ``target``, ``method``
and ``seeds`` are needed; everything else defaults to paper scale.  The
``smoke`` preset scales every chain-iteration count down to 10%.
Keys set explicitly in the file always win over the preset.

Example (TOML)::

    method = "rlmh"
    seeds = [0, 1, 2]

    [target]
    family = "bimodal"
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .targets import ReferenceSample, Target, load_reference_samples, make_builtin_target

METHODS = ("rlmh", "arwmh", "amala")
PRESETS = ("paper", "smoke")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TargetSpec(_Strict):
    family: str
    params: dict[str, Any] = Field(default_factory=dict)
    reference: Optional[str] = None
    n_reference: int = Field(10_000, ge=2)
    reference_seed: int = 20240101

    def build(self) -> Target:
        return make_builtin_target(self.family, **self.params)


class WarmSettings(_Strict):
    m: int = Field(10_000, ge=9)
    beta: float = Field(0.6, gt=0, lt=1)


class RlmhSettings(_Strict):
    episodes: int = Field(100, ge=1)
    steps_per_episode: int = Field(500, ge=1)
    hidden: tuple[int, ...] = (32,)
    radius: float = Field(10.0, gt=0)
    pretrain_threshold: float = 1.0
    pretrain_epochs: int = Field(2000, ge=0)
    clip: Optional[float] = Field(None, gt=0)
    schedule: Literal["practice", "theory"] = "practice"
    alpha0: float = Field(1e-6, gt=0)
    kappa: float = 1.1
    gamma: float = Field(0.99, ge=0, le=1)
    batch_size: int = Field(64, ge=1)
    critic_lr: float = Field(1e-3, gt=0)
    tau: float = Field(1e-3, gt=0, le=1)
    buffer_capacity: int = Field(1_000_000, ge=1)
    critic_hidden: tuple[int, ...] = (8,)
    cap_critic_lr: bool = True
    r_min: float = -50.0


class ArwmhSettings(_Strict):
    n_iter: int = Field(60_000, ge=1)
    beta: float = Field(0.6, gt=0, lt=1)


class AmalaSettings(_Strict):
    eps0: float = Field(1.0, gt=0)
    n_epochs: int = Field(10, ge=1)
    warm_epoch_length: int = Field(1000, ge=2)
    final_epoch_length: int = Field(51_000, ge=2)
    blend: float = Field(0.3, ge=0, le=1)


class ExperimentConfig(_Strict):
    target: TargetSpec
    method: Union[Literal["rlmh", "arwmh", "amala"],
                  list[Literal["rlmh", "arwmh", "amala"]]] = "rlmh"
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    preset: Literal["paper", "smoke"] = "paper"
    n_eval: int = Field(5000, ge=2)
    output_dir: str = "runs"
    warm: WarmSettings = WarmSettings()
    rlmh: RlmhSettings = RlmhSettings()
    arwmh: ArwmhSettings = ArwmhSettings()
    amala: AmalaSettings = AmalaSettings()

    @field_validator("seeds")
    @classmethod
    def _unique_seeds(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        return v

    @property
    def methods(self) -> list[str]:
        return [self.method] if isinstance(self.method, str) else list(self.method)


# iteration counts scaled by the smoke preset, as (section, key) paths
_ITERATION_KEYS = [
    (None, "n_eval"), ("warm", "m"), ("rlmh", "episodes"), ("arwmh", "n_iter"),
    ("amala", "warm_epoch_length"), ("amala", "final_epoch_length"),
]


def preset_defaults(preset: str) -> dict:
    """Nested dict of the defaults a preset changes."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if preset == "paper":
        return {}
    base = ExperimentConfig.model_fields
    out: dict = {}
    for section, key in _ITERATION_KEYS:
        if section is None:
            value = base[key].default
            out[key] = max(2, value // 10)
        else:
            value = getattr(base[section].default, key)
            out.setdefault(section, {})[key] = max(2, value // 10)
    return out


def _merge(defaults: dict, explicit: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in explicit.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class ConfigError(ValueError):
    """Schema violation; the message names each offending key path."""


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def config_from_dict(data: dict, preset: str | None = None) -> ExperimentConfig:
    """Validate ``data``; ``preset`` (if given) overrides ``data['preset']``."""
    data = dict(data)
    if preset is not None:
        data["preset"] = preset
    chosen = data.get("preset", "paper")
    if chosen not in PRESETS:
        raise ConfigError(f"preset: unknown preset {chosen!r}")
    merged = _merge(preset_defaults(chosen), data)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def parse_config(path, preset: str | None = None) -> ExperimentConfig:
    """Load a ``.toml`` or ``.json`` experiment file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        data = tomllib.loads(text)
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a table/object")
    cfg = config_from_dict(data, preset)
    ref = cfg.target.reference
    if ref is not None and not Path(ref).is_absolute():
        # reference paths are relative to the config file
        spec = cfg.target.model_copy(update={"reference": str(path.parent / ref)})
        cfg = cfg.model_copy(update={"target": spec})
    return cfg


def load_reference(spec: TargetSpec, target: Target):
    """Reference sample for MMD: the configured CSV, else exact draws."""
    if spec.reference is not None:
        ref = load_reference_samples(spec.reference)
        if ref.dim != target.dim:
            raise ValueError(f"reference sample has {ref.dim} columns, target has d={target.dim}")
        return ref
    rng = np.random.default_rng(spec.reference_seed)
    return ReferenceSample(target.sample(spec.n_reference, rng),
                           source=f"exact draws (seed {spec.reference_seed})")
