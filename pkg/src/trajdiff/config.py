"""Run configuration: a YAML file validated against a versioned JSON schema."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, fields
from pathlib import Path

import jsonschema
import yaml

from .diffusion import SAMPLERS, DiffusionSchedule
from .predictor import ModelConfig
from .refinement import PursuitConfig
from .scene import GraphConfig
from .training import TrainConfig

SCHEMA_VERSION = 1
ENV_OUT = "TRAJDIFF_OUT"
ENV_THREADS = "TRAJDIFF_THREADS"


_JSON_TYPES = {"int": "integer", "float": "number", "bool": "boolean", "str": "string"}


def _props(cls, overrides=None):
    """Object schema with one property per dataclass field."""
    out = {}
    for f in fields(cls):
        name = f.type if isinstance(f.type, str) else f.type.__name__
        if name.startswith("Optional["):
            out[f.name] = {"type": [_JSON_TYPES[name[9:-1]], "null"]}
        else:
            out[f.name] = {"type": _JSON_TYPES[name]}
    out.update(overrides or {})
    return {"type": "object", "properties": out, "additionalProperties": False}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "trajdiff run configuration",
    "type": "object",
    "required": ["version", "dataset"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "dataset": {
            "type": "object",
            "required": ["path"],
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string", "minLength": 1},
                "val_path": {"type": "string"},
                "profile": {"enum": ["highway", "roundabout"]},
                "stride": {"type": "integer", "minimum": 1},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "lane_spacing": {"type": "number", "exclusiveMinimum": 0},
                "lane_k": {"type": "integer", "minimum": 1},
            },
        },
        "model": _props(ModelConfig, {"profile": {"enum": ["highway", "roundabout"]},
                                      "hidden": {"type": "integer", "minimum": 1}}),
        "train": _props(TrainConfig, {"p_drop": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}}),
        "diffusion": _props(DiffusionSchedule, {"sampler": {"enum": list(SAMPLERS)},
                                                "steps": {"type": "integer", "minimum": 1},
                                                "eta": {"type": "number", "minimum": 0, "maximum": 1}}),
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w": {"type": "number", "minimum": 0, "maximum": 1},
                "weights": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "n_samples": {"type": "integer", "minimum": 1},
                "variant": {"enum": ["full", "no_motion_model", "refined"]},
            },
        },
        "motion_models": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"vehicle": {"enum": ["point_mass"]}, "pedestrian": {"enum": ["neural_ode"]}},
        },
        "refinement": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "lookahead": {"type": "number", "exclusiveMinimum": 0},
                "speed_gain": {"type": "number", "minimum": 0},
                "exponent": {"enum": [1, 2]},
            },
        },
    },
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.field_path = path


def _field_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = [r for r in err.validator_value if r not in (err.instance or {})]
        parts += missing[:1]
    elif err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts += extra[:1]
    return ".".join(parts)


def validate(data: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), _field_path(e)))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _field_path(err))


@dataclass
class RunConfig:
    raw: dict
    text: str
    base_dir: Path

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.from_text(text, path.parent)

    @classmethod
    def from_text(cls, text: str, base_dir=".") -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        validate(data)
        return cls(data, text, Path(base_dir))

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "RunConfig":
        return cls.from_text(yaml.safe_dump(data, sort_keys=False), base_dir)

    def section(self, name: str) -> dict:
        return copy.deepcopy(self.raw.get(name, {}))

    def resolve(self, p: str) -> Path:
        p = Path(os.path.expanduser(p))
        return p if p.is_absolute() else self.base_dir / p

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def threads(self) -> int:
        return int(os.environ.get(ENV_THREADS, self.raw.get("threads", 1)))

    @property
    def output_dir(self) -> Path:
        return self.resolve(os.environ.get(ENV_OUT, self.raw.get("output_dir", "runs/default")))

    @property
    def profile(self) -> str:
        return self.raw["dataset"].get("profile", self.raw.get("model", {}).get("profile", "highway"))

    def graph_config(self) -> GraphConfig:
        ds = self.raw["dataset"]
        default = GraphConfig()
        return GraphConfig(ds.get("radius", default.radius), ds.get("lane_spacing", default.lane_spacing),
                           ds.get("lane_k", default.lane_k))

    def model_config(self) -> ModelConfig:
        model = self.section("model")
        model.setdefault("profile", self.profile)
        if model["profile"] != self.profile:
            raise ConfigError(f"model profile {model['profile']!r} differs from dataset profile {self.profile!r}",
                              "model.profile")
        return ModelConfig(**model)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{"threads": self.threads, **self.section("train")})

    def schedule(self) -> DiffusionSchedule:
        return DiffusionSchedule(**self.section("diffusion"))

    def pursuit(self) -> PursuitConfig:
        ref = self.section("refinement")
        ref.pop("enabled", None)
        return PursuitConfig(**ref)

    def evaluation(self) -> dict:
        ev = {"w": 1.0, "weights": [0.0, 0.5, 1.0], "n_samples": 6, "variant": "full"}
        ev.update(self.section("evaluation"))
        if self.raw.get("refinement", {}).get("enabled") and "variant" not in self.raw.get("evaluation", {}):
            ev["variant"] = "refined"
        return ev

    def load_dataset(self, key: str = "path") -> list:
        from .scene import load_dataset_dir
        ds = self.raw["dataset"]
        return load_dataset_dir(self.resolve(ds[key]), self.profile, self.graph_config(), ds.get("stride", 5))
