"""Experiment configuration: parsing, validation and the resolved echo."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import jsonschema

from .data import BINARY, REGRESSION, TASKS
from .estimators import ESTIMATOR_NAMES, default_config, supports
from .fairness import DEFAULT_INCLUSION
from .gbt import SWEEPABLE, PipelineConfig
from .evaluation import DEFAULT_GRIDS

EXPERIMENTS = ("consistency", "calibration", "abstain", "fairness-binary",
               "uasp-regression", "feature-shift")
BINARY_ONLY = {"abstain", "fairness-binary", "feature-shift"}
REGRESSION_ONLY = {"uasp-regression"}

_PIPELINE_PROPS = {
    "n_trees": {"type": "integer", "minimum": 0},
    "max_depth": {"type": "integer", "minimum": 1},
    "learning_rate": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "gamma": {"type": "number", "minimum": 0},
    "ridge": {"type": "number", "minimum": 0},
    "bag_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "min_leaf": {"type": "integer", "minimum": 1},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "experiment", "estimators"],
    "properties": {
        "dataset": {
            "type": "object",
            "oneOf": [
                {"additionalProperties": False, "required": ["csv"],
                 "properties": {"csv": {
                     "type": "object", "additionalProperties": False,
                     "required": ["path", "outcome_column", "protected_column", "task"],
                     "properties": {
                         "path": {"type": "string"},
                         "outcome_column": {"type": "string"},
                         "protected_column": {"type": "string"},
                         "task": {"enum": list(TASKS)},
                         "privileged_value": {"type": ["string", "number"]},
                     }}}},
                {"additionalProperties": False, "required": ["synthetic"],
                 "properties": {"synthetic": {
                     "type": "object", "additionalProperties": False,
                     "required": ["task", "n"],
                     "properties": {
                         "task": {"enum": list(TASKS)},
                         "scenario": {"type": "string"},
                         "n": {"type": "integer", "minimum": 2},
                         "seed": {"type": "integer", "minimum": 0},
                     }}}},
            ],
        },
        "experiment": {"enum": list(EXPERIMENTS)},
        "estimators": {"type": "array", "minItems": 1, "uniqueItems": True,
                       "items": {"enum": list(ESTIMATOR_NAMES)}},
        "pipeline": {"type": "object", "additionalProperties": False,
                     "properties": _PIPELINE_PROPS},
        "sweep": {"type": "object", "additionalProperties": False,
                  "properties": {"hyperparam": {"enum": list(SWEEPABLE)},
                                 "grid": {"type": "array", "minItems": 1,
                                          "items": {"type": "number"}},
                                 "tau": {"type": ["number", "null"]}}},
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
        "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "k": {"type": "integer", "minimum": 2},
        "beta": {"type": "number", "minimum": 0, "maximum": 1},
        "bins": {"type": "integer", "minimum": 1},
        "inclusion": {"type": "array", "minItems": 1,
                      "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
        "workers": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: dict
    experiment: str
    estimators: List[str]
    task: str
    pipeline: PipelineConfig
    sweep: dict = field(default_factory=dict)
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    test_fraction: float = 0.3
    k: int = 10
    beta: float = 0.5
    bins: int = 5
    inclusion: List[float] = field(default_factory=lambda: list(DEFAULT_INCLUSION))
    workers: int = 1
    output_dir: str = "uqfair-out"
    base_dir: Optional[Path] = None

    def echo(self) -> dict:
        """Every setting that influences results, defaults included."""
        pipe = self.pipeline.to_dict()
        pipe.pop("seed")
        return {
            "dataset": self.dataset,
            "task": self.task,
            "experiment": self.experiment,
            "estimators": list(self.estimators),
            "pipeline": pipe,
            "pipeline_seed": "repetition seed",
            "sweep": self.sweep,
            "seeds": list(self.seeds),
            "test_fraction": self.test_fraction,
            "k": self.k,
            "beta": self.beta,
            "bins": self.bins,
            "inclusion": list(self.inclusion),
            "workers": self.workers,
        }


def _field_path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(doc: dict, base_dir=None) -> ExperimentConfig:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config field {_field_path(err)}: {err.message}") from None

    ds = dict(doc["dataset"])
    if "synthetic" in ds:
        syn = {"scenario": "default", "seed": 0, **ds["synthetic"]}
        ds = {"synthetic": syn}
        task = syn["task"]
    else:
        task = ds["csv"]["task"]

    exp = doc["experiment"]
    if exp in BINARY_ONLY and task != BINARY:
        raise ConfigError(f"experiment {exp!r} needs a binary dataset, got {task}")
    if exp in REGRESSION_ONLY and task != REGRESSION:
        raise ConfigError(f"experiment {exp!r} needs a regression dataset, got {task}")
    for name in doc["estimators"]:
        if not supports(name, task):
            raise ConfigError(f"estimator {name!r} does not support task {task!r}")

    base = default_config(task).to_dict()
    base.update(doc.get("pipeline", {}))
    base["seed"] = 0
    try:
        pipeline = PipelineConfig.from_dict(base)
    except ValueError as err:
        raise ConfigError(f"config field pipeline: {err}") from None

    sweep = {}
    if exp == "consistency":
        sw = doc.get("sweep", {})
        hp = sw.get("hyperparam", "max_depth")
        grid = list(sw.get("grid", DEFAULT_GRIDS[hp]))
        if hp == "max_depth" and any(int(v) != v or v < 1 for v in grid):
            raise ConfigError("config field sweep/grid: max_depth values must be positive integers")
        if hp == "max_depth":
            grid = [int(v) for v in grid]
        if hp == "gamma" and any(v < 0 for v in grid):
            raise ConfigError("config field sweep/grid: gamma values must be nonnegative")
        sweep = {"hyperparam": hp, "grid": grid, "tau": sw.get("tau")}
    elif "sweep" in doc:
        raise ConfigError("config field sweep: only used by the consistency experiment")

    kw = {key: doc[key] for key in ("seeds", "test_fraction", "k", "beta", "bins",
                                    "inclusion", "workers", "output_dir") if key in doc}
    return ExperimentConfig(dataset=ds, experiment=exp, estimators=list(doc["estimators"]),
                            task=task, pipeline=pipeline, sweep=sweep,
                            base_dir=Path(base_dir) if base_dir else None, **kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(doc, base_dir=path.parent)
