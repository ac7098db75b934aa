"""Run configuration documents (JSON).

A config is a single JSON object; unknown keys anywhere are rejected.
Example::

    {
      "version": 1,
      "task": "regression",
      "data": {"path": "train.csv", "target": "y"},
      "members": [
        {"kind": "linear_least_squares"},
        {"kind": "knn_regressor", "hyper_params": {"k": 5}},
        {"kind": "decision_tree", "hyper_params": {"max_depth": 5}}
      ],
      "folds": {"k": 5},
      "objective": {"c_reg": 0.1},
      "weighting": {"n_dim": 3},
      "search": {"c_reg": [0.01, 0.1, 1.0], "n_neighbors": [5, 10, 20]},
      "seed": 0
    }

The environment variable ``CSGE_SEED`` overrides ``seed``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import ParseError, Scorer
from .estimators import EstimatorSpec
from .optim import ObjectiveConfig

CONFIG_VERSION = 1

_TOP = {
    "version", "task", "data", "members", "folds", "objective", "weighting",
    "scorer", "seed", "search", "output_dir", "eval",
}
_DATA = {"path", "target", "lead_time", "sample_id", "n_classes"}
_FOLDS = {"k", "protocol", "holdout_fraction", "seed"}
_OBJECTIVE = {
    "c_reg", "use_penalty_heuristic", "eta_max", "grid_resolution", "max_refine_iters", "tolerance",
}
_WEIGHTING = {"n_dim", "n_neighbors"}
_SEARCH = {"c_reg", "n_neighbors"}
_EVAL = {"n_folds", "n_seeds", "inner_folds"}


def _section(doc, name, allowed) -> dict:
    sec = doc.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ParseError(f"config section {name!r} must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ParseError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return sec


@dataclass(frozen=True)
class RunConfig:
    task: str
    members: tuple
    data: dict = field(default_factory=dict)
    folds: dict = field(default_factory=dict)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    n_dim: Optional[int] = None
    n_neighbors: Optional[int] = None
    scorer: Optional[Scorer] = None
    seed: int = 0
    search: dict = field(default_factory=dict)
    output_dir: str = "."
    eval: dict = field(default_factory=dict)

    @property
    def classification(self) -> bool:
        return self.task == "classification"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ParseError("config must be a JSON object")
        unknown = set(doc) - _TOP
        if unknown:
            raise ParseError(f"unknown config keys: {sorted(unknown)}")
        if doc.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ParseError(f"unsupported config version {doc.get('version')!r}")
        task = doc.get("task", "regression")
        if task not in ("regression", "classification"):
            raise ParseError(f"task must be regression or classification, got {task!r}")
        members = doc.get("members")
        if not isinstance(members, list) or len(members) < 2:
            raise ParseError("config needs a 'members' list with at least two entries")
        try:
            specs = tuple(EstimatorSpec.from_dict(m) for m in members)
            objective = ObjectiveConfig(**_section(doc, "objective", _OBJECTIVE))
            scorer = Scorer(doc["scorer"]) if "scorer" in doc else None
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc)) from None
        if scorer is not None and scorer.kind == "user_supplied":
            raise ParseError("user_supplied scorers are only available from Python")
        weighting = _section(doc, "weighting", _WEIGHTING)
        seed = int(os.environ.get("CSGE_SEED", doc.get("seed", 0)))
        return cls(
            task=task,
            members=specs,
            data=_section(doc, "data", _DATA),
            folds=_section(doc, "folds", _FOLDS),
            objective=objective,
            n_dim=weighting.get("n_dim"),
            n_neighbors=weighting.get("n_neighbors"),
            scorer=scorer,
            seed=seed,
            search=_section(doc, "search", _SEARCH),
            output_dir=doc.get("output_dir", "."),
            eval=_section(doc, "eval", _EVAL),
        )


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc.msg}", line=exc.lineno) from None
    return RunConfig.from_dict(doc)
