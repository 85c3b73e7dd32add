"""JSON persistence for fitted models.

Schema (``schema_version`` 1)::

    {
      "schema_version": 1,
      "feature_names": [...], "feature_kinds": [...],
      "basis": {
        "main_rules":  [[{"feature": j, "lower": a|null, "upper": b|null}, ...], ...],
        "treat_rules": [...],
        "linear_terms": [{"feature", "lower_winsor", "upper_winsor", "scale"}, ...]
      },
      "coefficients": {"theta", "theta_star", "alpha", "beta", "alpha_star", "beta_star"},
      "baseline": {"event_times", "increments", "max_time"},
      "lambda_selected": float,
      "fit_report": {...}
    }

``null`` bounds stand for -inf/+inf. Floats are written with full precision.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .hte import BaselineHazard, HteModel
from .rules import BasisSet

SCHEMA_VERSION = 1
_BLOCKS = ("theta", "theta_star", "alpha", "beta", "alpha_star", "beta_star")


class SchemaError(ValueError):
    pass


def model_to_dict(model: HteModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "feature_names": list(model.feature_names),
        "feature_kinds": list(model.feature_kinds),
        "basis": model.basis.to_json(),
        "coefficients": {name: [float(v) for v in getattr(model, name)] for name in _BLOCKS},
        "baseline": model.baseline.to_json(),
        "lambda_selected": float(model.lambda_selected),
        "fit_report": model.fit_report,
    }


def model_from_dict(d: dict) -> HteModel:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {d.get('schema_version')!r}")
    try:
        basis = BasisSet.from_json(d["basis"])
        coefs = {name: np.asarray(d["coefficients"][name], dtype=float) for name in _BLOCKS}
        model = HteModel(
            basis=basis,
            baseline=BaselineHazard.from_json(d["baseline"]),
            lambda_selected=float(d["lambda_selected"]),
            feature_names=tuple(d["feature_names"]),
            feature_kinds=tuple(d["feature_kinds"]),
            fit_report=d.get("fit_report", {}),
            **coefs,
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed model file: {exc}") from exc
    if model.theta.size != len(basis.main_rules) or model.alpha.size != len(basis.treat_rules):
        raise SchemaError("rule coefficient lengths do not match the basis")
    if model.theta_star.size != len(basis.linear_terms):
        raise SchemaError("linear coefficient lengths do not match the basis")
    return model


def dumps(model: HteModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, allow_nan=False) + "\n"


def save_model(model: HteModel, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_model(path) -> HteModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
