"""End-to-end model fitting: boost, partition, basis, group lasso, baseline."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .boosting import BoostConfig, boost
from .data import DataError, SurvivalDataset
from .grouplasso import PathConfig, cross_validate, solve_path
from .hte import HteModel, breslow_baseline, default_horizon
from .partition import partition
from .rules import build_basis, build_design

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit_hte_model`.

    ``lambda_value`` skips cross-validation: a number fixes lambda, the
    string ``"max"`` uses lambda_max (the all-zero model).
    """

    boost: BoostConfig = field(default_factory=BoostConfig)
    path: PathConfig = field(default_factory=PathConfig)
    winsor_q: float = 0.025
    lambda_value: float | str | None = None


def check_arms(data: SurvivalDataset) -> None:
    for arm in (0, 1):
        in_arm = data.treatments == arm
        if not in_arm.any():
            raise DataError(f"no subjects in the {'treatment' if arm else 'control'} arm")
        if data.events[in_arm].sum() == 0:
            raise DataError(f"no events in the {'treatment' if arm else 'control'} arm; cannot fit")


def fit_hte_model(data: SurvivalDataset, config: FitConfig = FitConfig()) -> HteModel:
    check_arms(data)
    candidates = boost(data, config.boost)
    parts = partition(candidates)
    basis, basis_info = build_basis(parts.main_rules, parts.treat_rules, data.covariates, config.winsor_q)
    if basis.is_empty():
        raise DataError("no usable rules or linear terms in the basis")
    design = build_design(data.covariates, data.treatments, basis)
    log.info(
        "basis: %d main rules, %d treatment rules, %d linear terms",
        len(basis.main_rules), len(basis.treat_rules), len(basis.linear_terms),
    )

    if config.lambda_value is None:
        path = cross_validate(design.matrix, design.groups, data.times, data.events, config.path, design.weights)
    else:
        probe = solve_path(
            design.matrix, design.groups, data.times, data.events,
            replace(config.path, lambdas=None, n_lambda=1), design.weights,
        )
        lam = probe.lambda_max if config.lambda_value == "max" else float(config.lambda_value)
        path = solve_path(
            design.matrix, design.groups, data.times, data.events,
            replace(config.path, lambdas=(lam,)), design.weights,
        )
        path.selected = 0

    coef = path.selected_coef
    baseline = breslow_baseline(data.times, data.events, design.matrix @ coef)
    report = {
        "n": int(data.n),
        "n_events": int(data.events.sum()),
        "default_t0": default_horizon(data.times),
        "candidate_rules": len(candidates.rules),
        "tree_sizes_total": int(sum(candidates.tree_sizes)),
        "partition": parts.counts,
        "basis": {
            "main_rules": len(basis.main_rules),
            "treat_rules": len(basis.treat_rules),
            "linear_terms": len(basis.linear_terms),
            **basis_info,
        },
        "path": path.to_json(),
        "config": _config_dict(config),
    }
    return HteModel.from_coefficients(
        basis, design, coef, baseline, path.selected_lambda,
        feature_names=data.feature_names,
        feature_kinds=data.feature_kinds,
        fit_report=report,
    )


def _config_dict(config: FitConfig) -> dict:
    d = asdict(config)
    d["path"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d["path"].items()}
    d["path"].pop("threads", None)
    return d
