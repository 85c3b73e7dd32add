"""Base-function and variable importances for the treatment-effect part of a model."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .hte import HteModel, linear_hazard_ratio, rule_hazard_ratio
from .rules import rule_support


def _covariates(data):
    return np.asarray(getattr(data, "covariates", data), dtype=float)


def rule_importance(model: HteModel, data, k: int) -> float:
    """``|alpha_k - beta_k| * sqrt(s (1 - s))`` with ``s`` the rule's support on ``data``."""
    s = rule_support(model.basis.treat_rules[k], _covariates(data))
    return abs(model.alpha[k] - model.beta[k]) * math.sqrt(s * (1.0 - s))


def linear_importance(model: HteModel, data, j: int, per_subject: bool = False):
    """Mean of ``|alpha*_j - beta*_j| * |l_j(x) - mean(l_j)|`` over ``data``.

    ``j`` indexes ``model.basis.linear_terms``. With ``per_subject`` the
    per-row values are returned as well.
    """
    X = _covariates(data)
    values = model.basis.linear_terms[j].evaluate(X)
    per = abs(model.alpha_star[j] - model.beta_star[j]) * np.abs(values - values.mean())
    agg = float(per.mean())
    return (agg, per) if per_subject else agg


def variable_importance(model: HteModel, data) -> np.ndarray:
    """Per-covariate importance: own linear term plus an equal share of each rule using it."""
    p = len(model.feature_names) or _covariates(data).shape[1]
    out = np.zeros(p)
    for j, term in enumerate(model.basis.linear_terms):
        out[term.feature] += linear_importance(model, data, j)
    for k, rule in enumerate(model.basis.treat_rules):
        feats = set(rule.features)
        if not feats:
            continue
        share = rule_importance(model, data, k) / len(feats)
        for f in feats:
            out[f] += share
    return out


@dataclass
class RuleReport:
    """Importance tables normalized so the largest entry is 100."""

    rules: list[dict] = field(default_factory=list)
    linear: list[dict] = field(default_factory=list)
    variables: list[dict] = field(default_factory=list)
    main_rules: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"rules": self.rules, "linear_terms": self.linear, "variables": self.variables, "main_rules": self.main_rules},
            indent=1,
            allow_nan=False,
        ) + "\n"

    def rules_csv(self) -> str:
        return _csv(self.rules, ["rank", "rule", "importance", "raw_importance", "hazard_ratio", "support"])

    def linear_csv(self) -> str:
        return _csv(self.linear, ["feature", "importance", "raw_importance", "hazard_ratio"])

    def variables_csv(self) -> str:
        return _csv(self.variables, ["feature", "importance", "raw_importance"])

    def to_text(self) -> str:
        lines = []
        width = max([len(r["rule"]) for r in self.rules] + [5])
        lines.append(f"{'Rules':<9}{'':<{width}}  {'Importance':>10}  {'Hazard_Ratio':>12}  {'Support':>7}")
        for r in self.rules:
            lines.append(
                f"{'Rule ' + str(r['rank']):<9}{r['rule']:<{width}}  {r['importance']:>10.2f}"
                f"  {r['hazard_ratio']:>12.2f}  {r['support']:>7.2f}"
            )
        if self.linear:
            lines.append("")
            lines.append(f"{'Linear term':<16}  {'Importance':>10}  {'Hazard_Ratio':>12}")
            for r in self.linear:
                lines.append(f"{r['feature']:<16}  {r['importance']:>10.2f}  {r['hazard_ratio']:>12.2f}")
        lines.append("")
        lines.append(f"{'Variable':<16}  {'Importance':>10}")
        for r in self.variables:
            lines.append(f"{r['feature']:<16}  {r['importance']:>10.2f}")
        return "\n".join(lines) + "\n"


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def _normalize(values, top):
    return [100.0 * v / top if top > 0 else 0.0 for v in values]


def build_report(model: HteModel, data) -> RuleReport:
    """Tables of retained treatment rules, linear terms, variables and main rules.

    A treatment rule is retained when its (alpha, beta) pair is nonzero.
    Rules and linear terms share one normalization.
    """
    names = list(model.feature_names) or [f"x{j + 1}" for j in range(_covariates(data).shape[1])]
    X = _covariates(data)
    rules = []
    for k, rule in enumerate(model.basis.treat_rules):
        if model.alpha[k] == 0 and model.beta[k] == 0:
            continue
        rules.append({
            "rule": rule.describe(names),
            "raw_importance": rule_importance(model, X, k),
            "hazard_ratio": rule_hazard_ratio(model, k),
            "support": rule_support(rule, X),
        })
    linear = []
    for j, term in enumerate(model.basis.linear_terms):
        if model.alpha_star[j] == 0 and model.beta_star[j] == 0:
            continue
        linear.append({
            "feature": names[term.feature],
            "raw_importance": linear_importance(model, X, j),
            "hazard_ratio": linear_hazard_ratio(model, j),
        })
    top = max([r["raw_importance"] for r in rules + linear], default=0.0)
    for row, v in zip(rules + linear, _normalize([r["raw_importance"] for r in rules + linear], top)):
        row["importance"] = v
    rules.sort(key=lambda r: -r["raw_importance"])
    linear.sort(key=lambda r: -r["raw_importance"])
    for i, r in enumerate(rules, 1):
        r["rank"] = i

    vi = variable_importance(model, X)
    vi_norm = _normalize(vi, vi.max(initial=0.0))
    variables = sorted(
        ({"feature": names[j], "raw_importance": float(vi[j]), "importance": vi_norm[j]} for j in range(vi.size)),
        key=lambda r: -r["raw_importance"],
    )
    main_rules = [
        {"rule": rule.describe(names), "coefficient": float(model.theta[k]), "support": rule_support(rule, X)}
        for k, rule in enumerate(model.basis.main_rules)
        if model.theta[k] != 0
    ]
    return RuleReport(rules, linear, variables, main_rules)
