"""Rule terms, winsorized linear terms and the grouped design matrix.

A rule is a conjunction of half-open interval conditions ``x_j in [lower, upper)``.
Tree splits ``x < c`` become an upper bound ``c`` and ``x >= c`` a lower bound ``c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

INF = math.inf

#: Multiplier of the linear-term normalization ``0.4 * l / std(l)``.
LINEAR_SCALE_TARGET = 0.4


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    feature: int
    lower: float = -INF
    upper: float = INF

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(
                f"empty interval [{self.lower}, {self.upper}) on feature {self.feature}"
            )

    def holds(self, values):
        return (values >= self.lower) & (values < self.upper)


@dataclass(frozen=True)
class Rule:
    """Conjunction of interval conditions, at most one per feature.

    Use :meth:`from_conditions` to build a rule from arbitrary conditions;
    repeated features are merged by interval intersection.
    """

    conditions: tuple[Condition, ...] = ()

    @classmethod
    def from_conditions(cls, conditions: Iterable) -> "Rule":
        bounds: dict[int, list[float]] = {}
        for cond in conditions:
            if not isinstance(cond, Condition):
                cond = Condition(int(cond[0]), float(cond[1]), float(cond[2]))
            lo, hi = bounds.get(cond.feature, [-INF, INF])
            bounds[cond.feature] = [max(lo, cond.lower), min(hi, cond.upper)]
        merged = tuple(Condition(j, lo, hi) for j, (lo, hi) in sorted(bounds.items()))
        return cls(merged)

    @property
    def features(self) -> tuple[int, ...]:
        return tuple(c.feature for c in self.conditions)

    def max_feature(self) -> int:
        return max(self.features, default=-1)

    def evaluate(self, X) -> np.ndarray:
        """Evaluate the rule on every row of ``X``; returns an int8 0/1 vector."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.max_feature() >= X.shape[1]:
            raise DimensionError(
                f"rule uses feature {self.max_feature()} but data has {X.shape[1]} columns"
            )
        out = np.ones(X.shape[0], dtype=bool)
        for cond in self.conditions:
            out &= cond.holds(X[:, cond.feature])
        return out.astype(np.int8)

    def without_feature(self, feature: int) -> "Rule":
        return Rule(tuple(c for c in self.conditions if c.feature != feature))

    def condition_on(self, feature: int) -> Condition | None:
        for c in self.conditions:
            if c.feature == feature:
                return c
        return None

    def describe(self, feature_names: Sequence[str] | None = None) -> str:
        """Render as ``"age<39.5 & cd40>=298.5"``."""
        parts = []
        for c in self.conditions:
            name = feature_names[c.feature] if feature_names else f"x{c.feature + 1}"
            if c.lower > -INF:
                parts.append(f"{name}>={_fmt(c.lower)}")
            if c.upper < INF:
                parts.append(f"{name}<{_fmt(c.upper)}")
        return " & ".join(parts) if parts else "(always)"

    def to_json(self) -> list[dict]:
        return [
            {
                "feature": c.feature,
                "lower": None if c.lower == -INF else c.lower,
                "upper": None if c.upper == INF else c.upper,
            }
            for c in self.conditions
        ]

    @classmethod
    def from_json(cls, items) -> "Rule":
        return cls.from_conditions(
            Condition(
                int(d["feature"]),
                -INF if d["lower"] is None else float(d["lower"]),
                INF if d["upper"] is None else float(d["upper"]),
            )
            for d in items
        )


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def evaluate_rule(rule: Rule, x) -> int:
    """Evaluate ``rule`` on a single covariate vector."""
    x = np.asarray(x, dtype=float).ravel()
    return int(rule.evaluate(x.reshape(1, -1))[0])


def rule_support(rule: Rule, X) -> float:
    """Fraction of rows of ``X`` (or of a dataset's covariates) where the rule fires."""
    X = getattr(X, "covariates", X)
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("support of a rule on an empty dataset is undefined")
    return float(rule.evaluate(X).mean())


@dataclass(frozen=True)
class LinearTerm:
    """Winsorized, rescaled covariate ``scale * clip(x_j, lower, upper)``.

    ``excluded`` marks a column that is constant after winsorizing; such
    terms never enter the basis.
    """

    feature: int
    lower_winsor: float
    upper_winsor: float
    scale: float
    excluded: bool = False

    def __post_init__(self):
        if self.lower_winsor > self.upper_winsor:
            raise ValueError("lower_winsor must not exceed upper_winsor")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def winsorize(self, values):
        return np.clip(np.asarray(values, dtype=float), self.lower_winsor, self.upper_winsor)

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.feature >= X.shape[1]:
            raise DimensionError(f"linear term uses feature {self.feature}")
        return self.scale * self.winsorize(X[:, self.feature])

    def to_json(self) -> dict:
        return {
            "feature": self.feature,
            "lower_winsor": self.lower_winsor,
            "upper_winsor": self.upper_winsor,
            "scale": self.scale,
        }

    @classmethod
    def from_json(cls, d) -> "LinearTerm":
        return cls(int(d["feature"]), float(d["lower_winsor"]), float(d["upper_winsor"]), float(d["scale"]))


def fit_linear_term(column, q: float = 0.025, feature: int = 0) -> LinearTerm:
    """Fit winsor bounds at the ``q`` and ``1 - q`` quantiles and the 0.4/std scale.

    The standard deviation is the population form, taken after winsorizing.
    """
    column = np.asarray(column, dtype=float).ravel()
    if column.size < 2:
        raise ValueError("need at least two values to fit a linear term")
    if not 0 <= q < 0.5:
        raise ValueError("q must lie in [0, 0.5)")
    lower, upper = np.quantile(column, [q, 1.0 - q], method="linear")
    sd = float(np.std(np.clip(column, lower, upper)))
    if sd <= 1e-12 * max(1.0, abs(float(upper))):
        return LinearTerm(feature, float(lower), float(upper), 1.0, excluded=True)
    return LinearTerm(feature, float(lower), float(upper), LINEAR_SCALE_TARGET / sd)


@dataclass(frozen=True)
class BasisSet:
    main_rules: tuple[Rule, ...] = ()
    treat_rules: tuple[Rule, ...] = ()
    linear_terms: tuple[LinearTerm, ...] = ()

    @property
    def n_columns(self) -> int:
        return len(self.main_rules) + len(self.linear_terms) + 2 * (
            len(self.treat_rules) + len(self.linear_terms)
        )

    def is_empty(self) -> bool:
        return not (self.main_rules or self.treat_rules or self.linear_terms)

    def main_matrix(self, X) -> np.ndarray:
        """Columns shared by both arms: main rules then linear terms."""
        return _stack([r.evaluate(X) for r in self.main_rules] + [t.evaluate(X) for t in self.linear_terms], X)

    def treat_matrix(self, X) -> np.ndarray:
        """Columns that are split by arm: treatment rules then linear terms."""
        return _stack([r.evaluate(X) for r in self.treat_rules] + [t.evaluate(X) for t in self.linear_terms], X)

    def to_json(self) -> dict:
        return {
            "main_rules": [r.to_json() for r in self.main_rules],
            "treat_rules": [r.to_json() for r in self.treat_rules],
            "linear_terms": [t.to_json() for t in self.linear_terms],
        }

    @classmethod
    def from_json(cls, d) -> "BasisSet":
        return cls(
            tuple(Rule.from_json(r) for r in d["main_rules"]),
            tuple(Rule.from_json(r) for r in d["treat_rules"]),
            tuple(LinearTerm.from_json(t) for t in d["linear_terms"]),
        )


def _stack(columns, X) -> np.ndarray:
    n = np.atleast_2d(np.asarray(X)).shape[0]
    if not columns:
        return np.zeros((n, 0))
    return np.column_stack(columns).astype(float)


def filter_rules(rules: Iterable[Rule], X) -> tuple[list[Rule], dict]:
    """Drop duplicate rules and rules with support 0 or 1 on ``X``.

    Returns the retained rules (first occurrence order) and removal counts.
    """
    seen = set()
    kept = []
    n_dup = n_trivial = 0
    for rule in rules:
        if rule in seen:
            n_dup += 1
            continue
        seen.add(rule)
        support = rule_support(rule, X)
        if support <= 0.0 or support >= 1.0:
            n_trivial += 1
            continue
        kept.append(rule)
    return kept, {"duplicates": n_dup, "trivial_support": n_trivial}


def build_basis(main_rules, treat_rules, X, q: float = 0.025) -> tuple[BasisSet, dict]:
    """Assemble a :class:`BasisSet` from partitioned rules and training covariates."""
    X = np.asarray(X, dtype=float)
    main, main_info = filter_rules(main_rules, X)
    treat, treat_info = filter_rules(treat_rules, X)
    terms = [fit_linear_term(X[:, j], q, feature=j) for j in range(X.shape[1])]
    kept_terms = tuple(t for t in terms if not t.excluded)
    info = {
        "main_rules_removed": main_info,
        "treat_rules_removed": treat_info,
        "linear_terms_excluded": [t.feature for t in terms if t.excluded],
    }
    return BasisSet(tuple(main), tuple(treat), kept_terms), info


@dataclass(frozen=True)
class Design:
    """Dense design matrix with its group structure.

    Column order is ``[main rules | linear terms | (z*r, (1-z)*r) per treatment
    rule | (z*l, (1-z)*l) per linear term]``.
    """

    matrix: np.ndarray
    groups: tuple[np.ndarray, ...]
    weights: np.ndarray
    n_main_rules: int
    n_treat_rules: int
    n_linear: int
    blocks: dict = field(default_factory=dict)

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]


def paired_columns(shared: np.ndarray, z) -> np.ndarray:
    """Interleave ``(z * c, (1 - z) * c)`` for every column ``c``."""
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    out = np.empty((shared.shape[0], 2 * shared.shape[1]))
    out[:, 0::2] = z * shared
    out[:, 1::2] = (1.0 - z) * shared
    return out


def build_design(X, z, basis: BasisSet) -> Design:
    """Evaluate ``basis`` on covariates ``X`` and treatments ``z``."""
    if basis.is_empty():
        raise ValueError("cannot build a design from an empty basis")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    if z.size != X.shape[0]:
        raise DimensionError("treatment vector length does not match covariate rows")
    k_main, k_treat, n_lin = len(basis.main_rules), len(basis.treat_rules), len(basis.linear_terms)
    matrix = np.hstack([basis.main_matrix(X), paired_columns(basis.treat_matrix(X), z)])

    n_single = k_main + n_lin
    groups = [np.array([j]) for j in range(n_single)]
    groups += [np.array([n_single + 2 * g, n_single + 2 * g + 1]) for g in range(k_treat + n_lin)]
    weights = np.concatenate([np.ones(n_single), np.full(k_treat + n_lin, math.sqrt(2.0))])
    blocks = {
        "theta": slice(0, k_main),
        "theta_star": slice(k_main, n_single),
        "treat_rule_pairs": slice(n_single, n_single + 2 * k_treat),
        "linear_pairs": slice(n_single + 2 * k_treat, matrix.shape[1]),
    }
    return Design(matrix, tuple(groups), weights, k_main, k_treat, n_lin, blocks)
