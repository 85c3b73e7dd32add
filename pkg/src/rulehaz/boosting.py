"""Candidate rule generation by gradient boosting on the Cox partial likelihood.

The treatment indicator is appended to the covariates as the last feature, so
trees can split on it like any other variable. Every non-root node of every
tree yields one rule: the conjunction of split conditions on its root path.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .rules import INF, Condition, Rule

MIN_LEAF = 5


class ConfigError(ValueError):
    pass


def default_subsample(n: int) -> int:
    """Rows per boosting step, ``floor(min(N/2, 100 + 6 sqrt(N)))``."""
    return int(math.floor(min(n / 2.0, 100.0 + 6.0 * math.sqrt(n))))


@dataclass(frozen=True)
class BoostConfig:
    """Hyperparameters of the rule-generating booster.

    ``subsample`` is either a row count (int >= 1), a fraction in (0, 1],
    or None for the default ``min(N/2, 100 + 6 sqrt(N))`` rule.
    """

    num_trees: int = 500
    mean_depth: float = 2.0
    shrinkage: float = 0.01
    subsample: int | float | None = None
    seed: int = 0
    min_leaf: int = MIN_LEAF

    def __post_init__(self):
        if self.num_trees < 0:
            raise ConfigError("num_trees must be non-negative")
        if self.mean_depth < 2:
            raise ConfigError("mean_depth must be at least 2")
        if not 0 <= self.shrinkage <= 1:
            raise ConfigError("shrinkage must lie in [0, 1]")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be positive")
        if self.subsample is not None and self.subsample <= 0:
            raise ConfigError("subsample must be positive")

    def subsample_size(self, n: int) -> int:
        s = self.subsample
        if s is None:
            size = default_subsample(n)
        elif isinstance(s, (int, np.integer)) and not isinstance(s, bool):
            size = int(s)
        elif s <= 1:
            size = int(math.floor(s * n))
        else:
            size = int(math.floor(s))
        return max(1, min(size, n))


def _risk_structure(times):
    """Ascending time order plus first/last index of each tie block."""
    order = np.argsort(times, kind="stable")
    t = times[order]
    starts = np.r_[True, t[1:] != t[:-1]]
    first = np.maximum.accumulate(np.where(starts, np.arange(t.size), 0))
    ends = np.r_[t[1:] != t[:-1], True]
    idx = np.where(ends, np.arange(t.size), t.size)
    last = np.minimum.accumulate(idx[::-1])[::-1]
    return order, first, last


def cox_gradient(times, events, scores) -> np.ndarray:
    """Gradient of the Breslow log partial likelihood with respect to the scores.

    ``r_i = d_i - exp(F_i) * sum_{k: t_k <= t_i} d_k / sum_{m: t_m >= t_k} exp(F_m)``
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if np.isnan(scores).any() or np.isnan(times).any():
        raise ValueError("NaN in times or scores")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    order, first, last = _risk_structure(times)
    d = events[order]
    w = np.exp(scores[order] - scores.max())
    risk = np.cumsum(w[::-1])[::-1][first]
    hazard = np.cumsum(d / risk)[last]
    grad = np.empty_like(scores)
    grad[order] = d - w * hazard
    return grad


def log_partial_likelihood(times, events, scores) -> float:
    """Breslow log partial likelihood (unscaled)."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    scores = np.asarray(scores, dtype=float)
    order, first, _ = _risk_structure(times)
    s = scores[order]
    shift = s.max()
    risk = np.cumsum(np.exp(s - shift)[::-1])[::-1][first]
    d = events[order]
    return float(np.sum(d * (s - shift - np.log(risk))))


def draw_tree_size(mean_depth: float, rng: np.random.Generator) -> int:
    """Number of terminal nodes ``2 + floor(u)``, ``u ~ Exponential(mean = mean_depth - 2)``."""
    if mean_depth < 2:
        raise ConfigError("mean_depth must be at least 2")
    if mean_depth == 2:
        return 2
    return 2 + int(math.floor(rng.exponential(mean_depth - 2.0)))


@dataclass
class _Node:
    rows: np.ndarray
    value: float
    conditions: tuple = ()
    feature: int = -1
    threshold: float = math.nan
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class RegressionTree:
    """Least-squares tree; ``x < threshold`` goes left."""

    root: _Node
    n_leaves: int

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.empty(X.shape[0])
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.value
                continue
            go_left = X[idx, node.feature] < node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def nodes(self):
        """Pre-order traversal."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def rules(self) -> list[Rule]:
        """One rule per non-root node, 2 * (n_leaves - 1) in total."""
        return [Rule.from_conditions(n.conditions) for n in self.nodes() if n is not self.root]


def _best_split(X, y, rows, min_leaf):
    """Exhaustive search of midpoint splits; returns (gain, feature, threshold)."""
    n = rows.size
    if n < 2 * min_leaf:
        return 0.0, -1, math.nan
    Xn = X[rows]
    yn = y[rows]
    total = yn.sum()
    base = total * total / n
    best = (0.0, -1, math.nan)
    k = np.arange(1, n)
    valid_size = (k >= min_leaf) & (n - k >= min_leaf)
    for j in range(X.shape[1]):
        order = np.argsort(Xn[:, j], kind="stable")
        xs = Xn[order, j]
        cs = np.cumsum(yn[order])[:-1]
        ok = valid_size & (xs[1:] > xs[:-1])
        if not ok.any():
            continue
        left = cs[ok]
        kk = k[ok]
        gains = left * left / kk + (total - left) ** 2 / (n - kk) - base
        i = int(np.argmax(gains))
        if gains[i] > best[0]:
            pos = kk[i]
            best = (float(gains[i]), j, 0.5 * (xs[pos - 1] + xs[pos]))
    return best


def fit_gradient_tree(X, targets, n_leaves: int, rows=None, min_leaf: int = MIN_LEAF) -> RegressionTree:
    """Grow a least-squares tree best-first up to ``n_leaves`` terminal nodes.

    Only ``rows`` (default: all) are used for both structure and leaf values.
    Growth stops early when no split reduces the squared error.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(targets, dtype=float)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows)
    if n_leaves < 1:
        raise ConfigError("n_leaves must be positive")
    root = _Node(rows, float(y[rows].mean()))
    scale = max(1.0, float(np.sum(y[rows] ** 2)))
    heap = []
    counter = 0

    def push(node):
        nonlocal counter
        gain, j, thr = _best_split(X, y, node.rows, min_leaf)
        if j >= 0 and gain > 1e-12 * scale:
            heapq.heappush(heap, (-gain, counter, node, j, thr))
            counter += 1

    push(root)
    leaves = 1
    while leaves < n_leaves and heap:
        _, _, node, j, thr = heapq.heappop(heap)
        mask = X[node.rows, j] < thr
        lrows, rrows = node.rows[mask], node.rows[~mask]
        node.feature, node.threshold = j, thr
        node.left = _Node(lrows, float(y[lrows].mean()), node.conditions + (Condition(j, -INF, thr),))
        node.right = _Node(rrows, float(y[rrows].mean()), node.conditions + (Condition(j, thr, INF),))
        leaves += 1
        push(node.left)
        push(node.right)
    return RegressionTree(root, leaves)


@dataclass
class CandidateRuleSet:
    """Rules over the augmented feature space ``(x_1..x_p, z)``."""

    rules: list[Rule]
    treatment_feature: int
    tree_sizes: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "treatment_feature": self.treatment_feature,
            "tree_sizes": list(self.tree_sizes),
            "rules": [r.to_json() for r in self.rules],
        }


def augmented_features(data) -> np.ndarray:
    return np.column_stack([data.covariates, data.treatments.astype(float)])


def boost(data, config: BoostConfig = BoostConfig(), return_trees: bool = False):
    """Run the boosting loop and decompose every tree into candidate rules.

    Each iteration draws its own tree size and subsample from an independent
    child stream of ``SeedSequence(config.seed)``.
    """
    if data.n < 2:
        raise ValueError("need at least two observations")
    if data.events.sum() == 0:
        raise ValueError("cannot boost a Cox model without events")
    XZ = augmented_features(data)
    n = data.n
    size = config.subsample_size(n)
    streams = np.random.SeedSequence(config.seed).spawn(config.num_trees)
    F = np.zeros(n)
    rules: list[Rule] = []
    sizes: list[int] = []
    trees = []
    for m in range(config.num_trees):
        rng = np.random.default_rng(streams[m])
        r = cox_gradient(data.times, data.events, F)
        d_m = draw_tree_size(config.mean_depth, rng)
        rows = np.sort(rng.choice(n, size=size, replace=False))
        tree = fit_gradient_tree(XZ, r, d_m, rows=rows, min_leaf=config.min_leaf)
        if config.shrinkage:
            F = F + config.shrinkage * tree.predict(XZ)
        rules.extend(tree.rules())
        sizes.append(tree.n_leaves)
        if return_trees:
            trees.append(tree)
    result = CandidateRuleSet(rules, data.p, sizes)
    return (result, trees) if return_trees else result
