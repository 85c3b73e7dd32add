"""Fitted model, Breslow baseline and arm-specific survival prediction."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .rules import BasisSet, Design


class ExtrapolationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BaselineHazard:
    """Right-continuous step-function cumulative baseline hazard ``H0``.

    Attributes
    ----------
    event_times : sorted unique times carrying at least one event
    increments : jump of ``H0`` at each event time
    max_time : largest observed training time (events or censoring)
    """

    event_times: np.ndarray
    increments: np.ndarray
    max_time: float

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.increments)])
        return cum[np.searchsorted(self.event_times, t, side="right")]

    def to_json(self) -> dict:
        return {
            "event_times": [float(v) for v in self.event_times],
            "increments": [float(v) for v in self.increments],
            "max_time": float(self.max_time),
        }

    @classmethod
    def from_json(cls, d) -> "BaselineHazard":
        return cls(np.asarray(d["event_times"], float), np.asarray(d["increments"], float), float(d["max_time"]))


def breslow_baseline(times, events, eta) -> BaselineHazard:
    """Breslow estimate: jump ``d(s) / sum_{t_m >= s} exp(eta_m)`` at each event time ``s``."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    eta = np.asarray(eta, dtype=float)
    order = np.argsort(times, kind="stable")
    t, d, w = times[order], events[order], np.exp(eta[order])
    uniq, start = np.unique(t, return_index=True)
    risk = np.cumsum(w[::-1])[::-1][start]
    deaths = np.add.reduceat(d, start) if t.size else np.zeros(0)
    keep = deaths > 0
    return BaselineHazard(uniq[keep], deaths[keep] / risk[keep], float(t.max(initial=0.0)))


@dataclass
class HteModel:
    """All coefficient blocks of the fitted model plus its baseline hazard.

    ``theta_star``, ``alpha_star`` and ``beta_star`` are aligned with
    ``basis.linear_terms`` (constant columns are not part of the basis).
    """

    basis: BasisSet
    theta: np.ndarray
    theta_star: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    alpha_star: np.ndarray
    beta_star: np.ndarray
    baseline: BaselineHazard
    lambda_selected: float
    feature_names: tuple[str, ...] = ()
    feature_kinds: tuple[str, ...] = ()
    fit_report: dict = field(default_factory=dict)

    @classmethod
    def from_coefficients(cls, basis, design: Design, coef, baseline, lam, **kw) -> "HteModel":
        coef = np.asarray(coef, dtype=float)
        b = design.blocks
        rule_pairs = coef[b["treat_rule_pairs"]]
        lin_pairs = coef[b["linear_pairs"]]
        return cls(
            basis,
            coef[b["theta"]].copy(),
            coef[b["theta_star"]].copy(),
            rule_pairs[0::2].copy(),
            rule_pairs[1::2].copy(),
            lin_pairs[0::2].copy(),
            lin_pairs[1::2].copy(),
            baseline,
            float(lam),
            **kw,
        )

    def coefficient_vector(self) -> np.ndarray:
        """Coefficients in design-column order."""
        rule_pairs = np.empty(2 * self.alpha.size)
        rule_pairs[0::2], rule_pairs[1::2] = self.alpha, self.beta
        lin_pairs = np.empty(2 * self.alpha_star.size)
        lin_pairs[0::2], lin_pairs[1::2] = self.alpha_star, self.beta_star
        return np.concatenate([self.theta, self.theta_star, rule_pairs, lin_pairs])

    def arm_predictors(self, X):
        """Linear predictors ``(eta_treated, eta_control)`` for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        shared = self.basis.main_matrix(X) @ np.concatenate([self.theta, self.theta_star])
        T = self.basis.treat_matrix(X)
        eta1 = shared + T @ np.concatenate([self.alpha, self.alpha_star])
        eta0 = shared + T @ np.concatenate([self.beta, self.beta_star])
        return eta1, eta0

    def linear_predictor(self, X, z) -> np.ndarray:
        eta1, eta0 = self.arm_predictors(X)
        z = np.asarray(z, dtype=float)
        return z * eta1 + (1.0 - z) * eta0

    def log_hazard_ratio(self, X) -> np.ndarray:
        """``log h(t|x,1) - log h(t|x,0)``, constant in time."""
        T = self.basis.treat_matrix(np.atleast_2d(np.asarray(X, dtype=float)))
        return T @ np.concatenate([self.alpha - self.beta, self.alpha_star - self.beta_star])

    def paired_violations(self) -> int:
        """Count of (alpha, beta) pairs with exactly one zero entry."""
        a = np.concatenate([self.alpha, self.alpha_star])
        b = np.concatenate([self.beta, self.beta_star])
        return int(np.sum((a == 0) != (b == 0)))

    def swapped_arms(self) -> "HteModel":
        return HteModel(
            self.basis, self.theta, self.theta_star, self.beta, self.alpha, self.beta_star,
            self.alpha_star, self.baseline, self.lambda_selected, self.feature_names,
            self.feature_kinds, dict(self.fit_report),
        )


@dataclass
class HtePrediction:
    s1: np.ndarray
    s0: np.ndarray
    hte: np.ndarray
    t0: float
    extrapolated: bool = False


def predict_hte(model: HteModel, X, t0: float) -> HtePrediction:
    """Survival in each arm at ``t0`` and their difference ``S1 - S0``.

    Beyond the last observed training time ``H0`` stays at its final value and
    the prediction is flagged as extrapolated.
    """
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    extrapolated = bool(t0 > model.baseline.max_time)
    if extrapolated:
        warnings.warn(
            f"t0={t0} exceeds the last observed time {model.baseline.max_time}",
            ExtrapolationWarning,
            stacklevel=2,
        )
    if X.shape[0] == 0:
        empty = np.zeros(0)
        return HtePrediction(empty, empty, empty, float(t0), extrapolated)
    H0 = float(model.baseline.cumulative(t0))
    eta1, eta0 = model.arm_predictors(X)
    s1 = np.exp(-H0 * np.exp(eta1))
    s0 = np.exp(-H0 * np.exp(eta0))
    return HtePrediction(s1, s0, s1 - s0, float(t0), extrapolated)


def survival_curves(model: HteModel, x, times):
    """Arm survival curves for one subject over a grid of times."""
    eta1, eta0 = model.arm_predictors(np.atleast_2d(x))
    H0 = model.baseline.cumulative(np.asarray(times, dtype=float))
    return np.exp(-H0 * math.exp(eta1[0])), np.exp(-H0 * math.exp(eta0[0]))


def rule_hazard_ratio(model: HteModel, k: int) -> float:
    """Treated-vs-control hazard ratio factor ``exp(alpha_k - beta_k)`` of treatment rule ``k``."""
    if not 0 <= k < model.alpha.size:
        raise IndexError(f"treatment rule index {k} out of range")
    return math.exp(model.alpha[k] - model.beta[k])


def linear_hazard_ratio(model: HteModel, j: int) -> float:
    """Per-unit hazard ratio factor ``exp(alpha*_j - beta*_j)`` of linear term ``j``."""
    return math.exp(model.alpha_star[j] - model.beta_star[j])


def default_horizon(times) -> float:
    """90th percentile of observed times."""
    return float(np.quantile(np.asarray(times, dtype=float), 0.9))
