"""Rule-ensemble estimation of heterogeneous treatment effects on survival outcomes."""

from .boosting import BoostConfig, boost, cox_gradient, draw_tree_size, fit_gradient_tree
from .data import DataError, SurvivalDataset, load_csv
from .grouplasso import PathConfig, cross_validate, neg_log_partial_likelihood, solve_path
from .hte import BaselineHazard, HteModel, breslow_baseline, predict_hte, rule_hazard_ratio
from .interpret import build_report, linear_importance, rule_importance, variable_importance
from .partition import partition
from .pipeline import FitConfig, fit_hte_model
from .rules import BasisSet, LinearTerm, Rule, build_design, evaluate_rule, fit_linear_term, rule_support
from .serialize import load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "BaselineHazard", "BasisSet", "BoostConfig", "DataError", "FitConfig", "HteModel",
    "LinearTerm", "PathConfig", "Rule", "SurvivalDataset", "boost", "breslow_baseline",
    "build_design", "build_report", "cox_gradient", "cross_validate", "draw_tree_size",
    "evaluate_rule", "fit_gradient_tree", "fit_hte_model", "fit_linear_term",
    "linear_importance", "load_csv", "load_model", "neg_log_partial_likelihood",
    "partition", "predict_hte", "rule_hazard_ratio", "rule_importance", "rule_support",
    "save_model", "solve_path", "variable_importance",
]
