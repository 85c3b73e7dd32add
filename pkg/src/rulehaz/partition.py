"""Split candidate rules into main-effect and treatment-effect rules."""

from __future__ import annotations

from dataclasses import dataclass, field

from .rules import Rule


@dataclass
class PartitionedRules:
    main_rules: list[Rule]
    treat_rules: list[Rule]
    counts: dict = field(default_factory=dict)


def treatment_arms(rule: Rule, treatment_feature: int) -> frozenset:
    """Set of treatment values in {0, 1} admitted by the rule's z-condition."""
    cond = rule.condition_on(treatment_feature)
    if cond is None:
        return frozenset({0, 1})
    return frozenset(v for v in (0, 1) if cond.lower <= v < cond.upper)


def partition(candidates, treatment_feature: int | None = None) -> PartitionedRules:
    """Route each candidate rule by the treatment values it admits.

    Rules admitting both arms become main rules; rules pinning one arm become
    treatment rules with the z-condition stripped. Duplicates within each list
    are removed, first occurrence wins.
    """
    if treatment_feature is None:
        treatment_feature = candidates.treatment_feature
    rules = getattr(candidates, "rules", candidates)

    main: list[Rule] = []
    treat: list[Rule] = []
    seen_main: set = set()
    seen_treat: set = set()
    n_main = n_treat = 0
    for rule in rules:
        arms = treatment_arms(rule, treatment_feature)
        stripped = rule.without_feature(treatment_feature)
        if len(arms) == 2:
            n_main += 1
            if stripped not in seen_main:
                seen_main.add(stripped)
                main.append(stripped)
        elif len(arms) == 1:
            n_treat += 1
            if stripped not in seen_treat:
                seen_treat.add(stripped)
                treat.append(stripped)
        else:  # pragma: no cover - tree paths never produce an empty z-interval
            raise ValueError("rule admits neither treatment arm")
    counts = {
        "candidates": n_main + n_treat,
        "main_before_dedup": n_main,
        "treat_before_dedup": n_treat,
        "main_after_dedup": len(main),
        "treat_after_dedup": len(treat),
    }
    return PartitionedRules(main, treat, counts)
