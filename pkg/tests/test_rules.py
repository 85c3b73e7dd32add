import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulehaz.rules import (
    INF,
    BasisSet,
    Condition,
    DimensionError,
    LinearTerm,
    Rule,
    build_basis,
    build_design,
    evaluate_rule,
    fit_linear_term,
    rule_support,
)


def test_half_open_boundary():
    rule = Rule.from_conditions([(0, 0.0, INF)])
    assert evaluate_rule(rule, [0.5, 3.0]) == 1
    assert evaluate_rule(rule, [-0.5, 3.0]) == 0
    assert evaluate_rule(rule, [0.0, 3.0]) == 1
    upper = Rule.from_conditions([(0, -INF, 0.0)])
    assert evaluate_rule(upper, [0.0]) == 0


def test_two_condition_rule():
    # cd40 < 266.5 & age < 39.5 applied to (cd40=257, age=23)
    rule = Rule.from_conditions([(0, -INF, 266.5), (1, -INF, 39.5)])
    assert evaluate_rule(rule, [257, 23]) == 1
    assert evaluate_rule(rule, [300, 23]) == 0
    assert rule.describe(["cd40", "age"]) == "cd40<266.5 & age<39.5"


def test_dimension_error():
    rule = Rule.from_conditions([(3, 0.0, 1.0)])
    with pytest.raises(DimensionError):
        evaluate_rule(rule, [1.0, 2.0])


def test_merge_same_feature_intersects():
    rule = Rule.from_conditions([(1, 0.0, 5.0), (1, 2.0, INF), (0, -INF, 1.0)])
    assert rule.conditions == (Condition(0, -INF, 1.0), Condition(1, 2.0, 5.0))


def test_empty_interval_rejected():
    with pytest.raises(ValueError):
        Rule.from_conditions([(0, 1.0, 2.0), (0, 3.0, INF)])


bounds = st.sampled_from([-1.5, -0.5, 0.0, 0.5, 1.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(
    conds=st.lists(st.tuples(st.integers(0, 2), bounds, bounds), min_size=1, max_size=6),
    seed=st.integers(0, 10_000),
)
def test_merging_preserves_evaluation(conds, seed):
    raw = [(j, min(a, b), max(a, b)) for j, a, b in conds if a != b]
    X = np.random.default_rng(seed).uniform(-2, 3, size=(50, 3))
    X[:5] = [[-1.5, 0.0, 2.0], [0.5, 1.0, -0.5], [0.0, 0.0, 0.0], [1.0, 2.0, -1.5], [2.0, 0.5, 1.0]]
    brute = np.ones(X.shape[0], dtype=bool)
    for j, lo, hi in raw:
        brute &= (X[:, j] >= lo) & (X[:, j] < hi)
    try:
        rule = Rule.from_conditions(raw)
    except ValueError:
        assert not brute.any()  # empty intersection can never fire
        return
    assert np.array_equal(rule.evaluate(X), brute.astype(np.int8))
    assert len(set(rule.features)) == len(rule.features)


def test_support():
    rule = Rule.from_conditions([(0, 0.0, INF)])
    X = np.array([[1.0], [-1.0], [2.0], [-3.0]])
    assert rule_support(rule, X) == 0.5
    assert rule_support(Rule(), X) == 1.0
    with pytest.raises(ValueError):
        rule_support(rule, np.zeros((0, 1)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), thr=st.floats(-2, 2))
def test_support_is_fraction_of_firing_rows(seed, thr):
    X = np.random.default_rng(seed).normal(size=(37, 2))
    rule = Rule.from_conditions([(1, thr, INF)])
    s = rule_support(rule, X)
    assert 0.0 <= s <= 1.0
    assert s == sum(evaluate_rule(rule, x) for x in X) / 37


def test_linear_term_identity_at_q0():
    term = fit_linear_term([1, 2, 3, 4, 5], q=0.0)
    assert (term.lower_winsor, term.upper_winsor) == (1.0, 5.0)
    assert np.array_equal(term.winsorize([1, 2, 3, 4, 5]), [1, 2, 3, 4, 5])
    assert term.winsorize([10.0])[0] == 5.0


def test_linear_term_balanced_binary():
    term = fit_linear_term(np.array([0, 1] * 20), q=0.025)
    assert (term.lower_winsor, term.upper_winsor) == (0.0, 1.0)
    assert term.scale == pytest.approx(0.8)


def test_linear_term_std_after_winsorizing():
    col = np.r_[np.arange(98.0), 1e6, -1e6]
    term = fit_linear_term(col, q=0.025)
    lo, hi = np.quantile(col, [0.025, 0.975])
    assert term.scale == pytest.approx(0.4 / np.std(np.clip(col, lo, hi)))


def test_constant_column_excluded():
    assert fit_linear_term(np.full(10, 3.0)).excluded
    _, info = build_basis([], [], np.column_stack([np.arange(10.0), np.ones(10)]))
    assert info["linear_terms_excluded"] == [1]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), q=st.sampled_from([0.0, 0.025, 0.1]))
def test_winsorizing_idempotent(seed, q):
    col = np.random.default_rng(seed).standard_t(2, size=60)
    term = fit_linear_term(col, q)
    once = term.winsorize(col)
    assert np.array_equal(term.winsorize(once), once)


def test_basis_filters_duplicates_and_trivial():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    r = Rule.from_conditions([(0, 1.5, INF)])
    always = Rule.from_conditions([(0, -5.0, INF)])
    never = Rule.from_conditions([(0, 10.0, INF)])
    basis, info = build_basis([r, r, always, never], [r], X)
    assert basis.main_rules == (r,)
    assert basis.treat_rules == (r,)
    assert info["main_rules_removed"] == {"duplicates": 1, "trivial_support": 2}


def _basis(k_main, k_treat, p):
    main = tuple(Rule.from_conditions([(0, float(i), INF)]) for i in range(k_main))
    treat = tuple(Rule.from_conditions([(1, -INF, float(i))]) for i in range(k_treat))
    terms = tuple(LinearTerm(j, -1.0, 1.0, 1.0) for j in range(p))
    return BasisSet(main, treat, terms)


def test_design_layout_counts():
    X = np.random.default_rng(0).normal(size=(8, 2))
    design = build_design(X, np.array([0, 1] * 4), _basis(2, 3, 2))
    assert design.n_columns == 2 + 2 + 6 + 4 == 14
    sizes = [len(g) for g in design.groups]
    assert sizes.count(1) == 4 and sizes.count(2) == 5
    assert np.allclose(design.weights, [1] * 4 + [math.sqrt(2)] * 5)
    assert sorted(np.concatenate(design.groups).tolist()) == list(range(14))


def test_design_pair_columns():
    rule = Rule.from_conditions([(0, 0.0, INF)])
    basis = BasisSet((), (rule,), ())
    design = build_design(np.array([[1.0], [1.0], [-1.0]]), np.array([1, 0, 1]), basis)
    assert design.matrix.tolist() == [[1, 0], [0, 1], [0, 0]]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_paired_columns_partition_rule_value(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2))
    z = rng.binomial(1, 0.5, 40)
    basis = _basis(1, 3, 2)
    design = build_design(X, z, basis)
    pairs = design.matrix[:, design.blocks["treat_rule_pairs"]]
    a, b = pairs[:, 0::2], pairs[:, 1::2]
    assert np.all((a == 0) | (b == 0))
    raw = np.column_stack([r.evaluate(X) for r in basis.treat_rules])
    assert np.array_equal(a + b, raw)


def test_rule_json_roundtrip():
    rule = Rule.from_conditions([(2, -INF, 1.5), (0, 0.25, INF)])
    data = rule.to_json()
    assert data == [{"feature": 0, "lower": 0.25, "upper": None}, {"feature": 2, "lower": None, "upper": 1.5}]
    assert Rule.from_json(data) == rule
