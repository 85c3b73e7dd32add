import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import manual_model
from oracles import kaplan_meier
from rulehaz.hte import (
    ExtrapolationWarning,
    breslow_baseline,
    default_horizon,
    predict_hte,
    rule_hazard_ratio,
    survival_curves,
)
from rulehaz.rules import INF, LinearTerm, Rule

R0 = Rule.from_conditions([(0, 0.0, INF)])
R1 = Rule.from_conditions([(1, -INF, 0.5)])
L0 = LinearTerm(0, -2.0, 2.0, 0.5)


def _random_model(seed):
    rng = np.random.default_rng(seed)
    return manual_model(
        treat_rules=[R0, R1], linear_terms=[L0], alpha=rng.normal(size=2), beta=rng.normal(size=2),
        alpha_star=rng.normal(size=1), beta_star=rng.normal(size=1), main_rules=[R1],
        theta=rng.normal(size=1), theta_star=rng.normal(size=1),
    )


def test_breslow_hand_instance():
    base = breslow_baseline([1.0, 2.0, 3.0], [1, 1, 0], np.zeros(3))
    assert np.allclose(base.increments, [1 / 3, 1 / 2], rtol=1e-14)
    assert base.cumulative(2.0) == pytest.approx(5 / 6, rel=1e-14)
    assert base.cumulative(1.999) == pytest.approx(1 / 3)
    assert base.cumulative(0.5) == 0.0
    assert base.cumulative(10.0) == pytest.approx(5 / 6)
    assert base.max_time == 3.0


def test_breslow_ties():
    base = breslow_baseline([1.0, 1.0, 2.0, 2.0], [1, 1, 1, 0], np.zeros(4))
    assert np.allclose(base.increments, [2 / 4, 1 / 2])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(-3, 3))
def test_breslow_scales_with_linear_predictor_shift(seed, c):
    rng = np.random.default_rng(seed)
    t = rng.exponential(size=25)
    d = rng.binomial(1, 0.7, 25)
    eta = rng.normal(size=25)
    a = breslow_baseline(t, d, eta)
    b = breslow_baseline(t, d, eta + c)
    assert np.allclose(b.increments, a.increments * math.exp(-c), rtol=1e-12)


def test_nelson_aalen_close_to_kaplan_meier():
    rng = np.random.default_rng(0)
    n = 4000
    t = rng.exponential(size=n)
    c = rng.exponential(2.0, size=n)
    times, events = np.minimum(t, c), (t <= c).astype(int)
    base = breslow_baseline(times, events, np.zeros(n))
    model = manual_model(baseline=base)
    for t0 in (0.25, 0.5, 1.0):
        s = math.exp(-base.cumulative(t0))
        assert s == pytest.approx(kaplan_meier(times, events, t0), abs=0.005)
        assert s == pytest.approx(math.exp(-t0), abs=0.03)
        pred = predict_hte(model, np.zeros((1, 2)), t0)
        assert pred.hte[0] == 0.0 and pred.s1[0] == pytest.approx(s)


def test_equal_arm_coefficients_give_zero_effect():
    rng = np.random.default_rng(1)
    a = rng.normal(size=2)
    model = manual_model(treat_rules=[R0, R1], linear_terms=[L0], alpha=a, beta=a, alpha_star=[0.3], beta_star=[0.3])
    pred = predict_hte(model, rng.normal(size=(50, 2)), 1.5)
    assert np.array_equal(pred.hte, np.zeros(50))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t0=st.floats(0.1, 2.9))
def test_swapping_arms_negates_effect(seed, t0):
    model = _random_model(seed)
    X = np.random.default_rng(seed + 1).normal(size=(20, 2))
    a = predict_hte(model, X, t0)
    b = predict_hte(model.swapped_arms(), X, t0)
    assert np.allclose(b.hte, -a.hte, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), t0=st.floats(0.1, 2.9))
def test_proportional_hazards_identity(seed, t0):
    model = _random_model(seed)
    X = np.random.default_rng(seed + 2).normal(size=(20, 2))
    pred = predict_hte(model, X, t0)
    hr = np.exp(model.log_hazard_ratio(X))
    assert np.allclose(pred.s1, pred.s0 ** hr, rtol=1e-10, atol=1e-300)
    assert np.all((pred.hte >= -1) & (pred.hte <= 1))


def test_prediction_matches_hand_formula():
    model = manual_model(treat_rules=[R0], alpha=[0.7], beta=[-0.2], main_rules=[R1], theta=[0.4])
    x = np.array([[1.0, 0.0]])  # both R0 and R1 fire
    H0 = 0.5  # cumulative at t0=2.5
    pred = predict_hte(model, x, 2.5)
    assert pred.s1[0] == pytest.approx(math.exp(-H0 * math.exp(0.4 + 0.7)))
    assert pred.s0[0] == pytest.approx(math.exp(-H0 * math.exp(0.4 - 0.2)))
    assert rule_hazard_ratio(model, 0) == pytest.approx(math.exp(0.9))
    with pytest.raises(IndexError):
        rule_hazard_ratio(model, 1)


def test_survival_curves_monotone():
    model = _random_model(3)
    grid = np.linspace(0, 3, 40)
    s1, s0 = survival_curves(model, np.array([0.3, -1.0]), grid)
    assert np.all(np.diff(s1) <= 0) and np.all(np.diff(s0) <= 0)
    assert s1[0] == 1.0 and s0[0] == 1.0


def test_extrapolation_warning_and_flag():
    model = _random_model(4)
    with pytest.warns(ExtrapolationWarning):
        pred = predict_hte(model, np.zeros((2, 2)), 5.0)
    assert pred.extrapolated
    ref = predict_hte(model, np.zeros((2, 2)), 2.9)
    assert np.array_equal(pred.hte, ref.hte)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not predict_hte(model, np.zeros((2, 2)), 3.0).extrapolated


def test_invalid_horizon_and_empty_input():
    model = _random_model(5)
    with pytest.raises(ValueError):
        predict_hte(model, np.zeros((1, 2)), 0.0)
    assert predict_hte(model, np.zeros((0, 2)), 1.0).hte.shape == (0,)


def test_default_horizon():
    assert default_horizon(np.arange(1.0, 11.0)) == pytest.approx(9.1)


def test_coefficient_vector_roundtrip():
    model = _random_model(6)
    v = model.coefficient_vector()
    assert v.size == 1 + 1 + 4 + 2
    assert np.array_equal(v[2:6:2], model.alpha) and np.array_equal(v[3:6:2], model.beta)


def test_paired_violations():
    model = manual_model(treat_rules=[R0, R1], alpha=[0.0, 1.0], beta=[0.5, 2.0])
    assert model.paired_violations() == 1
