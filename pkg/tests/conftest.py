import numpy as np
import pytest

from rulehaz.boosting import BoostConfig
from rulehaz.data import SurvivalDataset
from rulehaz.grouplasso import PathConfig
from rulehaz.pipeline import FitConfig


def make_toy(n=120, p=4, seed=0, effect=1.0):
    """Small two-arm Cox dataset with a treatment interaction on x1."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.normal(size=n), rng.binomial(1, 0.5, n), rng.normal(size=(n, p - 2))])
    z = rng.binomial(1, 0.5, n)
    eta = 0.5 * X[:, 0] - 0.5 * X[:, 1] + effect * (z - 0.5) * (X[:, 0] > 0)
    t = rng.exponential(size=n) * np.exp(-eta)
    c = rng.exponential(2.0, size=n)
    return SurvivalDataset(np.minimum(t, c), (t <= c).astype(int), z, X)


def toy_config(seed=0, **kw):
    """Cheap settings for end-to-end fits on toy data."""
    return FitConfig(
        boost=BoostConfig(num_trees=kw.pop("trees", 20), mean_depth=kw.pop("mean_depth", 4.0), seed=seed),
        path=PathConfig(n_lambda=kw.pop("n_lambda", 20), cv_folds=3, seed=seed),
        **kw,
    )


@pytest.fixture
def toy():
    return make_toy()


ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store one acceptance outcome for the end-of-run summary."""
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
